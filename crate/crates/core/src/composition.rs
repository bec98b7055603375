//! Discrete compositional design spaces.
//!
//! A [`DesignSpace`] holds every lattice point of the composition simplex at a
//! fixed resolution, stored as integer step counts so membership tests and
//! hashing are exact.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

/// Atomic fractions over a campaign's element list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    fractions: Vec<f64>,
}

impl Composition {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::invalid("composition has no elements"));
        }
        if let Some(bad) = fractions
            .iter()
            .find(|x| !x.is_finite() || **x < 0.0 || **x > 1.0)
        {
            return Err(Error::invalid(format!("fraction {bad} outside [0, 1]")));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(Composition { fractions })
    }

    /// Builds a composition from step counts out of `divisions`.
    pub fn from_counts(counts: &[u16], divisions: u32) -> Self {
        let d = f64::from(divisions);
        Composition {
            fractions: counts.iter().map(|&c| f64::from(c) / d).collect(),
        }
    }

    /// Equiatomic mixture over `n` elements.
    pub fn equiatomic(n: usize) -> Self {
        Composition {
            fractions: vec![1.0 / n as f64; n],
        }
    }

    /// Parses concatenated symbol/fraction pairs such as `Mo0.2Nb0.2Ti0.6`.
    ///
    /// Elements absent from the string get fraction 0. The fractions must sum
    /// to 1 within 1e-6 and are renormalized afterwards.
    pub fn parse(spec: &str, elements: &[String]) -> Result<Self> {
        let re = regex::Regex::new(r"([A-Z][a-z]?)([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)")
            .expect("static regex");
        let mut fractions = vec![0.0; elements.len()];
        let mut seen = vec![false; elements.len()];
        let mut consumed = 0;
        for cap in re.captures_iter(spec) {
            let whole = cap.get(0).unwrap();
            if whole.start() != consumed {
                return Err(Error::invalid(format!(
                    "cannot parse composition '{spec}' at position {consumed}"
                )));
            }
            consumed = whole.end();
            let symbol = &cap[1];
            let pos = elements
                .iter()
                .position(|e| e == symbol)
                .ok_or_else(|| Error::invalid(format!("element {symbol} not in element list")))?;
            if seen[pos] {
                return Err(Error::invalid(format!("element {symbol} given twice")));
            }
            seen[pos] = true;
            fractions[pos] = cap[2]
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad fraction for {symbol}: {e}")))?;
        }
        if consumed != spec.len() || consumed == 0 {
            return Err(Error::invalid(format!(
                "cannot parse composition '{spec}' at position {consumed}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "fractions in '{spec}' sum to {sum}, expected 1"
            )));
        }
        fractions.iter_mut().for_each(|x| *x /= sum);
        Composition::new(fractions)
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    /// Indices of elements with nonzero fraction.
    pub fn active_set(&self) -> Vec<usize> {
        self.fractions
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Euclidean distance between fraction vectors.
pub fn composition_distance(a: &Composition, b: &Composition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "composition lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(euclidean(a.fractions(), b.fractions()))
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Concatenated symbols of the active elements, in element-list order.
pub fn subsystem_label(c: &Composition, elements: &[String]) -> String {
    c.active_set()
        .into_iter()
        .filter_map(|i| elements.get(i).map(String::as_str))
        .collect()
}

/// All lattice points of the composition simplex at one resolution.
#[derive(Debug, Clone)]
pub struct DesignSpace {
    elements: Vec<String>,
    divisions: u32,
    min_active: usize,
    max_active: usize,
    /// Row-major step counts, `elements.len()` per member.
    counts: Vec<u16>,
    lookup: HashMap<Vec<u16>, usize>,
}

/// Enumerates the simplex lattice with generic element names `X1..Xn`.
pub fn enumerate_simplex(
    n_elements: usize,
    step: f64,
    min_active: usize,
    max_active: usize,
) -> Result<DesignSpace> {
    let elements: Vec<String> = (1..=n_elements).map(|i| format!("X{i}")).collect();
    DesignSpace::enumerate(&elements, step, min_active, max_active)
}

/// Number of divisions `1/step`, which must be integral.
pub fn step_divisions(step: f64) -> Result<u32> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("step {step} must lie in (0, 1]")));
    }
    let inv = 1.0 / step;
    let rounded = inv.round();
    if (inv - rounded).abs() > 1e-9 || rounded > f64::from(u16::MAX) {
        return Err(Error::invalid(format!("step {step} does not divide 1 evenly")));
    }
    Ok(rounded as u32)
}

impl DesignSpace {
    pub fn enumerate(
        elements: &[String],
        step: f64,
        min_active: usize,
        max_active: usize,
    ) -> Result<Self> {
        let n = elements.len();
        if n == 0 {
            return Err(Error::invalid("element list is empty"));
        }
        if min_active < 1 || min_active > max_active || max_active > n {
            return Err(Error::invalid(format!(
                "need 1 <= min_active ({min_active}) <= max_active ({max_active}) <= {n}"
            )));
        }
        let mut unique = elements.to_vec();
        unique.sort();
        unique.dedup();
        if unique.len() != n {
            return Err(Error::invalid("element list contains duplicates"));
        }
        let divisions = step_divisions(step)?;

        let mut counts = Vec::new();
        let mut current = vec![0u16; n];
        fill(&mut current, 0, divisions as u16, min_active, max_active, &mut counts);

        let lookup = counts
            .chunks_exact(n)
            .enumerate()
            .map(|(i, row)| (row.to_vec(), i))
            .collect();
        Ok(DesignSpace {
            elements: elements.to_vec(),
            divisions,
            min_active,
            max_active,
            counts,
            lookup,
        })
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn divisions(&self) -> u32 {
        self.divisions
    }

    pub fn step(&self) -> f64 {
        1.0 / f64::from(self.divisions)
    }

    pub fn active_range(&self) -> (usize, usize) {
        (self.min_active, self.max_active)
    }

    pub fn len(&self) -> usize {
        self.counts.len() / self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self, index: usize) -> &[u16] {
        let n = self.elements.len();
        &self.counts[index * n..(index + 1) * n]
    }

    pub fn get(&self, index: usize) -> Composition {
        Composition::from_counts(self.counts(index), self.divisions)
    }

    pub fn fractions(&self, index: usize) -> Vec<f64> {
        self.get(index).fractions
    }

    pub fn iter(&self) -> impl Iterator<Item = Composition> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// All member fraction vectors, in index order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.iter().map(|c| c.fractions).collect()
    }

    /// Index of a composition lying exactly on the lattice.
    pub fn position(&self, c: &Composition) -> Option<usize> {
        if c.len() != self.elements.len() {
            return None;
        }
        let d = f64::from(self.divisions);
        let mut key = Vec::with_capacity(c.len());
        for &x in c.fractions() {
            let units = x * d;
            let r = units.round();
            if (units - r).abs() > 1e-6 {
                return None;
            }
            key.push(r as u16);
        }
        self.lookup.get(&key).copied()
    }

    pub fn label(&self, index: usize) -> String {
        subsystem_label(&self.get(index), &self.elements)
    }

    /// Writes `index,<elements...>` rows with fractions to six decimals.
    pub fn write_csv<W: Write>(&self, out: W, indices: impl IntoIterator<Item = usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend(self.elements.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for i in indices {
            let mut row = vec![i.to_string()];
            row.extend(self.get(i).fractions.iter().map(|x| format!("{x:.6}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidData(e.to_string()))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidData(e.to_string())
}

fn fill(
    current: &mut [u16],
    pos: usize,
    remaining: u16,
    min_active: usize,
    max_active: usize,
    out: &mut Vec<u16>,
) {
    let active = current[..pos].iter().filter(|&&c| c > 0).count();
    if active > max_active {
        return;
    }
    if pos == current.len() - 1 {
        current[pos] = remaining;
        let total = active + usize::from(remaining > 0);
        if (min_active..=max_active).contains(&total) {
            out.extend_from_slice(current);
        }
        return;
    }
    for c in 0..=remaining {
        current[pos] = c;
        fill(current, pos + 1, remaining - c, min_active, max_active, out);
    }
    current[pos] = 0;
}
