//! Elemental and alloy-level supply-risk indices.
//!
//! Each element carries twelve indicator scores on a 0-100 scale, grouped in
//! four categories. The elemental index is their equal-weight mean; the alloy
//! index aggregates elemental indices over the active elements.

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composition::Composition;
use crate::csvio::{Defects, Table};
use crate::error::{Error, Result};

const BUILTIN_INDICATORS: &str = include_str!("../data/indicators.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    SupplyReduction,
    Demand,
    MarketConcentration,
    Political,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Indicator {
    /// Static range of reserves.
    S1,
    /// Static range of resources.
    S2,
    /// Secondary production share from old scrap.
    S3,
    /// Future technology demand.
    D1,
    /// Coupled (by-product) production share.
    D2,
    /// Sector competition.
    D3,
    /// Substitutability.
    D4,
    /// Country concentration of production.
    C1,
    /// Company concentration of production.
    C2,
    /// Political stability of producing countries.
    P1,
    /// Policy perception.
    P2,
    /// Regulatory risk.
    P3,
}

impl Indicator {
    pub const ALL: [Indicator; 12] = [
        Indicator::S1,
        Indicator::S2,
        Indicator::S3,
        Indicator::D1,
        Indicator::D2,
        Indicator::D3,
        Indicator::D4,
        Indicator::C1,
        Indicator::C2,
        Indicator::P1,
        Indicator::P2,
        Indicator::P3,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Indicator::S1 => "S1",
            Indicator::S2 => "S2",
            Indicator::S3 => "S3",
            Indicator::D1 => "D1",
            Indicator::D2 => "D2",
            Indicator::D3 => "D3",
            Indicator::D4 => "D4",
            Indicator::C1 => "C1",
            Indicator::C2 => "C2",
            Indicator::P1 => "P1",
            Indicator::P2 => "P2",
            Indicator::P3 => "P3",
        }
    }

    pub fn category(self) -> Category {
        use Indicator::*;
        match self {
            S1 | S2 | S3 => Category::SupplyReduction,
            D1 | D2 | D3 | D4 => Category::Demand,
            C1 | C2 => Category::MarketConcentration,
            P1 | P2 | P3 => Category::Political,
        }
    }

    fn index(self) -> usize {
        Indicator::ALL.iter().position(|&i| i == self).unwrap()
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Twelve normalized scores; `None` marks a missing indicator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IndicatorScores {
    values: [Option<f64>; 12],
}

impl IndicatorScores {
    pub fn new(values: [Option<f64>; 12]) -> Result<Self> {
        for (ind, v) in Indicator::ALL.iter().zip(values.iter()) {
            if let Some(v) = v {
                if !(0.0..=100.0).contains(v) {
                    return Err(Error::invalid(format!("{ind} score {v} outside [0, 100]")));
                }
            }
        }
        Ok(IndicatorScores { values })
    }

    pub fn complete(values: [f64; 12]) -> Result<Self> {
        Self::new(values.map(Some))
    }

    pub fn get(&self, ind: Indicator) -> Option<f64> {
        self.values[ind.index()]
    }

    pub fn set(&mut self, ind: Indicator, value: Option<f64>) -> Result<()> {
        let mut v = self.values;
        v[ind.index()] = value;
        *self = Self::new(v)?;
        Ok(())
    }

    pub fn missing(&self) -> Vec<Indicator> {
        Indicator::ALL
            .iter()
            .copied()
            .filter(|&i| self.get(i).is_none())
            .collect()
    }
}

/// Herfindahl-Hirschman index `10000 * sum s_i^2` of market shares.
pub fn hhi(shares: &[f64]) -> Result<f64> {
    if let Some(s) = shares.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::invalid(format!("negative or non-finite share {s}")));
    }
    let total: f64 = shares.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("shares sum to {total}, expected 1")));
    }
    Ok(10_000.0 * shares.iter().map(|s| s * s).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Normalization {
    /// `min -> 0`, `max -> 100`.
    Linear { min: f64, max: f64 },
    /// Linear in `ln(raw)`; requires `min > 0`.
    Log { min: f64, max: f64 },
    /// `min -> 100`, `max -> 0`.
    Inverted { min: f64, max: f64 },
}

/// Maps a raw indicator statistic onto the 0-100 score scale, clamping.
pub fn normalize_indicator(raw: f64, scheme: Normalization) -> Result<f64> {
    let (lo, hi) = match scheme {
        Normalization::Linear { min, max }
        | Normalization::Log { min, max }
        | Normalization::Inverted { min, max } => (min, max),
    };
    if !(hi > lo) {
        return Err(Error::invalid(format!("normalization bounds need max > min, got [{lo}, {hi}]")));
    }
    let t = match scheme {
        Normalization::Linear { .. } => (raw - lo) / (hi - lo),
        Normalization::Inverted { .. } => (hi - raw) / (hi - lo),
        Normalization::Log { .. } => {
            if lo <= 0.0 {
                return Err(Error::invalid("log normalization needs min > 0"));
            }
            if raw <= 0.0 {
                0.0
            } else {
                (raw.ln() - lo.ln()) / (hi.ln() - lo.ln())
            }
        }
    };
    Ok(100.0 * t.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Any missing indicator is an error.
    #[default]
    Strict,
    /// Average over the indicators present and flag the gap.
    Renormalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementalSr {
    pub value: f64,
    /// Indicators left out of the mean; nonempty means a warning.
    pub missing: Vec<Indicator>,
}

impl ElementalSr {
    pub fn warning(&self) -> bool {
        !self.missing.is_empty()
    }
}

/// Equal-weight mean of the present indicator scores.
pub fn elemental_sr(scores: &IndicatorScores, policy: MissingPolicy) -> Result<ElementalSr> {
    let present: Vec<f64> = Indicator::ALL.iter().filter_map(|&i| scores.get(i)).collect();
    let missing = scores.missing();
    if present.is_empty() {
        return Err(Error::NoData("all twelve indicators are missing".into()));
    }
    if policy == MissingPolicy::Strict && !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|i| i.code()).collect();
        return Err(Error::NoData(format!("missing indicator(s) {}", names.join(", "))));
    }
    Ok(ElementalSr {
        value: present.iter().sum::<f64>() / present.len() as f64,
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyRiskProfile {
    pub element: String,
    pub scores: IndicatorScores,
    pub vintage: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupplyRiskTable {
    profiles: Vec<SupplyRiskProfile>,
}

impl SupplyRiskTable {
    pub fn builtin() -> Self {
        Self::from_reader(BUILTIN_INDICATORS.as_bytes(), "builtin indicators.csv")
            .expect("builtin indicator table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Parses `element,S1,...,P3`; blank cells are missing indicators. An
    /// optional `vintage` column is kept; other extra columns are ignored.
    pub fn from_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let table = Table::read(reader, source)?;
        let mut cols = vec!["element"];
        cols.extend(Indicator::ALL.iter().map(|i| i.code()));
        table.require_columns(&cols)?;

        let mut defects = Defects::default();
        let mut profiles: Vec<SupplyRiskProfile> = Vec::new();
        for (line, rec) in &table.rows {
            let Some(element) = table.cell(rec, "element") else {
                defects.push(*line, "element", "missing element symbol");
                continue;
            };
            if profiles.iter().any(|p| p.element == element) {
                defects.push(*line, "element", format!("duplicate element {element}"));
            }
            let mut values = [None; 12];
            for (slot, ind) in values.iter_mut().zip(Indicator::ALL) {
                match table.cell(rec, ind.code()).map(str::parse::<f64>) {
                    None => {}
                    Some(Ok(v)) if (0.0..=100.0).contains(&v) => *slot = Some(v),
                    Some(Ok(v)) => defects.push(*line, ind.code(), format!("{v} outside [0, 100]")),
                    Some(Err(e)) => defects.push(*line, ind.code(), e),
                }
            }
            profiles.push(SupplyRiskProfile {
                element: element.to_string(),
                scores: IndicatorScores { values },
                vintage: table
                    .has_column("vintage")
                    .then(|| table.cell(rec, "vintage").map(str::to_string))
                    .flatten(),
            });
        }
        defects.finish(source)?;
        Ok(SupplyRiskTable { profiles })
    }

    pub fn insert(&mut self, profile: SupplyRiskProfile) {
        self.profiles.retain(|p| p.element != profile.element);
        self.profiles.push(profile);
    }

    pub fn get(&self, element: &str) -> Option<&SupplyRiskProfile> {
        self.profiles.iter().find(|p| p.element == element)
    }

    pub fn profiles(&self) -> &[SupplyRiskProfile] {
        &self.profiles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Unweighted mean over the active elements.
    #[default]
    ElementMean,
    /// Atomic-fraction-weighted sum.
    FractionWeighted,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "element_mean" => Ok(AggregationMode::ElementMean),
            "fraction_weighted" => Ok(AggregationMode::FractionWeighted),
            other => Err(Error::Config(format!("unknown aggregation mode '{other}'"))),
        }
    }
}

/// Alloy index from elemental indices aligned to the composition.
pub fn alloy_sr(
    c: &Composition,
    elemental: &[Option<f64>],
    elements: &[String],
    mode: AggregationMode,
) -> Result<f64> {
    if elemental.len() != c.len() {
        return Err(Error::invalid("elemental index count does not match composition"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &x) in c.fractions().iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        let sr = elemental[i].ok_or_else(|| Error::DataMissing {
            element: elements.get(i).cloned().unwrap_or_else(|| format!("#{i}")),
            property: "supply-risk profile".into(),
        })?;
        match mode {
            AggregationMode::ElementMean => sum += sr,
            AggregationMode::FractionWeighted => sum += x * sr,
        }
        count += 1;
    }
    Ok(match mode {
        AggregationMode::ElementMean => sum / count as f64,
        AggregationMode::FractionWeighted => sum,
    })
}

/// Elemental indices for one element list, ready for alloy aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    elements: Vec<String>,
    elemental: Vec<Option<f64>>,
    mode: AggregationMode,
}

impl RiskModel {
    /// Elements without a profile are tolerated until an alloy that uses
    /// them is aggregated. Profiles that violate `policy` are errors.
    pub fn new(
        table: &SupplyRiskTable,
        elements: &[String],
        mode: AggregationMode,
        policy: MissingPolicy,
    ) -> Result<Self> {
        let elemental = elements
            .iter()
            .map(|e| {
                table
                    .get(e)
                    .map(|p| {
                        elemental_sr(&p.scores, policy)
                            .map(|s| s.value)
                            .map_err(|err| Error::InvalidData(format!("{e}: {err}")))
                    })
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RiskModel {
            elements: elements.to_vec(),
            elemental,
            mode,
        })
    }

    pub fn builtin(elements: &[String]) -> Result<Self> {
        Self::new(
            &SupplyRiskTable::builtin(),
            elements,
            AggregationMode::ElementMean,
            MissingPolicy::Strict,
        )
    }

    pub fn with_mode(mut self, mode: AggregationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> AggregationMode {
        self.mode
    }

    pub fn elemental(&self) -> &[Option<f64>] {
        &self.elemental
    }

    pub fn alloy_sr(&self, c: &Composition) -> Result<f64> {
        self.alloy_sr_with(c, self.mode)
    }

    pub fn alloy_sr_with(&self, c: &Composition, mode: AggregationMode) -> Result<f64> {
        alloy_sr(c, &self.elemental, &self.elements, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn els(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn comp(x: &[f64]) -> Composition {
        Composition::new(x.to_vec()).unwrap()
    }

    #[test]
    fn hhi_examples() {
        assert_eq!(hhi(&[1.0]).unwrap(), 10_000.0);
        assert_eq!(hhi(&[0.5, 0.5]).unwrap(), 5_000.0);
        assert!((hhi(&[0.6, 0.3, 0.1]).unwrap() - 4_600.0).abs() < 1e-9);
        assert!(hhi(&[0.5, 0.5]).unwrap() < hhi(&[0.9, 0.1]).unwrap());
        assert!(hhi(&[1.2, -0.2]).is_err());
        assert!(hhi(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn normalization_examples() {
        let lin = Normalization::Linear { min: 0.0, max: 100.0 };
        assert_eq!(normalize_indicator(0.0, lin).unwrap(), 0.0);
        assert_eq!(normalize_indicator(50.0, lin).unwrap(), 50.0);
        assert_eq!(normalize_indicator(150.0, lin).unwrap(), 100.0);
        let inv = Normalization::Inverted { min: 10.0, max: 20.0 };
        assert_eq!(normalize_indicator(20.0, inv).unwrap(), 0.0);
        assert_eq!(normalize_indicator(10.0, inv).unwrap(), 100.0);
        let log = Normalization::Log { min: 1.0, max: 100.0 };
        assert!((normalize_indicator(10.0, log).unwrap() - 50.0).abs() < 1e-12);
        assert!(normalize_indicator(1.0, Normalization::Linear { min: 2.0, max: 2.0 }).is_err());
        assert!(normalize_indicator(1.0, Normalization::Log { min: 0.0, max: 2.0 }).is_err());
    }

    #[test]
    fn elemental_sr_examples() {
        let all50 = IndicatorScores::complete([50.0; 12]).unwrap();
        assert_eq!(elemental_sr(&all50, MissingPolicy::Strict).unwrap().value, 50.0);

        let mut half = [0.0; 12];
        half[6..].iter_mut().for_each(|v| *v = 100.0);
        let half = IndicatorScores::complete(half).unwrap();
        assert_eq!(elemental_sr(&half, MissingPolicy::Strict).unwrap().value, 50.0);

        let mut eleven = [Some(40.0); 12];
        eleven[3] = None;
        let eleven = IndicatorScores::new(eleven).unwrap();
        let r = elemental_sr(&eleven, MissingPolicy::Renormalize).unwrap();
        assert!((r.value - 40.0).abs() < 1e-12);
        assert!(r.warning());
        assert_eq!(r.missing, vec![Indicator::D1]);
        assert!(matches!(elemental_sr(&eleven, MissingPolicy::Strict), Err(Error::NoData(_))));

        let none = IndicatorScores::default();
        assert!(matches!(elemental_sr(&none, MissingPolicy::Renormalize), Err(Error::NoData(_))));
    }

    #[test]
    fn scores_are_range_checked() {
        let mut v = [Some(10.0); 12];
        v[0] = Some(101.0);
        assert!(IndicatorScores::new(v).is_err());
        assert_eq!(Indicator::C2.category(), Category::MarketConcentration);
        assert_eq!(Indicator::D4.category(), Category::Demand);
    }

    #[test]
    fn alloy_examples() {
        let e = els(&["A", "B"]);
        let sr = [Some(40.0), Some(60.0)];
        let eq = comp(&[0.5, 0.5]);
        assert_eq!(alloy_sr(&eq, &sr, &e, AggregationMode::ElementMean).unwrap(), 50.0);
        assert_eq!(alloy_sr(&eq, &sr, &e, AggregationMode::FractionWeighted).unwrap(), 50.0);
        let skew = comp(&[0.9, 0.1]);
        assert_eq!(alloy_sr(&skew, &sr, &e, AggregationMode::ElementMean).unwrap(), 50.0);
        assert!((alloy_sr(&skew, &sr, &e, AggregationMode::FractionWeighted).unwrap() - 42.0).abs() < 1e-12);

        let gap = [Some(40.0), None];
        assert_eq!(alloy_sr(&comp(&[1.0, 0.0]), &gap, &e, AggregationMode::ElementMean).unwrap(), 40.0);
        assert!(matches!(
            alloy_sr(&eq, &gap, &e, AggregationMode::ElementMean),
            Err(Error::DataMissing { .. })
        ));
    }

    #[test]
    fn shipped_data_orders_mo_highest_ti_lowest() {
        let table = SupplyRiskTable::builtin();
        let sr: Vec<(String, f64)> = ["Mo", "Nb", "Ti", "V", "W"]
            .iter()
            .map(|e| {
                let p = table.get(e).unwrap();
                assert_eq!(p.vintage.as_deref(), Some("2015"));
                (e.to_string(), elemental_sr(&p.scores, MissingPolicy::Strict).unwrap().value)
            })
            .collect();
        let max = sr.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let min = sr.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(max.0, "Mo");
        assert_eq!(min.0, "Ti");
    }

    #[test]
    fn loader_reports_every_defect() {
        let csv = "element,S1,S2,S3,D1,D2,D3,D4,C1,C2,P1,P2,P3\n\
                   A,1,2,3,4,5,6,7,8,9,10,11,12\n\
                   B,1,,3,4,5,6,7,8,9,10,11,x\n\
                   C,1,2,3,4,5,6,7,8,9,10,11,300\n";
        let msg = SupplyRiskTable::from_reader(csv.as_bytes(), "ind.csv")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 3, column P3"), "{msg}");
        assert!(msg.contains("line 4, column P3"), "{msg}");

        let csv = "element,S1,S2,S3,D1,D2,D3,D4,C1,C2,P1,P2,P3\nB,1,,3,4,5,6,7,8,9,10,11,12\n";
        let t = SupplyRiskTable::from_reader(csv.as_bytes(), "ind.csv").unwrap();
        assert_eq!(t.get("B").unwrap().scores.missing(), vec![Indicator::S2]);
        let strict = RiskModel::new(&t, &els(&["B"]), AggregationMode::ElementMean, MissingPolicy::Strict);
        assert!(strict.is_err());
        let lax = RiskModel::new(&t, &els(&["B"]), AggregationMode::ElementMean, MissingPolicy::Renormalize)
            .unwrap();
        assert!((lax.elemental()[0].unwrap() - 76.0 / 11.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn alloy_sr_is_bounded(raw in proptest::collection::vec(0.01f64..1.0, 4),
                               srs in proptest::collection::vec(0.0f64..100.0, 4)) {
            let total: f64 = raw.iter().sum();
            let mut x: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let s: f64 = x[..3].iter().sum();
            x[3] = 1.0 - s;
            prop_assume!(x[3] >= 0.0);
            let c = Composition::new(x).unwrap();
            let e = els(&["A", "B", "C", "D"]);
            let sr: Vec<Option<f64>> = srs.iter().copied().map(Some).collect();
            let lo = srs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = srs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for mode in [AggregationMode::ElementMean, AggregationMode::FractionWeighted] {
                let v = alloy_sr(&c, &sr, &e, mode).unwrap();
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }

        #[test]
        fn element_mean_ignores_fractions(a in 0.05f64..0.95, b in 0.05f64..0.95) {
            let e = els(&["A", "B"]);
            let sr = [Some(30.0), Some(70.0)];
            let x = alloy_sr(&comp(&[a, 1.0 - a]), &sr, &e, AggregationMode::ElementMean).unwrap();
            let y = alloy_sr(&comp(&[b, 1.0 - b]), &sr, &e, AggregationMode::ElementMean).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn sr_is_100_iff_all_present_are_100(vals in proptest::collection::vec(proptest::option::of(prop_oneof![Just(100.0), 0.0f64..100.0]), 12)) {
            let arr: [Option<f64>; 12] = vals.clone().try_into().unwrap();
            let s = IndicatorScores::new(arr).unwrap();
            if let Ok(r) = elemental_sr(&s, MissingPolicy::Renormalize) {
                let all = vals.iter().flatten().all(|&v| v == 100.0);
                prop_assert_eq!(r.value == 100.0, all);
            }
        }
    }
}
