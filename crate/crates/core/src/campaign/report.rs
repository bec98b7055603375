//! Tables derived from a finished campaign.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::persist::CampaignResult;
use super::Campaign;
use crate::composition::DesignSpace;
use crate::error::{Error, Result};
use crate::optimizer::Observation;

/// Mean atomic fraction of each element over the front members.
pub fn chemical_signature(front: &[usize], space: &DesignSpace) -> Result<Vec<f64>> {
    if front.is_empty() {
        return Err(Error::invalid("chemical signature of an empty front"));
    }
    let d = space.elements().len();
    let mut mean = vec![0.0; d];
    for &i in front {
        if i >= space.len() {
            return Err(Error::invalid(format!("front index {i} is outside the design space")));
        }
        for (m, x) in mean.iter_mut().zip(space.fractions(i)) {
            *m += x;
        }
    }
    let n = front.len() as f64;
    Ok(mean.into_iter().map(|m| m / n).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    pub index: usize,
    pub label: String,
    pub fractions: Vec<f64>,
    /// Natural-sign objective values.
    pub objectives: Vec<f64>,
    pub supply_risk: Option<f64>,
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub elements: Vec<String>,
    pub objective_names: Vec<String>,
    pub pareto: Vec<ParetoRow>,
    /// (index, yield strength, cost) per front member.
    pub strength_cost: Vec<(usize, f64, f64)>,
    pub signature: Vec<f64>,
    pub hv_trace: Vec<f64>,
}

impl ReportBundle {
    pub fn build(result: &CampaignResult, campaign: &Campaign) -> Result<Self> {
        let by_index: HashMap<usize, &Observation> = result.observations.iter().map(|o| (o.index, o)).collect();
        let front = result.front();
        let mut pareto = Vec::with_capacity(front.len());
        let mut strength_cost = Vec::with_capacity(front.len());
        for &i in front {
            let o = by_index
                .get(&i)
                .ok_or_else(|| Error::InvalidData(format!("front member {i} has no observation in the log")))?;
            if i >= campaign.space.len() {
                return Err(Error::InvalidData(format!("front member {i} is outside the design space")));
            }
            let c = campaign.space.get(i);
            let objectives = campaign
                .objectives
                .iter()
                .zip(&o.evaluation.objectives)
                .map(|(obj, &v)| obj.natural(v))
                .collect();
            let cost = match o.evaluation.cost {
                Some(v) => v,
                None => campaign.oracles.cost(&c)?,
            };
            strength_cost.push((i, campaign.oracles.yield_strength(&c)?, cost));
            pareto.push(ParetoRow {
                index: i,
                label: campaign.space.label(i),
                fractions: c.fractions().to_vec(),
                objectives,
                supply_risk: o.evaluation.supply_risk,
                cost: Some(cost),
            });
        }
        Ok(ReportBundle {
            elements: campaign.space.elements().to_vec(),
            objective_names: campaign.objectives.iter().map(|o| o.name().to_string()).collect(),
            pareto,
            strength_cost,
            signature: chemical_signature(front, &campaign.space)?,
            hv_trace: result.hv_trace().to_vec(),
        })
    }

    /// Writes `pareto.csv`, `strength_cost.csv`, `signature.csv` and
    /// `hv_trace.csv` into `dir`; returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut pareto = vec![["index", "alloy"].map(String::from).to_vec()];
        pareto[0].extend(self.elements.iter().cloned());
        pareto[0].extend(self.objective_names.iter().cloned());
        pareto[0].extend(["sr", "cost_usd_per_kg"].map(String::from));
        for r in &self.pareto {
            let mut row = vec![r.index.to_string(), r.label.clone()];
            row.extend(r.fractions.iter().map(|x| format!("{x:.6}")));
            row.extend(r.objectives.iter().map(f64::to_string));
            row.push(opt(r.supply_risk));
            row.push(opt(r.cost));
            pareto.push(row);
        }
        let mut strength = vec![["index", "yield_strength_mpa", "cost_usd_per_kg"].map(String::from).to_vec()];
        strength.extend(
            self.strength_cost
                .iter()
                .map(|(i, y, c)| vec![i.to_string(), y.to_string(), c.to_string()]),
        );
        let mut signature = vec![["element", "mean_fraction"].map(String::from).to_vec()];
        signature.extend(
            self.elements
                .iter()
                .zip(&self.signature)
                .map(|(e, m)| vec![e.clone(), m.to_string()]),
        );
        let mut hv = vec![["iteration", "hypervolume"].map(String::from).to_vec()];
        hv.extend(
            self.hv_trace
                .iter()
                .enumerate()
                .map(|(t, h)| vec![(t + 1).to_string(), h.to_string()]),
        );
        let mut written = Vec::new();
        for (name, rows) in [
            ("pareto.csv", pareto),
            ("strength_cost.csv", strength),
            ("signature.csv", signature),
            ("hv_trace.csv", hv),
        ] {
            let path = dir.join(name);
            write_rows(&path, &rows)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::file(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::file(path, e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}
