//! Constraint and objective oracles built on rule-of-mixtures models.
//!
//! All evaluators are pure functions of a composition and an immutable
//! elemental table, so a [`PropertyOracles`] can be shared across threads.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composition::Composition;
use crate::csvio::{Defects, Table};
use crate::error::{Error, Result};
use crate::supply_risk::RiskModel;

const BUILTIN_ELEMENTS: &str = include_str!("../data/elements.csv");

/// Objective values in minimization form, in campaign order.
pub type ObjectiveVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Property {
    MeltingPoint,
    Density,
    MolarMass,
    Cte,
    C11,
    C12,
    C44,
    Bulk,
    Shear,
    Kappa,
    Strength,
    Price,
}

impl Property {
    pub const ALL: [Property; 12] = [
        Property::MeltingPoint,
        Property::Density,
        Property::MolarMass,
        Property::Cte,
        Property::C11,
        Property::C12,
        Property::C44,
        Property::Bulk,
        Property::Shear,
        Property::Kappa,
        Property::Strength,
        Property::Price,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Property::MeltingPoint => "melting_point_c",
            Property::Density => "density_gcc",
            Property::MolarMass => "molar_mass",
            Property::Cte => "cte_per_k",
            Property::C11 => "c11_gpa",
            Property::C12 => "c12_gpa",
            Property::C44 => "c44_gpa",
            Property::Bulk => "bulk_gpa",
            Property::Shear => "shear_gpa",
            Property::Kappa => "kappa_wmk",
            Property::Strength => "strength_mpa",
            Property::Price => "price_usd_kg",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// Per-element property rows keyed by element symbol.
#[derive(Debug, Clone, Default)]
pub struct ElementTable {
    rows: HashMap<String, HashMap<Property, f64>>,
    order: Vec<String>,
}

impl ElementTable {
    /// The shipped Mo-Nb-Ti-V-W table.
    pub fn builtin() -> Self {
        Self::from_reader(BUILTIN_ELEMENTS.as_bytes(), "builtin elements.csv")
            .expect("builtin element table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Parses the elemental CSV. Unknown columns are ignored; every missing
    /// or non-positive required cell is reported with its line and column.
    pub fn from_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let table = Table::read(reader, source)?;
        let mut required = vec!["element"];
        required.extend(Property::ALL.iter().map(|p| p.column()));
        table.require_columns(&required)?;

        let mut defects = Defects::default();
        let mut out = ElementTable::default();
        for (line, rec) in &table.rows {
            let Some(symbol) = table.cell(rec, "element") else {
                defects.push(*line, "element", "missing element symbol");
                continue;
            };
            let mut values = HashMap::new();
            for p in Property::ALL {
                match table.cell(rec, p.column()).map(str::parse::<f64>) {
                    None => defects.push(*line, p.column(), "missing value"),
                    Some(Err(e)) => defects.push(*line, p.column(), e),
                    Some(Ok(v)) if !(v.is_finite() && v > 0.0) => {
                        defects.push(*line, p.column(), format!("{v} is not strictly positive"))
                    }
                    Some(Ok(v)) => {
                        values.insert(p, v);
                    }
                }
            }
            if out.rows.contains_key(symbol) {
                defects.push(*line, "element", format!("duplicate element {symbol}"));
            }
            out.order.push(symbol.to_string());
            out.rows.insert(symbol.to_string(), values);
        }
        defects.finish(source)?;
        Ok(out)
    }

    /// Inserts or replaces one element's row.
    pub fn insert(&mut self, symbol: &str, values: impl IntoIterator<Item = (Property, f64)>) {
        if !self.rows.contains_key(symbol) {
            self.order.push(symbol.to_string());
        }
        self.rows
            .insert(symbol.to_string(), values.into_iter().collect());
    }

    pub fn symbols(&self) -> &[String] {
        &self.order
    }

    pub fn value(&self, symbol: &str, property: Property) -> Option<f64> {
        self.rows.get(symbol).and_then(|r| r.get(&property)).copied()
    }

    /// One property aligned to an element list.
    pub fn field(&self, property: Property, elements: &[String]) -> ElementField {
        ElementField {
            property: property.column().to_string(),
            elements: elements.to_vec(),
            values: elements.iter().map(|e| self.value(e, property)).collect(),
        }
    }
}

/// An element-indexed scalar field; `None` marks missing data.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementField {
    pub property: String,
    pub elements: Vec<String>,
    pub values: Vec<Option<f64>>,
}

impl ElementField {
    pub fn new(property: &str, elements: &[String], values: Vec<f64>) -> Self {
        ElementField {
            property: property.to_string(),
            elements: elements.to_vec(),
            values: values.into_iter().map(Some).collect(),
        }
    }

    fn value(&self, i: usize) -> Result<f64> {
        self.values
            .get(i)
            .copied()
            .flatten()
            .ok_or_else(|| Error::DataMissing {
                element: self
                    .elements
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("#{i}")),
                property: self.property.clone(),
            })
    }
}

/// Rule of mixtures: `sum_i x_i p_i`. Inactive elements may lack data.
pub fn rom(field: &ElementField, c: &Composition) -> Result<f64> {
    if field.values.len() != c.len() {
        return Err(Error::invalid(format!(
            "{} has {} elements, composition has {}",
            field.property,
            field.values.len(),
            c.len()
        )));
    }
    let mut acc = 0.0;
    for (i, &x) in c.fractions().iter().enumerate() {
        if x > 0.0 {
            acc += x * field.value(i)?;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Exclusive upper bound on the rule-of-mixtures melting point, deg C.
    pub melting_point_c: f64,
    /// Exclusive upper bound on the linear expansion coefficient, 1/K.
    pub cte_per_k: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            melting_point_c: 3000.0,
            cte_per_k: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub melting_ok: bool,
    pub cte_ok: bool,
    pub bcc_ok: bool,
    pub feasible: bool,
}

impl ConstraintReport {
    pub fn new(melting_ok: bool, cte_ok: bool, bcc_ok: bool) -> Self {
        ConstraintReport {
            melting_ok,
            cte_ok,
            bcc_ok,
            feasible: melting_ok && cte_ok && bcc_ok,
        }
    }
}

/// Phase-stability check. The default accepts every composition.
pub trait PhasePredicate: Send + Sync {
    fn is_bcc(&self, c: &Composition) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysBcc;

impl PhasePredicate for AlwaysBcc {
    fn is_bcc(&self, _c: &Composition) -> bool {
        true
    }
}

/// Per-composition phase verdicts read from a CSV of element fractions plus a
/// `bcc` column. Compositions not listed fall back to `default`.
#[derive(Debug, Clone)]
pub struct BccLookup {
    verdicts: HashMap<Vec<i64>, bool>,
    default: bool,
}

impl BccLookup {
    fn key(fractions: &[f64]) -> Vec<i64> {
        fractions.iter().map(|x| (x * 1e6).round() as i64).collect()
    }

    pub fn from_reader<R: Read>(reader: R, source: &str, elements: &[String]) -> Result<Self> {
        let table = Table::read(reader, source)?;
        let mut cols: Vec<&str> = elements.iter().map(String::as_str).collect();
        cols.push("bcc");
        table.require_columns(&cols)?;
        let mut defects = Defects::default();
        let mut verdicts = HashMap::new();
        for (line, rec) in &table.rows {
            let mut fr = Vec::with_capacity(elements.len());
            for e in elements {
                match table.cell(rec, e).map(str::parse::<f64>) {
                    Some(Ok(v)) => fr.push(v),
                    Some(Err(err)) => defects.push(*line, e, err),
                    None => defects.push(*line, e, "missing value"),
                }
            }
            let verdict = match table.cell(rec, "bcc").map(str::to_ascii_lowercase).as_deref() {
                Some("true") | Some("1") | Some("yes") => true,
                Some("false") | Some("0") | Some("no") => false,
                other => {
                    defects.push(*line, "bcc", format!("expected true/false, got {other:?}"));
                    continue;
                }
            };
            if fr.len() == elements.len() {
                verdicts.insert(Self::key(&fr), verdict);
            }
        }
        defects.finish(source)?;
        Ok(BccLookup {
            verdicts,
            default: true,
        })
    }

    pub fn with_default(mut self, default: bool) -> Self {
        self.default = default;
        self
    }
}

impl PhasePredicate for BccLookup {
    fn is_bcc(&self, c: &Composition) -> bool {
        self.verdicts
            .get(&Self::key(c.fractions()))
            .copied()
            .unwrap_or(self.default)
    }
}

/// High-temperature yield-strength model. Implementations receive the
/// per-element strength column aligned to the composition.
pub trait YieldSurrogate: Send + Sync {
    fn name(&self) -> &str;
    fn yield_strength(&self, c: &Composition, strength: &ElementField) -> Result<f64>;
}

/// `rom(strength) * (1 + gamma * S)`, where `S = -sum x ln x / ln n` is the
/// configurational entropy normalized by its maximum over the element list.
/// A stand-in that rewards mixing, not a strengthening model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBonus {
    pub gamma: f64,
}

impl Default for EntropyBonus {
    fn default() -> Self {
        EntropyBonus { gamma: 0.5 }
    }
}

pub fn normalized_entropy(c: &Composition) -> f64 {
    let n = c.len();
    if n < 2 {
        return 0.0;
    }
    let s: f64 = c
        .fractions()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    s / (n as f64).ln()
}

impl YieldSurrogate for EntropyBonus {
    fn name(&self) -> &str {
        "rom_entropy"
    }

    fn yield_strength(&self, c: &Composition, strength: &ElementField) -> Result<f64> {
        Ok(rom(strength, c)? * (1.0 + self.gamma * normalized_entropy(c)))
    }
}

/// Looks up a shipped surrogate: `rom_entropy` (default) or `rom` (gamma 0).
pub fn surrogate_by_name(name: &str, gamma: f64) -> Result<Box<dyn YieldSurrogate>> {
    match name {
        "rom_entropy" => Ok(Box::new(EntropyBonus { gamma })),
        "rom" => Ok(Box::new(PlainRom)),
        other => Err(Error::Config(format!("unknown yield surrogate '{other}'"))),
    }
}

#[derive(Debug, Clone, Copy)]
struct PlainRom;

impl YieldSurrogate for PlainRom {
    fn name(&self) -> &str {
        "rom"
    }

    fn yield_strength(&self, c: &Composition, strength: &ElementField) -> Result<f64> {
        rom(strength, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    YieldStrength,
    CauchyPressure,
    PughRatio,
    ThermalConductivity,
    Density,
    SupplyRisk,
}

impl Objective {
    pub const PERFORMANCE: [Objective; 5] = [
        Objective::YieldStrength,
        Objective::CauchyPressure,
        Objective::PughRatio,
        Objective::ThermalConductivity,
        Objective::Density,
    ];

    pub fn maximize(self) -> bool {
        matches!(
            self,
            Objective::YieldStrength
                | Objective::CauchyPressure
                | Objective::PughRatio
                | Objective::ThermalConductivity
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::YieldStrength => "yield_strength",
            Objective::CauchyPressure => "cauchy_pressure",
            Objective::PughRatio => "pugh_ratio",
            Objective::ThermalConductivity => "thermal_conductivity",
            Objective::Density => "density",
            Objective::SupplyRisk => "supply_risk",
        }
    }

    /// Converts a minimization-form value back to its natural sign.
    pub fn natural(self, value: f64) -> f64 {
        if self.maximize() {
            -value
        } else {
            value
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Objective::YieldStrength,
            Objective::CauchyPressure,
            Objective::PughRatio,
            Objective::ThermalConductivity,
            Objective::Density,
            Objective::SupplyRisk,
        ];
        all.into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown objective '{s}'")))
    }
}

/// Every oracle for one element list.
pub struct PropertyOracles {
    elements: Vec<String>,
    fields: HashMap<Property, ElementField>,
    surrogate: Box<dyn YieldSurrogate>,
    thresholds: Thresholds,
    phase: Box<dyn PhasePredicate>,
}

impl fmt::Debug for PropertyOracles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PropertyOracles")
            .field("elements", &self.elements)
            .field("surrogate", &self.surrogate.name())
            .field("thresholds", &self.thresholds)
            .finish()
    }
}

impl PropertyOracles {
    /// Fails with `DataMissing` if any campaign element lacks a table row.
    pub fn new(table: &ElementTable, elements: &[String]) -> Result<Self> {
        let mut fields = HashMap::new();
        for p in Property::ALL {
            let field = table.field(p, elements);
            if let Some(i) = field.values.iter().position(Option::is_none) {
                return Err(Error::DataMissing {
                    element: elements[i].clone(),
                    property: p.column().to_string(),
                });
            }
            fields.insert(p, field);
        }
        Ok(PropertyOracles {
            elements: elements.to_vec(),
            fields,
            surrogate: Box::new(EntropyBonus::default()),
            thresholds: Thresholds::default(),
            phase: Box::new(AlwaysBcc),
        })
    }

    pub fn with_surrogate(mut self, surrogate: Box<dyn YieldSurrogate>) -> Self {
        self.surrogate = surrogate;
        self
    }

    pub fn with_thresholds(mut self, thresholds: Thresholds) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn with_phase_predicate(mut self, phase: Box<dyn PhasePredicate>) -> Self {
        self.phase = phase;
        self
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn field(&self, p: Property) -> &ElementField {
        &self.fields[&p]
    }

    pub fn rom(&self, p: Property, c: &Composition) -> Result<f64> {
        rom(self.field(p), c)
    }

    pub fn melting_point(&self, c: &Composition) -> Result<f64> {
        self.rom(Property::MeltingPoint, c)
    }

    pub fn cte(&self, c: &Composition) -> Result<f64> {
        self.rom(Property::Cte, c)
    }

    pub fn thermal_conductivity(&self, c: &Composition) -> Result<f64> {
        self.rom(Property::Kappa, c)
    }

    /// Molar mass over molar volume: `sum x M / sum (x M / rho)`.
    pub fn density(&self, c: &Composition) -> Result<f64> {
        let m = self.field(Property::MolarMass);
        let rho = self.field(Property::Density);
        let (mut mass, mut volume) = (0.0, 0.0);
        for (i, &x) in c.fractions().iter().enumerate() {
            if x > 0.0 {
                let r = rho.value(i)?;
                if r == 0.0 {
                    return Err(Error::InvalidData(format!(
                        "zero density for {}",
                        self.elements[i]
                    )));
                }
                let xm = x * m.value(i)?;
                mass += xm;
                volume += xm / r;
            }
        }
        Ok(mass / volume)
    }

    pub fn pugh_ratio(&self, c: &Composition) -> Result<f64> {
        let b = self.rom(Property::Bulk, c)?;
        let g = self.rom(Property::Shear, c)?;
        if g == 0.0 {
            return Err(Error::DivideByZero("shear modulus is zero".into()));
        }
        Ok(b / g)
    }

    /// `rom(C12) - rom(C44)`.
    pub fn cauchy_pressure(&self, c: &Composition) -> Result<f64> {
        Ok(self.rom(Property::C12, c)? - self.rom(Property::C44, c)?)
    }

    pub fn yield_strength(&self, c: &Composition) -> Result<f64> {
        self.surrogate
            .yield_strength(c, self.field(Property::Strength))
    }

    /// Mass-fraction-weighted elemental price, USD/kg.
    pub fn cost(&self, c: &Composition) -> Result<f64> {
        let m = self.field(Property::MolarMass);
        let price = self.field(Property::Price);
        let (mut total, mut weighted) = (0.0, 0.0);
        for (i, &x) in c.fractions().iter().enumerate() {
            if x > 0.0 {
                let xm = x * m.value(i)?;
                total += xm;
                weighted += xm * price.value(i)?;
            }
        }
        Ok(weighted / total)
    }

    pub fn evaluate_constraints(&self, c: &Composition) -> Result<ConstraintReport> {
        Ok(ConstraintReport::new(
            self.melting_point(c)? < self.thresholds.melting_point_c,
            self.cte(c)? < self.thresholds.cte_per_k,
            self.phase.is_bcc(c),
        ))
    }

    pub fn objective(
        &self,
        objective: Objective,
        c: &Composition,
        risk: Option<&RiskModel>,
    ) -> Result<f64> {
        let natural = match objective {
            Objective::YieldStrength => self.yield_strength(c)?,
            Objective::CauchyPressure => self.cauchy_pressure(c)?,
            Objective::PughRatio => self.pugh_ratio(c)?,
            Objective::ThermalConductivity => self.thermal_conductivity(c)?,
            Objective::Density => self.density(c)?,
            Objective::SupplyRisk => risk
                .ok_or_else(|| Error::Config("supply-risk objective needs indicator data".into()))?
                .alloy_sr(c)?,
        };
        Ok(objective.natural(natural))
    }

    /// Minimization-form objective vector in the given order.
    pub fn evaluate_objectives(
        &self,
        c: &Composition,
        objectives: &[Objective],
        risk: Option<&RiskModel>,
    ) -> Result<ObjectiveVector> {
        let v = objectives
            .iter()
            .map(|&o| self.objective(o, c, risk))
            .collect::<Result<Vec<_>>>()?;
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "objective {} is not finite",
                objectives[i].name()
            )));
        }
        Ok(v)
    }
}
