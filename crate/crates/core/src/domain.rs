//! Semantic types shared by every stage, plus load-time invariant checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::instance::Instance;

/// Names of the fifteen commodity groups, indexed by `label - 1`.
pub const COMMODITY_GROUPS: [&str; 15] = [
    "Food, Agriculture, and Forestry Products",
    "Mining Products",
    "Petroleum Products",
    "Chemical and Pharmaceutical Products",
    "Wood Products",
    "Paper Products",
    "Nonmetallic Mineral Products",
    "Metal and Machinery Products",
    "Electronic, Electrical and Precision Equipments",
    "Motorized and Transportation Vehicles and Equipments",
    "Household and Office Furniture",
    "Plastic, Rubber and Miscellaneous Manufactured Products",
    "Textiles and Leather Products",
    "Waste and Scrap",
    "Mixed and Unknown Freight",
];

/// Commodity group label. Valid labels are `1..=15`; out-of-range labels can
/// be represented so that loaders can report them as violations.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct CommodityId(pub u8);

impl CommodityId {
    pub const COUNT: usize = COMMODITY_GROUPS.len();

    pub fn is_valid(self) -> bool {
        (1..=Self::COUNT as u8).contains(&self.0)
    }

    pub fn name(self) -> Option<&'static str> {
        self.is_valid().then(|| COMMODITY_GROUPS[self.0 as usize - 1])
    }

    pub fn all() -> impl Iterator<Item = CommodityId> {
        (1..=Self::COUNT as u8).map(CommodityId)
    }
}

impl fmt::Display for CommodityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommodityGroup {
    pub id: CommodityId,
    pub name: &'static str,
}

pub fn commodity_groups() -> Vec<CommodityGroup> {
    CommodityId::all()
        .map(|id| CommodityGroup {
            id,
            name: COMMODITY_GROUPS[id.0 as usize - 1],
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    /// Centroid in planar miles.
    pub x: f64,
    pub y: f64,
    pub is_internal: bool,
    /// Per-zone override of the intra-zonal shipping distance.
    pub intra_miles: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Establishment {
    pub id: String,
    /// Three-digit industry code, kept opaque.
    pub sector: String,
    pub zone: String,
    pub employment: f64,
    pub revenue: f64,
    /// Annual production capability in tons, by commodity.
    pub production: BTreeMap<CommodityId, f64>,
    /// Annual consumption demand in tons, by commodity.
    pub consumption: BTreeMap<CommodityId, f64>,
    pub is_internal: bool,
    pub is_micro: bool,
}

impl Establishment {
    /// Supply capacity summed over commodities.
    pub fn capacity(&self) -> f64 {
        self.production.values().sum()
    }

    /// Demand summed over commodities.
    pub fn demand(&self) -> f64 {
        self.consumption.values().sum()
    }

    pub fn produces(&self, commodity: CommodityId) -> f64 {
        self.production.get(&commodity).copied().unwrap_or(0.0)
    }

    pub fn consumes(&self, commodity: CommodityId) -> f64 {
        self.consumption.get(&commodity).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MakeUseEntry {
    pub supplier_sector: String,
    pub receiver_sector: String,
    pub commodity: CommodityId,
    pub share: f64,
}

/// Which commodities a supplier sector ships to a receiver sector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MakeUseTable {
    pub entries: Vec<MakeUseEntry>,
}

impl MakeUseTable {
    /// Admitted commodities keyed by `(supplier_sector, receiver_sector)`.
    pub fn admissible_index(&self) -> BTreeMap<(&str, &str), BTreeSet<CommodityId>> {
        let mut index: BTreeMap<(&str, &str), BTreeSet<CommodityId>> = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.share > 0.0) {
            index
                .entry((e.supplier_sector.as_str(), e.receiver_sector.as_str()))
                .or_default()
                .insert(e.commodity);
        }
        index
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTarget {
    pub origin_zone: String,
    pub dest_zone: String,
    pub commodity: CommodityId,
    pub tons: f64,
}

/// Shipping-distance bins and the observed tonnage share in each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBinning {
    /// `len() == targets.len() + 1`; starts at 0, ends at `f64::INFINITY`.
    pub edges: Vec<f64>,
    pub targets: Vec<f64>,
}

impl DistanceBinning {
    pub fn new(edges: Vec<f64>, targets: Vec<f64>) -> Self {
        Self { edges, targets }
    }

    /// A single bin covering every distance, with target share 1.
    pub fn single() -> Self {
        Self::new(vec![0.0, f64::INFINITY], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Index of the bin with `edges[b] <= miles < edges[b + 1]`.
    pub fn bin_of(&self, miles: f64) -> usize {
        let upper = &self.edges[1..];
        upper
            .partition_point(|&e| e <= miles)
            .min(self.len().saturating_sub(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverWeights {
    /// Unmet demand.
    pub w1: f64,
    /// Shipping cost of met demand.
    pub w2: f64,
    /// Supplier rating (rewarded).
    pub w3: f64,
    /// Distance-bin share gaps.
    pub w4: f64,
    /// Inter-zonal commodity flow gaps.
    pub w5: f64,
    /// Factor applied to `w1` for micro receivers.
    pub micro_multiplier: f64,
}

impl Default for SolverWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1e-3,
            w3: 1e-3,
            w4: 10.0,
            w5: 10.0,
            micro_multiplier: 10.0,
        }
    }
}

impl SolverWeights {
    pub fn unmet_weight(&self, is_micro: bool) -> f64 {
        if is_micro {
            self.w1 * self.micro_multiplier
        } else {
            self.w1
        }
    }

    /// Applies `key=value` overrides such as `w1=2,w4=0.5`.
    pub fn apply_overrides(&mut self, overrides: &str) -> Result<(), String> {
        for part in overrides.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| format!("bad number in `{part}`"))?;
            let slot = match key.trim() {
                "w1" => &mut self.w1,
                "w2" => &mut self.w2,
                "w3" => &mut self.w3,
                "w4" => &mut self.w4,
                "w5" => &mut self.w5,
                "micro" | "micro_multiplier" => &mut self.micro_multiplier,
                other => return Err(format!("unknown weight `{other}`")),
            };
            *slot = value;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TradeType {
    Import,
    Export,
}

impl TradeType {
    pub fn as_str(self) -> &'static str {
        match self {
            TradeType::Import => "import",
            TradeType::Export => "export",
        }
    }
}

impl std::str::FromStr for TradeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "import" => Ok(TradeType::Import),
            "export" => Ok(TradeType::Export),
            other => Err(format!("unknown trade type `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortFlow {
    pub port: String,
    pub trade_type: TradeType,
    pub commodity: CommodityId,
    /// Domestic end of the flow.
    pub zone: String,
    pub tons: f64,
}

/// A broken invariant, naming the record and the rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub record: String,
    pub rule: String,
}

impl Violation {
    fn new(record: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            record: record.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.record, self.rule)
    }
}

const SHARE_TOLERANCE: f64 = 1e-9;

fn nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Checks every type invariant. Returns an empty list for a valid instance.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut zones = BTreeMap::new();
    for z in &instance.zones {
        let record = format!("zone {}", z.id);
        if zones.insert(z.id.as_str(), z).is_some() {
            out.push(Violation::new(&record, "duplicate zone id"));
        }
        if !(z.x.is_finite() && z.y.is_finite()) {
            out.push(Violation::new(&record, "centroid must be finite"));
        }
        if let Some(m) = z.intra_miles {
            if !nonneg(m) {
                out.push(Violation::new(&record, "intra-zonal distance must be >= 0"));
            }
        }
    }

    if !nonneg(instance.micro_threshold) {
        out.push(Violation::new("manifest", "micro threshold must be >= 0"));
    }
    if !nonneg(instance.intra_zonal_miles) {
        out.push(Violation::new("manifest", "intra-zonal distance must be >= 0"));
    }

    let mut ids = BTreeSet::new();
    for e in &instance.establishments {
        let record = format!("establishment {}", e.id);
        if !ids.insert(e.id.as_str()) {
            out.push(Violation::new(&record, "duplicate establishment id"));
        }
        match zones.get(e.zone.as_str()) {
            None => out.push(Violation::new(&record, format!("unknown zone {}", e.zone))),
            Some(z) if z.is_internal != e.is_internal => out.push(Violation::new(
                &record,
                "internal flag disagrees with its zone",
            )),
            Some(_) => {}
        }
        if !nonneg(e.employment) {
            out.push(Violation::new(&record, "employment must be >= 0"));
        }
        if !nonneg(e.revenue) {
            out.push(Violation::new(&record, "revenue must be >= 0"));
        }
        for (kind, map) in [("production", &e.production), ("consumption", &e.consumption)] {
            for (c, &t) in map {
                if !c.is_valid() {
                    out.push(Violation::new(&record, format!("{kind}: unknown commodity {c}")));
                }
                if !nonneg(t) {
                    out.push(Violation::new(&record, format!("{kind} of {c} must be >= 0")));
                }
            }
        }
        if e.is_micro != (e.employment < instance.micro_threshold) {
            out.push(Violation::new(&record, "micro flag inconsistent with threshold"));
        }
    }

    for (i, m) in instance.make_use.entries.iter().enumerate() {
        let record = format!("make-use entry {}", i + 1);
        if !m.commodity.is_valid() {
            out.push(Violation::new(&record, format!("unknown commodity {}", m.commodity)));
        }
        if !(m.share.is_finite() && (0.0..=1.0).contains(&m.share)) {
            out.push(Violation::new(&record, "share must lie in [0, 1]"));
        }
    }

    for (i, f) in instance.flow_targets.iter().enumerate() {
        let record = format!("flow target {}", i + 1);
        if !f.commodity.is_valid() {
            out.push(Violation::new(&record, format!("unknown commodity {}", f.commodity)));
        }
        if !nonneg(f.tons) {
            out.push(Violation::new(&record, "tons must be >= 0"));
        }
        for z in [&f.origin_zone, &f.dest_zone] {
            if !zones.contains_key(z.as_str()) {
                out.push(Violation::new(&record, format!("unknown zone {z}")));
            }
        }
    }

    out.extend(validate_binning(&instance.binning));

    let w = &instance.weights;
    for (name, v) in [
        ("w1", w.w1),
        ("w2", w.w2),
        ("w3", w.w3),
        ("w4", w.w4),
        ("w5", w.w5),
        ("micro_multiplier", w.micro_multiplier),
    ] {
        if !nonneg(v) {
            out.push(Violation::new("SolverWeights", format!("{name} must be >= 0")));
        }
    }

    for (i, p) in instance.port_flows.iter().enumerate() {
        let record = format!("port flow {} ({})", i + 1, p.port);
        if !p.commodity.is_valid() {
            out.push(Violation::new(&record, format!("unknown commodity {}", p.commodity)));
        }
        if !nonneg(p.tons) {
            out.push(Violation::new(&record, "tons must be >= 0"));
        }
        if !zones.contains_key(p.zone.as_str()) {
            out.push(Violation::new(&record, format!("unknown zone {}", p.zone)));
        }
    }

    out
}

pub fn validate_binning(binning: &DistanceBinning) -> Vec<Violation> {
    let mut out = Vec::new();
    let record = "DistanceBinning";
    if binning.targets.is_empty() {
        out.push(Violation::new(record, "at least one bin is required"));
        return out;
    }
    if binning.edges.len() != binning.targets.len() + 1 {
        out.push(Violation::new(record, "edges must number one more than targets"));
        return out;
    }
    if binning.edges[0] != 0.0 {
        out.push(Violation::new(record, "first edge must be 0"));
    }
    if *binning.edges.last().unwrap() != f64::INFINITY {
        out.push(Violation::new(record, "last edge must be +inf"));
    }
    if binning.edges.windows(2).any(|w| !(w[0] < w[1])) {
        out.push(Violation::new(record, "edges must be strictly increasing"));
    }
    if binning.targets.iter().any(|&t| !nonneg(t)) {
        out.push(Violation::new(record, "targets must be >= 0"));
    }
    let total: f64 = binning.targets.iter().sum();
    if (total - 1.0).abs() > SHARE_TOLERANCE {
        out.push(Violation::new(
            record,
            format!("targets must sum to 1 (got {total})"),
        ));
    }
    out
}
