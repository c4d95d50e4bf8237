//! Reproducible synthetic instances.
//!
//! Internal establishments are laid out in zones near the origin, external
//! ones in zones 80 to 600 miles out. External establishments are drawn
//! from a candidate pool per zone until the zone's supply to and demand
//! from the region are covered. Bin and flow targets are read off a
//! cost-optimal assignment of the generated instance, so an assignment with
//! zero calibration gap exists.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Instance, DEFAULT_INTRA_ZONAL_MILES, DEFAULT_MICRO_THRESHOLD};
use crate::domain::{
    CommodityId, DistanceBinning, Establishment, FlowTarget, MakeUseEntry, MakeUseTable, PortFlow, SolverWeights,
    TradeType, Zone,
};
use crate::error::{Error, Result};
use crate::international::TradeBounds;
use crate::lp::{BundledSimplex, LpBackend};
use crate::models::{build_supplier_selection_model, consumption_split, Problem};
use crate::pairing::{enumerate_pairs, PairingOptions, RatingCoefficients};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub n_internal_zones: usize,
    pub n_external_zones: usize,
    /// Internal establishments per internal zone.
    pub establishments_per_zone: usize,
    pub commodity_count: u8,
    /// Mean annual tons consumed per consuming establishment.
    pub demand_scale: f64,
    /// Total capacity over total demand.
    pub capacity_ratio: f64,
    pub rng_seed: u64,
    pub max_suppliers: Option<usize>,
    /// Lower bin edges in miles; the last bin is unbounded.
    pub bin_edges: Vec<f64>,
    /// Side of the square holding the internal zone centroids, in miles.
    pub region_miles: f64,
    pub weights: SolverWeights,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            n_internal_zones: 4,
            n_external_zones: 2,
            establishments_per_zone: 6,
            commodity_count: 3,
            demand_scale: 100.0,
            capacity_ratio: 1.5,
            rng_seed: 1,
            max_suppliers: None,
            bin_edges: vec![0.0, 25.0, 50.0, 100.0, 250.0, 500.0],
            region_miles: 60.0,
            weights: SolverWeights::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_internal_zones == 0 || self.establishments_per_zone == 0 {
            return bad("zone and establishment counts must be at least 1");
        }
        if !(1..=15).contains(&self.commodity_count) {
            return bad("commodity count must be in 1..=15");
        }
        if !(self.demand_scale > 0.0 && self.demand_scale.is_finite()) {
            return bad("demand scale must be positive");
        }
        if !(self.capacity_ratio > 0.0 && self.capacity_ratio.is_finite()) {
            return bad("capacity ratio must be positive");
        }
        if self.capacity_ratio < 1.0 {
            return Err(Error::Config(format!(
                "capacity ratio {} leaves total capacity below total demand",
                self.capacity_ratio
            )));
        }
        if self.max_suppliers == Some(0) {
            return bad("max suppliers must be at least 1");
        }
        if self.bin_edges.first() != Some(&0.0) || self.bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("bin edges must start at 0 and increase");
        }
        if !(self.region_miles > 0.0) {
            return bad("region size must be positive");
        }
        Ok(())
    }
}

/// Per external zone and commodity: tons the zone must supply to the region
/// and tons it must take from it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ZonalTargets {
    pub supply: BTreeMap<(String, CommodityId), f64>,
    pub demand: BTreeMap<(String, CommodityId), f64>,
}

impl ZonalTargets {
    fn zones(&self) -> Vec<&str> {
        let mut z: Vec<&str> = self.supply.keys().chain(self.demand.keys()).map(|(z, _)| z.as_str()).collect();
        z.sort_unstable();
        z.dedup();
        z
    }
}

/// Draws establishments from `pool` zone by zone, in a seeded random order,
/// keeping each one that still helps cover an open target and stopping as
/// soon as the zone is covered. Returns pool indices in selection order.
pub fn sample_external_establishments(targets: &ZonalTargets, pool: &[Establishment], seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::new();
    for zone in targets.zones() {
        let mut supply: BTreeMap<CommodityId, f64> = targets
            .supply
            .iter()
            .filter(|((z, _), t)| z == zone && **t > 0.0)
            .map(|((_, c), t)| (*c, *t))
            .collect();
        let mut demand: BTreeMap<CommodityId, f64> = targets
            .demand
            .iter()
            .filter(|((z, _), t)| z == zone && **t > 0.0)
            .map(|((_, c), t)| (*c, *t))
            .collect();
        let mut order: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].zone == zone).collect();
        order.shuffle(&mut rng);
        for i in order {
            if supply.is_empty() && demand.is_empty() {
                break;
            }
            let e = &pool[i];
            let helps = supply.keys().any(|&c| e.produces(c) > 0.0) || demand.keys().any(|&c| e.consumes(c) > 0.0);
            if !helps {
                continue;
            }
            selected.push(i);
            for (open, have) in [(&mut supply, &e.production), (&mut demand, &e.consumption)] {
                for (c, t) in have {
                    if let Some(left) = open.get_mut(c) {
                        *left -= t;
                    }
                }
                open.retain(|_, left| *left > 0.0);
            }
        }
        for (open, direction) in [(&supply, "supply"), (&demand, "demand")] {
            if !open.is_empty() {
                return Err(Error::PoolExhausted {
                    zone: zone.to_string(),
                    direction,
                    shortfall: open.values().sum(),
                });
            }
        }
    }
    Ok(selected)
}

fn producer_sector(c: u8) -> String {
    format!("{}", 310 + c as u32)
}

fn consumer_sector(c: u8) -> String {
    format!("{}", 420 + c as u32)
}

/// The commodity after `c`, wrapping within `1..=k`.
fn next(c: u8, k: u8) -> u8 {
    c % k + 1
}

const SECONDARY_OUTPUT: f64 = 0.25;
const SECONDARY_INPUT: f64 = 0.3;
const PRODUCER_INPUT: f64 = 0.2;
const INTERNAL_SUPPLY_SHARE: f64 = 0.8;
const EXTERNAL_DEMAND_SHARE: f64 = 0.2;

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Role of a synthetic establishment: what it makes and what it uses, with
/// relative weights.
struct Role {
    sector: String,
    makes: Vec<(u8, f64)>,
    uses: Vec<(u8, f64)>,
}

fn role(producer: bool, c: u8, k: u8) -> Role {
    let n = next(c, k);
    let mut makes = Vec::new();
    let mut uses = Vec::new();
    if producer {
        makes.push((c, 1.0));
        if n != c {
            makes.push((n, SECONDARY_OUTPUT));
        }
        if n != c {
            uses.push((n, PRODUCER_INPUT));
        }
    } else {
        uses.push((c, 1.0));
        if n != c {
            uses.push((n, SECONDARY_INPUT));
        }
    }
    Role {
        sector: if producer { producer_sector(c) } else { consumer_sector(c) },
        makes,
        uses,
    }
}

fn employment(rng: &mut ChaCha8Rng) -> f64 {
    // Log-uniform on [1, 800), rounded to whole persons.
    (rng.gen_range(0.0f64..800f64.ln()).exp()).floor().max(1.0)
}

fn blank(id: String, sector: String, zone: &str, employment: f64, revenue: f64, internal: bool) -> Establishment {
    Establishment {
        id,
        sector,
        zone: zone.to_string(),
        employment,
        revenue,
        production: BTreeMap::new(),
        consumption: BTreeMap::new(),
        is_internal: internal,
        is_micro: false,
    }
}

/// Splits `total` over `members` proportional to their weights.
fn allocate(total: f64, members: &[(usize, f64)], into: &mut [BTreeMap<CommodityId, f64>], c: CommodityId) {
    let sum: f64 = members.iter().map(|m| m.1).sum();
    if sum <= 0.0 {
        return;
    }
    for &(i, w) in members {
        *into[i].entry(c).or_insert(0.0) += total * w / sum;
    }
}

pub fn synthesize_instance(cfg: &SynthesisConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let k = cfg.commodity_count;

    let mut zones = Vec::new();
    for i in 0..cfg.n_internal_zones {
        zones.push(Zone {
            id: format!("Z{:03}", i + 1),
            x: rng.gen_range(0.0..cfg.region_miles),
            y: rng.gen_range(0.0..cfg.region_miles),
            is_internal: true,
            intra_miles: None,
        });
    }
    let center = cfg.region_miles / 2.0;
    for i in 0..cfg.n_external_zones {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let radius = rng.gen_range(80.0..600.0);
        zones.push(Zone {
            id: format!("X{:03}", i + 1),
            x: center + radius * angle.cos(),
            y: center + radius * angle.sin(),
            is_internal: false,
            intra_miles: None,
        });
    }

    // Internal establishments. Roles cycle through commodities so each one
    // gets producers and consumers.
    let mut internal = Vec::new();
    let mut roles = Vec::new();
    let mut g = 0usize;
    for z in zones.iter().filter(|z| z.is_internal) {
        for j in 0..cfg.establishments_per_zone {
            let c = (g % k as usize) as u8 + 1;
            let producer = (g / k as usize) % 2 == 0;
            g += 1;
            let r = role(producer, c, k);
            let emp = employment(&mut rng);
            let revenue = (emp * rng.gen_range(80_000.0..250_000.0)).round();
            internal.push(blank(format!("{}-{:04}", z.id, j + 1), r.sector.clone(), &z.id, emp, revenue, true));
            roles.push(r);
        }
    }

    let mut production = vec![BTreeMap::new(); internal.len()];
    let mut consumption = vec![BTreeMap::new(); internal.len()];
    let mut internal_demand = vec![0.0; k as usize + 1];
    for z in zones.iter().filter(|z| z.is_internal) {
        for c in 1..=k {
            let users: Vec<(usize, f64)> = internal
                .iter()
                .enumerate()
                .filter(|(_, e)| e.zone == z.id)
                .filter_map(|(i, e)| roles[i].uses.iter().find(|u| u.0 == c).map(|u| (i, u.1 * e.employment)))
                .collect();
            if users.is_empty() {
                continue;
            }
            let weight: f64 = users.iter().map(|&(i, _)| roles[i].uses.iter().find(|u| u.0 == c).unwrap().1).sum();
            let total = cfg.demand_scale * weight * rng.gen_range(0.5..1.5);
            allocate(total, &users, &mut consumption, CommodityId(c));
            internal_demand[c as usize] += total;
        }
    }

    let external_zones: Vec<&Zone> = zones.iter().filter(|z| !z.is_internal).collect();
    let mut targets = ZonalTargets::default();
    let mut total_demand = internal_demand.clone();
    for z in &external_zones {
        for c in 1..=k {
            let t = EXTERNAL_DEMAND_SHARE * internal_demand[c as usize] / external_zones.len() as f64
                * rng.gen_range(0.5..1.5);
            if t > 0.0 {
                targets.demand.insert((z.id.clone(), CommodityId(c)), t);
                total_demand[c as usize] += t;
            }
        }
    }

    for c in 1..=k {
        let capacity = cfg.capacity_ratio * total_demand[c as usize];
        if capacity <= 0.0 {
            continue;
        }
        let makers: Vec<(usize, f64)> = internal
            .iter()
            .enumerate()
            .filter_map(|(i, e)| roles[i].makes.iter().find(|m| m.0 == c).map(|m| (i, m.1 * e.employment)))
            .collect();
        let internal_share = match (makers.is_empty(), external_zones.is_empty()) {
            (true, true) => {
                return Err(Error::Config(format!("no establishment can produce commodity {c}")));
            }
            (true, false) => 0.0,
            (false, true) => 1.0,
            (false, false) => INTERNAL_SUPPLY_SHARE,
        };
        allocate(capacity * internal_share, &makers, &mut production, CommodityId(c));
        if internal_share < 1.0 {
            let w: Vec<f64> = external_zones.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
            let sum: f64 = w.iter().sum();
            for (z, w) in external_zones.iter().zip(w) {
                targets
                    .supply
                    .insert((z.id.clone(), CommodityId(c)), capacity * (1.0 - internal_share) * w / sum);
            }
        }
    }
    for (i, e) in internal.iter_mut().enumerate() {
        e.production = std::mem::take(&mut production[i]);
        e.consumption = std::mem::take(&mut consumption[i]);
    }

    // Candidate pool: at least three candidates per open target, each able
    // to cover 35-70% of it, so the pool always covers the zone.
    let mut pool = Vec::new();
    for z in &external_zones {
        let open: Vec<(bool, CommodityId, f64)> = targets
            .supply
            .iter()
            .map(|((zz, c), t)| (zz, true, c, t))
            .chain(targets.demand.iter().map(|((zz, c), t)| (zz, false, c, t)))
            .filter(|(zz, ..)| *zz == &z.id)
            .map(|(_, p, c, t)| (p, *c, *t))
            .collect();
        if open.is_empty() {
            continue;
        }
        let per_target = (cfg.establishments_per_zone / open.len()).max(3);
        let mut j = 0;
        for &(producer, c, t) in &open {
            for _ in 0..per_target {
                j += 1;
                let r = role(producer, c.0, k);
                let emp = employment(&mut rng);
                let revenue = (emp * rng.gen_range(80_000.0..250_000.0)).round();
                let mut e = blank(format!("{}-{:04}", z.id, j), r.sector, &z.id, emp, revenue, false);
                let tons = t * rng.gen_range(0.35..0.7);
                if producer {
                    e.production.insert(c, tons);
                } else {
                    e.consumption.insert(c, tons);
                }
                pool.push(e);
            }
        }
    }
    let chosen = sample_external_establishments(&targets, &pool, cfg.rng_seed ^ 0x5eed)?;
    let mut externals: Vec<Establishment> = chosen.iter().map(|&i| pool[i].clone()).collect();
    externals.sort_by(|a, b| a.id.cmp(&b.id));
    // Scale so the selected establishments hit the targets exactly.
    for (target, producing) in [(&targets.supply, true), (&targets.demand, false)] {
        for ((zone, c), t) in target {
            fn side<'e>(e: &'e mut Establishment, producing: bool, c: &CommodityId) -> Option<&'e mut f64> {
                if producing {
                    e.production.get_mut(c)
                } else {
                    e.consumption.get_mut(c)
                }
            }
            let have: f64 = externals
                .iter_mut()
                .filter(|e| &e.zone == zone)
                .filter_map(|e| side(e, producing, c).map(|v| *v))
                .sum();
            if have <= 0.0 {
                continue;
            }
            for e in externals.iter_mut().filter(|e| &e.zone == zone) {
                if let Some(v) = side(e, producing, c) {
                    *v *= t / have;
                }
            }
        }
    }

    let mut establishments = internal;
    establishments.extend(externals);
    for e in &mut establishments {
        for v in e.production.values_mut().chain(e.consumption.values_mut()) {
            *v = round3(*v);
        }
        e.production.retain(|_, v| *v > 0.0);
        e.consumption.retain(|_, v| *v > 0.0);
        e.is_micro = e.employment < DEFAULT_MICRO_THRESHOLD;
    }

    let mut entries = Vec::new();
    let sectors: Vec<(String, Vec<u8>, Vec<u8>)> = (1..=k)
        .flat_map(|c| [true, false].map(|p| role(p, c, k)))
        .map(|r| (r.sector, r.makes.iter().map(|m| m.0).collect(), r.uses.iter().map(|u| u.0).collect()))
        .collect();
    for (ss, makes, _) in &sectors {
        for (rs, _, uses) in &sectors {
            for c in makes.iter().filter(|c| uses.contains(c)) {
                entries.push(MakeUseEntry {
                    supplier_sector: ss.clone(),
                    receiver_sector: rs.clone(),
                    commodity: CommodityId(*c),
                    share: 1.0,
                });
            }
        }
    }
    entries.sort_by(|a, b| {
        (&a.supplier_sector, &a.receiver_sector, a.commodity).cmp(&(&b.supplier_sector, &b.receiver_sector, b.commodity))
    });

    let mut edges = cfg.bin_edges.clone();
    edges.push(f64::INFINITY);
    let n_bins = edges.len() - 1;
    let mut instance = Instance {
        zones,
        establishments,
        make_use: MakeUseTable { entries },
        flow_targets: Vec::new(),
        binning: DistanceBinning::new(edges, vec![1.0 / n_bins as f64; n_bins]),
        weights: cfg.weights,
        port_flows: Vec::new(),
        rng_seed: cfg.rng_seed,
        micro_threshold: DEFAULT_MICRO_THRESHOLD,
        intra_zonal_miles: DEFAULT_INTRA_ZONAL_MILES,
        rating: RatingCoefficients::default(),
        trade_bounds: TradeBounds::default(),
        max_suppliers: cfg.max_suppliers,
        distance_matrix: None,
    };
    calibrate_targets(&mut instance)?;
    instance.port_flows = port_flows(&instance, &mut rng);
    Ok(instance)
}

/// Sets bin and flow targets to those of a cost-optimal assignment (bin and
/// flow gaps weighted zero). Receivers left partly unmet have their demand
/// trimmed to what was met and the solve is repeated, so the final targets
/// come from an assignment that meets all demand.
fn calibrate_targets(instance: &mut Instance) -> Result<()> {
    let backend = BundledSimplex::default();
    let options = PairingOptions { max_suppliers: instance.max_suppliers };
    let mut weights = instance.weights;
    weights.w4 = 0.0;
    weights.w5 = 0.0;
    for _ in 0..20 {
        let pairs = enumerate_pairs(instance, &options)?;
        let pairs = crate::decompose::regional_pairs(&pairs, &instance.establishments);
        let problem = Problem::new(instance, &pairs, weights);
        let model = build_supplier_selection_model(&problem)?;
        let solution = backend.solve(&model.lp)?;
        let a = model.extract(&problem, &solution)?;

        let unmet: Vec<(usize, f64)> = a
            .receivers
            .iter()
            .zip(&a.unmet)
            .filter(|(_, u)| **u > 1e-9)
            .map(|(&r, &u)| (r, u))
            .collect();
        if !unmet.is_empty() {
            for (r, u) in unmet {
                let e = &mut instance.establishments[r];
                for v in e.consumption.values_mut() {
                    *v = if u > 1.0 - 1e-9 { 0.0 } else { round3(*v * (1.0 - u)) };
                }
                e.consumption.retain(|_, v| *v > 0.0);
            }
            continue;
        }

        let total: f64 = a.receivers.iter().map(|&r| instance.establishments[r].demand()).sum();
        let mut bins = vec![0.0; instance.binning.len()];
        let mut flows: BTreeMap<(String, String, CommodityId), f64> = BTreeMap::new();
        for (i, p) in pairs.iter().enumerate() {
            let tons = a.tons(instance, &pairs, i);
            if tons <= 0.0 {
                continue;
            }
            bins[p.bin] += tons;
            let est = &instance.establishments;
            for (c, share) in p.commodities.iter().zip(consumption_split(instance, p)) {
                *flows
                    .entry((est[p.supplier].zone.clone(), est[p.receiver].zone.clone(), *c))
                    .or_insert(0.0) += tons * share;
            }
        }
        if total > 0.0 {
            let met: f64 = bins.iter().sum();
            instance.binning.targets = bins.iter().map(|b| b / met).collect();
        }
        instance.flow_targets = flows
            .into_iter()
            .filter(|(_, t)| *t > 0.0)
            .map(|((o, d, c), tons)| FlowTarget {
                origin_zone: o,
                dest_zone: d,
                commodity: c,
                tons,
            })
            .collect();
        return Ok(());
    }
    Err(Error::Config("calibration targets did not converge to a fully met assignment".into()))
}

/// Import and export flows for internal zones whose large establishments
/// use or make the commodity.
fn port_flows(instance: &Instance, rng: &mut ChaCha8Rng) -> Vec<PortFlow> {
    let threshold = instance.trade_bounds.size_threshold;
    let mut flows = Vec::new();
    for z in instance.zones.iter().filter(|z| z.is_internal) {
        let here: Vec<&Establishment> = instance.establishments.iter().filter(|e| e.zone == z.id).collect();
        let mut by_commodity: BTreeMap<(TradeType, CommodityId), (f64, bool)> = BTreeMap::new();
        for e in &here {
            for (trade, side) in [(TradeType::Export, &e.production), (TradeType::Import, &e.consumption)] {
                for (&c, &t) in side {
                    let slot = by_commodity.entry((trade, c)).or_insert((0.0, false));
                    slot.0 += t;
                    slot.1 |= e.employment >= threshold;
                }
            }
        }
        for ((trade, c), (total, has_large)) in by_commodity {
            if has_large && rng.gen_bool(0.5) {
                let port = if rng.gen_bool(0.5) { "PORT1" } else { "PORT2" };
                flows.push(PortFlow {
                    port: port.into(),
                    trade_type: trade,
                    commodity: c,
                    zone: z.id.clone(),
                    tons: round3(total * rng.gen_range(0.05..0.2)),
                });
            }
        }
    }
    flows
}
