//! Admissible supplier/receiver pairs with shipping cost, supplier rating
//! and distance bin.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{CommodityId, DistanceBinning, Establishment, Zone};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Zone-to-zone distance overrides in miles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistanceMatrix {
    miles: BTreeMap<(String, String), f64>,
}

impl DistanceMatrix {
    pub fn insert(&mut self, from: &str, to: &str, miles: f64) {
        self.miles.insert((from.to_string(), to.to_string()), miles);
    }

    pub fn get(&self, from: &str, to: &str) -> Option<f64> {
        self.miles.get(&(from.to_string(), to.to_string())).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(String, String), &f64)> {
        self.miles.iter()
    }
}

/// Coefficients of the logistic supplier score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatingCoefficients {
    pub intercept: f64,
    /// Production capacity (reliability proxy).
    pub capacity: f64,
    /// Revenue (financial condition proxy).
    pub financial: f64,
    /// Negated unit value (price proxy).
    pub cost: f64,
}

impl Default for RatingCoefficients {
    fn default() -> Self {
        Self {
            intercept: 0.0,
            capacity: 1.0,
            financial: 1.0,
            cost: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidatePair {
    /// Index into `Instance::establishments`.
    pub supplier: usize,
    pub receiver: usize,
    /// Shipping cost in miles.
    pub cost: f64,
    pub rating: f64,
    pub bin: usize,
    /// Commodities the supplier can ship to the receiver, ascending.
    pub commodities: Vec<CommodityId>,
    /// Tons per year committed after supplier selection.
    pub supplied_tons: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairingOptions {
    /// Keep only the `M` nearest admissible suppliers of each receiver.
    pub max_suppliers: Option<usize>,
}

fn zone_map(zones: &[Zone]) -> BTreeMap<&str, &Zone> {
    zones.iter().map(|z| (z.id.as_str(), z)).collect()
}

/// Distance between two establishments' zones in miles.
///
/// With an override matrix the entry for the zone pair is used (intra-zonal
/// entries fall back to the intra-zonal constant when absent). Otherwise the
/// Euclidean centroid distance, or the intra-zonal constant within a zone.
pub fn shipping_cost(
    supplier_zone: &Zone,
    receiver_zone: &Zone,
    intra_zonal_miles: f64,
    matrix: Option<&DistanceMatrix>,
) -> Result<f64> {
    let same = supplier_zone.id == receiver_zone.id;
    if let Some(m) = matrix {
        if let Some(d) = m.get(&supplier_zone.id, &receiver_zone.id) {
            return Ok(d);
        }
        if !same {
            return Err(Error::MissingDistance {
                from: supplier_zone.id.clone(),
                to: receiver_zone.id.clone(),
            });
        }
    }
    if same {
        return Ok(supplier_zone.intra_miles.unwrap_or(intra_zonal_miles));
    }
    Ok((supplier_zone.x - receiver_zone.x).hypot(supplier_zone.y - receiver_zone.y))
}

pub fn assign_bin(cost: f64, binning: &DistanceBinning) -> usize {
    binning.bin_of(cost)
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Range {
    min: f64,
    max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        values.fold(
            Range {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| Range {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    /// Min-max normalization; 0.5 when the pool is degenerate.
    fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }
}

/// Min-max statistics of the three rating proxies over a supplier pool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingStats {
    capacity: Range,
    revenue: Range,
    neg_unit_value: Range,
}

fn unit_value(e: &Establishment) -> f64 {
    let cap = e.capacity();
    if cap > 0.0 {
        e.revenue / cap
    } else {
        0.0
    }
}

impl RatingStats {
    pub fn from_pool<'a>(pool: impl Iterator<Item = &'a Establishment> + Clone) -> Self {
        Self {
            capacity: Range::of(pool.clone().map(Establishment::capacity)),
            revenue: Range::of(pool.clone().map(|e| e.revenue)),
            neg_unit_value: Range::of(pool.map(|e| -unit_value(e))),
        }
    }
}

/// Logistic score over normalized capacity, revenue and negated unit value.
pub fn supplier_rating(
    supplier: &Establishment,
    _receiver: &Establishment,
    coefficients: &RatingCoefficients,
    stats: &RatingStats,
) -> f64 {
    let score = coefficients.intercept
        + coefficients.capacity * stats.capacity.normalize(supplier.capacity())
        + coefficients.financial * stats.revenue.normalize(supplier.revenue)
        + coefficients.cost * stats.neg_unit_value.normalize(-unit_value(supplier));
    logistic(score)
}

/// Enumerates admissible pairs, sorted by `(receiver, supplier)`.
///
/// A pair exists when the make-use table admits a commodity from the
/// supplier's sector to the receiver's sector that the supplier produces and
/// the receiver consumes. The rating pool is every establishment with
/// positive production.
pub fn enumerate_pairs(instance: &Instance, options: &PairingOptions) -> Result<Vec<CandidatePair>> {
    let est = &instance.establishments;
    let zones = zone_map(&instance.zones);
    let zone_of = |e: &Establishment| -> Result<&Zone> {
        zones
            .get(e.zone.as_str())
            .copied()
            .ok_or_else(|| Error::Config(format!("establishment {} has unknown zone {}", e.id, e.zone)))
    };

    let admissible = instance.make_use.admissible_index();
    let mut by_receiver_sector: BTreeMap<&str, Vec<(&str, Vec<CommodityId>)>> = BTreeMap::new();
    for ((ss, rs), set) in &admissible {
        by_receiver_sector
            .entry(rs)
            .or_default()
            .push((ss, set.iter().copied().collect()));
    }
    let mut suppliers_by_sector: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in est.iter().enumerate() {
        if e.capacity() > 0.0 {
            suppliers_by_sector.entry(e.sector.as_str()).or_default().push(i);
        }
    }
    let stats = RatingStats::from_pool(est.iter().filter(|e| e.capacity() > 0.0));

    let receivers: Vec<usize> = (0..est.len()).filter(|&r| est[r].demand() > 0.0).collect();
    let pairs_for = |r: usize| -> Result<Vec<CandidatePair>> {
        let receiver = &est[r];
        let rz = zone_of(receiver)?;
        let mut out = Vec::new();
        let Some(sources) = by_receiver_sector.get(receiver.sector.as_str()) else {
            return Ok(out);
        };
        for (ss, admitted) in sources {
            let Some(candidates) = suppliers_by_sector.get(ss) else {
                continue;
            };
            for &s in candidates {
                if s == r {
                    continue;
                }
                let supplier = &est[s];
                let commodities: Vec<CommodityId> = admitted
                    .iter()
                    .copied()
                    .filter(|&c| supplier.produces(c) > 0.0 && receiver.consumes(c) > 0.0)
                    .collect();
                if commodities.is_empty() {
                    continue;
                }
                let cost = shipping_cost(
                    zone_of(supplier)?,
                    rz,
                    instance.intra_zonal_miles,
                    instance.distance_matrix.as_ref(),
                )?;
                out.push(CandidatePair {
                    supplier: s,
                    receiver: r,
                    cost,
                    rating: 0.0,
                    bin: 0,
                    commodities,
                    supplied_tons: 0.0,
                });
            }
        }
        if let Some(m) = options.max_suppliers {
            out.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.supplier.cmp(&b.supplier)));
            out.truncate(m);
        }
        out.sort_by_key(|p| p.supplier);
        out.dedup_by_key(|p| p.supplier);
        for p in &mut out {
            p.rating = supplier_rating(&est[p.supplier], receiver, &instance.rating, &stats);
            p.bin = assign_bin(p.cost, &instance.binning);
        }
        Ok(out)
    };

    #[cfg(feature = "parallel")]
    let per_receiver: Vec<Result<Vec<CandidatePair>>> = {
        use rayon::prelude::*;
        receivers.par_iter().map(|&r| pairs_for(r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_receiver: Vec<Result<Vec<CandidatePair>>> = receivers.iter().map(|&r| pairs_for(r)).collect();

    let mut pairs = Vec::new();
    for chunk in per_receiver {
        pairs.extend(chunk?);
    }
    Ok(pairs)
}
