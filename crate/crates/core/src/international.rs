//! Allocation of port-level import and export tonnage to large domestic
//! establishments.
//!
//! Tonnage is tracked in whole micrograms-of-a-ton (1e-6 t) so that the
//! shipments of a port flow add back to the flow exactly.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{CommodityId, Establishment, TradeType};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Fixed-point units per ton.
pub const UNITS_PER_TON: f64 = 1e6;

pub fn to_units(tons: f64) -> i64 {
    (tons * UNITS_PER_TON).round() as i64
}

pub fn from_units(units: i64) -> f64 {
    units as f64 / UNITS_PER_TON
}

/// Soft annual trade-volume bounds and the importer/exporter size cut.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeBounds {
    /// Tons per year; one full truckload once a year.
    pub lb: f64,
    /// Tons per year; four full truckloads a day.
    pub ub: f64,
    /// Minimum employment of an importer or exporter.
    pub size_threshold: f64,
}

impl Default for TradeBounds {
    fn default() -> Self {
        Self {
            lb: 25.0,
            ub: 4.0 * 25.0 * 365.0,
            size_threshold: 100.0,
        }
    }
}

impl TradeBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.lb > 0.0 && self.lb <= self.ub && self.ub.is_finite()) {
            return Err(Error::Config(format!(
                "trade bounds need 0 < lb <= ub < inf, got lb={} ub={}",
                self.lb, self.ub
            )));
        }
        if !(self.size_threshold >= 0.0) {
            return Err(Error::Config("size threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InternationalShipment {
    pub supplier: String,
    pub receiver: String,
    pub commodity: CommodityId,
    /// Fixed-point tonnage, see [`UNITS_PER_TON`].
    pub units: i64,
    pub trade_type: TradeType,
    pub port: String,
    /// Sector of the domestic establishment.
    pub sector: String,
}

impl InternationalShipment {
    pub fn tons(&self) -> f64 {
        from_units(self.units)
    }

    /// The domestic end of the shipment.
    pub fn establishment(&self) -> &str {
        match self.trade_type {
            TradeType::Import => &self.receiver,
            TradeType::Export => &self.supplier,
        }
    }
}

/// Establishments at or above the employment threshold. Nothing is removed
/// for exceeding the trade bounds.
pub fn filter_importers_exporters(establishments: &[Establishment], size_threshold: f64) -> Vec<usize> {
    establishments
        .iter()
        .enumerate()
        .filter(|(_, e)| e.employment >= size_threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Per zone and commodity: tonnage by sector.
type ShareDict<'a> = BTreeMap<(&'a str, CommodityId), BTreeMap<&'a str, f64>>;

fn share_dicts(establishments: &[Establishment]) -> (ShareDict<'_>, ShareDict<'_>) {
    let mut production: ShareDict = BTreeMap::new();
    let mut consumption: ShareDict = BTreeMap::new();
    for e in establishments.iter().filter(|e| e.is_internal) {
        for (&c, &t) in &e.production {
            if t > 0.0 {
                *production.entry((&e.zone, c)).or_default().entry(&e.sector).or_default() += t;
            }
        }
        for (&c, &t) in &e.consumption {
            if t > 0.0 {
                *consumption.entry((&e.zone, c)).or_default().entry(&e.sector).or_default() += t;
            }
        }
    }
    (production, consumption)
}

/// Runs the heuristic for the given trade types, in order, on one seeded
/// random stream.
///
/// Port flows are visited by trade type, then commodity, then input order.
/// Each draw picks a sector by the zone's production (export) or
/// consumption (import) shares of the commodity, restricted to sectors
/// with at least one qualifying establishment in the zone, then an
/// establishment of that sector uniformly, then a volume in `[lb, ub]`.
pub fn generate_international_shipments(
    instance: &Instance,
    trade_types: &[TradeType],
    bounds: &TradeBounds,
    seed: u64,
) -> Result<Vec<InternationalShipment>> {
    bounds.validate()?;
    let est = &instance.establishments;
    let (production, consumption) = share_dicts(est);
    let large: Vec<usize> = filter_importers_exporters(est, bounds.size_threshold)
        .into_iter()
        .filter(|&i| est[i].is_internal)
        .collect();
    let mut by_zone_sector: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for &i in &large {
        by_zone_sector
            .entry((est[i].zone.as_str(), est[i].sector.as_str()))
            .or_default()
            .push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lb = to_units(bounds.lb);
    let ub = to_units(bounds.ub);
    let mut out = Vec::new();

    for &trade in trade_types {
        let dict = match trade {
            TradeType::Export => &production,
            TradeType::Import => &consumption,
        };
        let mut flows: Vec<_> = instance
            .port_flows
            .iter()
            .filter(|f| f.trade_type == trade)
            .collect();
        flows.sort_by_key(|f| f.commodity);

        for flow in flows {
            let mut remaining = to_units(flow.tons);
            if remaining <= 0 {
                continue;
            }
            let no_candidate = || Error::NoTradeCandidate {
                zone: flow.zone.clone(),
                commodity: flow.commodity.0,
            };
            let shares = dict.get(&(flow.zone.as_str(), flow.commodity)).ok_or_else(no_candidate)?;
            let sectors: Vec<(&str, f64, &Vec<usize>)> = shares
                .iter()
                .filter_map(|(&sector, &w)| {
                    by_zone_sector
                        .get(&(flow.zone.as_str(), sector))
                        .map(|members| (sector, w, members))
                })
                .collect();
            if sectors.is_empty() {
                return Err(no_candidate());
            }
            let pick_sector = WeightedIndex::new(sectors.iter().map(|s| s.1))
                .map_err(|e| Error::Numerical(format!("sector shares: {e}")))?;

            while remaining > 0 {
                let (sector, _, members) = sectors[pick_sector.sample(&mut rng)];
                let chosen = &est[members[rng.gen_range(0..members.len())]];
                let draw = rng.gen_range(lb..=ub);
                let units = remaining.min(draw);
                let (supplier, receiver) = match trade {
                    TradeType::Export => (chosen.id.clone(), flow.port.clone()),
                    TradeType::Import => (flow.port.clone(), chosen.id.clone()),
                };
                out.push(InternationalShipment {
                    supplier,
                    receiver,
                    commodity: flow.commodity,
                    units,
                    trade_type: trade,
                    port: flow.port.clone(),
                    sector: sector.to_string(),
                });
                remaining -= units;
            }
        }
    }
    Ok(out)
}

/// Writes `international_shipments.csv`.
pub fn write_shipments<W: Write>(shipments: &[InternationalShipment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["supplier", "receiver", "commodity", "tons", "trade_type", "port"])?;
    for s in shipments {
        w.write_record([
            s.supplier.as_str(),
            s.receiver.as_str(),
            &s.commodity.0.to_string(),
            &format!("{:.6}", s.tons()),
            s.trade_type.as_str(),
            s.port.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sums shipment units per (port, commodity, trade type).
pub fn totals_by_flow(shipments: &[InternationalShipment]) -> BTreeMap<(String, CommodityId, TradeType), i64> {
    let mut totals = BTreeMap::new();
    for s in shipments {
        *totals
            .entry((s.port.clone(), s.commodity, s.trade_type))
            .or_insert(0) += s.units;
    }
    totals
}
