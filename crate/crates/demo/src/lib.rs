//! Browser demo: solve a small synthetic region and explore the
//! import/export allocation heuristic. Every export takes and returns JSON.

use std::collections::BTreeMap;

use freightmatch::decompose::{run_decomposition, run_joint, DecompositionOptions};
use freightmatch::domain::{CommodityId, DistanceBinning, Establishment, MakeUseTable, PortFlow, SolverWeights, TradeType, Zone};
use freightmatch::instance::{synthesize_instance, Instance, SynthesisConfig};
use freightmatch::international::{generate_international_shipments, TradeBounds};
use freightmatch::lp::BundledSimplex;
use freightmatch::pairing::{enumerate_pairs, PairingOptions, RatingCoefficients};
use freightmatch::report::distance_distribution;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
#[serde(default)]
pub struct RegionParams {
    pub seed: u64,
    pub zones: usize,
    pub external_zones: usize,
    pub establishments_per_zone: usize,
    pub commodities: u8,
    pub capacity_ratio: f64,
    pub w4: f64,
    pub w5: f64,
    /// "joint" or "decomposed".
    pub mode: String,
}

impl Default for RegionParams {
    fn default() -> Self {
        let w = SolverWeights::default();
        Self {
            seed: 1,
            zones: 4,
            external_zones: 2,
            establishments_per_zone: 6,
            commodities: 3,
            capacity_ratio: 1.5,
            w4: w.w4,
            w5: w.w5,
            mode: "decomposed".into(),
        }
    }
}

#[derive(Serialize)]
struct ZoneFlow {
    from: String,
    to: String,
    tons: f64,
}

/// Synthesizes a region, solves it and returns the distance distribution
/// against its targets, zone-to-zone tonnage and the objective terms.
pub fn solve_region_value(params: &RegionParams) -> Result<Value, String> {
    let cfg = SynthesisConfig {
        n_internal_zones: params.zones,
        n_external_zones: params.external_zones,
        establishments_per_zone: params.establishments_per_zone,
        commodity_count: params.commodities,
        capacity_ratio: params.capacity_ratio,
        rng_seed: params.seed,
        ..SynthesisConfig::default()
    };
    let mut inst = synthesize_instance(&cfg).map_err(|e| e.to_string())?;
    if !(params.w4 >= 0.0 && params.w5 >= 0.0) {
        return Err("weights must be nonnegative".into());
    }
    inst.weights.w4 = params.w4;
    inst.weights.w5 = params.w5;
    let all = enumerate_pairs(&inst, &PairingOptions::default()).map_err(|e| e.to_string())?;
    let backend = BundledSimplex::default();
    let (pairs, a, phases) = match params.mode.as_str() {
        "joint" => {
            let (p, a) = run_joint(&inst, &all, &backend).map_err(|e| e.to_string())?;
            (p, a, Vec::new())
        }
        "decomposed" => {
            let d = run_decomposition(&inst, &all, &backend, DecompositionOptions::default()).map_err(|e| e.to_string())?;
            let names: Vec<&str> = d.phases.iter().map(|p| p.name).collect();
            (d.pairs, d.assignment, names)
        }
        other => return Err(format!("unknown mode `{other}`")),
    };

    let mut flows: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let t = a.tons(&inst, &pairs, i);
        if t > 1e-9 {
            let e = &inst.establishments;
            *flows.entry((e[p.supplier].zone.as_str(), e[p.receiver].zone.as_str())).or_insert(0.0) += t;
        }
    }
    let flows: Vec<ZoneFlow> = flows
        .into_iter()
        .map(|((f, t), tons)| ZoneFlow {
            from: f.into(),
            to: t.into(),
            tons,
        })
        .collect();
    let demand: f64 = a.receivers.iter().map(|&r| inst.establishments[r].demand()).sum();
    let unmet: f64 = a.receivers.iter().zip(&a.unmet).map(|(&r, u)| inst.establishments[r].demand() * u).sum();

    Ok(json!({
        "establishments": inst.establishments.len(),
        "pairs": pairs.len(),
        "zones": inst.zones,
        "flows": flows,
        "distance": distance_distribution(&inst, &pairs, &a),
        "bin_gap": a.total_bin_gap(),
        "flow_gap_tons": a.total_flow_gap(),
        "demand_tons": demand,
        "unmet_tons": unmet,
        "objective": a.breakdown,
        "phases": phases,
    }))
}

#[derive(Deserialize)]
#[serde(default)]
pub struct TradeParams {
    /// Consumption share of each importing sector in the port's zone.
    pub shares: Vec<f64>,
    pub tons: f64,
    pub lb: f64,
    pub ub: f64,
    pub seed: u64,
}

impl Default for TradeParams {
    fn default() -> Self {
        Self {
            shares: vec![0.7, 0.3],
            tons: 10_000.0,
            lb: 20.0,
            ub: 40.0,
            seed: 42,
        }
    }
}

/// One zone whose importing sectors consume in the given proportions, each
/// represented by a single large establishment.
fn trade_instance(p: &TradeParams) -> Instance {
    let establishments = p
        .shares
        .iter()
        .enumerate()
        .map(|(k, &share)| Establishment {
            id: format!("IMP{}", k + 1),
            sector: format!("{}", 421 + k),
            zone: "Z".into(),
            employment: 500.0,
            revenue: 1e8,
            production: BTreeMap::new(),
            consumption: BTreeMap::from([(CommodityId(1), share)]),
            is_internal: true,
            is_micro: false,
        })
        .collect();
    Instance {
        zones: vec![Zone {
            id: "Z".into(),
            x: 0.0,
            y: 0.0,
            is_internal: true,
            intra_miles: None,
        }],
        establishments,
        make_use: MakeUseTable::default(),
        flow_targets: Vec::new(),
        binning: DistanceBinning::single(),
        weights: SolverWeights::default(),
        port_flows: vec![PortFlow {
            port: "PORT".into(),
            trade_type: TradeType::Import,
            commodity: CommodityId(1),
            zone: "Z".into(),
            tons: p.tons,
        }],
        rng_seed: p.seed,
        micro_threshold: 10.0,
        intra_zonal_miles: 5.0,
        rating: RatingCoefficients::default(),
        trade_bounds: TradeBounds::default(),
        max_suppliers: None,
        distance_matrix: None,
    }
}

/// Allocates one import flow across sectors and reports target against
/// realized shares plus a histogram of shipment sizes.
pub fn trade_split_value(params: &TradeParams) -> Result<Value, String> {
    if params.shares.is_empty() || params.shares.iter().any(|s| !(*s > 0.0)) {
        return Err("every sector share must be positive".into());
    }
    if !(params.tons > 0.0 && params.tons <= 1e7) {
        return Err("tonnage must be positive and at most 10,000,000".into());
    }
    let inst = trade_instance(params);
    let bounds = TradeBounds {
        lb: params.lb,
        ub: params.ub,
        size_threshold: 100.0,
    };
    let shipments = generate_international_shipments(&inst, &[TradeType::Import], &bounds, params.seed).map_err(|e| e.to_string())?;

    let share_sum: f64 = params.shares.iter().sum();
    let total: f64 = shipments.iter().map(|s| s.tons()).sum();
    let sectors: Vec<Value> = inst
        .establishments
        .iter()
        .zip(&params.shares)
        .map(|(e, share)| {
            let tons: f64 = shipments.iter().filter(|s| s.sector == e.sector).map(|s| s.tons()).sum();
            let count = shipments.iter().filter(|s| s.sector == e.sector).count();
            json!({
                "sector": e.sector,
                "target_share": share / share_sum,
                "realized_share": tons / total,
                "tons": tons,
                "shipments": count,
            })
        })
        .collect();

    let bins = 10;
    let width = (params.ub - params.lb).max(1e-9) / bins as f64;
    let mut histogram = vec![0usize; bins];
    for s in &shipments {
        let k = (((s.tons() - params.lb) / width).floor().max(0.0) as usize).min(bins - 1);
        histogram[k] += 1;
    }
    Ok(json!({
        "total_tons": total,
        "shipments": shipments.len(),
        "sectors": sectors,
        "histogram": {"lower": params.lb, "width": width, "counts": histogram},
    }))
}

fn call<P: for<'de> Deserialize<'de>>(input: &str, f: impl Fn(&P) -> Result<Value, String>) -> Result<String, JsValue> {
    let params: P = serde_json::from_str(input).map_err(|e| JsValue::from_str(&format!("bad parameters: {e}")))?;
    f(&params).map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve_region(params_json: &str) -> Result<String, JsValue> {
    call(params_json, solve_region_value)
}

#[wasm_bindgen]
pub fn trade_split(params_json: &str) -> Result<String, JsValue> {
    call(params_json, trade_split_value)
}
