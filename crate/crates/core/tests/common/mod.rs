//! Shared helpers for integration tests: hand-built instances and a
//! brute-force optimizer for the joint objective that does not use the
//! crate's LP code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use freightmatch::domain::{
    CommodityId, DistanceBinning, Establishment, FlowTarget, MakeUseEntry, MakeUseTable, SolverWeights, Zone,
};
use freightmatch::instance::Instance;
use freightmatch::international::TradeBounds;
use freightmatch::pairing::{CandidatePair, RatingCoefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn zone(id: &str, x: f64, y: f64, internal: bool) -> Zone {
    Zone {
        id: id.into(),
        x,
        y,
        is_internal: internal,
        intra_miles: None,
    }
}

pub fn establishment(id: &str, sector: &str, zone: &str, employment: f64, internal: bool) -> Establishment {
    Establishment {
        id: id.into(),
        sector: sector.into(),
        zone: zone.into(),
        employment,
        revenue: employment * 50_000.0,
        production: BTreeMap::new(),
        consumption: BTreeMap::new(),
        is_internal: internal,
        is_micro: employment < 10.0,
    }
}

pub fn make_use(entries: &[(&str, &str, u8)]) -> MakeUseTable {
    MakeUseTable {
        entries: entries
            .iter()
            .map(|&(s, r, c)| MakeUseEntry {
                supplier_sector: s.into(),
                receiver_sector: r.into(),
                commodity: CommodityId(c),
                share: 1.0,
            })
            .collect(),
    }
}

pub fn flow(o: &str, d: &str, c: u8, tons: f64) -> FlowTarget {
    FlowTarget {
        origin_zone: o.into(),
        dest_zone: d.into(),
        commodity: CommodityId(c),
        tons,
    }
}

pub fn instance(zones: Vec<Zone>, establishments: Vec<Establishment>, make_use: MakeUseTable) -> Instance {
    Instance {
        zones,
        establishments,
        make_use,
        flow_targets: Vec::new(),
        binning: DistanceBinning::single(),
        weights: SolverWeights::default(),
        port_flows: Vec::new(),
        rng_seed: 1,
        micro_threshold: 10.0,
        intra_zonal_miles: 5.0,
        rating: RatingCoefficients::default(),
        trade_bounds: TradeBounds::default(),
        max_suppliers: None,
        distance_matrix: None,
    }
}

/// Number of unknowns the oracle needs for `pairs`: one share per pair and
/// commodity plus one unmet fraction per receiver in scope.
pub fn oracle_dimension(instance: &Instance, pairs: &[CandidatePair]) -> usize {
    pairs.iter().map(|p| p.commodities.len()).sum::<usize>() + scope(instance, pairs).len()
}

/// Random instance with two internal zones, at most six establishments and
/// at most two commodities, with random weights, bin targets and flow
/// targets. Resampled until the oracle dimension is between 3 and 8.
pub fn random_tiny_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let commodities: u8 = rng.gen_range(1..=2);
        let zones = vec![
            zone("A", 0.0, 0.0, true),
            zone("B", rng.gen_range(6.0..40.0), rng.gen_range(0.0..20.0), true),
        ];
        let n_sup = rng.gen_range(1..=2);
        let n_rec = rng.gen_range(1..=3);
        let mut est = Vec::new();
        for k in 0..n_sup + n_rec {
            let supplier = k < n_sup;
            let z = if rng.gen_bool(0.5) { "A" } else { "B" };
            let (id, sector) = if supplier { (format!("S{k}"), "311") } else { (format!("R{k}"), "421") };
            let mut e = establishment(&id, sector, z, rng.gen_range(3.0..40.0), true);
            e.revenue = rng.gen_range(1e5..5e6);
            let first = rng.gen_range(1..=commodities);
            for c in 1..=commodities {
                if c == first || rng.gen_bool(0.4) {
                    let tons = rng.gen_range(10.0..60.0_f64).round();
                    if supplier {
                        e.production.insert(CommodityId(c), tons);
                    } else {
                        e.consumption.insert(CommodityId(c), tons);
                    }
                }
            }
            est.push(e);
        }
        let mu: Vec<(&str, &str, u8)> = (1..=commodities).map(|c| ("311", "421", c)).collect();
        let mut inst = instance(zones, est, make_use(&mu));
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let qs: f64 = q.iter().sum();
        inst.binning = DistanceBinning::new(vec![0.0, 10.0, 30.0, f64::INFINITY], q.iter().map(|v| v / qs).collect());
        for o in ["A", "B"] {
            for d in ["A", "B"] {
                for c in 1..=commodities {
                    if rng.gen_bool(0.6) {
                        inst.flow_targets.push(flow(o, d, c, rng.gen_range(0.0..50.0_f64).round()));
                    }
                }
            }
        }
        inst.weights = SolverWeights {
            w1: rng.gen_range(0.5..2.0),
            w2: rng.gen_range(1e-3..1e-2),
            w3: rng.gen_range(0.0..0.5),
            w4: rng.gen_range(0.0..5.0),
            w5: rng.gen_range(0.0..0.05),
            micro_multiplier: 10.0,
        };
        let pairs = freightmatch::pairing::enumerate_pairs(&inst, &Default::default()).unwrap();
        let dim = oracle_dimension(&inst, &pairs);
        if (3..=8).contains(&dim) {
            return inst;
        }
    }
}

/// Receivers whose demand closure is modeled: internal receivers with
/// demand, plus external receivers that appear in a pair.
pub fn scope(instance: &Instance, pairs: &[CandidatePair]) -> Vec<usize> {
    instance
        .establishments
        .iter()
        .enumerate()
        .filter(|(i, e)| e.demand() > 0.0 && (e.is_internal || pairs.iter().any(|p| p.receiver == *i)))
        .map(|(i, _)| i)
        .collect()
}

/// Minimizes `linear·z + constant + Σ weight·|a·z − target|` subject to
/// `eq` and `le` rows by enumerating every vertex of the arrangement formed
/// by the inequality rows and the breakpoints of the absolute values.
pub struct PiecewiseProgram {
    pub n: usize,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub abs_terms: Vec<(f64, Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
}

impl PiecewiseProgram {
    pub fn value(&self, z: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(z).map(|(a, z)| a * z).sum::<f64>();
        let mut v = self.constant + dot(&self.linear);
        for (w, a, t) in &self.abs_terms {
            v += w * (dot(a) - t).abs();
        }
        v
    }

    fn feasible(&self, z: &[f64]) -> bool {
        let dot = |a: &[f64]| a.iter().zip(z).map(|(a, z)| a * z).sum::<f64>();
        self.eq.iter().all(|(a, b)| (dot(a) - b).abs() <= 1e-7 * (1.0 + b.abs()))
            && self.le.iter().all(|(a, b)| dot(a) <= b + 1e-7 * (1.0 + b.abs()))
    }

    /// Returns the minimum and a minimizer.
    pub fn minimize(&self) -> (f64, Vec<f64>) {
        let mut planes: Vec<(Vec<f64>, f64)> = self.le.clone();
        for (_, a, t) in &self.abs_terms {
            if a.iter().any(|v| *v != 0.0) {
                planes.push((a.clone(), *t));
            }
        }
        let k = self.n - self.eq.len();
        let mut best = (f64::INFINITY, Vec::new());
        let mut chosen = Vec::with_capacity(k);
        self.search(&planes, k, 0, &mut chosen, &mut best);
        assert!(best.0.is_finite(), "no feasible vertex");
        best
    }

    fn search(&self, planes: &[(Vec<f64>, f64)], k: usize, start: usize, chosen: &mut Vec<usize>, best: &mut (f64, Vec<f64>)) {
        if chosen.len() == k {
            let mut rows: Vec<(Vec<f64>, f64)> = self.eq.clone();
            rows.extend(chosen.iter().map(|&i| planes[i].clone()));
            if let Some(z) = solve_square(rows) {
                if self.feasible(&z) {
                    let v = self.value(&z);
                    if v < best.0 {
                        *best = (v, z);
                    }
                }
            }
            return;
        }
        for i in start..planes.len() {
            if planes.len() - i < k - chosen.len() {
                break;
            }
            chosen.push(i);
            self.search(planes, k, i + 1, chosen, best);
            chosen.pop();
        }
    }
}

/// Gaussian elimination with partial pivoting on normalized rows; `None`
/// when singular.
fn solve_square(mut rows: Vec<(Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let n = rows.len();
    for (a, b) in rows.iter_mut() {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        a.iter_mut().for_each(|v| *v /= norm);
        *b /= norm;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| rows[i].0[col].abs().total_cmp(&rows[j].0[col].abs()))?;
        if rows[piv].0[col].abs() < 1e-9 {
            return None;
        }
        rows.swap(col, piv);
        let (head, tail) = rows.split_at_mut(col + 1);
        let (pa, pb) = &head[col];
        for (a, b) in tail.iter_mut() {
            let f = a[col] / pa[col];
            if f != 0.0 {
                for c in col..n {
                    a[c] -= f * pa[c];
                }
                *b -= f * pb;
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let (a, b) = &rows[i];
        let s: f64 = (i + 1..n).map(|c| a[c] * z[c]).sum();
        z[i] = (b - s) / a[i];
    }
    Some(z)
}

/// Brute-force optimum of the joint model.
pub struct JointOracle {
    pub objective: f64,
    /// Unmet fraction per receiver in scope, keyed by establishment index.
    pub unmet: BTreeMap<usize, f64>,
}

/// Builds the joint objective directly from the instance data: per pair
/// and commodity a demand share, per receiver an unmet fraction, with the
/// unmet penalty `w1_r · D_r · Σ_s C_sr`, shipping `w2 · C · D · x`, rating
/// `−w3 · N · x`, bin-share gaps against the targets and tonnage gaps
/// against every flow target.
pub fn joint_oracle(instance: &Instance, pairs: &[CandidatePair], weights: SolverWeights) -> JointOracle {
    let est = &instance.establishments;
    let receivers = scope(instance, pairs);
    let nx: usize = pairs.iter().map(|p| p.commodities.len()).sum();
    let n = nx + receivers.len();
    let u_index = |r: usize| nx + receivers.iter().position(|&q| q == r).unwrap();
    let total_demand: f64 = receivers.iter().map(|&r| est[r].demand()).sum();

    let mut linear = vec![0.0; n];
    let mut eq: Vec<(Vec<f64>, f64)> = receivers
        .iter()
        .map(|&r| {
            let mut a = vec![0.0; n];
            a[u_index(r)] = 1.0;
            (a, 1.0)
        })
        .collect();
    let mut capacity: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut bins = vec![vec![0.0; n]; instance.binning.len()];
    let mut flows: BTreeMap<(String, String, CommodityId), Vec<f64>> = BTreeMap::new();

    let mut col = 0;
    for p in pairs {
        let d = est[p.receiver].demand();
        let k = receivers.iter().position(|&q| q == p.receiver).unwrap();
        for &c in &p.commodities {
            linear[col] = weights.w2 * p.cost * d - weights.w3 * p.rating;
            eq[k].0[col] = 1.0;
            capacity.entry(p.supplier).or_insert_with(|| vec![0.0; n])[col] = d;
            bins[p.bin][col] = d / total_demand;
            let key = (est[p.supplier].zone.clone(), est[p.receiver].zone.clone(), c);
            flows.entry(key).or_insert_with(|| vec![0.0; n])[col] = d;
            col += 1;
        }
    }
    for &r in &receivers {
        let cost_sum: f64 = pairs.iter().filter(|p| p.receiver == r).map(|p| p.cost).sum();
        linear[u_index(r)] = weights.unmet_weight(est[r].is_micro) * est[r].demand() * cost_sum;
    }

    let mut le = Vec::new();
    for i in 0..n {
        let mut up = vec![0.0; n];
        up[i] = 1.0;
        le.push((up, 1.0));
        let mut lo = vec![0.0; n];
        lo[i] = -1.0;
        le.push((lo, 0.0));
    }
    for (s, a) in capacity {
        le.push((a, est[s].capacity()));
    }

    let mut abs_terms = Vec::new();
    for (b, a) in bins.into_iter().enumerate() {
        abs_terms.push((weights.w4, a, instance.binning.targets[b]));
    }
    let mut targets: BTreeMap<(String, String, CommodityId), f64> = BTreeMap::new();
    for f in &instance.flow_targets {
        *targets.entry((f.origin_zone.clone(), f.dest_zone.clone(), f.commodity)).or_insert(0.0) += f.tons;
    }
    for key in targets.keys() {
        flows.entry(key.clone()).or_insert_with(|| vec![0.0; n]);
    }
    for (key, a) in flows {
        abs_terms.push((weights.w5, a, targets.get(&key).copied().unwrap_or(0.0)));
    }

    let program = PiecewiseProgram {
        n,
        linear,
        constant: 0.0,
        abs_terms,
        eq,
        le,
    };
    let (objective, z) = program.minimize();
    JointOracle {
        objective,
        unmet: receivers.iter().map(|&r| (r, z[u_index(r)])).collect(),
    }
}
