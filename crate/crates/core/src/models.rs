//! The three assignment LPs: joint supplier selection with commodity
//! choice, supplier selection alone, and commodity assignment over fixed
//! pair tonnages.
//!
//! Every builder works on a [`Problem`], which fixes the receivers in scope
//! and the supplier capacities still available. Extraction returns an
//! [`AssignmentSet`] whose gaps and objective terms are recomputed from the
//! primal values rather than copied from the solver.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::domain::{CommodityId, SolverWeights};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp::{add_abs_gap, LinExpr, LpModel, LpSolution, Relation, VarId};
use crate::pairing::CandidatePair;

/// Origin zone, destination zone, commodity.
pub type FlowKey = (String, String, CommodityId);

/// Inputs shared by the builders.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub instance: &'a Instance,
    pub pairs: &'a [CandidatePair],
    /// Establishment indices of the receivers whose demand closure is
    /// modeled, ascending. Their summed demand normalizes the bin shares.
    pub receivers: Vec<usize>,
    /// Available capacity per establishment.
    pub capacity: Vec<f64>,
    /// Demand per establishment.
    pub demand: Vec<f64>,
    /// Tons already placed in each distance bin by an earlier solve.
    pub bin_base: Vec<f64>,
    /// Denominator of the bin shares; defaults to the receivers' demand.
    pub bin_total: Option<f64>,
    pub weights: SolverWeights,
}

impl<'a> Problem<'a> {
    /// Regional scope: every internal receiver plus every external receiver
    /// that has a candidate supplier in `pairs`.
    pub fn new(instance: &'a Instance, pairs: &'a [CandidatePair], weights: SolverWeights) -> Self {
        let mut in_pairs = vec![false; instance.establishments.len()];
        for p in pairs {
            in_pairs[p.receiver] = true;
        }
        let receivers = instance
            .establishments
            .iter()
            .enumerate()
            .filter(|(i, e)| e.demand() > 0.0 && (e.is_internal || in_pairs[*i]))
            .map(|(i, _)| i)
            .collect();
        Self::with_receivers(instance, pairs, weights, receivers)
    }

    pub fn with_receivers(
        instance: &'a Instance,
        pairs: &'a [CandidatePair],
        weights: SolverWeights,
        receivers: Vec<usize>,
    ) -> Self {
        Self {
            instance,
            pairs,
            receivers,
            capacity: instance.establishments.iter().map(|e| e.capacity()).collect(),
            demand: instance.establishments.iter().map(|e| e.demand()).collect(),
            bin_base: vec![0.0; instance.binning.len()],
            bin_total: None,
            weights,
        }
    }

    fn demand(&self, r: usize) -> f64 {
        self.demand[r]
    }

    fn total_demand(&self) -> f64 {
        self.receivers.iter().map(|&r| self.demand(r)).sum()
    }

    fn bin_denominator(&self) -> f64 {
        self.bin_total.unwrap_or_else(|| self.total_demand())
    }

    /// Objective coefficient of a receiver's unmet fraction: the unmet
    /// weight times demand times the summed cost of its candidate suppliers.
    fn unmet_coefficients(&self) -> Vec<f64> {
        let mut cost_sum = vec![0.0; self.instance.establishments.len()];
        for p in self.pairs {
            cost_sum[p.receiver] += p.cost;
        }
        self.receivers
            .iter()
            .map(|&r| {
                let micro = self.instance.establishments[r].is_micro;
                self.weights.unmet_weight(micro) * self.demand[r] * cost_sum[r]
            })
            .collect()
    }

    fn receiver_slots(&self) -> Result<Vec<Option<usize>>> {
        let mut slot = vec![None; self.instance.establishments.len()];
        for (k, &r) in self.receivers.iter().enumerate() {
            slot[r] = Some(k);
        }
        for p in self.pairs {
            if slot[p.receiver].is_none() {
                return Err(Error::Model(format!(
                    "pair receiver {} is outside the modeled receivers",
                    self.instance.establishments[p.receiver].id
                )));
            }
        }
        Ok(slot)
    }

    fn flow_key(&self, pair: &CandidatePair, c: CommodityId) -> FlowKey {
        let e = &self.instance.establishments;
        (e[pair.supplier].zone.clone(), e[pair.receiver].zone.clone(), c)
    }

    fn flow_targets(&self) -> BTreeMap<FlowKey, f64> {
        let mut t = BTreeMap::new();
        for f in &self.instance.flow_targets {
            *t.entry((f.origin_zone.clone(), f.dest_zone.clone(), f.commodity))
                .or_insert(0.0) += f.tons;
        }
        t
    }
}

/// Weighted objective terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ObjectiveBreakdown {
    pub unmet: f64,
    pub shipping: f64,
    /// Negative: rating is rewarded.
    pub rating: f64,
    pub bin_gap: f64,
    pub flow_gap: f64,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.unmet + self.shipping + self.rating + self.bin_gap + self.flow_gap
    }

    /// Total without the flow-gap term, the supplier-selection objective.
    pub fn selection_total(&self) -> f64 {
        self.unmet + self.shipping + self.rating + self.bin_gap
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowGap {
    pub origin_zone: String,
    pub dest_zone: String,
    pub commodity: CommodityId,
    pub modeled: f64,
    pub target: f64,
    pub gap: f64,
}

/// A solved assignment over a pair list.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssignmentSet {
    /// Fraction of the receiver's demand met by each pair.
    pub x: Vec<f64>,
    /// Per pair, the share of each admissible commodity, aligned with
    /// `CandidatePair::commodities`.
    pub split: Vec<Vec<f64>>,
    /// Establishment indices of the modeled receivers.
    pub receivers: Vec<usize>,
    /// Unmet fraction per modeled receiver.
    pub unmet: Vec<f64>,
    /// `|modeled share - target share|` per distance bin.
    pub bin_gaps: Vec<f64>,
    pub flow_gaps: Vec<FlowGap>,
    pub breakdown: ObjectiveBreakdown,
    /// Objective reported by the solver, when there was a single solve.
    pub solver_objective: Option<f64>,
}

impl AssignmentSet {
    /// Tons met by pair `i`.
    pub fn tons(&self, instance: &Instance, pairs: &[CandidatePair], i: usize) -> f64 {
        instance.establishments[pairs[i].receiver].demand() * self.x[i]
    }

    pub fn total_bin_gap(&self) -> f64 {
        self.bin_gaps.iter().sum()
    }

    pub fn total_flow_gap(&self) -> f64 {
        self.flow_gaps.iter().map(|f| f.gap).sum()
    }

    /// Largest `|sum_s x_sr + u_r - 1|` over modeled receivers.
    pub fn max_closure_error(&self, pairs: &[CandidatePair]) -> f64 {
        let mut met: BTreeMap<usize, f64> = self.receivers.iter().map(|&r| (r, 0.0)).collect();
        for (p, x) in pairs.iter().zip(&self.x) {
            *met.entry(p.receiver).or_insert(0.0) += x;
        }
        self.receivers
            .iter()
            .zip(&self.unmet)
            .map(|(r, u)| (met[r] + u - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `sum_r D_r x_sr - K_s` over suppliers (positive means a breach).
    pub fn max_capacity_excess(&self, instance: &Instance, pairs: &[CandidatePair], capacity: &[f64]) -> f64 {
        let mut used = vec![0.0; capacity.len()];
        for (i, p) in pairs.iter().enumerate() {
            used[p.supplier] += self.tons(instance, pairs, i);
        }
        used.iter()
            .zip(capacity)
            .filter(|(u, _)| **u > 0.0)
            .map(|(u, k)| u - k)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    /// Largest `|sum_o c_sro - 1|` over pairs carrying flow.
    pub fn max_split_error(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.split)
            .filter(|(x, _)| **x > 1e-9)
            .map(|(_, s)| (s.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Recomputes gaps and every weighted term from primal values.
pub fn evaluate(problem: &Problem, x: &[f64], split: &[Vec<f64>], unmet: &[f64]) -> (Vec<f64>, Vec<FlowGap>, ObjectiveBreakdown) {
    let w = problem.weights;
    let mut b = ObjectiveBreakdown::default();
    for (coef, u) in problem.unmet_coefficients().iter().zip(unmet) {
        b.unmet += coef * u;
    }
    let binning = &problem.instance.binning;
    let mut bin_tons = problem.bin_base.clone();
    let mut flows: BTreeMap<FlowKey, f64> = BTreeMap::new();
    for (i, p) in problem.pairs.iter().enumerate() {
        let d = problem.demand(p.receiver);
        b.shipping += w.w2 * p.cost * d * x[i];
        b.rating -= w.w3 * p.rating * x[i];
        bin_tons[p.bin] += d * x[i];
        for (k, &c) in p.commodities.iter().enumerate() {
            *flows.entry(problem.flow_key(p, c)).or_insert(0.0) += d * x[i] * split[i][k];
        }
    }
    let total = problem.bin_denominator();
    let bin_gaps: Vec<f64> = bin_tons
        .iter()
        .zip(&binning.targets)
        .map(|(t, q)| (if total > 0.0 { t / total } else { 0.0 } - q).abs())
        .collect();
    b.bin_gap = w.w4 * bin_gaps.iter().sum::<f64>();

    let targets = problem.flow_targets();
    for k in targets.keys() {
        flows.entry(k.clone()).or_insert(0.0);
    }
    let flow_gaps: Vec<FlowGap> = flows
        .into_iter()
        .map(|((o, d, c), modeled)| {
            let target = targets.get(&(o.clone(), d.clone(), c)).copied().unwrap_or(0.0);
            FlowGap {
                origin_zone: o,
                dest_zone: d,
                commodity: c,
                modeled,
                target,
                gap: (modeled - target).abs(),
            }
        })
        .collect();
    b.flow_gap = w.w5 * flow_gaps.iter().map(|f| f.gap).sum::<f64>();
    (bin_gaps, flow_gaps, b)
}

/// Builds an [`AssignmentSet`] from primal values.
pub fn assemble(problem: &Problem, x: Vec<f64>, split: Vec<Vec<f64>>, unmet: Vec<f64>, solver_objective: Option<f64>) -> AssignmentSet {
    let (bin_gaps, flow_gaps, breakdown) = evaluate(problem, &x, &split, &unmet);
    AssignmentSet {
        x,
        split,
        receivers: problem.receivers.clone(),
        unmet,
        bin_gaps,
        flow_gaps,
        breakdown,
        solver_objective,
    }
}

/// Commodity shares of a pair proportional to the receiver's consumption
/// of its admissible commodities.
pub fn consumption_split(instance: &Instance, pair: &CandidatePair) -> Vec<f64> {
    let r = &instance.establishments[pair.receiver];
    let weights: Vec<f64> = pair.commodities.iter().map(|&c| r.consumes(c)).collect();
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        weights.iter().map(|w| w / sum).collect()
    } else {
        vec![1.0 / pair.commodities.len() as f64; pair.commodities.len()]
    }
}

fn require_optimal(solution: &LpSolution, what: &'static str) -> Result<()> {
    if solution.is_optimal() {
        Ok(())
    } else {
        Err(Error::Subproblem {
            subproblem: what,
            status: solution.status.to_string(),
        })
    }
}

/// Variables common to the joint and supplier-selection models.
struct Skeleton {
    lp: LpModel,
    unmet: Vec<VarId>,
    closure: Vec<LinExpr>,
    capacity: BTreeMap<usize, LinExpr>,
    bins: Vec<LinExpr>,
}

impl Skeleton {
    fn new(problem: &Problem) -> Self {
        let mut lp = LpModel::new();
        let total = problem.bin_denominator();
        let bins = problem
            .bin_base
            .iter()
            .map(|&t| LinExpr::constant(if total > 0.0 { t / total } else { 0.0 }))
            .collect();
        let coefs = problem.unmet_coefficients();
        let mut unmet = Vec::with_capacity(problem.receivers.len());
        let mut closure = Vec::with_capacity(problem.receivers.len());
        for (k, &r) in problem.receivers.iter().enumerate() {
            let u = lp.add_var(format!("u_{}", problem.instance.establishments[r].id), 0.0, 1.0);
            lp.set_cost(u, coefs[k]);
            unmet.push(u);
            let mut e = LinExpr::new();
            e.add(u, 1.0);
            closure.push(e);
        }
        Self {
            lp,
            unmet,
            closure,
            capacity: BTreeMap::new(),
            bins,
        }
    }

    /// Registers a variable carrying fraction `x` of pair `p`'s receiver
    /// demand.
    fn add_share(&mut self, problem: &Problem, slot: &[Option<usize>], p: &CandidatePair, var: VarId) {
        let w = problem.weights;
        let d = problem.demand(p.receiver);
        let total = problem.bin_denominator();
        self.lp.add_cost(var, w.w2 * p.cost * d - w.w3 * p.rating);
        self.closure[slot[p.receiver].expect("checked by receiver_slots")].add(var, 1.0);
        self.capacity.entry(p.supplier).or_default().add(var, d);
        if total > 0.0 {
            self.bins[p.bin].add(var, d / total);
        }
    }

    fn finish(mut self, problem: &Problem) -> (LpModel, Vec<VarId>) {
        let est = &problem.instance.establishments;
        for (k, e) in self.closure.iter().enumerate() {
            let name = format!("closure_{}", est[problem.receivers[k]].id);
            self.lp.add_expr_constraint(name, e, Relation::Eq, 1.0);
        }
        for (s, e) in &self.capacity {
            self.lp
                .add_expr_constraint(format!("capacity_{}", est[*s].id), e, Relation::Le, problem.capacity[*s].max(0.0));
        }
        let mut gaps = Vec::new();
        for (b, expr) in self.bins.iter().enumerate() {
            let g = self.lp.add_var(format!("bin_gap_{b}"), 0.0, f64::INFINITY);
            self.lp.set_cost(g, problem.weights.w4);
            add_abs_gap(&mut self.lp, expr, problem.instance.binning.targets[b], g);
            gaps.push(g);
        }
        (self.lp, gaps)
    }
}

/// Supplier selection with per-commodity flow variables and inter-zonal
/// flow gaps.
#[derive(Clone, Debug)]
pub struct JointModel {
    pub lp: LpModel,
    unmet: Vec<VarId>,
    /// Per pair, one variable per admissible commodity.
    flows: Vec<Vec<VarId>>,
}

pub fn build_joint_model(problem: &Problem) -> Result<JointModel> {
    let slot = problem.receiver_slots()?;
    let mut sk = Skeleton::new(problem);
    let mut flow_exprs: BTreeMap<FlowKey, LinExpr> = BTreeMap::new();
    let est = &problem.instance.establishments;
    let mut flows = Vec::with_capacity(problem.pairs.len());
    for p in problem.pairs {
        if p.commodities.is_empty() {
            return Err(Error::Model(format!(
                "pair {} -> {} has no admissible commodity",
                est[p.supplier].id, est[p.receiver].id
            )));
        }
        let d = problem.demand(p.receiver);
        let mut vars = Vec::with_capacity(p.commodities.len());
        for &c in &p.commodities {
            let v = sk.lp.add_var(format!("x_{}_{}_{}", est[p.supplier].id, est[p.receiver].id, c.0), 0.0, 1.0);
            sk.add_share(problem, &slot, p, v);
            flow_exprs.entry(problem.flow_key(p, c)).or_default().add(v, d);
            vars.push(v);
        }
        flows.push(vars);
    }
    let unmet = sk.unmet.clone();
    let (mut lp, _) = sk.finish(problem);
    add_flow_gaps(&mut lp, problem, flow_exprs);
    Ok(JointModel { lp, unmet, flows })
}

/// Adds one gap variable per flow key, with targets for keys that have no
/// variables folded into the objective constant.
fn add_flow_gaps(lp: &mut LpModel, problem: &Problem, mut exprs: BTreeMap<FlowKey, LinExpr>) {
    let targets = problem.flow_targets();
    for k in targets.keys() {
        exprs.entry(k.clone()).or_default();
    }
    let w5 = problem.weights.w5;
    for (key, expr) in exprs {
        let target = targets.get(&key).copied().unwrap_or(0.0);
        if expr.terms.is_empty() {
            lp.objective_constant += w5 * (expr.constant - target).abs();
            continue;
        }
        let y = lp.add_var(format!("flow_gap_{}_{}_{}", key.0, key.1, key.2 .0), 0.0, f64::INFINITY);
        lp.set_cost(y, w5);
        add_abs_gap(lp, &expr, target, y);
    }
}

impl JointModel {
    pub fn extract(&self, problem: &Problem, solution: &LpSolution) -> Result<AssignmentSet> {
        require_optimal(solution, "joint")?;
        let mut x = Vec::with_capacity(self.flows.len());
        let mut split = Vec::with_capacity(self.flows.len());
        for (p, vars) in problem.pairs.iter().zip(&self.flows) {
            let parts: Vec<f64> = vars.iter().map(|&v| solution.value(v).max(0.0)).collect();
            let sum: f64 = parts.iter().sum();
            x.push(sum);
            split.push(if sum > 0.0 {
                parts.iter().map(|t| t / sum).collect()
            } else {
                consumption_split(problem.instance, p)
            });
        }
        let unmet = self.unmet.iter().map(|&u| solution.value(u)).collect();
        Ok(assemble(problem, x, split, unmet, Some(solution.objective_value)))
    }
}

/// Supplier selection with one variable per pair.
#[derive(Clone, Debug)]
pub struct SelectionModel {
    pub lp: LpModel,
    unmet: Vec<VarId>,
    x: Vec<VarId>,
}

pub fn build_supplier_selection_model(problem: &Problem) -> Result<SelectionModel> {
    let slot = problem.receiver_slots()?;
    let mut sk = Skeleton::new(problem);
    let est = &problem.instance.establishments;
    let mut x = Vec::with_capacity(problem.pairs.len());
    for p in problem.pairs {
        let v = sk.lp.add_var(format!("x_{}_{}", est[p.supplier].id, est[p.receiver].id), 0.0, 1.0);
        sk.add_share(problem, &slot, p, v);
        x.push(v);
    }
    let unmet = sk.unmet.clone();
    let (lp, _) = sk.finish(problem);
    Ok(SelectionModel { lp, unmet, x })
}

impl SelectionModel {
    /// Commodity shares default to the receiver's consumption mix until the
    /// commodity assignment runs.
    pub fn extract(&self, problem: &Problem, solution: &LpSolution) -> Result<AssignmentSet> {
        require_optimal(solution, "supplier selection")?;
        let x: Vec<f64> = self.x.iter().map(|&v| solution.value(v).max(0.0)).collect();
        let split = problem.pairs.iter().map(|p| consumption_split(problem.instance, p)).collect();
        let unmet = self.unmet.iter().map(|&u| solution.value(u)).collect();
        Ok(assemble(problem, x, split, unmet, Some(solution.objective_value)))
    }
}

/// Commodity split of fixed pair tonnages minimizing inter-zonal flow gaps.
#[derive(Clone, Debug)]
pub struct CommodityModel {
    pub lp: LpModel,
    /// Per pair, its share variables; `None` when the split is fixed
    /// (single commodity or no tonnage).
    shares: Vec<Option<Vec<VarId>>>,
}

/// `tons[i]` is the tonnage fixed on pair `i` by supplier selection.
pub fn build_commodity_assignment_model(problem: &Problem, tons: &[f64]) -> Result<CommodityModel> {
    let est = &problem.instance.establishments;
    let mut lp = LpModel::new();
    let mut exprs: BTreeMap<FlowKey, LinExpr> = BTreeMap::new();
    let mut shares = Vec::with_capacity(problem.pairs.len());
    for (p, &w) in problem.pairs.iter().zip(tons) {
        if p.commodities.is_empty() {
            return Err(Error::Model(format!(
                "pair {} -> {} has no admissible commodity",
                est[p.supplier].id, est[p.receiver].id
            )));
        }
        if w <= 0.0 {
            shares.push(None);
            continue;
        }
        if p.commodities.len() == 1 {
            exprs.entry(problem.flow_key(p, p.commodities[0])).or_default().add_constant(w);
            shares.push(None);
            continue;
        }
        let mut vars = Vec::with_capacity(p.commodities.len());
        let mut closure = Vec::with_capacity(p.commodities.len());
        for &c in &p.commodities {
            let v = lp.add_var(format!("c_{}_{}_{}", est[p.supplier].id, est[p.receiver].id, c.0), 0.0, 1.0);
            exprs.entry(problem.flow_key(p, c)).or_default().add(v, w);
            closure.push((v, 1.0));
            vars.push(v);
        }
        lp.add_constraint(
            format!("split_{}_{}", est[p.supplier].id, est[p.receiver].id),
            closure,
            Relation::Eq,
            1.0,
        );
        shares.push(Some(vars));
    }
    add_flow_gaps(&mut lp, problem, exprs);
    Ok(CommodityModel { lp, shares })
}

impl CommodityModel {
    /// Per-pair commodity shares.
    pub fn extract_split(&self, problem: &Problem, solution: &LpSolution) -> Result<Vec<Vec<f64>>> {
        require_optimal(solution, "commodity assignment")?;
        Ok(problem
            .pairs
            .iter()
            .zip(&self.shares)
            .map(|(p, vars)| match vars {
                Some(vars) => vars.iter().map(|&v| solution.value(v).clamp(0.0, 1.0)).collect(),
                None if p.commodities.len() == 1 => vec![1.0],
                None => consumption_split(problem.instance, p),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DistanceBinning, FlowTarget};
    use crate::instance::tests::{establishment, two_establishments};
    use crate::lp::solve;
    use crate::pairing::{enumerate_pairs, PairingOptions};

    fn weights(w1: f64, w2: f64, w3: f64, w4: f64, w5: f64) -> SolverWeights {
        SolverWeights { w1, w2, w3, w4, w5, micro_multiplier: 10.0 }
    }

    fn pair(s: usize, r: usize, cost: f64, rating: f64, bin: usize, commodities: &[u8]) -> CandidatePair {
        CandidatePair {
            supplier: s,
            receiver: r,
            cost,
            rating,
            bin,
            commodities: commodities.iter().map(|&c| CommodityId(c)).collect(),
            supplied_tons: 0.0,
        }
    }

    fn solve_joint(problem: &Problem) -> AssignmentSet {
        let m = build_joint_model(problem).unwrap();
        m.extract(problem, &solve(&m.lp).unwrap()).unwrap()
    }

    fn solve_selection(problem: &Problem) -> AssignmentSet {
        let m = build_supplier_selection_model(problem).unwrap();
        m.extract(problem, &solve(&m.lp).unwrap()).unwrap()
    }

    #[test]
    fn single_pair_is_fully_served() {
        let inst = two_establishments();
        let pairs = vec![pair(0, 1, 1.0, 0.5, 0, &[1])];
        let p = Problem::new(&inst, &pairs, weights(1.0, 0.001, 0.0, 0.0, 0.0));
        for a in [solve_joint(&p), solve_selection(&p)] {
            assert!((a.x[0] - 1.0).abs() < 1e-9);
            assert!(a.unmet[0].abs() < 1e-9);
            assert!((a.breakdown.total() - 0.01).abs() < 1e-9);
            assert!((a.solver_objective.unwrap() - 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn capacity_binds() {
        let mut inst = two_establishments();
        inst.establishments[0].production.insert(CommodityId(1), 5.0);
        let pairs = vec![pair(0, 1, 1.0, 0.5, 0, &[1])];
        let p = Problem::new(&inst, &pairs, weights(1.0, 0.001, 0.0, 0.0, 0.0));
        for a in [solve_joint(&p), solve_selection(&p)] {
            assert!((a.x[0] - 0.5).abs() < 1e-9);
            assert!((a.unmet[0] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_pair_set_forces_full_unmet() {
        let inst = two_establishments();
        let p = Problem::new(&inst, &[], SolverWeights::default());
        let a = solve_joint(&p);
        assert_eq!(a.receivers, vec![1]);
        assert!((a.unmet[0] - 1.0).abs() < 1e-12);
    }

    fn two_supplier_instance() -> Instance {
        let mut inst = two_establishments();
        inst.establishments = vec![
            establishment("S1", "311", "A", &[(1, 10.0)], &[]),
            establishment("S2", "311", "A", &[(1, 10.0)], &[]),
            establishment("R1", "445", "B", &[], &[(1, 10.0)]),
        ];
        inst
    }

    #[test]
    fn bin_targets_force_even_split() {
        let mut inst = two_supplier_instance();
        inst.binning = DistanceBinning::new(vec![0.0, 50.0, f64::INFINITY], vec![0.5, 0.5]);
        let pairs = vec![pair(0, 2, 40.0, 0.5, 0, &[1]), pair(1, 2, 60.0, 0.5, 1, &[1])];
        let w = weights(1.0, 0.001, 0.001, 100.0, 0.0);
        let p = Problem::new(&inst, &pairs, w);
        let a = solve_selection(&p);

        // Grid oracle over x1, x2 at 0.01 with u = 1 - x1 - x2.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=100 {
            for j in 0..=(100 - i) {
                let (x1, x2) = (i as f64 / 100.0, j as f64 / 100.0);
                let u = 1.0 - x1 - x2;
                let obj = 1.0 * 10.0 * 100.0 * u + 0.001 * 10.0 * (40.0 * x1 + 60.0 * x2) - 0.001 * 0.5 * (x1 + x2)
                    + 100.0 * ((x1 - 0.5).abs() + (x2 - 0.5).abs());
                if obj < best.0 {
                    best = (obj, x1, x2);
                }
            }
        }
        assert!((a.x[0] - best.1).abs() < 1e-9 && (a.x[1] - best.2).abs() < 1e-9);
        assert!((a.breakdown.total() - best.0).abs() < 1e-9);
        assert!(a.total_bin_gap() < 1e-9);
    }

    #[test]
    fn rating_dominance() {
        let inst = two_supplier_instance();
        let pairs = vec![pair(0, 2, 5.0, 0.9, 0, &[1]), pair(1, 2, 5.0, 0.1, 0, &[1])];
        let p = Problem::new(&inst, &pairs, weights(1.0, 1e-6, 1.0, 0.0, 0.0));
        let a = solve_selection(&p);
        assert!((a.x[0] - 1.0).abs() < 1e-9 && a.x[1].abs() < 1e-9);
    }

    #[test]
    fn micro_receiver_served_first() {
        // One supplier with 10 t, two receivers of 10 t each; R2 is micro.
        let mut inst = two_establishments();
        let mut micro = establishment("R2", "445", "B", &[], &[(1, 10.0)]);
        micro.employment = 3.0;
        micro.is_micro = true;
        inst.establishments.push(micro);
        let pairs = vec![pair(0, 1, 5.0, 0.5, 0, &[1]), pair(0, 2, 5.0, 0.5, 0, &[1])];
        let p = Problem::new(&inst, &pairs, weights(1.0, 0.001, 0.001, 0.0, 0.0));
        let a = solve_selection(&p);

        // Both orderings by enumeration: serving the micro receiver first
        // costs less.
        let obj = |x1: f64, x2: f64| {
            50.0 * (1.0 - x1) + 500.0 * (1.0 - x2) + 0.05 * (x1 + x2) - 0.0005 * (x1 + x2)
        };
        assert!(obj(0.0, 1.0) < obj(1.0, 0.0));
        assert!(a.unmet[1].abs() < 1e-9 && (a.unmet[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn commodity_split_matches_targets() {
        let mut inst = two_establishments();
        inst.establishments[0].production.insert(CommodityId(2), 10.0);
        inst.establishments[1].consumption.insert(CommodityId(2), 5.0);
        inst.flow_targets = vec![
            FlowTarget { origin_zone: "A".into(), dest_zone: "B".into(), commodity: CommodityId(1), tons: 6.0 },
            FlowTarget { origin_zone: "A".into(), dest_zone: "B".into(), commodity: CommodityId(2), tons: 4.0 },
        ];
        let pairs = vec![pair(0, 1, 5.0, 0.5, 0, &[1, 2])];
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        let m = build_commodity_assignment_model(&p, &[10.0]).unwrap();
        let sol = solve(&m.lp).unwrap();
        let split = m.extract_split(&p, &sol).unwrap();
        assert!((split[0][0] - 0.6).abs() < 1e-9 && (split[0][1] - 0.4).abs() < 1e-9);
        assert!(sol.objective_value.abs() < 1e-9);
    }

    #[test]
    fn single_commodity_split_is_fixed() {
        let inst = two_establishments();
        let pairs = vec![pair(0, 1, 5.0, 0.5, 0, &[1])];
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        let m = build_commodity_assignment_model(&p, &[10.0]).unwrap();
        assert_eq!(m.lp.num_vars(), 0);
        let sol = solve(&m.lp).unwrap();
        assert_eq!(m.extract_split(&p, &sol).unwrap(), vec![vec![1.0]]);
        assert!(sol.objective_value.abs() < 1e-12);
    }

    #[test]
    fn empty_commodity_set_is_rejected() {
        let inst = two_establishments();
        let pairs = vec![pair(0, 1, 5.0, 0.5, 0, &[])];
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        assert!(build_commodity_assignment_model(&p, &[10.0]).is_err());
        assert!(build_joint_model(&p).is_err());
    }

    #[test]
    fn breakdown_matches_solver_on_enumerated_pairs() {
        let inst = two_establishments();
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        let a = solve_joint(&p);
        assert!((a.breakdown.total() - a.solver_objective.unwrap()).abs() < 1e-6);
        assert!(a.total_flow_gap() < 1e-9);
    }

    #[test]
    fn non_optimal_status_passes_through() {
        let inst = two_establishments();
        let pairs = vec![pair(0, 1, 1.0, 0.5, 0, &[1])];
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        let m = build_supplier_selection_model(&p).unwrap();
        let bad = LpSolution { status: crate::lp::LpStatus::Infeasible, objective_value: 0.0, values: vec![], iterations: 0 };
        assert!(matches!(m.extract(&p, &bad), Err(Error::Subproblem { .. })));
    }
}
