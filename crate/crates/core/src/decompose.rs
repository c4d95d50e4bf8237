//! Two-phase solve: supplier selection over the pairs serving internal
//! receivers, then over the pairs serving external receivers with the
//! internal suppliers' remaining capacity, then one commodity assignment
//! over everything selected.

use std::io::Write;

use serde::Serialize;

use crate::domain::Establishment;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp::LpBackend;
use crate::models::{
    assemble, build_commodity_assignment_model, build_joint_model, build_supplier_selection_model, AssignmentSet,
    Problem,
};
use crate::pairing::CandidatePair;
use crate::domain::SolverWeights;

/// Indices into a pair list, by the internal/external role of each end.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairPartition {
    /// Internal supplier, internal receiver.
    pub internal_internal: Vec<usize>,
    /// External supplier, internal receiver.
    pub external_internal: Vec<usize>,
    /// Internal supplier, external receiver.
    pub internal_external: Vec<usize>,
}

/// Splits pairs by role. Pairs between two external establishments are
/// left out.
pub fn partition_pairs(pairs: &[CandidatePair], establishments: &[Establishment]) -> PairPartition {
    let mut out = PairPartition::default();
    for (i, p) in pairs.iter().enumerate() {
        match (establishments[p.supplier].is_internal, establishments[p.receiver].is_internal) {
            (true, true) => out.internal_internal.push(i),
            (false, true) => out.external_internal.push(i),
            (true, false) => out.internal_external.push(i),
            (false, false) => {}
        }
    }
    out
}

/// The pairs of `pairs` with at least one internal end, in input order.
pub fn regional_pairs(pairs: &[CandidatePair], establishments: &[Establishment]) -> Vec<CandidatePair> {
    pairs
        .iter()
        .filter(|p| establishments[p.supplier].is_internal || establishments[p.receiver].is_internal)
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecompositionOptions {
    /// Solve internal-supplier pairs before external-supplier pairs, the
    /// latter against the demand left unmet, instead of both in one LP.
    pub split_ei: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseReport {
    pub name: &'static str,
    pub pairs: usize,
    pub receivers: usize,
    pub variables: usize,
    pub constraints: usize,
    pub objective: f64,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Pairs with an internal end, with `supplied_tons` filled in.
    pub pairs: Vec<CandidatePair>,
    /// Aligned with `pairs`; objective terms use the joint weights.
    pub assignment: AssignmentSet,
    pub phases: Vec<PhaseReport>,
    /// Tons committed per establishment while serving internal receivers.
    pub committed_internal: Vec<f64>,
    /// Tons committed per establishment while serving external receivers.
    pub committed_external: Vec<f64>,
}

/// Seconds since the call; always zero where the platform has no clock.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let started = std::time::Instant::now();
    move || started.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

struct Phase<'a> {
    name: &'static str,
    pairs: Vec<CandidatePair>,
    receivers: Vec<usize>,
    capacity: &'a [f64],
    demand: &'a [f64],
    /// Tons per bin fixed by earlier phases and the regional demand, when
    /// bin gaps are measured region-wide.
    bins: Option<(Vec<f64>, f64)>,
}

struct PhaseResult {
    x: Vec<f64>,
    unmet: Vec<f64>,
}

fn run_phase(instance: &Instance, weights: SolverWeights, phase: Phase, backend: &dyn LpBackend, log: &mut Vec<PhaseReport>) -> Result<PhaseResult> {
    let elapsed = stopwatch();
    let mut problem = Problem::with_receivers(instance, &phase.pairs, weights, phase.receivers);
    problem.capacity = phase.capacity.to_vec();
    problem.demand = phase.demand.to_vec();
    if let Some((base, total)) = phase.bins {
        problem.bin_base = base;
        problem.bin_total = Some(total);
    }
    let model = build_supplier_selection_model(&problem)?;
    let solution = backend.solve(&model.lp)?;
    if !solution.is_optimal() {
        return Err(Error::Subproblem {
            subproblem: phase.name,
            status: solution.status.to_string(),
        });
    }
    let a = model.extract(&problem, &solution)?;
    log::info!(
        "{}: {} pairs, {} receivers, objective {:.6}, {} iterations",
        phase.name,
        phase.pairs.len(),
        problem.receivers.len(),
        solution.objective_value,
        solution.iterations
    );
    log.push(PhaseReport {
        name: phase.name,
        pairs: phase.pairs.len(),
        receivers: problem.receivers.len(),
        variables: model.lp.num_vars(),
        constraints: model.lp.constraints.len(),
        objective: solution.objective_value,
        iterations: solution.iterations,
        seconds: elapsed(),
    });
    Ok(PhaseResult { x: a.x, unmet: a.unmet })
}

fn pick(pairs: &[CandidatePair], idx: &[usize]) -> Vec<CandidatePair> {
    idx.iter().map(|&i| pairs[i].clone()).collect()
}

/// Runs the decomposition over `pairs` (pairs between two external
/// establishments are dropped first).
pub fn run_decomposition(
    instance: &Instance,
    pairs: &[CandidatePair],
    backend: &dyn LpBackend,
    options: DecompositionOptions,
) -> Result<Decomposition> {
    let est = &instance.establishments;
    let n = est.len();
    let weights = instance.weights;
    let mut regional = regional_pairs(pairs, est);
    let part = partition_pairs(&regional, est);
    let full = Problem::new(instance, &regional, weights);
    let demand = full.demand.clone();
    let capacity = full.capacity.clone();

    let internal_receivers: Vec<usize> = full.receivers.iter().copied().filter(|&r| est[r].is_internal).collect();
    let external_receivers: Vec<usize> = full.receivers.iter().copied().filter(|&r| !est[r].is_internal).collect();

    let mut x = vec![0.0; regional.len()];
    let mut unmet = vec![1.0; n];
    let mut phases = Vec::new();

    if options.split_ei {
        let ii = run_phase(
            instance,
            weights,
            Phase {
                name: "internal-internal",
                pairs: pick(&regional, &part.internal_internal),
                receivers: internal_receivers.clone(),
                capacity: &capacity,
                demand: &demand,
                bins: None,
            },
            backend,
            &mut phases,
        )?;
        for (k, &i) in part.internal_internal.iter().enumerate() {
            x[i] = ii.x[k];
        }
        let mut residual = vec![0.0; n];
        for (&r, &u) in internal_receivers.iter().zip(&ii.unmet) {
            unmet[r] = u;
            residual[r] = demand[r] * u;
        }
        let ei = run_phase(
            instance,
            weights,
            Phase {
                name: "external-internal",
                pairs: pick(&regional, &part.external_internal),
                receivers: internal_receivers.clone(),
                capacity: &capacity,
                demand: &residual,
                bins: None,
            },
            backend,
            &mut phases,
        )?;
        for (k, &i) in part.external_internal.iter().enumerate() {
            let r = regional[i].receiver;
            x[i] = if demand[r] > 0.0 { ei.x[k] * residual[r] / demand[r] } else { 0.0 };
        }
        for (&r, &u) in internal_receivers.iter().zip(&ei.unmet) {
            unmet[r] *= u;
        }
    } else {
        let idx: Vec<usize> = {
            let mut v = part.internal_internal.clone();
            v.extend(&part.external_internal);
            v.sort_unstable();
            v
        };
        let res = run_phase(
            instance,
            weights,
            Phase {
                name: "internal-receivers",
                pairs: pick(&regional, &idx),
                receivers: internal_receivers.clone(),
                capacity: &capacity,
                demand: &demand,
                bins: None,
            },
            backend,
            &mut phases,
        )?;
        for (k, &i) in idx.iter().enumerate() {
            x[i] = res.x[k];
        }
        for (&r, &u) in internal_receivers.iter().zip(&res.unmet) {
            unmet[r] = u;
        }
    }

    let mut committed_internal = vec![0.0; n];
    for i in part.internal_internal.iter().chain(&part.external_internal) {
        let p = &regional[*i];
        committed_internal[p.supplier] += demand[p.receiver] * x[*i];
    }
    let remaining: Vec<f64> = (0..n)
        .map(|s| if est[s].is_internal { (capacity[s] - committed_internal[s]).max(0.0) } else { capacity[s] })
        .collect();

    let mut placed = vec![0.0; instance.binning.len()];
    for (p, x) in regional.iter().zip(&x) {
        placed[p.bin] += demand[p.receiver] * x;
    }
    let regional_demand: f64 = full.receivers.iter().map(|&r| demand[r]).sum();
    let ie = run_phase(
        instance,
        weights,
        Phase {
            name: "internal-external",
            pairs: pick(&regional, &part.internal_external),
            receivers: external_receivers.clone(),
            capacity: &remaining,
            demand: &demand,
            bins: Some((placed, regional_demand)),
        },
        backend,
        &mut phases,
    )?;
    let mut committed_external = vec![0.0; n];
    for (k, &i) in part.internal_external.iter().enumerate() {
        x[i] = ie.x[k];
        let p = &regional[i];
        committed_external[p.supplier] += demand[p.receiver] * x[i];
    }
    for (&r, &u) in external_receivers.iter().zip(&ie.unmet) {
        unmet[r] = u;
    }

    let elapsed = stopwatch();
    let tons: Vec<f64> = regional.iter().zip(&x).map(|(p, x)| demand[p.receiver] * x).collect();
    let commodity = build_commodity_assignment_model(&full, &tons)?;
    let solution = backend.solve(&commodity.lp)?;
    if !solution.is_optimal() {
        return Err(Error::Subproblem {
            subproblem: "commodity assignment",
            status: solution.status.to_string(),
        });
    }
    let split = commodity.extract_split(&full, &solution)?;
    phases.push(PhaseReport {
        name: "commodity-assignment",
        pairs: regional.len(),
        receivers: full.receivers.len(),
        variables: commodity.lp.num_vars(),
        constraints: commodity.lp.constraints.len(),
        objective: solution.objective_value,
        iterations: solution.iterations,
        seconds: elapsed(),
    });

    let unmet: Vec<f64> = full.receivers.iter().map(|&r| unmet[r]).collect();
    let assignment = assemble(&full, x, split, unmet, None);
    for (p, t) in regional.iter_mut().zip(&tons) {
        p.supplied_tons = *t;
    }
    Ok(Decomposition {
        pairs: regional,
        assignment,
        phases,
        committed_internal,
        committed_external,
    })
}

/// Solves the joint model over the pairs with an internal end.
pub fn run_joint(instance: &Instance, pairs: &[CandidatePair], backend: &dyn LpBackend) -> Result<(Vec<CandidatePair>, AssignmentSet)> {
    let mut regional = regional_pairs(pairs, &instance.establishments);
    let assignment = {
        let problem = Problem::new(instance, &regional, instance.weights);
        let model = build_joint_model(&problem)?;
        let solution = backend.solve(&model.lp)?;
        log::info!("joint: {} variables, {} rows, {} iterations", model.lp.num_vars(), model.lp.constraints.len(), solution.iterations);
        model.extract(&problem, &solution)?
    };
    for (i, p) in regional.iter_mut().enumerate() {
        p.supplied_tons = instance.establishments[p.receiver].demand() * assignment.x[i];
    }
    Ok((regional, assignment))
}

/// Writes `assignments.csv`: one row per pair and commodity with positive
/// tonnage.
pub fn write_assignments<W: Write>(instance: &Instance, pairs: &[CandidatePair], a: &AssignmentSet, out: W) -> Result<()> {
    let est = &instance.establishments;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["supplier", "receiver", "commodity", "tons"])?;
    for (i, p) in pairs.iter().enumerate() {
        let tons = a.tons(instance, pairs, i);
        for (k, c) in p.commodities.iter().enumerate() {
            let t = tons * a.split[i][k];
            if t > 1e-9 * est[p.receiver].demand() {
                w.write_record([
                    est[p.supplier].id.as_str(),
                    est[p.receiver].id.as_str(),
                    &c.0.to_string(),
                    &format!("{t:.6}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `unmet.csv`: every modeled receiver with its unmet fraction and
/// tonnage.
pub fn write_unmet<W: Write>(instance: &Instance, a: &AssignmentSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["receiver", "fraction", "tons"])?;
    for (&r, &u) in a.receivers.iter().zip(&a.unmet) {
        let e = &instance.establishments[r];
        let u = u.clamp(0.0, 1.0);
        w.write_record([e.id.as_str(), &format!("{u:.9}"), &format!("{:.6}", u * e.demand())])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CommodityId, MakeUseEntry};
    use crate::instance::tests::{establishment, two_establishments};
    use crate::lp::BundledSimplex;
    use crate::models::evaluate;
    use crate::pairing::{enumerate_pairs, PairingOptions};

    fn external(mut e: Establishment) -> Establishment {
        e.is_internal = false;
        e
    }

    fn trading_pair() -> Instance {
        let mut inst = two_establishments();
        inst.zones[1].is_internal = false;
        inst.establishments = vec![
            establishment("I1", "311", "A", &[(1, 10.0)], &[(1, 10.0)]),
            external(establishment("X1", "311", "B", &[(1, 10.0)], &[(1, 10.0)])),
        ];
        inst.make_use.entries[0].receiver_sector = "311".into();
        inst
    }

    #[test]
    fn partition_by_roles() {
        let inst = trading_pair();
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        let part = partition_pairs(&pairs, &inst.establishments);
        assert_eq!(part.internal_internal.len(), 0);
        assert_eq!(part.external_internal.len(), 1);
        assert_eq!(part.internal_external.len(), 1);

        let inst = two_establishments();
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        let part = partition_pairs(&pairs, &inst.establishments);
        assert_eq!(part.internal_internal, vec![0]);
    }

    #[test]
    fn external_pairs_are_dropped() {
        let mut inst = trading_pair();
        inst.establishments[0].is_internal = false;
        inst.zones[0].is_internal = false;
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        assert_eq!(pairs.len(), 2);
        let part = partition_pairs(&pairs, &inst.establishments);
        assert_eq!(part, PairPartition::default());
        assert!(regional_pairs(&pairs, &inst.establishments).is_empty());
    }

    #[test]
    fn exhausted_internal_capacity_leaves_externals_unmet() {
        // I1 supplies I2 with all 10 t, nothing left for X1.
        let mut inst = two_establishments();
        inst.zones.push(crate::instance::tests::zone("X", 100.0, 0.0, false));
        inst.establishments = vec![
            establishment("I1", "311", "A", &[(1, 10.0)], &[]),
            establishment("I2", "445", "B", &[], &[(1, 10.0)]),
            external(establishment("X1", "445", "X", &[], &[(1, 10.0)])),
        ];
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        let d = run_decomposition(&inst, &pairs, &BundledSimplex::default(), DecompositionOptions::default()).unwrap();
        let a = &d.assignment;
        let slot = a.receivers.iter().position(|&r| r == 2).unwrap();
        assert!((a.unmet[slot] - 1.0).abs() < 1e-9);
        let slot = a.receivers.iter().position(|&r| r == 1).unwrap();
        assert!(a.unmet[slot].abs() < 1e-9);
        assert!(d.committed_internal[0] + d.committed_external[0] <= 10.0 + 1e-6);
    }

    #[test]
    fn split_ei_matches_combined_when_internal_supply_suffices() {
        let mut inst = trading_pair();
        inst.establishments.push(establishment("I2", "311", "A", &[(1, 30.0)], &[]));
        inst.weights.w4 = 0.0;
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        let backend = BundledSimplex::default();
        for split_ei in [false, true] {
            let d = run_decomposition(&inst, &pairs, &backend, DecompositionOptions { split_ei }).unwrap();
            assert!(d.assignment.max_closure_error(&d.pairs) < 1e-7);
            assert!(d.assignment.unmet.iter().all(|u| u.abs() < 1e-9));
        }
    }

    #[test]
    fn outputs() {
        let inst = two_establishments();
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        let d = run_decomposition(&inst, &pairs, &BundledSimplex::default(), DecompositionOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_assignments(&inst, &d.pairs, &d.assignment, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "supplier,receiver,commodity,tons\nS1,R1,1,10.000000\n");
        let mut buf = Vec::new();
        write_unmet(&inst, &d.assignment, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "receiver,fraction,tons\nR1,0.000000000,0.000000\n");
        assert_eq!(d.pairs[0].supplied_tons, 10.0);
    }

    #[test]
    fn breakdown_recomputes_from_values() {
        let mut inst = two_establishments();
        inst.make_use.entries.push(MakeUseEntry {
            supplier_sector: "311".into(),
            receiver_sector: "445".into(),
            commodity: CommodityId(2),
            share: 1.0,
        });
        inst.establishments[0].production.insert(CommodityId(2), 4.0);
        inst.establishments[1].consumption.insert(CommodityId(2), 4.0);
        let pairs = enumerate_pairs(&inst, &PairingOptions::default()).unwrap();
        let d = run_decomposition(&inst, &pairs, &BundledSimplex::default(), DecompositionOptions::default()).unwrap();
        let p = Problem::new(&inst, &d.pairs, inst.weights);
        let (_, _, b) = evaluate(&p, &d.assignment.x, &d.assignment.split, &d.assignment.unmet);
        assert_eq!(b, d.assignment.breakdown);
    }
}
