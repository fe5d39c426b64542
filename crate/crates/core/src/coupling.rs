//! Model-predictive couplings between the deterministic system and the chain.
//!
//! In the forward direction the chain motion `μ(·)` is fixed and the
//! deterministic side borrows, at each partition time, the controls of the
//! nodes its particles are optimally coupled to. In the reverse direction the
//! deterministic motion `m(·)` is fixed and each node averages the controls
//! of the particles it is coupled to.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{integrate_kolmogorov, ChainFlow, LatticeChain};
use crate::controls::{
    concat_controls, mix_controls, restrict_distribution, ControlDistribution, ControlItem,
    FeedbackPolicy, RelaxedControl,
};
use crate::dynamics::{
    check_in_domain, integrate_items, integrate_mfc, MfcFlow, VectorFieldProblem,
};
use crate::measures::{
    coalesce_with_groups, embed_lattice, embed_lattice_with_ids, LatticeDistribution, LatticeGrid,
    WeightedCloud,
};
use crate::time_grid::uniform_points;
use crate::transport::{disintegrate, optimal_plan, wasserstein, Side, TransportPlan};
use crate::{Error, Result};

/// Tolerance on plan marginals against the step clouds.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Partition times `0 = s₀ < s₁ < … < s_n = T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Argument(
                "a partition needs at least two times starting at 0".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument(
                "partition times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    /// `n` equal steps on `[0, T]`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::Argument(
                "a uniform partition needs n ≥ 1 and a positive horizon".into(),
            ));
        }
        Self::new(uniform_points(0.0, horizon, n))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `d(Δ) = max (s_{k+1} − s_k)`.
    pub fn fineness(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Evaluation grid: `per_step + 1` equally spaced points on every step.
    pub fn eval_times(&self, per_step: usize) -> Vec<f64> {
        let mut out = vec![self.times[0]];
        for w in self.times.windows(2) {
            out.extend_from_slice(&uniform_points(w[0], w[1], per_step)[1..]);
        }
        out
    }
}

/// Settings shared by both coupling directions.
#[derive(Clone, Debug)]
pub struct CouplingOptions {
    pub dt: f64,
    /// Evaluation points per partition step for the discrepancy series.
    pub eval_per_step: usize,
    /// Largest particle count allowed after coalescing.
    pub max_particles: usize,
    /// Merge particles closer than `h · 1e-3` after every step.
    pub coalesce: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            dt: 2.5e-3,
            eval_per_step: 4,
            max_particles: 1_000_000,
            coalesce: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Deterministic controls built from chain feedback.
    Forward,
    /// Chain feedback built from deterministic controls.
    Reverse,
}

/// What happened at one partition step.
#[derive(Clone, Debug, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub start: f64,
    pub end: f64,
    pub particles: usize,
    pub nodes: usize,
    pub plan_entries: usize,
    pub plan_cost: f64,
    /// `W₂(m(s_k), 𝓘(μ(s_k)))`.
    pub w2: f64,
    pub marginal_error: f64,
    /// Forward direction: particle count after splitting.
    pub split_particles: Option<usize>,
    /// Forward direction: particle count after coalescing.
    pub coalesced_particles: Option<usize>,
    /// Reverse direction: nodes without mass that got the uniform control.
    pub zero_mass_nodes: Option<usize>,
    #[serde(skip)]
    pub plan: TransportPlan,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingTrace {
    pub direction: Direction,
    pub steps: Vec<StepTrace>,
}

/// `W₂(m(t), 𝓘(μ(t)))` on an evaluation grid, its supremum and the inputs
/// of the error bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub times: Vec<f64>,
    pub w2: Vec<f64>,
    pub sup: f64,
    pub eps: f64,
    #[serde(rename = "B_Q")]
    pub b_q: f64,
    pub d_delta: f64,
    pub w2_0: f64,
}

/// The machine-readable summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct BoundSheet {
    pub eps: f64,
    pub B_Q: f64,
    pub d_Delta: f64,
    pub W2_0: f64,
    pub sup_W2: f64,
}

impl DiscrepancyReport {
    pub fn new(
        times: Vec<f64>,
        w2: Vec<f64>,
        w2_0: f64,
        chain: &LatticeChain,
        partition: &Partition,
    ) -> Self {
        let sup = w2.iter().copied().fold(0.0, f64::max);
        Self {
            times,
            w2,
            sup,
            eps: chain.eps(),
            b_q: chain.bound_q(),
            d_delta: partition.fineness(),
            w2_0,
        }
    }

    pub fn bound_sheet(&self) -> BoundSheet {
        BoundSheet {
            eps: self.eps,
            B_Q: self.b_q,
            d_Delta: self.d_delta,
            W2_0: self.w2_0,
            sup_W2: self.sup,
        }
    }
}

/// Output of a coupling run.
#[derive(Clone, Debug)]
pub struct CouplingRun {
    pub mfc: MfcFlow,
    pub chain: ChainFlow,
    pub trace: CouplingTrace,
    pub report: DiscrepancyReport,
}

/// `W₂(m(t), 𝓘(μ(t)))` at every evaluation time.
pub fn discrepancy(
    mfc: &MfcFlow,
    chain_flow: &ChainFlow,
    grid: &LatticeGrid,
    eval_times: &[f64],
) -> Result<Vec<f64>> {
    eval_times
        .par_iter()
        .map(|&t| {
            let m = mfc.at(t).ok_or_else(|| {
                Error::Argument(format!("time {t} is not sampled by the deterministic flow"))
            })?;
            let mu = chain_flow.at(t).ok_or_else(|| {
                Error::Argument(format!("time {t} is not sampled by the chain flow"))
            })?;
            wasserstein(m, &embed_lattice(mu, grid)?, 2.0)
        })
        .collect()
}

fn merged_sync(partition: &Partition, eval: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = partition.times().iter().chain(eval).copied().collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

fn within(sync: &[f64], a: f64, b: f64) -> Vec<f64> {
    sync.iter().copied().filter(|&t| t > a && t < b).collect()
}

fn check_options(opts: &CouplingOptions) -> Result<()> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::Argument(format!(
            "time step must be positive, got {}",
            opts.dt
        )));
    }
    if opts.eval_per_step == 0 {
        return Err(Error::Argument("eval_per_step must be at least 1".into()));
    }
    Ok(())
}

fn check_horizon(what: &str, (s, r): (f64, f64), partition: &Partition) -> Result<()> {
    let t = partition.horizon();
    if s != 0.0 || (r - t).abs() > 1e-12 * (1.0 + t.abs()) {
        return Err(Error::Argument(format!(
            "{what} horizon [{s}, {r}] does not match the partition [0, {t}]"
        )));
    }
    Ok(())
}

fn coupled_plan(a: &WeightedCloud, b: &WeightedCloud) -> Result<(TransportPlan, f64)> {
    let plan = optimal_plan(a, b, 2.0)?;
    plan.check_marginals(a, b, MARGINAL_TOL)?;
    let err = plan.marginal_error(a.weights(), b.weights());
    Ok((plan, err))
}

/// Position and control history of one particle in the forward direction.
#[derive(Clone)]
struct Lineage {
    state: Vec<f64>,
    control: Option<RelaxedControl>,
}

/// Deterministic controls from chain feedback.
///
/// `μ(·)` is integrated once under `policy`. At every partition time the
/// current particles are optimally coupled to `𝓘(μ(s_k))`; every plan entry
/// `(particle, node, mass)` becomes a child particle of that mass driven by
/// the node's control on the step. Particles closer than `h·1e-3` are merged
/// after each step when `opts.coalesce` is set.
///
/// The returned flow carries the concatenated distribution of controls as
/// its source unless merging had to combine particles with different
/// histories.
pub fn mpc_deterministic_from_chain(
    problem: &VectorFieldProblem,
    chain: &LatticeChain,
    m0: &WeightedCloud,
    mu0: &LatticeDistribution,
    policy: &FeedbackPolicy,
    partition: &Partition,
    opts: &CouplingOptions,
) -> Result<CouplingRun> {
    check_options(opts)?;
    check_horizon("policy", policy.horizon(), partition)?;
    check_in_domain(problem, m0)?;
    let grid = chain.grid();
    let eval = partition.eval_times(opts.eval_per_step);
    let sync = merged_sync(partition, &eval);
    let chain_flow =
        integrate_kolmogorov(chain, mu0, policy, 0.0, partition.horizon(), opts.dt, &sync)?;

    let dim = m0.dim();
    let mut coords = m0.coords().to_vec();
    let mut weights = m0.weights().to_vec();
    let mut lineage: Vec<Lineage> = m0
        .points()
        .map(|p| Lineage {
            state: p.to_vec(),
            control: None,
        })
        .collect();
    let mut exact_lineage = true;
    let mut times = vec![0.0];
    let mut clouds = vec![m0.clone()];
    let mut steps = Vec::with_capacity(partition.steps());
    let tol = chain.spacing() * 1e-3;

    for (k, w) in partition.times().windows(2).enumerate() {
        let clock = Instant::now();
        let (s, r) = (w[0], w[1]);
        let mu = chain_flow
            .at(s)
            .ok_or_else(|| Error::Coupling(format!("chain flow misses partition time {s}")))?;
        let (target, ids) = embed_lattice_with_ids(mu, grid)?;
        let current = WeightedCloud::from_parts_unchecked(dim, coords.clone(), weights.clone());
        let (plan, marginal_error) = coupled_plan(&current, &target)?;

        let mut child_coords = Vec::with_capacity(plan.entries.len() * dim);
        let mut child_weights = Vec::with_capacity(plan.entries.len());
        let mut child_controls = Vec::with_capacity(plan.entries.len());
        let mut child_lineage = Vec::with_capacity(plan.entries.len());
        for e in &plan.entries {
            let ctrl = policy.control(ids[e.target]).restrict(s, r)?;
            child_coords.extend_from_slice(current.point(e.source));
            child_weights.push(e.mass);
            let parent = &lineage[e.source];
            let history = match &parent.control {
                Some(c) => concat_controls(c, &ctrl)?,
                None => ctrl.clone(),
            };
            child_lineage.push(Lineage {
                state: parent.state.clone(),
                control: Some(history),
            });
            child_controls.push(ctrl);
        }
        let split = child_weights.len();
        let refs: Vec<&RelaxedControl> = child_controls.iter().collect();
        let path = integrate_items(
            problem,
            child_coords,
            &child_weights,
            &refs,
            s,
            r,
            opts.dt,
            &within(&sync, s, r),
        )?;

        let end = path.coords.last().unwrap().clone();
        let (end_cloud, lineage_next) = if opts.coalesce {
            let (merged, groups) = coalesce_with_groups(
                &WeightedCloud::from_parts_unchecked(dim, end, child_weights.clone()),
                tol,
            );
            let mut next = Vec::with_capacity(groups.len());
            for g in &groups {
                let heaviest = *g
                    .iter()
                    .max_by(|&&a, &&b| {
                        child_weights[a]
                            .total_cmp(&child_weights[b])
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                let same = g.iter().all(|&i| {
                    child_lineage[i].state == child_lineage[heaviest].state
                        && child_lineage[i].control == child_lineage[heaviest].control
                });
                exact_lineage &= same;
                next.push(child_lineage[heaviest].clone());
            }
            (merged, next)
        } else {
            (
                WeightedCloud::from_parts_unchecked(dim, end, child_weights.clone()),
                child_lineage,
            )
        };
        if end_cloud.len() > opts.max_particles {
            return Err(Error::Resource(format!(
                "step {k} on [{s}, {r}] needs {} particles, above the cap of {}",
                end_cloud.len(),
                opts.max_particles
            )));
        }

        let n_path = path.times.len();
        for (i, (t, c)) in path.times.into_iter().zip(path.coords).enumerate().skip(1) {
            times.push(t);
            if i + 1 == n_path {
                clouds.push(end_cloud.clone());
            } else {
                clouds.push(WeightedCloud::from_parts_unchecked(
                    dim,
                    c,
                    child_weights.clone(),
                ));
            }
        }
        steps.push(StepTrace {
            step: k,
            start: s,
            end: r,
            particles: current.len(),
            nodes: target.len(),
            plan_entries: plan.entries.len(),
            plan_cost: plan.cost,
            w2: plan.cost.max(0.0).sqrt(),
            marginal_error,
            split_particles: Some(split),
            coalesced_particles: Some(end_cloud.len()),
            zero_mass_nodes: None,
            plan,
            elapsed: clock.elapsed(),
        });
        let (_, c, w) = end_cloud.into_parts();
        coords = c;
        weights = w;
        lineage = lineage_next;
    }

    let source = if exact_lineage {
        let items = lineage
            .into_iter()
            .zip(&weights)
            .map(|(l, &w)| ControlItem {
                weight: w,
                state: l.state,
                control: l.control.expect("at least one step"),
            })
            .collect();
        ControlDistribution::new(items).ok()
    } else {
        None
    };
    let mfc = MfcFlow::new(times, clouds, source)?;
    let w2 = discrepancy(&mfc, &chain_flow, grid, &eval)?;
    let w2_0 = wasserstein(m0, &embed_lattice(mu0, grid)?, 2.0)?;
    let report = DiscrepancyReport::new(eval, w2, w2_0, chain, partition);
    Ok(CouplingRun {
        mfc,
        chain: chain_flow,
        trace: CouplingTrace {
            direction: Direction::Forward,
            steps,
        },
        report,
    })
}

/// Chain feedback from deterministic controls.
///
/// `m(·) = m(·, 0, α)` is integrated once. At every partition time `α` is
/// transferred to `s_k` and restricted to the step, `𝓘(μ(s_k))` is optimally
/// coupled to `m(s_k)`, and every node with mass plays the plan-conditional
/// average of the coupled particles' controls. Nodes without mass play the
/// uniform control and are counted in the trace.
pub fn mpc_chain_from_deterministic(
    problem: &VectorFieldProblem,
    chain: &LatticeChain,
    mu0: &LatticeDistribution,
    alpha: &ControlDistribution,
    partition: &Partition,
    opts: &CouplingOptions,
) -> Result<CouplingRun> {
    check_options(opts)?;
    check_horizon("control", alpha.horizon(), partition)?;
    let grid = chain.grid();
    let eval = partition.eval_times(opts.eval_per_step);
    let sync = merged_sync(partition, &eval);
    let mfc = integrate_mfc(problem, alpha, opts.dt, &sync)?;
    let n_atoms = chain.n_atoms();

    let mut mu = mu0.clone();
    let mut chain_flow: Option<ChainFlow> = None;
    let mut steps = Vec::with_capacity(partition.steps());
    for (k, w) in partition.times().windows(2).enumerate() {
        let clock = Instant::now();
        let (s, r) = (w[0], w[1]);
        let alpha_k = restrict_distribution(alpha, s, r, &mfc)?;
        let target = alpha_k.base_cloud();
        let (source, ids) = embed_lattice_with_ids(&mu, grid)?;
        let (plan, marginal_error) = coupled_plan(&source, &target)?;
        let table = disintegrate(&plan, Side::Source);
        let uniform = RelaxedControl::uniform(s, r, n_atoms)?;
        let mut controls = vec![uniform; grid.len()];
        for row in &table.rows {
            let w: Vec<f64> = row.probs.iter().map(|p| p.1).collect();
            let ctrls: Vec<&RelaxedControl> = row
                .probs
                .iter()
                .map(|p| &alpha_k.items()[p.0].control)
                .collect();
            controls[ids[row.atom]] = mix_controls(&w, &ctrls)?;
        }
        let zero_mass = grid.len() - table.rows.len();
        let policy_k = FeedbackPolicy::new(controls)?;
        let flow_k =
            integrate_kolmogorov(chain, &mu, &policy_k, s, r, opts.dt, &within(&sync, s, r))?;
        mu = flow_k.last().clone();
        match &mut chain_flow {
            Some(f) => f.append(flow_k)?,
            None => chain_flow = Some(flow_k),
        }
        steps.push(StepTrace {
            step: k,
            start: s,
            end: r,
            particles: target.len(),
            nodes: source.len(),
            plan_entries: plan.entries.len(),
            plan_cost: plan.cost,
            w2: plan.cost.max(0.0).sqrt(),
            marginal_error,
            split_particles: None,
            coalesced_particles: None,
            zero_mass_nodes: Some(zero_mass),
            plan,
            elapsed: clock.elapsed(),
        });
    }
    let chain_flow = chain_flow.expect("a partition has at least one step");
    let w2 = discrepancy(&mfc, &chain_flow, grid, &eval)?;
    let w2_0 = wasserstein(&alpha.base_cloud(), &embed_lattice(mu0, grid)?, 2.0)?;
    let report = DiscrepancyReport::new(eval, w2, w2_0, chain, partition);
    Ok(CouplingRun {
        mfc,
        chain: chain_flow,
        trace: CouplingTrace {
            direction: Direction::Reverse,
            steps,
        },
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BundleRow {
    /// Which bundle the sampled strategy belongs to.
    pub side: String,
    pub index: usize,
    /// `sup_t W₂` achieved by the constructed response.
    pub d: f64,
}

/// Upper estimate of the Hausdorff distance between the two bundles of
/// motions, restricted to the sampled strategies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HausdorffReport {
    pub h_estimate: f64,
    /// Largest distance from a sampled deterministic motion to its chain response.
    pub sup_deterministic: f64,
    /// Largest distance from a sampled chain motion to its deterministic response.
    pub sup_chain: f64,
    pub table: Vec<BundleRow>,
}

/// For every sampled distribution of controls the reverse construction
/// supplies a chain motion, and for every sampled policy the forward
/// construction supplies a deterministic motion; the estimate is the larger
/// of the two one-sided suprema of the achieved discrepancies.
#[allow(clippy::too_many_arguments)]
pub fn hausdorff_estimate(
    problem: &VectorFieldProblem,
    chain: &LatticeChain,
    m0: &WeightedCloud,
    mu0: &LatticeDistribution,
    deterministic_samples: &[ControlDistribution],
    policy_samples: &[FeedbackPolicy],
    partition: &Partition,
    opts: &CouplingOptions,
) -> Result<HausdorffReport> {
    if deterministic_samples.is_empty() || policy_samples.is_empty() {
        return Err(Error::Argument(
            "both strategy samples must be nonempty".into(),
        ));
    }
    let det: Vec<f64> = deterministic_samples
        .par_iter()
        .map(|alpha| {
            mpc_chain_from_deterministic(problem, chain, mu0, alpha, partition, opts)
                .map(|r| r.report.sup)
        })
        .collect::<Result<_>>()?;
    let pol: Vec<f64> = policy_samples
        .par_iter()
        .map(|p| {
            mpc_deterministic_from_chain(problem, chain, m0, mu0, p, partition, opts)
                .map(|r| r.report.sup)
        })
        .collect::<Result<_>>()?;
    let sup_deterministic = det.iter().copied().fold(0.0, f64::max);
    let sup_chain = pol.iter().copied().fold(0.0, f64::max);
    let table = det
        .iter()
        .enumerate()
        .map(|(index, &d)| BundleRow {
            side: "deterministic".into(),
            index,
            d,
        })
        .chain(pol.iter().enumerate().map(|(index, &d)| BundleRow {
            side: "chain".into(),
            index,
            d,
        }))
        .collect();
    Ok(HausdorffReport {
        h_estimate: sup_deterministic.max(sup_chain),
        sup_deterministic,
        sup_chain,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_lattice_chain;
    use crate::problems::{constant, zero};

    #[test]
    fn partition_basics() {
        let p = Partition::uniform(1.0, 4).unwrap();
        assert_eq!(p.steps(), 4);
        assert!((p.fineness() - 0.25).abs() < 1e-15);
        assert_eq!(p.eval_times(2).len(), 9);
        assert!(Partition::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(Partition::new(vec![0.1, 0.5]).is_err());
    }

    fn zero_setup() -> (
        VectorFieldProblem,
        LatticeChain,
        LatticeDistribution,
        WeightedCloud,
    ) {
        let p = zero(1, 1.0, 1.0, 2).unwrap();
        let chain = build_lattice_chain(&p, 0.25, 100).unwrap();
        let mut mu = vec![0.0; chain.len()];
        mu[chain.grid().locate(&[-0.5]).unwrap()] = 0.3;
        mu[chain.grid().locate(&[0.25]).unwrap()] = 0.7;
        let mu0 = LatticeDistribution::new(mu).unwrap();
        let m0 = embed_lattice(&mu0, chain.grid()).unwrap();
        (p, chain, mu0, m0)
    }

    #[test]
    fn zero_field_matched_start_forward() {
        let (p, chain, mu0, m0) = zero_setup();
        let policy = FeedbackPolicy::uniform(chain.len(), 0.0, 1.0, 2).unwrap();
        let part = Partition::uniform(1.0, 3).unwrap();
        let run = mpc_deterministic_from_chain(
            &p,
            &chain,
            &m0,
            &mu0,
            &policy,
            &part,
            &CouplingOptions::default(),
        )
        .unwrap();
        assert_eq!(run.report.sup, 0.0);
        assert_eq!(run.trace.steps.len(), 3);
        assert!(run.mfc.source().is_some());
    }

    #[test]
    fn zero_field_matched_start_reverse() {
        let (p, chain, mu0, m0) = zero_setup();
        let alpha = ControlDistribution::from_cloud(&m0, |_| {
            RelaxedControl::dirac(0.0, 1.0, 2, 1).unwrap()
        })
        .unwrap();
        let part = Partition::uniform(1.0, 2).unwrap();
        let run = mpc_chain_from_deterministic(
            &p,
            &chain,
            &mu0,
            &alpha,
            &part,
            &CouplingOptions::default(),
        )
        .unwrap();
        assert_eq!(run.report.sup, 0.0);
        let k = chain.grid().locate(&[0.25]).unwrap();
        assert_eq!(run.chain.policy().control(k).weights_at(0.7), &[0.0, 1.0]);
        assert!(run
            .trace
            .steps
            .iter()
            .all(|s| s.zero_mass_nodes == Some(chain.len() - 2)));
    }

    #[test]
    fn single_step_has_one_plan() {
        let p = constant(vec![0.5], 1.0, 1.0, 1).unwrap();
        let chain = build_lattice_chain(&p, 0.1, 100).unwrap();
        let k = chain.grid().locate(&[-0.5]).unwrap();
        let mu0 = LatticeDistribution::dirac(chain.len(), k).unwrap();
        let m0 = WeightedCloud::dirac(vec![-0.5]).unwrap();
        let policy = FeedbackPolicy::uniform(chain.len(), 0.0, 1.0, 1).unwrap();
        let part = Partition::uniform(1.0, 1).unwrap();
        let opts = CouplingOptions {
            dt: 0.01,
            ..Default::default()
        };
        let run =
            mpc_deterministic_from_chain(&p, &chain, &m0, &mu0, &policy, &part, &opts).unwrap();
        assert_eq!(run.trace.steps.len(), 1);
        let source = run.mfc.source().unwrap();
        assert_eq!(source.len(), 1);
        assert_eq!(source.items()[0].control.cells().len(), 1);
        assert!((run.mfc.last().point(0)[0] - 0.0).abs() < 1e-10);
        assert_eq!(run.report.w2_0, 0.0);
    }

    #[test]
    fn particle_cap_is_enforced() {
        let (p, chain, mu0, _) = zero_setup();
        let m0 = WeightedCloud::uniform(vec![vec![-0.6], vec![-0.1], vec![0.3]]).unwrap();
        let policy = FeedbackPolicy::uniform(chain.len(), 0.0, 1.0, 2).unwrap();
        let part = Partition::uniform(1.0, 2).unwrap();
        let opts = CouplingOptions {
            max_particles: 2,
            ..Default::default()
        };
        assert!(matches!(
            mpc_deterministic_from_chain(&p, &chain, &m0, &mu0, &policy, &part, &opts),
            Err(Error::Resource(_))
        ));
    }
}
