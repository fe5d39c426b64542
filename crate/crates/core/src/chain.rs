//! The finite mean field Markov chain: lattice construction, relaxed rates,
//! the Kolmogorov forward equation, assumption checks and a jump sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::controls::FeedbackPolicy;
use crate::dynamics::VectorFieldProblem;
use crate::measures::{
    check_a1, sq_dist, LatticeDistribution, LatticeGrid, MeasureView, NEGATIVE_MASS_TOL,
};
use crate::time_grid::{find_time, step_grid};
use crate::{Error, Result};

/// Default cap on the number of lattice nodes.
pub const DEFAULT_MAX_NODES: usize = 1_000_000;

/// Largest admissible `dt · B_Q · fan-out` for the forward integrator.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Clone, Debug)]
enum Generator {
    /// Rates `|f_i|/h` towards `x̄ + h·sgn(f_i)·e_i`.
    Lattice(VectorFieldProblem),
    /// Rates independent of time, measure and control.
    Fixed(Vec<Vec<(usize, f64)>>),
}

/// A finite node set with its rate generator `Q(t, μ, u)` and the constants
/// `B_Q` and `ε` that go with it.
#[derive(Clone, Debug)]
pub struct LatticeChain {
    grid: LatticeGrid,
    generator: Generator,
    n_atoms: usize,
    horizon: f64,
    bound_q: f64,
    eps: f64,
    fan_out: usize,
}

/// The lattice chain of `problem` with spacing `h`: nodes
/// `(K grown by h) ∩ hℤᵈ`, `B_Q = dR/h`, `ε = max{h, √(hdR)}`.
///
/// Rates towards a neighbour outside the node set are dropped.
pub fn build_lattice_chain(
    problem: &VectorFieldProblem,
    h: f64,
    max_nodes: usize,
) -> Result<LatticeChain> {
    let grid = LatticeGrid::regular(&problem.domain, h, max_nodes)?;
    let d = problem.dim() as f64;
    let r = problem.bound_r;
    Ok(LatticeChain {
        grid,
        n_atoms: problem.atoms.len(),
        horizon: problem.horizon,
        bound_q: d * r / h,
        eps: h.max((h * d * r).sqrt()),
        fan_out: problem.dim() + 1,
        generator: Generator::Lattice(problem.clone()),
    })
}

impl LatticeChain {
    /// A chain with fixed off-diagonal rates `rates[x̄] = [(ȳ, Q_{x̄ȳ})]`.
    pub fn from_generator(
        grid: LatticeGrid,
        rates: Vec<Vec<(usize, f64)>>,
        n_atoms: usize,
        horizon: f64,
    ) -> Result<Self> {
        if rates.len() != grid.len() {
            return Err(Error::Structural(format!(
                "{} rate rows for {} nodes",
                rates.len(),
                grid.len()
            )));
        }
        if n_atoms == 0 || !(horizon > 0.0) {
            return Err(Error::Argument(
                "a chain needs at least one atom and a positive horizon".into(),
            ));
        }
        let mut bound_q: f64 = 0.0;
        let mut var: f64 = 0.0;
        let mut fan_out = 1;
        for (k, row) in rates.iter().enumerate() {
            let mut exit = 0.0;
            for &(j, q) in row {
                if j >= grid.len() || j == k || !(q >= 0.0) || !q.is_finite() {
                    return Err(Error::Argument(format!(
                        "invalid rate {q} from node {k} to node {j}"
                    )));
                }
                exit += q;
                bound_q = bound_q.max(q);
            }
            let jump: f64 = row
                .iter()
                .map(|&(j, q)| q * sq_dist(grid.node(j), grid.node(k)))
                .sum();
            var = var.max(jump);
            bound_q = bound_q.max(exit);
            fan_out = fan_out.max(row.len() + 1);
        }
        let eps = grid.spacing().max(var.sqrt());
        Ok(Self {
            grid,
            generator: Generator::Fixed(rates),
            n_atoms,
            horizon,
            bound_q,
            eps,
            fan_out,
        })
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    /// Declared bound on the magnitude of every generator entry.
    pub fn bound_q(&self) -> f64 {
        self.bound_q
    }

    /// Declared approximation quality ε.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Largest number of nonzero entries in a generator row.
    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The vector field behind a lattice chain.
    pub fn problem(&self) -> Option<&VectorFieldProblem> {
        match &self.generator {
            Generator::Lattice(p) => Some(p),
            Generator::Fixed(_) => None,
        }
    }

    /// Largest `dt` accepted by [`integrate_kolmogorov`].
    pub fn max_stable_dt(&self) -> f64 {
        if self.bound_q == 0.0 {
            f64::INFINITY
        } else {
            STABILITY_LIMIT / (self.bound_q * self.fan_out as f64)
        }
    }

    /// `𝓘(μ)` as a measure view over all nodes (zero masses included).
    pub fn view<'a>(&'a self, mu: &'a [f64]) -> MeasureView<'a> {
        MeasureView::new(self.grid.dim(), self.grid.coords(), mu)
    }

    /// Off-diagonal entries of row `node` of `Q(t, μ, u_atom)`, appended to
    /// `out`. Returns the total rate dropped at the boundary.
    pub fn off_diagonal(
        &self,
        t: f64,
        m: &MeasureView<'_>,
        atom: usize,
        node: usize,
        out: &mut Vec<(usize, f64)>,
    ) -> f64 {
        match &self.generator {
            Generator::Fixed(rates) => {
                out.extend_from_slice(&rates[node]);
                0.0
            }
            Generator::Lattice(problem) => {
                let h = self.grid.spacing();
                let mut f = vec![0.0; problem.dim()];
                problem.eval(t, self.grid.node(node), m, atom, &mut f);
                let mut dropped = 0.0;
                for (i, &fi) in f.iter().enumerate() {
                    if fi == 0.0 {
                        continue;
                    }
                    let rate = fi.abs() / h;
                    match self.grid.neighbor(node, i, if fi > 0.0 { 1 } else { -1 }) {
                        Some(j) => out.push((j, rate)),
                        None => dropped += rate,
                    }
                }
                dropped
            }
        }
    }

    /// Off-diagonal entries of row `node` of the relaxed matrix
    /// `Σ_u cell(u) Q(t, μ, u)`, sorted by target. Returns the dropped rate.
    pub fn relaxed_row(
        &self,
        t: f64,
        m: &MeasureView<'_>,
        cell: &[f64],
        node: usize,
        out: &mut Vec<(usize, f64)>,
    ) -> f64 {
        out.clear();
        let mut tmp = Vec::new();
        let mut dropped = 0.0;
        for (a, &w) in cell.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            tmp.clear();
            dropped += w * self.off_diagonal(t, m, a, node, &mut tmp);
            out.extend(tmp.iter().map(|&(j, q)| (j, w * q)));
        }
        out.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
        for &(j, q) in out.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += q,
                _ => merged.push((j, q)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        *out = merged;
        dropped
    }

    fn rows(&self, t: f64, mu: &[f64], cells: &[&[f64]]) -> Vec<Vec<(usize, f64)>> {
        let view = self.view(mu);
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                let mut row = Vec::new();
                self.relaxed_row(t, &view, cells[k], k, &mut row);
                row
            })
            .collect()
    }

    fn forward_rhs(&self, t: f64, mu: &[f64], cells: &[&[f64]], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let rows = self.rows(t, mu, cells);
        for (k, row) in rows.iter().enumerate() {
            let mk = mu[k];
            for &(j, q) in row {
                out[j] += mk * q;
                out[k] -= mk * q;
            }
        }
    }
}

/// One row of a relaxed rate matrix, diagonal included.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub node: usize,
    pub diagonal: f64,
    pub off_diagonal: Vec<(usize, f64)>,
}

impl RateRow {
    pub fn sum(&self) -> f64 {
        self.diagonal + self.off_diagonal.iter().map(|e| e.1).sum::<f64>()
    }
}

/// `𝒬(t, μ, ζ)`: every row averaged over the node's control cell at `t`.
pub fn relaxed_rates(
    chain: &LatticeChain,
    t: f64,
    mu: &LatticeDistribution,
    policy: &FeedbackPolicy,
) -> Result<Vec<RateRow>> {
    check_policy(chain, policy)?;
    if mu.len() != chain.len() {
        return Err(Error::Structural(format!(
            "distribution of {} entries for {} nodes",
            mu.len(),
            chain.len()
        )));
    }
    if !policy.covers(t) {
        let (s, r) = policy.horizon();
        return Err(Error::Argument(format!(
            "time {t} outside the policy horizon [{s}, {r}]"
        )));
    }
    let view = chain.view(mu.as_slice());
    Ok((0..chain.len())
        .map(|k| {
            let mut row = Vec::new();
            chain.relaxed_row(t, &view, policy.control(k).weights_at(t), k, &mut row);
            let exit: f64 = row.iter().map(|e| e.1).sum();
            RateRow {
                node: k,
                diagonal: -exit,
                off_diagonal: row,
            }
        })
        .collect())
}

fn check_policy(chain: &LatticeChain, policy: &FeedbackPolicy) -> Result<()> {
    if policy.len() != chain.len() {
        return Err(Error::Structural(format!(
            "policy for {} nodes on a chain of {}",
            policy.len(),
            chain.len()
        )));
    }
    if policy.n_atoms() != chain.n_atoms() {
        return Err(Error::Structural(format!(
            "policy over {} atoms for a chain with {}",
            policy.n_atoms(),
            chain.n_atoms()
        )));
    }
    Ok(())
}

/// A solution `μ(·)` of the Kolmogorov forward equation.
#[derive(Clone, Debug)]
pub struct ChainFlow {
    times: Vec<f64>,
    mus: Vec<LatticeDistribution>,
    policy: FeedbackPolicy,
}

impl ChainFlow {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn distributions(&self) -> &[LatticeDistribution] {
        &self.mus
    }

    pub fn policy(&self) -> &FeedbackPolicy {
        &self.policy
    }

    pub fn at(&self, t: f64) -> Option<&LatticeDistribution> {
        find_time(&self.times, t).map(|k| &self.mus[k])
    }

    pub fn last(&self) -> &LatticeDistribution {
        self.mus.last().unwrap()
    }

    /// Linear interpolation of `μ(t)` between samples.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return self.mus[0].as_slice().to_vec();
        }
        if k >= self.times.len() {
            return self.last().as_slice().to_vec();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let lam = (t - t0) / (t1 - t0);
        self.mus[k - 1]
            .as_slice()
            .iter()
            .zip(self.mus[k].as_slice())
            .map(|(a, b)| a + lam * (b - a))
            .collect()
    }

    /// Largest `|μ_x̄(t) − μ_x̄(s)| − B·(t − s)` over all sampled pairs.
    pub fn rate_bound_excess(&self, bound: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.times.len() {
            for j in i..self.times.len() {
                let dt = self.times[j] - self.times[i];
                let diff = self.mus[i]
                    .as_slice()
                    .iter()
                    .zip(self.mus[j].as_slice())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(diff - bound * dt);
            }
        }
        worst
    }

    /// Concatenates a flow that starts where this one ends.
    pub(crate) fn append(&mut self, other: ChainFlow) -> Result<()> {
        let skip = usize::from(find_time(&[*self.times.last().unwrap()], other.times[0]).is_some());
        self.policy = self.policy.concat(&other.policy)?;
        self.times.extend_from_slice(&other.times[skip..]);
        self.mus.extend(other.mus.into_iter().skip(skip));
        Ok(())
    }
}

/// RK4 for `μ̇ = μ𝒬(t, μ, ζ)` on `[s, r]`, sampled at every step and every
/// time in `sync`.
///
/// Fails with a configuration error when `dt · B_Q · fan-out` exceeds
/// [`STABILITY_LIMIT`] and with a numerical error when an entry drops below
/// `-1e-12`.
pub fn integrate_kolmogorov(
    chain: &LatticeChain,
    mu0: &LatticeDistribution,
    policy: &FeedbackPolicy,
    s: f64,
    r: f64,
    dt: f64,
    sync: &[f64],
) -> Result<ChainFlow> {
    check_policy(chain, policy)?;
    if mu0.len() != chain.len() {
        return Err(Error::Structural(format!(
            "distribution of {} entries for {} nodes",
            mu0.len(),
            chain.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !policy.covers(s) || !policy.covers(r) {
        let (a, b) = policy.horizon();
        return Err(Error::Argument(format!(
            "[{s}, {r}] is not inside the policy horizon [{a}, {b}]"
        )));
    }
    if dt > chain.max_stable_dt() {
        return Err(Error::Configuration(format!(
            "time step {dt} violates dt·B_Q·fan-out ≤ {STABILITY_LIMIT} (B_Q = {}, fan-out = {}); use dt ≤ {:e}",
            chain.bound_q(),
            chain.fan_out(),
            chain.max_stable_dt()
        )));
    }
    let policy = policy.restrict(s, r)?;
    let mut breaks = policy.breakpoints();
    breaks.extend_from_slice(sync);
    let grid = step_grid(s, r, dt, &breaks)?;
    let n = chain.len();
    let mut mu = mu0.as_slice().to_vec();
    let mut mus = Vec::with_capacity(grid.len());
    mus.push(mu0.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let h = t1 - t0;
        let cells: Vec<&[f64]> = policy
            .controls()
            .iter()
            .map(|c| c.weights_on_step(t0, t1))
            .collect();
        chain.forward_rhs(t0, &mu, &cells, &mut k1);
        for i in 0..n {
            stage[i] = mu[i] + 0.5 * h * k1[i];
        }
        chain.forward_rhs(t0 + 0.5 * h, &stage, &cells, &mut k2);
        for i in 0..n {
            stage[i] = mu[i] + 0.5 * h * k2[i];
        }
        chain.forward_rhs(t0 + 0.5 * h, &stage, &cells, &mut k3);
        for i in 0..n {
            stage[i] = mu[i] + h * k3[i];
        }
        chain.forward_rhs(t1, &stage, &cells, &mut k4);
        for i in 0..n {
            mu[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some((k, v)) = mu
            .iter()
            .enumerate()
            .find(|(_, v)| **v < -NEGATIVE_MASS_TOL)
        {
            return Err(Error::Numerical(format!(
                "mass {v:e} at node {k} after the step ending at {t1}; reduce the time step"
            )));
        }
        mus.push(LatticeDistribution::from_vec_unchecked(mu.clone()));
    }
    Ok(ChainFlow {
        times: grid,
        mus,
        policy,
    })
}

/// Sampled checks of the approximation assumptions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Declared bound on the generator entries.
    #[serde(rename = "B_Q")]
    pub b_q: f64,
    /// Largest entry magnitude met while sampling.
    #[serde(rename = "B_Q_sampled")]
    pub b_q_sampled: f64,
    /// Declared ε.
    pub eps: f64,
    /// Largest distance from a sample of K to the node set.
    pub eps_space: f64,
    /// Largest drift defect at nodes where no rate was dropped.
    pub eps_drift_interior: Option<f64>,
    /// Largest drift defect at nodes where a rate was dropped.
    pub eps_drift_boundary: Option<f64>,
    /// Square root of the largest jump second moment.
    pub eps_var: f64,
    pub row_sum_defect: f64,
    pub boundary_rows: usize,
    pub nodes: usize,
    pub samples: usize,
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if rng.random_bool(0.5) {
        let mut mu = vec![0.0; n];
        mu[rng.random_range(0..n)] = 1.0;
        return mu;
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Samples `(t, μ)` and scans every row and atom of the generator.
pub fn verify_assumptions(
    chain: &LatticeChain,
    budget: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if budget == 0 {
        return Err(Error::Argument("sample budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &chain.grid;
    let d = grid.dim();
    let mut rep = AssumptionReport {
        b_q: chain.bound_q,
        b_q_sampled: 0.0,
        eps: chain.eps,
        eps_space: 0.0,
        eps_drift_interior: None,
        eps_drift_boundary: None,
        eps_var: 0.0,
        row_sum_defect: 0.0,
        boundary_rows: 0,
        nodes: grid.len(),
        samples: budget,
    };
    let problem = chain.problem();
    let mut var: f64 = 0.0;
    let mut row = Vec::new();
    let mut f = vec![0.0; d];
    for _ in 0..budget {
        let t = rng.random_range(0.0..=chain.horizon);
        let mu = random_distribution(&mut rng, grid.len());
        let view = chain.view(&mu);
        for k in 0..grid.len() {
            let x = grid.node(k);
            for a in 0..chain.n_atoms {
                row.clear();
                let dropped = chain.off_diagonal(t, &view, a, k, &mut row);
                let exit: f64 = row.iter().map(|e| e.1).sum();
                let diag = -exit;
                rep.b_q_sampled = rep.b_q_sampled.max(diag.abs());
                let mut sum = diag;
                let mut drift = vec![0.0; d];
                let mut jump = 0.0;
                for &(j, q) in &row {
                    rep.b_q_sampled = rep.b_q_sampled.max(q);
                    sum += q;
                    let y = grid.node(j);
                    for i in 0..d {
                        drift[i] += (y[i] - x[i]) * q;
                    }
                    jump += sq_dist(x, y) * q;
                }
                rep.row_sum_defect = rep.row_sum_defect.max(sum.abs());
                var = var.max(jump);
                if let Some(p) = problem {
                    p.eval(t, x, &view, a, &mut f);
                    let defect = sq_dist(&f, &drift).sqrt();
                    let slot = if dropped > 0.0 {
                        rep.boundary_rows += 1;
                        &mut rep.eps_drift_boundary
                    } else {
                        &mut rep.eps_drift_interior
                    };
                    *slot = Some(slot.unwrap_or(0.0).max(defect));
                }
            }
        }
    }
    rep.eps_var = var.sqrt();
    rep.eps_space = match problem {
        Some(p) => {
            let widest = p
                .domain
                .lo
                .iter()
                .zip(&p.domain.hi)
                .map(|(a, b)| b - a)
                .fold(0.0, f64::max);
            let cap = (1e5f64).powf(1.0 / d as f64).floor() as usize;
            let per_axis =
                ((4.0 * widest / grid.spacing()).ceil() as usize + 1).clamp(2, cap.max(2));
            check_a1(grid, &p.domain.regular_sample(per_axis))?
        }
        None => 0.0,
    };
    Ok(rep)
}

/// Settings of [`sample_jump_process`].
#[derive(Clone, Debug)]
pub struct JumpConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Times at which occupancy and displacement are recorded.
    pub eval_times: Vec<f64>,
    /// Number of sample paths returned in full.
    pub keep_paths: usize,
}

/// A sample path: the starting node and the accepted jumps `(time, node)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpPath {
    pub start: usize,
    pub jumps: Vec<(f64, usize)>,
}

/// Monte Carlo statistics of the jump process.
#[derive(Clone, Debug, Serialize)]
pub struct JumpSample {
    pub times: Vec<f64>,
    /// Empirical node frequencies at each evaluation time.
    pub occupancy: Vec<Vec<f64>>,
    /// `E‖X(t) − X(s)‖²`.
    pub mean_sq_displacement: Vec<f64>,
    /// Standard error of the estimate above.
    pub msd_std_error: Vec<f64>,
    pub paths: Vec<JumpPath>,
    pub n_samples: usize,
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w.max(0.0);
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Simulates the jump process whose rates are `𝒬(t, μ(t), ζ)`, with `μ(·)`
/// and `ζ` taken from `flow`, by thinning with the majorant `B_Q · fan-out`.
///
/// Sample `i` draws from stream `i` of a ChaCha generator seeded with
/// `seed`, so results do not depend on the thread count.
pub fn sample_jump_process(
    chain: &LatticeChain,
    flow: &ChainFlow,
    cfg: &JumpConfig,
) -> Result<JumpSample> {
    if cfg.n_samples == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    let (s, r) = (flow.times[0], *flow.times.last().unwrap());
    let mut eval = cfg.eval_times.clone();
    eval.sort_by(f64::total_cmp);
    if eval.iter().any(|&t| t < s || t > r) {
        return Err(Error::Argument(format!(
            "evaluation times must lie in [{s}, {r}]"
        )));
    }
    let majorant = chain.bound_q * chain.fan_out as f64;
    let mu0 = flow.mus[0].clamped();
    let total0: f64 = mu0.iter().sum();
    let policy = flow.policy();
    let results: Vec<(Vec<usize>, usize, Option<JumpPath>)> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let start = pick(&mu0, rng.random::<f64>() * total0);
            let mut node = start;
            let mut t = s;
            let mut at = Vec::with_capacity(eval.len());
            let mut jumps = Vec::new();
            let mut row = Vec::new();
            let exp = (majorant > 0.0).then(|| Exp::new(majorant).expect("positive rate"));
            loop {
                let next = match &exp {
                    Some(e) => t + e.sample(&mut rng),
                    None => f64::INFINITY,
                };
                while at.len() < eval.len() && eval[at.len()] < next {
                    at.push(node);
                }
                if next > r {
                    break;
                }
                let mu = flow.interpolate(next);
                let view = chain.view(&mu);
                chain.relaxed_row(
                    next,
                    &view,
                    policy.control(node).weights_at(next),
                    node,
                    &mut row,
                );
                let exit: f64 = row.iter().map(|e| e.1).sum();
                if exit > majorant * (1.0 + 1e-12) {
                    return Err(Error::Numerical(format!(
                        "exit rate {exit} above the thinning majorant {majorant}"
                    )));
                }
                let u = rng.random::<f64>() * majorant;
                if u < exit {
                    let q: Vec<f64> = row.iter().map(|e| e.1).collect();
                    node = row[pick(&q, u)].0;
                    if i < cfg.keep_paths {
                        jumps.push((next, node));
                    }
                }
                t = next;
            }
            while at.len() < eval.len() {
                at.push(node);
            }
            let path = (i < cfg.keep_paths).then_some(JumpPath { start, jumps });
            Ok((at, start, path))
        })
        .collect::<Result<_>>()?;
    let n = cfg.n_samples as f64;
    let mut occupancy = vec![vec![0.0; chain.len()]; eval.len()];
    let mut msd = vec![0.0; eval.len()];
    let mut msd2 = vec![0.0; eval.len()];
    let mut paths = Vec::new();
    for (at, start, path) in results {
        for (e, &k) in at.iter().enumerate() {
            occupancy[e][k] += 1.0;
            let d2 = sq_dist(chain.grid.node(k), chain.grid.node(start));
            msd[e] += d2;
            msd2[e] += d2 * d2;
        }
        paths.extend(path);
    }
    occupancy.iter_mut().flatten().for_each(|v| *v /= n);
    let mut se = vec![0.0; eval.len()];
    for e in 0..eval.len() {
        msd[e] /= n;
        let var = (msd2[e] / n - msd[e] * msd[e]).max(0.0);
        se[e] = (var / n).sqrt();
    }
    Ok(JumpSample {
        times: eval,
        occupancy,
        mean_sq_displacement: msd,
        msd_std_error: se,
        paths,
        n_samples: cfg.n_samples,
    })
}
