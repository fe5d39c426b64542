//! Particle integration of the controlled mean field system.
//!
//! Every item of a distribution of controls is a particle; all particles are
//! advanced together by classical RK4 so that the measure argument of the
//! vector field is always the stage-consistent empirical measure.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::controls::{ControlAtomSet, ControlDistribution, RelaxedControl};
use crate::measures::{BoxDomain, MeasureView, WeightedCloud};
use crate::time_grid::{find_time, step_grid};
use crate::transport::wasserstein;
use crate::{Error, Result};

/// A velocity field `f(t, x, m, u)`.
///
/// Implementations write the velocity into `out` (length `dim()`); they are
/// evaluated concurrently from several threads.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn velocity(&self, t: f64, x: &[f64], m: &MeasureView<'_>, u: &[f64], out: &mut [f64]);
}

/// A controlled mean field system: the field, the state box 𝒦, the control
/// atoms, the horizon `[0, T]` and the declared constants R and C_f.
#[derive(Clone)]
pub struct VectorFieldProblem {
    pub name: String,
    pub field: Arc<dyn VectorField>,
    pub domain: BoxDomain,
    pub atoms: ControlAtomSet,
    pub horizon: f64,
    /// Declared bound on ‖f‖.
    pub bound_r: f64,
    /// Declared Lipschitz constant in `(x, m)`.
    pub lipschitz: f64,
    /// Whether the constants are analytic (`true`) or sampled estimates.
    pub verified: bool,
}

impl fmt::Debug for VectorFieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("atoms", &self.atoms.len())
            .field("horizon", &self.horizon)
            .field("bound_r", &self.bound_r)
            .field("lipschitz", &self.lipschitz)
            .field("verified", &self.verified)
            .finish()
    }
}

impl VectorFieldProblem {
    /// A problem with analytically known constants.
    pub fn new(
        name: impl Into<String>,
        field: Arc<dyn VectorField>,
        domain: BoxDomain,
        atoms: ControlAtomSet,
        horizon: f64,
        bound_r: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        if field.dim() != domain.dim() {
            return Err(Error::Structural(format!(
                "field of dimension {} on a box of dimension {}",
                field.dim(),
                domain.dim()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Argument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(bound_r >= 0.0) || !(lipschitz >= 0.0) {
            return Err(Error::Argument(
                "declared constants must be nonnegative".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            field,
            domain,
            atoms,
            horizon,
            bound_r,
            lipschitz,
            verified: true,
        })
    }

    /// A user problem whose constants are replaced by sampled estimates.
    pub fn estimated(
        name: impl Into<String>,
        field: Arc<dyn VectorField>,
        domain: BoxDomain,
        atoms: ControlAtomSet,
        horizon: f64,
        budget: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut p = Self::new(name, field, domain, atoms, horizon, 0.0, 0.0)?;
        let est = estimate_constants(&p, budget, seed)?;
        p.bound_r = est.r_hat;
        p.lipschitz = est.cf_hat;
        p.verified = false;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `f(t, x, m, u_atom)`, identically zero outside 𝒦.
    pub fn eval(&self, t: f64, x: &[f64], m: &MeasureView<'_>, atom: usize, out: &mut [f64]) {
        if self.domain.contains(x) {
            self.field.velocity(t, x, m, self.atoms.atom(atom), out);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// `Σ_u ξ(u|t) f(t, x, m, u)` for one particle, written into `out`.
pub fn rhs_relaxed(
    problem: &VectorFieldProblem,
    t: f64,
    x: &[f64],
    m: &MeasureView<'_>,
    cell: &[f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if !problem.domain.contains(x) {
        return;
    }
    let mut tmp = vec![0.0; out.len()];
    for (a, &w) in cell.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        problem
            .field
            .velocity(t, x, m, problem.atoms.atom(a), &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += w * v;
        }
    }
}

/// A motion sampled on a time grid.
///
/// Flows produced by [`integrate_mfc`] are item-aligned: atom `i` of every
/// cloud is the position of item `i` of the source distribution.
#[derive(Clone, Debug)]
pub struct MfcFlow {
    times: Vec<f64>,
    clouds: Vec<WeightedCloud>,
    source: Option<ControlDistribution>,
}

impl MfcFlow {
    pub fn new(
        times: Vec<f64>,
        clouds: Vec<WeightedCloud>,
        source: Option<ControlDistribution>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != clouds.len() {
            return Err(Error::Structural(
                "flow needs one cloud per sampled time".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument(
                "flow times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            clouds,
            source,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clouds(&self) -> &[WeightedCloud] {
        &self.clouds
    }

    /// The distribution of controls that generated the flow, when known.
    pub fn source(&self) -> Option<&ControlDistribution> {
        self.source.as_ref()
    }

    pub fn at(&self, t: f64) -> Option<&WeightedCloud> {
        find_time(&self.times, t).map(|k| &self.clouds[k])
    }

    pub fn last(&self) -> &WeightedCloud {
        self.clouds.last().unwrap()
    }

    /// Path of item `i` (only meaningful for item-aligned flows).
    pub fn trajectory(&self, i: usize) -> Vec<Vec<f64>> {
        self.clouds.iter().map(|c| c.point(i).to_vec()).collect()
    }
}

/// Positions of an ensemble at each grid time.
pub(crate) struct EnsemblePath {
    pub times: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
}

fn project_into(domain: &BoxDomain, coords: &mut [f64]) {
    let d = domain.dim();
    for p in coords.chunks_exact_mut(d) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(domain.lo[i], domain.hi[i]);
        }
    }
}

fn ensemble_rhs(
    problem: &VectorFieldProblem,
    t: f64,
    y: &[f64],
    weights: &[f64],
    cells: &[&[f64]],
    out: &mut [f64],
) {
    let d = problem.dim();
    let view = MeasureView::new(d, y, weights);
    out.par_chunks_mut(d)
        .zip(y.par_chunks(d))
        .zip(cells.par_iter())
        .for_each(|((o, x), cell)| rhs_relaxed(problem, t, x, &view, cell, o));
}

/// RK4 on `[s, r]` for particles with their own relaxed controls.
///
/// Steps follow [`step_grid`] with the control breakpoints and `sync`
/// added, so every control is constant on every step.
pub(crate) fn integrate_items(
    problem: &VectorFieldProblem,
    coords0: Vec<f64>,
    weights: &[f64],
    controls: &[&RelaxedControl],
    s: f64,
    r: f64,
    dt: f64,
    sync: &[f64],
) -> Result<EnsemblePath> {
    let d = problem.dim();
    let n = weights.len();
    if coords0.len() != n * d || controls.len() != n {
        return Err(Error::Structural(
            "ensemble arrays have inconsistent lengths".into(),
        ));
    }
    let mut breaks: Vec<f64> = sync.to_vec();
    for c in controls {
        breaks.extend_from_slice(c.breakpoints());
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let grid = step_grid(s, r, dt, &breaks)?;
    let mut y = coords0;
    let mut coords = Vec::with_capacity(grid.len());
    coords.push(y.clone());
    let m = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut stage = vec![0.0; m];
    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let h = t1 - t0;
        let cells: Vec<&[f64]> = controls.iter().map(|c| c.weights_on_step(t0, t1)).collect();
        ensemble_rhs(problem, t0, &y, weights, &cells, &mut k1);
        for ((st, yv), k) in stage.iter_mut().zip(&y).zip(&k1) {
            *st = yv + 0.5 * h * k;
        }
        ensemble_rhs(problem, t0 + 0.5 * h, &stage, weights, &cells, &mut k2);
        for ((st, yv), k) in stage.iter_mut().zip(&y).zip(&k2) {
            *st = yv + 0.5 * h * k;
        }
        ensemble_rhs(problem, t0 + 0.5 * h, &stage, weights, &cells, &mut k3);
        for ((st, yv), k) in stage.iter_mut().zip(&y).zip(&k3) {
            *st = yv + h * k;
        }
        ensemble_rhs(problem, t1, &stage, weights, &cells, &mut k4);
        for i in 0..m {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        project_into(&problem.domain, &mut y);
        coords.push(y.clone());
    }
    Ok(EnsemblePath {
        times: grid,
        coords,
    })
}

pub(crate) fn check_in_domain(problem: &VectorFieldProblem, m: &WeightedCloud) -> Result<()> {
    if m.dim() != problem.dim() {
        return Err(Error::Structural(format!(
            "cloud of dimension {} for a problem of dimension {}",
            m.dim(),
            problem.dim()
        )));
    }
    for (i, (p, &w)) in m.points().zip(m.weights()).enumerate() {
        if w > 0.0 && !problem.domain.contains(p) {
            return Err(Error::Domain(format!(
                "initial atom {i} at {p:?} lies outside the state box"
            )));
        }
    }
    Ok(())
}

/// The motion `m(·, s, α)` on the horizon of `alpha`, sampled at every step
/// and at every time in `sync`.
pub fn integrate_mfc(
    problem: &VectorFieldProblem,
    alpha: &ControlDistribution,
    dt: f64,
    sync: &[f64],
) -> Result<MfcFlow> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if alpha.n_atoms() != problem.atoms.len() {
        return Err(Error::Structural(format!(
            "controls over {} atoms for a problem with {}",
            alpha.n_atoms(),
            problem.atoms.len()
        )));
    }
    let base = alpha.base_cloud();
    check_in_domain(problem, &base)?;
    let (s, r) = alpha.horizon();
    let controls: Vec<&RelaxedControl> = alpha.items().iter().map(|i| &i.control).collect();
    let (dim, coords0, weights) = base.into_parts();
    let path = integrate_items(problem, coords0, &weights, &controls, s, r, dt, sync)?;
    let clouds = path
        .coords
        .into_iter()
        .map(|c| WeightedCloud::from_parts_unchecked(dim, c, weights.clone()))
        .collect();
    Ok(MfcFlow {
        times: path.times,
        clouds,
        source: Some(alpha.clone()),
    })
}

/// Sampled estimates of the constants R and C_f.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub r_hat: f64,
    pub cf_hat: f64,
    pub r_declared: f64,
    pub cf_declared: f64,
    pub r_violated: bool,
    pub cf_violated: bool,
    pub samples: usize,
}

fn random_point(rng: &mut ChaCha8Rng, domain: &BoxDomain) -> Vec<f64> {
    domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(&a, &b)| if b > a { rng.random_range(a..=b) } else { a })
        .collect()
}

fn random_cloud(rng: &mut ChaCha8Rng, domain: &BoxDomain, n: usize) -> WeightedCloud {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| random_point(rng, domain)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - head;
    let coords = pts.concat();
    WeightedCloud::from_parts_unchecked(domain.dim(), coords, w)
}

fn nudge(rng: &mut ChaCha8Rng, domain: &BoxDomain, x: &[f64], delta: f64) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| (v + delta * rng.random_range(-1.0..=1.0)).clamp(domain.lo[i], domain.hi[i]))
        .collect()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Randomized check of `‖f‖ ≤ R` and of the Lipschitz bound in `x` and in
/// `m` (the latter against W₂), by finite-difference quotients.
pub fn estimate_constants(
    problem: &VectorFieldProblem,
    budget: usize,
    seed: u64,
) -> Result<ConstantsReport> {
    if budget == 0 {
        return Err(Error::Argument("sample budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dim();
    let delta = 1e-4 * problem.domain.diameter().max(1e-12);
    let (mut r_hat, mut cf_hat) = (0.0f64, 0.0f64);
    let (mut f0, mut f1) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..budget {
        let t = rng.random_range(0.0..=problem.horizon);
        let m = random_cloud(&mut rng, &problem.domain, 8);
        let x = random_point(&mut rng, &problem.domain);
        let atom = rng.random_range(0..problem.atoms.len());
        let view = m.view();
        problem.eval(t, &x, &view, atom, &mut f0);
        r_hat = r_hat.max(f0.iter().map(|v| v * v).sum::<f64>().sqrt());

        let x2 = nudge(&mut rng, &problem.domain, &x, delta);
        let dx = norm_diff(&x, &x2);
        if dx > 0.0 {
            problem.eval(t, &x2, &view, atom, &mut f1);
            r_hat = r_hat.max(f1.iter().map(|v| v * v).sum::<f64>().sqrt());
            cf_hat = cf_hat.max(norm_diff(&f0, &f1) / dx);
        }

        let moved: Vec<f64> = m
            .points()
            .flat_map(|p| nudge(&mut rng, &problem.domain, p, delta))
            .collect();
        let m2 = WeightedCloud::from_parts_unchecked(d, moved, m.weights().to_vec());
        let w2 = wasserstein(&m, &m2, 2.0)?;
        if w2 > 0.0 {
            problem.eval(t, &x, &m2.view(), atom, &mut f1);
            cf_hat = cf_hat.max(norm_diff(&f0, &f1) / w2);
        }
    }
    Ok(ConstantsReport {
        r_hat,
        cf_hat,
        r_declared: problem.bound_r,
        cf_declared: problem.lipschitz,
        r_violated: r_hat > problem.bound_r * (1.0 + 1e-9) + 1e-12,
        cf_violated: cf_hat > problem.lipschitz * (1.0 + 1e-6) + 1e-9,
        samples: budget,
    })
}
