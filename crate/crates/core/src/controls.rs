//! Relaxed controls, distributions of controls and feedback policies.
//!
//! The control set U is a finite list of atoms ([`ControlAtomSet`]). A relaxed
//! control on `[s, r]` is a piecewise-constant family of probability vectors
//! over those atoms; since every cell carries a probability vector, the time
//! marginal is the Lebesgue measure on `[s, r]` by construction.

use serde::{Deserialize, Serialize};

use crate::dynamics::MfcFlow;
use crate::measures::WeightedCloud;
use crate::time_grid::find_time;
use crate::transport::wasserstein;
use crate::{Error, Result};

/// Tolerance on the sum of a probability vector over atoms.
pub const PROB_TOL: f64 = 1e-12;

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

fn check_prob(w: &[f64], what: &str) -> Result<()> {
    if let Some(v) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Argument(format!(
            "{what}: weight {v} is negative or not finite"
        )));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::Argument(format!(
            "{what}: weights sum to {s}, not 1"
        )));
    }
    Ok(())
}

/// The finite control set U with its pairwise Euclidean distances.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlAtomSet {
    atoms: Vec<Vec<f64>>,
    distances: Vec<f64>,
}

impl ControlAtomSet {
    pub fn new(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let dim = atoms
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Structural("control set is empty".into()))?;
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::Structural(
                "control atoms have different dimensions".into(),
            ));
        }
        let n = atoms.len();
        let mut distances = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = atoms[i]
                    .iter()
                    .zip(&atoms[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                distances[i * n + j] = d;
                distances[j * n + i] = d;
            }
        }
        Ok(Self { atoms, distances })
    }

    /// `per_axis` evenly spaced values of `[-1, 1]` on every axis of ℝᵏ
    /// (a single atom 0 when `per_axis == 1`).
    pub fn grid(dim: usize, per_axis: usize) -> Result<Self> {
        if dim == 0 || per_axis == 0 {
            return Err(Error::Argument(
                "control grid needs a positive dimension and atom count".into(),
            ));
        }
        let vals: Vec<f64> = if per_axis == 1 {
            vec![0.0]
        } else {
            (0..per_axis)
                .map(|k| -1.0 + 2.0 * k as f64 / (per_axis - 1) as f64)
                .collect()
        };
        let total = per_axis.pow(dim as u32);
        let atoms = (0..total)
            .map(|mut k| {
                let mut a = vec![0.0; dim];
                for i in (0..dim).rev() {
                    a[i] = vals[k % per_axis];
                    k /= per_axis;
                }
                a
            })
            .collect();
        Self::new(atoms)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k]
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.atoms.len() + j]
    }

    /// Largest atom norm.
    pub fn max_norm(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// A relaxed control: probability vectors over the atoms on the cells of an
/// explicit time grid. Cells are closed on the left; the last cell also
/// contains the right end of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedControl {
    time_grid: Vec<f64>,
    cells: Vec<Vec<f64>>,
}

impl RelaxedControl {
    pub fn new(time_grid: Vec<f64>, cells: Vec<Vec<f64>>) -> Result<Self> {
        if time_grid.len() < 2 || cells.len() != time_grid.len() - 1 {
            return Err(Error::Structural(format!(
                "{} breakpoints cannot carry {} cells",
                time_grid.len(),
                cells.len()
            )));
        }
        if time_grid.windows(2).any(|w| !(w[1] > w[0])) || time_grid.iter().any(|t| !t.is_finite())
        {
            return Err(Error::Argument(
                "control time grid is not strictly increasing".into(),
            ));
        }
        let k = cells[0].len();
        if k == 0 || cells.iter().any(|c| c.len() != k) {
            return Err(Error::Structural(
                "control cells have different atom counts".into(),
            ));
        }
        for c in &cells {
            check_prob(c, "relaxed control cell")?;
        }
        Ok(Self { time_grid, cells })
    }

    /// The same probability vector on the whole of `[s, r]`.
    pub fn constant(s: f64, r: f64, weights: Vec<f64>) -> Result<Self> {
        Self::new(vec![s, r], vec![weights])
    }

    /// The ordinary control that always plays atom `atom`.
    pub fn dirac(s: f64, r: f64, n_atoms: usize, atom: usize) -> Result<Self> {
        if atom >= n_atoms {
            return Err(Error::Structural(format!("atom {atom} out of {n_atoms}")));
        }
        let mut w = vec![0.0; n_atoms];
        w[atom] = 1.0;
        Self::constant(s, r, w)
    }

    pub fn uniform(s: f64, r: f64, n_atoms: usize) -> Result<Self> {
        Self::constant(s, r, uniform_vector(n_atoms))
    }

    pub fn start(&self) -> f64 {
        self.time_grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.time_grid.last().unwrap()
    }

    pub fn n_atoms(&self) -> usize {
        self.cells[0].len()
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn cells(&self) -> &[Vec<f64>] {
        &self.cells
    }

    /// Index of the cell containing `t` (clamped to the horizon).
    pub fn cell_index(&self, t: f64) -> usize {
        let k = self.time_grid.partition_point(|&b| b <= t);
        k.saturating_sub(1).min(self.cells.len() - 1)
    }

    /// `ξ(·|t)`.
    pub fn weights_at(&self, t: f64) -> &[f64] {
        &self.cells[self.cell_index(t)]
    }

    /// The cell in force on the step `[t0, t1]` (chosen at its midpoint).
    pub fn weights_on_step(&self, t0: f64, t1: f64) -> &[f64] {
        self.weights_at(0.5 * (t0 + t1))
    }

    /// Interior breakpoints.
    pub fn breakpoints(&self) -> &[f64] {
        &self.time_grid[1..self.time_grid.len() - 1]
    }

    fn check_within(&self, s: f64, r: f64) -> Result<()> {
        if !(r > s) {
            return Err(Error::Argument(format!("empty interval [{s}, {r}]")));
        }
        let (a, b) = (self.start(), self.end());
        if (s < a && !same_time(s, a)) || (r > b && !same_time(r, b)) {
            return Err(Error::Argument(format!(
                "[{s}, {r}] is not inside the horizon [{a}, {b}]"
            )));
        }
        Ok(())
    }

    /// The control clipped to `[s, r]`, splitting cells at `s` and `r`.
    pub fn restrict(&self, s: f64, r: f64) -> Result<Self> {
        self.check_within(s, r)?;
        let mut grid = vec![s];
        grid.extend(
            self.time_grid
                .iter()
                .copied()
                .filter(|&t| t > s && t < r && !same_time(t, s) && !same_time(t, r)),
        );
        grid.push(r);
        let cells = grid
            .windows(2)
            .map(|w| self.weights_on_step(w[0], w[1]).to_vec())
            .collect();
        Ok(Self {
            time_grid: grid,
            cells,
        })
    }
}

pub fn uniform_vector(n: usize) -> Vec<f64> {
    let mut w = vec![1.0 / n as f64; n];
    let s: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - s;
    w
}

/// `ξ₀ ⋄_{s₁} ξ₁`: ξ₀ on `[s₀, s₁)`, ξ₁ on `[s₁, s₂]`.
pub fn concat_controls(xi0: &RelaxedControl, xi1: &RelaxedControl) -> Result<RelaxedControl> {
    if !same_time(xi0.end(), xi1.start()) {
        return Err(Error::Argument(format!(
            "controls on [.., {}] and [{}, ..] do not abut",
            xi0.end(),
            xi1.start()
        )));
    }
    if xi0.n_atoms() != xi1.n_atoms() {
        return Err(Error::Structural(
            "controls over different atom sets".into(),
        ));
    }
    let mut time_grid = xi0.time_grid.clone();
    time_grid.extend_from_slice(&xi1.time_grid[1..]);
    let mut cells = xi0.cells.clone();
    cells.extend_from_slice(&xi1.cells);
    Ok(RelaxedControl { time_grid, cells })
}

/// Cellwise convex combination `Σₖ wₖ ξₖ` on the merged time grid.
pub fn mix_controls(weights: &[f64], controls: &[&RelaxedControl]) -> Result<RelaxedControl> {
    if weights.len() != controls.len() || controls.is_empty() {
        return Err(Error::Structural(
            "mixture needs one weight per control".into(),
        ));
    }
    check_prob(weights, "mixture")?;
    let first = controls[0];
    for c in controls {
        if !same_time(c.start(), first.start()) || !same_time(c.end(), first.end()) {
            return Err(Error::Argument(
                "mixed controls have different horizons".into(),
            ));
        }
        if c.n_atoms() != first.n_atoms() {
            return Err(Error::Structural(
                "mixed controls have different atom counts".into(),
            ));
        }
    }
    // Mixing copies of one control returns it unchanged, not up to rounding.
    let mut used = controls
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(c, _)| *c);
    if let Some(only) = used.next() {
        if used.all(|c| c == only) {
            return Ok(only.clone());
        }
    }
    let (s, r) = (first.start(), first.end());
    let mut inner: Vec<f64> = controls
        .iter()
        .flat_map(|c| c.breakpoints().iter().copied())
        .collect();
    inner.sort_by(f64::total_cmp);
    let mut grid = vec![s];
    for t in inner {
        if !same_time(t, *grid.last().unwrap()) && !same_time(t, r) {
            grid.push(t);
        }
    }
    grid.push(r);
    let k = first.n_atoms();
    let cells = grid
        .windows(2)
        .map(|w| {
            let mut cell = vec![0.0; k];
            for (&wt, c) in weights.iter().zip(controls) {
                if wt == 0.0 {
                    continue;
                }
                for (acc, v) in cell.iter_mut().zip(c.weights_on_step(w[0], w[1])) {
                    *acc += wt * v;
                }
            }
            cell
        })
        .collect();
    Ok(RelaxedControl {
        time_grid: grid,
        cells,
    })
}

/// One atom of a distribution of controls: a weight, an initial state and
/// the relaxed control applied from it.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlItem {
    pub weight: f64,
    pub state: Vec<f64>,
    pub control: RelaxedControl,
}

/// A finite distribution α ∈ 𝒜_{s,r}[m] of (initial state, relaxed control)
/// pairs. Its state marginal is [`ControlDistribution::base_cloud`].
#[derive(Clone, Debug, PartialEq)]
pub struct ControlDistribution {
    items: Vec<ControlItem>,
    horizon: (f64, f64),
}

impl ControlDistribution {
    pub fn new(items: Vec<ControlItem>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Structural("distribution of controls is empty".into()))?;
        let horizon = (first.control.start(), first.control.end());
        let dim = first.state.len();
        let n_atoms = first.control.n_atoms();
        for it in &items {
            if it.state.len() != dim || dim == 0 {
                return Err(Error::Structural(
                    "initial states have different dimensions".into(),
                ));
            }
            if !same_time(it.control.start(), horizon.0) || !same_time(it.control.end(), horizon.1)
            {
                return Err(Error::Argument(
                    "controls of a distribution must share the horizon".into(),
                ));
            }
            if it.control.n_atoms() != n_atoms {
                return Err(Error::Structural(
                    "controls of a distribution use different atom sets".into(),
                ));
            }
        }
        let w: Vec<f64> = items.iter().map(|i| i.weight).collect();
        check_prob(&w, "distribution of controls")?;
        Ok(Self { items, horizon })
    }

    /// Pairs every atom of `m` with the control returned by `law`.
    pub fn from_cloud(
        m: &WeightedCloud,
        mut law: impl FnMut(&[f64]) -> RelaxedControl,
    ) -> Result<Self> {
        Self::new(
            m.points()
                .zip(m.weights())
                .map(|(p, &w)| ControlItem {
                    weight: w,
                    state: p.to_vec(),
                    control: law(p),
                })
                .collect(),
        )
    }

    pub fn items(&self) -> &[ControlItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.items[0].state.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.items[0].control.n_atoms()
    }

    /// The projection `p¹♯α` as a cloud, one atom per item.
    pub fn base_cloud(&self) -> WeightedCloud {
        let dim = self.dim();
        let coords = self
            .items
            .iter()
            .flat_map(|i| i.state.iter().copied())
            .collect();
        let weights = self.items.iter().map(|i| i.weight).collect();
        WeightedCloud::from_parts_unchecked(dim, coords, weights)
    }

    /// Union of the interior breakpoints of all controls.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .items
            .iter()
            .flat_map(|i| i.control.breakpoints().iter().copied())
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| same_time(*a, *b));
        b
    }
}

fn endpoint_states<'a>(
    flow: &'a MfcFlow,
    alpha: &ControlDistribution,
    t: f64,
) -> Result<&'a WeightedCloud> {
    let k = find_time(flow.times(), t)
        .ok_or_else(|| Error::Argument(format!("time {t} is not sampled by the flow")))?;
    let cloud = &flow.clouds()[k];
    if cloud.len() != alpha.len() {
        return Err(Error::Coupling(format!(
            "flow carries {} items but the distribution has {}",
            cloud.len(),
            alpha.len()
        )));
    }
    Ok(cloud)
}

/// `α₀ ⋄_{s₁} α₁`.
///
/// `flow` must be the motion produced by `alpha0` (item-aligned). Each item
/// of α₀ is continued by the α₁-items whose initial state equals its
/// endpoint at `s1` (within 1e-9), weighted by their conditional weights.
pub fn concat_distributions(
    alpha0: &ControlDistribution,
    alpha1: &ControlDistribution,
    s1: f64,
    flow: &MfcFlow,
) -> Result<ControlDistribution> {
    if !same_time(alpha0.horizon.1, s1) || !same_time(alpha1.horizon.0, s1) {
        return Err(Error::Argument(format!(
            "distributions do not meet at {s1}"
        )));
    }
    let ends = endpoint_states(flow, alpha0, s1)?;
    let gap = wasserstein(&alpha1.base_cloud(), ends, 2.0)?;
    if gap > 1e-9 {
        return Err(Error::Coupling(format!(
            "the continuation starts from a cloud at W2 distance {gap:e} from the motion at {s1}"
        )));
    }
    let mut items = Vec::new();
    for (i, it0) in alpha0.items.iter().enumerate() {
        let x = ends.point(i);
        let matches: Vec<&ControlItem> = alpha1
            .items
            .iter()
            .filter(|it| it.state.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-9))
            .collect();
        let total: f64 = matches.iter().map(|m| m.weight).sum();
        if matches.is_empty() || !(total > 0.0) {
            if it0.weight == 0.0 {
                continue;
            }
            return Err(Error::Coupling(format!(
                "no continuation starts at the endpoint {x:?} of item {i}"
            )));
        }
        for m in matches {
            items.push(ControlItem {
                weight: it0.weight * (m.weight / total),
                state: it0.state.clone(),
                control: concat_controls(&it0.control, &m.control)?,
            });
        }
    }
    ControlDistribution::new(items)
}

/// `𝒯ˢ♯α`: every item `(w, y, ξ)` becomes `(w, x(s), ξ|[s, T])`.
pub fn transfer(
    alpha: &ControlDistribution,
    s: f64,
    flow: &MfcFlow,
) -> Result<ControlDistribution> {
    let (a, b) = alpha.horizon;
    if s < a && !same_time(s, a) || s > b || same_time(s, b) {
        return Err(Error::Argument(format!(
            "transfer time {s} outside [{a}, {b})"
        )));
    }
    if same_time(s, a) {
        return Ok(alpha.clone());
    }
    let states = endpoint_states(flow, alpha, s)?;
    let items = alpha
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            Ok(ControlItem {
                weight: it.weight,
                state: states.point(i).to_vec(),
                control: it.control.restrict(s, b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ControlDistribution {
        items,
        horizon: (s, b),
    })
}

/// Transfers `alpha` to `s` and restricts every control to `[s, r]`.
pub fn restrict_distribution(
    alpha: &ControlDistribution,
    s: f64,
    r: f64,
    flow: &MfcFlow,
) -> Result<ControlDistribution> {
    if !(r > s) {
        return Err(Error::Argument(format!("empty interval [{s}, {r}]")));
    }
    let moved = transfer(alpha, s, flow)?;
    let items = moved
        .items
        .into_iter()
        .map(|it| {
            Ok(ControlItem {
                control: it.control.restrict(s, r)?,
                ..it
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ControlDistribution {
        items,
        horizon: (s, r),
    })
}

/// One relaxed control per lattice node: ζ_𝒮 = (ζ_x̄)_{x̄∈𝒮}.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    controls: Vec<RelaxedControl>,
    horizon: (f64, f64),
}

impl FeedbackPolicy {
    pub fn new(controls: Vec<RelaxedControl>) -> Result<Self> {
        let first = controls
            .first()
            .ok_or_else(|| Error::Structural("policy has no nodes".into()))?;
        let horizon = (first.start(), first.end());
        if controls.iter().any(|c| {
            !same_time(c.start(), horizon.0)
                || !same_time(c.end(), horizon.1)
                || c.n_atoms() != first.n_atoms()
        }) {
            return Err(Error::Argument(
                "policy controls must share the horizon and atom set".into(),
            ));
        }
        Ok(Self { controls, horizon })
    }

    pub fn uniform(n_nodes: usize, s: f64, r: f64, n_atoms: usize) -> Result<Self> {
        Self::new(vec![RelaxedControl::uniform(s, r, n_atoms)?; n_nodes])
    }

    pub fn constant(n_nodes: usize, control: RelaxedControl) -> Result<Self> {
        Self::new(vec![control; n_nodes])
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }

    pub fn n_atoms(&self) -> usize {
        self.controls[0].n_atoms()
    }

    pub fn control(&self, node: usize) -> &RelaxedControl {
        &self.controls[node]
    }

    pub fn controls(&self) -> &[RelaxedControl] {
        &self.controls
    }

    /// Whether `t` lies in the horizon (with the usual relative slack).
    pub fn covers(&self, t: f64) -> bool {
        (t >= self.horizon.0 || same_time(t, self.horizon.0))
            && (t <= self.horizon.1 || same_time(t, self.horizon.1))
    }

    /// Nodewise restriction.
    pub fn restrict(&self, s: f64, r: f64) -> Result<Self> {
        Ok(Self {
            controls: self
                .controls
                .iter()
                .map(|c| c.restrict(s, r))
                .collect::<Result<_>>()?,
            horizon: (s, r),
        })
    }

    /// Nodewise concatenation `ζ ⋄ ζ'`.
    pub fn concat(&self, next: &Self) -> Result<Self> {
        if self.len() != next.len() {
            return Err(Error::Structural(
                "policies over different node sets".into(),
            ));
        }
        let controls = self
            .controls
            .iter()
            .zip(&next.controls)
            .map(|(a, b)| concat_controls(a, b))
            .collect::<Result<_>>()?;
        Ok(Self {
            controls,
            horizon: (self.horizon.0, next.horizon.1),
        })
    }

    /// Union of the interior breakpoints of all node controls.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .controls
            .iter()
            .flat_map(|c| c.breakpoints().iter().copied())
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| same_time(*a, *b));
        b
    }
}
