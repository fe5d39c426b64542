//! Finite probability measures on ℝᵈ and on lattice node sets.
//!
//! Every measure handled by the crate is a finite weighted set of atoms.
//! A [`WeightedCloud`] stores atoms in ℝᵈ; a [`LatticeDistribution`] stores a
//! probability vector indexed by the nodes of a [`LatticeGrid`]. The map
//! [`embed_lattice`] turns the latter into the former (Σ δ_x̄ μ_x̄).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the total mass of a [`WeightedCloud`].
pub const CLOUD_MASS_TOL: f64 = 1e-12;
/// Tolerance on the total mass of a [`LatticeDistribution`].
pub const LATTICE_MASS_TOL: f64 = 1e-9;
/// Most negative entry tolerated in a lattice distribution (integrator drift).
pub const NEGATIVE_MASS_TOL: f64 = 1e-12;

/// Axis-aligned box `[lo₁, hi₁] × … × [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Structural(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(Error::Argument(format!(
                "box bounds {lo:?}..{hi:?} are not a proper box"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[-half_width, half_width]ᵈ`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Membership with a relative slack of 1e-12 on every face, so that
    /// lattice nodes computed as `k·h` on the boundary count as inside.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.lo.iter().zip(&self.hi).zip(x).all(|((&a, &b), &v)| {
            let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
            v >= a - slack && v <= b + slack
        })
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(x)
            .map(|((&a, &b), &v)| {
                let d = if v < a {
                    a - v
                } else if v > b {
                    v - b
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// The box grown by `r` on every face.
    pub fn expanded(&self, r: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|a| a - r).collect(),
            hi: self.hi.iter().map(|b| b + r).collect(),
        }
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Regular sample of the box with `per_axis` points per coordinate
    /// (endpoints included).
    pub fn regular_sample(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut k| {
                (0..d)
                    .map(|i| {
                        let idx = k % per_axis;
                        k /= per_axis;
                        self.lo[i] + (self.hi[i] - self.lo[i]) * idx as f64 / (per_axis - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// A probability measure given by finitely many weighted atoms in ℝᵈ.
///
/// Points are stored row-major in one flat buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCloud {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedCloud {
    /// Builds a cloud and checks every invariant: matching lengths,
    /// nonnegative weights, unit total mass within [`CLOUD_MASS_TOL`].
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Structural(
                "points of a cloud have different dimensions".into(),
            ));
        }
        Self::from_flat(dim, points.into_iter().flatten().collect(), weights)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural("cloud dimension must be positive".into()));
        }
        if weights.is_empty() {
            return Err(Error::Structural("cloud has no atoms".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::Structural(format!(
                "{} coordinates cannot hold {} points of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Argument(
                "cloud contains a non-finite coordinate".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Argument(format!(
                "cloud weight {w} is negative or not finite"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > CLOUD_MASS_TOL {
            return Err(Error::Argument(format!(
                "cloud weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            dim,
            coords,
            weights,
        })
    }

    /// Constructor for numerical pipelines whose mass bookkeeping has been
    /// checked upstream (plans, splitting, embeddings).
    pub(crate) fn from_parts_unchecked(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), dim * weights.len());
        Self {
            dim,
            coords,
            weights,
        }
    }

    /// The Dirac measure δ_z.
    pub fn dirac(z: Vec<f64>) -> Result<Self> {
        Self::new(vec![z], vec![1.0])
    }

    /// Equal weights on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Structural("cloud has no atoms".into()));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // Put the rounding residue on the last atom so the sum is 1 to the ulp.
        let s: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - s;
        Self::new(points, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        weighted_mean(self.dim, &self.coords, &self.weights)
    }

    /// Multiplies every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.iter().map(|c| c * s).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Borrowed view with the mean precomputed.
    pub fn view(&self) -> MeasureView<'_> {
        MeasureView::new(self.dim, &self.coords, &self.weights)
    }

    pub fn into_parts(self) -> (usize, Vec<f64>, Vec<f64>) {
        (self.dim, self.coords, self.weights)
    }
}

pub(crate) fn weighted_mean(dim: usize, coords: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for (p, &w) in coords.chunks_exact(dim).zip(weights) {
        for (m, &c) in mean.iter_mut().zip(p) {
            *m += w * c;
        }
    }
    mean
}

/// Read-only view of a finite measure handed to vector fields.
///
/// Vector fields are evaluated once per atom per stage, so the summary
/// statistics they typically need are computed once when the view is built.
#[derive(Clone, Debug)]
pub struct MeasureView<'a> {
    pub dim: usize,
    pub coords: &'a [f64],
    pub weights: &'a [f64],
    pub mean: Vec<f64>,
}

impl<'a> MeasureView<'a> {
    pub fn new(dim: usize, coords: &'a [f64], weights: &'a [f64]) -> Self {
        Self {
            dim,
            coords,
            weights,
            mean: weighted_mean(dim, coords, weights),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (&'a [f64], f64)> + '_ {
        self.coords
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }
}

/// `ς₂(m) = (Σᵢ wᵢ‖xᵢ‖²)^{1/2}`.
pub fn second_moment(m: &WeightedCloud) -> f64 {
    m.points()
        .zip(m.weights())
        .map(|(p, w)| w * p.iter().map(|c| c * c).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Layout of a regular lattice: node `k` has integer coordinates
/// `origin + unravel(k)` and position `h · (integer coordinates)`.
#[derive(Clone, Debug, PartialEq)]
struct RegularIndex {
    origin: Vec<i64>,
    counts: Vec<usize>,
}

/// The finite node set 𝒮 of a lattice chain.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGrid {
    dim: usize,
    spacing: f64,
    nodes: Vec<f64>,
    bounds: BoxDomain,
    regular: Option<RegularIndex>,
}

impl LatticeGrid {
    /// Nodes of `(K grown by h) ∩ hℤᵈ` for a box `K`.
    ///
    /// Fails with a resource error when the node count exceeds `max_nodes`.
    pub fn regular(domain: &BoxDomain, h: f64, max_nodes: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Argument(format!(
                "lattice spacing must be positive, got {h}"
            )));
        }
        let bounds = domain.expanded(h);
        let d = domain.dim();
        let mut origin = Vec::with_capacity(d);
        let mut counts = Vec::with_capacity(d);
        let mut total: usize = 1;
        for i in 0..d {
            let lo = (bounds.lo[i] / h - 1e-9).ceil() as i64;
            let hi = (bounds.hi[i] / h + 1e-9).floor() as i64;
            if hi < lo {
                return Err(Error::Argument(format!("no lattice node on axis {i}")));
            }
            let c = (hi - lo + 1) as usize;
            total = total
                .checked_mul(c)
                .filter(|&t| t <= max_nodes)
                .ok_or_else(|| {
                    Error::Resource(format!(
                        "lattice with spacing {h} needs more than the {max_nodes} allowed nodes"
                    ))
                })?;
            origin.push(lo);
            counts.push(c);
        }
        let mut nodes = Vec::with_capacity(total * d);
        for k in 0..total {
            let mut rem = k;
            // Last axis varies fastest.
            let mut idx = vec![0usize; d];
            for i in (0..d).rev() {
                idx[i] = rem % counts[i];
                rem /= counts[i];
            }
            for i in 0..d {
                nodes.push((origin[i] + idx[i] as i64) as f64 * h);
            }
        }
        Ok(Self {
            dim: d,
            spacing: h,
            nodes,
            bounds,
            regular: Some(RegularIndex { origin, counts }),
        })
    }

    /// An arbitrary finite node set. `spacing` is recorded for reporting
    /// (it plays the role of h in jump-size statistics).
    pub fn from_nodes(nodes: Vec<Vec<f64>>, spacing: f64) -> Result<Self> {
        let dim = nodes.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || nodes.iter().any(|n| n.len() != dim) {
            return Err(Error::Structural(
                "lattice nodes must be nonempty vectors of one dimension".into(),
            ));
        }
        for i in 0..nodes.len() {
            for j in 0..i {
                if nodes[i] == nodes[j] {
                    return Err(Error::Structural(format!(
                        "lattice nodes {j} and {i} coincide"
                    )));
                }
            }
        }
        let lo = (0..dim)
            .map(|k| nodes.iter().map(|n| n[k]).fold(f64::INFINITY, f64::min))
            .collect::<Vec<_>>();
        let hi = (0..dim)
            .map(|k| nodes.iter().map(|n| n[k]).fold(f64::NEG_INFINITY, f64::max))
            .collect::<Vec<_>>();
        Ok(Self {
            dim,
            spacing,
            nodes: nodes.into_iter().flatten().collect(),
            bounds: BoxDomain { lo, hi },
            regular: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn bounds(&self) -> &BoxDomain {
        &self.bounds
    }

    pub fn is_regular(&self) -> bool {
        self.regular.is_some()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.nodes
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    fn ravel(&self, reg: &RegularIndex, idx: &[i64]) -> Option<usize> {
        let mut k = 0usize;
        for i in 0..self.dim {
            let off = idx[i] - reg.origin[i];
            if off < 0 || off as usize >= reg.counts[i] {
                return None;
            }
            k = k * reg.counts[i] + off as usize;
        }
        Some(k)
    }

    /// Index of the node `node + step·h·e_axis`, if it belongs to the grid.
    /// Only regular grids have neighbours.
    pub fn neighbor(&self, node: usize, axis: usize, step: i64) -> Option<usize> {
        let reg = self.regular.as_ref()?;
        let mut idx = self.integer_coords(reg, node);
        idx[axis] += step;
        self.ravel(reg, &idx)
    }

    fn integer_coords(&self, reg: &RegularIndex, mut k: usize) -> Vec<i64> {
        let mut idx = vec![0i64; self.dim];
        for i in (0..self.dim).rev() {
            idx[i] = reg.origin[i] + (k % reg.counts[i]) as i64;
            k /= reg.counts[i];
        }
        idx
    }

    /// Index of the node located at `x` (up to 1e-9·h), if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim {
            return None;
        }
        match &self.regular {
            Some(reg) => {
                let mut idx = Vec::with_capacity(self.dim);
                for &v in x {
                    let r = (v / self.spacing).round();
                    if (v - r * self.spacing).abs() > 1e-9 * self.spacing.max(1e-300) {
                        return None;
                    }
                    idx.push(r as i64);
                }
                self.ravel(reg, &idx)
            }
            None => self.nodes().position(|n| n == x),
        }
    }

    /// Index of a nearest node (ties go to the lowest index).
    pub fn nearest(&self, x: &[f64]) -> usize {
        if let Some(reg) = &self.regular {
            let idx: Vec<i64> = x
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let r = (v / self.spacing).round() as i64;
                    r.clamp(reg.origin[i], reg.origin[i] + reg.counts[i] as i64 - 1)
                })
                .collect();
            return self
                .ravel(reg, &idx)
                .expect("clamped index lies on the grid");
        }
        let mut best = (f64::INFINITY, 0);
        for (k, n) in self.nodes().enumerate() {
            let d = sq_dist(n, x);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A probability vector indexed by the nodes of a grid (an element of Σ).
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDistribution {
    mu: Vec<f64>,
}

impl LatticeDistribution {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Structural("lattice distribution is empty".into()));
        }
        if let Some(v) = mu
            .iter()
            .find(|v| !v.is_finite() || **v < -NEGATIVE_MASS_TOL)
        {
            return Err(Error::Argument(format!("lattice mass {v} is negative")));
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > LATTICE_MASS_TOL {
            return Err(Error::Argument(format!(
                "lattice masses sum to {total}, not 1"
            )));
        }
        Ok(Self { mu })
    }

    pub(crate) fn from_vec_unchecked(mu: Vec<f64>) -> Self {
        Self { mu }
    }

    pub fn dirac(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return Err(Error::Structural(format!(
                "node {at} outside a grid of {len} nodes"
            )));
        }
        let mut mu = vec![0.0; len];
        mu[at] = 1.0;
        Ok(Self { mu })
    }

    /// Sends every atom of `m` to its nearest grid node.
    pub fn project(m: &WeightedCloud, grid: &LatticeGrid) -> Result<Self> {
        if m.dim() != grid.dim() {
            return Err(Error::Structural(format!(
                "cloud of dimension {} projected on a grid of dimension {}",
                m.dim(),
                grid.dim()
            )));
        }
        let mut mu = vec![0.0; grid.len()];
        for (p, &w) in m.points().zip(m.weights()) {
            mu[grid.nearest(p)] += w;
        }
        Self::new(mu)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mu
    }

    /// Entries with the tolerated negative drift clamped to zero.
    pub fn clamped(&self) -> Vec<f64> {
        self.mu.iter().map(|&v| v.max(0.0)).collect()
    }
}

/// `𝓘(μ) = Σ δ_x̄ μ_x̄`, dropping zero-mass nodes.
pub fn embed_lattice(mu: &LatticeDistribution, grid: &LatticeGrid) -> Result<WeightedCloud> {
    embed_lattice_with_ids(mu, grid).map(|(cloud, _)| cloud)
}

/// Like [`embed_lattice`], also returning the node index of each atom.
pub fn embed_lattice_with_ids(
    mu: &LatticeDistribution,
    grid: &LatticeGrid,
) -> Result<(WeightedCloud, Vec<usize>)> {
    if mu.len() != grid.len() {
        return Err(Error::Structural(format!(
            "distribution has {} entries for a grid of {} nodes",
            mu.len(),
            grid.len()
        )));
    }
    let total: f64 = mu.mu.iter().sum();
    if (total - 1.0).abs() > LATTICE_MASS_TOL || mu.mu.iter().any(|&v| v < -NEGATIVE_MASS_TOL) {
        return Err(Error::Argument(format!(
            "lattice masses sum to {total}, not 1"
        )));
    }
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut ids = Vec::new();
    for (k, &v) in mu.mu.iter().enumerate() {
        if v > 0.0 {
            coords.extend_from_slice(grid.node(k));
            weights.push(v);
            ids.push(k);
        }
    }
    Ok((
        WeightedCloud::from_parts_unchecked(grid.dim(), coords, weights),
        ids,
    ))
}

/// Largest distance from a sample point to its nearest node, an estimate of
/// `max_{x∈K} min_{ȳ∈𝒮} ‖x − ȳ‖`.
pub fn check_a1(grid: &LatticeGrid, samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("A1 check needs at least one sample".into()));
    }
    let mut worst: f64 = 0.0;
    for s in samples {
        if s.len() != grid.dim() {
            return Err(Error::Structural(
                "sample dimension differs from the grid".into(),
            ));
        }
        let best = if grid.is_regular() {
            sq_dist(grid.node(grid.nearest(s)), s)
        } else {
            grid.nodes()
                .map(|n| sq_dist(n, s))
                .fold(f64::INFINITY, f64::min)
        };
        worst = worst.max(best.sqrt());
    }
    Ok(worst)
}

/// Merges atoms that lie within `tol / 2` of a cluster seed into their
/// weighted barycenter, so that no atom moves by more than `tol`.
///
/// Seeds are taken in order of the first coordinate (ties by index); the
/// output keeps that order. Total mass and mean are preserved.
pub fn coalesce(m: &WeightedCloud, tol: f64) -> WeightedCloud {
    coalesce_with_groups(m, tol).0
}

/// [`coalesce`] that also returns, for each output atom, the input atoms it
/// absorbed (in ascending index order).
pub fn coalesce_with_groups(m: &WeightedCloud, tol: f64) -> (WeightedCloud, Vec<Vec<usize>>) {
    let d = m.dim();
    let n = m.len();
    let radius = (tol.max(0.0)) / 2.0;
    let r2 = radius * radius;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m.point(a)[0].total_cmp(&m.point(b)[0]).then(a.cmp(&b)));
    let mut taken = vec![false; n];
    let mut coords = Vec::with_capacity(m.coords.len());
    let mut weights = Vec::with_capacity(n);
    let mut groups = Vec::new();
    for (pos, &seed) in order.iter().enumerate() {
        if taken[seed] {
            continue;
        }
        let sp = m.point(seed);
        let mut members = vec![seed];
        taken[seed] = true;
        for &other in &order[pos + 1..] {
            let op = m.point(other);
            if op[0] - sp[0] > radius {
                break;
            }
            if !taken[other] && sq_dist(sp, op) <= r2 {
                taken[other] = true;
                members.push(other);
            }
        }
        if members.len() == 1 {
            coords.extend_from_slice(sp);
            weights.push(m.weights[seed]);
        } else {
            let w: f64 = members.iter().map(|&i| m.weights[i]).sum();
            let mut bary = vec![0.0; d];
            if w > 0.0 {
                for &i in &members {
                    for (b, c) in bary.iter_mut().zip(m.point(i)) {
                        *b += m.weights[i] * c;
                    }
                }
                bary.iter_mut().for_each(|b| *b /= w);
            } else {
                bary.copy_from_slice(sp);
            }
            coords.extend_from_slice(&bary);
            weights.push(w);
        }
        members.sort_unstable();
        groups.push(members);
    }
    (
        WeightedCloud::from_parts_unchecked(d, coords, weights),
        groups,
    )
}
