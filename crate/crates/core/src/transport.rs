//! Exact discrete optimal transport between finite clouds.
//!
//! [`optimal_plan`] solves the transportation problem with a primal network
//! simplex specialised to the complete bipartite graph (the classical
//! "stepping stone"/MODI method). The basis is a spanning tree with exactly
//! `n + m − 1` cells, so solver output is a sparse vertex of the transport
//! polytope. The initial basis comes from the north-west corner rule applied
//! to atoms sorted along the first coordinate; on the line this is already
//! the monotone (optimal) coupling for both supported costs.
//!
//! [`brute_force_plan`] enumerates every spanning tree of the bipartite graph
//! and keeps the cheapest feasible basic solution. It is exponential and only
//! serves as an independent oracle on supports of at most five atoms.

use serde::{Deserialize, Serialize};

use crate::measures::WeightedCloud;
use crate::{Error, Result};

/// Largest admissible total-mass mismatch between the two marginals.
pub const BALANCE_TOL: f64 = 1e-9;
/// Flows below this fraction of the total mass are rounding residue of the
/// pivots and are removed from solver output.
pub const MASS_DUST: f64 = 1e-13;
/// Largest support size accepted by [`brute_force_plan`].
pub const BRUTE_FORCE_MAX: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// A coupling π ∈ Π(a, b) between two finite-support measures.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    /// Nonzero entries sorted by `(source, target)`.
    pub entries: Vec<PlanEntry>,
    pub n_source: usize,
    pub n_target: usize,
    pub p: f64,
    /// Σ mass · ‖xᵢ − yⱼ‖ᵖ.
    pub cost: f64,
    pub source_ref: Option<String>,
    pub target_ref: Option<String>,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_source];
        for e in &self.entries {
            s[e.source] += e.mass;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_target];
        for e in &self.entries {
            s[e.target] += e.mass;
        }
        s
    }

    /// Largest deviation of the plan's marginals from the given weights.
    pub fn marginal_error(&self, source_weights: &[f64], target_weights: &[f64]) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let r = rows
            .iter()
            .zip(source_weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let c = cols
            .iter()
            .zip(target_weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }

    /// Checks the marginal constraints against two clouds.
    pub fn check_marginals(&self, a: &WeightedCloud, b: &WeightedCloud, tol: f64) -> Result<()> {
        if self.n_source != a.len() || self.n_target != b.len() {
            return Err(Error::Structural(format!(
                "plan of shape {}x{} against clouds of sizes {} and {}",
                self.n_source,
                self.n_target,
                a.len(),
                b.len()
            )));
        }
        let err = self.marginal_error(a.weights(), b.weights());
        if err > tol {
            return Err(Error::Coupling(format!(
                "plan marginals deviate by {err:e}"
            )));
        }
        Ok(())
    }

    /// Recomputes Σ mass · ‖xᵢ − yⱼ‖ᵖ on the given clouds.
    pub fn evaluate_cost(&self, a: &WeightedCloud, b: &WeightedCloud) -> f64 {
        self.entries
            .iter()
            .map(|e| e.mass * ground_cost(a.point(e.source), b.point(e.target), self.p))
            .sum()
    }
}

fn ground_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if p == 2.0 {
        sq
    } else {
        sq.sqrt()
    }
}

fn validate(a: &WeightedCloud, b: &WeightedCloud, p: f64) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Argument(format!(
            "clouds have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if p != 1.0 && p != 2.0 {
        return Err(Error::Argument(format!(
            "only p = 1 and p = 2 are supported, got {p}"
        )));
    }
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > BALANCE_TOL {
        return Err(Error::Argument(format!("unbalanced masses {ma} and {mb}")));
    }
    Ok(())
}

fn cost_matrix(a: &WeightedCloud, b: &WeightedCloud, p: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for x in a.points() {
        for y in b.points() {
            c.push(ground_cost(x, y, p));
        }
    }
    c
}

/// An optimal coupling of `a` and `b` for the cost ‖x − y‖ᵖ, p ∈ {1, 2}.
pub fn optimal_plan(a: &WeightedCloud, b: &WeightedCloud, p: f64) -> Result<TransportPlan> {
    validate(a, b, p)?;
    let n = a.len();
    let m = b.len();
    let cost = cost_matrix(a, b, p);
    // Rescale the target so that both sides carry exactly the same mass.
    let scale = a.total_mass() / b.total_mass();
    let demand: Vec<f64> = b.weights().iter().map(|w| w * scale).collect();
    let order_a = sorted_order(a);
    let order_b = sorted_order(b);
    let mut solver = Simplex::new(n, m, &cost, a.weights(), &demand, &order_a, &order_b);
    solver.run()?;
    let dust = MASS_DUST * a.total_mass();
    let mut entries: Vec<PlanEntry> = solver
        .basis
        .iter()
        .filter(|c| c.flow > dust)
        .map(|c| PlanEntry {
            source: c.i,
            target: c.j,
            mass: c.flow,
        })
        .collect();
    entries.sort_by_key(|e| (e.source, e.target));
    let total = entries
        .iter()
        .map(|e| e.mass * cost[e.source * m + e.target])
        .sum();
    Ok(TransportPlan {
        entries,
        n_source: n,
        n_target: m,
        p,
        cost: total,
        source_ref: None,
        target_ref: None,
    })
}

/// `W_p(a, b)`.
pub fn wasserstein(a: &WeightedCloud, b: &WeightedCloud, p: f64) -> Result<f64> {
    let plan = optimal_plan(a, b, p)?;
    Ok(if p == 2.0 {
        plan.cost.max(0.0).sqrt()
    } else {
        plan.cost.max(0.0)
    })
}

fn sorted_order(c: &WeightedCloud) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&x, &y| c.point(x)[0].total_cmp(&c.point(y)[0]).then(x.cmp(&y)));
    idx
}

#[derive(Clone, Copy, Debug)]
struct BasicCell {
    i: usize,
    j: usize,
    flow: f64,
}

const NONE: usize = usize::MAX;

/// Primal transportation simplex on a spanning-tree basis.
///
/// Tree nodes `0..n` are sources, `n..n+m` targets. Node potentials satisfy
/// `pot[i] + pot[n + j] = c_ij` on basic cells.
struct Simplex<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    basis: Vec<BasicCell>,
    adj: Vec<Vec<usize>>,
    parent_edge: Vec<usize>,
    parent_node: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    cursor: usize,
    tol: f64,
}

impl<'a> Simplex<'a> {
    fn new(
        n: usize,
        m: usize,
        cost: &'a [f64],
        supply: &[f64],
        demand: &[f64],
        order_a: &[usize],
        order_b: &[usize],
    ) -> Self {
        // North-west corner rule on the sorted orders. When a row and a
        // column are exhausted together only the row advances, which keeps
        // exactly n + m − 1 (possibly zero) basic cells forming a tree.
        let mut basis = Vec::with_capacity(n + m - 1);
        let (mut ii, mut jj) = (0, 0);
        let mut ra = supply[order_a[0]];
        let mut rb = demand[order_b[0]];
        loop {
            let i = order_a[ii];
            let j = order_b[jj];
            if ii == n - 1 && jj == m - 1 {
                // Absorb rounding residue in the last cell.
                basis.push(BasicCell {
                    i,
                    j,
                    flow: ra.max(rb).max(0.0),
                });
                break;
            }
            let x = ra.min(rb).max(0.0);
            basis.push(BasicCell { i, j, flow: x });
            ra -= x;
            rb -= x;
            if jj == m - 1 || (ii < n - 1 && ra <= rb) {
                ii += 1;
                ra = supply[order_a[ii]];
            } else {
                jj += 1;
                rb = demand[order_b[jj]];
            }
        }
        let cmax = cost.iter().fold(0.0f64, |acc, &c| acc.max(c.abs()));
        let mut s = Self {
            n,
            m,
            cost,
            basis,
            adj: vec![Vec::new(); n + m],
            parent_edge: vec![NONE; n + m],
            parent_node: vec![NONE; n + m],
            depth: vec![0; n + m],
            pot: vec![0.0; n + m],
            cursor: 0,
            tol: 1e-13 * cmax.max(f64::MIN_POSITIVE),
        };
        for (e, c) in s.basis.iter().enumerate() {
            s.adj[c.i].push(e);
            s.adj[n + c.j].push(e);
        }
        s
    }

    fn other_end(&self, e: usize, node: usize) -> usize {
        let c = self.basis[e];
        if node == c.i {
            self.n + c.j
        } else {
            c.i
        }
    }

    /// Recomputes parents, depths and potentials by a traversal from node 0.
    fn rebuild_tree(&mut self) {
        let total = self.n + self.m;
        let mut visited = vec![false; total];
        let mut stack = vec![0usize];
        visited[0] = true;
        self.parent_edge[0] = NONE;
        self.parent_node[0] = NONE;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        while let Some(v) = stack.pop() {
            for k in 0..self.adj[v].len() {
                let e = self.adj[v][k];
                let w = self.other_end(e, v);
                if visited[w] {
                    continue;
                }
                visited[w] = true;
                self.parent_edge[w] = e;
                self.parent_node[w] = v;
                self.depth[w] = self.depth[v] + 1;
                let c = self.basis[e];
                self.pot[w] = self.cost[c.i * self.m + c.j] - self.pot[v];
                stack.push(w);
            }
        }
        debug_assert!(visited.iter().all(|&v| v), "basis is not a spanning tree");
    }

    fn reduced_cost(&self, k: usize) -> f64 {
        let (i, j) = (k / self.m, k % self.m);
        self.cost[k] - self.pot[i] - self.pot[self.n + j]
    }

    /// Block pricing: scans blocks of cells starting at a moving cursor and
    /// returns the most negative reduced cost of the first block containing
    /// an eligible cell.
    fn price_block(&mut self) -> Option<usize> {
        let total = self.n * self.m;
        let block = ((total as f64).sqrt().ceil() as usize).max(16).min(total);
        let mut scanned = 0;
        let mut best: Option<(f64, usize)> = None;
        while scanned < total {
            let end = (scanned + block).min(total);
            for _ in scanned..end {
                let k = self.cursor;
                self.cursor = (self.cursor + 1) % total;
                let rc = self.reduced_cost(k);
                if rc < -self.tol && best.is_none_or(|(b, _)| rc < b) {
                    best = Some((rc, k));
                }
            }
            scanned = end;
            if best.is_some() {
                break;
            }
        }
        best.map(|(_, k)| k)
    }

    /// Bland's rule: the eligible cell of smallest index.
    fn price_bland(&self) -> Option<usize> {
        (0..self.n * self.m).find(|&k| self.reduced_cost(k) < -self.tol)
    }

    fn run(&mut self) -> Result<()> {
        let max_iter = 50 * (self.n * self.m + self.n + self.m) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            self.rebuild_tree();
            let bland = degenerate_run > self.n + self.m;
            let entering = if bland {
                self.price_bland()
            } else {
                self.price_block()
            };
            let Some(k) = entering else {
                return Ok(());
            };
            let theta = self.pivot(k / self.m, k % self.m, bland);
            if theta <= 0.0 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
        }
        Err(Error::Numerical(format!(
            "transportation simplex did not terminate on a {}x{} instance",
            self.n, self.m
        )))
    }

    /// Pivots cell (i, j) into the basis and returns the step length.
    fn pivot(&mut self, i: usize, j: usize, bland: bool) -> f64 {
        // Tree path from source node i to target node n + j.
        let mut a = i;
        let mut b = self.n + j;
        let mut up_a = Vec::new();
        let mut up_b = Vec::new();
        while self.depth[a] > self.depth[b] {
            up_a.push(self.parent_edge[a]);
            a = self.parent_node[a];
        }
        while self.depth[b] > self.depth[a] {
            up_b.push(self.parent_edge[b]);
            b = self.parent_node[b];
        }
        while a != b {
            up_a.push(self.parent_edge[a]);
            a = self.parent_node[a];
            up_b.push(self.parent_edge[b]);
            b = self.parent_node[b];
        }
        let path: Vec<usize> = up_a.into_iter().chain(up_b.into_iter().rev()).collect();
        // Even positions lose flow, odd positions gain it.
        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 != 0 {
                continue;
            }
            let f = self.basis[e].flow;
            let better = if f < theta {
                true
            } else if f == theta && bland {
                let (c, l) = (self.basis[e], self.basis[leaving]);
                c.i * self.m + c.j < l.i * self.m + l.j
            } else {
                false
            };
            if better {
                theta = f;
                leaving = e;
            }
        }
        let theta = theta.max(0.0);
        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 == 0 {
                self.basis[e].flow -= theta;
            } else {
                self.basis[e].flow += theta;
            }
        }
        // Swap the leaving cell for the entering one in place.
        let old = self.basis[leaving];
        self.adj[old.i].retain(|&x| x != leaving);
        self.adj[self.n + old.j].retain(|&x| x != leaving);
        self.basis[leaving] = BasicCell { i, j, flow: theta };
        self.adj[i].push(leaving);
        self.adj[self.n + j].push(leaving);
        for c in self.basis.iter_mut() {
            if c.flow < 0.0 {
                c.flow = 0.0;
            }
        }
        theta
    }
}

/// Which marginal a disintegration conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

/// One conditional distribution π(·|x) of a disintegration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalRow {
    /// Index of the conditioning atom.
    pub atom: usize,
    /// Its marginal mass.
    pub marginal: f64,
    /// `(index on the other side, conditional probability)`.
    pub probs: Vec<(usize, f64)>,
}

/// The family of conditionals of a plan given one of its marginals.
///
/// Atoms of zero marginal mass have no row.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    pub side: Side,
    pub rows: Vec<ConditionalRow>,
}

impl ConditionalTable {
    pub fn row(&self, atom: usize) -> Option<&ConditionalRow> {
        self.rows
            .binary_search_by_key(&atom, |r| r.atom)
            .ok()
            .map(|k| &self.rows[k])
    }

    /// `marginal · conditional`, i.e. the plan entries back.
    pub fn recombine(&self) -> Vec<PlanEntry> {
        let mut out: Vec<PlanEntry> = self
            .rows
            .iter()
            .flat_map(|r| {
                r.probs.iter().map(move |&(other, q)| {
                    let mass = r.marginal * q;
                    match self.side {
                        Side::Source => PlanEntry {
                            source: r.atom,
                            target: other,
                            mass,
                        },
                        Side::Target => PlanEntry {
                            source: other,
                            target: r.atom,
                            mass,
                        },
                    }
                })
            })
            .collect();
        out.sort_by_key(|e| (e.source, e.target));
        out
    }
}

/// Conditional distributions of `plan` given the chosen marginal.
pub fn disintegrate(plan: &TransportPlan, side: Side) -> ConditionalTable {
    let n = match side {
        Side::Source => plan.n_source,
        Side::Target => plan.n_target,
    };
    let mut grouped: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &plan.entries {
        match side {
            Side::Source => grouped[e.source].push((e.target, e.mass)),
            Side::Target => grouped[e.target].push((e.source, e.mass)),
        }
    }
    let rows = grouped
        .into_iter()
        .enumerate()
        .filter_map(|(atom, mut cells)| {
            cells.sort_by_key(|c| c.0);
            let marginal: f64 = cells.iter().map(|c| c.1).sum();
            (marginal > 0.0).then(|| ConditionalRow {
                atom,
                marginal,
                probs: cells.into_iter().map(|(k, w)| (k, w / marginal)).collect(),
            })
        })
        .collect();
    ConditionalTable { side, rows }
}

/// Exhaustive search over the basic solutions of the transportation
/// polytope. Supports must have at most [`BRUTE_FORCE_MAX`] atoms.
pub fn brute_force_plan(a: &WeightedCloud, b: &WeightedCloud, p: f64) -> Result<TransportPlan> {
    validate(a, b, p)?;
    let n = a.len();
    let m = b.len();
    if n > BRUTE_FORCE_MAX || m > BRUTE_FORCE_MAX {
        return Err(Error::Argument(format!(
            "brute force supports at most {BRUTE_FORCE_MAX}x{BRUTE_FORCE_MAX} instances, got {n}x{m}"
        )));
    }
    let cost = cost_matrix(a, b, p);
    let scale = a.total_mass() / b.total_mass();
    let mut residual = [0.0f64; 2 * BRUTE_FORCE_MAX];
    residual[..n].copy_from_slice(a.weights());
    for j in 0..m {
        residual[n + j] = b.weights()[j] * scale;
    }
    let mut search = TreeSearch {
        n,
        m,
        cost: &cost,
        residual,
        chosen: Vec::with_capacity(n + m - 1),
        best: None,
    };
    let mut dsu = [0u8; 2 * BRUTE_FORCE_MAX];
    for (k, v) in dsu.iter_mut().enumerate() {
        *v = k as u8;
    }
    search.descend(0, &dsu, [0u8; BRUTE_FORCE_MAX]);
    let (total, flows) = search
        .best
        .ok_or_else(|| Error::Numerical("no feasible basic solution found".into()))?;
    let mut entries: Vec<PlanEntry> = flows
        .into_iter()
        .filter(|&(_, f)| f > 0.0)
        .map(|(k, mass)| PlanEntry {
            source: k / m,
            target: k % m,
            mass,
        })
        .collect();
    entries.sort_by_key(|e| (e.source, e.target));
    Ok(TransportPlan {
        entries,
        n_source: n,
        n_target: m,
        p,
        cost: total,
        source_ref: None,
        target_ref: None,
    })
}

struct TreeSearch<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    residual: [f64; 2 * BRUTE_FORCE_MAX],
    chosen: Vec<usize>,
    best: Option<(f64, Vec<(usize, f64)>)>,
}

fn find(dsu: &[u8], mut x: usize) -> usize {
    while dsu[x] as usize != x {
        x = dsu[x] as usize;
    }
    x
}

impl TreeSearch<'_> {
    /// Chooses cells in row-major order; `row_deg[i]` counts chosen cells of
    /// row i so that rows left uncovered are pruned as soon as they close.
    fn descend(
        &mut self,
        k: usize,
        dsu: &[u8; 2 * BRUTE_FORCE_MAX],
        row_deg: [u8; BRUTE_FORCE_MAX],
    ) {
        let need = self.n + self.m - 1 - self.chosen.len();
        if need == 0 {
            self.evaluate_tree();
            return;
        }
        let total = self.n * self.m;
        if total - k < need {
            return;
        }
        let (i, j) = (k / self.m, k % self.m);
        // Take cell k if it does not close a cycle.
        let (ri, rj) = (find(dsu, i), find(dsu, self.n + j));
        if ri != rj {
            let mut next = *dsu;
            next[ri] = rj as u8;
            let mut deg = row_deg;
            deg[i] += 1;
            self.chosen.push(k);
            self.descend(k + 1, &next, deg);
            self.chosen.pop();
        }
        // Skip cell k, unless it is the last chance to cover row i.
        if j == self.m - 1 && row_deg[i] == 0 {
            return;
        }
        self.descend(k + 1, dsu, row_deg);
    }

    /// Solves the flow on the current spanning tree by peeling leaves.
    fn evaluate_tree(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut residual = self.residual;
        let mut alive = vec![true; self.chosen.len()];
        let mut deg = [0usize; 2 * BRUTE_FORCE_MAX];
        for &k in &self.chosen {
            deg[k / m] += 1;
            deg[n + k % m] += 1;
        }
        let mut flows = vec![(0usize, 0.0f64); self.chosen.len()];
        for _ in 0..self.chosen.len() {
            let Some(leaf) = (0..n + m).find(|&v| deg[v] == 1) else {
                return;
            };
            let e = (0..self.chosen.len())
                .find(|&e| {
                    alive[e] && {
                        let k = self.chosen[e];
                        k / m == leaf || n + k % m == leaf
                    }
                })
                .expect("leaf has an incident edge");
            let k = self.chosen[e];
            let (r, c) = (k / m, n + k % m);
            let other = if leaf == r { c } else { r };
            let f = residual[leaf];
            if f < -1e-12 {
                return;
            }
            flows[e] = (k, f.max(0.0));
            residual[leaf] = 0.0;
            residual[other] -= f;
            alive[e] = false;
            deg[leaf] -= 1;
            deg[other] -= 1;
        }
        let total: f64 = flows.iter().map(|&(k, f)| f * self.cost[k]).sum();
        if self.best.as_ref().is_none_or(|(b, _)| total < *b) {
            self.best = Some((total, flows));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud1(points: &[f64], weights: &[f64]) -> WeightedCloud {
        WeightedCloud::new(points.iter().map(|&x| vec![x]).collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn forced_plan() {
        let a = cloud1(&[0.0], &[1.0]);
        let b = cloud1(&[3.0], &[1.0]);
        let plan = optimal_plan(&a, &b, 2.0).unwrap();
        assert_eq!(
            plan.entries,
            vec![PlanEntry {
                source: 0,
                target: 0,
                mass: 1.0
            }]
        );
        assert_eq!(plan.cost, 9.0);
        assert_eq!(wasserstein(&a, &b, 2.0).unwrap(), 3.0);
    }

    #[test]
    fn identical_clouds_have_diagonal_plan() {
        let a = cloud1(&[0.3, -1.0, 2.0], &[0.2, 0.5, 0.3]);
        let plan = optimal_plan(&a, &a, 2.0).unwrap();
        assert_eq!(plan.cost, 0.0);
        assert!(plan.entries.iter().all(|e| e.source == e.target));
        assert_eq!(wasserstein(&a, &a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_uncrossed() {
        // Vertex plans of the 2x2 polytope: 0→1,3→2 costs 1; 0→2,3→1 costs 4.
        let a = cloud1(&[0.0, 3.0], &[0.5, 0.5]);
        let b = cloud1(&[1.0, 2.0], &[0.5, 0.5]);
        let plan = optimal_plan(&a, &b, 2.0).unwrap();
        assert_eq!(
            plan.entries,
            vec![
                PlanEntry {
                    source: 0,
                    target: 0,
                    mass: 0.5
                },
                PlanEntry {
                    source: 1,
                    target: 1,
                    mass: 0.5
                }
            ]
        );
        assert!((plan.cost - 1.0).abs() < 1e-15);
        assert!((wasserstein(&a, &b, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((brute_force_plan(&a, &b, 2.0).unwrap().cost - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let a = cloud1(&[0.0], &[1.0]);
        let b = WeightedCloud::new(vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
        assert!(matches!(optimal_plan(&a, &b, 2.0), Err(Error::Argument(_))));
        assert!(matches!(optimal_plan(&a, &a, 3.0), Err(Error::Argument(_))));
        let big = WeightedCloud::uniform((0..6).map(|k| vec![k as f64]).collect()).unwrap();
        assert!(matches!(
            brute_force_plan(&big, &a, 2.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn disintegration_rows() {
        let plan = TransportPlan {
            entries: vec![
                PlanEntry {
                    source: 0,
                    target: 0,
                    mass: 0.25,
                },
                PlanEntry {
                    source: 0,
                    target: 1,
                    mass: 0.25,
                },
                PlanEntry {
                    source: 1,
                    target: 1,
                    mass: 0.5,
                },
            ],
            n_source: 2,
            n_target: 2,
            p: 2.0,
            cost: 0.0,
            source_ref: None,
            target_ref: None,
        };
        let table = disintegrate(&plan, Side::Source);
        assert_eq!(table.row(0).unwrap().probs, vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(table.recombine(), plan.entries);
        let by_target = disintegrate(&plan, Side::Target);
        assert_eq!(
            by_target.row(1).unwrap().probs,
            vec![(0, 1.0 / 3.0), (1, 2.0 / 3.0)]
        );
    }

    #[test]
    fn zero_mass_atoms_have_no_row() {
        let a = cloud1(&[0.0, 1.0], &[1.0, 0.0]);
        let b = cloud1(&[0.5], &[1.0]);
        let plan = optimal_plan(&a, &b, 2.0).unwrap();
        let table = disintegrate(&plan, Side::Source);
        assert!(table.row(1).is_none());
        assert_eq!(table.rows.len(), 1);
    }

    #[test]
    fn basic_solution_is_sparse() {
        let a = WeightedCloud::new(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.5],
                vec![0.2, 2.0],
                vec![-1.0, 1.0],
            ],
            vec![0.1, 0.4, 0.3, 0.2],
        )
        .unwrap();
        let b = WeightedCloud::new(
            vec![vec![0.5, 0.5], vec![-0.5, 1.5], vec![2.0, 0.0]],
            vec![0.3, 0.3, 0.4],
        )
        .unwrap();
        let plan = optimal_plan(&a, &b, 2.0).unwrap();
        assert!(plan.entries.len() <= a.len() + b.len() - 1);
        plan.check_marginals(&a, &b, 1e-12).unwrap();
        let oracle = brute_force_plan(&a, &b, 2.0).unwrap();
        assert!((oracle.cost - plan.cost).abs() < 1e-12);
    }
}
