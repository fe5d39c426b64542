//! Seeded strategy generators.
//!
//! A [`FeedbackLaw`] assigns a probability vector over the control atoms to
//! each (spatial bin of the state box, time cell) pair. The same law can be
//! instantiated as a feedback policy on any lattice and as a distribution of
//! controls on any cloud, which keeps sampled strategies comparable across
//! lattice spacings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::controls::{uniform_vector, ControlDistribution, FeedbackPolicy, RelaxedControl};
use crate::measures::{BoxDomain, LatticeGrid, WeightedCloud};
use crate::time_grid::uniform_points;
use crate::{Error, Result};

/// How the cell probability vectors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    /// Every cell is the uniform vector.
    Uniform,
    /// Every cell is a Dirac on a random atom.
    Pure,
    /// Every cell is a flat-Dirichlet random vector.
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackLaw {
    domain: BoxDomain,
    bins: usize,
    time_grid: Vec<f64>,
    n_atoms: usize,
    /// Indexed by `time_cell * n_bins + bin`.
    table: Vec<Vec<f64>>,
}

impl FeedbackLaw {
    pub fn new(
        kind: LawKind,
        domain: BoxDomain,
        horizon: f64,
        n_atoms: usize,
        bins: usize,
        time_cells: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_atoms == 0 || bins == 0 || time_cells == 0 {
            return Err(Error::Argument(
                "a feedback law needs atoms, bins and time cells".into(),
            ));
        }
        if !(horizon > 0.0) {
            return Err(Error::Argument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n_bins = bins
            .checked_pow(domain.dim() as u32)
            .ok_or_else(|| Error::Resource("too many bins".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = (0..n_bins * time_cells)
            .map(|_| match kind {
                LawKind::Uniform => uniform_vector(n_atoms),
                LawKind::Pure => {
                    let mut w = vec![0.0; n_atoms];
                    w[rng.random_range(0..n_atoms)] = 1.0;
                    w
                }
                LawKind::Mixed => {
                    let raw: Vec<f64> = (0..n_atoms).map(|_| Exp1.sample(&mut rng)).collect();
                    let total: f64 = raw.iter().sum();
                    let mut w: Vec<f64> = raw.iter().map(|v: &f64| v / total).collect();
                    let head: f64 = w[..n_atoms - 1].iter().sum();
                    w[n_atoms - 1] = (1.0 - head).max(0.0);
                    w
                }
            })
            .collect();
        Ok(Self {
            domain,
            bins,
            time_grid: uniform_points(0.0, horizon, time_cells),
            n_atoms,
            table,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    fn bin(&self, x: &[f64]) -> usize {
        let mut k = 0;
        for (i, &v) in x.iter().enumerate() {
            let (lo, hi) = (self.domain.lo[i], self.domain.hi[i]);
            let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            let b = ((frac * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1);
            k = k * self.bins + b;
        }
        k
    }

    /// The open-loop relaxed control on `[0, T]` played from state `x`.
    pub fn control_at(&self, x: &[f64]) -> RelaxedControl {
        let n_bins = self.table.len() / (self.time_grid.len() - 1);
        let b = self.bin(x);
        let cells = (0..self.time_grid.len() - 1)
            .map(|c| self.table[c * n_bins + b].clone())
            .collect();
        RelaxedControl::new(self.time_grid.clone(), cells)
            .expect("law cells are probability vectors")
    }

    /// One control per node of `grid`.
    pub fn policy(&self, grid: &LatticeGrid) -> Result<FeedbackPolicy> {
        FeedbackPolicy::new(grid.nodes().map(|x| self.control_at(x)).collect())
    }

    /// Each atom of `m` paired with the control played from its position.
    pub fn distribution(&self, m: &WeightedCloud) -> Result<ControlDistribution> {
        ControlDistribution::from_cloud(m, |x| self.control_at(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_law_on_grid_and_cloud() {
        let dom = BoxDomain::cube(1, 1.0).unwrap();
        let law = FeedbackLaw::new(LawKind::Mixed, dom.clone(), 1.0, 3, 4, 2, 9).unwrap();
        let grid = LatticeGrid::regular(&dom, 0.1, 100).unwrap();
        let policy = law.policy(&grid).unwrap();
        let k = grid.locate(&[0.3]).unwrap();
        let m = WeightedCloud::dirac(vec![0.3]).unwrap();
        let alpha = law.distribution(&m).unwrap();
        assert_eq!(policy.control(k), &alpha.items()[0].control);
        assert_eq!(policy.control(k).cells().len(), 2);
    }

    #[test]
    fn kinds() {
        let dom = BoxDomain::cube(2, 1.0).unwrap();
        let u = FeedbackLaw::new(LawKind::Uniform, dom.clone(), 1.0, 4, 3, 1, 0).unwrap();
        assert_eq!(u.control_at(&[0.0, 0.0]).cells()[0], vec![0.25; 4]);
        let p = FeedbackLaw::new(LawKind::Pure, dom, 1.0, 4, 3, 3, 0).unwrap();
        let c = p.control_at(&[5.0, -5.0]);
        assert!(c
            .cells()
            .iter()
            .all(|w| w.iter().filter(|&&v| v == 1.0).count() == 1));
    }
}
