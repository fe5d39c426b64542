//! Seeds, initial distributions and strategy samples derived from a
//! configuration.

use std::path::Path;

use mfc_core::chain::{build_lattice_chain, LatticeChain};
use mfc_core::dynamics::VectorFieldProblem;
use mfc_core::io;
use mfc_core::measures::{embed_lattice, LatticeDistribution, WeightedCloud};
use mfc_core::strategies::FeedbackLaw;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ExperimentConfig, InitialConfig};
use crate::CliError;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The seed of the named random stream `path[index]` under `seed`.
pub fn derive_seed(seed: u64, path: &str, index: u64) -> u64 {
    let mut h = splitmix(seed);
    for b in path.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    splitmix(h ^ index)
}

const MAX_REJECTIONS: usize = 10_000;

/// The initial cloud `m₀` described by the configuration.
pub fn initial_cloud(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    problem: &VectorFieldProblem,
) -> Result<WeightedCloud, CliError> {
    let dom = &problem.domain;
    let d = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "initial", 0));
    let cloud = match &cfg.initial {
        InitialConfig::Gaussian { mean, std } => {
            let mean = match mean {
                Some(m) if m.len() == d => m.clone(),
                Some(m) => {
                    return Err(CliError::Config(format!(
                        "initial.mean: expected {d} coordinates, got {}",
                        m.len()
                    )))
                }
                None => dom
                    .lo
                    .iter()
                    .zip(&dom.hi)
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            };
            let mut points = Vec::with_capacity(cfg.particles);
            for _ in 0..cfg.particles {
                let mut p = Vec::with_capacity(d);
                for i in 0..d {
                    let normal = Normal::new(mean[i], *std)
                        .map_err(|e| CliError::Config(format!("initial: {e}")))?;
                    let v = (0..MAX_REJECTIONS)
                        .map(|_| normal.sample(&mut rng))
                        .find(|v| (dom.lo[i]..=dom.hi[i]).contains(v))
                        .ok_or_else(|| {
                            CliError::Config(
                                "initial: the Gaussian puts almost no mass in the box".into(),
                            )
                        })?;
                    p.push(v);
                }
                points.push(p);
            }
            WeightedCloud::uniform(points)?
        }
        InitialConfig::Uniform => {
            let points = (0..cfg.particles)
                .map(|_| {
                    (0..d)
                        .map(|i| {
                            rand_distr::Uniform::new_inclusive(dom.lo[i], dom.hi[i])
                                .map(|u| u.sample(&mut rng))
                        })
                        .collect::<Result<Vec<f64>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(format!("initial: {e}")))?;
            WeightedCloud::uniform(points)?
        }
        InitialConfig::Points { points, weights } => {
            let made = match weights {
                Some(w) => WeightedCloud::new(points.clone(), w.clone()),
                None => WeightedCloud::uniform(points.clone()),
            };
            made.map_err(|e| CliError::Config(format!("initial.points: {e}")))?
        }
        InitialConfig::CloudFile { path } => {
            let full = base_dir.join(path);
            io::open(&full)
                .and_then(io::read_cloud_csv)
                .map_err(|e| CliError::Config(format!("initial.path: {}: {e}", full.display())))?
        }
    };
    if cloud.dim() != d {
        return Err(CliError::Config(format!(
            "initial: cloud of dimension {} for a problem of dimension {d}",
            cloud.dim()
        )));
    }
    Ok(cloud)
}

pub fn chain(
    problem: &VectorFieldProblem,
    h: f64,
    max_nodes: usize,
) -> Result<LatticeChain, CliError> {
    Ok(build_lattice_chain(problem, h, max_nodes)?)
}

/// `(m₀, μ₀)`: μ₀ projects the sampled cloud onto the lattice and m₀ is
/// either the sampled cloud or, for a matched start, `𝓘(μ₀)`.
pub fn start(
    cfg: &ExperimentConfig,
    chain: &LatticeChain,
    sampled: &WeightedCloud,
) -> Result<(WeightedCloud, LatticeDistribution), CliError> {
    let mu0 = LatticeDistribution::project(sampled, chain.grid())?;
    let m0 = if cfg.matched_start {
        embed_lattice(&mu0, chain.grid())?
    } else {
        sampled.clone()
    };
    Ok((m0, mu0))
}

/// The `index`-th strategy law on the named stream.
pub fn law(
    cfg: &ExperimentConfig,
    problem: &VectorFieldProblem,
    stream: &str,
    index: u64,
) -> Result<FeedbackLaw, CliError> {
    Ok(FeedbackLaw::new(
        cfg.strategy.kind,
        problem.domain.clone(),
        problem.horizon,
        problem.atoms.len(),
        cfg.strategy.bins,
        cfg.strategy.time_cells,
        derive_seed(cfg.seed, stream, index),
    )?)
}

/// Least-squares slope of `ln y` against `ln x`; `None` when fewer than two
/// usable points or when all `x` coincide.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 || pts.len() < xs.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
