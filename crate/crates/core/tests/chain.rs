mod common;

use mfc_core::chain::{
    build_lattice_chain, integrate_kolmogorov, relaxed_rates, sample_jump_process,
    verify_assumptions, ChainFlow, JumpConfig, LatticeChain,
};
use mfc_core::controls::{FeedbackPolicy, RelaxedControl};
use mfc_core::dynamics::VectorFieldProblem;
use mfc_core::measures::{embed_lattice, LatticeDistribution, LatticeGrid, WeightedCloud};
use mfc_core::problems::{self, AttractionParams};
use mfc_core::strategies::{FeedbackLaw, LawKind};
use mfc_core::transport::wasserstein;
use rand::Rng;

fn builtins() -> Vec<VectorFieldProblem> {
    vec![
        problems::zero(1, 1.0, 1.0, 2).unwrap(),
        problems::constant(vec![0.7], 1.0, 1.0, 2).unwrap(),
        problems::constant(vec![0.3, -0.5], 1.0, 1.0, 2).unwrap(),
        problems::linear(1, 1.0, 1.0, -1.0, 3).unwrap(),
        problems::linear(2, 1.0, 1.0, 0.5, 2).unwrap(),
        problems::attraction(&AttractionParams::default()).unwrap(),
        problems::attraction(&AttractionParams {
            cutoff: false,
            ..AttractionParams::default()
        })
        .unwrap(),
        problems::attraction(&AttractionParams {
            dim: 2,
            ..AttractionParams::default()
        })
        .unwrap(),
    ]
}

fn random_mu(rng: &mut impl Rng, n: usize) -> LatticeDistribution {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(4)).collect();
    LatticeDistribution::new(common::normalize(&raw)).unwrap()
}

fn random_policy(p: &VectorFieldProblem, chain: &LatticeChain, seed: u64) -> FeedbackPolicy {
    FeedbackLaw::new(
        LawKind::Mixed,
        p.domain.clone(),
        p.horizon,
        p.atoms.len(),
        5,
        4,
        seed,
    )
    .unwrap()
    .policy(chain.grid())
    .unwrap()
}

/// The embedded cloud, built independently of the chain.
fn embedded(grid: &LatticeGrid, mu: &LatticeDistribution) -> WeightedCloud {
    WeightedCloud::new(
        grid.nodes().map(|x| x.to_vec()).collect(),
        mu.as_slice().to_vec(),
    )
    .unwrap()
}

#[test]
fn generator_rows_are_kolmogorov_rows() {
    let mut rng = common::rng(1);
    for (i, p) in builtins().iter().enumerate() {
        let h = if p.dim() == 1 { 0.1 } else { 0.25 };
        let chain = build_lattice_chain(p, h, 100_000).unwrap();
        let policy = random_policy(p, &chain, i as u64);
        for _ in 0..10 {
            let t = rng.random_range(0.0..=1.0);
            let mu = random_mu(&mut rng, chain.len());
            let view = chain.view(mu.as_slice());
            let mut out = Vec::new();
            for k in 0..chain.len() {
                for a in 0..chain.n_atoms() {
                    out.clear();
                    chain.off_diagonal(t, &view, a, k, &mut out);
                    assert!(out.len() < chain.fan_out());
                }
            }
            for row in relaxed_rates(&chain, t, &mu, &policy).unwrap() {
                assert!(row
                    .off_diagonal
                    .iter()
                    .all(|e| e.1 >= 0.0 && e.1 <= chain.bound_q() * (1.0 + 1e-12)));
                assert!(
                    row.diagonal.abs() <= chain.bound_q() * (1.0 + 1e-12),
                    "{}: {}",
                    p.name,
                    row.diagonal
                );
                assert!(row.sum().abs() <= 1e-12);
                // Averaging over atoms can open both directions on each axis.
                assert!(row.off_diagonal.len() <= 2 * p.dim());
                assert!(row.off_diagonal.iter().all(|e| e.0 != row.node));
            }
        }
    }
}

#[test]
fn relaxed_rates_match_an_explicit_recomputation() {
    let p = problems::attraction(&AttractionParams {
        dim: 2,
        ..AttractionParams::default()
    })
    .unwrap();
    let h = 0.25;
    let chain = build_lattice_chain(&p, h, 10_000).unwrap();
    let grid = chain.grid();
    let policy = random_policy(&p, &chain, 3);
    let mut rng = common::rng(2);
    let mut f = vec![0.0; 2];
    for _ in 0..5 {
        let t = rng.random_range(0.0..1.0);
        let mu = random_mu(&mut rng, chain.len());
        let cloud = embedded(grid, &mu);
        let view = cloud.view();
        for row in relaxed_rates(&chain, t, &mu, &policy).unwrap() {
            let x = grid.node(row.node);
            let cell = policy.control(row.node).weights_at(t);
            let mut want = vec![0.0; chain.len()];
            for (a, &w) in cell.iter().enumerate() {
                p.eval(t, x, &view, a, &mut f);
                for i in 0..2 {
                    let mut y = x.to_vec();
                    y[i] += h * f[i].signum();
                    if let Some(j) = grid.locate(&y) {
                        if j != row.node {
                            want[j] += w * f[i].abs() / h;
                        }
                    }
                }
            }
            let mut got = vec![0.0; chain.len()];
            for &(j, q) in &row.off_diagonal {
                got[j] += q;
            }
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{g} vs {w}");
            }
        }
    }
}

#[test]
fn dirac_and_uniform_policies() {
    let p = problems::attraction(&AttractionParams::default()).unwrap();
    let chain = build_lattice_chain(&p, 0.1, 1000).unwrap();
    let mu = random_mu(&mut common::rng(8), chain.len());
    let n = chain.len();
    let rows_for = |atom: Option<usize>| {
        let control = match atom {
            Some(a) => RelaxedControl::dirac(0.0, 1.0, 3, a).unwrap(),
            None => RelaxedControl::new(vec![0.0, 1.0], vec![vec![0.5, 0.0, 0.5]]).unwrap(),
        };
        let policy = FeedbackPolicy::constant(n, control).unwrap();
        relaxed_rates(&chain, 0.3, &mu, &policy).unwrap()
    };
    let dense = |row: &mfc_core::chain::RateRow| {
        let mut v = vec![0.0; n];
        v[row.node] = row.diagonal;
        for &(j, q) in &row.off_diagonal {
            v[j] += q;
        }
        v
    };
    let (r0, r2, mix) = (rows_for(Some(0)), rows_for(Some(2)), rows_for(None));
    for k in 0..n {
        let (a, b, m) = (dense(&r0[k]), dense(&r2[k]), dense(&mix[k]));
        for j in 0..n {
            assert!((m[j] - 0.5 * (a[j] + b[j])).abs() <= 1e-12);
        }
    }
}

#[test]
fn verification_reports() {
    let zero = build_lattice_chain(&problems::zero(1, 1.0, 1.0, 1).unwrap(), 0.1, 1000).unwrap();
    let rep = verify_assumptions(&zero, 20, 0).unwrap();
    assert_eq!(rep.eps_var, 0.0);
    assert_eq!(rep.eps_drift_interior, Some(0.0));
    assert_eq!(rep.b_q_sampled, 0.0);
    assert_eq!(rep.row_sum_defect, 0.0);

    let h = 0.1;
    let lin =
        build_lattice_chain(&problems::linear(1, 1.0, 1.0, 1.0, 1).unwrap(), h, 1000).unwrap();
    let rep = verify_assumptions(&lin, 20, 1).unwrap();
    assert!(rep.eps_var.powi(2) <= 0.1 + 1e-12, "{rep:?}");
    assert!(rep.eps_drift_interior.unwrap() <= 1e-12);
    assert!(rep.row_sum_defect <= 1e-12);
    assert!(rep.eps_space <= h / 2.0 + 1e-12);

    for p in builtins() {
        let h = if p.dim() == 1 { 0.05 } else { 0.25 };
        let chain = build_lattice_chain(&p, h, 100_000).unwrap();
        let rep = verify_assumptions(&chain, 5, 2).unwrap();
        let d = p.dim() as f64;
        assert!(
            rep.eps_drift_interior.unwrap_or(0.0) <= 1e-12,
            "{}: {rep:?}",
            p.name
        );
        assert!(
            rep.eps_var.powi(2) <= h * d * p.bound_r + 1e-12,
            "{}: {rep:?}",
            p.name
        );
        assert!(
            rep.b_q_sampled <= rep.b_q * (1.0 + 1e-12),
            "{}: {rep:?}",
            p.name
        );
        assert!(rep.eps_space <= rep.eps);
    }
}

#[test]
fn exhaustive_scan_reaches_the_declared_bound() {
    // f = x peaks at the edge of the box, where |f| = R.
    let h = 0.1;
    let chain =
        build_lattice_chain(&problems::linear(1, 1.0, 1.0, 1.0, 1).unwrap(), h, 1000).unwrap();
    let policy = FeedbackPolicy::uniform(chain.len(), 0.0, 1.0, 1).unwrap();
    let mu = LatticeDistribution::dirac(chain.len(), 0).unwrap();
    let mut worst = 0.0f64;
    for row in relaxed_rates(&chain, 0.5, &mu, &policy).unwrap() {
        worst = worst.max(row.diagonal.abs());
        for e in &row.off_diagonal {
            worst = worst.max(e.1);
        }
    }
    assert!(
        (worst - chain.bound_q()).abs() <= 1e-9,
        "{worst} vs {}",
        chain.bound_q()
    );
    let rep = verify_assumptions(&chain, 3, 0).unwrap();
    assert!((rep.b_q_sampled - chain.bound_q()).abs() <= 1e-9);
}

fn run(p: &VectorFieldProblem, h: f64, seed: u64) -> (LatticeChain, ChainFlow) {
    let chain = build_lattice_chain(p, h, 100_000).unwrap();
    let mut rng = common::rng(seed);
    let m = common::random_cloud(&mut rng, p.dim(), 30, 0.9);
    let mu0 = LatticeDistribution::project(&m, chain.grid()).unwrap();
    let policy = random_policy(p, &chain, seed);
    let dt = (0.9 * chain.max_stable_dt()).min(0.01);
    let flow = integrate_kolmogorov(&chain, &mu0, &policy, 0.0, p.horizon, dt, &[0.5]).unwrap();
    (chain, flow)
}

#[test]
fn mass_is_conserved_and_changes_at_bounded_speed() {
    for (i, p) in builtins().iter().enumerate() {
        let h = if p.dim() == 1 { 0.1 } else { 0.25 };
        let (chain, flow) = run(p, h, i as u64);
        assert!(flow.at(0.5).is_some());
        for mu in flow.distributions() {
            let total: f64 = mu.as_slice().iter().sum();
            assert!((total - 1.0).abs() <= 1e-9);
            assert!(mu.as_slice().iter().all(|&v| v >= -1e-12));
        }
        assert!(
            flow.rate_bound_excess(chain.bound_q()) <= 1e-8,
            "{}",
            p.name
        );
    }
}

#[test]
fn zero_generator_is_stationary() {
    let p = problems::zero(2, 1.0, 1.0, 2).unwrap();
    let (_, flow) = run(&p, 0.25, 4);
    let first = &flow.distributions()[0];
    assert!(flow.distributions().iter().all(|mu| mu == first));
}

fn two_node() -> LatticeChain {
    let grid = LatticeGrid::from_nodes(vec![vec![0.0], vec![1.0]], 1.0).unwrap();
    LatticeChain::from_generator(grid, vec![vec![(1, 1.0)], vec![]], 1, 1.0).unwrap()
}

#[test]
fn two_node_decay_matches_the_binomial_law() {
    let chain = two_node();
    let mu0 = LatticeDistribution::dirac(2, 0).unwrap();
    let policy = FeedbackPolicy::uniform(2, 0.0, 1.0, 1).unwrap();
    let flow = integrate_kolmogorov(&chain, &mu0, &policy, 0.0, 1.0, 1e-3, &[]).unwrap();
    let p = (-1.0f64).exp();
    assert!((flow.last().as_slice()[0] - p).abs() <= 1e-8);
    let n = 100_000;
    let cfg = JumpConfig {
        n_samples: n,
        seed: 2024,
        eval_times: vec![1.0],
        keep_paths: 0,
    };
    let js = sample_jump_process(&chain, &flow, &cfg).unwrap();
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!(
        (js.occupancy[0][0] - p).abs() <= 3.0 * sigma,
        "{} vs {p} ± {}",
        js.occupancy[0][0],
        3.0 * sigma
    );
}

#[test]
fn constant_drift_spreads_like_a_scaled_poisson_process() {
    let (c, h, half) = (1.0, 0.1, 3.0);
    let p = problems::constant(vec![c], half, 1.0, 1).unwrap();
    let chain = build_lattice_chain(&p, h, 1000).unwrap();
    let start = chain.grid().locate(&[-2.0]).unwrap();
    let mu0 = LatticeDistribution::dirac(chain.len(), start).unwrap();
    let policy = FeedbackPolicy::uniform(chain.len(), 0.0, 1.0, 1).unwrap();
    let flow = integrate_kolmogorov(&chain, &mu0, &policy, 0.0, 1.0, 1e-3, &[]).unwrap();
    let n = 20_000;
    let times = vec![0.1, 0.25, 0.5, 1.0];
    let cfg = JumpConfig {
        n_samples: n,
        seed: 99,
        eval_times: times.clone(),
        keep_paths: n,
    };
    let js = sample_jump_process(&chain, &flow, &cfg).unwrap();

    // Displacement at time t is h·N(t) with N Poisson of mean c·t/h.
    let t_end = 1.0;
    let disp: Vec<f64> = js
        .paths
        .iter()
        .map(|path| path.jumps.iter().filter(|j| j.0 <= t_end).count() as f64 * h)
        .collect();
    let mean = disp.iter().sum::<f64>() / n as f64;
    let var = disp.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let want = h * c * t_end;
    // Variance of the sample variance of h·Poisson(λ): h⁴(λ + 2λ²)/n approximately.
    let lambda = c * t_end / h;
    let se = (h.powi(4) * (lambda + 2.0 * lambda * lambda) / n as f64).sqrt();
    assert!(
        (var - want).abs() <= 3.0 * se,
        "var {var} vs {want} ± {}",
        3.0 * se
    );

    let r = p.bound_r;
    let eps = chain.eps();
    let c1 = 4.0 * (r + 1.0) * (2.0 * (r + 1.0) * p.horizon).exp() / 3.0;
    for (k, &t) in times.iter().enumerate() {
        let bound = eps * eps * t + c1 * t.powf(1.5);
        assert!(
            js.mean_sq_displacement[k] <= bound,
            "t = {t}: {} > {bound}",
            js.mean_sq_displacement[k]
        );
    }
}

#[test]
fn displacement_bound_on_the_attraction_problem() {
    let p = problems::attraction(&AttractionParams::default()).unwrap();
    let (chain, flow) = run(&p, 0.1, 6);
    let times: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let cfg = JumpConfig {
        n_samples: 5000,
        seed: 6,
        eval_times: times.clone(),
        keep_paths: 0,
    };
    let js = sample_jump_process(&chain, &flow, &cfg).unwrap();
    let r = p.bound_r;
    let c1 = 4.0 * (r + 1.0) * (2.0 * (r + 1.0) * p.horizon).exp() / 3.0;
    for (k, &t) in times.iter().enumerate() {
        let bound = chain.eps().powi(2) * t + c1 * t.powf(1.5);
        assert!(js.mean_sq_displacement[k] <= bound);
    }
}

fn final_nodes(js: &mfc_core::chain::JumpSample) -> Vec<usize> {
    js.paths
        .iter()
        .map(|p| p.jumps.last().map_or(p.start, |j| j.1))
        .collect()
}

fn histogram(grid: &LatticeGrid, nodes: &[usize]) -> WeightedCloud {
    let mut mass = vec![0.0; grid.len()];
    for &k in nodes {
        mass[k] += 1.0 / nodes.len() as f64;
    }
    embed_lattice(
        &LatticeDistribution::new(common::normalize(&mass)).unwrap(),
        grid,
    )
    .unwrap()
}

#[test]
fn monte_carlo_agrees_with_the_forward_equation() {
    let p = problems::attraction(&AttractionParams::default()).unwrap();
    let (chain, flow) = run(&p, 0.1, 9);
    let n = 10_000;
    let cfg = JumpConfig {
        n_samples: n,
        seed: 9,
        eval_times: vec![1.0],
        keep_paths: n,
    };
    let js = sample_jump_process(&chain, &flow, &cfg).unwrap();
    let grid = chain.grid();
    let ends = final_nodes(&js);
    let empirical = histogram(grid, &ends);
    let from_occupancy = embed_lattice(
        &LatticeDistribution::new(js.occupancy[0].clone()).unwrap(),
        grid,
    )
    .unwrap();
    assert!(wasserstein(&empirical, &from_occupancy, 2.0).unwrap() <= 1e-9);
    let exact = embed_lattice(flow.last(), grid).unwrap();
    let w = wasserstein(&empirical, &exact, 2.0).unwrap();

    let mut rng = common::rng(90);
    let reps = 100;
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        let resample: Vec<usize> = (0..n).map(|_| ends[rng.random_range(0..n)]).collect();
        sum_sq += wasserstein(&histogram(grid, &resample), &empirical, 2.0)
            .unwrap()
            .powi(2);
    }
    let se = (sum_sq / reps as f64).sqrt();
    assert!(w <= 3.0 * se, "W2 {w:e} vs bootstrap error {se:e}");
}
