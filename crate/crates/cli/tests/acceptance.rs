//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines are printed even when everything passes.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mfc_core::chain::{
    build_lattice_chain, integrate_kolmogorov, relaxed_rates, sample_jump_process, JumpConfig,
    LatticeChain,
};
use mfc_core::controls::FeedbackPolicy;
use mfc_core::coupling::{
    mpc_chain_from_deterministic, mpc_deterministic_from_chain, CouplingOptions, Partition,
};
use mfc_core::dynamics::{integrate_mfc, rhs_relaxed, MfcFlow, VectorFieldProblem};
use mfc_core::measures::{embed_lattice, LatticeDistribution, LatticeGrid, WeightedCloud};
use mfc_core::problems::{self, AttractionParams};
use mfc_core::strategies::{FeedbackLaw, LawKind};
use mfc_core::transport::{brute_force_plan, optimal_plan, wasserstein};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn random_cloud(rng: &mut ChaCha8Rng, dim: usize, n: usize, half: f64) -> WeightedCloud {
    let pts = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-half..half)).collect())
        .collect();
    let w = normalized((0..n).map(|_| rng.random_range(0.05..1.0)).collect());
    WeightedCloud::new(pts, w).unwrap()
}

fn builtins() -> Vec<VectorFieldProblem> {
    vec![
        problems::zero(1, 1.0, 1.0, 2).unwrap(),
        problems::zero(2, 1.0, 1.0, 2).unwrap(),
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

fn spacing(p: &VectorFieldProblem) -> f64 {
    if p.dim() == 1 {
        0.1
    } else {
        0.25
    }
}

fn random_policy(p: &VectorFieldProblem, grid: &LatticeGrid, seed: u64) -> FeedbackPolicy {
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
    .policy(grid)
    .unwrap()
}

fn random_lattice(rng: &mut ChaCha8Rng, chain: &LatticeChain, dim: usize) -> LatticeDistribution {
    let m = random_cloud(rng, dim, 40, 0.9);
    LatticeDistribution::project(&m, chain.grid()).unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (n, m) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let dim = rng.random_range(1..=3);
        let a = random_cloud(&mut rng, dim, n, 2.0);
        let b = random_cloud(&mut rng, dim, m, 2.0);
        let fast = optimal_plan(&a, &b, 2.0).map_err(|e| e.to_string())?;
        let slow = brute_force_plan(&a, &b, 2.0).map_err(|e| e.to_string())?;
        worst = worst.max((fast.cost - slow.cost).abs());
    }
    check(
        worst <= 1e-9,
        format!("200 instances, largest cost gap {worst:.2e}"),
    )
}

/// Row sums, second moments and interior drift recomputed from the rows.
fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut row_sum, mut drift, mut moment_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for (i, p) in builtins().iter().enumerate() {
        let h = spacing(p);
        let d = p.dim();
        let chain = build_lattice_chain(p, h, 100_000).map_err(|e| e.to_string())?;
        let grid = chain.grid();
        let interior: Vec<bool> = (0..grid.len())
            .map(|k| {
                (0..d)
                    .all(|a| grid.neighbor(k, a, 1).is_some() && grid.neighbor(k, a, -1).is_some())
            })
            .collect();
        for s in 0..5 {
            let mu = random_lattice(&mut rng, &chain, d);
            let policy = random_policy(p, grid, (10 * i + s) as u64);
            let t = rng.random_range(0.0..p.horizon);
            let rows = relaxed_rates(&chain, t, &mu, &policy).map_err(|e| e.to_string())?;
            let cloud = embed_lattice(&mu, grid).map_err(|e| e.to_string())?;
            let mut f = vec![0.0; d];
            for row in &rows {
                let x = grid.node(row.node);
                row_sum = row_sum
                    .max((row.diagonal + row.off_diagonal.iter().map(|e| e.1).sum::<f64>()).abs());
                let mut mean_jump = vec![0.0; d];
                let mut second = 0.0;
                for &(j, q) in &row.off_diagonal {
                    let y = grid.node(j);
                    for a in 0..d {
                        mean_jump[a] += q * (y[a] - x[a]);
                        second += q * (y[a] - x[a]).powi(2);
                    }
                }
                moment_excess = moment_excess.max(second - h * d as f64 * p.bound_r);
                if interior[row.node] {
                    rhs_relaxed(
                        p,
                        t,
                        x,
                        &cloud.view(),
                        policy.control(row.node).weights_at(t),
                        &mut f,
                    );
                    for a in 0..d {
                        drift = drift.max((mean_jump[a] - f[a]).abs());
                    }
                }
            }
        }
    }
    check(
        row_sum <= 1e-12 && drift <= 1e-12 && moment_excess <= 1e-12,
        format!("9 problems, row sum {row_sum:.1e}, interior drift defect {drift:.1e}, second moment − hdR {moment_excess:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mass, mut lowest, mut speed) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for (i, p) in builtins().iter().enumerate() {
        let chain = build_lattice_chain(p, spacing(p), 100_000).map_err(|e| e.to_string())?;
        let mu0 = random_lattice(&mut rng, &chain, p.dim());
        let policy = random_policy(p, chain.grid(), 100 + i as u64);
        let dt = (0.9 * chain.max_stable_dt()).min(0.01);
        let flow = integrate_kolmogorov(&chain, &mu0, &policy, 0.0, p.horizon, dt, &[])
            .map_err(|e| e.to_string())?;
        let (ts, mus) = (flow.times(), flow.distributions());
        for mu in mus {
            mass = mass.max((mu.as_slice().iter().sum::<f64>() - 1.0).abs());
            lowest = lowest.min(mu.as_slice().iter().copied().fold(f64::INFINITY, f64::min));
        }
        for a in 0..ts.len() {
            for b in a + 1..ts.len() {
                let gap = chain.bound_q() * (ts[b] - ts[a]);
                for (x, y) in mus[a].as_slice().iter().zip(mus[b].as_slice()) {
                    speed = speed.max((y - x).abs() - gap);
                }
            }
        }
    }
    check(
        mass <= 1e-9 && lowest >= -1e-12 && speed <= 1e-8,
        format!("mass defect {mass:.1e}, min entry {lowest:.1e}, max |Δμ| − B_Q Δt {speed:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let grid = LatticeGrid::from_nodes(vec![vec![0.0], vec![1.0]], 1.0).unwrap();
    let chain = LatticeChain::from_generator(grid, vec![vec![(1, 1.0)], vec![]], 1, 1.0).unwrap();
    let mu0 = LatticeDistribution::dirac(2, 0).unwrap();
    let policy = FeedbackPolicy::uniform(2, 0.0, 1.0, 1).unwrap();
    let flow = integrate_kolmogorov(&chain, &mu0, &policy, 0.0, 1.0, 1e-3, &[])
        .map_err(|e| e.to_string())?;
    let p = (-1.0f64).exp();
    let ode = (flow.last().as_slice()[0] - p).abs();
    let n = 100_000;
    let cfg = JumpConfig {
        n_samples: n,
        seed: 4,
        eval_times: vec![1.0],
        keep_paths: 0,
    };
    let js = sample_jump_process(&chain, &flow, &cfg).map_err(|e| e.to_string())?;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let mc = (js.occupancy[0][0] - p).abs();
    check(
        ode <= 1e-8 && mc <= 3.0 * sigma,
        format!(
            "|μ_A(1) − 1/e| = {ode:.1e}, sampler gap {mc:.2e} vs 3σ = {:.2e}",
            3.0 * sigma
        ),
    )
}

fn criterion_5() -> Outcome {
    let (c, h) = (1.0, 0.1);
    let p = problems::constant(vec![c], 3.0, 1.0, 1).map_err(|e| e.to_string())?;
    let chain = build_lattice_chain(&p, h, 10_000).map_err(|e| e.to_string())?;
    let start = chain.grid().locate(&[-2.0]).unwrap();
    let mu0 = LatticeDistribution::dirac(chain.len(), start).unwrap();
    let policy = FeedbackPolicy::uniform(chain.len(), 0.0, 1.0, 1).unwrap();
    let flow = integrate_kolmogorov(&chain, &mu0, &policy, 0.0, 1.0, 1e-3, &[])
        .map_err(|e| e.to_string())?;
    let n = 20_000;
    let times = vec![0.25, 0.5, 1.0];
    let cfg = JumpConfig {
        n_samples: n,
        seed: 5,
        eval_times: times.clone(),
        keep_paths: n,
    };
    let js = sample_jump_process(&chain, &flow, &cfg).map_err(|e| e.to_string())?;
    let r = p.bound_r;
    let eps = h.max((h * r).sqrt());
    let c1 = 4.0 * (r + 1.0) * (2.0 * (r + 1.0) * p.horizon).exp() / 3.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let msd = js.mean_sq_displacement[k];
        let bound = eps * eps * t + c1 * t.powf(1.5);
        ok &= msd - 3.0 * js.msd_std_error[k] <= bound;
        // Displacement h·N(t), N Poisson with mean ct/h: variance hct.
        let disp: Vec<f64> = js
            .paths
            .iter()
            .map(|q| q.jumps.iter().filter(|j| j.0 <= t).count() as f64 * h)
            .collect();
        let mean = disp.iter().sum::<f64>() / n as f64;
        let var = disp.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let lambda = c * t / h;
        let se = (h.powi(4) * (lambda + 2.0 * lambda * lambda) / n as f64).sqrt();
        ok &= (var - h * c * t).abs() <= 3.0 * se;
        notes.push(format!(
            "t={t}: msd {msd:.4} ≤ {bound:.2}, var {var:.4} vs hct {:.4}",
            h * c * t
        ));
    }
    check(ok, notes.join("; "))
}

fn halving_ratio(p: &VectorFieldProblem, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_cloud(&mut rng, p.dim(), 40, 0.9);
    let law = FeedbackLaw::new(
        LawKind::Mixed,
        p.domain.clone(),
        p.horizon,
        p.atoms.len(),
        4,
        1,
        seed,
    )
    .unwrap();
    let alpha = law.distribution(&m).unwrap();
    let flows: Vec<MfcFlow> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&dt| integrate_mfc(p, &alpha, dt, &[]).unwrap())
        .collect();
    let gap = |a: &MfcFlow, b: &MfcFlow| {
        a.times()
            .iter()
            .zip(a.clouds())
            .filter_map(|(t, c)| b.at(*t).map(|d| wasserstein(c, d, 2.0).unwrap()))
            .fold(0.0f64, f64::max)
    };
    gap(&flows[0], &flows[1]) / gap(&flows[1], &flows[2])
}

fn criterion_6() -> Outcome {
    let p = problems::attraction(&AttractionParams {
        cutoff: false,
        atoms_per_axis: 1,
        ..AttractionParams::default()
    })
    .map_err(|e| e.to_string())?;
    let m = WeightedCloud::new(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
    let law = FeedbackLaw::new(LawKind::Uniform, p.domain.clone(), 1.0, 1, 1, 1, 0).unwrap();
    let flow =
        integrate_mfc(&p, &law.distribution(&m).unwrap(), 1e-3, &[]).map_err(|e| e.to_string())?;
    let mut err = 0.0f64;
    for (t, c) in flow.times().iter().zip(flow.clouds()) {
        let e = (-t).exp();
        err = err
            .max((c.point(0)[0] + e).abs())
            .max((c.point(1)[0] - e).abs());
    }
    let smooth = [
        problems::attraction(&AttractionParams {
            cutoff: false,
            ..AttractionParams::default()
        })
        .unwrap(),
        problems::linear(1, 1.0, 1.0, -1.0, 3).unwrap(),
        problems::attraction(&AttractionParams {
            dim: 2,
            cutoff: false,
            strength: 2.5,
            ..AttractionParams::default()
        })
        .unwrap(),
    ];
    let ratios: Vec<f64> = smooth
        .iter()
        .enumerate()
        .map(|(i, p)| halving_ratio(p, 60 + i as u64))
        .collect();
    check(
        err <= 1e-6 && ratios.iter().all(|&r| r >= 8.0),
        format!("two-particle error {err:.1e}, step-halving ratios {ratios:.2?}"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for d in [1, 2] {
        let p = problems::zero(d, 1.0, 1.0, 2).unwrap();
        let chain = build_lattice_chain(&p, 0.25, 10_000).map_err(|e| e.to_string())?;
        let mu0 = random_lattice(&mut rng, &chain, d);
        let m0 = embed_lattice(&mu0, chain.grid()).unwrap();
        let part = Partition::uniform(1.0, 4).unwrap();
        let opts = CouplingOptions {
            dt: 0.01,
            ..CouplingOptions::default()
        };
        let policy = random_policy(&p, chain.grid(), d as u64);
        let fwd = mpc_deterministic_from_chain(&p, &chain, &m0, &mu0, &policy, &part, &opts)
            .map_err(|e| e.to_string())?;
        let law = FeedbackLaw::new(
            LawKind::Mixed,
            p.domain.clone(),
            1.0,
            p.atoms.len(),
            3,
            4,
            d as u64,
        )
        .unwrap();
        let alpha = law.distribution(&m0).unwrap();
        let rev = mpc_chain_from_deterministic(&p, &chain, &mu0, &alpha, &part, &opts)
            .map_err(|e| e.to_string())?;
        worst = worst.max(fwd.report.sup).max(rev.report.sup);
    }
    check(
        worst <= 1e-12,
        format!("largest sup W₂ over both directions in d = 1, 2: {worst:.1e}"),
    )
}

fn mfc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfc"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Runs `mfc <cmd>` on a shipped config with some keys overridden.
fn run_cli(
    cmd: &str,
    config: &str,
    overrides: &[(&str, Value)],
    dir: &Path,
    extra: &[&str],
) -> Result<PathBuf, String> {
    let text = std::fs::read_to_string(configs_dir().join(config)).map_err(|e| e.to_string())?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    for (k, val) in overrides {
        v[*k] = val.clone();
    }
    let cfg = dir.join(format!("{cmd}-config.json"));
    std::fs::write(&cfg, v.to_string()).map_err(|e| e.to_string())?;
    let out = dir.join(format!(
        "{cmd}-{}",
        overrides
            .iter()
            .map(|o| o.1.to_string())
            .collect::<Vec<_>>()
            .join("-")
    ));
    let status = mfc()
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!(
            "mfc {cmd} failed: {}",
            String::from_utf8_lossy(&status.stderr)
        ));
    }
    Ok(out)
}

fn read_json(path: &Path) -> Result<Value, String> {
    serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())
}

fn column(rows: &Value, key: &str) -> Vec<f64> {
    rows.as_array()
        .unwrap()
        .iter()
        .map(|r| r[key].as_f64().unwrap())
        .collect()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Each value at most 10% above its predecessor.
fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= 1.1 * w[0])
}

/// `ε(h) = √(hdR)` for the one-dimensional attraction problem.
fn eps_of(hs: &[f64]) -> Vec<f64> {
    let r = problems::attraction(&AttractionParams::default())
        .unwrap()
        .bound_r;
    hs.iter().map(|h| (h * r).sqrt()).collect()
}

fn criterion_8(dir: &Path) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for direction in ["forward", "reverse"] {
        let out = run_cli(
            "convergence",
            "attraction_h_sweep.json",
            &[("direction", direction.into())],
            dir,
            &[],
        )?;
        let rows = read_json(&out.join("convergence.json"))?["rows"].clone();
        let (hs, sups) = (column(&rows, "h"), column(&rows, "sup_W2"));
        let s = slope(&eps_of(&hs), &sups);
        ok &= hs == [0.2, 0.1, 0.05] && non_increasing(&sups) && s >= 0.4;
        notes.push(format!("{direction}: sup W₂ {sups:.4?}, slope {s:.2}"));
    }
    check(ok, notes.join("; "))
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for direction in ["forward", "reverse"] {
        let out = run_cli(
            "convergence",
            "attraction_partition_sweep.json",
            &[("direction", direction.into())],
            dir,
            &[],
        )?;
        let rows = read_json(&out.join("convergence.json"))?["rows"].clone();
        let (steps, sups) = (column(&rows, "steps"), column(&rows, "sup_W2"));
        let envelope = 5.0 * (column(&rows, "W2_0")[0] + column(&rows, "eps")[0]);
        let plateau = *sups.last().unwrap();
        ok &= steps == [5.0, 10.0, 20.0, 40.0] && non_increasing(&sups) && plateau <= envelope;
        notes.push(format!(
            "{direction}: sup W₂ {sups:.4?}, plateau {plateau:.4} ≤ {envelope:.3}"
        ));
    }
    check(ok, notes.join("; "))
}

fn criterion_10(dir: &Path) -> Outcome {
    let out = run_cli("hausdorff", "attraction_hausdorff.json", &[], dir, &[])?;
    let report = read_json(&out.join("hausdorff.json"))?;
    let rows = &report["rows"];
    let (hs, est) = (column(rows, "h"), column(rows, "h_estimate"));
    let samples = report["samples_per_side"].as_u64();
    let s = slope(&eps_of(&hs), &est);
    let decreasing = est.windows(2).all(|w| w[1] < w[0]);
    check(
        hs == [0.2, 0.1, 0.05] && samples == Some(3) && decreasing && s >= 0.4,
        format!("H estimates {est:.4?}, slope {s:.2}"),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn criterion_11(dir: &Path) -> Outcome {
    let runs = [
        ("build-chain", "attraction_mpc.json"),
        ("simulate-mfc", "attraction_mpc.json"),
        ("simulate-chain", "attraction_mpc.json"),
        ("mpc-forward", "attraction_mpc.json"),
        ("mpc-reverse", "attraction_mpc.json"),
        ("convergence", "attraction_h_sweep.json"),
        ("hausdorff", "attraction_hausdorff.json"),
    ];
    let mut compared = 0;
    for (cmd, config) in runs {
        let a = run_cli(
            cmd,
            config,
            &[("seed", 11.into())],
            &dir.join("a"),
            &["--threads", "1"],
        )?;
        let b = run_cli(
            cmd,
            config,
            &[("seed", 11.into())],
            &dir.join("b"),
            &["--threads", "3"],
        )?;
        let (fa, fb) = (files(&a), files(&b));
        if fa.is_empty() || fa != fb {
            return Err(format!("{cmd}: outputs differ between identical runs"));
        }
        compared += fa.len();
    }
    Ok(format!(
        "7 subcommands, {compared} files byte-identical across reruns with 1 and 3 threads"
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    for sub in ["a", "b"] {
        std::fs::create_dir_all(dir.path().join(sub)).unwrap();
    }
    let d = dir.path();
    let criteria: Vec<(usize, &str, Option<Duration>, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (
            1,
            "optimal transport matches the brute-force oracle",
            Some(Duration::from_secs(10)),
            Box::new(criterion_1),
        ),
        (
            2,
            "generator soundness",
            Some(Duration::from_secs(30)),
            Box::new(criterion_2),
        ),
        (
            3,
            "conservation and the rate bound",
            None,
            Box::new(criterion_3),
        ),
        (
            4,
            "closed-form two-node chain",
            Some(Duration::from_secs(60)),
            Box::new(criterion_4),
        ),
        (
            5,
            "displacement bound and Poisson spread",
            Some(Duration::from_secs(60)),
            Box::new(criterion_5),
        ),
        (
            6,
            "deterministic dynamics oracle",
            None,
            Box::new(criterion_6),
        ),
        (
            7,
            "model-predictive couplings vanish on the zero field",
            None,
            Box::new(criterion_7),
        ),
        (
            8,
            "spacing sweep trend",
            Some(Duration::from_secs(600)),
            Box::new(move || criterion_8(d)),
        ),
        (
            9,
            "partition sweep trend",
            None,
            Box::new(move || criterion_9(d)),
        ),
        (
            10,
            "Hausdorff estimate trend",
            Some(Duration::from_secs(900)),
            Box::new(move || criterion_10(d)),
        ),
        (
            11,
            "reproducible CLI output",
            None,
            Box::new(move || criterion_11(d)),
        ),
    ];
    let mut failed = 0;
    for (n, name, limit, run) in criteria {
        let clock = Instant::now();
        let mut outcome = run();
        let took = clock.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, limit) {
            if took > limit {
                outcome = Err(format!("{detail}; took {took:.1?}, limit {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{took:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail} [{took:.2?}]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
