//! The subcommands. Each writes its artifacts into the output directory and
//! returns a few summary lines for the terminal.

use std::io::Write;
use std::path::{Path, PathBuf};

use mfc_core::chain::{
    integrate_kolmogorov, sample_jump_process, verify_assumptions, JumpConfig, LatticeChain,
};
use mfc_core::coupling::{
    hausdorff_estimate, mpc_chain_from_deterministic, mpc_deterministic_from_chain,
    CouplingOptions, CouplingRun, Partition,
};
use mfc_core::dynamics::{estimate_constants, integrate_mfc, VectorFieldProblem};
use mfc_core::io;
use mfc_core::measures::{LatticeDistribution, WeightedCloud};
use mfc_core::time_grid::uniform_points;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Direction, ExperimentConfig};
use crate::setup::{self, derive_seed, loglog_slope};
use crate::CliError;

/// Recorded jump paths in `jumps.json`.
const KEPT_PATHS: usize = 10;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub base_dir: PathBuf,
    pub out: PathBuf,
    pub problem: VectorFieldProblem,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, base_dir: PathBuf, out: PathBuf) -> Result<Self, CliError> {
        let problem = cfg.build_problem()?;
        cfg.check_stability(&problem)?;
        std::fs::create_dir_all(&out).map_err(|e| CliError::Output {
            path: out.clone(),
            source: e.into(),
        })?;
        Ok(Self {
            cfg,
            base_dir,
            out,
            problem,
        })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write<F>(&self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> mfc_core::Result<()>,
    {
        let path = self.file(name);
        let res = io::create(&path).and_then(|mut w| {
            body(&mut w)?;
            w.flush()?;
            Ok(())
        });
        res.map_err(|source| CliError::Output { path, source })
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| io::write_json(value, w))
    }

    fn chain(&self, h: f64) -> Result<LatticeChain, CliError> {
        setup::chain(&self.problem, h, self.cfg.max_nodes()?)
    }

    fn sampled_cloud(&self) -> Result<WeightedCloud, CliError> {
        setup::initial_cloud(&self.cfg, &self.base_dir, &self.problem)
    }

    fn options(&self) -> CouplingOptions {
        CouplingOptions {
            dt: self.cfg.dt,
            eval_per_step: self.cfg.eval_per_step,
            max_particles: self.cfg.max_particles,
            coalesce: self.cfg.coalesce,
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.6e}")
}

#[derive(Serialize)]
struct ChainMeta<'a> {
    problem: &'a str,
    dim: usize,
    spacing: f64,
    nodes: usize,
    atoms: usize,
    horizon: f64,
    #[serde(rename = "B_Q")]
    b_q: f64,
    eps: f64,
    fan_out: usize,
    max_stable_dt: f64,
    bound_r: f64,
    lipschitz: f64,
    constants_verified: bool,
}

fn chain_meta<'a>(problem: &'a VectorFieldProblem, chain: &LatticeChain) -> ChainMeta<'a> {
    ChainMeta {
        problem: &problem.name,
        dim: problem.dim(),
        spacing: chain.spacing(),
        nodes: chain.len(),
        atoms: chain.n_atoms(),
        horizon: chain.horizon(),
        b_q: chain.bound_q(),
        eps: chain.eps(),
        fan_out: chain.fan_out(),
        max_stable_dt: chain.max_stable_dt(),
        bound_r: problem.bound_r,
        lipschitz: problem.lipschitz,
        constants_verified: problem.verified,
    }
}

/// `grid.csv`, `chain.json`, `verification.json`, `constants.json`.
pub fn build_chain(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.cfg;
    let chain = ctx.chain(cfg.single_h()?)?;
    let report = verify_assumptions(
        &chain,
        cfg.verify_budget,
        derive_seed(cfg.seed, "verify", 0),
    )?;
    let constants = estimate_constants(
        &ctx.problem,
        cfg.verify_budget,
        derive_seed(cfg.seed, "constants", 0),
    )?;
    ctx.write("grid.csv", |w| io::write_grid_csv(chain.grid(), w))?;
    ctx.json("chain.json", &chain_meta(&ctx.problem, &chain))?;
    ctx.json("verification.json", &report)?;
    ctx.json("constants.json", &constants)?;
    Ok(vec![
        format!(
            "nodes {}  B_Q {}  eps {}",
            chain.len(),
            num(report.b_q),
            num(report.eps)
        ),
        format!(
            "eps_space {}  eps_var {}  row_sum_defect {}",
            num(report.eps_space),
            num(report.eps_var),
            num(report.row_sum_defect)
        ),
    ])
}

/// `initial_cloud.csv`, `controls.json`, `flow.csv`, `flow_summary.json`.
pub fn simulate_mfc(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.cfg;
    let m0 = ctx.sampled_cloud()?;
    let alpha = setup::law(cfg, &ctx.problem, "deterministic", 0)?.distribution(&m0)?;
    let flow = integrate_mfc(&ctx.problem, &alpha, cfg.dt, &[])?;
    ctx.write("initial_cloud.csv", |w| io::write_cloud_csv(&m0, w))?;
    ctx.json(
        "controls.json",
        &io::distribution_to_json(&alpha, "initial_cloud.csv"),
    )?;
    ctx.write("flow.csv", |w| io::write_flow_csv(&flow, w))?;
    let summary = io::flow_summary(&flow);
    ctx.json("flow_summary.json", &summary)?;
    Ok(vec![format!(
        "particles {}  steps {}  final second moment {}",
        m0.len(),
        flow.times().len() - 1,
        num(*summary.second_moments.last().unwrap())
    )])
}

#[derive(Serialize)]
struct ChainSummary {
    times: Vec<f64>,
    total_mass: Vec<f64>,
    min_entry: Vec<f64>,
    rate_bound_excess: f64,
}

/// `grid.csv`, `initial_lattice.csv`, `chain_flow.csv`, `chain_summary.json`
/// and, when `jump_samples > 0`, `jumps.json`.
pub fn simulate_chain(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.cfg;
    let chain = ctx.chain(cfg.single_h()?)?;
    let (_, mu0) = setup::start(cfg, &chain, &ctx.sampled_cloud()?)?;
    let policy = setup::law(cfg, &ctx.problem, "policy", 0)?.policy(chain.grid())?;
    let horizon = ctx.problem.horizon;
    let flow = integrate_kolmogorov(&chain, &mu0, &policy, 0.0, horizon, cfg.dt, &[])?;
    let summary = ChainSummary {
        times: flow.times().to_vec(),
        total_mass: flow
            .distributions()
            .iter()
            .map(|m| m.as_slice().iter().sum())
            .collect(),
        min_entry: flow
            .distributions()
            .iter()
            .map(|m| m.as_slice().iter().copied().fold(f64::INFINITY, f64::min))
            .collect(),
        rate_bound_excess: flow.rate_bound_excess(chain.bound_q()),
    };
    ctx.write("grid.csv", |w| io::write_grid_csv(chain.grid(), w))?;
    ctx.write("initial_lattice.csv", |w| {
        io::write_lattice_csv(&mu0, chain.grid(), w)
    })?;
    ctx.write("chain_flow.csv", |w| io::write_chain_flow_csv(&flow, w))?;
    ctx.json("chain_summary.json", &summary)?;
    let mut lines = vec![format!(
        "nodes {}  steps {}  rate bound excess {}",
        chain.len(),
        flow.times().len() - 1,
        num(summary.rate_bound_excess)
    )];
    if cfg.jump_samples > 0 {
        let jc = JumpConfig {
            n_samples: cfg.jump_samples,
            seed: derive_seed(cfg.seed, "jumps", 0),
            eval_times: uniform_points(0.0, horizon, 4 * cfg.eval_per_step),
            keep_paths: KEPT_PATHS.min(cfg.jump_samples),
        };
        let jumps = sample_jump_process(&chain, &flow, &jc)?;
        ctx.json("jumps.json", &jumps)?;
        lines.push(format!(
            "jump samples {}  final mean squared displacement {}",
            jumps.n_samples,
            num(*jumps.mean_sq_displacement.last().unwrap())
        ));
    }
    Ok(lines)
}

fn run_mpc(
    ctx: &Context,
    direction: Direction,
    chain: &LatticeChain,
    m0: &WeightedCloud,
    mu0: &LatticeDistribution,
    steps: usize,
) -> Result<CouplingRun, CliError> {
    let cfg = &ctx.cfg;
    let partition = Partition::uniform(ctx.problem.horizon, steps)?;
    let opts = ctx.options();
    let run = match direction {
        Direction::Forward => {
            let policy = setup::law(cfg, &ctx.problem, "policy", 0)?.policy(chain.grid())?;
            mpc_deterministic_from_chain(&ctx.problem, chain, m0, mu0, &policy, &partition, &opts)?
        }
        Direction::Reverse => {
            let alpha = setup::law(cfg, &ctx.problem, "deterministic", 0)?.distribution(m0)?;
            mpc_chain_from_deterministic(&ctx.problem, chain, mu0, &alpha, &partition, &opts)?
        }
    };
    Ok(run)
}

/// Initial data, both flows, `trace.json`, `discrepancy.csv`,
/// `bound_sheet.json` and the strategy the construction produced.
pub fn mpc(ctx: &Context, direction: Direction) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.cfg;
    let chain = ctx.chain(cfg.single_h()?)?;
    let (m0, mu0) = setup::start(cfg, &chain, &ctx.sampled_cloud()?)?;
    let run = run_mpc(ctx, direction, &chain, &m0, &mu0, cfg.single_steps()?)?;
    ctx.write("grid.csv", |w| io::write_grid_csv(chain.grid(), w))?;
    ctx.write("initial_cloud.csv", |w| io::write_cloud_csv(&m0, w))?;
    ctx.write("initial_lattice.csv", |w| {
        io::write_lattice_csv(&mu0, chain.grid(), w)
    })?;
    ctx.write("flow.csv", |w| io::write_flow_csv(&run.mfc, w))?;
    ctx.write("chain_flow.csv", |w| {
        io::write_chain_flow_csv(&run.chain, w)
    })?;
    ctx.json(
        "trace.json",
        &serde_json::json!({"trace": run.trace, "discrepancy": run.report}),
    )?;
    ctx.write("discrepancy.csv", |w| {
        io::write_discrepancy_csv(&run.report, w)
    })?;
    ctx.json("bound_sheet.json", &run.report.bound_sheet())?;
    match direction {
        Direction::Forward => {
            if let Some(alpha) = run.mfc.source() {
                let base = alpha.base_cloud();
                ctx.write("controls_base.csv", |w| io::write_cloud_csv(&base, w))?;
                ctx.json(
                    "controls.json",
                    &io::distribution_to_json(alpha, "controls_base.csv"),
                )?;
            }
        }
        Direction::Reverse => {
            let controls: Vec<serde_json::Value> = run
                .chain
                .policy()
                .controls()
                .iter()
                .map(io::control_to_json)
                .collect();
            ctx.json(
                "policy.json",
                &serde_json::json!({"nodes": chain.len(), "controls": controls}),
            )?;
        }
    }
    let sheet = run.report.bound_sheet();
    Ok(vec![format!(
        "sup_W2 {}  W2_0 {}  eps {}  B_Q {}  d_Delta {}",
        num(sheet.sup_W2),
        num(sheet.W2_0),
        num(sheet.eps),
        num(sheet.B_Q),
        num(sheet.d_Delta)
    )])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct SweepRow {
    pub h: f64,
    pub steps: usize,
    pub d_Delta: f64,
    pub eps: f64,
    pub B_Q: f64,
    pub W2_0: f64,
    pub sup_W2: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub direction: Direction,
    pub rows: Vec<SweepRow>,
    /// Log-log slope of `sup_W2` against `eps` (h sweeps).
    pub slope_eps: Option<f64>,
    /// Log-log slope of `sup_W2` against `d_Delta` (partition sweeps).
    pub slope_d_delta: Option<f64>,
}

fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<(f64, usize)>, CliError> {
    match (&cfg.h_list, &cfg.partition_list) {
        (Some(hs), _) if hs.len() >= 3 => {
            let n = cfg.single_steps()?;
            Ok(hs.iter().map(|&h| (h, n)).collect())
        }
        (_, Some(ns)) if ns.len() >= 3 => {
            let h = cfg.single_h()?;
            Ok(ns.iter().map(|&n| (h, n)).collect())
        }
        _ => Err(CliError::Config(
            "h_list or partition_list: a sweep needs at least 3 entries".into(),
        )),
    }
}

fn write_rows_csv(path: &Path, rows: &[SweepRow]) -> mfc_core::Result<()> {
    let mut w = io::create(path)?;
    writeln!(w, "h,steps,d_Delta,eps,B_Q,W2_0,sup_W2")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            io::fmt_f64(r.h),
            r.steps,
            io::fmt_f64(r.d_Delta),
            io::fmt_f64(r.eps),
            io::fmt_f64(r.B_Q),
            io::fmt_f64(r.W2_0),
            io::fmt_f64(r.sup_W2)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `convergence.csv` and `convergence.json`.
pub fn convergence(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.cfg;
    let points = sweep_points(cfg)?;
    let sampled = ctx.sampled_cloud()?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(h, steps)| {
            let chain = ctx.chain(h)?;
            let (m0, mu0) = setup::start(cfg, &chain, &sampled)?;
            let rep = run_mpc(ctx, cfg.direction, &chain, &m0, &mu0, steps)?.report;
            Ok(SweepRow {
                h,
                steps,
                d_Delta: rep.d_delta,
                eps: rep.eps,
                B_Q: rep.b_q,
                W2_0: rep.w2_0,
                sup_W2: rep.sup,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_W2).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let dd: Vec<f64> = rows.iter().map(|r| r.d_Delta).collect();
    let report = SweepReport {
        direction: cfg.direction,
        slope_eps: loglog_slope(&eps, &sups),
        slope_d_delta: loglog_slope(&dd, &sups),
        rows,
    };
    let path = ctx.file("convergence.csv");
    write_rows_csv(&path, &report.rows).map_err(|source| CliError::Output { path, source })?;
    ctx.json("convergence.json", &report)?;
    let mut lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "h {}  steps {}  eps {}  sup_W2 {}",
                r.h,
                r.steps,
                num(r.eps),
                num(r.sup_W2)
            )
        })
        .collect();
    let show = |s: Option<f64>| s.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
    lines.push(format!(
        "slope vs eps {}  slope vs d_Delta {}",
        show(report.slope_eps),
        show(report.slope_d_delta)
    ));
    Ok(lines)
}

#[derive(Clone, Debug, Serialize)]
pub struct HausdorffRow {
    pub h: f64,
    pub eps: f64,
    pub h_estimate: f64,
    pub sup_deterministic: f64,
    pub sup_chain: f64,
    pub table: Vec<mfc_core::coupling::BundleRow>,
}

#[derive(Debug, Serialize)]
pub struct HausdorffSweep {
    pub samples_per_side: usize,
    pub steps: usize,
    pub rows: Vec<HausdorffRow>,
    /// Log-log slope of the estimate against `eps`, when several spacings ran.
    pub slope_eps: Option<f64>,
}

/// `hausdorff.json` and `hausdorff.csv`, one row per lattice spacing.
pub fn hausdorff(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.cfg;
    let hs = cfg.all_h();
    if hs.is_empty() {
        return Err(CliError::Config("h: required by this command".into()));
    }
    let steps = cfg.single_steps()?;
    let partition = Partition::uniform(ctx.problem.horizon, steps)?;
    let opts = ctx.options();
    let sampled = ctx.sampled_cloud()?;
    let mut rows = Vec::with_capacity(hs.len());
    for &h in &hs {
        let chain = ctx.chain(h)?;
        let (m0, mu0) = setup::start(cfg, &chain, &sampled)?;
        let n = cfg.samples_per_side as u64;
        let det = (0..n)
            .map(|i| Ok(setup::law(cfg, &ctx.problem, "deterministic", i)?.distribution(&m0)?))
            .collect::<Result<Vec<_>, CliError>>()?;
        let pol = (0..n)
            .map(|i| Ok(setup::law(cfg, &ctx.problem, "policy", i)?.policy(chain.grid())?))
            .collect::<Result<Vec<_>, CliError>>()?;
        let rep = hausdorff_estimate(
            &ctx.problem,
            &chain,
            &m0,
            &mu0,
            &det,
            &pol,
            &partition,
            &opts,
        )?;
        rows.push(HausdorffRow {
            h,
            eps: chain.eps(),
            h_estimate: rep.h_estimate,
            sup_deterministic: rep.sup_deterministic,
            sup_chain: rep.sup_chain,
            table: rep.table,
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let est: Vec<f64> = rows.iter().map(|r| r.h_estimate).collect();
    let sweep = HausdorffSweep {
        samples_per_side: cfg.samples_per_side,
        steps,
        slope_eps: loglog_slope(&eps, &est),
        rows,
    };
    ctx.json("hausdorff.json", &sweep)?;
    let path = ctx.file("hausdorff.csv");
    write_hausdorff_csv(&path, &sweep.rows).map_err(|source| CliError::Output { path, source })?;
    let mut lines: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| {
            format!(
                "h {}  eps {}  H_estimate {}",
                r.h,
                num(r.eps),
                num(r.h_estimate)
            )
        })
        .collect();
    if let Some(s) = sweep.slope_eps {
        lines.push(format!("slope vs eps {s:.4}"));
    }
    Ok(lines)
}

fn write_hausdorff_csv(path: &Path, rows: &[HausdorffRow]) -> mfc_core::Result<()> {
    let mut w = io::create(path)?;
    writeln!(w, "h,eps,H_estimate,sup_deterministic,sup_chain")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            io::fmt_f64(r.h),
            io::fmt_f64(r.eps),
            io::fmt_f64(r.h_estimate),
            io::fmt_f64(r.sup_deterministic),
            io::fmt_f64(r.sup_chain)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<R: std::io::BufRead>(input: R, header: &str) -> mfc_core::Result<Vec<Vec<f64>>> {
    let mut lines = input.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header {
        return Err(mfc_core::Error::Parse(format!(
            "expected header {header:?}, got {first:?}"
        )));
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let cells = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| mfc_core::Error::Parse(format!("row {}: {e}", i + 1)))?;
        if cells.len() != width {
            return Err(mfc_core::Error::Parse(format!(
                "row {}: {} fields, expected {width}",
                i + 1,
                cells.len()
            )));
        }
        rows.push(cells);
    }
    Ok(rows)
}

/// Reads `convergence.csv`.
pub fn read_sweep_csv<R: std::io::BufRead>(input: R) -> mfc_core::Result<Vec<SweepRow>> {
    Ok(read_table(input, "h,steps,d_Delta,eps,B_Q,W2_0,sup_W2")?
        .into_iter()
        .map(|c| SweepRow {
            h: c[0],
            steps: c[1] as usize,
            d_Delta: c[2],
            eps: c[3],
            B_Q: c[4],
            W2_0: c[5],
            sup_W2: c[6],
        })
        .collect())
}

/// Reads `hausdorff.csv` as `[h, eps, H_estimate, sup_deterministic, sup_chain]` rows.
pub fn read_hausdorff_csv<R: std::io::BufRead>(input: R) -> mfc_core::Result<Vec<[f64; 5]>> {
    Ok(
        read_table(input, "h,eps,H_estimate,sup_deterministic,sup_chain")?
            .into_iter()
            .map(|c| [c[0], c[1], c[2], c[3], c[4]])
            .collect(),
    )
}
