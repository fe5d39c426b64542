//! CSV and JSON readers and writers.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::ChainFlow;
use crate::controls::{ControlDistribution, ControlItem, RelaxedControl};
use crate::coupling::DiscrepancyReport;
use crate::dynamics::MfcFlow;
use crate::measures::{second_moment, LatticeDistribution, LatticeGrid, WeightedCloud};
use crate::transport::{PlanEntry, TransportPlan};
use crate::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{what}: cannot read {s:?} as a number ({e})")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| Error::Parse(format!("{what}: cannot read {s:?} as an index ({e})")))
}

fn writer_for<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn reader_for<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x_{i}")).collect()
}

/// Writes `x_1, …, x_d, w` rows.
pub fn write_cloud_csv<W: Write>(m: &WeightedCloud, out: W) -> Result<()> {
    let mut w = writer_for(out);
    let mut header = coord_header(m.dim());
    header.push("w".into());
    w.write_record(&header)?;
    for (p, &wt) in m.points().zip(m.weights()) {
        let mut rec: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
        rec.push(fmt_f64(wt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_xw_rows<R: Read>(input: R) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let mut r = reader_for(input);
    let headers = r.headers()?.clone();
    let n = headers.len();
    if n < 2
        || &headers[n - 1] != "w"
        || headers
            .iter()
            .take(n - 1)
            .enumerate()
            .any(|(i, h)| h != format!("x_{}", i + 1))
    {
        return Err(Error::Parse(format!(
            "expected columns x_1..x_d,w, found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let dim = n - 1;
    let (mut coords, mut weights) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::Parse(format!(
                "row {}: expected {n} fields, found {}",
                line + 1,
                rec.len()
            )));
        }
        for i in 0..dim {
            coords.push(parse_f64(&rec[i], "coordinate")?);
        }
        weights.push(parse_f64(&rec[dim], "weight")?);
    }
    Ok((dim, coords, weights))
}

pub fn read_cloud_csv<R: Read>(input: R) -> Result<WeightedCloud> {
    let (dim, coords, weights) = read_xw_rows(input)?;
    WeightedCloud::from_flat(dim, coords, weights)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CloudJson {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

pub fn cloud_to_json(m: &WeightedCloud) -> serde_json::Value {
    serde_json::to_value(CloudJson {
        dim: m.dim(),
        points: m.points().map(<[f64]>::to_vec).collect(),
        weights: m.weights().to_vec(),
    })
    .expect("clouds serialize")
}

pub fn cloud_from_json(v: &serde_json::Value) -> Result<WeightedCloud> {
    let c: CloudJson = serde_json::from_value(v.clone())?;
    if c.points.iter().any(|p| p.len() != c.dim) {
        return Err(Error::Structural(format!(
            "points do not all have dimension {}",
            c.dim
        )));
    }
    WeightedCloud::new(c.points, c.weights)
}

/// One row per node (zero masses included), entries clamped at zero.
pub fn write_lattice_csv<W: Write>(
    mu: &LatticeDistribution,
    grid: &LatticeGrid,
    out: W,
) -> Result<()> {
    if mu.len() != grid.len() {
        return Err(Error::Structural(
            "distribution and grid sizes differ".into(),
        ));
    }
    let mut w = writer_for(out);
    let mut header = coord_header(grid.dim());
    header.push("w".into());
    w.write_record(&header)?;
    for (x, v) in grid.nodes().zip(mu.clamped()) {
        let mut rec: Vec<String> = x.iter().map(|&c| fmt_f64(c)).collect();
        rec.push(fmt_f64(v));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x_1..x_d, w` rows and places each on its node of `grid`.
pub fn read_lattice_csv<R: Read>(input: R, grid: &LatticeGrid) -> Result<LatticeDistribution> {
    let (dim, coords, weights) = read_xw_rows(input)?;
    if dim != grid.dim() {
        return Err(Error::Structural(format!(
            "file of dimension {dim} for a grid of dimension {}",
            grid.dim()
        )));
    }
    let mut mu = vec![0.0; grid.len()];
    for (x, &w) in coords.chunks_exact(dim).zip(&weights) {
        let k = grid
            .locate(x)
            .ok_or_else(|| Error::Structural(format!("{x:?} is not a node of the grid")))?;
        mu[k] += w;
    }
    LatticeDistribution::new(mu)
}

/// `# source=…, target=…` followed by `i, j, mass` rows.
pub fn write_plan_csv<W: Write>(plan: &TransportPlan, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# source={} target={} p={}",
        plan.source_ref.as_deref().unwrap_or("-"),
        plan.target_ref.as_deref().unwrap_or("-"),
        plan.p
    )?;
    let mut w = writer_for(out);
    w.write_record(["i", "j", "mass"])?;
    for e in &plan.entries {
        w.write_record([e.source.to_string(), e.target.to_string(), fmt_f64(e.mass)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a plan written by [`write_plan_csv`] and recomputes its cost on the
/// two clouds.
pub fn read_plan_csv<R: Read>(
    input: R,
    a: &WeightedCloud,
    b: &WeightedCloud,
) -> Result<TransportPlan> {
    let mut text = String::new();
    BufReader::new(input).read_to_string(&mut text)?;
    let mut refs = (None, None);
    let mut p = 2.0;
    if let Some(first) = text.lines().next().and_then(|l| l.strip_prefix('#')) {
        for tok in first.split_whitespace() {
            if let Some(v) = tok.strip_prefix("source=") {
                refs.0 = (v != "-").then(|| v.to_string());
            } else if let Some(v) = tok.strip_prefix("target=") {
                refs.1 = (v != "-").then(|| v.to_string());
            } else if let Some(v) = tok.strip_prefix("p=") {
                p = parse_f64(v, "plan exponent")?;
            }
        }
    }
    let mut r = reader_for(text.as_bytes());
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!(
                "plan rows have 3 fields, found {}",
                rec.len()
            )));
        }
        let e = PlanEntry {
            source: parse_usize(&rec[0], "i")?,
            target: parse_usize(&rec[1], "j")?,
            mass: parse_f64(&rec[2], "mass")?,
        };
        if e.source >= a.len() || e.target >= b.len() {
            return Err(Error::Structural(format!(
                "plan entry ({}, {}) outside the clouds",
                e.source, e.target
            )));
        }
        entries.push(e);
    }
    let mut plan = TransportPlan {
        entries,
        n_source: a.len(),
        n_target: b.len(),
        p,
        cost: 0.0,
        source_ref: refs.0,
        target_ref: refs.1,
    };
    plan.cost = plan.evaluate_cost(a, b);
    Ok(plan)
}

/// `t, item_id, x_1..x_d, w` rows for every sampled time.
pub fn write_flow_csv<W: Write>(flow: &MfcFlow, out: W) -> Result<()> {
    let mut w = writer_for(out);
    let dim = flow.clouds()[0].dim();
    let mut header = vec!["t".to_string(), "item_id".to_string()];
    header.extend(coord_header(dim));
    header.push("w".into());
    w.write_record(&header)?;
    for (t, c) in flow.times().iter().zip(flow.clouds()) {
        for (i, (p, &wt)) in c.points().zip(c.weights()).enumerate() {
            let mut rec = vec![fmt_f64(*t), i.to_string()];
            rec.extend(p.iter().map(|&v| fmt_f64(v)));
            rec.push(fmt_f64(wt));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a flow CSV back into `(times, clouds)`.
pub fn read_flow_csv<R: Read>(input: R) -> Result<MfcFlow> {
    let mut r = reader_for(input);
    let headers = r.headers()?.clone();
    let n = headers.len();
    if n < 4 || &headers[0] != "t" || &headers[1] != "item_id" || &headers[n - 1] != "w" {
        return Err(Error::Parse("expected columns t,item_id,x_1..x_d,w".into()));
    }
    let dim = n - 3;
    let mut times: Vec<f64> = Vec::new();
    let mut clouds = Vec::new();
    let (mut coords, mut weights) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let t = parse_f64(&rec[0], "t")?;
        if times.last() != Some(&t) {
            if !times.is_empty() {
                clouds.push(WeightedCloud::from_flat(
                    dim,
                    std::mem::take(&mut coords),
                    std::mem::take(&mut weights),
                )?);
            }
            times.push(t);
        }
        for i in 0..dim {
            coords.push(parse_f64(&rec[2 + i], "coordinate")?);
        }
        weights.push(parse_f64(&rec[n - 1], "weight")?);
    }
    if !times.is_empty() {
        clouds.push(WeightedCloud::from_flat(dim, coords, weights)?);
    }
    MfcFlow::new(times, clouds, None)
}

#[derive(Serialize)]
pub struct FlowSummary {
    pub times: Vec<f64>,
    pub second_moments: Vec<f64>,
    pub particles: Vec<usize>,
}

pub fn flow_summary(flow: &MfcFlow) -> FlowSummary {
    FlowSummary {
        times: flow.times().to_vec(),
        second_moments: flow.clouds().iter().map(second_moment).collect(),
        particles: flow.clouds().iter().map(WeightedCloud::len).collect(),
    }
}

/// `t, node_id, mass` rows (masses clamped at zero).
pub fn write_chain_flow_csv<W: Write>(flow: &ChainFlow, out: W) -> Result<()> {
    let mut w = writer_for(out);
    w.write_record(["t", "node_id", "mass"])?;
    for (t, mu) in flow.times().iter().zip(flow.distributions()) {
        for (k, v) in mu.clamped().into_iter().enumerate() {
            w.write_record([fmt_f64(*t), k.to_string(), fmt_f64(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a chain flow CSV into `(times, distributions)`.
pub fn read_chain_flow_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<LatticeDistribution>)> {
    let mut r = reader_for(input);
    let (mut times, mut mus): (Vec<f64>, Vec<Vec<f64>>) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!(
                "chain flow rows have 3 fields, found {}",
                rec.len()
            )));
        }
        let t = parse_f64(&rec[0], "t")?;
        let k = parse_usize(&rec[1], "node_id")?;
        if times.last() != Some(&t) {
            times.push(t);
            mus.push(Vec::new());
        }
        let cur = mus.last_mut().unwrap();
        if k != cur.len() {
            return Err(Error::Parse(format!(
                "node ids at t = {t} are not consecutive"
            )));
        }
        cur.push(parse_f64(&rec[2], "mass")?);
    }
    let mus = mus
        .into_iter()
        .map(LatticeDistribution::new)
        .collect::<Result<_>>()?;
    Ok((times, mus))
}

/// `t, W2` rows.
pub fn write_discrepancy_csv<W: Write>(report: &DiscrepancyReport, out: W) -> Result<()> {
    let mut w = writer_for(out);
    w.write_record(["t", "W2"])?;
    for (t, v) in report.times.iter().zip(&report.w2) {
        w.write_record([fmt_f64(*t), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_discrepancy_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut r = reader_for(input);
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((parse_f64(&rec[0], "t")?, parse_f64(&rec[1], "W2")?))
        })
        .collect()
}

/// Lattice nodes as `node_id, x_1..x_d` rows.
pub fn write_grid_csv<W: Write>(grid: &LatticeGrid, out: W) -> Result<()> {
    let mut w = writer_for(out);
    let mut header = vec!["node_id".to_string()];
    header.extend(coord_header(grid.dim()));
    w.write_record(&header)?;
    for (k, x) in grid.nodes().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(x.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_csv<R: Read>(input: R, spacing: f64) -> Result<LatticeGrid> {
    let mut r = reader_for(input);
    let mut nodes = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        nodes.push(
            rec.iter()
                .skip(1)
                .map(|s| parse_f64(s, "coordinate"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    LatticeGrid::from_nodes(nodes, spacing)
}

/// JSON form of a relaxed control: `{time_grid, atom_ids, cells}`.
pub fn control_to_json(c: &RelaxedControl) -> serde_json::Value {
    serde_json::json!({
        "time_grid": c.time_grid(),
        "atom_ids": (0..c.n_atoms()).collect::<Vec<_>>(),
        "cells": c.cells(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlJson {
    time_grid: Vec<f64>,
    atom_ids: Vec<usize>,
    cells: Vec<Vec<f64>>,
}

/// Reads a control; `atom_ids` may list a subset of `0..n_atoms` in any
/// order, and the cells are expanded to all atoms.
pub fn control_from_json(v: &serde_json::Value, n_atoms: usize) -> Result<RelaxedControl> {
    let c: ControlJson = serde_json::from_value(v.clone())?;
    if let Some(&bad) = c.atom_ids.iter().find(|&&a| a >= n_atoms) {
        return Err(Error::Structural(format!("atom id {bad} out of {n_atoms}")));
    }
    let cells = c
        .cells
        .iter()
        .map(|cell| {
            if cell.len() != c.atom_ids.len() {
                return Err(Error::Structural(
                    "cell length differs from the atom id list".into(),
                ));
            }
            let mut full = vec![0.0; n_atoms];
            for (&a, &w) in c.atom_ids.iter().zip(cell) {
                full[a] += w;
            }
            Ok(full)
        })
        .collect::<Result<_>>()?;
    RelaxedControl::new(c.time_grid, cells)
}

/// `{cloud_file, horizon, items: [{atom, weight, control}]}`, where `atom`
/// indexes the rows of the base cloud file.
pub fn distribution_to_json(alpha: &ControlDistribution, cloud_file: &str) -> serde_json::Value {
    let items: Vec<serde_json::Value> = alpha
        .items()
        .iter()
        .enumerate()
        .map(|(i, it)| serde_json::json!({"atom": i, "weight": it.weight, "control": control_to_json(&it.control)}))
        .collect();
    let (s, r) = alpha.horizon();
    serde_json::json!({"cloud_file": cloud_file, "horizon": [s, r], "items": items})
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemJson {
    atom: usize,
    weight: f64,
    control: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct DistributionJson {
    cloud_file: String,
    horizon: [f64; 2],
    items: Vec<ItemJson>,
}

/// Reads a distribution of controls against its base cloud.
pub fn distribution_from_json(
    v: &serde_json::Value,
    cloud: &WeightedCloud,
    n_atoms: usize,
) -> Result<ControlDistribution> {
    let d: DistributionJson = serde_json::from_value(v.clone())?;
    let items = d
        .items
        .into_iter()
        .map(|it| {
            if it.atom >= cloud.len() {
                return Err(Error::Structural(format!(
                    "item refers to atom {} of a {}-atom cloud",
                    it.atom,
                    cloud.len()
                )));
            }
            Ok(ControlItem {
                weight: it.weight,
                state: cloud.point(it.atom).to_vec(),
                control: control_from_json(&it.control, n_atoms)?,
            })
        })
        .collect::<Result<_>>()?;
    ControlDistribution::new(items)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Reads the first line of a file (used for plan headers).
pub fn first_line<R: BufRead>(mut r: R) -> Result<String> {
    let mut s = String::new();
    r.read_line(&mut s)?;
    Ok(s.trim_end().to_string())
}
