//! Built-in vector fields with analytically known constants, and a registry
//! that builds them from a name and JSON parameters.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controls::ControlAtomSet;
use crate::dynamics::{VectorField, VectorFieldProblem};
use crate::measures::{BoxDomain, MeasureView};
use crate::{Error, Result};

/// Names accepted by [`build_problem`].
pub const PROBLEM_NAMES: [&str; 4] = ["zero", "constant", "linear", "attraction"];

struct Zero(usize);

impl VectorField for Zero {
    fn dim(&self) -> usize {
        self.0
    }

    fn velocity(&self, _: f64, _: &[f64], _: &MeasureView<'_>, _: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

struct Constant(Vec<f64>);

impl VectorField for Constant {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn velocity(&self, _: f64, _: &[f64], _: &MeasureView<'_>, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

struct Linear {
    dim: usize,
    rate: f64,
}

impl VectorField for Linear {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, _: f64, x: &[f64], _: &MeasureView<'_>, _: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.rate * v;
        }
    }
}

/// `f(x, m, u) = φ(x)·(a·(mean(m) − x) + g·u)` with the optional cutoff
/// `φ(x) = Π (1 − (xᵢ/L)²)`, which vanishes on the boundary of the box.
struct Attraction {
    dim: usize,
    half_width: f64,
    strength: f64,
    gain: f64,
    cutoff: bool,
}

impl VectorField for Attraction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, _: f64, x: &[f64], m: &MeasureView<'_>, u: &[f64], out: &mut [f64]) {
        let phi = if self.cutoff {
            x.iter()
                .map(|v| 1.0 - (v / self.half_width).powi(2))
                .product::<f64>()
        } else {
            1.0
        };
        for i in 0..self.dim {
            let ui = u.get(i).copied().unwrap_or(0.0);
            out[i] = phi * (self.strength * (m.mean[i] - x[i]) + self.gain * ui);
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn three() -> usize {
    3
}

fn yes() -> bool {
    true
}

fn unit_velocity() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroParams {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub half_width: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one_usize")]
    pub atoms_per_axis: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantParams {
    #[serde(default = "unit_velocity")]
    pub velocity: Vec<f64>,
    #[serde(default = "one")]
    pub half_width: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one_usize")]
    pub atoms_per_axis: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub half_width: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub rate: f64,
    #[serde(default = "one_usize")]
    pub atoms_per_axis: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractionParams {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub half_width: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Attraction rate `a` towards the mean.
    #[serde(default = "one")]
    pub strength: f64,
    /// Control gain `g`.
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default = "three")]
    pub atoms_per_axis: usize,
    #[serde(default = "yes")]
    pub cutoff: bool,
}

impl Default for AttractionParams {
    fn default() -> Self {
        Self {
            dim: 1,
            half_width: 1.0,
            horizon: 1.0,
            strength: 1.0,
            gain: 1.0,
            atoms_per_axis: 3,
            cutoff: true,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be positive, got {v}")))
    }
}

/// `f ≡ 0` on `[-L, L]^d`.
pub fn zero(
    dim: usize,
    half_width: f64,
    horizon: f64,
    atoms_per_axis: usize,
) -> Result<VectorFieldProblem> {
    check_positive("half_width", half_width)?;
    VectorFieldProblem::new(
        "zero",
        Arc::new(Zero(dim)),
        BoxDomain::cube(dim, half_width)?,
        ControlAtomSet::grid(dim, atoms_per_axis)?,
        horizon,
        0.0,
        0.0,
    )
}

/// `f ≡ c` inside `[-L, L]^d`.
pub fn constant(
    velocity: Vec<f64>,
    half_width: f64,
    horizon: f64,
    atoms_per_axis: usize,
) -> Result<VectorFieldProblem> {
    check_positive("half_width", half_width)?;
    let dim = velocity.len();
    let r = velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
    VectorFieldProblem::new(
        "constant",
        Arc::new(Constant(velocity)),
        BoxDomain::cube(dim, half_width)?,
        ControlAtomSet::grid(dim, atoms_per_axis)?,
        horizon,
        r,
        0.0,
    )
}

/// `f(x) = k·x` inside `[-L, L]^d`.
pub fn linear(
    dim: usize,
    half_width: f64,
    horizon: f64,
    rate: f64,
    atoms_per_axis: usize,
) -> Result<VectorFieldProblem> {
    check_positive("half_width", half_width)?;
    VectorFieldProblem::new(
        "linear",
        Arc::new(Linear { dim, rate }),
        BoxDomain::cube(dim, half_width)?,
        ControlAtomSet::grid(dim, atoms_per_axis)?,
        horizon,
        rate.abs() * half_width * (dim as f64).sqrt(),
        rate.abs(),
    )
}

/// Controlled attraction towards the mean on `[-L, L]^d`, control atoms on a
/// regular grid of `[-1, 1]^d`.
///
/// `R = a·2L√d + g·max‖u‖`; with the cutoff, `C_f = 2√d·R/L + 2a`,
/// otherwise `C_f = 2a`.
pub fn attraction(p: &AttractionParams) -> Result<VectorFieldProblem> {
    check_positive("half_width", p.half_width)?;
    if !(p.strength >= 0.0 && p.gain >= 0.0) {
        return Err(Error::Argument(
            "strength and gain must be nonnegative".into(),
        ));
    }
    let atoms = ControlAtomSet::grid(p.dim, p.atoms_per_axis)?;
    let sd = (p.dim as f64).sqrt();
    let r = p.strength * 2.0 * p.half_width * sd + p.gain * atoms.max_norm();
    let cf = if p.cutoff {
        2.0 * sd * r / p.half_width + 2.0 * p.strength
    } else {
        2.0 * p.strength
    };
    VectorFieldProblem::new(
        "attraction",
        Arc::new(Attraction {
            dim: p.dim,
            half_width: p.half_width,
            strength: p.strength,
            gain: p.gain,
            cutoff: p.cutoff,
        }),
        BoxDomain::cube(p.dim, p.half_width)?,
        atoms,
        p.horizon,
        r,
        cf,
    )
}

/// Builds a registered problem from its name and JSON parameters.
pub fn build_problem(name: &str, params: &serde_json::Value) -> Result<VectorFieldProblem> {
    let params = if params.is_null() {
        serde_json::json!({})
    } else {
        params.clone()
    };
    match name {
        "zero" => {
            let p: ZeroParams = serde_json::from_value(params)?;
            zero(p.dim, p.half_width, p.horizon, p.atoms_per_axis)
        }
        "constant" => {
            let p: ConstantParams = serde_json::from_value(params)?;
            constant(p.velocity, p.half_width, p.horizon, p.atoms_per_axis)
        }
        "linear" => {
            let p: LinearParams = serde_json::from_value(params)?;
            linear(p.dim, p.half_width, p.horizon, p.rate, p.atoms_per_axis)
        }
        "attraction" => attraction(&serde_json::from_value(params)?),
        other => Err(Error::Argument(format!(
            "unknown problem {other:?}; known problems: {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}
