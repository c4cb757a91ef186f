//! Finite-difference reference for frame derivatives and the Hessian.
//!
//! Everything is differentiated in the chart `(V, Y, s)` with `a = e^s`, where
//! `E_0 = d/ds` and steps can never leave `a > 0`. The Hessian uses its
//! defining formula
//!
//! ```text
//! b_{alpha,beta} = E_alpha(E_beta b) - (nabla_{E_alpha} E_beta) b
//! ```
//!
//! with nested central differences for the first term and the connection
//! table for the second. Nothing here calls into the closed-form Hessian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::GeneralizedHeisenbergAlgebra;
use crate::busemann::{busemann_value, BoundaryPoint};
use crate::error::{Error, Result};
use crate::group::{connection_coeffs, frame_at, FrameVector, GroupPoint};
use crate::hessian::{BasisTag, HessianMatrix};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub h: f64,
    pub scheme: Scheme,
    pub tol_grad: f64,
    pub tol_hess: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            scheme: Scheme::Central,
            tol_grad: 1e-6,
            tol_hess: 1e-5,
        }
    }
}

impl FdConfig {
    pub fn with_h(self, h: f64) -> Self {
        Self { h, ..self }
    }

    pub fn is_valid(&self) -> bool {
        self.h > 0.0 && self.tol_grad > 0.0 && self.tol_hess > 0.0
    }
}

/// Chart coordinates `(V, Y, log a)`.
fn to_chart(x: &GroupPoint) -> DVector<f64> {
    let (k, m) = (x.v.len(), x.y.len());
    let mut c = DVector::zeros(k + m + 1);
    c.rows_mut(0, k).copy_from(&x.v);
    c.rows_mut(k, m).copy_from(&x.y);
    c[k + m] = x.a.ln();
    c
}

fn from_chart(c: &DVector<f64>, k: usize, m: usize) -> GroupPoint {
    GroupPoint {
        v: c.rows(0, k).into_owned(),
        y: c.rows(k, m).into_owned(),
        a: c[k + m].exp(),
    }
}

/// Chart components of `E_alpha` at `x`; the `d/da` coefficient `a` becomes
/// `1` on `d/ds`.
fn chart_direction(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, alpha: usize) -> Result<DVector<f64>> {
    let n = alg.dim_s();
    if alpha >= n {
        return Err(Error::IndexOutOfRange { index: alpha, dim: n });
    }
    let frame = frame_at(alg, x)?;
    let mut d: DVector<f64> = frame.row(alpha).transpose();
    d[n - 1] /= x.a;
    Ok(d)
}

/// `E_alpha phi` at `x` by a central difference along the chart direction.
pub fn directional_derivative<F>(
    alg: &GeneralizedHeisenbergAlgebra,
    phi: &F,
    x: &GroupPoint,
    alpha: usize,
    cfg: &FdConfig,
) -> Result<f64>
where
    F: Fn(&GroupPoint) -> f64,
{
    let d = chart_direction(alg, x, alpha)?;
    let c = to_chart(x);
    let (k, m) = (alg.k(), alg.m());
    let plus = from_chart(&(&c + &d * cfg.h), k, m);
    let minus = from_chart(&(&c - &d * cfg.h), k, m);
    Ok((phi(&plus) - phi(&minus)) / (2.0 * cfg.h))
}

/// All frame derivatives `(E_alpha phi)_alpha`.
pub fn numeric_frame_gradient<F>(
    alg: &GeneralizedHeisenbergAlgebra,
    phi: &F,
    x: &GroupPoint,
    cfg: &FdConfig,
) -> Result<FrameVector>
where
    F: Fn(&GroupPoint) -> f64,
{
    let n = alg.dim_s();
    let mut g = FrameVector::zeros(n);
    for alpha in 0..n {
        g[alpha] = directional_derivative(alg, phi, x, alpha, cfg)?;
    }
    Ok(g)
}

/// Numeric gradient of the Busemann function.
pub fn numeric_gradient(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    cfg: &FdConfig,
) -> Result<FrameVector> {
    x.check_dims(alg)?;
    theta.check_dims(alg)?;
    let b = |p: &GroupPoint| busemann_value(alg, p, theta).expect("dimensions checked");
    numeric_frame_gradient(alg, &b, x, cfg)
}

/// Finite-difference Hessian, symmetrized, with the raw asymmetry.
#[derive(Debug, Clone)]
pub struct NumericHessian {
    pub hessian: HessianMatrix,
    pub asymmetry: f64,
}

/// Finite-difference Hessian of a scalar field in the frame.
pub fn numeric_hessian_of<F>(
    alg: &GeneralizedHeisenbergAlgebra,
    phi: &F,
    x: &GroupPoint,
    cfg: &FdConfig,
) -> Result<NumericHessian>
where
    F: Fn(&GroupPoint) -> f64,
{
    x.check_dims(alg)?;
    let n = alg.dim_s();
    let (k, m) = (alg.k(), alg.m());
    let grad = numeric_frame_gradient(alg, phi, x, cfg)?;
    let c = to_chart(x);
    let mut raw = DMatrix::zeros(n, n);
    for alpha in 0..n {
        let d = chart_direction(alg, x, alpha)?;
        let plus = from_chart(&(&c + &d * cfg.h), k, m);
        let minus = from_chart(&(&c - &d * cfg.h), k, m);
        for beta in 0..n {
            let up = directional_derivative(alg, phi, &plus, beta, cfg)?;
            let down = directional_derivative(alg, phi, &minus, beta, cfg)?;
            let second = (up - down) / (2.0 * cfg.h);
            let nabla = connection_coeffs(alg, alpha, beta)?;
            raw[(alpha, beta)] = second - nabla.dot(&grad);
        }
    }
    let asymmetry = linalg::max_asymmetry(&raw);
    let sym = (&raw + raw.transpose()) * 0.5;
    Ok(NumericHessian {
        hessian: HessianMatrix::new(sym, BasisTag::Standard),
        asymmetry,
    })
}

/// Finite-difference Hessian of the Busemann function.
pub fn numeric_hessian(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    cfg: &FdConfig,
) -> Result<NumericHessian> {
    theta.check_dims(alg)?;
    let b = |p: &GroupPoint| busemann_value(alg, p, theta).expect("dimensions checked");
    numeric_hessian_of(alg, &b, x, cfg)
}

/// Errors of the numeric gradient against `exact` at steps `h` and `h/2`,
/// and their ratio. Close to 4 for a second-order scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRatio {
    pub error_h: f64,
    pub error_half: f64,
    pub ratio: f64,
}

pub fn gradient_step_ratio(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    exact: &FrameVector,
    cfg: &FdConfig,
) -> Result<StepRatio> {
    let coarse = numeric_gradient(alg, x, theta, cfg)?;
    let fine = numeric_gradient(alg, x, theta, &cfg.with_h(cfg.h / 2.0))?;
    let error_h = (coarse - exact).amax();
    let error_half = (fine - exact).amax();
    Ok(StepRatio {
        error_h,
        error_half,
        ratio: error_h / error_half,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub max_abs_diff: f64,
    pub spectrum_diff: f64,
    pub pass: bool,
}

pub fn compare(closed: &HessianMatrix, numeric: &HessianMatrix, cfg: &FdConfig) -> Result<Comparison> {
    let (a, b) = (&closed.entries, &numeric.entries);
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(a.shape(), b.shape()));
    }
    let max_abs_diff = linalg::max_abs(&(a - b));
    let sa = linalg::spectrum(a)?;
    let sb = linalg::spectrum(b)?;
    let spectrum_diff = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(Comparison {
        max_abs_diff,
        spectrum_diff,
        pass: max_abs_diff < cfg.tol_hess,
    })
}
