//! Busemann functions of a Damek-Ricci space in closed form.
//!
//! For a finite boundary point `theta = (v, y)` and `x = (V, Y, a)`:
//!
//! ```text
//! calV = v - V
//! calY = y - Y - 1/2 [V, v]
//! f    = a + |calV|^2 / 4
//! F    = f^2 + |calY|^2
//! b(x) = log F - log a + C(theta),   C(theta) = -log((1 + |v|^2/4)^2 + |y|^2)
//! ```
//!
//! and `b(x) = -log a` for `theta = infinity`.

use serde::{Deserialize, Serialize};

use crate::algebra::{GeneralizedHeisenbergAlgebra, VVector, ZVector};
use crate::error::{Error, Result};
use crate::group::{FrameVector, GroupPoint};

/// Relative threshold below which `calV` or `calY` counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// A point of the ideal boundary `n + {infinity}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BoundaryPoint {
    Finite {
        #[serde(with = "crate::serde_vec")]
        v: VVector,
        #[serde(with = "crate::serde_vec")]
        y: ZVector,
    },
    Infinity,
}

impl BoundaryPoint {
    pub fn finite(v: VVector, y: ZVector) -> Self {
        BoundaryPoint::Finite { v, y }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, BoundaryPoint::Infinity)
    }

    pub fn check_dims(&self, alg: &GeneralizedHeisenbergAlgebra) -> Result<()> {
        match self {
            BoundaryPoint::Finite { v, y } => {
                alg.check_v(v)?;
                alg.check_z(y)
            }
            BoundaryPoint::Infinity => Ok(()),
        }
    }
}

/// The auxiliary quantities `(calV, calY, f, F)` at a pair `(x, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BusemannState {
    pub cal_v: VVector,
    pub cal_y: ZVector,
    pub f: f64,
    pub big_f: f64,
}

impl BusemannState {
    /// Max residual of `F - f^2 = |calY|^2` and `4 (f - a) = |calV|^2`.
    pub fn invariant_residual(&self, a: f64) -> f64 {
        let r1 = (self.big_f - self.f * self.f - self.cal_y.norm_squared()).abs();
        let r2 = (4.0 * (self.f - a) - self.cal_v.norm_squared()).abs();
        r1.max(r2)
    }
}

pub fn vy_state(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<BusemannState> {
    x.check_dims(alg)?;
    theta.check_dims(alg)?;
    let (v, y) = match theta {
        BoundaryPoint::Finite { v, y } => (v, y),
        BoundaryPoint::Infinity => return Err(Error::StateUndefinedAtInfinity),
    };
    let cal_v = v - &x.v;
    let cal_y = y - &x.y - alg.bracket_unchecked(&x.v, v) * 0.5;
    let f = x.a + 0.25 * cal_v.norm_squared();
    let big_f = f * f + cal_y.norm_squared();
    Ok(BusemannState { cal_v, cal_y, f, big_f })
}

/// `C(theta)`; zero at infinity.
pub fn normalization_constant(theta: &BoundaryPoint) -> f64 {
    match theta {
        BoundaryPoint::Finite { v, y } => {
            let d = 1.0 + 0.25 * v.norm_squared();
            -(d * d + y.norm_squared()).ln()
        }
        BoundaryPoint::Infinity => 0.0,
    }
}

/// The Busemann function as a single log of a quotient.
pub fn busemann_value(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<f64> {
    match theta {
        BoundaryPoint::Infinity => {
            x.check_dims(alg)?;
            Ok(-x.a.ln())
        }
        BoundaryPoint::Finite { v, y } => {
            let s = vy_state(alg, x, theta)?;
            let d = 1.0 + 0.25 * v.norm_squared();
            Ok((s.big_f / (x.a * (d * d + y.norm_squared()))).ln())
        }
    }
}

/// The same function written as `log F - log a + C(theta)`.
pub fn busemann_value_log_form(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
) -> Result<f64> {
    match theta {
        BoundaryPoint::Infinity => busemann_value(alg, x, theta),
        BoundaryPoint::Finite { .. } => {
            let s = vy_state(alg, x, theta)?;
            Ok(s.big_f.ln() - x.a.ln() + normalization_constant(theta))
        }
    }
}

/// Frame derivatives `(E_alpha f, E_alpha F)` for finite `theta`.
pub fn frame_derivatives(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
) -> Result<(FrameVector, FrameVector)> {
    let s = vy_state(alg, x, theta)?;
    Ok(frame_derivatives_from_state(alg, x.a, &s))
}

pub(crate) fn frame_derivatives_from_state(
    alg: &GeneralizedHeisenbergAlgebra,
    a: f64,
    s: &BusemannState,
) -> (FrameVector, FrameVector) {
    let (k, m) = (alg.k(), alg.m());
    let n = k + m + 1;
    let sa = a.sqrt();
    let jyv = alg.j_unchecked(&s.cal_y, &s.cal_v);
    let w = &s.cal_v * s.f - jyv;
    let mut df = FrameVector::zeros(n);
    let mut d_big_f = FrameVector::zeros(n);
    df[0] = a;
    d_big_f[0] = 2.0 * a * s.f;
    for i in 0..k {
        df[1 + i] = -0.5 * sa * s.cal_v[i];
        d_big_f[1 + i] = -sa * w[i];
    }
    for r in 0..m {
        d_big_f[1 + k + r] = -2.0 * a * s.cal_y[r];
    }
    (df, d_big_f)
}

/// `grad b` in frame components.
pub fn gradient(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<FrameVector> {
    if theta.is_infinity() {
        x.check_dims(alg)?;
        let mut g = FrameVector::zeros(alg.dim_s());
        g[0] = -1.0;
        return Ok(g);
    }
    let s = vy_state(alg, x, theta)?;
    let (_, d_big_f) = frame_derivatives_from_state(alg, x.a, &s);
    let mut g = d_big_f / s.big_f;
    g[0] -= 1.0;
    Ok(g)
}

/// Which closed form applies at `(x, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HessianCase {
    #[serde(rename = "inf")]
    Infinity,
    /// `calV = calY = 0`
    #[serde(rename = "VY0")]
    BothZero,
    /// `calV = 0`, `calY != 0`
    #[serde(rename = "V0")]
    VZero,
    /// `calV != 0`, `calY = 0`
    #[serde(rename = "Y0")]
    YZero,
    #[serde(rename = "general")]
    General,
}

impl HessianCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            HessianCase::Infinity => "inf",
            HessianCase::BothZero => "VY0",
            HessianCase::VZero => "V0",
            HessianCase::YZero => "Y0",
            HessianCase::General => "general",
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !matches!(self, HessianCase::General)
    }
}

impl std::fmt::Display for HessianCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Degeneracy flags `(calV ~ 0, calY ~ 0)` under the relative thresholds.
pub fn degeneracy(x: &GroupPoint, theta: &BoundaryPoint, s: &BusemannState) -> (bool, bool) {
    let (v, y) = match theta {
        BoundaryPoint::Finite { v, y } => (v, y),
        BoundaryPoint::Infinity => return (false, false),
    };
    let v_zero = s.cal_v.norm() < DEGENERACY_TOL * (1.0 + v.norm() + x.v.norm());
    let y_zero = s.cal_y.norm() < DEGENERACY_TOL * (1.0 + y.norm() + x.y.norm());
    (v_zero, y_zero)
}

pub fn classify(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<HessianCase> {
    if theta.is_infinity() {
        return Ok(HessianCase::Infinity);
    }
    let s = vy_state(alg, x, theta)?;
    Ok(match degeneracy(x, theta, &s) {
        (true, true) => HessianCase::BothZero,
        (true, false) => HessianCase::VZero,
        (false, true) => HessianCase::YZero,
        (false, false) => HessianCase::General,
    })
}
