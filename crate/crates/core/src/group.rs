//! The solvable group `S = v x z x R+`, its Lie algebra `s = n + RA`, the
//! left-invariant orthonormal frame and the Levi-Civita connection in that
//! frame.
//!
//! Frame indices run `0 ..= k + m`: index `0` is `E_0 = a d/da`, indices
//! `1 ..= k` are the `v` directions and `k+1 ..= k+m` the `z` directions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{GeneralizedHeisenbergAlgebra, VVector, ZVector};
use crate::error::{Error, Result};

/// Components of a tangent vector in the frame `{E_0, E_i, E_{k+r}}`.
pub type FrameVector = DVector<f64>;

/// A point `(V, Y, a)` of `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    #[serde(rename = "V", with = "crate::serde_vec")]
    pub v: VVector,
    #[serde(rename = "Y", with = "crate::serde_vec")]
    pub y: ZVector,
    pub a: f64,
}

impl GroupPoint {
    pub fn new(v: VVector, y: ZVector, a: f64) -> Result<Self> {
        let p = Self { v, y, a };
        p.validate()?;
        Ok(p)
    }

    pub fn identity(alg: &GeneralizedHeisenbergAlgebra) -> Self {
        Self {
            v: VVector::zeros(alg.k()),
            y: ZVector::zeros(alg.m()),
            a: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::InvalidPoint(format!("a = {} must be positive", self.a)));
        }
        if self.v.iter().chain(self.y.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn check_dims(&self, alg: &GeneralizedHeisenbergAlgebra) -> Result<()> {
        alg.check_v(&self.v)?;
        alg.check_z(&self.y)
    }

    /// Max-abs coordinate difference.
    pub fn distance_max(&self, other: &Self) -> f64 {
        let dv = (&self.v - &other.v).amax();
        let dy = if self.y.is_empty() { 0.0 } else { (&self.y - &other.y).amax() };
        dv.max(dy).max((self.a - other.a).abs())
    }
}

/// `V + Y + t A` in `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    pub v: VVector,
    pub y: ZVector,
    pub t: f64,
}

impl AlgebraElement {
    pub fn zero(alg: &GeneralizedHeisenbergAlgebra) -> Self {
        Self {
            v: VVector::zeros(alg.k()),
            y: ZVector::zeros(alg.m()),
            t: 0.0,
        }
    }

    /// The element whose frame-vector coordinates are the basis vector `alpha`.
    pub fn basis(alg: &GeneralizedHeisenbergAlgebra, alpha: usize) -> Self {
        let mut e = Self::zero(alg);
        let k = alg.k();
        match alpha {
            0 => e.t = 1.0,
            i if i <= k => e.v[i - 1] = 1.0,
            r => e.y[r - k - 1] = 1.0,
        }
        e
    }

    /// Coordinates `(t, v, y)` in the frame ordering.
    pub fn to_frame(&self) -> FrameVector {
        let mut out = FrameVector::zeros(1 + self.v.len() + self.y.len());
        out[0] = self.t;
        out.rows_mut(1, self.v.len()).copy_from(&self.v);
        out.rows_mut(1 + self.v.len(), self.y.len()).copy_from(&self.y);
        out
    }
}

/// Group law `(V, Y, a)(V', Y', a') = (V + sqrt(a) V', Y + a Y' + sqrt(a)/2 [V, V'], a a')`.
pub fn multiply(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
    x.check_dims(alg)?;
    y.check_dims(alg)?;
    let sa = x.a.sqrt();
    let br = alg.bracket_unchecked(&x.v, &y.v);
    Ok(GroupPoint {
        v: &x.v + &y.v * sa,
        y: &x.y + &y.y * x.a + br * (sa / 2.0),
        a: x.a * y.a,
    })
}

pub fn inverse(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint) -> Result<GroupPoint> {
    x.check_dims(alg)?;
    Ok(GroupPoint {
        v: &x.v * (-1.0 / x.a.sqrt()),
        y: &x.y * (-1.0 / x.a),
        a: 1.0 / x.a,
    })
}

/// Bracket on `s`: `[V+Y+tA, V'+Y'+t'A] = t/2 V' - t'/2 V + t Y' - t' Y + [V, V']`.
pub fn lie_bracket_s(
    alg: &GeneralizedHeisenbergAlgebra,
    xi: &AlgebraElement,
    eta: &AlgebraElement,
) -> Result<AlgebraElement> {
    for e in [xi, eta] {
        alg.check_v(&e.v)?;
        alg.check_z(&e.y)?;
    }
    Ok(AlgebraElement {
        v: &eta.v * (xi.t / 2.0) - &xi.v * (eta.t / 2.0),
        y: &eta.y * xi.t - &xi.y * eta.t + alg.bracket_unchecked(&xi.v, &eta.v),
        t: 0.0,
    })
}

/// Coordinate expressions of the frame at `x`.
///
/// Row `alpha` holds the coefficients of `E_alpha` on
/// `(d/dV^1 .. d/dV^k, d/dY^1 .. d/dY^m, d/da)`.
pub fn frame_at(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint) -> Result<DMatrix<f64>> {
    x.check_dims(alg)?;
    let (k, m) = (alg.k(), alg.m());
    let n = k + m + 1;
    let sa = x.a.sqrt();
    let mut out = DMatrix::zeros(n, n);
    out[(0, n - 1)] = x.a;
    for i in 0..k {
        out[(1 + i, i)] = sa;
        for r in 0..m {
            let mut s = 0.0;
            for j in 0..k {
                s += alg.structure_constant(i, j, r) * x.v[j];
            }
            out[(1 + i, k + r)] = -0.5 * sa * s;
        }
    }
    for r in 0..m {
        out[(1 + k + r, k + r)] = x.a;
    }
    Ok(out)
}

/// `nabla_{E_alpha} E_beta` expanded in the frame.
pub fn connection_coeffs(alg: &GeneralizedHeisenbergAlgebra, alpha: usize, beta: usize) -> Result<FrameVector> {
    let (k, m) = (alg.k(), alg.m());
    let n = k + m + 1;
    for idx in [alpha, beta] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, dim: n });
        }
    }
    let mut out = FrameVector::zeros(n);
    let is_v = |a: usize| (1..=k).contains(&a);
    let is_z = |a: usize| a > k;
    match (alpha, beta) {
        (0, _) => {}
        (i, j) if is_v(i) && is_v(j) => {
            for r in 0..m {
                out[1 + k + r] = 0.5 * alg.structure_constant(i - 1, j - 1, r);
            }
            if i == j {
                out[0] = 0.5;
            }
        }
        (i, z) | (z, i) if is_v(i) && is_z(z) => {
            let r = z - k - 1;
            for j in 0..k {
                out[1 + j] = -0.5 * alg.structure_constant(i - 1, j, r);
            }
        }
        (i, 0) if is_v(i) => out[i] = -0.5,
        (z, w) if is_z(z) && is_z(w) => {
            if z == w {
                out[0] = 1.0;
            }
        }
        (z, 0) => {
            debug_assert!(is_z(z));
            out[z] = -1.0;
        }
        _ => unreachable!(),
    }
    Ok(out)
}

/// Max residual of `<nabla_a E_b, E_c> + <E_b, nabla_a E_c> = 0` over all
/// index triples.
pub fn metric_compatibility_residual(alg: &GeneralizedHeisenbergAlgebra) -> f64 {
    let n = alg.dim_s();
    let table = connection_table(alg);
    let mut worst = 0.0_f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let r = table[a * n + b][c] + table[a * n + c][b];
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}

/// Max residual of `nabla_a E_b - nabla_b E_a - [e_a, e_b]` over all pairs.
pub fn torsion_residual(alg: &GeneralizedHeisenbergAlgebra) -> f64 {
    let n = alg.dim_s();
    let table = connection_table(alg);
    let mut worst = 0.0_f64;
    for a in 0..n {
        for b in 0..n {
            let br = lie_bracket_s(alg, &AlgebraElement::basis(alg, a), &AlgebraElement::basis(alg, b))
                .expect("basis elements match the algebra")
                .to_frame();
            let t = &table[a * n + b] - &table[b * n + a] - br;
            worst = worst.max(t.amax());
        }
    }
    worst
}

fn connection_table(alg: &GeneralizedHeisenbergAlgebra) -> Vec<FrameVector> {
    let n = alg.dim_s();
    let mut table = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            table.push(connection_coeffs(alg, a, b).expect("indices in range"));
        }
    }
    table
}
