//! Closed-form Hessian of the Busemann function in the left-invariant frame,
//! and the block analysis showing it is positive definite on the orthogonal
//! complement of the gradient.
//!
//! In the general case (`calV != 0`, `calY != 0`) the Hessian is rewritten
//! in an adapted orthonormal basis and, after permuting rows and columns,
//! takes the block form
//!
//! ```text
//! | B1  0       0                0              |
//! | 0   1/2 I   0                B2             |
//! | 0   0       b1 I             b3 I - B3      |
//! | 0   B2^T    b3 I + B3        b2 I           |
//! ```
//!
//! where the last three block rows and columns form the matrix `calB`
//! whose determinant is positive. `B3` is the `(m-1) x (m-1)` skew block
//! defined by `(b_{k+r, (k-m)+l}) = b3 I + B3`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{GeneralizedHeisenbergAlgebra, VVector, ZVector, PIVOT_TOL};
use crate::busemann::{classify, degeneracy, gradient, vy_state, BoundaryPoint, BusemannState, HessianCase, DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::group::GroupPoint;
use crate::linalg::{self, complete_orthonormal};

pub use crate::linalg::spectrum;

/// Tolerance for the internal consistency checks of the block extraction.
pub const BLOCK_CHECK_TOL: f64 = 1e-9;

/// Eigenvalues closer than this belong to the same cluster.
pub const CLUSTER_GAP: f64 = 1e-6;

/// Relative distance from the degeneracy threshold inside which both the
/// general and the special-case formulas are evaluated.
const ANNULUS_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisTag {
    Standard,
    Adapted,
}

/// Hessian components `b_{alpha,beta}` in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianMatrix {
    pub entries: DMatrix<f64>,
    pub basis: BasisTag,
    /// Max entrywise gap between the general formula and the special-case
    /// formula, when both were evaluated near a degeneracy.
    pub continuity_gap: Option<f64>,
}

impl HessianMatrix {
    pub fn new(entries: DMatrix<f64>, basis: BasisTag) -> Self {
        Self {
            entries,
            basis,
            continuity_gap: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn spectrum(&self) -> Result<Vec<f64>> {
        linalg::spectrum(&self.entries)
    }

    pub fn asymmetry(&self) -> f64 {
        linalg::max_asymmetry(&self.entries)
    }
}

/// `diag(0, 1/2 I_k, I_m)`.
pub fn horospherical_hessian(k: usize, m: usize) -> DMatrix<f64> {
    let n = k + m + 1;
    let mut h = DMatrix::zeros(n, n);
    for i in 1..=k {
        h[(i, i)] = 0.5;
    }
    for r in (k + 1)..n {
        h[(r, r)] = 1.0;
    }
    h
}

/// The multiset `{0 x 1, 1/2 x k, 1 x m}`.
pub fn degenerate_spectrum(k: usize, m: usize) -> [(f64, usize); 3] {
    [(0.0, 1), (0.5, k), (1.0, m)]
}

/// `J_r calV` for each generator, reused by several entry families.
fn j_columns(alg: &GeneralizedHeisenbergAlgebra, cal_v: &VVector) -> Vec<VVector> {
    (0..alg.m()).map(|r| alg.j_basis(r, cal_v)).collect()
}

/// Hessian entries for finite `theta` in the standard frame, valid at every
/// point (including the degenerate ones).
pub fn general_entries(alg: &GeneralizedHeisenbergAlgebra, a: f64, s: &BusemannState) -> DMatrix<f64> {
    let (k, m) = (alg.k(), alg.m());
    let n = k + m + 1;
    let (f, big_f) = (s.f, s.big_f);
    let f2 = big_f * big_f;
    let sa = a.sqrt();
    let cv = &s.cal_v;
    let cy = &s.cal_y;
    let jyv = alg.j_unchecked(cy, cv);
    let w = cv * f - &jyv;
    let u = cv * (f - 2.0 * a) - &jyv;
    let jv = j_columns(alg, cv);

    let mut h = DMatrix::zeros(n, n);
    h[(0, 0)] = 2.0 * a / f2 * (f * big_f + a * big_f - 2.0 * a * f * f);
    let c_v = f * big_f + 2.0 * a * big_f - 4.0 * a * f * f;
    let c_j = 4.0 * a * f - big_f;
    for i in 0..k {
        h[(0, 1 + i)] = -sa / (2.0 * f2) * (c_v * cv[i] + c_j * jyv[i]);
    }
    for r in 0..m {
        h[(0, 1 + k + r)] = 2.0 * a / f2 * (2.0 * a * f - big_f) * cy[r];
    }
    for i in 0..k {
        for j in i..k {
            // <[e_i, calV], [e_j, calV]> = sum_r (J_r calV)_i (J_r calV)_j
            let brackets: f64 = jv.iter().map(|x| x[i] * x[j]).sum();
            let mut b = a / (2.0 * big_f) * (cv[i] * cv[j] + brackets) - a / f2 * w[i] * w[j];
            if i == j {
                b += 0.5;
            }
            h[(1 + i, 1 + j)] = b;
        }
    }
    for r in 0..m {
        // <[e_i, u], e_{k+r}> = <J_r e_i, u> = -(J_r u)_i
        let jru = alg.j_basis(r, &u);
        for i in 0..k {
            h[(1 + i, 1 + k + r)] = -2.0 * a * sa / f2 * w[i] * cy[r] + sa / (2.0 * big_f) * jru[i];
        }
    }
    let diag_z = (big_f - 2.0 * a * f + 2.0 * a * a) / big_f;
    for r in 0..m {
        for l in r..m {
            let mut b = -4.0 * a * a / f2 * cy[r] * cy[l];
            if r == l {
                b += diag_z;
            }
            h[(1 + k + r, 1 + k + l)] = b;
        }
    }
    fill_lower(&mut h);
    h
}

fn fill_lower(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    for p in 0..n {
        for q in 0..p {
            h[(p, q)] = h[(q, p)];
        }
    }
}

/// Entries for the three degenerate configurations with finite `theta`.
fn special_entries(alg: &GeneralizedHeisenbergAlgebra, a: f64, s: &BusemannState, case: HessianCase) -> DMatrix<f64> {
    let (k, m) = (alg.k(), alg.m());
    match case {
        HessianCase::Infinity | HessianCase::BothZero => horospherical_hessian(k, m),
        HessianCase::VZero => {
            // f = a, F = a^2 + |calY|^2
            let cy = &s.cal_y;
            let big_f = a * a + cy.norm_squared();
            let f2 = big_f * big_f;
            let mut h = horospherical_hessian(k, m);
            h[(0, 0)] = 4.0 * a * a / f2 * (big_f - a * a);
            for r in 0..m {
                h[(0, 1 + k + r)] = 2.0 * a / f2 * (2.0 * a * a - big_f) * cy[r];
                for l in 0..m {
                    h[(1 + k + r, 1 + k + l)] -= 4.0 * a * a / f2 * cy[r] * cy[l];
                }
            }
            fill_lower(&mut h);
            h
        }
        HessianCase::YZero => {
            // F = f^2
            let cv = &s.cal_v;
            let f = a + 0.25 * cv.norm_squared();
            let f2 = f * f;
            let sa = a.sqrt();
            let jv = j_columns(alg, cv);
            let mut h = DMatrix::zeros(k + m + 1, k + m + 1);
            h[(0, 0)] = 2.0 * a * (f - a) / f2;
            for i in 0..k {
                h[(0, 1 + i)] = -sa * (f - 2.0 * a) / (2.0 * f2) * cv[i];
                for j in i..k {
                    let brackets: f64 = jv.iter().map(|x| x[i] * x[j]).sum();
                    let mut b = a / (2.0 * f2) * (-cv[i] * cv[j] + brackets);
                    if i == j {
                        b += 0.5;
                    }
                    h[(1 + i, 1 + j)] = b;
                }
                for (r, jrv) in jv.iter().enumerate() {
                    h[(1 + i, 1 + k + r)] = sa * (f - 2.0 * a) / (2.0 * f2) * jrv[i];
                }
            }
            let diag_z = (f2 - 2.0 * a * f + 2.0 * a * a) / f2;
            for r in 0..m {
                h[(1 + k + r, 1 + k + r)] = diag_z;
            }
            fill_lower(&mut h);
            h
        }
        HessianCase::General => general_entries(alg, a, s),
    }
}

/// Closed-form Hessian in the standard frame, dispatched on the degeneracy
/// of `(calV, calY)`.
pub fn hessian_closed_form(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<HessianMatrix> {
    x.check_dims(alg)?;
    theta.check_dims(alg)?;
    if theta.is_infinity() {
        return Ok(HessianMatrix::new(horospherical_hessian(alg.k(), alg.m()), BasisTag::Standard));
    }
    let s = vy_state(alg, x, theta)?;
    let case = classify(alg, x, theta)?;
    let entries = special_entries(alg, x.a, &s, case);
    let mut out = HessianMatrix::new(entries, BasisTag::Standard);
    out.continuity_gap = continuity_gap(alg, x, theta, &s, case, &out.entries);
    Ok(out)
}

fn continuity_gap(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    s: &BusemannState,
    case: HessianCase,
    used: &DMatrix<f64>,
) -> Option<f64> {
    let BoundaryPoint::Finite { v, y } = theta else {
        return None;
    };
    if case.is_degenerate() {
        return Some(linalg::max_abs(&(used - general_entries(alg, x.a, s))));
    }
    let v_scale = DEGENERACY_TOL * ANNULUS_FACTOR * (1.0 + v.norm() + x.v.norm());
    let y_scale = DEGENERACY_TOL * ANNULUS_FACTOR * (1.0 + y.norm() + x.y.norm());
    let near = match (s.cal_v.norm() < v_scale, s.cal_y.norm() < y_scale) {
        (true, true) => HessianCase::BothZero,
        (true, false) => HessianCase::VZero,
        (false, true) => HessianCase::YZero,
        (false, false) => return None,
    };
    Some(linalg::max_abs(&(used - special_entries(alg, x.a, s, near))))
}

/// Closed form for a named degenerate case; fails if the point is not in it.
pub fn special_case_hessian(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    case: HessianCase,
) -> Result<HessianMatrix> {
    let actual = classify(alg, x, theta)?;
    if actual != case || !case.is_degenerate() || case == HessianCase::Infinity {
        return Err(Error::CaseMismatch {
            requested: case.as_str(),
            actual: actual.as_str(),
        });
    }
    let s = vy_state(alg, x, theta)?;
    Ok(HessianMatrix::new(special_entries(alg, x.a, &s, case), BasisTag::Standard))
}

/// Orthonormal bases of `v` and `z` adapted to `(calV, calY)`.
///
/// `v_basis` is ordered `calV/|calV|`, then the rest of `ker(ad calV)`, then
/// `J_{z_r} e_1` for each `z_basis` vector `z_r`. `z_basis` starts with
/// `calY/|calY|`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedBasis {
    pub v_basis: Vec<VVector>,
    pub z_basis: Vec<ZVector>,
}

impl AdaptedBasis {
    /// Orthogonal change of frame `Q` with `H_adapted = Q^T H Q`.
    pub fn frame_change(&self) -> DMatrix<f64> {
        let k = self.v_basis.len();
        let m = self.z_basis.len();
        let n = k + m + 1;
        let mut q = DMatrix::zeros(n, n);
        q[(0, 0)] = 1.0;
        for (c, e) in self.v_basis.iter().enumerate() {
            for i in 0..k {
                q[(1 + i, 1 + c)] = e[i];
            }
        }
        for (c, e) in self.z_basis.iter().enumerate() {
            for r in 0..m {
                q[(1 + k + r, 1 + k + c)] = e[r];
            }
        }
        q
    }

    pub fn transform(&self, h: &HessianMatrix) -> HessianMatrix {
        let q = self.frame_change();
        HessianMatrix {
            entries: q.transpose() * &h.entries * q,
            basis: BasisTag::Adapted,
            continuity_gap: h.continuity_gap,
        }
    }
}

fn standard_basis(n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect()
}

fn build_adapted(alg: &GeneralizedHeisenbergAlgebra, s: &BusemannState, adapt_v: bool, adapt_y: bool) -> AdaptedBasis {
    let (k, m) = (alg.k(), alg.m());
    let z_basis = if adapt_y {
        let first = &s.cal_y / s.cal_y.norm();
        complete_orthonormal(&[first], m, PIVOT_TOL)
    } else {
        standard_basis(m)
    };
    let v_basis = if adapt_v {
        let e1 = &s.cal_v / s.cal_v.norm();
        let j_part: Vec<VVector> = z_basis.iter().map(|z| alg.j_unchecked(z, &e1)).collect();
        let mut seed = vec![e1];
        seed.extend(j_part.iter().cloned());
        let full = complete_orthonormal(&seed, k, PIVOT_TOL);
        let mut out = vec![full[0].clone()];
        out.extend(full[1 + m..].iter().cloned());
        out.extend(j_part);
        out
    } else {
        standard_basis(k)
    };
    AdaptedBasis { v_basis, z_basis }
}

/// Adapted bases in the general case.
pub fn adapted_basis(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<AdaptedBasis> {
    let s = vy_state(alg, x, theta)?;
    match degeneracy(x, theta, &s) {
        (true, true) => Err(Error::Degenerate("calV and calY")),
        (true, false) => Err(Error::Degenerate("calV")),
        (false, true) => Err(Error::Degenerate("calY")),
        (false, false) => Ok(build_adapted(alg, &s, true, true)),
    }
}

/// Blocks of the general-case Hessian after the adapted change of frame and
/// the row/column permutation.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    /// 4x4 block on `(E_0, E_1, E_{k-m+1}, E_{k+1})`.
    pub block1: DMatrix<f64>,
    /// `(k-m-1) x (m-1)` coupling of the kernel part with `z`.
    pub block2: DMatrix<f64>,
    /// `(m-1) x (m-1)` skew block.
    pub block3: DMatrix<f64>,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    /// Trailing `(k+m-3)`-dimensional block.
    pub cal_b: DMatrix<f64>,
    /// Adapted Hessian after the permutation.
    pub permuted: DMatrix<f64>,
    pub permutation: Vec<usize>,
    pub basis: AdaptedBasis,
    pub adapted: HessianMatrix,
    pub a: f64,
    pub f: f64,
    pub big_f: f64,
    pub cal_v_norm: f64,
    pub cal_y_norm: f64,
}

/// Frame indices in block order: `B1` indices, kernel part, `J`-part for
/// `r >= 2`, `z` for `r >= 2`.
pub fn block_permutation(k: usize, m: usize) -> Vec<usize> {
    let mut p = vec![0, 1, k - m + 1, k + 1];
    p.extend(2..=k - m);
    p.extend(k - m + 2..=k);
    p.extend(k + 2..=k + m);
    p
}

fn permute(h: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(perm.len(), perm.len(), |i, j| h[(perm[i], perm[j])])
}

fn check(what: &str, residual: f64) -> Result<()> {
    if residual.is_finite() && residual <= BLOCK_CHECK_TOL {
        Ok(())
    } else {
        Err(Error::BlockExtractionMismatch {
            what: what.to_string(),
            residual,
        })
    }
}

/// The scalars `(b1, b2, b3, b4)` from `(a, f, F)`.
pub fn block_scalars(a: f64, f: f64, big_f: f64) -> (f64, f64, f64, f64) {
    let t = 2.0 * a * (f - a) / big_f;
    let b1 = 0.5 + t;
    let b2 = 1.0 - t;
    let b3 = (f - 2.0 * a) * (a * (f - a)).sqrt() / big_f;
    let b4 = -a * (f - a) * (big_f - f * f) / (big_f * big_f);
    (b1, b2, b3, b4)
}

/// Closed-form entries of `B1` in the order `(0, 1, k-m+1, k+1)`.
pub fn block1_closed(a: f64, f: f64, big_f: f64) -> DMatrix<f64> {
    let f2 = big_f * big_f;
    let y_norm = (big_f - f * f).sqrt();
    let afa = (a * (f - a)).sqrt();
    let b00 = 2.0 * a / f2 * (f * big_f + a * big_f - 2.0 * a * f * f);
    let b10 = -(f * big_f + 2.0 * a * big_f - 4.0 * a * f * f) * afa / f2;
    let bj0 = -(4.0 * a * f - big_f) * afa * y_norm / f2;
    let bz0 = 2.0 * a / f2 * (2.0 * a * f - big_f) * y_norm;
    let b11 = -2.0 * a / f2 * (f - a) * (2.0 * f * f - big_f) + 0.5;
    let bj1 = 4.0 * a * f / f2 * (f - a) * y_norm;
    let bjj = 0.5 + 2.0 * a / f2 * (f - a) * (2.0 * f * f - big_f);
    let bzz = 1.0 - b00;
    let bz1 = bj0;
    let bzj = -b10;
    DMatrix::from_row_slice(
        4,
        4,
        &[
            b00, b10, bj0, bz0, //
            b10, b11, bj1, bz1, //
            bj0, bj1, bjj, bzj, //
            bz0, bz1, bzj, bzz,
        ],
    )
}

pub fn block_decomposition(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<BlockDecomposition> {
    let (k, m) = (alg.k(), alg.m());
    if k < m + 1 {
        return Err(Error::InsufficientRank { k, m });
    }
    let basis = adapted_basis(alg, x, theta)?;
    let s = vy_state(alg, x, theta)?;
    let (a, f, big_f) = (x.a, s.f, s.big_f);
    let standard = HessianMatrix::new(general_entries(alg, a, &s), BasisTag::Standard);
    let adapted = basis.transform(&standard);
    let perm = block_permutation(k, m);
    let p = permute(&adapted.entries, &perm);

    let nk = k - m - 1;
    let nm = m - 1;
    let (ker, jp, zp) = (4, 4 + nk, 4 + nk + nm);

    let block1 = p.view((0, 0), (4, 4)).into_owned();
    let block2 = p.view((ker, zp), (nk, nm)).into_owned();
    let zj = p.view((zp, jp), (nm, nm)).into_owned();
    let (b1, b2, b3, b4) = block_scalars(a, f, big_f);
    let block3 = &zj - DMatrix::identity(nm, nm) * b3;
    let cal_b = p.view((4, 4), (nk + 2 * nm, nk + 2 * nm)).into_owned();

    check("B1 closed form", linalg::max_abs(&(&block1 - block1_closed(a, f, big_f))))?;
    check("B1 decoupled", linalg::max_abs(&p.view((0, 4), (4, nk + 2 * nm)).into_owned()))?;
    check(
        "kernel block",
        linalg::max_abs(&(p.view((ker, ker), (nk, nk)) - DMatrix::identity(nk, nk) * 0.5)),
    )?;
    check("kernel/J coupling", linalg::max_abs(&p.view((ker, jp), (nk, nm)).into_owned()))?;
    check(
        "J block",
        linalg::max_abs(&(p.view((jp, jp), (nm, nm)) - DMatrix::identity(nm, nm) * b1)),
    )?;
    check(
        "z block",
        linalg::max_abs(&(p.view((zp, zp), (nm, nm)) - DMatrix::identity(nm, nm) * b2)),
    )?;
    check("B3 skew", linalg::max_abs(&(&block3 + block3.transpose())))?;

    let jyv = alg.j_unchecked(&s.cal_y, &s.cal_v);
    let sa = a.sqrt();
    let v_norm = s.cal_v.norm();
    let closed2 = DMatrix::from_fn(nk, nm, |i, r| {
        // <[e_i, J_calY calV], z_r> = <J_{z_r} e_i, J_calY calV>
        let e_i = &basis.v_basis[1 + i];
        sa / (2.0 * big_f) * alg.j_unchecked(&basis.z_basis[1 + r], e_i).dot(&jyv)
    });
    check("B2 closed form", linalg::max_abs(&(&block2 - closed2)))?;
    let closed3 = DMatrix::from_fn(nm, nm, |r, l| {
        let jl_v = alg.j_unchecked(&basis.z_basis[1 + l], &s.cal_v);
        let br = alg.bracket_unchecked(&jl_v, &jyv);
        (a / (f - a)).sqrt() / (4.0 * big_f) * br.dot(&basis.z_basis[1 + r])
    });
    check("B3 closed form", linalg::max_abs(&(&block3 - closed3)))?;

    Ok(BlockDecomposition {
        block1,
        block2,
        block3,
        b1,
        b2,
        b3,
        b4,
        cal_b,
        permuted: p,
        permutation: perm,
        basis,
        adapted,
        a,
        f,
        big_f,
        cal_v_norm: v_norm,
        cal_y_norm: s.cal_y.norm(),
    })
}

/// Residuals of `B3^2 - B2^T B2 = b4 I` and `b1 b2 - b3^2 + b4 = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockIdentityReport {
    pub eq20: f64,
    pub eq21: f64,
    pub pass: bool,
}

pub fn block_identity_residuals(d: &BlockDecomposition, tol: f64) -> BlockIdentityReport {
    let nm = d.block3.nrows();
    let lhs = &d.block3 * &d.block3 - d.block2.transpose() * &d.block2 - DMatrix::identity(nm, nm) * d.b4;
    let eq20 = linalg::max_abs(&lhs);
    let eq21 = (d.b1 * d.b2 - d.b3 * d.b3 + d.b4 - 0.5).abs();
    BlockIdentityReport {
        eq20,
        eq21,
        pass: eq20 < tol && eq21 < tol,
    }
}

pub fn verify_block_identities(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    tol: f64,
) -> Result<BlockIdentityReport> {
    Ok(block_identity_residuals(&block_decomposition(alg, x, theta)?, tol))
}

/// Characteristic checks on `B1`: it should have spectrum `{0, 1/2, 1/2, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct B1Report {
    pub det: f64,
    pub det_minus_half: f64,
    pub det_minus_one: f64,
    pub trace: f64,
    pub spectrum: Vec<f64>,
    pub spectrum_deviation: f64,
    pub pass: bool,
}

pub const B1_TRACE_TOL: f64 = 1e-10;
pub const SPECTRUM_TOL: f64 = 1e-8;

pub fn b1_report(block1: &DMatrix<f64>, tol: f64) -> Result<B1Report> {
    let spectrum = linalg::spectrum(block1)?;
    let shifted = |c: f64| spectrum.iter().map(|l| l - c).product::<f64>();
    let det = shifted(0.0);
    let det_minus_half = shifted(0.5);
    let det_minus_one = shifted(1.0);
    let trace = block1.trace();
    let spectrum_deviation = linalg::spectrum_deviation(&spectrum, &[(0.0, 1), (0.5, 2), (1.0, 1)]);
    let pass = det.abs() < tol
        && det_minus_half.abs() < tol
        && det_minus_one.abs() < tol
        && (trace - 2.0).abs() < B1_TRACE_TOL
        && spectrum_deviation < SPECTRUM_TOL;
    Ok(B1Report {
        det,
        det_minus_half,
        det_minus_one,
        trace,
        spectrum,
        spectrum_deviation,
        pass,
    })
}

pub fn b1_spectrum_check(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint, tol: f64) -> Result<B1Report> {
    b1_report(&block_decomposition(alg, x, theta)?.block1, tol)
}

/// Determinant of `calB` by the product formula and directly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetBReport {
    pub closed: f64,
    pub numeric: f64,
    pub relative_diff: f64,
    /// Eigenvalues of the Gram matrix `(<V_r, V_l>)`, `r, l >= 2`.
    pub mu: Vec<f64>,
    pub factors: Vec<f64>,
    /// `|calV|^2 |calY|^2`, the upper bound on each `mu`.
    pub mu_bound: f64,
    /// `1 - a^2 |calV|^4 |calY|^2 / (2 F^3)`, the lower bound on each factor.
    pub factor_bound: f64,
}

impl DetBReport {
    pub fn mu_in_range(&self, tol: f64) -> bool {
        self.mu.iter().all(|&mu| mu >= -tol && mu <= self.mu_bound + tol)
    }

    pub fn factors_positive(&self) -> bool {
        self.factor_bound > 0.0
            && self.factors.iter().all(|&c| c > 0.0 && c >= self.factor_bound - 1e-12)
    }
}

pub fn det_b_from_blocks(d: &BlockDecomposition, k: usize) -> Result<DetBReport> {
    let (a, f, big_f) = (d.a, d.f, d.big_f);
    let gram = d.block2.transpose() * &d.block2 * (4.0 * big_f * big_f / a);
    let mu = linalg::spectrum(&gram)?;
    let c = 2.0 * a * a * (f - a) / big_f.powi(3);
    let factors: Vec<f64> = mu.iter().map(|m| 1.0 - c * m).collect();
    let closed = 0.5f64.powi(k as i32 - 2) * factors.iter().product::<f64>();
    let numeric = linalg::symmetric_det(&d.cal_b)?;
    let v2 = d.cal_v_norm * d.cal_v_norm;
    let y2 = d.cal_y_norm * d.cal_y_norm;
    Ok(DetBReport {
        closed,
        numeric,
        relative_diff: (closed - numeric).abs() / closed.abs().max(numeric.abs()),
        mu,
        factors,
        mu_bound: v2 * y2,
        factor_bound: 1.0 - a * a * v2 * v2 * y2 / (2.0 * big_f.powi(3)),
    })
}

pub fn det_b_closed(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<DetBReport> {
    det_b_from_blocks(&block_decomposition(alg, x, theta)?, alg.k())
}

/// Gram matrix `(<V_r, V_l>)_{r,l >= 2}` computed directly from the
/// splitting `J_{z_r} J_calY calV = V_r + J_{Y_r} calV` with
/// `V_r in ker(ad calV)`; returns it with `(<Y_r, Y_l>)`.
pub fn kernel_gram_direct(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let basis = adapted_basis(alg, x, theta)?;
    let s = vy_state(alg, x, theta)?;
    let m = alg.m();
    let jyv = alg.j_unchecked(&s.cal_y, &s.cal_v);
    let v2 = s.cal_v.norm_squared();
    let j_cols: Vec<VVector> = (0..m).map(|h| alg.j_basis(h, &s.cal_v)).collect();
    let mut vr = Vec::with_capacity(m);
    let mut yr = Vec::with_capacity(m);
    for z in &basis.z_basis[1..] {
        let w = alg.j_unchecked(z, &jyv);
        let y_coeffs = ZVector::from_iterator(m, j_cols.iter().map(|c| c.dot(&w) / v2));
        let j_part = alg.j_unchecked(&y_coeffs, &s.cal_v);
        vr.push(&w - j_part);
        yr.push(y_coeffs);
    }
    Ok((linalg::gram(&vr), linalg::gram(&yr)))
}

/// Smallest eigenvalue of the Hessian restricted to the orthogonal
/// complement of the gradient, and `|H grad b|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestrictedPositivity {
    pub min_eigenvalue: f64,
    pub zero_residual: f64,
    pub gradient_norm: f64,
}

pub fn restricted_positivity_of(h: &HessianMatrix, grad: &DVector<f64>) -> Result<RestrictedPositivity> {
    let p = linalg::complement_basis(grad, PIVOT_TOL);
    let restricted = p.transpose() * &h.entries * &p;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let spec = linalg::spectrum(&restricted)?;
    Ok(RestrictedPositivity {
        min_eigenvalue: spec.first().copied().unwrap_or(f64::INFINITY),
        zero_residual: (&h.entries * grad).norm(),
        gradient_norm: grad.norm(),
    })
}

pub fn restricted_positivity(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
) -> Result<RestrictedPositivity> {
    let h = hessian_closed_form(alg, x, theta)?;
    let g = gradient(alg, x, theta)?;
    restricted_positivity_of(&h, &g)
}

/// Block forms in the degenerate cases `calV = 0` and `calY = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum DegenerateBlocks {
    /// `calV = 0`: 2x2 block on `(E_0, E_{k+1})` with `e_{k+1} = calY/|calY|`;
    /// the rest is `diag(1/2 I_k, I_{m-1})`.
    VZero { block: DMatrix<f64> },
    /// `calY = 0`: 2x2 block on `(E_0, E_1)` with `e_1 = calV/|calV|`, and a
    /// `2m x 2m` block on the `J z`-part of `v` and `z`; the rest is
    /// `1/2 I_{k-m-1}`.
    YZero { block2: DMatrix<f64>, block3: DMatrix<f64> },
}

pub fn degenerate_blocks(alg: &GeneralizedHeisenbergAlgebra, x: &GroupPoint, theta: &BoundaryPoint) -> Result<DegenerateBlocks> {
    let (k, m) = (alg.k(), alg.m());
    let case = classify(alg, x, theta)?;
    let s = vy_state(alg, x, theta)?;
    let a = x.a;
    let h = HessianMatrix::new(special_entries(alg, a, &s, case), BasisTag::Standard);
    match case {
        HessianCase::VZero => {
            let basis = build_adapted(alg, &s, false, true);
            let p = basis.transform(&h).entries;
            let mut perm = vec![0, k + 1];
            perm.extend(1..=k);
            perm.extend(k + 2..=k + m);
            let p = permute(&p, &perm);
            let block = p.view((0, 0), (2, 2)).into_owned();
            let big_f = a * a + s.cal_y.norm_squared();
            let f2 = big_f * big_f;
            let off = 2.0 * a * (2.0 * a * a - big_f) * (big_f - a * a).sqrt() / f2;
            let q = 4.0 * a * a * (big_f - a * a) / f2;
            let closed = DMatrix::from_row_slice(2, 2, &[q, off, off, 1.0 - q]);
            check("calV = 0 block", linalg::max_abs(&(&block - closed)))?;
            let mut rest = DMatrix::zeros(k + m - 1, k + m - 1);
            for i in 0..k {
                rest[(i, i)] = 0.5;
            }
            for r in k..k + m - 1 {
                rest[(r, r)] = 1.0;
            }
            check("calV = 0 remainder", linalg::max_abs(&(p.view((2, 2), (k + m - 1, k + m - 1)) - rest)))?;
            check("calV = 0 decoupling", linalg::max_abs(&p.view((0, 2), (2, k + m - 1)).into_owned()))?;
            Ok(DegenerateBlocks::VZero { block })
        }
        HessianCase::YZero => {
            if k < m + 1 {
                return Err(Error::InsufficientRank { k, m });
            }
            let basis = build_adapted(alg, &s, true, false);
            let p = basis.transform(&h).entries;
            let mut perm = vec![0, 1];
            perm.extend(2..=k - m);
            perm.extend(k - m + 1..=k + m);
            let p = permute(&p, &perm);
            let nk = k - m - 1;
            let block2 = p.view((0, 0), (2, 2)).into_owned();
            let block3 = p.view((2 + nk, 2 + nk), (2 * m, 2 * m)).into_owned();
            let f = a + 0.25 * s.cal_v.norm_squared();
            let f2 = f * f;
            let afa = (a * (f - a)).sqrt();
            let closed2 = DMatrix::from_row_slice(
                2,
                2,
                &[
                    2.0 * a * (f - a) / f2,
                    -afa * (f - 2.0 * a) / f2,
                    -afa * (f - 2.0 * a) / f2,
                    0.5 * (f - 2.0 * a).powi(2) / f2,
                ],
            );
            check("calY = 0 block B2", linalg::max_abs(&(&block2 - closed2)))?;
            // with e_{(k-m)+r} = J_{e_{k+r}} e_1 the coupling is +sqrt(a(f-a))(f-2a)/f^2
            let mut closed3 = DMatrix::zeros(2 * m, 2 * m);
            for r in 0..m {
                closed3[(r, r)] = (2.0 * a * (f - a) + 0.5 * f2) / f2;
                closed3[(r, m + r)] = afa * (f - 2.0 * a) / f2;
                closed3[(m + r, r)] = afa * (f - 2.0 * a) / f2;
                closed3[(m + r, m + r)] = (f2 - 2.0 * a * f + 2.0 * a * a) / f2;
            }
            check("calY = 0 block B3", linalg::max_abs(&(&block3 - closed3)))?;
            let mut layout = DMatrix::zeros(k + m + 1, k + m + 1);
            layout.view_mut((0, 0), (2, 2)).copy_from(&block2);
            for i in 0..nk {
                layout[(2 + i, 2 + i)] = 0.5;
            }
            layout.view_mut((2 + nk, 2 + nk), (2 * m, 2 * m)).copy_from(&block3);
            check("calY = 0 layout", linalg::max_abs(&(p - layout)))?;
            Ok(DegenerateBlocks::YZero { block2, block3 })
        }
        other => Err(Error::CaseMismatch {
            requested: "V0 or Y0",
            actual: other.as_str(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{make_algebra, random_ball};
    use crate::oracle::{numeric_hessian, FdConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FAMILIES: [(usize, usize); 5] = [(1, 1), (1, 2), (2, 1), (3, 1), (7, 1)];

    fn random_pair<R: Rng>(rng: &mut R, alg: &GeneralizedHeisenbergAlgebra) -> (GroupPoint, BoundaryPoint) {
        let x = GroupPoint::new(
            DVector::from_fn(alg.k(), |_, _| rng.gen_range(-2.0..2.0)),
            DVector::from_fn(alg.m(), |_, _| rng.gen_range(-2.0..2.0)),
            rng.gen_range(0.2..5.0),
        )
        .unwrap();
        let theta = BoundaryPoint::finite(
            DVector::from_fn(alg.k(), |_, _| rng.gen_range(-2.0..2.0)),
            DVector::from_fn(alg.m(), |_, _| rng.gen_range(-2.0..2.0)),
        );
        (x, theta)
    }

    fn pt(v: &[f64], y: &[f64], a: f64) -> GroupPoint {
        GroupPoint::new(DVector::from_row_slice(v), DVector::from_row_slice(y), a).unwrap()
    }

    #[test]
    fn infinity_is_horospherical() {
        let alg = make_algebra(3, 1).unwrap();
        let h = hessian_closed_form(&alg, &pt(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 0.0], 0.3), &BoundaryPoint::Infinity).unwrap();
        assert_eq!(h.entries, horospherical_hessian(4, 3));
        let s = h.spectrum().unwrap();
        assert_eq!(linalg::spectrum_deviation(&s, &degenerate_spectrum(4, 3)), 0.0);
    }

    #[test]
    fn both_zero_case() {
        let alg = make_algebra(1, 1).unwrap();
        let x = pt(&[0.5, -1.0], &[0.25], 2.0);
        let theta = BoundaryPoint::finite(x.v.clone(), x.y.clone());
        let h = hessian_closed_form(&alg, &x, &theta).unwrap();
        assert_eq!(h.entries, horospherical_hessian(2, 1));
        assert!(h.continuity_gap.unwrap() < 1e-15);
        let h2 = special_case_hessian(&alg, &x, &theta, HessianCase::BothZero).unwrap();
        assert_eq!(h2.entries, h.entries);
    }

    #[test]
    fn special_case_substitutions() {
        let alg = make_algebra(1, 1).unwrap();
        // calV = 0, |calY| = 1, a = 1: F = 2 and b00 = 4 (2 - 1) / 4 = 1
        let x = pt(&[0.0, 0.0], &[0.0], 1.0);
        let theta = BoundaryPoint::finite(DVector::zeros(2), DVector::from_row_slice(&[1.0]));
        let h = special_case_hessian(&alg, &x, &theta, HessianCase::VZero).unwrap();
        assert_eq!(h.entries[(0, 0)], 1.0);
        // calY = 0, |calV| = 2, a = 1: f = 2, b00 = 2 (2 - 1) / 4 = 1/2, b01 = 0
        let theta = BoundaryPoint::finite(DVector::from_row_slice(&[2.0, 0.0]), DVector::zeros(1));
        let h = special_case_hessian(&alg, &x, &theta, HessianCase::YZero).unwrap();
        assert_eq!(h.entries[(0, 0)], 0.5);
        assert_eq!(h.entries[(0, 1)], 0.0);
        assert!(matches!(
            special_case_hessian(&alg, &x, &theta, HessianCase::VZero),
            Err(Error::CaseMismatch { .. })
        ));
    }

    #[test]
    fn closed_form_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let cfg = FdConfig::default();
        for (m, mult) in FAMILIES {
            let alg = make_algebra(m, mult).unwrap();
            for _ in 0..10 {
                let (x, theta) = random_pair(&mut rng, &alg);
                let closed = hessian_closed_form(&alg, &x, &theta).unwrap();
                let numeric = numeric_hessian(&alg, &x, &theta, &cfg).unwrap();
                let diff = linalg::max_abs(&(&closed.entries - &numeric.hessian.entries));
                assert!(diff < 1e-5, "({m},{mult}) diff {diff:e}");
            }
        }
    }

    #[test]
    fn degenerate_formulas_match_general_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = FdConfig::default();
        for (m, mult) in FAMILIES {
            let alg = make_algebra(m, mult).unwrap();
            for which in 0..2 {
                let (x, _) = random_pair(&mut rng, &alg);
                let theta = if which == 0 {
                    BoundaryPoint::finite(x.v.clone(), random_ball(&mut rng, alg.m(), 2.0))
                } else {
                    let v = random_ball(&mut rng, alg.k(), 2.0);
                    let y = &x.y + alg.bracket(&x.v, &v).unwrap() * 0.5;
                    BoundaryPoint::finite(v, y)
                };
                let h = hessian_closed_form(&alg, &x, &theta).unwrap();
                assert!(h.continuity_gap.unwrap() < 1e-12);
                let n = numeric_hessian(&alg, &x, &theta, &cfg).unwrap();
                assert!(linalg::max_abs(&(&h.entries - &n.hessian.entries)) < 1e-5);
                let s = h.spectrum().unwrap();
                assert!(linalg::spectrum_deviation(&s, &degenerate_spectrum(alg.k(), m)) < 1e-8);
                match degenerate_blocks(&alg, &x, &theta).unwrap() {
                    DegenerateBlocks::VZero { block } => {
                        let sp = spectrum(&block).unwrap();
                        assert!(sp[0].abs() < 1e-12 && (sp[1] - 1.0).abs() < 1e-12);
                    }
                    DegenerateBlocks::YZero { block2, block3 } => {
                        let sp = spectrum(&block2).unwrap();
                        assert!(sp[0].abs() < 1e-12 && (sp[1] - 0.5).abs() < 1e-12);
                        let sp3 = spectrum(&block3).unwrap();
                        assert!(linalg::spectrum_deviation(&sp3, &[(0.5, m), (1.0, m)]) < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn adapted_basis_properties() {
        let alg = make_algebra(1, 1).unwrap();
        let x = pt(&[0.0, 0.0], &[0.0], 1.0);
        let theta = BoundaryPoint::finite(DVector::from_row_slice(&[3.0, 0.0]), DVector::from_row_slice(&[1.0]));
        let b = adapted_basis(&alg, &x, &theta).unwrap();
        assert_eq!(b.v_basis.len(), 2);
        assert_eq!(b.v_basis[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(b.v_basis[1].as_slice(), &[0.0, 1.0]);
        assert_eq!(b.z_basis[0].as_slice(), &[1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (m, mult) in FAMILIES {
            let alg = make_algebra(m, mult).unwrap();
            let k = alg.k();
            let (x, theta) = random_pair(&mut rng, &alg);
            let b = adapted_basis(&alg, &x, &theta).unwrap();
            let gv = linalg::gram(&b.v_basis);
            let gz = linalg::gram(&b.z_basis);
            assert!(linalg::max_abs(&(gv - DMatrix::identity(k, k))) < 1e-12);
            assert!(linalg::max_abs(&(gz - DMatrix::identity(m, m))) < 1e-12);
            // [e_1, J_{z_r} e_1] = |e_1|^2 z_r
            for r in 0..m {
                let br = alg.bracket(&b.v_basis[0], &b.v_basis[k - m + r]).unwrap();
                assert!((br - &b.z_basis[r]).amax() < 1e-12);
            }
        }
        let alg = make_algebra(3, 1).unwrap();
        let x = pt(&[1.0, 0.0, 0.0, 0.0], &[0.0; 3], 1.0);
        let theta = BoundaryPoint::finite(x.v.clone(), DVector::from_row_slice(&[1.0, 0.0, 0.0]));
        assert_eq!(adapted_basis(&alg, &x, &theta).unwrap_err(), Error::Degenerate("calV"));
    }

    #[test]
    fn block_structure_and_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (m, mult) in FAMILIES.into_iter().chain([(3, 2)]) {
            let alg = make_algebra(m, mult).unwrap();
            let k = alg.k();
            for _ in 0..20 {
                let (x, theta) = random_pair(&mut rng, &alg);
                let d = block_decomposition(&alg, &x, &theta).unwrap();
                assert_eq!(d.cal_b.nrows(), k + m - 3);
                assert!((d.block1.trace() - 2.0).abs() < 1e-10);
                assert!((d.b1 + d.b2 - 1.5).abs() < 1e-14);
                let id = block_identity_residuals(&d, 1e-10);
                assert!(id.eq20 < 1e-10 && id.eq21 < 1e-12, "{id:?}");
                let b1 = b1_report(&d.block1, 1e-9).unwrap();
                assert!(b1.pass, "{b1:?}");
                let det = det_b_from_blocks(&d, k).unwrap();
                assert!(det.relative_diff < 1e-8, "{det:?}");
                assert!(det.closed > 0.0 && det.mu_in_range(1e-10) && det.factors_positive());
                let (gram_v, gram_y) = kernel_gram_direct(&alg, &x, &theta).unwrap();
                let from_b2 = d.block2.transpose() * &d.block2 * (4.0 * d.big_f * d.big_f / d.a);
                assert!(linalg::max_abs(&(&gram_v - from_b2)) < 1e-9);
                let v2 = d.cal_v_norm.powi(2);
                let y2 = d.cal_y_norm.powi(2);
                let sum = gram_v + gram_y * v2 - DMatrix::identity(m - 1, m - 1) * (v2 * y2);
                assert!(linalg::max_abs(&sum) < 1e-9);
                // similarity under the orthogonal change of frame
                let s1 = spectrum(&general_entries(&alg, x.a, &vy_state(&alg, &x, &theta).unwrap())).unwrap();
                let s2 = d.adapted.spectrum().unwrap();
                let gap = s1.iter().zip(&s2).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                assert!(gap < 1e-9);
            }
        }
    }

    #[test]
    fn heisenberg_has_only_b1() {
        let alg = make_algebra(1, 1).unwrap();
        let x = pt(&[0.0, 0.0], &[0.0], 1.0);
        let theta = BoundaryPoint::finite(DVector::from_row_slice(&[1.0, 1.0]), DVector::from_row_slice(&[1.0]));
        let d = block_decomposition(&alg, &x, &theta).unwrap();
        assert_eq!(d.cal_b.nrows(), 0);
        assert_eq!(d.block2.shape(), (0, 0));
        let det = det_b_from_blocks(&d, 2).unwrap();
        assert_eq!((det.closed, det.numeric), (1.0, 1.0));
    }

    #[test]
    fn scalar_identity_by_hand() {
        // a = 1, f = 2, F = 5: b1 = 0.9, b2 = 0.6, b3 = 0, b4 = -0.04
        let (b1, b2, b3, b4) = block_scalars(1.0, 2.0, 5.0);
        assert!((b1 - 0.9).abs() < 1e-15);
        assert!((b2 - 0.6).abs() < 1e-15);
        assert_eq!(b3, 0.0);
        assert!((b4 + 0.04).abs() < 1e-15);
        assert!((b1 * b2 - b3 * b3 + b4 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn restricted_positivity_cases() {
        let alg = make_algebra(2, 1).unwrap();
        let x = pt(&[0.3, 0.1, -0.2, 1.0], &[0.5, -0.5], 1.5);
        let r = restricted_positivity(&alg, &x, &BoundaryPoint::Infinity).unwrap();
        assert!((r.min_eigenvalue - 0.5).abs() < 1e-14);
        assert_eq!(r.zero_residual, 0.0);
        let theta = BoundaryPoint::finite(x.v.clone(), x.y.clone());
        let r = restricted_positivity(&alg, &x, &theta).unwrap();
        assert!((r.min_eigenvalue - 0.5).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, mult) in FAMILIES {
            let alg = make_algebra(m, mult).unwrap();
            for _ in 0..20 {
                let (x, theta) = random_pair(&mut rng, &alg);
                let r = restricted_positivity(&alg, &x, &theta).unwrap();
                assert!(r.min_eigenvalue > 0.0);
                assert!(r.zero_residual < 1e-7);
                assert!((r.gradient_norm - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn insufficient_rank_and_degenerate_errors() {
        let alg = make_algebra(1, 1).unwrap();
        let x = pt(&[0.0, 0.0], &[0.0], 1.0);
        let theta = BoundaryPoint::finite(DVector::from_row_slice(&[2.0, 0.0]), DVector::zeros(1));
        assert_eq!(block_decomposition(&alg, &x, &theta).unwrap_err(), Error::Degenerate("calY"));
    }
}
