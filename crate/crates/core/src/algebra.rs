//! Generalized Heisenberg algebras `n = v + z` built from Clifford-module
//! generators.
//!
//! An algebra is determined by `m` skew-symmetric `k x k` matrices
//! `J_1 .. J_m` with `J_r J_l + J_l J_r = -2 delta_rl I`. The bracket on `v`
//! takes values in `z` and is dual to the J-maps:
//!
//! ```text
//! <[U, W], e_{k+r}> = <J_r U, W>
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Element of `v`, length `k`.
pub type VVector = DVector<f64>;
/// Element of the center `z`, length `m`.
pub type ZVector = DVector<f64>;

/// Upper bound on `k` accepted by the builder.
pub const MAX_V_DIM: usize = 4096;

/// Pivot threshold for Gram-Schmidt completion.
pub const PIVOT_TOL: f64 = 1e-8;

/// Default tolerance for the identity checker.
pub const DEFAULT_IDENTITY_TOL: f64 = 1e-10;

/// Serializable description of a supported algebra family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgebraDescriptor {
    pub m: usize,
    pub multiplicity: usize,
}

impl AlgebraDescriptor {
    pub fn new(m: usize, multiplicity: usize) -> Self {
        Self { m, multiplicity }
    }

    pub fn build(&self) -> Result<GeneralizedHeisenbergAlgebra> {
        make_algebra(self.m, self.multiplicity)
    }
}

/// Dimension of the irreducible base module for the supported signatures.
pub fn base_dimension(m: usize) -> Result<usize> {
    match m {
        1 => Ok(2),
        2 | 3 => Ok(4),
        7 => Ok(8),
        other => Err(Error::UnsupportedSignature(other)),
    }
}

/// Matrix of left multiplication by quaternion unit `unit` (1 = i, 2 = j,
/// 3 = k) on R^4 with basis (1, i, j, k).
fn quaternion_left(unit: usize) -> DMatrix<f64> {
    // table[a][b] = (sign, index) with e_a e_b = sign * e_index
    const TABLE: [[(f64, usize); 4]; 4] = [
        [(1.0, 0), (1.0, 1), (1.0, 2), (1.0, 3)],
        [(1.0, 1), (-1.0, 0), (1.0, 3), (-1.0, 2)],
        [(1.0, 2), (-1.0, 3), (-1.0, 0), (1.0, 1)],
        [(1.0, 3), (1.0, 2), (-1.0, 1), (-1.0, 0)],
    ];
    let mut l = DMatrix::zeros(4, 4);
    for (b, &(sign, idx)) in TABLE[unit].iter().enumerate() {
        l[(idx, b)] = sign;
    }
    l
}

/// Octonion product of basis units: `e_a e_b = sign * e_index`, using the
/// Fano-plane triples below (each cyclic, e.g. e1 e2 = e3).
fn octonion_product(a: usize, b: usize) -> (f64, usize) {
    const TRIPLES: [[usize; 3]; 7] = [
        [1, 2, 3],
        [1, 4, 5],
        [1, 7, 6],
        [2, 4, 6],
        [2, 5, 7],
        [3, 4, 7],
        [3, 6, 5],
    ];
    if a == 0 {
        return (1.0, b);
    }
    if b == 0 {
        return (1.0, a);
    }
    if a == b {
        return (-1.0, 0);
    }
    for t in TRIPLES {
        for shift in 0..3 {
            let (x, y, z) = (t[shift], t[(shift + 1) % 3], t[(shift + 2) % 3]);
            if (x, y) == (a, b) {
                return (1.0, z);
            }
            if (y, x) == (a, b) {
                return (-1.0, z);
            }
        }
    }
    unreachable!("every pair of distinct imaginary units lies on one Fano line")
}

fn octonion_left(unit: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(8, 8);
    for b in 0..8 {
        let (sign, idx) = octonion_product(unit, b);
        l[(idx, b)] = sign;
    }
    l
}

fn block_diagonal(block: &DMatrix<f64>, copies: usize) -> DMatrix<f64> {
    let d = block.nrows();
    let mut out = DMatrix::zeros(d * copies, d * copies);
    for c in 0..copies {
        out.view_mut((c * d, c * d), (d, d)).copy_from(block);
    }
    out
}

/// Skew, orthogonal, pairwise anticommuting matrices squaring to `-I`,
/// acting on `R^k` with `k = multiplicity * base_dimension(m)`.
pub fn build_clifford_generators(m: usize, multiplicity: usize) -> Result<Vec<DMatrix<f64>>> {
    let base = base_dimension(m)?;
    if multiplicity == 0 {
        return Err(Error::ZeroMultiplicity);
    }
    match multiplicity.checked_mul(base) {
        Some(k) if k <= MAX_V_DIM => {}
        _ => {
            return Err(Error::DimensionOverflow {
                multiplicity,
                base,
                limit: MAX_V_DIM,
            })
        }
    }
    let blocks: Vec<DMatrix<f64>> = match m {
        // J e_1 = e_2, J e_2 = -e_1
        1 => vec![DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])],
        2 => (1..=2).map(quaternion_left).collect(),
        3 => (1..=3).map(quaternion_left).collect(),
        7 => (1..=7).map(octonion_left).collect(),
        _ => unreachable!(),
    };
    Ok(blocks
        .iter()
        .map(|b| block_diagonal(b, multiplicity))
        .collect())
}

/// A generalized Heisenberg algebra in an orthonormal basis
/// `e_1 .. e_k` of `v` and `e_{k+1} .. e_{k+m}` of `z`.
#[derive(Debug, Clone)]
pub struct GeneralizedHeisenbergAlgebra {
    descriptor: AlgebraDescriptor,
    k: usize,
    m: usize,
    j: Vec<DMatrix<f64>>,
    /// `structure[r][(i, j)] = A_ij^r = <J_r e_i, e_j>`
    structure: Vec<DMatrix<f64>>,
}

pub fn make_algebra(m: usize, multiplicity: usize) -> Result<GeneralizedHeisenbergAlgebra> {
    let j = build_clifford_generators(m, multiplicity)?;
    let k = j[0].nrows();
    let structure = j.iter().map(|jr| jr.transpose()).collect();
    Ok(GeneralizedHeisenbergAlgebra {
        descriptor: AlgebraDescriptor::new(m, multiplicity),
        k,
        m,
        j,
        structure,
    })
}

impl GeneralizedHeisenbergAlgebra {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Dimension `k + m + 1` of the solvable extension.
    pub fn dim_s(&self) -> usize {
        self.k + self.m + 1
    }

    pub fn descriptor(&self) -> AlgebraDescriptor {
        self.descriptor
    }

    pub fn j_matrices(&self) -> &[DMatrix<f64>] {
        &self.j
    }

    /// `A_ij^r` with zero-based `i`, `j`, `r`.
    pub fn structure_constant(&self, i: usize, j: usize, r: usize) -> f64 {
        self.structure[r][(i, j)]
    }

    /// J matrices as nested row-major arrays.
    pub fn j_matrices_json(&self) -> serde_json::Value {
        let mats: Vec<Vec<Vec<f64>>> = self
            .j
            .iter()
            .map(|jr| {
                (0..self.k)
                    .map(|row| (0..self.k).map(|col| jr[(row, col)]).collect())
                    .collect()
            })
            .collect();
        serde_json::json!({
            "m": self.m,
            "multiplicity": self.descriptor.multiplicity,
            "k": self.k,
            "J": mats,
        })
    }

    pub fn check_v(&self, u: &VVector) -> Result<()> {
        check_len(self.k, u.len())
    }

    pub fn check_z(&self, z: &ZVector) -> Result<()> {
        check_len(self.m, z.len())
    }

    /// Matrix of `J_Z = sum_r Z^r J_r`.
    pub fn j_matrix(&self, z: &ZVector) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.k, self.k);
        for (zr, jr) in z.iter().zip(&self.j) {
            out += jr * *zr;
        }
        out
    }

    /// `J_Z U`.
    pub fn j_map(&self, z: &ZVector, u: &VVector) -> Result<VVector> {
        self.check_z(z)?;
        self.check_v(u)?;
        Ok(self.j_unchecked(z, u))
    }

    pub(crate) fn j_unchecked(&self, z: &ZVector, u: &VVector) -> VVector {
        let mut out = VVector::zeros(self.k);
        for (zr, jr) in z.iter().zip(&self.j) {
            if *zr != 0.0 {
                out += (jr * u) * *zr;
            }
        }
        out
    }

    /// `J_{e_{k+r}} U` for a single generator.
    pub(crate) fn j_basis(&self, r: usize, u: &VVector) -> VVector {
        &self.j[r] * u
    }

    /// The `z`-valued bracket `[U, W]`.
    pub fn bracket(&self, u: &VVector, w: &VVector) -> Result<ZVector> {
        self.check_v(u)?;
        self.check_v(w)?;
        Ok(self.bracket_unchecked(u, w))
    }

    pub(crate) fn bracket_unchecked(&self, u: &VVector, w: &VVector) -> ZVector {
        ZVector::from_iterator(self.m, self.j.iter().map(|jr| (jr * u).dot(w)))
    }

    /// Orthogonal splitting `v = ker(ad V) + J_z V`.
    ///
    /// Returns `(kernel, j_part)`: an orthonormal basis of `ker(ad V)`
    /// (`k - m` vectors, the first being `V / |V|`) and the orthonormal
    /// basis `J_r V / |V|` of `J_z V`.
    pub fn decompose_v(&self, v: &VVector, tol: f64) -> Result<(Vec<VVector>, Vec<VVector>)> {
        self.check_v(v)?;
        let norm = v.norm();
        if norm <= tol {
            return Err(Error::DegenerateVector { norm, tol });
        }
        let unit = v / norm;
        let j_part: Vec<VVector> = (0..self.m).map(|r| self.j_basis(r, &unit)).collect();
        let mut seed = j_part.clone();
        seed.push(unit);
        let full = linalg::complete_orthonormal(&seed, self.k, PIVOT_TOL);
        let kernel = full[self.m..].to_vec();
        Ok((kernel, j_part))
    }

    /// Evaluates the nine generalized Heisenberg identities on random
    /// inputs of norm at most 2.
    pub fn check_identities<R: Rng>(&self, trials: usize, tol: f64, rng: &mut R) -> IdentityReport {
        let mut residuals = [0.0_f64; 9];
        for _ in 0..trials.max(1) {
            let u = random_ball(rng, self.k, 2.0);
            let v = random_ball(rng, self.k, 2.0);
            let x = random_ball(rng, self.m, 2.0);
            let y = random_ball(rng, self.m, 2.0);
            let sample = self.identity_residuals(&u, &v, &x, &y);
            for (acc, r) in residuals.iter_mut().zip(sample) {
                *acc = acc.max(r);
            }
        }
        IdentityReport {
            trials: trials.max(1),
            tol,
            residuals,
            pass: residuals.iter().all(|r| *r < tol),
        }
    }

    /// Max-abs residual of each identity (i)..(ix) at the given inputs.
    pub fn identity_residuals(&self, u: &VVector, v: &VVector, x: &ZVector, y: &ZVector) -> [f64; 9] {
        let k = self.k;
        let jx = self.j_matrix(x);
        let jy = self.j_matrix(y);
        let jxu = &jx * u;
        let jxv = &jx * v;
        let jyu = &jy * u;
        let jyv = &jy * v;
        let br = |a: &VVector, b: &VVector| self.bracket_unchecked(a, b);
        let uv = u.dot(v);
        let xy = x.dot(y);
        let x2 = x.norm_squared();

        let r1 = linalg::max_abs(&(&jx * &jy + &jy * &jx + DMatrix::identity(k, k) * (2.0 * xy)));
        let r2 = (jxu.dot(v) + u.dot(&jxv)).abs();
        let r3 = (jxu.dot(&jxv) - x2 * uv).abs();
        let r4 = (jxu.dot(&jyv) + jyu.dot(&jxv) - 2.0 * uv * xy).abs();
        let r5 = (jxu.dot(&jyu) - u.norm_squared() * xy).abs();
        let r6 = linalg::max_abs_vec(&(br(&jxu, v) - br(u, &jxv) + x * (2.0 * uv)));
        let r7 = linalg::max_abs_vec(&(br(&jxu, &jyu) - br(u, &(&jx * &jyu))));
        let r8 = linalg::max_abs_vec(
            &(br(&jxu, &jxv) + br(u, v) * x2 + x * (2.0 * u.dot(&jxv))),
        );
        let r9 = linalg::max_abs_vec(&(br(u, &jxu) - x * u.norm_squared()));
        [r1, r2, r3, r4, r5, r6, r7, r8, r9]
    }
}

/// Per-identity maximum residuals over all trials.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub trials: usize,
    pub tol: f64,
    pub residuals: [f64; 9],
    pub pass: bool,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Uniform in the cube `[-1, 1]^n`, rescaled into the ball of radius `radius`
/// when it falls outside.
pub fn random_ball<R: Rng>(rng: &mut R, n: usize, radius: f64) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0) * radius);
    let norm = v.norm();
    if norm > radius {
        v * (radius / norm)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FAMILIES: [(usize, usize); 6] = [(1, 1), (1, 2), (2, 1), (3, 1), (7, 1), (3, 2)];

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn clifford_relations_hold() {
        for (m, mult) in FAMILIES {
            let js = build_clifford_generators(m, mult).unwrap();
            let k = js[0].nrows();
            assert_eq!(k, mult * base_dimension(m).unwrap());
            let id = DMatrix::<f64>::identity(k, k);
            for (r, jr) in js.iter().enumerate() {
                assert_eq!(jr.transpose(), -jr.clone(), "skew");
                for (l, jl) in js.iter().enumerate() {
                    let anti = jr * jl + jl * jr;
                    let want = if r == l { &id * -2.0 } else { DMatrix::zeros(k, k) };
                    assert_eq!(anti, want, "m={m} r={r} l={l}");
                }
            }
        }
    }

    #[test]
    fn quaternion_product_relation() {
        let js = build_clifford_generators(3, 1).unwrap();
        let prod = &js[0] * &js[1];
        assert!(prod == js[2] || prod == -js[2].clone());
    }

    #[test]
    fn unsupported_signature() {
        assert_eq!(
            build_clifford_generators(9, 1).unwrap_err(),
            Error::UnsupportedSignature(9)
        );
        assert_eq!(build_clifford_generators(1, 0).unwrap_err(), Error::ZeroMultiplicity);
        assert!(matches!(
            build_clifford_generators(7, usize::MAX),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn classical_heisenberg() {
        let alg = make_algebra(1, 1).unwrap();
        assert_eq!((alg.k(), alg.m(), alg.dim_s()), (2, 1, 4));
        assert_eq!(alg.structure_constant(0, 1, 0), 1.0);
        assert_eq!(alg.structure_constant(1, 0, 0), -1.0);
        let b = alg.bracket(&e(2, 0), &e(2, 1)).unwrap();
        assert_eq!(b.as_slice(), &[1.0]);
        let j = alg.j_map(&e(1, 0), &e(2, 0)).unwrap();
        assert_eq!(j, e(2, 1));
        let e1 = e(2, 0);
        let je1 = alg.j_map(&e(1, 0), &e1).unwrap();
        assert_eq!(alg.bracket(&e1, &je1).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn bracket_of_self_vanishes_and_zero_map() {
        let alg = make_algebra(7, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_ball(&mut rng, 8, 2.0);
        assert!(linalg::max_abs_vec(&alg.bracket(&u, &u).unwrap()) < 1e-15);
        assert_eq!(alg.j_map(&ZVector::zeros(7), &u).unwrap(), VVector::zeros(8));
        let z = random_ball(&mut rng, 7, 2.0);
        let jju = alg.j_map(&z, &alg.j_map(&z, &u).unwrap()).unwrap();
        assert!(linalg::max_abs_vec(&(jju + &u * z.norm_squared())) < 1e-13);
    }

    #[test]
    fn dimension_mismatch() {
        let alg = make_algebra(3, 1).unwrap();
        let err = alg.bracket(&VVector::zeros(3), &VVector::zeros(4)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 4, got: 3 });
        assert!(alg.j_map(&ZVector::zeros(2), &VVector::zeros(4)).is_err());
    }

    #[test]
    fn identities_exact_case() {
        let alg = make_algebra(1, 1).unwrap();
        let r = alg.identity_residuals(&e(2, 0), &e(2, 1), &e(1, 0), &e(1, 0));
        assert_eq!(r[8], 0.0);
    }

    #[test]
    fn identities_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (m, mult) in FAMILIES {
            let alg = make_algebra(m, mult).unwrap();
            let rep = alg.check_identities(100, 1e-12, &mut rng);
            assert!(rep.pass, "({m},{mult}) residuals {:?}", rep.residuals);
        }
    }

    #[test]
    fn decomposition() {
        let alg = make_algebra(1, 1).unwrap();
        let (ker, jp) = alg.decompose_v(&e(2, 0), 1e-12).unwrap();
        assert_eq!(jp, vec![e(2, 1)]);
        assert_eq!(ker, vec![e(2, 0)]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, mult) in FAMILIES {
            let alg = make_algebra(m, mult).unwrap();
            let v = random_ball(&mut rng, alg.k(), 2.0);
            let (ker, jp) = alg.decompose_v(&v, 1e-12).unwrap();
            assert_eq!(ker.len(), alg.k() - m);
            assert_eq!(jp.len(), m);
            let all: Vec<_> = jp.iter().chain(&ker).cloned().collect();
            let g = linalg::gram(&all);
            assert!(linalg::max_abs(&(g - DMatrix::identity(alg.k(), alg.k()))) < 1e-12);
            for w in &ker {
                assert!(linalg::max_abs_vec(&alg.bracket(&v, w).unwrap()) < 1e-12);
            }
        }
        assert!(matches!(
            alg.decompose_v(&VVector::zeros(2), 1e-12),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn descriptor_json() {
        let d: AlgebraDescriptor = serde_json::from_str(r#"{"m": 3, "multiplicity": 2}"#).unwrap();
        assert_eq!(d.build().unwrap().k(), 8);
        let js = make_algebra(1, 1).unwrap().j_matrices_json();
        assert_eq!(js["J"][0][0][1], -1.0);
    }
}
