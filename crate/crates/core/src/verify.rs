//! Randomized verification runs: sampling of `(x, theta)` pairs, per-point
//! checks against the closed forms and the finite-difference oracle, and the
//! algebra/group suites.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{random_ball, AlgebraDescriptor, GeneralizedHeisenbergAlgebra};
use crate::busemann::{classify, gradient, BoundaryPoint, HessianCase};
use crate::error::Result;
use crate::group::{self, GroupPoint};
use crate::hessian::{self, HessianMatrix};
use crate::linalg;
use crate::oracle::{self, FdConfig};

/// Thresholds for every check, fixed.
pub mod tol {
    pub const IDENTITY: f64 = 1e-12;
    pub const GROUP: f64 = 1e-12;
    pub const SYMMETRY: f64 = 1e-10;
    pub const SPECTRUM: f64 = 1e-8;
    pub const PSD_SLACK: f64 = 1e-8;
    pub const KERNEL_EIGENVALUE: f64 = 1e-7;
    pub const ZERO_RESIDUAL: f64 = 1e-7;
    pub const GRADIENT_NORM: f64 = 1e-8;
    pub const EQ20: f64 = 1e-10;
    pub const EQ21: f64 = 1e-12;
    pub const B1_DET: f64 = 1e-9;
    pub const DET_RELATIVE: f64 = 1e-8;
    pub const MU: f64 = 1e-10;
    pub const BASIS_INVARIANCE: f64 = 1e-9;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaMode {
    Infinity,
    /// Finite random boundary points, with `infinity_fraction` of the
    /// samples replaced by infinity.
    Random,
    Fixed(BoundaryPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algebra: AlgebraDescriptor,
    pub seed: u64,
    pub points: usize,
    pub theta_mode: ThetaMode,
    pub coordinate_scale: f64,
    pub a_range: (f64, f64),
    pub infinity_fraction: f64,
    pub fd: FdConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algebra: AlgebraDescriptor::new(1, 1),
            seed: 0,
            points: 100,
            theta_mode: ThetaMode::Random,
            coordinate_scale: 2.0,
            a_range: (0.2, 5.0),
            infinity_fraction: 0.1,
            fd: FdConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.points == 0 {
            return Err("points must be at least 1".into());
        }
        let (lo, hi) = self.a_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(format!("invalid a range [{lo}, {hi}]"));
        }
        if !(self.coordinate_scale > 0.0 && self.coordinate_scale.is_finite()) {
            return Err(format!("scale must be positive, got {}", self.coordinate_scale));
        }
        if !self.fd.is_valid() {
            return Err("step size and tolerances must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.infinity_fraction) {
            return Err("infinity fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn uniform_box<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..=scale))
}

/// Draws one `(x, theta)` pair.
pub fn sample_pair<R: Rng>(rng: &mut R, alg: &GeneralizedHeisenbergAlgebra, cfg: &RunConfig) -> (GroupPoint, BoundaryPoint) {
    let s = cfg.coordinate_scale;
    let x = GroupPoint {
        v: uniform_box(rng, alg.k(), s),
        y: uniform_box(rng, alg.m(), s),
        a: rng.gen_range(cfg.a_range.0..=cfg.a_range.1),
    };
    let theta = match &cfg.theta_mode {
        ThetaMode::Infinity => BoundaryPoint::Infinity,
        ThetaMode::Fixed(t) => t.clone(),
        ThetaMode::Random => {
            let v = uniform_box(rng, alg.k(), s);
            let y = uniform_box(rng, alg.m(), s);
            if rng.gen_bool(cfg.infinity_fraction) {
                BoundaryPoint::Infinity
            } else {
                BoundaryPoint::finite(v, y)
            }
        }
    };
    (x, theta)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityResiduals {
    pub eq20: f64,
    pub eq21: f64,
    #[serde(rename = "trB1")]
    pub tr_b1: f64,
    #[serde(rename = "detB_closed")]
    pub det_b_closed: f64,
    #[serde(rename = "detB_numeric")]
    pub det_b_numeric: f64,
    #[serde(rename = "B1_dets")]
    pub b1_dets: [f64; 3],
    #[serde(rename = "B1_spectrum_deviation")]
    pub b1_spectrum_deviation: f64,
    pub mu: Vec<f64>,
    pub factors: Vec<f64>,
}

/// Everything checked at one sampled pair.
#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub id: usize,
    pub point: GroupPoint,
    pub theta: BoundaryPoint,
    pub case: HessianCase,
    pub spectrum: Vec<f64>,
    pub min_on_complement: f64,
    pub zero_residual: f64,
    pub gradient_norm: f64,
    pub max_oracle_diff: f64,
    pub oracle_asymmetry: f64,
    pub identities: Option<IdentityResiduals>,
    pub failures: Vec<String>,
    pub pass: bool,
}

fn expect(failures: &mut Vec<String>, ok: bool, name: &str) {
    if !ok {
        failures.push(name.to_string());
    }
}

/// Runs every per-point check at `(x, theta)`.
pub fn evaluate_point(
    alg: &GeneralizedHeisenbergAlgebra,
    id: usize,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    fd: &FdConfig,
) -> Result<PointReport> {
    let case = classify(alg, x, theta)?;
    let closed = hessian::hessian_closed_form(alg, x, theta)?;
    let numeric = oracle::numeric_hessian(alg, x, theta, fd)?;
    let cmp = oracle::compare(&closed, &numeric.hessian, fd)?;
    let spectrum = closed.spectrum()?;
    let grad = gradient(alg, x, theta)?;
    let rp = hessian::restricted_positivity_of(&closed, &grad)?;

    let mut failures = Vec::new();
    expect(&mut failures, cmp.pass, "oracle");
    expect(&mut failures, closed.asymmetry() < tol::SYMMETRY, "symmetry");
    expect(&mut failures, rp.zero_residual < tol::ZERO_RESIDUAL, "gradient kernel");
    expect(&mut failures, (rp.gradient_norm - 1.0).abs() < tol::GRADIENT_NORM, "unit gradient");

    let mut identities = None;
    if case.is_degenerate() {
        let dev = linalg::spectrum_deviation(&spectrum, &hessian::degenerate_spectrum(alg.k(), alg.m()));
        expect(&mut failures, dev < tol::SPECTRUM, "degenerate spectrum");
        expect(&mut failures, rp.min_eigenvalue >= 0.5 - tol::SPECTRUM, "restricted positivity");
    } else {
        expect(&mut failures, spectrum_is_psd_with_simple_kernel(&spectrum), "general spectrum");
        expect(&mut failures, rp.min_eigenvalue > 0.0, "restricted positivity");
        match general_case_identities(alg, x, theta, &closed) {
            Ok((ids, mut fails)) => {
                failures.append(&mut fails);
                identities = Some(ids);
            }
            Err(e) => failures.push(format!("block decomposition: {e}")),
        }
    }

    Ok(PointReport {
        id,
        point: x.clone(),
        theta: theta.clone(),
        case,
        spectrum,
        min_on_complement: rp.min_eigenvalue,
        zero_residual: rp.zero_residual,
        gradient_norm: rp.gradient_norm,
        max_oracle_diff: cmp.max_abs_diff,
        oracle_asymmetry: numeric.asymmetry,
        identities,
        pass: failures.is_empty(),
        failures,
    })
}

/// All eigenvalues above `-PSD_SLACK` and exactly one within
/// `KERNEL_EIGENVALUE` of zero.
pub fn spectrum_is_psd_with_simple_kernel(sorted: &[f64]) -> bool {
    let psd = sorted.iter().all(|&l| l >= -tol::PSD_SLACK);
    let zeros = sorted.iter().filter(|l| l.abs() < tol::KERNEL_EIGENVALUE).count();
    psd && zeros == 1
}

fn general_case_identities(
    alg: &GeneralizedHeisenbergAlgebra,
    x: &GroupPoint,
    theta: &BoundaryPoint,
    closed: &HessianMatrix,
) -> Result<(IdentityResiduals, Vec<String>)> {
    let d = hessian::block_decomposition(alg, x, theta)?;
    let ids = hessian::block_identity_residuals(&d, tol::EQ20);
    let b1 = hessian::b1_report(&d.block1, tol::B1_DET)?;
    let det = hessian::det_b_from_blocks(&d, alg.k())?;
    let adapted_spec = d.adapted.spectrum()?;
    let basis_gap = closed
        .spectrum()?
        .iter()
        .zip(&adapted_spec)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);

    let mut failures = Vec::new();
    expect(&mut failures, ids.eq20 < tol::EQ20, "eq20");
    expect(&mut failures, ids.eq21 < tol::EQ21, "eq21");
    expect(&mut failures, b1.pass, "B1 spectrum");
    expect(&mut failures, det.relative_diff < tol::DET_RELATIVE, "detB agreement");
    expect(&mut failures, det.closed > 0.0 && det.numeric > 0.0, "detB positive");
    expect(&mut failures, det.factors_positive(), "detB factors");
    expect(&mut failures, det.mu_in_range(tol::MU), "mu range");
    expect(&mut failures, basis_gap < tol::BASIS_INVARIANCE, "basis invariance");

    Ok((
        IdentityResiduals {
            eq20: ids.eq20,
            eq21: ids.eq21,
            tr_b1: b1.trace,
            det_b_closed: det.closed,
            det_b_numeric: det.numeric,
            b1_dets: [b1.det, b1.det_minus_half, b1.det_minus_one],
            b1_spectrum_deviation: b1.spectrum_deviation,
            mu: det.mu,
            factors: det.factors,
        },
        failures,
    ))
}

/// Point-independent checks of the algebra and the group.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub identity_residuals: [f64; 9],
    pub associativity: f64,
    pub inverse: f64,
    pub metric_compatibility: f64,
    pub torsion: f64,
    pub pass: bool,
}

/// Max residuals of associativity and `x x^-1 = e` over random samples.
pub fn group_axiom_residuals<R: Rng>(alg: &GeneralizedHeisenbergAlgebra, samples: usize, rng: &mut R) -> (f64, f64) {
    let mut assoc = 0.0_f64;
    let mut inv = 0.0_f64;
    let id = GroupPoint::identity(alg);
    let draw = |rng: &mut R| GroupPoint {
        v: random_ball(rng, alg.k(), 2.0),
        y: random_ball(rng, alg.m(), 2.0),
        a: rng.gen_range(0.2..=5.0),
    };
    for _ in 0..samples {
        let (x, y, z) = (draw(rng), draw(rng), draw(rng));
        let lhs = group::multiply(alg, &group::multiply(alg, &x, &y).expect("dims"), &z).expect("dims");
        let rhs = group::multiply(alg, &x, &group::multiply(alg, &y, &z).expect("dims")).expect("dims");
        assoc = assoc.max(lhs.distance_max(&rhs));
        let round = group::multiply(alg, &x, &group::inverse(alg, &x).expect("dims")).expect("dims");
        inv = inv.max(round.distance_max(&id));
    }
    (assoc, inv)
}

pub fn run_suites(alg: &GeneralizedHeisenbergAlgebra, samples: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed5_u64);
    let ids = alg.check_identities(samples, tol::IDENTITY, &mut rng);
    let (associativity, inverse) = group_axiom_residuals(alg, samples, &mut rng);
    let metric_compatibility = group::metric_compatibility_residual(alg);
    let torsion = group::torsion_residual(alg);
    let pass = ids.pass
        && associativity < tol::GROUP
        && inverse < tol::GROUP
        && metric_compatibility < tol::GROUP
        && torsion < tol::GROUP;
    SuiteReport {
        identity_residuals: ids.residuals,
        associativity,
        inverse,
        metric_compatibility,
        torsion,
        pass,
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CaseCounts {
    pub general: usize,
    pub inf: usize,
    #[serde(rename = "VY0")]
    pub both_zero: usize,
    #[serde(rename = "V0")]
    pub v_zero: usize,
    #[serde(rename = "Y0")]
    pub y_zero: usize,
}

impl CaseCounts {
    fn add(&mut self, case: HessianCase) {
        match case {
            HessianCase::General => self.general += 1,
            HessianCase::Infinity => self.inf += 1,
            HessianCase::BothZero => self.both_zero += 1,
            HessianCase::VZero => self.v_zero += 1,
            HessianCase::YZero => self.y_zero += 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub algebra: AlgebraDescriptor,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub records: usize,
    pub passed: usize,
    pub failed: usize,
    pub cases: CaseCounts,
    pub max_oracle_diff: f64,
    pub min_on_complement: f64,
    pub suites: SuiteReport,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub records: Vec<PointReport>,
    pub summary: Summary,
}

/// Number of random samples used by the algebra and group suites.
pub const SUITE_SAMPLES: usize = 200;

pub fn run(alg: &GeneralizedHeisenbergAlgebra, cfg: &RunConfig) -> Result<RunReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.points);
    for id in 0..cfg.points {
        let (x, theta) = sample_pair(&mut rng, alg, cfg);
        records.push(evaluate_point(alg, id, &x, &theta, &cfg.fd)?);
    }
    let suites = run_suites(alg, SUITE_SAMPLES, cfg.seed);
    let mut cases = CaseCounts::default();
    for r in &records {
        cases.add(r.case);
    }
    let passed = records.iter().filter(|r| r.pass).count();
    let summary = Summary {
        algebra: cfg.algebra,
        k: alg.k(),
        m: alg.m(),
        seed: cfg.seed,
        records: records.len(),
        passed,
        failed: records.len() - passed,
        cases,
        max_oracle_diff: records.iter().map(|r| r.max_oracle_diff).fold(0.0, f64::max),
        min_on_complement: records.iter().map(|r| r.min_on_complement).fold(f64::INFINITY, f64::min),
        pass: passed == records.len() && suites.pass,
        suites,
    };
    Ok(RunReport { records, summary })
}

/// Fixed CSV columns.
pub const CSV_HEADER: [&str; 8] = [
    "point_id",
    "case",
    "min_eig_complement",
    "max_oracle_diff",
    "eq20_residual",
    "eq21_residual",
    "detB_closed",
    "pass",
];

pub fn write_csv<W: std::io::Write>(report: &RunReport, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &report.records {
        let opt = |f: fn(&IdentityResiduals) -> f64| r.identities.as_ref().map(|i| format!("{:e}", f(i))).unwrap_or_default();
        w.write_record([
            r.id.to_string(),
            r.case.as_str().to_string(),
            format!("{:e}", r.min_on_complement),
            format!("{:e}", r.max_oracle_diff),
            opt(|i| i.eq20),
            opt(|i| i.eq21),
            opt(|i| i.det_b_closed),
            r.pass.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::make_algebra;

    #[test]
    fn small_run_passes_and_is_deterministic() {
        let alg = make_algebra(2, 1).unwrap();
        let cfg = RunConfig {
            algebra: AlgebraDescriptor::new(2, 1),
            seed: 9,
            points: 12,
            ..RunConfig::default()
        };
        let r1 = run(&alg, &cfg).unwrap();
        assert!(r1.summary.pass, "{:?}", r1.records.iter().flat_map(|r| r.failures.clone()).collect::<Vec<_>>());
        assert_eq!(r1.summary.records, 12);
        let r2 = run(&alg, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
    }

    #[test]
    fn infinity_mode() {
        let alg = make_algebra(1, 2).unwrap();
        let cfg = RunConfig {
            algebra: AlgebraDescriptor::new(1, 2),
            points: 5,
            theta_mode: ThetaMode::Infinity,
            ..RunConfig::default()
        };
        let r = run(&alg, &cfg).unwrap();
        assert_eq!(r.summary.cases.inf, 5);
        for rec in &r.records {
            assert_eq!(rec.spectrum, vec![0.0, 0.5, 0.5, 0.5, 0.5, 1.0]);
        }
    }

    #[test]
    fn invalid_configs() {
        let base = RunConfig::default();
        assert!(base.validate().is_ok());
        assert!(RunConfig { points: 0, ..base.clone() }.validate().is_err());
        assert!(RunConfig { a_range: (0.0, 1.0), ..base.clone() }.validate().is_err());
        assert!(RunConfig { coordinate_scale: -1.0, ..base.clone() }.validate().is_err());
        assert!(RunConfig { fd: base.fd.with_h(0.0), ..base }.validate().is_err());
    }

    #[test]
    fn kernel_counting() {
        assert!(spectrum_is_psd_with_simple_kernel(&[1e-9, 0.3, 1.0]));
        assert!(!spectrum_is_psd_with_simple_kernel(&[0.0, 1e-9, 1.0]));
        assert!(!spectrum_is_psd_with_simple_kernel(&[-1e-3, 0.0, 1.0]));
    }

    #[test]
    fn csv_columns() {
        let alg = make_algebra(1, 1).unwrap();
        let cfg = RunConfig { points: 3, ..RunConfig::default() };
        let r = run(&alg, &cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "point_id,case,min_eig_complement,max_oracle_diff,eq20_residual,eq21_residual,detB_closed,pass"
        );
        assert_eq!(lines.count(), 3);
    }
}
