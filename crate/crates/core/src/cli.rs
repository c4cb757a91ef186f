//! Command-line driver.
//!
//! Exit codes: 0 when every check passes, 1 when any check fails, 2 on
//! invalid input or I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::algebra::{AlgebraDescriptor, GeneralizedHeisenbergAlgebra};
use crate::busemann::{classify, gradient, vy_state, BoundaryPoint, HessianCase};
use crate::group::GroupPoint;
use crate::hessian;
use crate::oracle::FdConfig;
use crate::verify::{self, RunConfig, ThetaMode};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "drkernel", version, about = "Busemann Hessians on Damek-Ricci spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample (x, theta) pairs and run the full verification suite.
    Verify(VerifyArgs),
    /// Report the Hessian at a single point.
    Spectrum(SpectrumArgs),
    /// List the supported algebra families.
    Algebras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    /// Clifford signature and multiplicity, as `m,mult`.
    #[arg(long, default_value = "1,1")]
    pub algebra: String,
    #[arg(long, env = "DRKERNEL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// `infinity`, `random`, or a fixed point `v=..;y=..`.
    #[arg(long, default_value = "random")]
    pub theta: String,
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
    #[arg(long)]
    pub tol_hess: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, clap::Args)]
pub struct SpectrumArgs {
    #[arg(long, default_value = "1,1")]
    pub algebra: String,
    /// `V=..;Y=..;a=..` with comma-separated components.
    #[arg(long)]
    pub point: String,
    #[arg(long, default_value = "infinity")]
    pub theta: String,
}

pub fn parse_algebra(s: &str) -> Result<AlgebraDescriptor, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [m, mult] = parts.as_slice() else {
        return Err(format!("expected `m,mult`, got `{s}`"));
    };
    let m = m.parse().map_err(|_| format!("invalid m in `{s}`"))?;
    let mult = mult.parse().map_err(|_| format!("invalid multiplicity in `{s}`"))?;
    Ok(AlgebraDescriptor::new(m, mult))
}

fn parse_vector(s: &str) -> Result<DVector<f64>, String> {
    let comps: Result<Vec<f64>, _> = s.split(',').map(|c| c.trim().parse::<f64>()).collect();
    comps.map(DVector::from_vec).map_err(|_| format!("invalid vector `{s}`"))
}

/// Splits `key=value;key=value` into pairs.
fn fields(s: &str) -> Result<Vec<(String, String)>, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| format!("expected key=value, got `{p}`"))
        })
        .collect()
}

fn lookup<'a>(fs: &'a [(String, String)], key: &str, src: &str) -> Result<&'a str, String> {
    fs.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| format!("missing `{key}` in `{src}`"))
}

pub fn parse_point(s: &str) -> Result<GroupPoint, String> {
    let fs = fields(s)?;
    let v = parse_vector(lookup(&fs, "V", s)?)?;
    let y = parse_vector(lookup(&fs, "Y", s)?)?;
    let a_str = lookup(&fs, "a", s)?;
    let a = a_str.parse().map_err(|_| format!("invalid a `{a_str}`"))?;
    Ok(GroupPoint { v, y, a })
}

pub fn parse_boundary(s: &str) -> Result<BoundaryPoint, String> {
    if s.trim() == "infinity" {
        return Ok(BoundaryPoint::Infinity);
    }
    let fs = fields(s)?;
    Ok(BoundaryPoint::finite(
        parse_vector(lookup(&fs, "v", s)?)?,
        parse_vector(lookup(&fs, "y", s)?)?,
    ))
}

fn parse_theta_mode(s: &str) -> Result<ThetaMode, String> {
    match s.trim() {
        "infinity" => Ok(ThetaMode::Infinity),
        "random" => Ok(ThetaMode::Random),
        other => parse_boundary(other).map(ThetaMode::Fixed),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Verify(a) => cmd_verify(&a, out, err),
        Command::Spectrum(a) => cmd_spectrum(&a, out),
        Command::Algebras => cmd_algebras(out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INVALID
        }
    }
}

fn build_algebra(spec: &str) -> Result<GeneralizedHeisenbergAlgebra, String> {
    parse_algebra(spec)?.build().map_err(|e| e.to_string())
}

pub fn run_config(a: &VerifyArgs) -> Result<RunConfig, String> {
    let mut fd = FdConfig::default();
    if let Some(h) = a.h {
        fd = fd.with_h(h);
    }
    if let Some(t) = a.tol_hess {
        fd.tol_hess = t;
    }
    let cfg = RunConfig {
        algebra: parse_algebra(&a.algebra)?,
        seed: a.seed,
        points: a.points,
        theta_mode: parse_theta_mode(&a.theta)?,
        coordinate_scale: a.scale,
        fd,
        ..RunConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let cfg = run_config(a)?;
    let alg = cfg.algebra.build().map_err(|e| e.to_string())?;
    if let ThetaMode::Fixed(t) = &cfg.theta_mode {
        t.check_dims(&alg).map_err(|e| e.to_string())?;
    }
    let report = verify::run(&alg, &cfg).map_err(|e| e.to_string())?;

    let mut buf = Vec::new();
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, &report).map_err(|e| e.to_string())?;
            buf.push(b'\n');
        }
        Format::Csv => verify::write_csv(&report, &mut buf).map_err(|e| e.to_string())?,
    }
    match &a.out {
        Some(path) => std::fs::write(path, &buf).map_err(|e| format!("{}: {e}", path.display()))?,
        None => out.write_all(&buf).map_err(|e| e.to_string())?,
    }

    let s = &report.summary;
    let _ = writeln!(
        err,
        "algebra ({},{}) k={} m={}: {}/{} points pass, suites {}, max oracle diff {:.3e}",
        s.algebra.m,
        s.algebra.multiplicity,
        s.k,
        s.m,
        s.passed,
        s.records,
        if s.suites.pass { "pass" } else { "FAIL" },
        s.max_oracle_diff
    );
    for r in report.records.iter().filter(|r| !r.pass) {
        let _ = writeln!(err, "  point {} ({}): {}", r.id, r.case, r.failures.join(", "));
    }
    Ok(if s.pass { EXIT_PASS } else { EXIT_FAIL })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_spectrum(a: &SpectrumArgs, out: &mut dyn Write) -> Result<i32, String> {
    let alg = build_algebra(&a.algebra)?;
    let x = parse_point(&a.point)?;
    let theta = parse_boundary(&a.theta)?;
    let io = |e: std::io::Error| e.to_string();
    let s_err = |e: crate::Error| e.to_string();

    x.validate().map_err(s_err)?;
    x.check_dims(&alg).map_err(s_err)?;
    theta.check_dims(&alg).map_err(s_err)?;
    let case = classify(&alg, &x, &theta).map_err(s_err)?;
    let h = hessian::hessian_closed_form(&alg, &x, &theta).map_err(s_err)?;
    let spec = h.spectrum().map_err(s_err)?;
    let grad = gradient(&alg, &x, &theta).map_err(s_err)?;
    let rp = hessian::restricted_positivity_of(&h, &grad).map_err(s_err)?;

    writeln!(out, "algebra: k={}, m={}, dim S={}", alg.k(), alg.m(), alg.dim_s()).map_err(io)?;
    match vy_state(&alg, &x, &theta) {
        Ok(st) => {
            writeln!(out, "calV: {}", fmt_vec(st.cal_v.as_slice())).map_err(io)?;
            writeln!(out, "calY: {}", fmt_vec(st.cal_y.as_slice())).map_err(io)?;
            writeln!(out, "f: {:.12}", st.f).map_err(io)?;
            writeln!(out, "F: {:.12}", st.big_f).map_err(io)?;
        }
        Err(_) => writeln!(out, "state: theta at infinity").map_err(io)?,
    }
    writeln!(out, "case: {case}").map_err(io)?;
    writeln!(out, "spectrum: {}", fmt_vec(&spec)).map_err(io)?;
    writeln!(out, "min on complement: {:.12}", rp.min_eigenvalue).map_err(io)?;
    writeln!(out, "|H grad b|: {:.3e}", rp.zero_residual).map_err(io)?;
    writeln!(out, "|grad b|: {:.12}", rp.gradient_norm).map_err(io)?;

    let mut ok = rp.zero_residual < verify::tol::ZERO_RESIDUAL;
    if case == HessianCase::General {
        match hessian::block_decomposition(&alg, &x, &theta) {
            Ok(d) => {
                let ids = hessian::block_identity_residuals(&d, verify::tol::EQ20);
                let det = hessian::det_b_from_blocks(&d, alg.k()).map_err(s_err)?;
                writeln!(out, "eq20 residual: {:.3e}", ids.eq20).map_err(io)?;
                writeln!(out, "eq21 residual: {:.3e}", ids.eq21).map_err(io)?;
                writeln!(out, "det B: {:.12e} (numeric {:.12e})", det.closed, det.numeric).map_err(io)?;
                ok &= ids.eq20 < verify::tol::EQ20 && ids.eq21 < verify::tol::EQ21;
            }
            Err(e) => writeln!(out, "block decomposition unavailable: {e}").map_err(io)?,
        }
        ok &= rp.min_eigenvalue > 0.0;
    } else {
        ok &= rp.min_eigenvalue >= 0.5 - verify::tol::SPECTRUM;
    }
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}

/// Model name of the Damek-Ricci space built from `(m, multiplicity)`.
pub fn model_name(m: usize, multiplicity: usize) -> &'static str {
    match (m, multiplicity) {
        (1, _) => "complex hyperbolic space",
        (3, _) => "quaternionic hyperbolic space",
        (7, 1) => "octonionic hyperbolic plane",
        _ => "non-symmetric Damek-Ricci space",
    }
}

fn cmd_algebras(out: &mut dyn Write) -> Result<i32, String> {
    for (m, mult) in [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (3, 1), (3, 2), (7, 1), (7, 2)] {
        let d = AlgebraDescriptor::new(m, mult);
        let alg = d.build().map_err(|e| e.to_string())?;
        writeln!(
            out,
            "({m},{mult}) k={}, m={}, dim S={}  {}",
            alg.k(),
            alg.m(),
            alg.dim_s(),
            model_name(m, mult)
        )
        .map_err(|e| e.to_string())?;
    }
    Ok(EXIT_PASS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let mut full = vec!["drkernel"];
        full.extend_from_slice(args);
        let code = run(full, &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn parsers() {
        assert_eq!(parse_algebra("3, 2").unwrap(), AlgebraDescriptor::new(3, 2));
        assert!(parse_algebra("3").is_err());
        let p = parse_point("V=1,2;Y=3;a=0.5").unwrap();
        assert_eq!(p.v.as_slice(), &[1.0, 2.0]);
        assert_eq!(p.a, 0.5);
        assert!(parse_point("V=1,2;a=1").is_err());
        assert_eq!(parse_boundary("infinity").unwrap(), BoundaryPoint::Infinity);
        assert!(matches!(parse_theta_mode("v=0,0;y=1").unwrap(), ThetaMode::Fixed(_)));
    }

    #[test]
    fn algebras_listing() {
        let (code, out, _) = call(&["algebras"]);
        assert_eq!(code, 0);
        assert!(out.contains("(1,1) k=2, m=1, dim S=4"));
        assert!(out.contains("(3,1) k=4, m=3, dim S=8"));
        assert!(out.contains("(7,1) k=8, m=7, dim S=16"));
    }

    #[test]
    fn spectrum_at_identity() {
        let (code, out, _) = call(&["spectrum", "--point", "V=0,0;Y=0;a=1"]);
        assert_eq!(code, 0);
        assert!(out.contains("case: inf"));
        let (code, out, _) = call(&["spectrum", "--point", "V=0,0;Y=0;a=1", "--theta", "v=0,0;y=0"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("case: VY0"));
        assert!(out.contains("spectrum: [0.0000000000, 0.5000000000, 0.5000000000, 1.0000000000]"));
    }

    #[test]
    fn bad_inputs_exit_2() {
        let (code, _, err) = call(&["verify", "--algebra", "9,1"]);
        assert_eq!(code, 2);
        assert!(err.contains("unsupported Clifford signature"));
        assert_eq!(call(&["verify", "--points", "0"]).0, 2);
        assert_eq!(call(&["spectrum", "--point", "V=1;Y=0;a=1"]).0, 2);
        assert_eq!(call(&["nonsense"]).0, 2);
    }
}
