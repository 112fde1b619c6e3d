//! Command-line front end. Every subcommand writes to any `Write`, so the
//! binary in `main.rs` only parses arguments and maps errors to exit codes.
//!
//! Configuration is resolved as defaults, then the optional TOML file, then
//! flags. Each artifact starts with `#` comment lines carrying the tool
//! version and the fully resolved configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gamma, kernel_k, KernelContext, DEFAULT_EPS, DEFAULT_INNER_RULE};
use crate::maxdist::{
    cdf_at, cdf_direct, decay_law, direct_sequence, discretize, expansion_from, ratio_settles, Discretization,
    MaxCdfExpansion, Settings,
};
use crate::mc::{compare, simulate_max_cdf, McSettings, Z_FLAG};
use crate::model::{
    gaussian_innovation, initial_law, logistic_innovation, seeded_rng, validate_params, ARParams, InitMode,
    InitialLaw, InnovationModel, RNG_NAME,
};
use crate::quadrature::DEFAULT_POINT_CAP;
use crate::spectral::{Spectrum, Weighting};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance of the spectral/direct identity check.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Tolerance of the kernel finite-difference check.
pub const KERNEL_FD_TOL: f64 = 1e-5;
/// Slack allowed when checking that `u_n` is nonincreasing.
pub const MONOTONE_TOL: f64 = 1e-9;
/// `|u_{2(n+1)} / u_{2n} - lambda_1|` below which the decay ratio has settled.
pub const SETTLE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    #[default]
    Gaussian,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitModeArg {
    GaussianStationary,
    EmpiricalBurnin,
}

impl From<InitModeArg> for InitMode {
    fn from(m: InitModeArg) -> Self {
        match m {
            InitModeArg::GaussianStationary => InitMode::GaussianStationary,
            InitModeArg::EmpiricalBurnin => InitMode::EmpiricalBurnin,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub r1: f64,
    pub r2: f64,
    /// Innovation standard deviation; the logistic scale is derived from it.
    pub sigma_e: f64,
    pub innovation: Innovation,
    /// `None` means gaussian-stationary for Gaussian innovations and
    /// empirical-burnin otherwise.
    pub init_mode: Option<InitModeArg>,
    pub burnin: usize,
    /// Simulated pairs behind an empirical initial law.
    pub law_reps: usize,
    #[serde(deserialize_with = "floats")]
    pub x: Vec<f64>,
    #[serde(deserialize_with = "counts")]
    pub n: Vec<usize>,
    pub m: usize,
    pub spectrum_count: Option<usize>,
    pub eps: f64,
    pub inner_rule: usize,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Directory for per-threshold JSON expansion dumps (`cdf` only).
    pub dump_expansion: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            r1: 0.5,
            r2: 0.3,
            sigma_e: 1.0,
            innovation: Innovation::Gaussian,
            init_mode: None,
            burnin: 1000,
            law_reps: 1_000_000,
            x: vec![3.0],
            n: (0..=20).collect(),
            m: 40,
            spectrum_count: None,
            eps: DEFAULT_EPS,
            inner_rule: DEFAULT_INNER_RULE,
            reps: 100_000,
            seed: 42,
            out: None,
            format: Format::Csv,
            dump_expansion: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
    Text(String),
}

fn floats<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    match OneOrMany::<f64>::deserialize(d)? {
        OneOrMany::One(v) => Ok(vec![v]),
        OneOrMany::Many(v) => Ok(v),
        OneOrMany::Text(s) => parse_x_list(&s).map_err(serde::de::Error::custom),
    }
}

fn counts<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    match OneOrMany::<usize>::deserialize(d)? {
        OneOrMany::One(v) => Ok(vec![v]),
        OneOrMany::Many(v) => Ok(v),
        OneOrMany::Text(s) => parse_n_list(&s).map_err(serde::de::Error::custom),
    }
}

/// `"1,2,5"`, `"0..20"` (exclusive), `"0..=20"`, or a mix such as `"0..=3,10"`.
pub fn parse_n_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (b, inclusive) = match b.strip_prefix('=') {
                Some(b) => (b, true),
                None => (b, false),
            };
            let a: usize = a.trim().parse().map_err(|_| format!("bad range start in {part:?}"))?;
            let b: usize = b.trim().parse().map_err(|_| format!("bad range end in {part:?}"))?;
            let end = if inclusive { b + 1 } else { b };
            out.extend(a..end);
        } else {
            out.push(part.parse().map_err(|_| format!("bad count {part:?}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty n list".into());
    }
    Ok(out)
}

pub fn parse_x_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let out: std::result::Result<Vec<f64>, String> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| format!("bad threshold {p:?}")))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err("empty x list".into());
    }
    Ok(out)
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with any of the keys below (snake_case).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub r1: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub r2: Option<f64>,
    #[arg(long = "sigma-e", global = true)]
    pub sigma_e: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub innovation: Option<Innovation>,
    #[arg(long = "init-mode", global = true, value_enum)]
    pub init_mode: Option<InitModeArg>,
    #[arg(long, global = true)]
    pub burnin: Option<usize>,
    #[arg(long = "law-reps", global = true)]
    pub law_reps: Option<usize>,
    /// Threshold or comma-separated list.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Count, comma-separated list or range such as `0..=20`.
    #[arg(long, global = true)]
    pub n: Option<String>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long = "spectrum-count", global = true)]
    pub spectrum_count: Option<usize>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long = "inner-rule", global = true)]
    pub inner_rule: Option<usize>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long = "dump-expansion", global = true)]
    pub dump_expansion: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "ar2max", version, about = "Distribution of the running maximum of a stationary AR(2) process")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Leading eigenvalues of the discretized operator.
    Spectrum,
    /// P(M_n <= x) for every requested n and x.
    Cdf,
    /// Kernel, spectral/direct and Monte Carlo checks.
    Validate,
    /// Geometric decay rate and its constants.
    Tail,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Defaults, then `o.config` if given, then the flags in `o`.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::from_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = o.$f.clone() { c.$f = v; } )* };
        }
        set!(r1, r2, sigma_e, innovation, m, eps, inner_rule, reps, seed, format, burnin, law_reps);
        if o.init_mode.is_some() {
            c.init_mode = o.init_mode;
        }
        if o.spectrum_count.is_some() {
            c.spectrum_count = o.spectrum_count;
        }
        if o.out.is_some() {
            c.out = o.out.clone();
        }
        if o.dump_expansion.is_some() {
            c.dump_expansion = o.dump_expansion.clone();
        }
        if let Some(x) = &o.x {
            c.x = parse_x_list(x).map_err(Error::Config)?;
        }
        if let Some(n) = &o.n {
            c.n = parse_n_list(n).map_err(Error::Config)?;
        }
        Ok(c)
    }

    pub fn params(&self) -> Result<ARParams> {
        validate_params(self.r1, self.r2, self.sigma_e)
    }

    /// The innovation law; a logistic law gets the scale that makes its
    /// standard deviation `sigma_e`.
    pub fn innovation_model(&self) -> Result<InnovationModel> {
        match self.innovation {
            Innovation::Gaussian => gaussian_innovation(self.sigma_e),
            Innovation::Logistic => logistic_innovation(self.sigma_e * 3f64.sqrt() / std::f64::consts::PI),
        }
    }

    pub fn mode(&self) -> InitMode {
        match (self.init_mode, self.innovation) {
            (Some(m), _) => m.into(),
            (None, Innovation::Gaussian) => InitMode::GaussianStationary,
            (None, Innovation::Logistic) => InitMode::EmpiricalBurnin,
        }
    }

    pub fn settings(&self) -> Settings {
        Settings {
            m: self.m,
            eps: self.eps,
            inner_rule: self.inner_rule,
            point_cap: DEFAULT_POINT_CAP,
            weighting: Weighting::Nystrom,
            spectrum_count: self.spectrum_count,
        }
    }

    /// Every input check that does not need any numerics.
    pub fn check(&self) -> Result<()> {
        self.params()?;
        self.innovation_model()?;
        if self.x.is_empty() || self.x.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("x must be a non-empty list of finite values".into()));
        }
        if self.n.is_empty() {
            return Err(Error::InvalidParameter("n list is empty".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidParameter(format!("m must be >= 2, got {}", self.m)));
        }
        if self.spectrum_count == Some(0) {
            return Err(Error::InvalidParameter("spectrum count must be >= 1".into()));
        }
        if self.mode() == InitMode::GaussianStationary && self.innovation != Innovation::Gaussian {
            return Err(Error::ModeMismatch("logistic".into()));
        }
        Ok(())
    }

    pub fn law(&self) -> Result<InitialLaw> {
        initial_law(&self.params()?, &self.innovation_model()?, self.mode(), self.burnin, self.law_reps, self.seed)
    }

    fn mc_settings(&self) -> McSettings {
        match self.mode() {
            InitMode::GaussianStationary => McSettings::gaussian(),
            InitMode::EmpiricalBurnin => McSettings::burnin(self.burnin),
        }
    }
}

/// Shared state of one run: validated model plus the initial law.
pub struct Session {
    pub config: RunConfig,
    pub params: ARParams,
    pub innovation: InnovationModel,
    pub law: InitialLaw,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.check()?;
        Ok(Session { params: config.params()?, innovation: config.innovation_model()?, law: config.law()?, config })
    }

    pub fn discretize(&self, x: f64) -> Result<Discretization> {
        discretize(&self.params, &self.innovation, &self.law, x, &self.config.settings())
    }

    /// Spectrum and expansion at `x` with the configured truncation. A count
    /// above the grid size is clipped, with a warning in the expansion.
    pub fn expansion(&self, disc: &Discretization) -> Result<(Spectrum, MaxCdfExpansion)> {
        let len = disc.grid().len();
        let request = self.config.spectrum_count.map_or(1, |j| j.min(len));
        let spectrum = disc.spectrum(request)?;
        let exp = expansion_from(disc, &spectrum, self.config.spectrum_count)?;
        Ok((spectrum, exp))
    }
}

/// Header comment lines: tool, version, generator and configuration.
fn provenance(config: &RunConfig) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| Error::Io(e.to_string()))?;
    Ok(format!("# ar2max {VERSION}\n# rng: {RNG_NAME}\n# config: {json}\n"))
}

fn json_document<T: Serialize>(config: &RunConfig, kind: &str, body: T) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        tool: &'static str,
        version: &'static str,
        rng: &'static str,
        command: &'a str,
        config: &'a RunConfig,
        result: T,
    }
    let doc = Doc { tool: "ar2max", version: VERSION, rng: RNG_NAME, command: kind, config, result: body };
    serde_json::to_string_pretty(&doc).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub x: f64,
    pub j: usize,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub residual: Option<f64>,
    pub condition: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub x: f64,
    pub multiplicity: usize,
    pub terms: usize,
    pub diagnostics: crate::spectral::SpectrumDiagnostics,
    pub warnings: Vec<String>,
}

pub fn cmd_spectrum<W: Write>(session: &Session, mut out: W) -> Result<()> {
    let cfg = &session.config;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &x in &cfg.x {
        let disc = session.discretize(x)?;
        let (spectrum, exp) = session.expansion(&disc)?;
        let terms = exp.terms();
        for j in 0..terms {
            let v = spectrum.values()[j];
            rows.push(SpectrumRow {
                x,
                j: j + 1,
                re: v.re,
                im: v.im,
                modulus: v.norm(),
                residual: spectrum.residual(j),
                condition: spectrum.condition(j),
            });
        }
        reports.push(SpectrumReport {
            x,
            multiplicity: exp.multiplicity,
            terms,
            diagnostics: exp.diagnostics.spectrum.clone(),
            warnings: exp.diagnostics.warnings.clone(),
        });
    }
    for w in reports.iter().flat_map(|r| &r.warnings) {
        eprintln!("warning: {w}");
    }
    match cfg.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body {
                eigenvalues: Vec<SpectrumRow>,
                reports: Vec<SpectrumReport>,
            }
            out.write_all(json_document(cfg, "spectrum", Body { eigenvalues: rows, reports })?.as_bytes())?;
        }
        Format::Csv => {
            out.write_all(provenance(cfg)?.as_bytes())?;
            for r in &reports {
                let json = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
                writeln!(out, "# diagnostics: {json}")?;
            }
            writeln!(out, "x,j,re,im,abs,residual,condition")?;
            for r in &rows {
                let res = r.residual.map(|v| format!("{v:e}")).unwrap_or_default();
                writeln!(out, "{},{},{:e},{:e},{:e},{},{:e}", r.x, r.j, r.re, r.im, r.modulus, res, r.condition)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CdfRow {
    pub n: usize,
    pub x: f64,
    pub u_raw: f64,
    pub u_clamped: f64,
}

pub fn cdf_rows(session: &Session) -> Result<(Vec<CdfRow>, Vec<MaxCdfExpansion>)> {
    let mut rows = Vec::new();
    let mut exps = Vec::new();
    for &x in &session.config.x {
        let disc = session.discretize(x)?;
        let (_, exp) = session.expansion(&disc)?;
        for &n in &session.config.n {
            let v = cdf_at(&exp, n)?;
            rows.push(CdfRow { n, x, u_raw: v.raw, u_clamped: v.clamped });
        }
        exps.push(exp);
    }
    Ok((rows, exps))
}

pub fn cmd_cdf<W: Write>(session: &Session, mut out: W) -> Result<()> {
    let cfg = &session.config;
    let (rows, exps) = cdf_rows(session)?;
    for w in exps.iter().flat_map(|e| &e.diagnostics.warnings) {
        eprintln!("warning: {w}");
    }
    if let Some(dir) = &cfg.dump_expansion {
        fs::create_dir_all(dir)?;
        for e in &exps {
            let doc = json_document(cfg, "expansion", e)?;
            fs::write(dir.join(format!("expansion_x{}.json", e.x)), doc)?;
        }
    }
    match cfg.format {
        Format::Json => out.write_all(json_document(cfg, "cdf", &rows)?.as_bytes())?,
        Format::Csv => {
            out.write_all(provenance(cfg)?.as_bytes())?;
            writeln!(out, "n,x,u_raw,u_clamped")?;
            for r in &rows {
                writeln!(out, "{},{},{:.15e},{:.15e}", r.n, r.x, r.u_raw, r.u_clamped)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub x: Option<f64>,
    pub status: Status,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, x: Option<f64>, measured: f64, tolerance: f64, detail: String) -> Self {
        let status = if measured <= tolerance { Status::Pass } else { Status::Fail };
        Check { name: name.into(), x, status, measured, tolerance, detail }
    }

    fn failed(name: &str, x: Option<f64>, tolerance: f64, detail: String) -> Self {
        Check { name: name.into(), x, status: Status::Fail, measured: f64::NAN, tolerance, detail }
    }
}

/// `max |K + d gamma / d z1| / (1 + |K|)` over `count` random points, with
/// central differences of step `1e-4`.
pub fn kernel_fd_defect(ctx: &KernelContext, count: usize, seed: u64) -> f64 {
    use rand::RngExt;
    let mut rng = seeded_rng(seed, 0);
    let sd = crate::model::stationary_moments(ctx.params()).sd_x();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..count {
        let mut p = || ctx.x() + sd * (rng.random::<f64>() * 5.0 - 4.0);
        let y = [p(), p()];
        let z = [p(), p()];
        let k = kernel_k(y, z, ctx);
        let d = (gamma(y, [z[0], z[1] + h], ctx) - gamma(y, [z[0], z[1] - h], ctx)) / (2.0 * h);
        worst = worst.max((k + d).abs() / (1.0 + k.abs()));
    }
    worst
}

/// Largest `|cdf_at(n) - cdf_direct(n)|` for `n <= n_max` with every pair
/// of the spectrum retained.
pub fn full_identity_defect(disc: &Discretization, n_max: usize) -> Result<f64> {
    let len = disc.grid().len();
    let spectrum = disc.spectrum(len)?;
    let exp = expansion_from(disc, &spectrum, Some(len))?;
    let direct = direct_sequence(disc, n_max);
    let mut worst = 0.0f64;
    for (n, d) in direct.iter().enumerate() {
        worst = worst.max((cdf_at(&exp, n)?.raw - d).abs());
    }
    Ok(worst)
}

/// Largest increase `u_{n+1} - u_n` for `n < n_max`.
pub fn monotone_defect(exp: &MaxCdfExpansion, n_max: usize) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    let mut prev = cdf_at(exp, 0)?.raw;
    for n in 1..=n_max {
        let next = cdf_at(exp, n)?.raw;
        worst = worst.max(next - prev);
        prev = next;
    }
    Ok(worst.max(0.0))
}

pub fn validation_checks(session: &Session) -> Result<Vec<Check>> {
    let cfg = &session.config;
    let mut checks = Vec::new();
    for &x in &cfg.x {
        let disc = session.discretize(x)?;
        let fd = kernel_fd_defect(disc.context(), 200, cfg.seed);
        checks.push(Check::new("kernel_fd", Some(x), fd, KERNEL_FD_TOL, "200 random points, h = 1e-4".into()));

        checks.push(match full_identity_defect(&disc, 20) {
            Ok(d) => Check::new("spectral_direct", Some(x), d, IDENTITY_TOL, "full spectrum, n = 0..20".into()),
            Err(e) if e.is_numerical() => Check::failed("spectral_direct", Some(x), IDENTITY_TOL, e.to_string()),
            Err(e) => return Err(e),
        });

        let exp = match session.expansion(&disc) {
            Ok((_, exp)) => exp,
            Err(e) if e.is_numerical() => {
                checks.push(Check::failed("expansion", Some(x), 0.0, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let mono = monotone_defect(&exp, 200)?;
        checks.push(Check::new("monotone_n", Some(x), mono, MONOTONE_TOL, format!("{} terms, n <= 200", exp.terms())));

        if cfg.reps == 0 {
            checks.push(Check {
                name: "monte_carlo".into(),
                x: Some(x),
                status: Status::Skipped,
                measured: f64::NAN,
                tolerance: Z_FLAG,
                detail: "reps = 0".into(),
            });
            continue;
        }
        let est = simulate_max_cdf(
            &session.params,
            &session.innovation,
            cfg.mc_settings(),
            &cfg.n,
            &[x],
            cfg.reps,
            cfg.seed,
        )?;
        let cmp = compare(&exp, &est)?;
        let worst = cmp.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
        let flagged: Vec<String> = cmp.iter().filter(|c| c.flagged).map(|c| format!("n={} z={:.2}", c.n, c.z)).collect();
        let detail = if flagged.is_empty() { format!("{} cells", cmp.len()) } else { flagged.join("; ") };
        checks.push(Check::new("monte_carlo", Some(x), worst, Z_FLAG, detail));
    }
    Ok(checks)
}

/// Writes the report and returns whether every check passed or was skipped.
pub fn cmd_validate<W: Write>(session: &Session, mut out: W) -> Result<bool> {
    let cfg = &session.config;
    let checks = validation_checks(session)?;
    match cfg.format {
        Format::Json => out.write_all(json_document(cfg, "validate", &checks)?.as_bytes())?,
        Format::Csv => {
            out.write_all(provenance(cfg)?.as_bytes())?;
            writeln!(out, "check,x,status,measured,tolerance,detail")?;
            for c in &checks {
                let status = match c.status {
                    Status::Pass => "pass",
                    Status::Fail => "fail",
                    Status::Skipped => "skipped",
                };
                let x = c.x.map(|v| v.to_string()).unwrap_or_default();
                let detail = c.detail.replace('"', "\"\"");
                writeln!(out, "{},{x},{status},{:e},{:e},\"{detail}\"", c.name, c.measured, c.tolerance)?;
            }
        }
    }
    Ok(checks.iter().all(|c| c.status != Status::Fail))
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub x: f64,
    pub lambda1: f64,
    pub multiplicity: usize,
    pub b_h: f64,
    pub b_g1: f64,
    /// First `n` from which the even-step ratio stays within
    /// [`SETTLE_TOL`] of `lambda_1` up to `n = 200`.
    pub settle_n: Option<usize>,
}

pub fn cmd_tail<W: Write>(session: &Session, mut out: W) -> Result<()> {
    let cfg = &session.config;
    let mut rows = Vec::new();
    for &x in &cfg.x {
        let disc = session.discretize(x)?;
        let (_, exp) = session.expansion(&disc)?;
        let law = decay_law(&exp)?;
        let settle_n = ratio_settles(&exp, SETTLE_TOL, 200)?;
        rows.push(TailRow { x, lambda1: law.lambda1, multiplicity: law.multiplicity, b_h: law.b_h, b_g1: law.b_g1, settle_n });
    }
    match cfg.format {
        Format::Json => out.write_all(json_document(cfg, "tail", &rows)?.as_bytes())?,
        Format::Csv => {
            out.write_all(provenance(cfg)?.as_bytes())?;
            writeln!(out, "x,lambda1,multiplicity,b_h,b_g1,settle_n")?;
            for r in &rows {
                let settle = r.settle_n.map(|v| v.to_string()).unwrap_or_default();
                writeln!(out, "{},{:.15e},{},{:.15e},{:.15e},{settle}", r.x, r.lambda1, r.multiplicity, r.b_h, r.b_g1)?;
            }
        }
    }
    Ok(())
}

/// Exit code for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = RunConfig::resolve(&cli.overrides).and_then(|cfg| {
        let session = Session::new(cfg)?;
        let mut buf = Vec::new();
        let ok = match cli.command {
            Command::Spectrum => cmd_spectrum(&session, &mut buf).map(|_| true),
            Command::Cdf => cmd_cdf(&session, &mut buf).map(|_| true),
            Command::Validate => cmd_validate(&session, &mut buf),
            Command::Tail => cmd_tail(&session, &mut buf).map(|_| true),
        }?;
        match &session.config.out {
            Some(p) => fs::write(p, &buf)?,
            None => std::io::stdout().write_all(&buf)?,
        }
        Ok(ok)
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// `cdf_direct` at every requested `n` for one threshold, for cross-checks.
pub fn direct_rows(session: &Session, x: f64) -> Result<Vec<CdfRow>> {
    let disc = session.discretize(x)?;
    Ok(session
        .config
        .n
        .iter()
        .map(|&n| {
            let u = cdf_direct(&disc, n);
            CdfRow { n, x, u_raw: u, u_clamped: u.clamp(0.0, 1.0) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_n_list("0..=3,10").unwrap(), vec![0, 1, 2, 3, 10]);
        assert_eq!(parse_n_list("2..4").unwrap(), vec![2, 3]);
        assert!(parse_n_list("a").is_err());
        assert!(parse_n_list("").is_err());
        assert_eq!(parse_x_list("1, 2.5").unwrap(), vec![1.0, 2.5]);
    }

    #[test]
    fn toml_and_flags_layer() {
        let mut c = RunConfig::from_toml("r1 = 0.4\nx = [1.0, 2.0]\nn = \"0..=2\"\ninnovation = \"logistic\"").unwrap();
        assert_eq!(c.r1, 0.4);
        assert_eq!(c.x, vec![1.0, 2.0]);
        assert_eq!(c.n, vec![0, 1, 2]);
        assert_eq!(c.mode(), InitMode::EmpiricalBurnin);
        c.n = vec![5];
        assert!(RunConfig::from_toml("bogus = 1").is_err());

        let o = Overrides { r1: Some(0.45), n: Some("1,2".into()), ..Default::default() };
        let r = RunConfig::resolve(&o).unwrap();
        assert_eq!(r.r1, 0.45);
        assert_eq!(r.n, vec![1, 2]);
        assert_eq!(r.r2, 0.3);
    }

    #[test]
    fn bad_inputs_map_to_exit_two() {
        let c = RunConfig { r1: -0.5, ..RunConfig::default() };
        let e = c.check().unwrap_err();
        assert!(matches!(e, Error::SignConditionViolated { .. }));
        assert_eq!(exit_code(&e), 2);
        let c = RunConfig {
            innovation: Innovation::Logistic,
            init_mode: Some(InitModeArg::GaussianStationary),
            ..RunConfig::default()
        };
        assert_eq!(exit_code(&c.check().unwrap_err()), 2);
        assert_eq!(exit_code(&Error::ComplexLeadingEigenvalue { re: 0.1, im: 0.2 }), 3);
    }

    #[test]
    fn logistic_scale_matches_sigma() {
        let c = RunConfig { innovation: Innovation::Logistic, sigma_e: 2.0, ..RunConfig::default() };
        assert!((c.innovation_model().unwrap().std_dev() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_grid_cdf_csv() {
        let cfg = RunConfig { m: 6, n: (0..=5).collect(), x: vec![2.0, 3.0], ..RunConfig::default() };
        let session = Session::new(cfg).unwrap();
        let mut buf = Vec::new();
        cmd_cdf(&session, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body[0], "n,x,u_raw,u_clamped");
        assert_eq!(body.len(), 1 + 12);
        assert!(body[1].starts_with("0,2,1.0"));
        assert!(text.starts_with("# ar2max "));
    }
}
