//! Command-line front end. Every subcommand resolves a flat `key = value`
//! configuration (defaults, then the `--config` file, then flags), echoes
//! it, and runs inside a rayon pool bounded by `--threads`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dynamics::{classify, Verdict};
use crate::error::{Error, Result};
use crate::hyperbolic::{
    adapted_expansion, build_sample_with, distortion_report, fit_expansion, format_report, order_k, shadowing_rate,
    track_motion, x_function, HyperbolicConfig,
};
use crate::lattice::{sph_dist, Lattice, LatticeKind, Point, ToleranceConfig, C64};
use crate::misiurewicz::{
    covering_steps, critical_orbits_hit_together, density_csv, density_scan, find_prepole_params_multi, roots_csv,
    PrepoleEquation, Region,
};
use crate::scan::{render_dynamical_plane, render_parameter_plane, write_atomic, write_ppm, ScanGrid};

/// Every key accepted in a config file.
pub const KNOWN_KEYS: &[&str] = &[
    "a_tilde",
    "budget",
    "center_im",
    "center_re",
    "csv",
    "d",
    "delta",
    "eval_tol",
    "grid",
    "height",
    "im_max",
    "im_min",
    "jk_max",
    "k_samples",
    "kind",
    "lambda_im",
    "lambda_re",
    "m",
    "max_lattice_radius",
    "max_n",
    "motion_offset",
    "n_max",
    "n_range",
    "n_steps",
    "newton_tol",
    "out",
    "pairs",
    "pole_eps",
    "radii",
    "radius",
    "re_max",
    "re_min",
    "rho",
    "samples",
    "seed",
    "threads",
    "width",
];

/// Parses `a+bi`, `a-bi`, `a`, `bi`, `i` and `-i` with optional leading sign
/// and exponents. Whitespace, repeated signs and trailing garbage are
/// rejected.
pub fn parse_complex(s: &str) -> Result<C64> {
    let bad = || Error::InvalidConfig(format!("cannot parse complex number '{s}' (expected a+bi)"));
    let real = |t: &str| -> Result<f64> {
        if t.is_empty() || t.starts_with("+-") || t.starts_with("-+") || t.contains(char::is_whitespace) {
            return Err(bad());
        }
        let v: f64 = t.parse().map_err(|_| bad())?;
        v.is_finite().then_some(v).ok_or_else(bad)
    };
    let coeff = |t: &str| -> Result<f64> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => real(t),
        }
    };
    let Some(body) = s.strip_suffix('i') else {
        return Ok(C64::new(real(s)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&p| matches!(bytes[p], b'+' | b'-') && !matches!(bytes[p - 1], b'e' | b'E'));
    match split {
        Some(p) => Ok(C64::new(real(&body[..p])?, coeff(&body[p..])?)),
        None => Ok(C64::new(0.0, coeff(body)?)),
    }
}

/// Formats a complex number so that [`parse_complex`] reads it back exactly.
pub fn format_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

/// Resolved `key = value` map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses a flat config text. Blank lines and `#` comments are skipped;
    /// unknown keys and malformed lines are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected 'key = value'", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if v.is_empty() {
                return Err(Error::InvalidConfig(format!("line {}: empty value for '{k}'", no + 1)));
            }
            cfg.set(k, v.to_string())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: String) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!("unknown config key '{key}'")));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    fn set_default(&mut self, key: &str, value: &str) {
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: RunConfig) {
        self.values.extend(other.values);
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidConfig(format!("missing required setting '{key}'")))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get_str(key)?;
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("invalid value '{raw}' for '{key}'")))
    }

    fn get_f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.get(key)?;
        v.is_finite()
            .then_some(v)
            .ok_or_else(|| Error::InvalidConfig(format!("'{key}' must be finite")))
    }

    fn complex(&self, re: &str, im: &str) -> Result<C64> {
        Ok(C64::new(self.get_f64(re)?, self.get_f64(im)?))
    }

    fn tolerances(&self) -> Result<ToleranceConfig> {
        let cfg = ToleranceConfig {
            eval_tol: self.get_f64("eval_tol")?,
            pole_eps: self.get_f64("pole_eps")?,
            newton_tol: self.get_f64("newton_tol")?,
            max_lattice_radius: self.get("max_lattice_radius")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn region(&self) -> Result<Region> {
        let r = Region::new(
            self.get_f64("re_min")?,
            self.get_f64("re_max")?,
            self.get_f64("im_min")?,
            self.get_f64("im_max")?,
        );
        r.validate()?;
        Ok(r)
    }

    fn scan_grid(&self) -> Result<ScanGrid> {
        ScanGrid::from_bounds(
            self.get_f64("re_min")?,
            self.get_f64("re_max")?,
            self.get_f64("im_min")?,
            self.get_f64("im_max")?,
            self.get("width")?,
            self.get("height")?,
        )
    }

    /// One `key = value` line per setting, sorted by key.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Parser)]
#[command(name = "wpdyn", version, about = "Dynamics of Weierstrass elliptic functions on square and triangular lattices")]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Lattice shape: square or triangular.
    #[arg(long, global = true)]
    kind: Option<LatticeKind>,
    #[arg(long, global = true)]
    eval_tol: Option<f64>,
    #[arg(long, global = true)]
    pole_eps: Option<f64>,
    #[arg(long, global = true)]
    newton_tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify the critical orbits of one parameter.
    Classify(ClassifyArgs),
    /// Solve prepole equations over a parameter region.
    FindPrepoles(FindArgs),
    /// Check expansion, holomorphic motion and distortion at a parameter.
    Verify(VerifyArgs),
    /// Render the parameter-plane classification map.
    RenderParam(RenderParamArgs),
    /// Render pole-hit times in the dynamical plane.
    RenderDyn(RenderDynArgs),
    /// Estimate the failing fraction of the orbit check near a parameter.
    Density(DensityArgs),
    /// Count the steps a disc needs to cover the critical and infinity balls.
    Covering(CoveringArgs),
}

#[derive(Debug, Args)]
struct LambdaArg {
    /// Parameter as a+bi.
    #[arg(long, visible_alias = "lambda0", allow_hyphen_values = true)]
    lambda: Option<String>,
}

#[derive(Debug, Args)]
struct RegionArgs {
    #[arg(long, allow_hyphen_values = true)]
    re_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    re_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_max: Option<f64>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    lambda: LambdaArg,
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Debug, Args)]
struct FindArgs {
    #[command(flatten)]
    region: RegionArgs,
    /// Seeding grid per side (at least 8).
    #[arg(long)]
    grid: Option<usize>,
    /// Largest orbit step n.
    #[arg(long)]
    n_max: Option<usize>,
    /// Largest |j|, |k| of the target pole.
    #[arg(long)]
    jk_max: Option<i64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    lambda: LambdaArg,
    #[arg(long)]
    delta: Option<f64>,
    /// Sample length M.
    #[arg(long, short = 'm')]
    m: Option<usize>,
    #[arg(long)]
    n_range: Option<usize>,
    /// Circle radius for the order of vanishing.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    k_samples: Option<usize>,
    /// Largest distortion radius; r/2 and r/4 are also reported.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
    /// Parameter offset at which the motion is tracked.
    #[arg(long)]
    motion_offset: Option<f64>,
    #[arg(long)]
    a_tilde: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
}

#[derive(Debug, Args)]
struct ImageArgs {
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    /// Output PPM path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderParamArgs {
    #[command(flatten)]
    image: ImageArgs,
    /// Output classification CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderDynArgs {
    #[command(flatten)]
    lambda: LambdaArg,
    #[command(flatten)]
    image: ImageArgs,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    lambda: LambdaArg,
    /// Comma-separated, strictly decreasing radii.
    #[arg(long)]
    radii: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, short = 'm')]
    m: Option<usize>,
    /// Required RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CoveringArgs {
    #[command(flatten)]
    lambda: LambdaArg,
    /// Disc centre as a+bi.
    #[arg(long, allow_hyphen_values = true)]
    center: Option<String>,
    /// Disc radius.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
}

/// Collects flag overrides as config entries.
#[derive(Default)]
struct Overrides(RunConfig);

impl Overrides {
    fn put<T: ToString>(&mut self, key: &str, v: &Option<T>) {
        if let Some(v) = v {
            self.0.values.insert(key.to_string(), v.to_string());
        }
    }

    fn path(&mut self, key: &str, v: &Option<PathBuf>) {
        self.put(key, &v.as_ref().map(|p| p.display().to_string()));
    }

    fn complex(&mut self, re: &str, im: &str, v: &Option<String>) -> Result<()> {
        if let Some(s) = v {
            let z = parse_complex(s)?;
            self.put(re, &Some(z.re));
            self.put(im, &Some(z.im));
        }
        Ok(())
    }

    fn region(&mut self, r: &RegionArgs) {
        self.put("re_min", &r.re_min);
        self.put("re_max", &r.re_max);
        self.put("im_min", &r.im_min);
        self.put("im_max", &r.im_max);
    }

    fn image(&mut self, a: &ImageArgs) {
        self.region(&a.region);
        self.put("width", &a.width);
        self.put("height", &a.height);
        self.put("budget", &a.budget);
        self.path("out", &a.out);
    }
}

fn defaults(command: &Command) -> RunConfig {
    let tol = ToleranceConfig::default();
    let mut d = RunConfig::default();
    d.set_default("kind", "square");
    d.set_default("threads", "0");
    d.set_default("eval_tol", &format!("{:e}", tol.eval_tol));
    d.set_default("pole_eps", &format!("{:e}", tol.pole_eps));
    d.set_default("newton_tol", &format!("{:e}", tol.newton_tol));
    d.set_default("max_lattice_radius", &tol.max_lattice_radius.to_string());
    let demo_region = |d: &mut RunConfig| {
        for (k, v) in [("re_min", "0.5"), ("re_max", "3"), ("im_min", "0.5"), ("im_max", "3")] {
            d.set_default(k, v);
        }
    };
    match command {
        Command::Classify(_) => d.set_default("budget", "2000"),
        Command::FindPrepoles(_) => {
            demo_region(&mut d);
            d.set_default("grid", "256");
            d.set_default("n_max", "2");
            d.set_default("jk_max", "1");
            d.set_default("out", "prepoles.csv");
        }
        Command::Verify(_) => {
            let h = HyperbolicConfig::default();
            d.set_default("delta", "0.05");
            d.set_default("m", "200");
            d.set_default("n_range", "12");
            d.set_default("rho", "1e-4");
            d.set_default("k_samples", "64");
            d.set_default("radius", "1e-6");
            d.set_default("pairs", "20");
            d.set_default("motion_offset", "1e-5");
            d.set_default("a_tilde", &h.a_tilde.to_string());
            d.set_default("n_steps", &h.n_steps.to_string());
        }
        Command::RenderParam(_) => {
            demo_region(&mut d);
            d.set_default("width", "64");
            d.set_default("height", "64");
            d.set_default("budget", "500");
            d.set_default("out", "param.ppm");
            d.set_default("csv", "param.csv");
        }
        Command::RenderDyn(_) => {
            for (k, v) in [("re_min", "-2"), ("re_max", "2"), ("im_min", "-2"), ("im_max", "2")] {
                d.set_default(k, v);
            }
            d.set_default("width", "256");
            d.set_default("height", "256");
            d.set_default("budget", "50");
            d.set_default("out", "dyn.ppm");
        }
        Command::Density(_) => {
            d.set_default("radii", "1e-3,1e-4");
            d.set_default("samples", "2000");
            d.set_default("delta", "0.05");
            d.set_default("m", "200");
            d.set_default("out", "density.csv");
        }
        Command::Covering(_) => {
            d.set_default("delta", "0.05");
            d.set_default("max_n", "50");
            d.set_default("grid", "128");
        }
    }
    d
}

fn overrides(cli: &Cli) -> Result<RunConfig> {
    let mut o = Overrides::default();
    o.put("threads", &cli.threads);
    o.put("kind", &cli.kind);
    o.put("eval_tol", &cli.eval_tol);
    o.put("pole_eps", &cli.pole_eps);
    o.put("newton_tol", &cli.newton_tol);
    match &cli.command {
        Command::Classify(a) => {
            o.complex("lambda_re", "lambda_im", &a.lambda.lambda)?;
            o.put("budget", &a.budget);
        }
        Command::FindPrepoles(a) => {
            o.region(&a.region);
            o.put("grid", &a.grid);
            o.put("n_max", &a.n_max);
            o.put("jk_max", &a.jk_max);
            o.path("out", &a.out);
        }
        Command::Verify(a) => {
            o.complex("lambda_re", "lambda_im", &a.lambda.lambda)?;
            o.put("delta", &a.delta);
            o.put("m", &a.m);
            o.put("n_range", &a.n_range);
            o.put("rho", &a.rho);
            o.put("k_samples", &a.k_samples);
            o.put("radius", &a.radius);
            o.put("pairs", &a.pairs);
            o.put("motion_offset", &a.motion_offset);
            o.put("a_tilde", &a.a_tilde);
            o.put("n_steps", &a.n_steps);
        }
        Command::RenderParam(a) => {
            o.image(&a.image);
            o.path("csv", &a.csv);
        }
        Command::RenderDyn(a) => {
            o.complex("lambda_re", "lambda_im", &a.lambda.lambda)?;
            o.image(&a.image);
        }
        Command::Density(a) => {
            o.complex("lambda_re", "lambda_im", &a.lambda.lambda)?;
            o.put("radii", &a.radii);
            o.put("samples", &a.samples);
            o.put("delta", &a.delta);
            o.put("m", &a.m);
            o.put("seed", &a.seed);
            o.path("out", &a.out);
        }
        Command::Covering(a) => {
            o.complex("lambda_re", "lambda_im", &a.lambda.lambda)?;
            o.complex("center_re", "center_im", &a.center)?;
            o.put("d", &a.d);
            o.put("delta", &a.delta);
            o.put("max_n", &a.max_n);
            o.put("grid", &a.grid);
        }
    }
    Ok(o.0)
}

/// Outcome of a subcommand: exit code plus report text.
struct Finished {
    code: i32,
    report: String,
}

impl Finished {
    fn ok(report: String) -> Self {
        Finished { code: 0, report }
    }
}

fn lambda(cfg: &RunConfig) -> Result<C64> {
    cfg.complex("lambda_re", "lambda_im")
}

fn cmd_classify(cfg: &RunConfig) -> Result<Finished> {
    let kind: LatticeKind = cfg.get("kind")?;
    let verdict = classify(kind, lambda(cfg)?, cfg.get("budget")?, &cfg.tolerances()?)?;
    let line = match &verdict {
        Verdict::AttractingCycles { count, cycle } => format!(
            "AttractingCycles count={count} period={} point={} multiplier={} |multiplier|={:.6e}",
            cycle.period,
            format_complex(cycle.point),
            format_complex(cycle.multiplier),
            cycle.multiplier.norm()
        ),
        Verdict::AllCriticalPrepole { steps } => format!("AllCriticalPrepole steps={steps:?}"),
        Verdict::Indeterminate { iterations_used } => format!("Indeterminate iterations_used={iterations_used}"),
    };
    let code = if matches!(verdict, Verdict::Indeterminate { .. }) { 2 } else { 0 };
    Ok(Finished {
        code,
        report: line + "\n",
    })
}

fn cmd_find_prepoles(cfg: &RunConfig) -> Result<Finished> {
    let kind: LatticeKind = cfg.get("kind")?;
    let tol = cfg.tolerances()?;
    let eqs = PrepoleEquation::family(cfg.get("n_max")?, cfg.get("jk_max")?);
    let roots = find_prepole_params_multi(kind, &eqs, &cfg.region()?, cfg.get("grid")?, &tol)?;
    let out = PathBuf::from(cfg.get_str("out")?);
    write_atomic(&out, roots_csv(&roots).as_bytes())?;
    let mut report = format!("roots = {}\n", roots.len());
    if kind == LatticeKind::Triangular {
        let mut apart = 0;
        for r in &roots {
            if !critical_orbits_hit_together(kind, r, &tol)? {
                apart += 1;
            }
        }
        report += &format!("simultaneity_failures = {apart}\n");
    }
    report += &format!("wrote {}\n", out.display());
    Ok(Finished::ok(report))
}

fn verdict_line(name: &str, ok: bool) -> String {
    format!("check {name} = {}\n", if ok { "ok" } else { "FAILED" })
}

fn cmd_verify(cfg: &RunConfig) -> Result<Finished> {
    let kind: LatticeKind = cfg.get("kind")?;
    let tol = cfg.tolerances()?;
    let l0 = lambda(cfg)?;
    let delta = cfg.get_f64("delta")?;
    let m: usize = cfg.get("m")?;
    if m == 0 {
        let lat = Lattice::new(kind, l0, &tol)?;
        let e = lat.crit_values[0];
        let report = format!(
            "lambda0 = {l0}\npoints = 1\npoint e1 = {}\nmin_crit_dist = {:.6}\nmin_inf_dist = {:.6}\ndegenerate sample: no orbit steps to verify\n",
            format_complex(e),
            lat.crit_distance(e),
            sph_dist(e, Point::Infinity),
        );
        return Ok(Finished::ok(report));
    }
    let hcfg = HyperbolicConfig {
        a_tilde: cfg.get_f64("a_tilde")?,
        n_steps: cfg.get("n_steps")?,
        ..HyperbolicConfig::default()
    };
    let sample = match build_sample_with(kind, l0, m, delta, &tol, &hcfg) {
        Ok(s) => s,
        Err(e @ (Error::SeparationViolated { .. } | Error::NoExpansion { .. })) => {
            return Ok(Finished {
                code: 2,
                report: format!("sample rejected: {e}\n"),
            });
        }
        Err(e) => return Err(e),
    };

    let mut checks = String::new();
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool| {
        all_ok &= ok;
        checks += &verdict_line(name, ok);
    };

    let expansion = fit_expansion(&sample, cfg.get("n_range")?)?;
    check("expansion_envelope", expansion.envelope_holds() && expansion.a > 1.0);
    let adapted = adapted_expansion(&sample)?;
    check("adapted_metric_bound", adapted.min_ratio >= adapted.bound && adapted.bound > 1.0);

    let e = sample.points[0];
    let identity = track_motion(&sample, e, l0, hcfg.n_steps, &tol).map(|f| (f.h_value - e).norm() <= tol.eval_tol && f.conj_residual < tol.eval_tol);
    check("identity_motion", matches!(identity, Ok(true)));

    let l1 = l0 + cfg.get_f64("motion_offset")?;
    let mut residual: f64 = 0.0;
    let mut shadow_ok = true;
    for &z in &sample.points {
        match track_motion(&sample, z, l1, hcfg.n_steps, &tol) {
            Ok(f) => residual = residual.max(f.conj_residual),
            Err(_) => shadow_ok = false,
        }
    }
    check("conjugacy_residual", shadow_ok && residual < 10.0 * tol.newton_tol);
    let rate = shadowing_rate(&sample, e, l1, &tol);
    check("shadowing_rate", matches!(rate, Ok(r) if r > 1.0));
    let x0 = x_function(&sample, l0, &tol).map(|x| x.norm());
    check("x_vanishes_at_base", matches!(x0, Ok(x) if x <= tol.eval_tol));

    let rho = cfg.get_f64("rho")?;
    let ks: usize = cfg.get("k_samples")?;
    let k = order_k(&sample, rho, ks, &tol);
    let k2 = order_k(&sample, rho, 2 * ks, &tol);
    let k_val = k.as_ref().ok().copied();
    check("order_k", matches!((&k, &k2), (Ok(a), Ok(b)) if *a >= 1 && a == b));

    let r = cfg.get_f64("radius")?;
    let pairs: usize = cfg.get("pairs")?;
    let mut distortion = Vec::new();
    let mut notes = String::new();
    for rr in [r, r / 2.0, r / 4.0] {
        match distortion_report(&sample, rr, pairs, &tol) {
            Ok(d) => distortion.push(d),
            Err(e) => notes += &format!("distortion r={rr:e}: {e}\n"),
        }
    }

    let mut report = format_report(&sample, &expansion, &adapted, residual, k_val, &distortion);
    report += &notes;
    if let Ok(rate) = rate {
        report += &format!("shadowing_rate = {rate:.6}\n");
    }
    report += &checks;
    report += if all_ok { "all invariants hold\n" } else { "some invariants failed\n" };
    Ok(Finished {
        code: if all_ok { 0 } else { 2 },
        report,
    })
}

fn cmd_render_param(cfg: &RunConfig) -> Result<Finished> {
    let kind: LatticeKind = cfg.get("kind")?;
    let grid = cfg.scan_grid()?;
    let (image, csv) = render_parameter_plane(kind, &grid, cfg.get("budget")?, &cfg.tolerances()?);
    let out = PathBuf::from(cfg.get_str("out")?);
    let csv_path = PathBuf::from(cfg.get_str("csv")?);
    write_ppm(&image, &out)?;
    write_atomic(&csv_path, csv.as_bytes())?;
    Ok(Finished::ok(format!(
        "rendered {}x{}\nwrote {}\nwrote {}\n",
        image.width,
        image.height,
        out.display(),
        csv_path.display()
    )))
}

fn cmd_render_dyn(cfg: &RunConfig) -> Result<Finished> {
    let kind: LatticeKind = cfg.get("kind")?;
    let grid = cfg.scan_grid()?;
    let image = render_dynamical_plane(kind, lambda(cfg)?, &grid, cfg.get("budget")?, &cfg.tolerances()?)?;
    let out = PathBuf::from(cfg.get_str("out")?);
    write_ppm(&image, &out)?;
    Ok(Finished::ok(format!(
        "rendered {}x{}\nwrote {}\n",
        image.width,
        image.height,
        out.display()
    )))
}

fn parse_radii(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("invalid radius '{t}'")))
        })
        .collect()
}

fn cmd_density(cfg: &RunConfig) -> Result<Finished> {
    let kind: LatticeKind = cfg.get("kind")?;
    let seed: u64 = cfg
        .get("seed")
        .map_err(|_| Error::InvalidConfig("density requires an explicit --seed".into()))?;
    let rows = density_scan(
        kind,
        lambda(cfg)?,
        &parse_radii(cfg.get_str("radii")?)?,
        cfg.get("samples")?,
        cfg.get_f64("delta")?,
        cfg.get("m")?,
        seed,
        &cfg.tolerances()?,
    )?;
    let out = PathBuf::from(cfg.get_str("out")?);
    write_atomic(&out, density_csv(&rows).as_bytes())?;
    let mut report: String = rows
        .iter()
        .map(|r| {
            format!(
                "radius={:e} n_samples={} fail_fraction={:.6}\n",
                r.radius, r.n_samples, r.fail_fraction
            )
        })
        .collect();
    report += &format!("wrote {}\n", out.display());
    Ok(Finished::ok(report))
}

fn cmd_covering(cfg: &RunConfig) -> Result<Finished> {
    let kind: LatticeKind = cfg.get("kind")?;
    let lat = Lattice::new(kind, lambda(cfg)?, &cfg.tolerances()?)?;
    let center = cfg.complex("center_re", "center_im")?;
    let max_n: usize = cfg.get("max_n")?;
    let steps = covering_steps(
        &lat,
        center,
        cfg.get_f64("d")?,
        cfg.get_f64("delta")?,
        max_n,
        cfg.get("grid")?,
    )?;
    Ok(Finished::ok(match steps {
        Some(n) => format!("covering_steps = {n}\n"),
        None => format!("not covered within {max_n} steps\n"),
    }))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Finished> {
    match command {
        Command::Classify(_) => cmd_classify(cfg),
        Command::FindPrepoles(_) => cmd_find_prepoles(cfg),
        Command::Verify(_) => cmd_verify(cfg),
        Command::RenderParam(_) => cmd_render_param(cfg),
        Command::RenderDyn(_) => cmd_render_dyn(cfg),
        Command::Density(_) => cmd_density(cfg),
        Command::Covering(_) => cmd_covering(cfg),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = defaults(&cli.command);
    if let Some(path) = &cli.config {
        cfg.merge(RunConfig::load(path)?);
    }
    cfg.merge(overrides(cli)?);
    Ok(cfg)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve(cli)?;
    let _ = write!(out, "# resolved config\n{}", cfg.render());
    let threads: usize = cfg.get("threads")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start thread pool: {e}")))?;
    let done = pool.install(|| dispatch(&cli.command, &cfg))?;
    let _ = out.write_all(done.report.as_bytes());
    Ok(done.code)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if !matches!(e, Error::Io { .. }) {
                let _ = writeln!(err, "run 'wpdyn help' for usage");
            }
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("1.0+0.5i").unwrap(), c(1.0, 0.5));
        assert_eq!(parse_complex("-1-2i").unwrap(), c(-1.0, -2.0));
        assert_eq!(parse_complex("0+0i").unwrap(), c(0.0, 0.0));
        assert_eq!(parse_complex("3").unwrap(), c(3.0, 0.0));
        assert_eq!(parse_complex("-2.5i").unwrap(), c(0.0, -2.5));
        assert_eq!(parse_complex("i").unwrap(), c(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("1-i").unwrap(), c(1.0, -1.0));
        assert_eq!(parse_complex("1e-3+2E+1i").unwrap(), c(1e-3, 20.0));
        for bad in ["", "1+", "1+2", "1++2i", "1+2i+3i", "1 + 2i", "ii", "nan", "inf+1i", "1+-2i", "abc"] {
            assert!(parse_complex(bad).is_err(), "{bad} accepted");
        }
    }

    #[test]
    fn complex_format_round_trips() {
        for z in [c(0.9507466806537588, 1.6467415560197725), c(-1e-300, -0.0), c(2.0, -3.5)] {
            let back = parse_complex(&format_complex(z)).unwrap();
            assert_eq!(back, z);
        }
    }

    #[test]
    fn config_parsing() {
        let cfg = RunConfig::parse("# demo\nkind = triangular\n\nbudget=300  # short\n").unwrap();
        assert_eq!(cfg.get_str("kind").unwrap(), "triangular");
        assert_eq!(cfg.get::<usize>("budget").unwrap(), 300);
        assert!(RunConfig::parse("budjet = 3\n").is_err());
        assert!(RunConfig::parse("kind\n").is_err());
        assert!(RunConfig::parse("kind =\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "budget = 10\nkind = triangular\n").unwrap();
        let cli = Cli::try_parse_from([
            "wpdyn",
            "--config",
            path.to_str().unwrap(),
            "classify",
            "--lambda",
            "1+1i",
            "--budget",
            "20",
        ])
        .unwrap();
        let cfg = resolve(&cli).unwrap();
        assert_eq!(cfg.get_str("budget").unwrap(), "20");
        assert_eq!(cfg.get_str("kind").unwrap(), "triangular");
        assert_eq!(cfg.get_str("lambda_re").unwrap(), "1");
    }

    #[test]
    fn radii_lists() {
        assert_eq!(parse_radii("1e-3, 1e-4").unwrap(), vec![1e-3, 1e-4]);
        assert!(parse_radii("1e-3,x").is_err());
    }
}
