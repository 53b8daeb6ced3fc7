//! Finite samples of the critical-orbit closure, expansion estimates,
//! holomorphic motion by backward shadowing and parameter distortion.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result, SeparationKind};
use crate::lattice::{sph_deriv, sph_dist, Lattice, LatticeKind, Point, ToleranceConfig, C64};

/// Orbit points computed past the last sample point, for expansion and
/// shadowing windows.
const EXTENSION: usize = 160;
const NEWTON_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicConfig {
    /// Required minimum of `|(f^N)′|` on the sample.
    pub a_tilde: f64,
    pub max_n_exp: usize,
    /// Pullback depth of `track_motion`.
    pub n_steps: usize,
    /// Radius of the shadowing balls (chordal).
    pub shadow_eps: f64,
    /// Closeness of an orbit to its tracked motion that keeps a step inside
    /// the distortion window (chordal). Defaults to `delta / 11`, so that the
    /// `11·δ′` neighbourhood of the sample stays inside its `δ` neighbourhood.
    pub delta_prime: Option<f64>,
    /// Relative distance at which an orbit is treated as having returned
    /// exactly to an earlier point.
    pub closure_tol: f64,
    /// Seed of the parameter pairs used by the distortion report.
    pub pair_seed: u64,
}

impl Default for HyperbolicConfig {
    fn default() -> Self {
        HyperbolicConfig {
            a_tilde: 2.0,
            max_n_exp: 64,
            n_steps: 48,
            shadow_eps: 0.05,
            delta_prime: None,
            closure_tol: crate::dynamics::CLOSURE_TOL,
            pair_seed: 0x5eed,
        }
    }
}

impl HyperbolicConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a_tilde > 1.0
            && self.max_n_exp >= 1
            && self.n_steps >= 1
            && self.shadow_eps > 0.0
            && self.delta_prime.is_none_or(|d| d > 0.0)
            && self.closure_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("hyperbolic settings out of range".into()))
        }
    }
}

/// Forward orbit of `e₁` at the base parameter, closed up exactly when it
/// is eventually periodic.
#[derive(Debug, Clone)]
struct BaseOrbit {
    points: Vec<C64>,
    /// Spherical derivative of `f` at each stored point.
    sph: Vec<f64>,
    /// `(start, period)` when `points[start..start + period]` is a cycle and
    /// the orbit repeats it forever.
    cycle: Option<(usize, usize)>,
}

impl BaseOrbit {
    fn index(&self, i: usize) -> Option<usize> {
        match self.cycle {
            Some((s, p)) if i >= s => Some(s + (i - s) % p),
            _ => (i < self.points.len()).then_some(i),
        }
    }

    fn point(&self, i: usize) -> Option<C64> {
        self.index(i).map(|j| self.points[j])
    }

    fn sph(&self, i: usize) -> Option<f64> {
        self.index(i).and_then(|j| self.sph.get(j).copied())
    }
}

/// Index of an earlier point that `z` coincides with.
fn find_return(points: &[C64], z: C64, tol: f64) -> Option<usize> {
    points.iter().position(|&w| (w - z).norm() <= tol * (1.0 + w.norm()))
}

/// Iterates `z0` up to `len` points, detecting exact returns. Stops early
/// at a pole. The cycle part, when found, is re-solved by Newton.
fn base_orbit(lat: &Lattice, z0: C64, len: usize, closure_tol: f64) -> BaseOrbit {
    let mut points = vec![z0];
    let mut sph = Vec::new();
    let mut cycle = None;
    while points.len() < len {
        let z = *points.last().unwrap();
        let Ok((fz, dfz)) = lat.wp_pair(z) else { break };
        sph.push(sph_deriv(dfz, z, fz));
        if let Some(j) = find_return(&points, fz, closure_tol) {
            let period = points.len() - j;
            cycle = Some((j, period));
            if let Ok(q) = crate::dynamics::refine_periodic_point(lat, points[j], period) {
                if (q - points[j]).norm() <= closure_tol * (1.0 + q.norm()) {
                    let mut w = q;
                    for t in 0..period {
                        points[j + t] = w;
                        let Ok((fw, dfw)) = lat.wp_pair(w) else { break };
                        sph[j + t] = sph_deriv(dfw, w, fw);
                        w = fw;
                    }
                }
            }
            break;
        }
        points.push(fz);
    }
    if cycle.is_none() {
        // the last stored point has no outgoing factor unless it maps finitely
        if let Some(&z) = points.last() {
            if sph.len() < points.len() {
                if let Ok((fz, dfz)) = lat.wp_pair(z) {
                    sph.push(sph_deriv(dfz, z, fz));
                }
            }
        }
    }
    BaseOrbit { points, sph, cycle }
}

/// Finite sample `{fⁿ(e₁) : n ≤ M}` of the closure of the critical orbit at
/// a base parameter, with its separation and expansion data.
#[derive(Debug, Clone)]
pub struct HyperbolicSample {
    pub lambda0: C64,
    pub points: Vec<C64>,
    pub delta: f64,
    pub min_crit_dist: f64,
    pub min_inf_dist: f64,
    pub n_exp: usize,
    pub a_tilde: f64,
    pub hcfg: HyperbolicConfig,
    lattice: Lattice,
    orbit: BaseOrbit,
}

pub fn build_sample(
    kind: LatticeKind,
    lambda0: C64,
    m: usize,
    delta: f64,
    cfg: &ToleranceConfig,
) -> Result<HyperbolicSample> {
    build_sample_with(kind, lambda0, m, delta, cfg, &HyperbolicConfig::default())
}

pub fn build_sample_with(
    kind: LatticeKind,
    lambda0: C64,
    m: usize,
    delta: f64,
    cfg: &ToleranceConfig,
    hcfg: &HyperbolicConfig,
) -> Result<HyperbolicSample> {
    cfg.validate()?;
    hcfg.validate()?;
    let lattice = Lattice::new(kind, lambda0, cfg)?;
    let e1 = lattice.crit_values[0];
    let orbit = base_orbit(&lattice, e1, m + 1 + EXTENSION, hcfg.closure_tol);

    let mut points = Vec::with_capacity(m + 1);
    let mut min_crit_dist = f64::INFINITY;
    let mut min_inf_dist = f64::INFINITY;
    for step in 0..=m {
        let z = orbit.point(step).ok_or(Error::SeparationViolated {
            step,
            kind: SeparationKind::Infinity,
        })?;
        let dc = lattice.crit_distance(z);
        let di = sph_dist(z, Point::Infinity);
        if dc < delta {
            return Err(Error::SeparationViolated {
                step,
                kind: SeparationKind::Critical,
            });
        }
        if di < delta {
            return Err(Error::SeparationViolated {
                step,
                kind: SeparationKind::Infinity,
            });
        }
        min_crit_dist = min_crit_dist.min(dc);
        min_inf_dist = min_inf_dist.min(di);
        points.push(z);
    }

    let mut sample = HyperbolicSample {
        lambda0,
        points,
        delta,
        min_crit_dist,
        min_inf_dist,
        n_exp: 0,
        a_tilde: hcfg.a_tilde,
        hcfg: *hcfg,
        lattice,
        orbit,
    };
    let mins = sample.per_step_min(hcfg.max_n_exp);
    sample.n_exp = (1..mins.len())
        .find(|&n| mins[n] >= hcfg.a_tilde)
        .ok_or(Error::NoExpansion {
            max_n: hcfg.max_n_exp,
        })?;
    Ok(sample)
}

impl HyperbolicSample {
    pub fn kind(&self) -> LatticeKind {
        self.lattice.kind
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// `Some((start, period))` if the critical orbit was found to be
    /// eventually periodic.
    pub fn cycle(&self) -> Option<(usize, usize)> {
        self.orbit.cycle
    }

    /// `f^i(e₁)` at the base parameter, beyond the sample if available.
    pub fn orbit_point(&self, i: usize) -> Option<C64> {
        self.orbit.point(i)
    }

    /// Sample indices carrying distinct points.
    fn distinct_indices(&self) -> usize {
        match self.orbit.cycle {
            Some((s, p)) => self.points.len().min(s + p),
            None => self.points.len(),
        }
    }

    /// `per_step_min[k]` = min over sample points of the spherical
    /// derivative of `f^k`, for `k = 0..=n` (truncated if orbit data ends).
    fn per_step_min(&self, n: usize) -> Vec<f64> {
        let mut mins = vec![1.0];
        let mut prods = vec![1.0; self.distinct_indices()];
        for k in 0..n {
            let mut min = f64::INFINITY;
            for (i, p) in prods.iter_mut().enumerate() {
                match self.orbit.sph(i + k) {
                    Some(f) => *p *= f,
                    None => return mins,
                }
                min = min.min(*p);
            }
            mins.push(min);
        }
        mins
    }

    pub fn delta_prime(&self) -> f64 {
        self.hcfg.delta_prime.unwrap_or(self.delta / 11.0)
    }

    fn index_of(&self, z0: C64) -> Result<usize> {
        self.points
            .iter()
            .position(|&w| (w - z0).norm() <= 1e-12 * (1.0 + w.norm()))
            .ok_or_else(|| Error::InvalidConfig(format!("{z0} is not a sample point")))
    }
}

/// `d(z) = (1/N)·Σ_{n<N} |(fⁿ)′(z)|` with spherical derivatives.
pub fn adapted_metric(z: C64, lat: &Lattice, n: usize, _cfg: &ToleranceConfig) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("adapted metric needs N >= 1".into()));
    }
    let mut sum = 1.0;
    let mut prod = 1.0;
    let mut w = z;
    for step in 0..n - 1 {
        let (fw, dfw) = lat.wp_pair(w).map_err(|_| Error::PoleOnOrbit { step })?;
        prod *= sph_deriv(dfw, w, fw);
        sum += prod;
        w = fw;
    }
    Ok(sum / n as f64)
}

/// Pointwise check of the one-step expansion in the adapted metric.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedExpansion {
    /// `C₁ = max d` over the sample.
    pub c1: f64,
    /// `1 + (ã − 1)/(N·C₁)`.
    pub bound: f64,
    /// Minimum over the sample of `|f′(z)|·d(f(z))/d(z)`.
    pub min_ratio: f64,
}

pub fn adapted_expansion(sample: &HyperbolicSample) -> Result<AdaptedExpansion> {
    let lat = &sample.lattice;
    let n = sample.n_exp;
    let cfg = &lat.cfg;
    let count = sample.distinct_indices();
    let mut c1: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    for i in 0..count {
        let z = sample.points[i];
        let d = adapted_metric(z, lat, n, cfg)?;
        let (fz, dfz) = lat.wp_pair(z).map_err(|_| Error::PoleOnOrbit { step: 0 })?;
        let d1 = adapted_metric(fz, lat, n, cfg)?;
        c1 = c1.max(d);
        min_ratio = min_ratio.min(sph_deriv(dfz, z, fz) * d1 / d);
    }
    Ok(AdaptedExpansion {
        c1,
        bound: 1.0 + (sample.a_tilde - 1.0) / (n as f64 * c1),
        min_ratio,
    })
}

/// Tracked image `h_λ(z0)` of a sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionFrame {
    pub z0: C64,
    pub lambda: C64,
    pub h_value: C64,
    /// `|h_λ(f_{λ0}(z0)) − f_λ(h_λ(z0))|`.
    pub conj_residual: f64,
    pub steps_used: usize,
}

/// Solves `f_λ(w) = target` by Newton from `start`, staying within `eps`
/// (chordal) of `start`.
fn pull_back(lat: &Lattice, target: C64, start: C64, eps: f64) -> Option<C64> {
    let tol = lat.cfg.newton_tol;
    let mut w = start;
    for _ in 0..NEWTON_STEPS {
        let (fw, dfw) = lat.wp_pair(w).ok()?;
        let step = (fw - target) / dfw;
        w -= step;
        if !w.is_finite() || sph_dist(w, start) > eps {
            return None;
        }
        if step.norm() <= 1e-3 * tol * (1.0 + w.norm()) {
            return Some(w);
        }
    }
    // rounding can stall the last digits; accept a converged residual
    let (fw, dfw) = lat.wp_pair(w).ok()?;
    ((fw - target).norm() <= tol * dfw.norm() * (1.0 + w.norm())).then_some(w)
}

/// Pullback chain for the reference orbit starting at index `idx`.
fn shadow(sample: &HyperbolicSample, lat: &Lattice, idx: usize, n_steps: usize) -> Result<C64> {
    let last = sample
        .orbit_point(idx + n_steps)
        .ok_or(Error::ShadowLost { step: n_steps })?;
    let mut w = last;
    for k in (0..n_steps).rev() {
        let z = sample.orbit_point(idx + k).ok_or(Error::ShadowLost { step: k })?;
        w = pull_back(lat, w, z, sample.hcfg.shadow_eps).ok_or(Error::ShadowLost { step: k })?;
    }
    Ok(w)
}

pub fn track_motion(
    sample: &HyperbolicSample,
    z0: C64,
    lambda: C64,
    n_steps: usize,
    cfg: &ToleranceConfig,
) -> Result<MotionFrame> {
    let idx = sample.index_of(z0)?;
    let lat = Lattice::new(sample.kind(), lambda, cfg)?;
    track_index(sample, &lat, idx, n_steps)
}

fn track_index(sample: &HyperbolicSample, lat: &Lattice, idx: usize, n_steps: usize) -> Result<MotionFrame> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be positive".into()));
    }
    let h = shadow(sample, lat, idx, n_steps)?;
    let h_next = shadow(sample, lat, idx + 1, n_steps)?;
    let fh = lat.wp(h).map_err(|_| Error::ShadowLost { step: 0 })?;
    Ok(MotionFrame {
        z0: sample.orbit_point(idx).unwrap(),
        lambda: lat.lambda,
        h_value: h,
        conj_residual: (h_next - fh).norm(),
        steps_used: n_steps,
    })
}

/// Geometric rate `C̃` at which the shadowing results converge in the
/// pullback depth, from a log-linear fit of successive differences.
pub fn shadowing_rate(sample: &HyperbolicSample, z0: C64, lambda: C64, cfg: &ToleranceConfig) -> Result<f64> {
    let idx = sample.index_of(z0)?;
    let lat = Lattice::new(sample.kind(), lambda, cfg)?;
    let n_max = sample.hcfg.n_steps;
    let hs = (1..=n_max)
        .map(|n| shadow(sample, &lat, idx, n))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 + hs[n_max - 1].norm();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in 0..n_max - 1 {
        let d = (hs[n + 1] - hs[n]).norm();
        if d <= 1e-13 * scale {
            break;
        }
        xs.push((n + 1) as f64);
        ys.push(d.ln());
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSampling { increment: 0.0 });
    }
    Ok((-slope(&xs, &ys)).exp())
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `x(λ) = e_λ − h_λ(e_{λ0})`.
pub fn x_function(sample: &HyperbolicSample, lambda: C64, cfg: &ToleranceConfig) -> Result<C64> {
    let lat = Lattice::new(sample.kind(), lambda, cfg)?;
    x_on(sample, &lat)
}

fn x_on(sample: &HyperbolicSample, lat: &Lattice) -> Result<C64> {
    let h = shadow(sample, lat, 0, sample.hcfg.n_steps)?;
    Ok(lat.crit_values[0] - h)
}

/// Winding number about 0 of `f` along `|λ − center| = rho`, from summed
/// principal-branch argument increments.
pub fn winding_number<F>(f: F, center: C64, rho: f64, n_samples: usize, floor: f64) -> Result<i64>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    if n_samples < 3 || rho <= 0.0 {
        return Err(Error::InvalidConfig("winding needs n_samples >= 3 and rho > 0".into()));
    }
    let values = (0..n_samples)
        .into_par_iter()
        .map(|i| f(center + C64::from_polar(rho, 2.0 * PI * i as f64 / n_samples as f64)))
        .collect::<Result<Vec<_>>>()?;
    let min_abs = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if min_abs <= floor {
        return Err(Error::NearZero { min_abs });
    }
    let mut total = 0.0;
    for i in 0..n_samples {
        let inc = (values[(i + 1) % n_samples] / values[i]).arg();
        if inc.abs() >= PI / 2.0 {
            return Err(Error::InsufficientSampling { increment: inc.abs() });
        }
        total += inc;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Vanishing order of `x` at `λ0`, as the winding number of `x` around a
/// circle of radius `rho`.
pub fn order_k(sample: &HyperbolicSample, rho: f64, n_samples: usize, cfg: &ToleranceConfig) -> Result<i64> {
    winding_number(
        |l| x_function(sample, l, cfg),
        sample.lambda0,
        rho,
        n_samples,
        10.0 * cfg.eval_tol,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub c: f64,
    pub a: f64,
    pub n_range: usize,
    pub per_step_min: Vec<f64>,
}

/// Lower envelope `C·a^k` of the per-step minima: the line in log scale
/// through the final point with the largest slope that stays below every
/// earlier point.
pub fn fit_expansion(sample: &HyperbolicSample, n_range: usize) -> Result<ExpansionReport> {
    let mins = sample.per_step_min(n_range);
    if mins.len() != n_range + 1 || n_range == 0 {
        return Err(Error::NoExpansion { max_n: n_range });
    }
    let logs: Vec<f64> = mins.iter().map(|m| m.ln()).collect();
    let end = logs[n_range];
    let log_a = (0..n_range)
        .map(|k| (end - logs[k]) / (n_range - k) as f64)
        .fold(f64::INFINITY, f64::min);
    if log_a <= 0.0 || !log_a.is_finite() {
        return Err(Error::NoExpansion { max_n: n_range });
    }
    let a = log_a.exp();
    // the envelope touches at least one point; shave rounding so it holds
    let c = (0..=n_range)
        .map(|k| mins[k] / a.powi(k as i32))
        .fold(f64::INFINITY, f64::min);
    Ok(ExpansionReport {
        c,
        a,
        n_range,
        per_step_min: mins,
    })
}

impl ExpansionReport {
    pub fn envelope_holds(&self) -> bool {
        self.per_step_min
            .iter()
            .enumerate()
            .all(|(k, &m)| m >= self.c * self.a.powi(k as i32))
    }
}

/// Critical orbit of one parameter next to the tracked motion of the base
/// orbit.
struct ParamOrbit {
    /// `n` such that the orbit stays within `δ′` of the motion for all
    /// steps `≤ n`.
    n: usize,
    /// `(fⁿ_λ)′(e_λ)` for each `n` up to the window.
    derivs: Vec<C64>,
    xi: Vec<C64>,
}

fn param_orbit(sample: &HyperbolicSample, lambda: C64, n_max: usize) -> Result<ParamOrbit> {
    let cfg = &sample.lattice.cfg;
    let lat = Lattice::new(sample.kind(), lambda, cfg)?;
    let steps = sample.hcfg.n_steps;
    let mut xi = vec![lat.crit_values[0]];
    let mut derivs = vec![C64::new(1.0, 0.0)];
    let mut n = 0;
    for k in 0..=n_max {
        let mu = shadow(sample, &lat, k, steps)?;
        if sph_dist(xi[k], mu) > sample.delta_prime() {
            break;
        }
        n = k;
        if k == n_max {
            break;
        }
        let Ok((fz, dfz)) = lat.wp_pair(xi[k]) else { break };
        xi.push(fz);
        derivs.push(derivs[k] * dfz);
    }
    Ok(ParamOrbit { n, derivs, xi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRatio {
    pub a: C64,
    pub b: C64,
    pub n: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub r: f64,
    /// Maximum over pairs of `|(fⁿ_a)′(e_a)/(fⁿ_b)′(e_b) − 1|`.
    pub max_ratio: f64,
    /// Maximum over parameters of `|ξ′ₙ(λ)/((fⁿ_λ)′(e_λ)·x′(λ)) − 1|`.
    pub transfer_max: f64,
    pub pairs: Vec<PairRatio>,
}

/// Offsets in the unit disc shared by every radius, so that runs at
/// `r, r/2, …` compare the same relative configuration.
fn unit_disc_offsets(seed: u64, count: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if u.norm_sqr() < 1.0 {
            out.push(u);
        }
    }
    out
}

/// Maximum step considered in the distortion window.
fn distortion_window(sample: &HyperbolicSample) -> usize {
    match sample.orbit.cycle {
        Some(_) => sample.points.len().max(2) - 1,
        None => sample.points.len() - 1,
    }
}

pub fn distortion_report(
    sample: &HyperbolicSample,
    r: f64,
    n_pairs: usize,
    _cfg: &ToleranceConfig,
) -> Result<DistortionReport> {
    if r <= 0.0 || n_pairs == 0 {
        return Err(Error::InvalidConfig("distortion needs r > 0 and n_pairs >= 1".into()));
    }
    let offsets = unit_disc_offsets(sample.hcfg.pair_seed, 2 * n_pairs);
    let n_max = distortion_window(sample);
    let l0 = sample.lambda0;
    let h = r / 100.0;

    let pairs = (0..n_pairs)
        .into_par_iter()
        .map(|i| -> Result<(PairRatio, f64)> {
            let a = l0 + offsets[2 * i] * r;
            let b = l0 + offsets[2 * i + 1] * r;
            let oa = param_orbit(sample, a, n_max)?;
            let ob = param_orbit(sample, b, n_max)?;
            let n = oa.n.min(ob.n);
            let ratio = (oa.derivs[n] / ob.derivs[n] - 1.0).norm();
            let cor = if oa.n >= 1 { transfer_ratio(sample, a, oa.n, &oa, h)? } else { 0.0 };
            Ok((PairRatio { a, b, n, ratio }, cor))
        })
        .collect::<Result<Vec<_>>>()?;

    if pairs.iter().all(|(p, _)| p.n < 3) {
        return Err(Error::DegenerateRadius);
    }
    let used: Vec<_> = pairs.iter().filter(|(p, _)| p.n >= 3).collect();
    Ok(DistortionReport {
        r,
        max_ratio: used.iter().map(|(p, _)| p.ratio).fold(0.0, f64::max),
        transfer_max: used.iter().map(|(_, c)| *c).fold(0.0, f64::max),
        pairs: pairs.into_iter().map(|(p, _)| p).collect(),
    })
}

/// `ξₙ(λ) = fⁿ_λ(e_λ)` without the window bookkeeping.
fn xi_n(kind: LatticeKind, lambda: C64, n: usize, cfg: &ToleranceConfig) -> Result<C64> {
    let lat = Lattice::new(kind, lambda, cfg)?;
    crate::dynamics::iterate_with_derivative(&lat, lat.crit_values[0], n).map(|(w, _)| w)
}

fn transfer_ratio(sample: &HyperbolicSample, lambda: C64, n: usize, orbit: &ParamOrbit, h: f64) -> Result<f64> {
    let cfg = &sample.lattice.cfg;
    let kind = sample.kind();
    let dxi = (xi_n(kind, lambda + h, n, cfg)? - xi_n(kind, lambda - h, n, cfg)?) / (2.0 * h);
    let dx = (x_function(sample, lambda + h, cfg)? - x_function(sample, lambda - h, cfg)?) / (2.0 * h);
    debug_assert_eq!(orbit.xi.len(), orbit.derivs.len());
    Ok((dxi / (orbit.derivs[n] * dx) - 1.0).norm())
}

/// Plain-text summary used by the verify command.
pub fn format_report(
    sample: &HyperbolicSample,
    expansion: &ExpansionReport,
    adapted: &AdaptedExpansion,
    residual: f64,
    k: Option<i64>,
    distortion: &[DistortionReport],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "lambda0 = {}", sample.lambda0);
    let _ = writeln!(s, "points = {}", sample.points.len());
    if let Some((start, period)) = sample.cycle() {
        let _ = writeln!(s, "eventually_periodic start={start} period={period}");
    }
    let _ = writeln!(s, "delta = {}", sample.delta);
    let _ = writeln!(s, "min_crit_dist = {:.6}", sample.min_crit_dist);
    let _ = writeln!(s, "min_inf_dist = {:.6}", sample.min_inf_dist);
    let _ = writeln!(s, "N_exp = {} a_tilde = {}", sample.n_exp, sample.a_tilde);
    let _ = writeln!(
        s,
        "expansion C = {:.6e} a = {:.6} n_range = {}",
        expansion.c, expansion.a, expansion.n_range
    );
    let _ = writeln!(s, "k,per_step_min");
    for (k, m) in expansion.per_step_min.iter().enumerate() {
        let _ = writeln!(s, "{k},{m:.6e}");
    }
    let _ = writeln!(
        s,
        "adapted C1 = {:.6} bound = {:.6} min_ratio = {:.6}",
        adapted.c1, adapted.bound, adapted.min_ratio
    );
    let _ = writeln!(s, "max_conj_residual = {residual:.3e}");
    match k {
        Some(k) => {
            let _ = writeln!(s, "K = {k}");
        }
        None => {
            let _ = writeln!(s, "K = n/a");
        }
    }
    let _ = writeln!(s, "r,max_ratio,transfer_max");
    for d in distortion {
        let _ = writeln!(s, "{:e},{:.6e},{:.6e}", d.r, d.max_ratio, d.transfer_max);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn adapted_metric_trivial_cases() {
        let cfg = ToleranceConfig::default();
        let lat = Lattice::new(LatticeKind::Square, c(1.3, 0.4), &cfg).unwrap();
        assert_eq!(adapted_metric(c(0.2, 0.1), &lat, 1, &cfg).unwrap(), 1.0);
        let d = adapted_metric(lat.half_periods[0], &lat, 2, &cfg).unwrap();
        assert!((d - 0.5).abs() < 1e-6, "{d}");
        assert!(matches!(
            adapted_metric(lat.pole(1, 1), &lat, 3, &cfg),
            Err(Error::PoleOnOrbit { step: 0 })
        ));
    }

    #[test]
    fn winding_of_monomials() {
        let l0 = c(1.2, 0.7);
        let k = winding_number(|l| Ok((l - l0).powi(3)), l0, 1e-3, 64, 0.0).unwrap();
        assert_eq!(k, 3);
        let k = winding_number(|l| Ok((l - l0).inv()), l0, 0.5, 32, 0.0).unwrap();
        assert_eq!(k, -1);
        assert!(matches!(
            winding_number(|l| Ok((l - l0).powi(3)), l0, 1e-3, 5, 0.0),
            Err(Error::InsufficientSampling { .. })
        ));
        assert!(matches!(
            winding_number(|_| Ok(C64::new(1e-14, 0.0)), l0, 1e-3, 8, 1e-11),
            Err(Error::NearZero { .. })
        ));
    }

    #[test]
    fn closure_detection() {
        let pts = [c(1.0, 0.0), c(2.0, 0.0)];
        assert_eq!(find_return(&pts, c(2.0 + 1e-12, 0.0), 1e-9), Some(1));
        assert_eq!(find_return(&pts, c(2.1, 0.0), 1e-9), None);
    }
}
