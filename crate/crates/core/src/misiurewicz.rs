//! Prepole and preperiodic parameters, the separation check along critical
//! orbits, density experiments near a parameter and the covering count of
//! the forbidden neighbourhood.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{driving_crit_values, iterate, iterate_with_derivative, Outcome, CLOSURE_TOL};
use crate::error::{Error, Result};
use crate::hyperbolic::winding_number;
use crate::lattice::{sph_deriv, sph_dist, Lattice, LatticeKind, Point, ToleranceConfig, C64};

const NEWTON_STEPS: usize = 60;
/// Doublings of the isolation circle before giving up on growing it.
const MAX_DOUBLINGS: usize = 40;

/// Axis-aligned rectangle in the parameter plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Region {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Region {
            re_min,
            re_max,
            im_min,
            im_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.re_min >= self.re_max || self.im_min >= self.im_max {
            return Err(Error::InvalidConfig("region must be a non-empty rectangle".into()));
        }
        if self.contains(C64::new(0.0, 0.0)) {
            return Err(Error::InvalidConfig("region must exclude lambda = 0".into()));
        }
        Ok(())
    }

    pub fn contains(&self, l: C64) -> bool {
        (self.re_min..=self.re_max).contains(&l.re) && (self.im_min..=self.im_max).contains(&l.im)
    }

    pub fn diameter(&self) -> f64 {
        (self.re_max - self.re_min).hypot(self.im_max - self.im_min)
    }

    /// Node `(i, j)` of a `grid × grid` lattice of points including the
    /// boundary.
    fn node(&self, i: usize, j: usize, grid: usize) -> C64 {
        let t = |k: usize| k as f64 / (grid - 1) as f64;
        C64::new(
            self.re_min + (self.re_max - self.re_min) * t(i),
            self.im_min + (self.im_max - self.im_min) * t(j),
        )
    }
}

/// Pole `j·λ + k·τλ` of `f_λ`.
pub fn pole_location(kind: LatticeKind, lambda: C64, j: i64, k: i64) -> C64 {
    lambda * j as f64 + kind.ratio() * lambda * k as f64
}

/// `fⁿ_λ(e_λ) − p_{j,k}(λ)`.
pub fn prepole_residual(kind: LatticeKind, lambda: C64, n: usize, j: i64, k: i64, cfg: &ToleranceConfig) -> Result<C64> {
    let lat = Lattice::new(kind, lambda, cfg)?;
    prepole_residual_on(&lat, n, j, k)
}

fn prepole_residual_on(lat: &Lattice, n: usize, j: i64, k: i64) -> Result<C64> {
    let (w, _) = iterate_with_derivative(lat, lat.crit_values[0], n).map_err(|e| match e {
        Error::PoleOnOrbit { step } => Error::PrematurePole { step },
        other => other,
    })?;
    Ok(w - lat.pole(j, k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepoleRoot {
    pub lambda_star: C64,
    pub n: usize,
    pub j: i64,
    pub k: i64,
    pub residual: f64,
    pub isolation_radius: f64,
}

/// One prepole equation `fⁿ(e) = p_{j,k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepoleEquation {
    pub n: usize,
    pub j: i64,
    pub k: i64,
}

impl PrepoleEquation {
    /// All equations with `n ≤ n_max`, `|j|, |k| ≤ jk_max`, excluding the
    /// pole at the origin.
    pub fn family(n_max: usize, jk_max: i64) -> Vec<PrepoleEquation> {
        let mut out = Vec::new();
        for n in 0..=n_max {
            for j in -jk_max..=jk_max {
                for k in -jk_max..=jk_max {
                    if (j, k) != (0, 0) {
                        out.push(PrepoleEquation { n, j, k });
                    }
                }
            }
        }
        out
    }
}

/// Newton iteration with a central-difference derivative along the real
/// axis.
fn polish<G>(g: &G, start: C64, h: f64, tol: f64, max_step: f64) -> Option<C64>
where
    G: Fn(C64) -> Result<C64>,
{
    let mut l = start;
    for _ in 0..NEWTON_STEPS {
        let gl = g(l).ok()?;
        if gl.norm() < 1e-3 * tol {
            return Some(l);
        }
        let d = (g(l + h).ok()? - g(l - h).ok()?) / (2.0 * h);
        let mut step = gl / d;
        if !step.is_finite() {
            return None;
        }
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        l -= step;
        if step.norm() <= 1e-15 * l.norm() {
            return Some(l);
        }
    }
    Some(l)
}

/// Local minima of a row-major `grid × grid` field, below `threshold`.
fn grid_minima(values: &[f64], grid: usize, threshold: f64) -> Vec<(usize, usize)> {
    let at = |i: usize, j: usize| values[j * grid + i];
    let mut out = Vec::new();
    for j in 0..grid {
        for i in 0..grid {
            let v = at(i, j);
            if v.is_nan() || v >= threshold {
                continue;
            }
            let mut is_min = true;
            'nb: for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if (di, dj) == (0, 0) {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= grid as i64 || nj >= grid as i64 {
                        continue;
                    }
                    let w = at(ni as usize, nj as usize);
                    // ties go to the first index in scan order
                    let earlier = (nj, ni) < (j as i64, i as i64);
                    if w < v || (w == v && earlier) {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                out.push((i, j));
            }
        }
    }
    out
}

fn median(values: &[f64]) -> f64 {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return f64::INFINITY;
    }
    finite.sort_by(f64::total_cmp);
    finite[finite.len() / 2]
}

fn dedup_sorted(mut roots: Vec<C64>, tol: f64) -> Vec<C64> {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut kept: Vec<C64> = Vec::new();
    for r in roots {
        if kept.iter().all(|k| (k - r).norm() > tol) {
            kept.push(r);
        }
    }
    kept
}

/// Winding count with progressively finer sampling.
fn robust_winding<G>(g: &G, center: C64, rho: f64, floor: f64) -> Result<i64>
where
    G: Fn(C64) -> Result<C64> + Sync,
{
    let mut n = 64;
    loop {
        match winding_number(g, center, rho, n, floor) {
            Err(Error::InsufficientSampling { .. }) if n < 4096 => n *= 4,
            other => return other,
        }
    }
}

/// Largest radius, grown by doubling from `10·newton_tol`, on which the
/// winding count of `g` about `root` is one. `None` if the smallest circle
/// does not already count exactly one zero.
fn isolation_radius<G>(g: &G, root: C64, cfg: &ToleranceConfig, cap: f64) -> Option<f64>
where
    G: Fn(C64) -> Result<C64> + Sync,
{
    let floor = 10.0 * cfg.eval_tol;
    let mut rho = 10.0 * cfg.newton_tol;
    if robust_winding(g, root, rho, floor).ok()? != 1 {
        return None;
    }
    let mut certified = rho;
    for _ in 0..MAX_DOUBLINGS {
        rho *= 2.0;
        if rho > cap {
            break;
        }
        match robust_winding(g, root, rho, floor) {
            Ok(1) => certified = rho,
            _ => break,
        }
    }
    Some(certified)
}

fn validate_grid(region: &Region, grid: usize) -> Result<()> {
    region.validate()?;
    if grid < 8 {
        return Err(Error::InvalidConfig(format!("grid must be at least 8, got {grid}")));
    }
    Ok(())
}

/// `|g|` of every equation at every grid node, sharing one orbit per node.
fn prepole_fields(kind: LatticeKind, eqs: &[PrepoleEquation], region: &Region, grid: usize, cfg: &ToleranceConfig) -> Vec<Vec<f64>> {
    let n_max = eqs.iter().map(|e| e.n).max().unwrap_or(0);
    let rows: Vec<Vec<Vec<f64>>> = (0..grid)
        .into_par_iter()
        .map(|jrow| {
            (0..grid)
                .map(|i| {
                    let l = region.node(i, jrow, grid);
                    let Ok(lat) = Lattice::new(kind, l, cfg) else {
                        return vec![f64::INFINITY; eqs.len()];
                    };
                    let mut orbit = vec![lat.crit_values[0]];
                    while orbit.len() <= n_max {
                        match lat.wp(*orbit.last().unwrap()) {
                            Ok(w) => orbit.push(w),
                            Err(_) => break,
                        }
                    }
                    eqs.iter()
                        .map(|e| match orbit.get(e.n) {
                            Some(&w) => (w - lat.pole(e.j, e.k)).norm(),
                            None => f64::INFINITY,
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    (0..eqs.len())
        .map(|q| rows.iter().flat_map(|row| row.iter().map(move |v| v[q])).collect())
        .collect()
}

fn solve_equation(kind: LatticeKind, eq: PrepoleEquation, field: &[f64], region: &Region, grid: usize, cfg: &ToleranceConfig) -> Vec<PrepoleRoot> {
    let g = |l: C64| prepole_residual(kind, l, eq.n, eq.j, eq.k, cfg);
    let seeds = grid_minima(field, grid, median(field));
    let h = 1e-7 * region.diameter();
    let max_step = 0.1 * region.diameter();
    let polished: Vec<C64> = seeds
        .par_iter()
        .filter_map(|&(i, j)| polish(&g, region.node(i, j, grid), h, cfg.newton_tol, max_step))
        .filter(|&l| region.contains(l) && g(l).is_ok_and(|v| v.norm() < cfg.newton_tol))
        .collect();
    let roots = dedup_sorted(polished, 10.0 * cfg.newton_tol);
    roots
        .par_iter()
        .filter_map(|&l| {
            let cap = 1e-2 * l.norm();
            let radius = isolation_radius(&g, l, cfg, cap)?;
            Some(PrepoleRoot {
                lambda_star: l,
                n: eq.n,
                j: eq.j,
                k: eq.k,
                residual: g(l).ok()?.norm(),
                isolation_radius: radius,
            })
        })
        .collect()
}

/// Roots of `fⁿ_λ(e_λ) = p_{j,k}(λ)` in `region`, seeded from local minima
/// of `|g|` on a `grid × grid` lattice and certified isolated.
pub fn find_prepole_params(
    kind: LatticeKind,
    n: usize,
    j: i64,
    k: i64,
    region: &Region,
    grid: usize,
    cfg: &ToleranceConfig,
) -> Result<Vec<PrepoleRoot>> {
    find_prepole_params_multi(kind, &[PrepoleEquation { n, j, k }], region, grid, cfg)
}

/// Solves several equations over one shared grid scan. Output is sorted by
/// equation order, then by root position.
pub fn find_prepole_params_multi(
    kind: LatticeKind,
    eqs: &[PrepoleEquation],
    region: &Region,
    grid: usize,
    cfg: &ToleranceConfig,
) -> Result<Vec<PrepoleRoot>> {
    validate_grid(region, grid)?;
    cfg.validate()?;
    let fields = prepole_fields(kind, eqs, region, grid, cfg);
    Ok(eqs
        .iter()
        .zip(&fields)
        .flat_map(|(&eq, field)| solve_equation(kind, eq, field, region, grid, cfg))
        .collect())
}

/// Whether every non-pole critical value lands on a pole at the root's
/// step.
pub fn critical_orbits_hit_together(kind: LatticeKind, root: &PrepoleRoot, cfg: &ToleranceConfig) -> Result<bool> {
    let lat = Lattice::new(kind, root.lambda_star, cfg)?;
    Ok(lat.finite_crit_values().iter().all(|&e| {
        matches!(iterate(&lat, e, root.n + 1).outcome, Outcome::PoleHit { step, .. } if step == root.n)
    }))
}

pub fn roots_csv(roots: &[PrepoleRoot]) -> String {
    let mut s = String::from("lambda_re,lambda_im,n,j,k,residual,isolation_radius\n");
    for r in roots {
        let _ = writeln!(
            s,
            "{:.12},{:.12},{},{},{},{:.3e},{:.3e}",
            r.lambda_star.re, r.lambda_star.im, r.n, r.j, r.k, r.residual, r.isolation_radius
        );
    }
    s
}

/// Parameter whose critical value `e₁` is strictly preperiodic onto a
/// repelling cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreperiodicParam {
    pub lambda: C64,
    pub preperiod: usize,
    pub period: usize,
    pub residual: f64,
    pub multiplier: C64,
    /// Distances of the finite postcritical set to the critical points and
    /// to infinity (chordal).
    pub min_crit_dist: f64,
    pub min_inf_dist: f64,
}

fn preperiodic_residual(lat: &Lattice, preperiod: usize, period: usize) -> Result<C64> {
    let (a, _) = iterate_with_derivative(lat, lat.crit_values[0], preperiod)?;
    let (b, _) = iterate_with_derivative(lat, a, period)?;
    Ok(b - a)
}

fn describe_preperiodic(lat: &Lattice, preperiod: usize, period: usize, cfg: &ToleranceConfig) -> Option<PreperiodicParam> {
    let e = lat.crit_values[0];
    let residual = preperiodic_residual(lat, preperiod, period).ok()?.norm();
    if residual >= cfg.newton_tol {
        return None;
    }
    let distinct = |a: C64, b: C64| (a - b).norm() > 1e-6 * (1.0 + a.norm());
    // the preperiod is exact and the period minimal
    let (before, _) = iterate_with_derivative(lat, e, preperiod - 1).ok()?;
    let (before_cycle, _) = iterate_with_derivative(lat, before, period).ok()?;
    if !distinct(before, before_cycle) {
        return None;
    }
    let (q, _) = iterate_with_derivative(lat, e, preperiod).ok()?;
    for d in 1..period {
        if period.is_multiple_of(d) && !distinct(q, iterate_with_derivative(lat, q, d).ok()?.0) {
            return None;
        }
    }
    let (_, multiplier) = iterate_with_derivative(lat, q, period).ok()?;
    if multiplier.norm() <= 1.0 + 1e-6 {
        return None;
    }
    let trace = iterate(lat, e, preperiod + period);
    let pts = &trace.points;
    Some(PreperiodicParam {
        lambda: lat.lambda,
        preperiod,
        period,
        residual,
        multiplier,
        min_crit_dist: pts.iter().map(|&z| lat.crit_distance(z)).fold(f64::INFINITY, f64::min),
        min_inf_dist: pts.iter().map(|&z| sph_dist(z, Point::Infinity)).fold(f64::INFINITY, f64::min),
    })
}

/// Solutions of `f^{k+p}_λ(e_λ) = f^k_λ(e_λ)` in `region` with exact
/// preperiod `k ≥ 1`, minimal period `p` and a repelling cycle. Sorted by
/// decreasing separation `min(min_crit_dist, min_inf_dist)`.
pub fn find_preperiodic_params(
    kind: LatticeKind,
    preperiod: usize,
    period: usize,
    region: &Region,
    grid: usize,
    cfg: &ToleranceConfig,
) -> Result<Vec<PreperiodicParam>> {
    validate_grid(region, grid)?;
    cfg.validate()?;
    if preperiod == 0 || period == 0 {
        return Err(Error::InvalidConfig("preperiod and period must be positive".into()));
    }
    let g = |l: C64| {
        let lat = Lattice::new(kind, l, cfg)?;
        preperiodic_residual(&lat, preperiod, period)
    };
    let field: Vec<f64> = (0..grid * grid)
        .into_par_iter()
        .map(|idx| g(region.node(idx % grid, idx / grid, grid)).map_or(f64::INFINITY, |v| v.norm()))
        .collect();
    let seeds = grid_minima(&field, grid, median(&field));
    let h = 1e-7 * region.diameter();
    let max_step = 0.1 * region.diameter();
    let polished: Vec<C64> = seeds
        .par_iter()
        .filter_map(|&(i, j)| polish(&g, region.node(i, j, grid), h, cfg.newton_tol, max_step))
        .filter(|&l| region.contains(l))
        .collect();
    let mut found: Vec<PreperiodicParam> = dedup_sorted(polished, 10.0 * cfg.newton_tol)
        .into_iter()
        .filter_map(|l| {
            let lat = Lattice::new(kind, l, cfg).ok()?;
            describe_preperiodic(&lat, preperiod, period, cfg)
        })
        .collect();
    found.sort_by(|a, b| {
        let sa = a.min_crit_dist.min(a.min_inf_dist);
        let sb = b.min_crit_dist.min(b.min_inf_dist);
        sb.total_cmp(&sa)
            .then(a.lambda.re.total_cmp(&b.lambda.re))
            .then(a.lambda.im.total_cmp(&b.lambda.im))
    });
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NearCritical,
    NearInfinity,
    PoleHit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub step: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckReport {
    pub passed: bool,
    pub iterations: usize,
    pub first_violation: Option<Violation>,
}

/// First violation along one critical orbit within `m` steps. An exact
/// return to an earlier point ends the scan, since the rest of the orbit
/// repeats points already checked.
fn check_orbit(lat: &Lattice, e: C64, delta: f64, m: usize) -> Option<Violation> {
    let mut seen: Vec<C64> = Vec::with_capacity(m.min(4096));
    let mut z = e;
    for step in 0..m {
        if lat.reduce(z).pole_distance() < lat.cfg.pole_eps {
            return Some(Violation {
                step,
                kind: ViolationKind::PoleHit,
            });
        }
        if sph_dist(z, Point::Infinity) < delta {
            return Some(Violation {
                step,
                kind: ViolationKind::NearInfinity,
            });
        }
        if lat.crit_distance(z) < delta {
            return Some(Violation {
                step,
                kind: ViolationKind::NearCritical,
            });
        }
        if seen.iter().any(|&w| (w - z).norm() <= CLOSURE_TOL * (1.0 + w.norm())) {
            return None;
        }
        seen.push(z);
        z = match lat.wp(z) {
            Ok(w) => w,
            Err(_) => {
                return Some(Violation {
                    step,
                    kind: ViolationKind::PoleHit,
                })
            }
        };
    }
    None
}

/// Separation check of the critical orbits over `m` steps at resolution
/// `delta`. The square family's pole-valued critical value at the origin is
/// exempt, and `e₂ = −e₁` shares the orbit of `e₁`.
pub fn misiurewicz_check(kind: LatticeKind, lambda: C64, delta: f64, m: usize, cfg: &ToleranceConfig) -> CheckReport {
    let Ok(lat) = Lattice::new(kind, lambda, cfg) else {
        return CheckReport {
            passed: false,
            iterations: m,
            first_violation: Some(Violation {
                step: 0,
                kind: ViolationKind::PoleHit,
            }),
        };
    };
    check_lattice(&lat, delta, m)
}

fn check_lattice(lat: &Lattice, delta: f64, m: usize) -> CheckReport {
    let first_violation = driving_crit_values(lat)
        .into_iter()
        .filter_map(|e| check_orbit(lat, e, delta, m))
        .min_by_key(|v| v.step);
    CheckReport {
        passed: first_violation.is_none(),
        iterations: m,
        first_violation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRow {
    pub radius: f64,
    pub n_samples: usize,
    pub fail_fraction: f64,
    pub seed: u64,
}

/// Uniform point of the unit disc from the substream of `(seed, row, i)`.
fn disc_sample(seed: u64, row: usize, i: usize) -> C64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((row as u64) << 40) | i as u64);
    loop {
        let u = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if u.norm_sqr() < 1.0 {
            return u;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn density_scan(
    kind: LatticeKind,
    lambda0: C64,
    radii: &[f64],
    n_samples: usize,
    delta: f64,
    m: usize,
    seed: u64,
    cfg: &ToleranceConfig,
) -> Result<Vec<DensityRow>> {
    cfg.validate()?;
    if radii.is_empty() || radii.iter().any(|&r| !r.is_finite() || r <= 0.0) {
        return Err(Error::InvalidConfig("radii must be positive".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig("radii must be strictly decreasing".into()));
    }
    if n_samples < 100 {
        return Err(Error::InvalidConfig(format!("need at least 100 samples, got {n_samples}")));
    }
    if delta.is_nan() || delta < 0.0 || m == 0 {
        return Err(Error::InvalidConfig("delta must be >= 0 and M >= 1".into()));
    }
    Ok(radii
        .iter()
        .enumerate()
        .map(|(row, &radius)| {
            let fails: usize = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let l = lambda0 + disc_sample(seed, row, i) * radius;
                    usize::from(!misiurewicz_check(kind, l, delta, m, cfg).passed)
                })
                .sum();
            DensityRow {
                radius,
                n_samples,
                fail_fraction: fails as f64 / n_samples as f64,
                seed,
            }
        })
        .collect())
}

pub fn density_csv(rows: &[DensityRow]) -> String {
    let mut s = String::from("radius,n_samples,fail_fraction,seed\n");
    for r in rows {
        let _ = writeln!(s, "{:e},{},{:.6},{}", r.radius, r.n_samples, r.fail_fraction, r.seed);
    }
    s
}

/// Chordal radius of `B(∞, delta)` as a Euclidean modulus.
fn infinity_ball_modulus(delta: f64) -> f64 {
    (4.0 / (delta * delta) - 1.0).max(0.0).sqrt()
}

/// Grid discretization of the closure of `U_δ`: the critical balls of one
/// fundamental cell and the ball at infinity.
fn target_points(lat: &Lattice, delta: f64, per_ball: usize) -> Vec<Point> {
    let mut out = Vec::new();
    let n = per_ball.max(2);
    for &c in &lat.half_periods {
        // Euclidean box enclosing the chordal ball
        let reach = delta * (1.0 + c.norm_sqr());
        for a in 0..n {
            for b in 0..n {
                let off = C64::new(
                    -reach + 2.0 * reach * a as f64 / (n - 1) as f64,
                    -reach + 2.0 * reach * b as f64 / (n - 1) as f64,
                );
                let z = c + off;
                if sph_dist(z, c) <= delta {
                    out.push(Point::Finite(z));
                }
            }
        }
    }
    out.push(Point::Infinity);
    let big = infinity_ball_modulus(delta);
    if big > 0.0 {
        for a in 0..n {
            for b in 0..n {
                let v = C64::new(
                    -1.0 + 2.0 * a as f64 / (n - 1) as f64,
                    -1.0 + 2.0 * b as f64 / (n - 1) as f64,
                ) / big;
                if v.norm() > 0.0 && v.norm() <= 1.0 / big {
                    out.push(Point::Finite(v.inv()));
                }
            }
        }
    }
    out
}

/// Least `m ≤ max_n` such that the image under `f^m` of a grid
/// discretization of `B(center, d)`, each grid cell dilated by its image
/// diameter bound, covers the closure of `U_δ` (critical balls of one
/// fundamental cell and the ball at infinity).
pub fn covering_steps(lat: &Lattice, center: C64, d: f64, delta: f64, max_n: usize, grid: usize) -> Result<Option<usize>> {
    if grid < 64 || d.is_nan() || d <= 0.0 || delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidConfig("covering needs grid >= 64, d > 0, delta > 0".into()));
    }
    let h = 2.0 * d / (grid - 1) as f64;
    let mut disc = Vec::new();
    for a in 0..grid {
        for b in 0..grid {
            let off = C64::new(-d + h * a as f64, -d + h * b as f64);
            if off.norm() <= d {
                disc.push(center + off);
            }
        }
    }
    for &z in &disc {
        if lat.crit_distance(z) < delta || sph_dist(z, Point::Infinity) < delta {
            return Err(Error::DiscTouchesU);
        }
    }
    if max_n == 0 {
        return Ok(None);
    }
    let targets = target_points(lat, delta, 16);
    // (current image, chordal radius of the image of its cell)
    let mut images: Vec<(C64, f64)> = disc
        .iter()
        .map(|&z| (z, h * std::f64::consts::FRAC_1_SQRT_2 * 2.0 / (1.0 + z.norm_sqr())))
        .collect();
    for m in 1..=max_n {
        let mut next = Vec::with_capacity(images.len());
        for &(z, rad) in &images {
            match lat.wp_pair(z) {
                Ok((fz, dfz)) if fz.is_finite() => {
                    next.push((fz, (rad * sph_deriv(dfz, z, fz)).min(2.0)));
                }
                _ => {}
            }
        }
        let covered = targets.par_iter().all(|&t| {
            next.iter().any(|&(w, rad)| sph_dist(w, t) <= rad)
        });
        if covered {
            return Ok(Some(m));
        }
        if next.is_empty() {
            return Ok(None);
        }
        images = next;
    }
    Ok(None)
}
