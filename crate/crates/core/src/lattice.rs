//! Weierstrass ℘ and ℘′ for the triangular and square lattice families.
//!
//! Every lattice in the two families is `λ·[1, τ]` with `τ = e^{2πi/3}` or
//! `τ = i`, so evaluation goes through the unit lattice and homogeneity:
//! `℘_λ(z) = λ⁻²·℘₁(z/λ)` and `℘′_λ(z) = λ⁻³·℘′₁(z/λ)`.
//!
//! On the unit lattice the argument is first reduced into the cell centred
//! on the pole at 0. The defining series is then split in two: the 24 lattice
//! points of the 5×5 index window are summed directly, and every point
//! outside the window is accounted for by its Taylor expansion
//!
//! ```text
//! Σ_{ω ∉ window} [1/(u−ω)² − 1/ω²] = Σ_{k≥1} (2k+1)·T_{2k+2}·u^{2k},
//! T_p = G_p − Σ_{ω ∈ window} ω^{-p}
//! ```
//!
//! with the Eisenstein sums `G_p` taken from `g₂`, `g₃` (q-series) and the
//! Laurent-coefficient recurrence. The number of tail terms is picked from an
//! explicit bound on the neglected outside sum so the truncation error stays
//! below `eval_tol`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Index half-width of the directly summed window.
const WINDOW: i64 = 2;
/// Hard cap on the number of tail coefficients.
const MAX_TAIL_TERMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatticeKind {
    Triangular,
    Square,
}

impl LatticeKind {
    /// Generator ratio `gen2 / gen1`.
    pub fn ratio(self) -> C64 {
        match self {
            LatticeKind::Triangular => C64::new(-0.5, 0.75f64.sqrt()),
            LatticeKind::Square => C64::new(0.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LatticeKind::Triangular => "triangular",
            LatticeKind::Square => "square",
        }
    }
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" | "tri" | "t" => Ok(LatticeKind::Triangular),
            "square" | "sq" | "s" => Ok(LatticeKind::Square),
            other => Err(Error::InvalidConfig(format!("unknown lattice kind '{other}'"))),
        }
    }
}

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// Absolute truncation target for ℘ and ℘′.
    pub eval_tol: f64,
    /// Generator-coordinate distance to a lattice point treated as a pole hit.
    pub pole_eps: f64,
    pub newton_tol: f64,
    /// Shell cutoff for direct Eisenstein sums.
    pub max_lattice_radius: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            eval_tol: 1e-12,
            pole_eps: 1e-6,
            newton_tol: 1e-10,
            max_lattice_radius: 300,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.eval_tol > 0.0
            && self.pole_eps > 0.0
            && self.newton_tol > 0.0
            && self.max_lattice_radius > 0;
        if !positive {
            return Err(Error::InvalidConfig("tolerances must be strictly positive".into()));
        }
        if self.eval_tol >= self.pole_eps {
            return Err(Error::InvalidConfig("eval_tol must be smaller than pole_eps".into()));
        }
        Ok(())
    }
}

/// A point reduced into the fundamental cell: `z = z + m·gen1 + n·gen2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reduced {
    pub z: C64,
    pub m: i64,
    pub n: i64,
    /// Generator coordinates of `z`, each in `[-1/2, 1/2)`.
    pub coords: (f64, f64),
}

impl Reduced {
    /// Euclidean norm of the generator coordinates (distance to the pole at 0).
    pub fn pole_distance(&self) -> f64 {
        self.coords.0.hypot(self.coords.1)
    }
}

/// Per-kind constants of the unit lattice `[1, τ]`, built once.
#[derive(Debug)]
struct UnitTables {
    tau: C64,
    g2: C64,
    g3: C64,
    window: Vec<C64>,
    /// `-Σ_{window} 1/ω²`
    window_const: C64,
    /// `(2k+1)·T_{2k+2}` for `k = 1..=MAX_TAIL_TERMS`.
    tail: Vec<C64>,
    /// `bounds[k]`: bound on the outside sum neglected when keeping `k` terms.
    bounds: Vec<f64>,
    /// `℘₁(1/2)`.
    e1: C64,
}

impl UnitTables {
    fn build(kind: LatticeKind) -> Self {
        let tau = kind.ratio();
        let g2 = eisenstein_q(4, tau) * 60.0;
        let g3 = eisenstein_q(6, tau) * 140.0;
        let mut window = Vec::with_capacity(24);
        for m in -WINDOW..=WINDOW {
            for n in -WINDOW..=WINDOW {
                if m != 0 || n != 0 {
                    window.push(C64::new(m as f64, 0.0) + tau * n as f64);
                }
            }
        }
        let window_const = -window.iter().map(|w| (w * w).inv()).sum::<C64>();
        let coeffs = laurent_coefficients(g2, g3, MAX_TAIL_TERMS + 1);
        let tail = (1..=MAX_TAIL_TERMS)
            .map(|k| {
                let p = 2 * k + 2;
                // c_{k+1} = (2k+1)·G_{2k+2}
                let g = coeffs[k + 1] / (2 * k + 1) as f64;
                let inside: C64 = window.iter().map(|w| w.powi(-(p as i32))).sum();
                (g - inside) * (2 * k + 1) as f64
            })
            .collect();
        let mut tables = UnitTables {
            tau,
            g2,
            g3,
            window,
            window_const,
            tail,
            bounds: tail_bounds(tau),
            e1: C64::new(0.0, 0.0),
        };
        tables.e1 = tables.eval(C64::new(0.5, 0.0), MAX_TAIL_TERMS).0;
        tables
    }

    /// `(℘₁(u), ℘′₁(u))` for a reduced, nonzero `u`, keeping `len` tail terms.
    fn eval(&self, u: C64, len: usize) -> (C64, C64) {
        let inv = u.inv();
        let inv2 = inv * inv;
        let mut p = inv2 + self.window_const;
        let mut dp = inv2 * inv * -2.0;
        for &w in &self.window {
            let d = (u - w).inv();
            let d2 = d * d;
            p += d2;
            dp -= d2 * d * 2.0;
        }
        let s = u * u;
        let mut q = C64::new(0.0, 0.0);
        let mut dq = C64::new(0.0, 0.0);
        for (idx, &a) in self.tail[..len].iter().enumerate().rev() {
            let k = (idx + 1) as f64;
            q = q * s + a;
            dq = dq * s + a * k;
        }
        p += q * s;
        dp += dq * u * 2.0;
        (p, dp)
    }

    fn get(kind: LatticeKind) -> &'static UnitTables {
        static TRIANGULAR: OnceLock<UnitTables> = OnceLock::new();
        static SQUARE: OnceLock<UnitTables> = OnceLock::new();
        let cell = match kind {
            LatticeKind::Triangular => &TRIANGULAR,
            LatticeKind::Square => &SQUARE,
        };
        cell.get_or_init(|| UnitTables::build(kind))
    }
}

#[derive(Debug, Clone)]
struct UnitSeries {
    tau: C64,
    tables: &'static UnitTables,
    /// Tail terms in use.
    len: usize,
}

impl UnitSeries {
    fn new(kind: LatticeKind, target: f64) -> Self {
        let tables = UnitTables::get(kind);
        let len = (1..MAX_TAIL_TERMS)
            .find(|&k| tables.bounds[k] <= target)
            .unwrap_or(MAX_TAIL_TERMS);
        UnitSeries {
            tau: tables.tau,
            tables,
            len,
        }
    }

    fn reduce(&self, u: C64) -> (C64, i64, i64, f64, f64) {
        let y = u.im / self.tau.im;
        let x = u.re - y * self.tau.re;
        let m = (x + 0.5).floor();
        let n = (y + 0.5).floor();
        let u_red = u - m - self.tau * n;
        (u_red, m as i64, n as i64, x - m, y - n)
    }

    fn eval(&self, u: C64) -> (C64, C64) {
        self.tables.eval(u, self.len)
    }
}

/// Laurent coefficients `c_k` of `℘(z) = z⁻² + Σ_{k≥2} c_k z^{2k-2}`,
/// indices `0..=kmax` (entries 0 and 1 unused).
pub fn laurent_coefficients(g2: C64, g3: C64, kmax: usize) -> Vec<C64> {
    let mut c = vec![C64::new(0.0, 0.0); kmax.max(3) + 1];
    c[2] = g2 / 20.0;
    c[3] = g3 / 28.0;
    for k in 4..=kmax {
        let s: C64 = (2..=k - 2).map(|m| c[m] * c[k - m]).sum();
        c[k] = s * (3.0 / ((2 * k + 1) as f64 * (k - 3) as f64));
    }
    c.truncate(kmax + 1);
    c
}

/// `bounds[k]` bounds the outside-window sum neglected when `k` tail terms
/// are kept, uniformly over the reduced cell of the unit lattice.
fn tail_bounds(tau: C64) -> Vec<f64> {
    // |ω| >= c·s on index shell s (8s points per shell)
    let c = tau.im * 1f64.min(1.0 / tau.norm());
    let s0 = (WINDOW + 1) as f64;
    let shell_bound = |p: f64| 8.0 * c.powf(-p) * (s0.powf(1.0 - p) + s0.powf(2.0 - p) / (p - 2.0));
    let r_max = [
        C64::new(0.5, 0.0) + tau * 0.5,
        C64::new(0.5, 0.0) - tau * 0.5,
    ]
    .iter()
    .map(|z| z.norm())
    .fold(0.0, f64::max);
    // term k of the outside sum; decays geometrically
    let terms: Vec<f64> = (0..MAX_TAIL_TERMS + 64)
        .map(|k| (2 * k + 1) as f64 * r_max.powi(2 * k as i32) * shell_bound((2 * k + 2) as f64))
        .collect();
    let mut suffix = vec![0.0; terms.len() + 1];
    for k in (0..terms.len()).rev() {
        suffix[k] = suffix[k + 1] + terms[k];
    }
    // keeping k terms leaves terms k+1.. out
    suffix[1..].to_vec()
}

/// Riemann zeta for real `s >= 4` by Euler–Maclaurin.
fn zeta(s: f64) -> f64 {
    const N: usize = 20;
    const BERNOULLI: [f64; 5] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let n = N as f64;
    let mut total: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    total += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let mut fact = 1.0;
    for (j, b) in BERNOULLI.iter().enumerate() {
        let j = j + 1;
        fact *= ((2 * j - 1) * (2 * j)) as f64;
        let rising: f64 = (0..2 * j - 1).map(|t| s + t as f64).product();
        total += b / fact * rising * n.powf(-s - (2 * j) as f64 + 1.0);
    }
    total
}

fn divisor_power_sum(power: i32, n: u64) -> f64 {
    (1..=n).filter(|&d| n.is_multiple_of(d)).map(|d| (d as f64).powi(power)).sum()
}

/// Eisenstein sum `G_{2k}` of the lattice `[1, τ]` (Im τ > 0) from its
/// q-expansion. Intended for small weights (4 and 6).
pub fn eisenstein_q(weight: u32, tau: C64) -> C64 {
    let q = (C64::new(0.0, 2.0 * PI) * tau).exp();
    let mut series = C64::new(0.0, 0.0);
    let mut qn = C64::new(1.0, 0.0);
    for n in 1..200u64 {
        qn *= q;
        let term = qn * divisor_power_sum(weight as i32 - 1, n);
        series += term;
        if term.norm() < 1e-20 * series.norm().max(1e-300) {
            break;
        }
    }
    let factorial: f64 = (1..weight).map(f64::from).product();
    let prefactor = C64::new(0.0, 2.0 * PI).powu(weight) * (2.0 / factorial);
    C64::new(2.0 * zeta(weight as f64), 0.0) + prefactor * series
}

/// Truncated direct sum `Σ' ω^{-weight}` over the index box
/// `max(|m|,|n|) <= radius` of `Λ_λ`. Slow; used as a cross-check.
pub fn eisenstein_direct(kind: LatticeKind, lambda: C64, weight: i32, radius: usize) -> C64 {
    let tau = kind.ratio();
    let r = radius as i64;
    let mut acc = C64::new(0.0, 0.0);
    // shells from the outside in keep the small terms from being swamped
    for s in (1..=r).rev() {
        let mut shell = C64::new(0.0, 0.0);
        for m in -s..=s {
            for n in -s..=s {
                if m.abs().max(n.abs()) == s {
                    let w = (C64::new(m as f64, 0.0) + tau * n as f64) * lambda;
                    shell += w.powi(-weight);
                }
            }
        }
        acc += shell;
    }
    acc
}

/// A lattice `Λ_λ = [λ, τλ]` with its invariants and critical data.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub kind: LatticeKind,
    pub lambda: C64,
    pub gen1: C64,
    pub gen2: C64,
    pub g2: C64,
    pub g3: C64,
    pub half_periods: [C64; 3],
    pub crit_values: [C64; 3],
    pub cfg: ToleranceConfig,
    inv_lambda: C64,
    unit: UnitSeries,
}

pub fn make_lattice(kind: LatticeKind, lambda: C64, cfg: &ToleranceConfig) -> Result<Lattice> {
    Lattice::new(kind, lambda, cfg)
}

impl Lattice {
    pub fn new(kind: LatticeKind, lambda: C64, cfg: &ToleranceConfig) -> Result<Self> {
        if lambda.norm() == 0.0 || !lambda.is_finite() {
            return Err(Error::ZeroParameter);
        }
        let tau = kind.ratio();
        let target = cfg.eval_tol * lambda.norm_sqr();
        let unit = UnitSeries::new(kind, target);
        let (g2_unit, g3_unit) = (unit.tables.g2, unit.tables.g3);

        let inv_lambda = lambda.inv();
        let gen1 = lambda;
        let gen2 = tau * lambda;
        let half_periods = [gen1 * 0.5, gen2 * 0.5, (gen1 + gen2) * 0.5];
        let mut lat = Lattice {
            kind,
            lambda,
            gen1,
            gen2,
            g2: g2_unit * inv_lambda.powi(4),
            g3: g3_unit * inv_lambda.powi(6),
            half_periods,
            crit_values: [C64::new(0.0, 0.0); 3],
            cfg: *cfg,
            inv_lambda,
            unit,
        };
        let il2 = inv_lambda * inv_lambda;
        let e1 = lat.unit.tables.e1 * il2;
        lat.crit_values = match kind {
            LatticeKind::Square => [e1, -e1, C64::new(0.0, 0.0)],
            LatticeKind::Triangular => [e1, e1 * tau, e1 * tau * tau],
        };
        Ok(lat)
    }

    /// Generator ratio τ.
    pub fn tau(&self) -> C64 {
        self.unit.tau
    }

    /// Number of Taylor coefficients used for the outside-window tail.
    pub fn tail_len(&self) -> usize {
        self.unit.len
    }

    pub fn reduce(&self, z: C64) -> Reduced {
        let (u_red, m, n, x, y) = self.unit.reduce(z * self.inv_lambda);
        Reduced {
            z: u_red * self.lambda,
            m,
            n,
            coords: (x, y),
        }
    }

    /// `(℘(z), ℘′(z))` sharing one reduction.
    pub fn wp_pair(&self, z: C64) -> Result<(C64, C64)> {
        let (u_red, m, n, x, y) = self.unit.reduce(z * self.inv_lambda);
        if x.hypot(y) < self.cfg.pole_eps {
            return Err(Error::PoleHit { m, n });
        }
        // evaluate at a sign-canonical representative so that ℘ is exactly
        // even and ℘′ exactly odd in floating point
        let flip = u_red.re < 0.0 || (u_red.re == 0.0 && u_red.im < 0.0);
        let (p, dp) = if flip {
            let (p, dp) = self.unit.eval(-u_red);
            (p, -dp)
        } else {
            self.unit.eval(u_red)
        };
        let il2 = self.inv_lambda * self.inv_lambda;
        Ok((p * il2, dp * il2 * self.inv_lambda))
    }

    pub fn wp(&self, z: C64) -> Result<C64> {
        self.wp_pair(z).map(|(p, _)| p)
    }

    pub fn wp_prime(&self, z: C64) -> Result<C64> {
        self.wp_pair(z).map(|(_, dp)| dp)
    }

    /// Pole `j·gen1 + k·gen2`.
    pub fn pole(&self, j: i64, k: i64) -> C64 {
        self.gen1 * j as f64 + self.gen2 * k as f64
    }

    /// Spherical distance from `z` to the nearest critical point, i.e. the
    /// nearest translate of a half-period.
    pub fn crit_distance(&self, z: C64) -> f64 {
        if !z.is_finite() {
            return 0.0;
        }
        let r = self.reduce(z);
        let base = z - r.z;
        let mut best = f64::INFINITY;
        for hp in &self.half_periods {
            for a in -2..=2 {
                for b in -2..=2 {
                    let c = base + hp + self.pole(a, b);
                    best = best.min(sph_dist(z, c));
                }
            }
        }
        best
    }

    /// Non-pole critical values, in label order. For the square family the
    /// third critical value is the pole at 0 and is omitted.
    pub fn finite_crit_values(&self) -> &[C64] {
        match self.kind {
            LatticeKind::Triangular => &self.crit_values,
            LatticeKind::Square => &self.crit_values[..2],
        }
    }
}

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Finite(C64),
    Infinity,
}

impl From<C64> for Point {
    fn from(z: C64) -> Self {
        if z.is_finite() {
            Point::Finite(z)
        } else {
            Point::Infinity
        }
    }
}

/// Chordal distance on the sphere of diameter 2.
pub fn sph_dist(a: impl Into<Point>, b: impl Into<Point>) -> f64 {
    match (a.into(), b.into()) {
        (Point::Infinity, Point::Infinity) => 0.0,
        (Point::Finite(z), Point::Infinity) | (Point::Infinity, Point::Finite(z)) => {
            2.0 / (1.0 + z.norm_sqr()).sqrt()
        }
        (Point::Finite(z), Point::Finite(w)) => {
            2.0 * (z - w).norm() / ((1.0 + z.norm_sqr()) * (1.0 + w.norm_sqr())).sqrt()
        }
    }
}

/// Spherical derivative `|f′(z)|·(1+|z|²)/(1+|f(z)|²)`.
pub fn sph_deriv(fprime: C64, z: C64, fz: C64) -> f64 {
    fprime.norm() * (1.0 + z.norm_sqr()) / (1.0 + fz.norm_sqr())
}
