//! Orbits of `f_λ = ℘_{Λ_λ}`, attracting-cycle detection and the
//! parameter trichotomy for both families.

use crate::error::{Error, Result};
use crate::lattice::{sph_deriv, sph_dist, Lattice, LatticeKind, ToleranceConfig, C64};

pub const DEFAULT_BUDGET: usize = 2000;
pub const DEFAULT_MAX_PERIOD: usize = 64;
/// Near-return threshold used when scanning an orbit tail for a cycle.
pub const CYCLE_DETECT_TOL: f64 = 1e-6;
/// Cycles with `|β| >= 1 - PARABOLIC_MARGIN` are not reported as attracting.
pub const PARABOLIC_MARGIN: f64 = 1e-6;
/// Relative distance at which an orbit point counts as an exact return to an
/// earlier point, making the orbit eventually periodic.
pub const CLOSURE_TOL: f64 = 1e-9;
const NEWTON_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    BudgetExhausted,
    PoleHit { step: usize, m: i64, n: i64 },
    EscapedSphericalBall { step: usize },
}

/// Finite forward orbit with per-step derivative data.
#[derive(Debug, Clone)]
pub struct OrbitTrace {
    pub start: C64,
    pub points: Vec<C64>,
    /// Flat derivative `℘′(points[k])`, one per applied step.
    pub derivs: Vec<C64>,
    /// Spherical derivative of each applied step.
    pub sph_derivs: Vec<f64>,
    pub outcome: Outcome,
}

impl OrbitTrace {
    pub fn last(&self) -> C64 {
        *self.points.last().expect("trace always holds its start point")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub period: usize,
    pub point: C64,
    pub multiplier: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    AttractingCycles { count: usize, cycle: Cycle },
    /// Pole-hit step of each critical value in label order (e₁, e₂, e₃).
    AllCriticalPrepole { steps: Vec<usize> },
    Indeterminate { iterations_used: usize },
}

impl Verdict {
    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::AttractingCycles { .. } => "AttractingCycles",
            Verdict::AllCriticalPrepole { .. } => "AllCriticalPrepole",
            Verdict::Indeterminate { .. } => "Indeterminate",
        }
    }
}

/// Modulus beyond which an iterate can only be the image of a point already
/// inside the pole neighbourhood.
pub fn escape_radius(lat: &Lattice) -> f64 {
    (lat.cfg.pole_eps * lat.lambda.norm()).powi(-2)
}

pub fn iterate(lat: &Lattice, z0: C64, max_iter: usize) -> OrbitTrace {
    let escape = escape_radius(lat);
    let mut points = Vec::with_capacity(max_iter.min(1 << 16) + 1);
    let mut derivs = Vec::with_capacity(max_iter.min(1 << 16));
    let mut sph_derivs = Vec::with_capacity(max_iter.min(1 << 16));
    let mut z = z0;
    points.push(z);
    let mut step = 0;
    let outcome = loop {
        if !z.is_finite() || z.norm() > escape {
            break Outcome::EscapedSphericalBall { step };
        }
        let (fz, dfz) = match lat.wp_pair(z) {
            Ok(v) => v,
            Err(Error::PoleHit { m, n }) => break Outcome::PoleHit { step, m, n },
            Err(_) => unreachable!("wp_pair only reports pole hits"),
        };
        if step == max_iter {
            break Outcome::BudgetExhausted;
        }
        derivs.push(dfz);
        sph_derivs.push(sph_deriv(dfz, z, fz));
        points.push(fz);
        z = fz;
        step += 1;
    };
    OrbitTrace {
        start: z0,
        points,
        derivs,
        sph_derivs,
        outcome,
    }
}

/// `(f^n(z), (f^n)′(z))` with the flat chain rule.
pub fn iterate_with_derivative(lat: &Lattice, z: C64, n: usize) -> Result<(C64, C64)> {
    let mut w = z;
    let mut d = C64::new(1.0, 0.0);
    for step in 0..n {
        let (fw, dfw) = lat.wp_pair(w).map_err(|_| Error::PoleOnOrbit { step })?;
        d *= dfw;
        w = fw;
    }
    Ok((w, d))
}

/// Solves `f^p(w) = w` by Newton from `start`.
pub fn refine_periodic_point(lat: &Lattice, start: C64, period: usize) -> Result<C64> {
    let tol = lat.cfg.newton_tol;
    let mut w = start;
    for _ in 0..NEWTON_STEPS {
        let (fw, dfw) = iterate_with_derivative(lat, w, period).map_err(|_| Error::NewtonDivergence)?;
        let denom = dfw - 1.0;
        if denom.norm() == 0.0 {
            return Err(Error::NewtonDivergence);
        }
        let step = (fw - w) / denom;
        w -= step;
        if !w.is_finite() {
            return Err(Error::NewtonDivergence);
        }
        if step.norm() <= tol * (1.0 + w.norm()) {
            let (fw, _) = iterate_with_derivative(lat, w, period).map_err(|_| Error::NewtonDivergence)?;
            if (fw - w).norm() <= 10.0 * tol * (1.0 + w.norm()) {
                return Ok(w);
            }
        }
    }
    Err(Error::NewtonDivergence)
}

/// Looks for a near-return of minimal period in the orbit tail and refines
/// it to a periodic point. Returns `Ok(None)` if the orbit ended at a pole or
/// no return below `tol` exists.
pub fn find_cycle(trace: &OrbitTrace, lat: &Lattice, tol: f64, max_period: usize) -> Result<Option<Cycle>> {
    if trace.outcome != Outcome::BudgetExhausted {
        return Ok(None);
    }
    let pts = &trace.points;
    let last = pts.len() - 1;
    let period = (1..=max_period).find(|&p| {
        last >= 2 * p - 1 && (0..p).all(|i| (pts[last - i] - pts[last - i - p]).norm() < tol)
    });
    let Some(period) = period else {
        return Ok(None);
    };
    let point = refine_periodic_point(lat, pts[last], period)?;
    if (point - pts[last]).norm() > 10.0 * tol.max(lat.cfg.newton_tol) {
        return Err(Error::NewtonDivergence);
    }
    let (_, multiplier) = iterate_with_derivative(lat, point, period).map_err(|_| Error::NewtonDivergence)?;
    Ok(Some(Cycle {
        period,
        point,
        multiplier,
    }))
}

/// All points of a refined cycle.
pub fn cycle_orbit(lat: &Lattice, cycle: &Cycle) -> Vec<C64> {
    let mut pts = Vec::with_capacity(cycle.period);
    let mut w = cycle.point;
    for _ in 0..cycle.period {
        pts.push(w);
        w = lat.wp(w).unwrap_or(C64::new(f64::INFINITY, 0.0));
    }
    pts
}

fn same_cycle(a: &[C64], b: &[C64], sep: f64) -> bool {
    a.iter().any(|&p| b.iter().any(|&q| sph_dist(p, q) <= sep))
}

/// Critical values whose orbits determine the dynamics: all three for the
/// triangular family, e₁ for the square family (e₂ = −e₁ shares its orbit
/// and e₃ is the pole at 0).
pub fn driving_crit_values(lat: &Lattice) -> Vec<C64> {
    match lat.kind {
        LatticeKind::Triangular => lat.crit_values.to_vec(),
        LatticeKind::Square => vec![lat.crit_values[0]],
    }
}

pub fn classify(kind: LatticeKind, lambda: C64, budget: usize, cfg: &ToleranceConfig) -> Result<Verdict> {
    let lat = Lattice::new(kind, lambda, cfg)?;
    Ok(classify_lattice(&lat, budget))
}

pub fn classify_lattice(lat: &Lattice, budget: usize) -> Verdict {
    let indeterminate = Verdict::Indeterminate {
        iterations_used: budget,
    };
    let traces: Vec<OrbitTrace> = driving_crit_values(lat)
        .into_iter()
        .map(|e| iterate(lat, e, budget))
        .collect();

    let pole_steps: Vec<usize> = traces
        .iter()
        .filter_map(|t| match t.outcome {
            Outcome::PoleHit { step, .. } => Some(step),
            _ => None,
        })
        .collect();
    if pole_steps.len() == traces.len() {
        let steps = match lat.kind {
            LatticeKind::Triangular => pole_steps,
            LatticeKind::Square => vec![pole_steps[0], pole_steps[0], 0],
        };
        return Verdict::AllCriticalPrepole { steps };
    }

    let max_period = DEFAULT_MAX_PERIOD.min(budget.div_ceil(2));
    let mut cycles = Vec::with_capacity(traces.len());
    for trace in &traces {
        match find_cycle(trace, lat, CYCLE_DETECT_TOL, max_period) {
            Ok(Some(c)) if c.multiplier.norm() < 1.0 - PARABOLIC_MARGIN => cycles.push(c),
            _ => return indeterminate,
        }
    }
    let sep = 10.0 * lat.cfg.newton_tol;
    let orbits: Vec<Vec<C64>> = cycles.iter().map(|c| cycle_orbit(lat, c)).collect();
    let mut distinct: Vec<usize> = Vec::new();
    for (i, orbit) in orbits.iter().enumerate() {
        if !distinct.iter().any(|&j| same_cycle(&orbits[j], orbit, sep)) {
            distinct.push(i);
        }
    }
    let count = distinct.len();
    let admissible = match lat.kind {
        LatticeKind::Triangular => count == 1 || count == 3,
        LatticeKind::Square => count == 1,
    };
    if !admissible {
        return indeterminate;
    }
    Verdict::AttractingCycles {
        count,
        cycle: cycles.swap_remove(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ToleranceConfig;

    fn superattracting_lambda(kind: LatticeKind) -> C64 {
        // e_λ = λ⁻²·e₁(1) equals the half-period λ/2 when λ³ = 2·e₁(1)
        let cfg = ToleranceConfig::default();
        let unit = Lattice::new(kind, C64::new(1.0, 0.0), &cfg).unwrap();
        C64::new((2.0 * unit.crit_values[0].re).cbrt(), 0.0)
    }

    #[test]
    fn pole_at_start() {
        let cfg = ToleranceConfig::default();
        let lat = Lattice::new(LatticeKind::Square, C64::new(1.2, 0.3), &cfg).unwrap();
        let t = iterate(&lat, C64::new(0.0, 0.0), 10);
        assert_eq!(t.outcome, Outcome::PoleHit { step: 0, m: 0, n: 0 });
        assert_eq!(t.points.len(), 1);
        assert!(t.sph_derivs.is_empty());
    }

    #[test]
    fn trace_lengths() {
        let cfg = ToleranceConfig::default();
        let lat = Lattice::new(LatticeKind::Square, C64::new(1.2, 0.3), &cfg).unwrap();
        let t = iterate(&lat, C64::new(0.3, 0.1), 7);
        if t.outcome == Outcome::BudgetExhausted {
            assert_eq!(t.points.len(), 8);
        }
        assert_eq!(t.sph_derivs.len(), t.points.len() - 1);
        assert_eq!(t.derivs.len(), t.points.len() - 1);
    }

    #[test]
    fn superattracting_fixed_critical_point() {
        let cfg = ToleranceConfig::default();
        for kind in [LatticeKind::Square, LatticeKind::Triangular] {
            let lam = superattracting_lambda(kind);
            let lat = Lattice::new(kind, lam, &cfg).unwrap();
            let trace = iterate(&lat, lat.crit_values[0], 200);
            let cycle = find_cycle(&trace, &lat, CYCLE_DETECT_TOL, 64).unwrap().unwrap();
            assert_eq!(cycle.period, 1);
            assert!(cycle.multiplier.norm() < 1e-6, "{kind}: {:?}", cycle.multiplier);
        }
    }

    #[test]
    fn superattracting_counts() {
        let cfg = ToleranceConfig::default();
        let lam = superattracting_lambda(LatticeKind::Triangular);
        match classify(LatticeKind::Triangular, lam, 500, &cfg).unwrap() {
            Verdict::AttractingCycles { count, .. } => assert_eq!(count, 3),
            v => panic!("{v:?}"),
        }
        let lam = superattracting_lambda(LatticeKind::Square);
        match classify(LatticeKind::Square, lam, 500, &cfg).unwrap() {
            Verdict::AttractingCycles { count, cycle } => {
                assert_eq!(count, 1);
                assert_eq!(cycle.period, 1);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn pole_trace_has_no_cycle() {
        let cfg = ToleranceConfig::default();
        let lat = Lattice::new(LatticeKind::Square, C64::new(1.0, 0.0), &cfg).unwrap();
        let trace = iterate(&lat, lat.gen1, 100);
        assert!(find_cycle(&trace, &lat, CYCLE_DETECT_TOL, 8).unwrap().is_none());
    }

    #[test]
    fn zero_parameter_rejected() {
        let cfg = ToleranceConfig::default();
        assert!(matches!(
            classify(LatticeKind::Square, C64::new(0.0, 0.0), 10, &cfg),
            Err(Error::ZeroParameter)
        ));
    }
}
