mod common;

use common::*;
use wp_dynamics::error::SeparationKind;
use wp_dynamics::hyperbolic::*;
use wp_dynamics::lattice::*;
use wp_dynamics::Error;

fn cfg() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn sample(kind: LatticeKind, p: (f64, f64), m: usize, delta: f64) -> HyperbolicSample {
    build_sample(kind, at(p), m, delta, &cfg()).unwrap()
}

fn candidates() -> Vec<HyperbolicSample> {
    vec![
        sample(LatticeKind::Square, SQUARE_CANDIDATE, 200, 0.05),
        sample(LatticeKind::Triangular, TRIANGULAR_CANDIDATE, 200, 0.05),
    ]
}

/// Winding of `f` around 0 along `|λ − λ0| = rho` by summed principal
/// arguments.
fn winding_oracle(f: impl Fn(C64) -> C64, l0: C64, rho: f64, n: usize) -> f64 {
    let pts: Vec<C64> = (0..=n)
        .map(|k| f(l0 + C64::from_polar(rho, std::f64::consts::TAU * k as f64 / n as f64)))
        .collect();
    pts.windows(2).map(|w| (w[1] / w[0]).arg()).sum::<f64>() / std::f64::consts::TAU
}

#[test]
fn sample_records_separation() {
    for delta in [0.02, 0.05] {
        for s in [
            sample(LatticeKind::Square, SQUARE_CANDIDATE, 200, delta),
            sample(LatticeKind::Triangular, TRIANGULAR_CANDIDATE, 200, delta),
        ] {
            assert_eq!(s.points.len(), 201);
            assert!(s.n_exp >= 1 && s.n_exp <= 64);
            assert!(s.min_crit_dist >= delta && s.min_inf_dist >= delta);
            let lat = s.lattice();
            let crit = s.points.iter().map(|&z| lat.crit_distance(z)).fold(f64::INFINITY, f64::min);
            assert_eq!(crit, s.min_crit_dist);
        }
    }
}

#[test]
fn separation_violation_is_reported() {
    let s = sample(LatticeKind::Square, SQUARE_CANDIDATE, 200, 0.05);
    let too_big = s.min_crit_dist * 1.01;
    assert!(too_big < s.min_inf_dist);
    let err = build_sample(LatticeKind::Square, at(SQUARE_CANDIDATE), 200, too_big, &cfg()).unwrap_err();
    assert!(matches!(err, Error::SeparationViolated { kind: SeparationKind::Critical, .. }), "{err:?}");
    let err = build_sample(LatticeKind::Square, at(SQUARE_CANDIDATE), 200, 1.5, &cfg()).unwrap_err();
    assert!(matches!(err, Error::SeparationViolated { step: 0, .. }), "{err:?}");
}

#[test]
fn single_point_sample() {
    let s = sample(LatticeKind::Square, SQUARE_CANDIDATE, 0, 0.05);
    let lat = s.lattice();
    assert_eq!(s.points, vec![lat.crit_values[0]]);
    assert_eq!(s.min_crit_dist, lat.crit_distance(lat.crit_values[0]));
    assert_eq!(s.min_inf_dist, sph_dist(lat.crit_values[0], Point::Infinity));
}

#[test]
fn adapted_metric_examples() {
    for s in candidates() {
        let lat = s.lattice();
        assert_eq!(adapted_metric(c(0.37, -0.21), lat, 1, &cfg()).unwrap(), 1.0);
        assert!((adapted_metric(lat.half_periods[0], lat, 2, &cfg()).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(adapted_metric(lat.gen1, lat, 3, &cfg()), Err(Error::PoleOnOrbit { step: 0 })));

        // one-step expansion in the adapted metric, checked pointwise
        let c1 = s
            .points
            .iter()
            .map(|&z| adapted_metric(z, lat, s.n_exp, &cfg()).unwrap())
            .fold(0.0, f64::max);
        let bound = 1.0 + (s.a_tilde - 1.0) / (s.n_exp as f64 * c1);
        assert!(bound > 1.0);
        for &z in &s.points {
            let (w, d) = lat.wp_pair(z).unwrap();
            let ratio = sph_deriv(d, z, w) * adapted_metric(w, lat, s.n_exp, &cfg()).unwrap()
                / adapted_metric(z, lat, s.n_exp, &cfg()).unwrap();
            assert!(ratio >= bound, "{z}: {ratio} < {bound}");
        }
        let report = adapted_expansion(&s).unwrap();
        assert_eq!(report.c1, c1);
        assert!(report.min_ratio >= report.bound);
    }
}

#[test]
fn motion_is_identity_at_base() {
    for s in candidates() {
        for &z in s.points.iter().take(3) {
            let f = track_motion(&s, z, s.lambda0, 48, &cfg()).unwrap();
            assert!((f.h_value - z).norm() <= cfg().eval_tol);
            assert!(f.conj_residual < cfg().eval_tol);
            assert_eq!(f.steps_used, 48);
        }
    }
}

#[test]
fn motion_conjugates_dynamics() {
    for s in candidates() {
        let l = s.lambda0 + c(3e-4, -2e-4);
        let lat = Lattice::new(s.kind(), l, &cfg()).unwrap();
        for i in 0..4 {
            let here = track_motion(&s, s.points[i], l, 48, &cfg()).unwrap();
            let next = track_motion(&s, s.points[i + 1], l, 48, &cfg()).unwrap();
            let image = lat.wp(here.h_value).unwrap();
            assert!((next.h_value - image).norm() < 10.0 * cfg().newton_tol);
            assert!(here.conj_residual < 10.0 * cfg().newton_tol);
        }
    }
}

#[test]
fn shadowing_is_cauchy_in_depth() {
    for s in candidates() {
        let l = s.lambda0 + c(1e-3, 5e-4);
        let e = s.points[0];
        let rate = shadowing_rate(&s, e, l, &cfg()).unwrap();
        assert!(rate > 1.0, "rate {rate}");
        let eps = s.hcfg.shadow_eps;
        for n in 2..=6 {
            let a = track_motion(&s, e, l, n, &cfg()).unwrap().h_value;
            let b = track_motion(&s, e, l, n + 10, &cfg()).unwrap().h_value;
            let bound = 2.0 * eps * rate.powi(-(n as i32));
            assert!((a - b).norm() < bound, "n={n}: {} vs {bound}", (a - b).norm());
        }
    }
}

#[test]
fn transversality_function() {
    for s in candidates() {
        assert!(x_function(&s, s.lambda0, &cfg()).unwrap().norm() <= cfg().eval_tol);
        let nonzero = (0..16).any(|k| {
            let l = s.lambda0 + C64::from_polar(1e-3 * (k + 1) as f64 / 16.0, 2.4 * k as f64);
            x_function(&s, l, &cfg()).unwrap().norm() > 0.0
        });
        assert!(nonzero);
    }
}

#[test]
fn order_of_vanishing_matches_winding_oracle() {
    for s in candidates() {
        for rho in [1e-3, 1e-4] {
            let k = order_k(&s, rho, 64, &cfg()).unwrap();
            assert!(k >= 1);
            assert_eq!(order_k(&s, rho, 128, &cfg()).unwrap(), k);
            let oracle = winding_oracle(|l| x_function(&s, l, &cfg()).unwrap(), s.lambda0, rho, 256);
            assert!((oracle - k as f64).abs() < 1e-9, "{oracle} vs {k}");
        }
    }
}

#[test]
fn winding_of_monomials() {
    let l0 = c(1.2, -0.4);
    let cube = |l: C64| Ok((l - l0).powi(3));
    assert_eq!(winding_number(cube, l0, 1e-2, 64, 0.0).unwrap(), 3);
    let inv = |l: C64| Ok((l - l0).inv());
    assert_eq!(winding_number(inv, l0, 1e-2, 64, 0.0).unwrap(), -1);
    assert!(matches!(
        winding_number(cube, l0, 1e-2, 4, 0.0),
        Err(Error::InsufficientSampling { .. })
    ));
    assert!(matches!(winding_number(cube, l0, 1e-2, 64, 1.0), Err(Error::NearZero { .. })));
}

#[test]
fn expansion_envelope() {
    for s in candidates() {
        let r = fit_expansion(&s, 12).unwrap();
        assert_eq!(r.per_step_min.len(), 13);
        assert_eq!(r.per_step_min[0], 1.0);
        let lat = s.lattice();
        let direct = s
            .points
            .iter()
            .map(|&z| {
                let (w, d) = lat.wp_pair(z).unwrap();
                sph_deriv(d, z, w)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((r.per_step_min[1] - direct).abs() <= 1e-12 * direct);
        assert!(r.a > 1.0 && r.c > 0.0);
        assert!(r.envelope_holds());
        for (k, m) in r.per_step_min.iter().enumerate() {
            assert!(*m >= r.c * r.a.powi(k as i32));
        }
    }
}

#[test]
fn distortion_is_small_at_tiny_radius() {
    for s in candidates() {
        let d = distortion_report(&s, 1e-6, 20, &cfg()).unwrap();
        assert_eq!(d.pairs.len(), 20);
        assert!(d.max_ratio < 0.1, "{}", d.max_ratio);
        assert!(d.pairs.iter().any(|p| p.n >= 3));
        assert!(d.transfer_max < 0.1, "{}", d.transfer_max);
    }
}

#[test]
fn distortion_vanishes_for_identical_parameters() {
    // at r = 1e-300 both parameters of every pair round to λ0
    let s = sample(LatticeKind::Square, SQUARE_CANDIDATE, 200, 0.05);
    let d = distortion_report(&s, 1e-300, 5, &cfg()).unwrap();
    for p in &d.pairs {
        assert_eq!(p.a, p.b);
        assert_eq!(p.ratio, 0.0);
    }
    assert_eq!(d.max_ratio, 0.0);
}

#[test]
fn report_mentions_every_section() {
    let s = sample(LatticeKind::Square, SQUARE_CANDIDATE, 200, 0.05);
    let e = fit_expansion(&s, 8).unwrap();
    let a = adapted_expansion(&s).unwrap();
    let d = distortion_report(&s, 1e-6, 20, &cfg()).unwrap();
    let text = format_report(&s, &e, &a, 1e-15, Some(1), &[d]);
    for key in ["lambda0", "N_exp", "expansion C", "adapted C1", "max_conj_residual", "K = 1", "r,max_ratio"] {
        assert!(text.contains(key), "missing {key}");
    }
}
