//! Independent oracles and fixed parameters shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use wp_dynamics::lattice::{LatticeKind, C64};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Jacobi theta functions with nome `q = exp(iπτ)`, as functions of `v`.
pub struct Theta {
    tau: C64,
}

impl Theta {
    const TERMS: i32 = 40;

    pub fn new(tau: C64) -> Self {
        Theta { tau }
    }

    fn q_pow(&self, e: f64) -> C64 {
        (C64::i() * PI * self.tau * e).exp()
    }

    pub fn t1(&self, v: C64) -> C64 {
        (0..Self::TERMS)
            .map(|n| {
                let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                let h = n as f64 + 0.5;
                self.q_pow(h * h) * (v * (2 * n + 1) as f64).sin() * s
            })
            .sum::<C64>()
            * 2.0
    }

    pub fn t2(&self, v: C64) -> C64 {
        (0..Self::TERMS)
            .map(|n| {
                let h = n as f64 + 0.5;
                self.q_pow(h * h) * (v * (2 * n + 1) as f64).cos()
            })
            .sum::<C64>()
            * 2.0
    }

    pub fn t3(&self, v: C64) -> C64 {
        C64::new(1.0, 0.0)
            + (1..Self::TERMS)
                .map(|n| self.q_pow((n * n) as f64) * (v * (2 * n) as f64).cos())
                .sum::<C64>()
                * 2.0
    }

    pub fn t4(&self, v: C64) -> C64 {
        C64::new(1.0, 0.0)
            + (1..Self::TERMS)
                .map(|n| {
                    let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                    self.q_pow((n * n) as f64) * (v * (2 * n) as f64).cos() * s
                })
                .sum::<C64>()
                * 2.0
    }
}

fn tau(kind: LatticeKind) -> C64 {
    match kind {
        LatticeKind::Triangular => c(-0.5, 3f64.sqrt() / 2.0),
        LatticeKind::Square => c(0.0, 1.0),
    }
}

/// ℘ of the lattice `λ[1, τ]` from the theta-quotient formula.
pub fn wp_theta(kind: LatticeKind, lambda: C64, z: C64) -> C64 {
    let th = Theta::new(tau(kind));
    let u = z / lambda;
    let zero = c(0.0, 0.0);
    let (a2, a3) = (th.t2(zero), th.t3(zero));
    let v = u * PI;
    let ratio = th.t4(v) / th.t1(v);
    let unit = (a2 * a2 * a3 * a3 * ratio * ratio - (a2.powi(4) + a3.powi(4)) / 3.0) * (PI * PI);
    unit / (lambda * lambda)
}

/// `Σ′ ω^{-2k}` over `λ[1, τ]` with `|m|, |n| ≤ radius`.
pub fn eisenstein_box(kind: LatticeKind, lambda: C64, weight: i32, radius: i64) -> C64 {
    let t = tau(kind);
    let mut s = c(0.0, 0.0);
    for m in -radius..=radius {
        for n in -radius..=radius {
            if (m, n) != (0, 0) {
                let w = (c(m as f64, 0.0) + t * n as f64) * lambda;
                s += w.powi(-weight);
            }
        }
    }
    s
}

/// Relative-or-absolute closeness.
pub fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

/// Square-family parameter whose critical orbit lands on a repelling fixed
/// point after one step; found by the preperiodic-parameter search over
/// `[0.5, 3]²` at grid 64.
pub const SQUARE_CANDIDATE: (f64, f64) = (2.922783111067344, 1.6874696159576226);
/// Triangular analogue of [`SQUARE_CANDIDATE`].
pub const TRIANGULAR_CANDIDATE: (f64, f64) = (2.141514130855346, 1.2364037599227218);
/// Square-family root of `e_λ = p_{-1,0}(λ)`.
pub const SQUARE_PREPOLE_ROOT: (f64, f64) = (0.9507466806537588, 1.6467415560197725);

pub fn at(p: (f64, f64)) -> C64 {
    c(p.0, p.1)
}
