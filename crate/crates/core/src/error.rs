use std::path::PathBuf;

use thiserror::Error;

/// Which forbidden region an orbit entered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparationKind {
    Critical,
    Infinity,
}

impl std::fmt::Display for SeparationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeparationKind::Critical => write!(f, "crit"),
            SeparationKind::Infinity => write!(f, "infinity"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("the family parameter lambda must be nonzero")]
    ZeroParameter,
    #[error("point lies on the pole at lattice index ({m}, {n})")]
    PoleHit { m: i64, n: i64 },
    #[error("Newton iteration did not converge")]
    NewtonDivergence,
    #[error("orbit entered the {kind} neighbourhood at step {step}")]
    SeparationViolated { step: usize, kind: SeparationKind },
    #[error("no expanding iterate found up to N = {max_n}")]
    NoExpansion { max_n: usize },
    #[error("orbit hit a pole at step {step}")]
    PoleOnOrbit { step: usize },
    #[error("shadowing lost at pullback step {step}")]
    ShadowLost { step: usize },
    #[error("circle sampling too coarse: argument increment {increment:.3} rad")]
    InsufficientSampling { increment: f64 },
    #[error("|x| = {min_abs:e} on the sampling circle is too close to zero")]
    NearZero { min_abs: f64 },
    #[error("no parameter pair admits n >= 3 at this radius")]
    DegenerateRadius,
    #[error("critical orbit hit a pole prematurely at step {step}")]
    PrematurePole { step: usize },
    #[error("disc meets the neighbourhood U_delta")]
    DiscTouchesU,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
