//! Raw model parameters and the constants derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("lattice refinement n must be >= 1 (got {0})")]
    Refinement(u32),
    #[error("deme size N must be >= 2 (got {0})")]
    DemeSize(u32),
    #[error(
        "alpha must lie in (0, 1) (got {0}); the bistable results only hold for alpha < 1, \
         values in [1, 3/2) are not supported"
    )]
    Alpha(f64),
    #[error("selection strength s0 must be > 0 (got {0})")]
    Selection(f64),
    #[error("migration strength m must be > 0 (got {0})")]
    Migration(f64),
    #[error("(alpha + 1) * s_n = {0} must be < 1 so that the neutral class has positive rate")]
    NeutralRate(f64),
}

/// The five raw inputs of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    /// Sites per unit length.
    pub n: u32,
    /// Individuals per deme.
    #[serde(rename = "N")]
    pub big_n: u32,
    pub alpha: f64,
    pub s0: f64,
    pub m: f64,
}

/// Inverse wave width `sqrt(2 s0 / m)` and wavespeed `alpha sqrt(m s0 / 2)`.
/// These depend only on the continuum coefficients, not on the lattice.
pub fn wave_constants(alpha: f64, s0: f64, m: f64) -> (f64, f64) {
    ((2.0 * s0 / m).sqrt(), alpha * (m * s0 / 2.0).sqrt())
}

/// Raw parameters plus every derived constant, computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    raw: RawParams,
    s_n: f64,
    r_n: f64,
    kappa: f64,
    nu: f64,
}

impl ModelParams {
    pub fn new(n: u32, big_n: u32, alpha: f64, s0: f64, m: f64) -> Result<Self, ParamError> {
        Self::from_raw(RawParams { n, big_n, alpha, s0, m })
    }

    /// Validates `raw` and derives `s_n`, `r_n`, `kappa` and `nu`.
    pub fn from_raw(raw: RawParams) -> Result<Self, ParamError> {
        let RawParams { n, big_n, alpha, s0, m } = raw;
        if n < 1 {
            return Err(ParamError::Refinement(n));
        }
        if big_n < 2 {
            return Err(ParamError::DemeSize(big_n));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ParamError::Alpha(alpha));
        }
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(ParamError::Selection(s0));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(ParamError::Migration(m));
        }
        let nf = f64::from(n);
        let s_n = 2.0 * s0 / (nf * nf);
        if (alpha + 1.0) * s_n >= 1.0 {
            return Err(ParamError::NeutralRate((alpha + 1.0) * s_n));
        }
        let (kappa, nu) = wave_constants(alpha, s0, m);
        Ok(Self { raw, s_n, r_n: nf * nf / (2.0 * f64::from(big_n)), kappa, nu })
    }

    pub fn raw(&self) -> RawParams {
        self.raw
    }
    pub fn n(&self) -> u32 {
        self.raw.n
    }
    /// Deme size `N`.
    pub fn deme_size(&self) -> u32 {
        self.raw.big_n
    }
    pub fn alpha(&self) -> f64 {
        self.raw.alpha
    }
    pub fn s0(&self) -> f64 {
        self.raw.s0
    }
    pub fn m(&self) -> f64 {
        self.raw.m
    }
    /// Per-event selection probability `2 s0 / n^2`.
    pub fn s_n(&self) -> f64 {
        self.s_n
    }
    /// Time-scale rate `n^2 / (2N)`.
    pub fn r_n(&self) -> f64 {
        self.r_n
    }
    /// Inverse wave width `sqrt(2 s0 / m)`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    /// Wavespeed `alpha sqrt(m s0 / 2)`.
    pub fn nu(&self) -> f64 {
        self.nu
    }
    /// Lattice spacing `1/n`.
    pub fn spacing(&self) -> f64 {
        1.0 / f64::from(self.raw.n)
    }

    /// Total candidate-event rate at one deme, summed over the P, S, Q and
    /// inbound R Poisson families.
    pub fn site_candidate_rate(&self) -> f64 {
        let [p, s, q, r] = self.class_rates();
        p + s + q + r
    }

    /// Per-site rates of the P, S, Q and R families, in that order.
    pub fn class_rates(&self) -> [f64; 4] {
        let nn = f64::from(self.raw.big_n);
        let pairs = nn * (nn - 1.0);
        let r = self.r_n;
        [
            pairs * r * (1.0 - (self.raw.alpha + 1.0) * self.s_n),
            pairs * r * self.raw.alpha * self.s_n,
            pairs * (nn - 2.0) * r * self.s_n / nn,
            2.0 * self.raw.m * r * nn * nn,
        ]
    }

    /// Upper bound `N^2 r_n (1 + 2m)` on the per-site candidate rate.
    pub fn site_rate_cap(&self) -> f64 {
        let nn = f64::from(self.raw.big_n);
        nn * nn * self.r_n * (1.0 + 2.0 * self.raw.m)
    }
}
