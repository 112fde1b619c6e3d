//! Process model: AR(2) coefficients, innovation laws and the joint law of
//! the two pre-sample values `(X_0, X_{-1})`.

mod initial;
mod innovation;

pub use initial::{clipped_initial, initial_law, ClippedInitial, EmpiricalLaw, InitMode, InitialLaw};
pub use innovation::{gaussian_innovation, logistic_innovation, InnovationModel};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the generator recorded in every Monte Carlo artifact.
pub const RNG_NAME: &str =
    "ChaCha8Rng(seed_from_u64(seed)); stream c for initial-law chunk c, stream 2^40 + c for Monte Carlo chunk c";

/// Validated coefficients of `X_i = e_i + r1 X_{i-1} + r2 X_{i-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ARParams {
    r1: f64,
    r2: f64,
    sigma_e: f64,
}

impl ARParams {
    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn sigma_e(&self) -> f64 {
        self.sigma_e
    }

    /// `r1^2 + r2`, the coefficient of `X_{n-2}` in `X_n`.
    pub fn s(&self) -> f64 {
        self.r1 * self.r1 + self.r2
    }

    #[inline]
    pub fn step(&self, e: f64, x1: f64, x2: f64) -> f64 {
        e + self.r1 * x1 + self.r2 * x2
    }
}

pub fn validate_params(r1: f64, r2: f64, sigma_e: f64) -> Result<ARParams> {
    if !(r1.is_finite() && r2.is_finite() && sigma_e.is_finite()) {
        return Err(Error::InvalidParameter("r1, r2 and sigma_e must be finite".into()));
    }
    if sigma_e <= 0.0 {
        return Err(Error::InvalidParameter(format!("sigma_e must be > 0, got {sigma_e}")));
    }
    if r1 <= 0.0 || r1 * r1 + r2 <= 0.0 {
        return Err(Error::SignConditionViolated { r1, r2 });
    }
    if !(r1 + r2 < 1.0 && r2 - r1 < 1.0 && r2.abs() < 1.0) {
        return Err(Error::NonStationary { r1, r2 });
    }
    Ok(ARParams { r1, r2, sigma_e })
}

/// Stationary variance and lag-1/lag-2 autocorrelations (Yule–Walker).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryMoments {
    pub var_x: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl StationaryMoments {
    pub fn sd_x(&self) -> f64 {
        self.var_x.sqrt()
    }
}

pub fn stationary_moments(params: &ARParams) -> StationaryMoments {
    let (r1, r2, s) = (params.r1, params.r2, params.sigma_e);
    let var_x = s * s * (1.0 - r2) / ((1.0 + r2) * ((1.0 - r2).powi(2) - r1 * r1));
    let rho1 = r1 / (1.0 - r2);
    let rho2 = r2 + r1 * rho1;
    StationaryMoments { var_x, rho1, rho2 }
}

/// Generator for one chunk of work: one ChaCha8 key per base seed, one stream per chunk.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
