use rand::{Rng, RngExt};
use rand_distr::{Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::normal;

/// A continuous, mean-zero innovation law with two derivatives: the cdf `F`,
/// density `f` and density derivative `f'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationModel {
    Gaussian { sigma: f64 },
    Logistic { scale: f64 },
}

pub fn gaussian_innovation(sigma_e: f64) -> Result<InnovationModel> {
    check_scale(sigma_e)?;
    Ok(InnovationModel::Gaussian { sigma: sigma_e })
}

pub fn logistic_innovation(scale_s: f64) -> Result<InnovationModel> {
    check_scale(scale_s)?;
    Ok(InnovationModel::Logistic { scale: scale_s })
}

fn check_scale(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("scale must be finite and > 0, got {s}")))
    }
}

impl InnovationModel {
    pub fn name(&self) -> &'static str {
        match self {
            InnovationModel::Gaussian { .. } => "gaussian",
            InnovationModel::Logistic { .. } => "logistic",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, InnovationModel::Gaussian { .. })
    }

    /// Standard deviation of the law.
    pub fn std_dev(&self) -> f64 {
        match *self {
            InnovationModel::Gaussian { sigma } => sigma,
            InnovationModel::Logistic { scale } => scale * std::f64::consts::PI / 3f64.sqrt(),
        }
    }

    #[inline]
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            InnovationModel::Gaussian { sigma } => normal::cdf(t / sigma),
            InnovationModel::Logistic { scale } => {
                let u = t / scale;
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    #[inline]
    pub fn pdf(&self, t: f64) -> f64 {
        match *self {
            InnovationModel::Gaussian { sigma } => normal::pdf(t / sigma) / sigma,
            InnovationModel::Logistic { scale } => {
                let e = (-(t / scale).abs()).exp();
                let d = 1.0 + e;
                e / (scale * d * d)
            }
        }
    }

    /// Derivative of the density.
    #[inline]
    pub fn pdf_deriv(&self, t: f64) -> f64 {
        match *self {
            InnovationModel::Gaussian { sigma } => {
                let u = t / sigma;
                -u * normal::pdf(u) / (sigma * sigma)
            }
            InnovationModel::Logistic { scale } => {
                -self.pdf(t) * (0.5 * t / scale).tanh() / scale
            }
        }
    }

    /// `t` with `F(t) = p`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            InnovationModel::Gaussian { sigma } => sigma * normal::quantile(p),
            InnovationModel::Logistic { scale } => scale * (p / (1.0 - p)).ln(),
        }
    }

    /// Symmetric cutoffs `(F^{-1}(eps), F^{-1}(1 - eps))`. Both laws are
    /// symmetric, so the lower one is computed as the negated upper tail to
    /// avoid cancellation in `1 - eps`.
    pub fn tail_cutoffs(&self, eps: f64) -> (f64, f64) {
        let lo = self.quantile(eps);
        (lo, -lo)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InnovationModel::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            InnovationModel::Logistic { scale } => {
                let u: f64 = rng.sample(Open01);
                scale * (u / (1.0 - u)).ln()
            }
        }
    }
}
