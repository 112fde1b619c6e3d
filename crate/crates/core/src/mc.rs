//! Monte Carlo estimates of `P(M_n <= x)` from simulated paths.
//!
//! Every replication draws one path and scores all requested `(n, x)` cells,
//! so tallies are exactly nonincreasing in `n` within a run. Replications are
//! split into fixed chunks; chunk `c` uses stream `MC_STREAM_BASE + c` of the
//! base seed, so results do not depend on the number of worker threads.

use std::io::Write;

use rand::RngExt;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maxdist::{cdf_at, MaxCdfExpansion};
use crate::model::{seeded_rng, stationary_moments, ARParams, InitMode, InnovationModel};

/// Smallest accepted replication count.
pub const MIN_REPS: usize = 1000;
/// Replications per RNG stream.
pub const MC_CHUNK: usize = 1 << 14;
/// First stream used for paths. Streams below it belong to empirical initial laws.
pub const MC_STREAM_BASE: u64 = 1 << 40;
/// `|z|` above this is flagged.
pub const Z_FLAG: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub n: usize,
    pub x: f64,
    pub p_hat: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
}

/// How `(X_0, X_{-1})` is drawn for each path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub mode: InitMode,
    /// Steps discarded from a zero start in burn-in mode.
    pub burnin: usize,
}

impl McSettings {
    pub fn gaussian() -> Self {
        McSettings { mode: InitMode::GaussianStationary, burnin: 0 }
    }

    pub fn burnin(steps: usize) -> Self {
        McSettings { mode: InitMode::EmpiricalBurnin, burnin: steps }
    }
}

/// Estimates for every `n` in `n_list` and `x` in `x_list`, ordered by `n`
/// then `x` as given.
pub fn simulate_max_cdf(
    params: &ARParams,
    innovation: &InnovationModel,
    settings: McSettings,
    n_list: &[usize],
    x_list: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if reps < MIN_REPS {
        return Err(Error::InvalidParameter(format!("reps must be >= {MIN_REPS}, got {reps}")));
    }
    if settings.mode == InitMode::GaussianStationary && !innovation.is_gaussian() {
        return Err(Error::ModeMismatch(innovation.name().into()));
    }
    if x_list.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    let mut ns: Vec<usize> = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let n_max = ns.last().copied().unwrap_or(0);
    let cells = ns.len() * x_list.len();
    let moments = stationary_moments(params);
    let (sd, rho) = (moments.sd_x(), moments.rho1);
    let q = (1.0 - rho * rho).sqrt();

    let chunks = reps.div_ceil(MC_CHUNK);
    let tallies = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(reps - c * MC_CHUNK);
            let mut rng = seeded_rng(seed, MC_STREAM_BASE + c as u64);
            let mut hits = vec![0u64; cells];
            let mut maxima = vec![0.0; ns.len()];
            for _ in 0..count {
                let (mut x1, mut x2) = match settings.mode {
                    InitMode::GaussianStationary => {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        (sd * a, sd * (rho * a + q * b))
                    }
                    InitMode::EmpiricalBurnin => {
                        let (mut x1, mut x2) = (0.0, 0.0);
                        for _ in 0..settings.burnin {
                            let x = params.step(innovation.sample(&mut rng), x1, x2);
                            x2 = x1;
                            x1 = x;
                        }
                        (x1, x2)
                    }
                };
                let mut running = f64::NEG_INFINITY;
                let mut next = 0;
                for i in 0..=n_max {
                    while next < ns.len() && ns[next] == i {
                        maxima[next] = running;
                        next += 1;
                    }
                    if i == n_max {
                        break;
                    }
                    let x = params.step(innovation.sample(&mut rng), x1, x2);
                    x2 = x1;
                    x1 = x;
                    running = running.max(x);
                }
                for (k, m) in maxima.iter().enumerate() {
                    for (l, x) in x_list.iter().enumerate() {
                        if *m <= *x {
                            hits[k * x_list.len() + l] += 1;
                        }
                    }
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(s, t)| *s += t);
                a
            },
        );

    let mut out = Vec::with_capacity(n_list.len() * x_list.len());
    for &n in n_list {
        let k = ns.binary_search(&n).expect("n collected above");
        for (l, &x) in x_list.iter().enumerate() {
            let p_hat = tallies[k * x_list.len() + l] as f64 / reps as f64;
            let se = (p_hat * (1.0 - p_hat) / reps as f64).sqrt();
            out.push(McEstimate { n, x, p_hat, se, reps, seed });
        }
    }
    Ok(out)
}

/// One row of a model-versus-simulation comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub x: f64,
    pub model: f64,
    pub p_hat: f64,
    pub se: f64,
    /// `(model - p_hat) / se`; infinite when `se = 0` and the values differ.
    pub z: f64,
    pub flagged: bool,
}

/// z-scores of the clamped expansion values against `estimates`.
pub fn compare(exp: &MaxCdfExpansion, estimates: &[McEstimate]) -> Result<Vec<Comparison>> {
    estimates
        .iter()
        .map(|e| {
            if e.x != exp.x {
                return Err(Error::MismatchedThreshold { expansion: exp.x, estimate: e.x });
            }
            let model = cdf_at(exp, e.n)?.clamped;
            Ok(score(e, model))
        })
        .collect()
}

/// z-score of a single model value.
pub fn score(e: &McEstimate, model: f64) -> Comparison {
    let diff = model - e.p_hat;
    let z = if e.se > 0.0 {
        diff / e.se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Comparison { n: e.n, x: e.x, model, p_hat: e.p_hat, se: e.se, z, flagged: !(z.abs() <= Z_FLAG) }
}

/// CSV with header `n,x,p_hat,se,reps,seed`.
pub fn write_estimates_csv<W: Write>(mut out: W, estimates: &[McEstimate]) -> Result<()> {
    writeln!(out, "n,x,p_hat,se,reps,seed")?;
    for e in estimates {
        writeln!(out, "{},{},{:.10},{:.10},{},{}", e.n, e.x, e.p_hat, e.se, e.reps, e.seed)?;
    }
    Ok(())
}
