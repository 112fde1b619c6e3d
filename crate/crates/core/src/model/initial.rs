use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, stationary_moments, ARParams, InnovationModel};
use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature::gauss_legendre_1d;

/// Replications simulated per RNG stream when building an empirical law.
const CHUNK: usize = 1 << 15;
const BVN_NODES: usize = 64;
const BVN_RANGE: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    GaussianStationary,
    EmpiricalBurnin,
}

impl InitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitMode::GaussianStationary => "gaussian-stationary",
            InitMode::EmpiricalBurnin => "empirical-burnin",
        }
    }
}

/// Stationary draws of three consecutive observations `(a, b, c)`.
///
/// The pair `(X_0, X_{-1})` is read as `(b, a)`; the triple `(X_1, X_2, X_3)`
/// as `(a, b, c)`.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    triples: Vec<[f64; 3]>,
    burnin: usize,
    seed: u64,
}

impl EmpiricalLaw {
    pub fn simulate(
        params: &ARParams,
        innovation: &InnovationModel,
        burnin: usize,
        reps: usize,
        seed: u64,
    ) -> Self {
        let chunks = reps.div_ceil(CHUNK);
        let triples = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let count = CHUNK.min(reps - c * CHUNK);
                let mut rng = seeded_rng(seed, c as u64);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let (mut x1, mut x2) = (0.0, 0.0);
                    for _ in 0..burnin {
                        let x = params.step(innovation.sample(&mut rng), x1, x2);
                        x2 = x1;
                        x1 = x;
                    }
                    let c3 = params.step(innovation.sample(&mut rng), x1, x2);
                    out.push([x2, x1, c3]);
                }
                out
            })
            .collect::<Vec<_>>()
            .concat();
        EmpiricalLaw { triples, burnin, seed }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn burnin(&self) -> usize {
        self.burnin
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn triples(&self) -> &[[f64; 3]] {
        &self.triples
    }

    fn joint_cdf(&self, y0: f64, y1: f64) -> f64 {
        let hits = self.triples.iter().filter(|t| t[1] <= y0 && t[0] <= y1).count();
        hits as f64 / self.triples.len() as f64
    }

    /// `#{(p0, p1) : p0 <= axis0[i], p1 <= axis1[j]} / n` for every `(i, j)`,
    /// row-major, by binning and a 2-D prefix sum. Axes must be ascending.
    fn dominance_grid<I>(n: usize, points: I, axis0: &[f64], axis1: &[f64]) -> Vec<f64>
    where
        I: Iterator<Item = (f64, f64)>,
    {
        let (m0, m1) = (axis0.len(), axis1.len());
        let mut counts = vec![0u64; m0 * m1];
        for (p0, p1) in points {
            let i = axis0.partition_point(|&v| v < p0);
            let j = axis1.partition_point(|&v| v < p1);
            if i < m0 && j < m1 {
                counts[i * m1 + j] += 1;
            }
        }
        for i in 0..m0 {
            for j in 1..m1 {
                counts[i * m1 + j] += counts[i * m1 + j - 1];
            }
        }
        for i in 1..m0 {
            for j in 0..m1 {
                counts[i * m1 + j] += counts[(i - 1) * m1 + j];
            }
        }
        counts.into_iter().map(|c| c as f64 / n as f64).collect()
    }

    /// `H(axis0[i], axis1[j])` on a tensor grid.
    pub fn joint_cdf_grid(&self, axis0: &[f64], axis1: &[f64]) -> Vec<f64> {
        let pts = self.triples.iter().map(|t| (t[1], t[0]));
        Self::dominance_grid(self.triples.len(), pts, axis0, axis1)
    }

    /// `P(X_1 <= x, X_2 <= axis1[j], X_3 <= axis0[i])` on a tensor grid.
    pub fn third_step_cdf_grid(&self, x: f64, axis0: &[f64], axis1: &[f64]) -> Vec<f64> {
        let pts = self.triples.iter().filter(|t| t[0] <= x).map(|t| (t[2], t[1]));
        Self::dominance_grid(self.triples.len(), pts, axis0, axis1)
    }
}

#[derive(Debug, Clone)]
enum LawKind {
    Gaussian { sd: f64, rho: f64 },
    Empirical(EmpiricalLaw),
}

/// Joint law `H(y0, y1) = P(X_0 <= y0, X_{-1} <= y1)` of the pre-sample pair.
#[derive(Debug, Clone)]
pub struct InitialLaw {
    kind: LawKind,
}

impl InitialLaw {
    pub fn gaussian(params: &ARParams) -> Self {
        let m = stationary_moments(params);
        InitialLaw { kind: LawKind::Gaussian { sd: m.sd_x(), rho: m.rho1 } }
    }

    pub fn empirical(law: EmpiricalLaw) -> Self {
        InitialLaw { kind: LawKind::Empirical(law) }
    }

    pub fn mode(&self) -> InitMode {
        match self.kind {
            LawKind::Gaussian { .. } => InitMode::GaussianStationary,
            LawKind::Empirical(_) => InitMode::EmpiricalBurnin,
        }
    }

    /// `(sd, correlation)` in Gaussian mode.
    pub fn gaussian_parameters(&self) -> Option<(f64, f64)> {
        match self.kind {
            LawKind::Gaussian { sd, rho } => Some((sd, rho)),
            LawKind::Empirical(_) => None,
        }
    }

    pub fn as_empirical(&self) -> Option<&EmpiricalLaw> {
        match &self.kind {
            LawKind::Empirical(e) => Some(e),
            LawKind::Gaussian { .. } => None,
        }
    }

    pub fn joint_cdf(&self, y0: f64, y1: f64) -> f64 {
        match &self.kind {
            LawKind::Gaussian { sd, rho } => bivariate_normal_cdf(y0 / sd, y1 / sd, *rho),
            LawKind::Empirical(e) => e.joint_cdf(y0, y1),
        }
    }

    /// `H(y0, +inf)`.
    pub fn marginal_cdf(&self, y0: f64) -> f64 {
        match &self.kind {
            LawKind::Gaussian { sd, .. } => normal::cdf(y0 / sd),
            LawKind::Empirical(e) => e.joint_cdf(y0, f64::INFINITY),
        }
    }

    /// Joint density of `(X_0, X_{-1})`; Gaussian mode only.
    pub fn density(&self, y0: f64, y1: f64) -> Option<f64> {
        match self.kind {
            LawKind::Gaussian { sd, rho } => {
                let (a, b) = (y0 / sd, y1 / sd);
                let q = 1.0 - rho * rho;
                let e = (a * a - 2.0 * rho * a * b + b * b) / (2.0 * q);
                Some((-e).exp() / (2.0 * std::f64::consts::PI * sd * sd * q.sqrt()))
            }
            LawKind::Empirical(_) => None,
        }
    }
}

pub fn initial_law(
    params: &ARParams,
    innovation: &InnovationModel,
    mode: InitMode,
    burnin_steps: usize,
    reps: usize,
    seed: u64,
) -> Result<InitialLaw> {
    match mode {
        InitMode::GaussianStationary => {
            if !innovation.is_gaussian() {
                return Err(Error::ModeMismatch(innovation.name().into()));
            }
            Ok(InitialLaw::gaussian(params))
        }
        InitMode::EmpiricalBurnin => {
            if reps == 0 {
                return Err(Error::InvalidParameter("empirical law needs reps > 0".into()));
            }
            Ok(InitialLaw::empirical(EmpiricalLaw::simulate(
                params,
                innovation,
                burnin_steps,
                reps,
                seed,
            )))
        }
    }
}

/// The clipped laws `G_1(y) = H(min(y0,x), y1)` and
/// `G_2(y) = H(min(y0,x), min(y1,x))`.
#[derive(Debug, Clone, Copy)]
pub struct ClippedInitial<'a> {
    law: &'a InitialLaw,
    x: f64,
}

impl ClippedInitial<'_> {
    pub fn g1(&self, y: [f64; 2]) -> f64 {
        self.law.joint_cdf(y[0].min(self.x), y[1])
    }

    pub fn g2(&self, y: [f64; 2]) -> f64 {
        self.law.joint_cdf(y[0].min(self.x), y[1].min(self.x))
    }
}

pub fn clipped_initial(law: &InitialLaw, x: f64) -> ClippedInitial<'_> {
    ClippedInitial { law, x }
}

fn bvn_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_1d(BVN_NODES, -1.0, 1.0).expect("valid rule"))
}

/// Standard bivariate normal `P(Z0 <= a, Z1 <= b)` with correlation `rho`,
/// integrating `phi(t) Phi((a - rho t)/sqrt(1 - rho^2))` over `t <= b`.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> f64 {
    if a == f64::INFINITY {
        return normal::cdf(b);
    }
    if b == f64::INFINITY {
        return normal::cdf(a);
    }
    let hi = b.min(BVN_RANGE);
    if hi <= -BVN_RANGE {
        return 0.0;
    }
    let s = (1.0 - rho * rho).sqrt();
    let (t, w) = bvn_rule();
    // split at the centre of the conditional sigmoid when it falls inside
    let mut cuts = vec![-BVN_RANGE, hi];
    if rho.abs() > 1e-12 {
        let c = a / rho;
        if c > -BVN_RANGE && c < hi {
            cuts.insert(1, c);
        }
    }
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (lo, up) = (pair[0], pair[1]);
        let half = 0.5 * (up - lo);
        let mid = 0.5 * (up + lo);
        for (ti, wi) in t.iter().zip(w) {
            let u = mid + half * ti;
            total += wi * half * normal::pdf(u) * normal::cdf((a - rho * u) / s);
        }
    }
    total
}
