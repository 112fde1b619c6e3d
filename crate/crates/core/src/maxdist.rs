//! `u_n = P(M_n <= x)` from the spectral expansion and by direct iteration.
//!
//! With `G_n` the joint law after `n` steps, `G_n = K G_{n-2}` and
//! `u_n = G_n(inf, inf)`. The operator only sees the values of `G` at
//! clipped points, and `G_2 = H(clip y)` and `G_3 = K G_1` are the first
//! members of each chain that are clip-invariant, so both chains start there:
//!
//! ```text
//! u_0 = 1,  u_1 = H(x, inf),
//! u_{2k}   = (A^{k-1} g_2)[corner] = Re sum_j s_even_j lambda_j^{k-1},
//! u_{2k+1} = (A^{k-1} g_3)[corner] = Re sum_j s_odd_j  lambda_j^{k-1},
//! ```
//!
//! where `s_j = r_j(inf) B_j(G)`. The coefficients in the form
//! `u_{2k} = sum_j c_even_j lambda_j^k` are `c = s / lambda`, since
//! `B_j(G_2) = lambda_j B_j(H)` and `B_j(G_3) = lambda_j B_j(G_1)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{transition_q, KernelContext, DEFAULT_EPS, DEFAULT_INNER_RULE};
use crate::model::{ARParams, InitMode, InitialLaw, InnovationModel};
use crate::quadrature::{gauss_legendre_1d, truncation_box, CollapsedGrid, Rect, DEFAULT_POINT_CAP};
use crate::spectral::{
    build_operator, eig_with, respect_pairs, DiscreteOperator, Spectrum, SpectrumDiagnostics, Weighting, MAX_CONDITION,
};

/// Largest number of pairs the default truncation keeps.
pub const MAX_DEFAULT_TERMS: usize = 50;
/// Tolerance on `u_2` that fixes the default truncation.
pub const TRUNCATION_TOL: f64 = 1e-10;
pub const IMAG_TOL: f64 = 1e-10;
/// Nodes per axis for the integral giving `G_3` under the Gaussian law.
const G3_NODES: usize = 64;

/// Numerical knobs shared by every expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub m: usize,
    pub eps: f64,
    pub inner_rule: usize,
    pub point_cap: usize,
    pub weighting: Weighting,
    /// `None` picks the truncation from the `u_2` rule.
    pub spectrum_count: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            m: 40,
            eps: DEFAULT_EPS,
            inner_rule: DEFAULT_INNER_RULE,
            point_cap: DEFAULT_POINT_CAP,
            weighting: Weighting::Nystrom,
            spectrum_count: None,
        }
    }
}

impl Settings {
    pub fn with_m(m: usize) -> Self {
        Settings { m, ..Settings::default() }
    }
}

/// Operator plus the starting vectors of both chains.
#[derive(Debug, Clone)]
pub struct Discretization {
    ctx: KernelContext,
    grid: CollapsedGrid,
    op: DiscreteOperator,
    rect: Rect,
    g2: Vec<f64>,
    g3: Vec<f64>,
    b0: f64,
    mode: InitMode,
    settings: Settings,
}

pub fn discretize(
    params: &ARParams,
    innovation: &InnovationModel,
    law: &InitialLaw,
    x: f64,
    settings: &Settings,
) -> Result<Discretization> {
    let ctx = KernelContext::new(*params, *innovation, x, settings.inner_rule, settings.eps)?;
    let rect = truncation_box(innovation, params, x, settings.eps)?;
    let grid = CollapsedGrid::with_cap(settings.m, rect.lo[0], x, settings.point_cap)?;
    let op = build_operator(&ctx, &grid)?;
    let axis = grid.axis();
    let (g2, g3) = match law.as_empirical() {
        Some(e) => (e.joint_cdf_grid(axis, axis), e.third_step_cdf_grid(x, axis, axis)),
        None => {
            let nodes = grid.nodes();
            let g2 = nodes.iter().map(|z| law.joint_cdf(z[0], z[1])).collect();
            let g3 = gaussian_g3(&ctx, law, &nodes, rect.lo[0], -rect.lo[0])?;
            (g2, g3)
        }
    };
    Ok(Discretization {
        b0: law.marginal_cdf(x),
        mode: law.mode(),
        ctx,
        grid,
        op,
        rect,
        g2,
        g3,
        settings: *settings,
    })
}

/// `G_3(y) = E[Q_y(X_1, X_0); X_1 <= x]` under the stationary Gaussian law,
/// by tensor Gauss–Legendre over `[a, x] x [a, b]`.
fn gaussian_g3(ctx: &KernelContext, law: &InitialLaw, nodes: &[[f64; 2]], a: f64, b: f64) -> Result<Vec<f64>> {
    let x = ctx.x();
    let (t0, w0) = gauss_legendre_1d(G3_NODES, a, x)?;
    let (t1, w1) = gauss_legendre_1d(G3_NODES, a, b)?;
    let mut pts = Vec::with_capacity(G3_NODES * G3_NODES);
    for i in 0..G3_NODES {
        for j in 0..G3_NODES {
            let d = law.density(t0[i], t1[j]).expect("gaussian law has a density");
            pts.push(([t0[i], t1[j]], w0[i] * w1[j] * d));
        }
    }
    Ok(nodes
        .par_iter()
        .map(|y| pts.iter().map(|(p, w)| w * transition_q(*y, *p, ctx)).sum())
        .collect())
}

impl Discretization {
    pub fn context(&self) -> &KernelContext {
        &self.ctx
    }

    pub fn grid(&self) -> &CollapsedGrid {
        &self.grid
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    /// The truncation box the lower grid edge comes from.
    pub fn truncation(&self) -> Rect {
        self.rect
    }

    /// `G_2` at the nodes.
    pub fn g2(&self) -> &[f64] {
        &self.g2
    }

    /// `G_3` at the nodes.
    pub fn g3(&self) -> &[f64] {
        &self.g3
    }

    /// `b_0 = H(x, inf) = P(X_0 <= x)`.
    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn x(&self) -> f64 {
        self.ctx.x()
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn mode(&self) -> InitMode {
        self.mode
    }

    /// Eigendecomposition retaining `j` pairs.
    pub fn spectrum(&self, j: usize) -> Result<Spectrum> {
        eig_with(&self.op, j, self.settings.weighting)
    }
}

/// `u_0 .. u_{n_max}` by repeated application of `A`, without any
/// eigendecomposition.
pub fn direct_sequence(disc: &Discretization, n_max: usize) -> Vec<f64> {
    let mut u = vec![1.0, disc.b0];
    let corner = disc.op.corner();
    let (mut even, mut odd) = (disc.g2.clone(), disc.g3.clone());
    for k in 1.. {
        if u.len() > n_max {
            break;
        }
        if k == 1 {
            u.push(even[corner]);
            u.push(odd[corner]);
        } else {
            // reading off at infinity applies the corner row once more
            u.push(disc.op.read_at_infinity(&even));
            u.push(disc.op.read_at_infinity(&odd));
            if 2 * k + 1 < n_max {
                even = disc.op.matvec(&even);
                odd = disc.op.matvec(&odd);
            }
        }
    }
    u.truncate(n_max + 1);
    u
}

pub fn cdf_direct(disc: &Discretization, n: usize) -> f64 {
    direct_sequence(disc, n)[n]
}

/// Grid description recorded with an expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridInfo {
    pub m: usize,
    #[serde(rename = "box")]
    pub rect: Rect,
    /// Nodes in the discretization, `(m + 1)^2` including the tail nodes.
    pub points: usize,
    pub lower: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionDiagnostics {
    pub spectrum: SpectrumDiagnostics,
    pub init_mode: InitMode,
    pub innovation: String,
    pub r1: f64,
    pub r2: f64,
    pub eps: f64,
    pub inner_rule: usize,
    /// `u_2` from the retained terms minus `u_2` from the grid values.
    pub u2_truncation_error: f64,
    /// Defect of `sum_j r_j l_j = I` at the corner, folded into the smallest
    /// term when the whole spectrum is kept; zero otherwise.
    #[serde(default)]
    pub completeness_correction: f64,
    pub warnings: Vec<String>,
}

/// Per-threshold expansion `u_{2k} = sum_j c_even_j lambda_j^k`,
/// `u_{2k+1} = sum_j c_odd_j lambda_j^k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxCdfExpansion {
    pub x: f64,
    #[serde(with = "complex_list")]
    pub lambda: Vec<Complex64>,
    #[serde(with = "complex_list")]
    pub c_even: Vec<Complex64>,
    #[serde(with = "complex_list")]
    pub c_odd: Vec<Complex64>,
    /// `lambda * c_even`, used for evaluation so that small eigenvalues are
    /// never divided by.
    #[serde(with = "complex_list")]
    pub s_even: Vec<Complex64>,
    #[serde(with = "complex_list")]
    pub s_odd: Vec<Complex64>,
    pub b0: f64,
    pub multiplicity: usize,
    /// `sum_{j <= M} c_even_j`.
    pub b_h: f64,
    /// `sum_{j <= M} c_odd_j`.
    pub b_g1: f64,
    pub grid: GridInfo,
    pub diagnostics: ExpansionDiagnostics,
}

mod complex_list {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Pair {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|c| Pair { re: c.re, im: c.im }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let v = Vec::<Pair>::deserialize(d)?;
        Ok(v.into_iter().map(|p| Complex64::new(p.re, p.im)).collect())
    }
}

/// `u_n` as computed, and clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfValue {
    pub raw: f64,
    pub clamped: f64,
}

impl CdfValue {
    fn new(raw: f64) -> Self {
        CdfValue { raw, clamped: raw.clamp(0.0, 1.0) }
    }
}

/// Discretize, decompose and assemble in one call.
pub fn build_expansion(
    params: &ARParams,
    innovation: &InnovationModel,
    law: &InitialLaw,
    x: f64,
    settings: &Settings,
) -> Result<MaxCdfExpansion> {
    let disc = discretize(params, innovation, law, x, settings)?;
    let request = settings.spectrum_count.unwrap_or(1);
    let spectrum = disc.spectrum(request)?;
    expansion_from(&disc, &spectrum, settings.spectrum_count)
}

/// Assemble the expansion from a decomposition of `disc`'s operator.
///
/// `j = None` keeps the smallest number of pairs that reproduces `u_2` to
/// [`TRUNCATION_TOL`], capped at [`MAX_DEFAULT_TERMS`] and at the resolved
/// prefix of the spectrum (see [`Spectrum::resolved_prefix`]); `Some(j)`
/// keeps `j` (clipped to the grid size, never splitting a conjugate pair)
/// and fails if any retained pair is ill-conditioned.
pub fn expansion_from(disc: &Discretization, spectrum: &Spectrum, j: Option<usize>) -> Result<MaxCdfExpansion> {
    let n = spectrum.len();
    let corner = disc.op.corner();
    let b2 = spectrum.weights_b(&disc.g2);
    let b3 = spectrum.weights_b(&disc.g3);
    let r_inf: Vec<Complex64> = (0..n).map(|k| spectrum.right(k, corner)).collect();
    let s_even_all: Vec<Complex64> = (0..n).map(|k| r_inf[k] * b2[k]).collect();
    let s_odd_all: Vec<Complex64> = (0..n).map(|k| r_inf[k] * b3[k]).collect();
    let values = spectrum.values();

    let u2_grid = disc.g2[corner];
    let mut warnings = Vec::new();
    let keep = match j {
        Some(j) => {
            if j > n {
                warnings.push(format!("requested {j} terms, grid has {n}; using {n}"));
            }
            respect_pairs(values, j.clamp(1, n))
        }
        None => {
            let cap = spectrum.resolved_prefix(MAX_DEFAULT_TERMS).max(1);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut pick = None;
            let mut k = 0;
            while k < cap {
                let step = respect_pairs(values, k + 1);
                for t in k..step {
                    acc += s_even_all[t];
                }
                k = step;
                if (acc.re - u2_grid).abs() < TRUNCATION_TOL {
                    pick = Some(k);
                    break;
                }
            }
            pick.unwrap_or_else(|| respect_pairs(values, cap))
        }
    };
    let spectrum = if keep == spectrum.retained() { spectrum.clone() } else { spectrum.with_retained(keep) };
    let cond = spectrum.diagnostics().max_condition_retained;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::DefectiveOrIllConditioned { cond });
    }

    let lambda: Vec<Complex64> = values[..keep].to_vec();
    let mut s_even = s_even_all[..keep].to_vec();
    let mut s_odd = s_odd_all[..keep].to_vec();
    let mut completeness_correction = 0.0;
    if keep == n {
        // With every pair kept, sum_j r_j l_j = I, so the k = 0 sums equal
        // G_2 and G_3 at the corner. Rounding in the near-null cluster spoils
        // that cancellation; move the defect onto the smallest eigenvalue,
        // whose higher powers vanish.
        let d_even = u2_grid - s_even.iter().map(|s| s.re).sum::<f64>();
        let d_odd = disc.g3[corner] - s_odd.iter().map(|s| s.re).sum::<f64>();
        let smallest = (0..keep).min_by(|&a, &b| lambda[a].norm().total_cmp(&lambda[b].norm())).unwrap_or(0);
        s_even[smallest] += d_even;
        s_odd[smallest] += d_odd;
        completeness_correction = d_even.abs().max(d_odd.abs());
    }
    let c_even: Vec<Complex64> = s_even.iter().zip(&lambda).map(|(s, l)| s / l).collect();
    let c_odd: Vec<Complex64> = s_odd.iter().zip(&lambda).map(|(s, l)| s / l).collect();
    let u2_trunc: f64 = s_even.iter().map(|s| s.re).sum();
    let err = u2_trunc - u2_grid;
    if err.abs() > 1e-6 {
        warnings.push(format!(
            "retained terms give u_2 = {u2_trunc:.10} against {u2_grid:.10} from the grid"
        ));
    }
    let multiplicity = spectrum.diagnostics().multiplicity.min(keep);
    let b_h = c_even[..multiplicity].iter().map(|c| c.re).sum();
    let b_g1 = c_odd[..multiplicity].iter().map(|c| c.re).sum();
    let ctx = &disc.ctx;
    let rect = disc.rect;
    Ok(MaxCdfExpansion {
        x: disc.x(),
        lambda,
        c_even,
        c_odd,
        s_even,
        s_odd,
        b0: disc.b0,
        multiplicity,
        b_h,
        b_g1,
        grid: GridInfo { m: disc.grid.m(), rect, points: disc.grid.len(), lower: disc.grid.lower() },
        diagnostics: ExpansionDiagnostics {
            spectrum: spectrum.diagnostics().clone(),
            init_mode: disc.mode,
            innovation: ctx.innovation().name().into(),
            r1: ctx.params().r1(),
            r2: ctx.params().r2(),
            eps: ctx.eps(),
            inner_rule: ctx.inner_rule(),
            u2_truncation_error: err,
            completeness_correction,
            warnings,
        },
    })
}

impl MaxCdfExpansion {
    /// A bare expansion from explicit terms, mainly for tests and examples.
    pub fn from_terms(x: f64, b0: f64, lambda: Vec<Complex64>, c_even: Vec<Complex64>, c_odd: Vec<Complex64>) -> Self {
        let s_even = c_even.iter().zip(&lambda).map(|(c, l)| c * l).collect();
        let s_odd = c_odd.iter().zip(&lambda).map(|(c, l)| c * l).collect();
        let multiplicity = crate::spectral::leading_multiplicity(&lambda);
        let b_h = c_even[..multiplicity].iter().map(|c| c.re).sum();
        let b_g1 = c_odd[..multiplicity].iter().map(|c| c.re).sum();
        MaxCdfExpansion {
            x,
            lambda,
            c_even,
            c_odd,
            s_even,
            s_odd,
            b0,
            multiplicity,
            b_h,
            b_g1,
            grid: GridInfo { m: 0, rect: Rect { lo: [0.0, 0.0], hi: [0.0, 0.0] }, points: 0, lower: 0.0 },
            diagnostics: ExpansionDiagnostics {
                spectrum: SpectrumDiagnostics {
                    weighting: Weighting::Nystrom,
                    frobenius_norm: 0.0,
                    noise_floor: 0.0,
                    max_condition_retained: 0.0,
                    max_condition_all: 0.0,
                    max_residual_retained: 0.0,
                    biorthonormality_defect: 0.0,
                    multiplicity,
                    retained: 0,
                    leading_is_real: true,
                },
                init_mode: InitMode::GaussianStationary,
                innovation: String::new(),
                r1: 0.0,
                r2: 0.0,
                eps: 0.0,
                inner_rule: 0,
                u2_truncation_error: 0.0,
                completeness_correction: 0.0,
                warnings: Vec::new(),
            },
        }
    }

    pub fn terms(&self) -> usize {
        self.lambda.len()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Io(e.to_string()))
    }
}

/// `u_n = P(M_n <= x)`.
pub fn cdf_at(exp: &MaxCdfExpansion, n: usize) -> Result<CdfValue> {
    let (k, s) = match n {
        0 => return Ok(CdfValue::new(1.0)),
        1 => return Ok(CdfValue::new(exp.b0)),
        _ if n % 2 == 0 => (n / 2 - 1, &exp.s_even),
        _ => ((n - 1) / 2 - 1, &exp.s_odd),
    };
    let sum: Complex64 = s.iter().zip(&exp.lambda).map(|(s, l)| s * l.powu(k as u32)).sum();
    if !(sum.im.abs() < IMAG_TOL) {
        return Err(Error::ImaginaryResidueTooLarge { n, residue: sum.im.abs() });
    }
    Ok(CdfValue::new(sum.re))
}

/// Leading behaviour `u_{2n} ~ B(H) lambda_1^n`, `u_{2n+1} ~ B(G_1) lambda_1^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayLaw {
    pub lambda1: f64,
    pub b_h: f64,
    pub b_g1: f64,
    pub multiplicity: usize,
}

pub fn decay_law(exp: &MaxCdfExpansion) -> Result<DecayLaw> {
    let l = exp
        .lambda
        .first()
        .ok_or_else(|| Error::InvalidParameter("expansion has no terms".into()))?;
    if l.im.abs() > IMAG_TOL {
        return Err(Error::ComplexLeadingEigenvalue { re: l.re, im: l.im });
    }
    Ok(DecayLaw { lambda1: l.re, b_h: exp.b_h, b_g1: exp.b_g1, multiplicity: exp.multiplicity })
}

/// First `n` from which `|u_{2(n+1)} / u_{2n} - lambda_1| < tol` holds for
/// every `n` up to `n_max`.
pub fn ratio_settles(exp: &MaxCdfExpansion, tol: f64, n_max: usize) -> Result<Option<usize>> {
    let law = decay_law(exp)?;
    let mut first = None;
    let mut prev = cdf_at(exp, 2)?.raw;
    for n in 1..=n_max {
        let next = cdf_at(exp, 2 * (n + 1))?.raw;
        let ok = prev != 0.0 && (next / prev - law.lambda1).abs() < tol;
        match (ok, first) {
            (true, None) => first = Some(n),
            (false, _) => first = None,
            _ => {}
        }
        prev = next;
    }
    Ok(first)
}
