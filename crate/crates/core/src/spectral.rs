//! Nyström discretization of the operator and its dense eigendecomposition.
//!
//! The matrix is `A[i][j] = w_j * K(z_i, z_j)` on a [`CollapsedGrid`], so
//! `(A v)[i]` is the quadrature of `K(z_i, .) v`. Right eigenfunctions are
//! the columns of the eigenvector matrix `V`. Left eigenvectors come from the
//! same Schur form as the right ones and are scaled into a dual matrix `W`
//! with `W[j] . V[:, j] = 1`; the left eigenfunctions are
//! `l_j(z_m) = conj(W[j][m]) / w_m`. The full `V` is numerically singular on
//! fine grids (the kernel is smooth, so most eigenvalues sit at rounding
//! level), which rules out forming `V^{-1}` directly.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{collapsed_kernel, KernelContext};
use crate::quadrature::CollapsedGrid;

/// Eigenvector matrices worse than this are reported as defective.
pub const MAX_CONDITION: f64 = 1e10;
/// Largest tolerated `|W V - I|` entry on a retained block.
pub const BIORTHO_TOL: f64 = 1e-8;
/// Residuals are always computed for at least this many leading pairs.
const RESIDUAL_PREFIX: usize = 64;
/// `|lambda|` below this is treated as zero when dividing by an eigenvalue.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

/// How the quadrature weights enter the matrix handed to the eigensolver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `A = K diag(w)`.
    #[default]
    Nystrom,
    /// The similar matrix `diag(w)^{1/2} K diag(w)^{1/2}`; eigenvectors are
    /// mapped back by `diag(w)^{-1/2}`.
    Symmetrized,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub r1: f64,
    pub r2: f64,
    pub x: f64,
    pub innovation: String,
    pub inner_rule: usize,
    pub eps: f64,
}

/// The discretized operator.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    n: usize,
    matrix: Vec<f64>,
    weights: Vec<f64>,
    row_at_inf: Vec<f64>,
    corner: usize,
    grid: Option<CollapsedGrid>,
    meta: Option<OperatorMeta>,
}

pub fn build_operator(ctx: &KernelContext, grid: &CollapsedGrid) -> Result<DiscreteOperator> {
    if grid.x() != ctx.x() {
        return Err(Error::InvalidParameter(format!(
            "grid threshold {} differs from kernel threshold {}",
            grid.x(),
            ctx.x()
        )));
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let weights = grid.weights();
    let tails: Vec<_> = (0..n).map(|k| grid.tail(k)).collect();
    let mut matrix = vec![0.0; n * n];
    matrix.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let y = nodes[i];
        for j in 0..n {
            row[j] = weights[j] * collapsed_kernel(y, nodes[j], tails[j], ctx);
        }
    });
    if let Some(k) = matrix.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry { row: k / n, col: k % n });
    }
    let x = ctx.x();
    let row_at_inf = (0..n).map(|j| collapsed_kernel([x, x], nodes[j], tails[j], ctx)).collect();
    let p = ctx.params();
    Ok(DiscreteOperator {
        n,
        matrix,
        weights,
        row_at_inf,
        corner: grid.corner(),
        grid: Some(grid.clone()),
        meta: Some(OperatorMeta {
            r1: p.r1(),
            r2: p.r2(),
            x,
            innovation: ctx.innovation().name().into(),
            inner_rule: ctx.inner_rule(),
            eps: ctx.eps(),
        }),
    })
}

impl DiscreteOperator {
    /// An operator from an explicit row-major matrix, for toy problems.
    /// `row_at_inf` defaults to the unweighted last row.
    pub fn from_parts(matrix: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 || matrix.len() != n * n {
            return Err(Error::InvalidParameter("matrix must be n x n with n weights".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        if let Some(k) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row: k / n, col: k % n });
        }
        let corner = n - 1;
        let row_at_inf = (0..n).map(|j| matrix[corner * n + j] / weights[j]).collect();
        Ok(DiscreteOperator { n, matrix, weights, row_at_inf, corner, grid: None, meta: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `K((x, x), z_j)`, unweighted.
    pub fn row_at_inf(&self) -> &[f64] {
        &self.row_at_inf
    }

    /// Index of the node `(x, x)`.
    pub fn corner(&self) -> usize {
        self.corner
    }

    pub fn grid(&self) -> Option<&CollapsedGrid> {
        self.grid.as_ref()
    }

    pub fn meta(&self) -> Option<&OperatorMeta> {
        self.meta.as_ref()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        self.matrix
            .par_chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `sum_j w_j K((x,x), z_j) v_j`.
    pub fn read_at_infinity(&self, v: &[f64]) -> f64 {
        self.row_at_inf.iter().zip(&self.weights).zip(v).map(|((k, w), v)| k * w * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.entry(i, j) - self.entry(j, i)).abs());
            }
        }
        worst
    }

    fn to_faer(&self, weighting: Weighting) -> Mat<f64> {
        let n = self.n;
        match weighting {
            Weighting::Nystrom => Mat::from_fn(n, n, |i, j| self.matrix[i * n + j]),
            Weighting::Symmetrized => {
                let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
                Mat::from_fn(n, n, |i, j| s[i] * self.matrix[i * n + j] / s[j])
            }
        }
    }

    /// Dump `A` as `row,col,value` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,col,value")?;
        for i in 0..self.n {
            for j in 0..self.n {
                writeln!(out, "{i},{j},{:e}", self.entry(i, j))?;
            }
        }
        Ok(())
    }
}

/// Conditioning and accuracy figures of a decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumDiagnostics {
    pub weighting: Weighting,
    pub frobenius_norm: f64,
    /// `n * machine epsilon * ||A||_F`; eigenpairs below it are noise.
    pub noise_floor: f64,
    /// Largest eigenvalue condition number `||W[j]|| ||V[:, j]||` among
    /// retained pairs above the noise floor.
    pub max_condition_retained: f64,
    /// The same over every pair, noise included.
    pub max_condition_all: f64,
    pub max_residual_retained: f64,
    /// `max |sum_m w_m r_j conj(l_k) - delta_jk|` over retained pairs.
    pub biorthonormality_defect: f64,
    pub multiplicity: usize,
    pub retained: usize,
    pub leading_is_real: bool,
}

/// Sorted eigenpairs with biorthonormal left/right functions.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<Complex64>,
    right: Mat<Complex64>,
    dual: Mat<Complex64>,
    weights: Vec<f64>,
    residuals: Vec<f64>,
    conditions: Vec<f64>,
    diagnostics: SpectrumDiagnostics,
}

/// Order by descending modulus, then descending real part, then positive
/// imaginary part first.
fn spectral_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Number of eigenvalues within relative `1e-8` of the leading modulus.
pub fn leading_multiplicity(values: &[Complex64]) -> usize {
    match values.first() {
        None => 0,
        Some(l) => values.iter().take_while(|v| v.norm() >= (1.0 - 1e-8) * l.norm()).count(),
    }
}

/// Extend `j` by one if it would split a conjugate pair.
pub fn respect_pairs(values: &[Complex64], j: usize) -> usize {
    let j = j.min(values.len());
    if j == 0 || j == values.len() {
        return j;
    }
    let (a, b) = (values[j - 1], values[j]);
    let tol = 1e-12 * a.norm().max(1e-300);
    if a.im > 0.0 && (a.conj() - b).norm() <= tol {
        j + 1
    } else {
        j
    }
}

pub fn eig(op: &DiscreteOperator, j: usize) -> Result<Spectrum> {
    eig_with(op, j, Weighting::Nystrom)
}

pub fn eig_with(op: &DiscreteOperator, j: usize, weighting: Weighting) -> Result<Spectrum> {
    let n = op.n();
    let a = op.to_faer(weighting);
    let (raw, u_right, u_left) = real_evd(a.as_ref())?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| spectral_order(&raw[p], &raw[q]));
    let values: Vec<Complex64> = order.iter().map(|&k| raw[k]).collect();
    let (to_right, to_left): (Vec<f64>, Vec<f64>) = match weighting {
        Weighting::Nystrom => (vec![1.0; n], vec![1.0; n]),
        Weighting::Symmetrized => op.weights().iter().map(|w| (1.0 / w.sqrt(), w.sqrt())).unzip(),
    };
    let mut right = Mat::<Complex64>::from_fn(n, n, |i, c| u_right[(i, order[c])] * to_right[i]);
    // rows of the dual matrix: W[c][i] = conj(u_left[i]) so that W A = diag(lambda) W
    let mut dual = Mat::<Complex64>::from_fn(n, n, |c, i| u_left[(i, order[c])].conj() * to_left[i]);
    let mut conditions = vec![f64::INFINITY; n];
    for c in 0..n {
        let norm = (0..n).map(|i| right[(i, c)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                right[(i, c)] /= norm;
            }
        }
        let pairing: Complex64 = (0..n).map(|i| dual[(c, i)] * right[(i, c)]).sum();
        let left_norm = (0..n).map(|i| dual[(c, i)].norm_sqr()).sum::<f64>().sqrt();
        if pairing.norm() > 0.0 && pairing.norm().is_finite() {
            for i in 0..n {
                dual[(c, i)] /= pairing;
            }
            conditions[c] = left_norm / pairing.norm();
        }
    }

    let frob = op.frobenius_norm();
    let noise_floor = n as f64 * f64::EPSILON * frob;
    let retained = respect_pairs(&values, j.max(1));
    let residuals = residuals(op, &right, &values, retained.max(RESIDUAL_PREFIX).min(n));
    let mut spectrum = Spectrum {
        values,
        right,
        dual,
        weights: op.weights().to_vec(),
        residuals,
        conditions,
        diagnostics: SpectrumDiagnostics {
            weighting,
            frobenius_norm: frob,
            noise_floor,
            max_condition_retained: 0.0,
            max_condition_all: 0.0,
            max_residual_retained: 0.0,
            biorthonormality_defect: 0.0,
            multiplicity: 0,
            retained,
            leading_is_real: false,
        },
    };
    spectrum.refresh_diagnostics();
    let cond = spectrum.diagnostics.max_condition_retained;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::DefectiveOrIllConditioned { cond });
    }
    Ok(spectrum)
}

/// Eigenvalues with right and left eigenvectors from one real Schur form,
/// unpacked so that column `k` of both matrices belongs to eigenvalue `k`.
/// Left vectors satisfy `u^H A = lambda u^H`.
fn real_evd(a: faer::MatRef<'_, f64>) -> Result<(Vec<Complex64>, Mat<Complex64>, Mat<Complex64>)> {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::evd::{evd_real, evd_scratch, ComputeEigenvectors};
    use faer::diag::Diag;
    let n = a.nrows();
    let par = faer::get_global_parallelism();
    let mut s_re = Diag::<f64>::zeros(n);
    let mut s_im = Diag::<f64>::zeros(n);
    let mut ur = Mat::<f64>::zeros(n, n);
    let mut ul = Mat::<f64>::zeros(n, n);
    let mut buf = MemBuffer::new(evd_scratch::<f64>(
        n,
        ComputeEigenvectors::Yes,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd_real(
        a,
        s_re.as_mut(),
        s_im.as_mut(),
        Some(ul.as_mut()),
        Some(ur.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    let mut values = vec![Complex64::new(0.0, 0.0); n];
    let mut right = Mat::<Complex64>::zeros(n, n);
    let mut left = Mat::<Complex64>::zeros(n, n);
    let mut k = 0;
    while k < n {
        if s_im[k] == 0.0 || k + 1 == n {
            values[k] = Complex64::new(s_re[k], 0.0);
            for i in 0..n {
                right[(i, k)] = Complex64::new(ur[(i, k)], 0.0);
                left[(i, k)] = Complex64::new(ul[(i, k)], 0.0);
            }
            k += 1;
        } else {
            values[k] = Complex64::new(s_re[k], s_im[k]);
            values[k + 1] = values[k].conj();
            for i in 0..n {
                right[(i, k)] = Complex64::new(ur[(i, k)], ur[(i, k + 1)]);
                right[(i, k + 1)] = right[(i, k)].conj();
                left[(i, k)] = Complex64::new(ul[(i, k)], ul[(i, k + 1)]);
                left[(i, k + 1)] = left[(i, k)].conj();
            }
            k += 2;
        }
    }
    if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    Ok((values, right, left))
}

/// `||A v_k - lambda_k v_k|| / ||A||_F` for the first `count` columns.
fn residuals(op: &DiscreteOperator, right: &Mat<Complex64>, values: &[Complex64], count: usize) -> Vec<f64> {
    let n = op.n();
    let a = op.to_faer(Weighting::Nystrom);
    let v_re = Mat::<f64>::from_fn(n, count, |i, c| right[(i, c)].re);
    let v_im = Mat::<f64>::from_fn(n, count, |i, c| right[(i, c)].im);
    let av_re = &a * &v_re;
    let av_im = &a * &v_im;
    let frob = op.frobenius_norm().max(f64::MIN_POSITIVE);
    (0..count)
        .map(|c| {
            let lam = values[c];
            let s: f64 = (0..n)
                .map(|i| {
                    let av = Complex64::new(av_re[(i, c)], av_im[(i, c)]);
                    (av - lam * right[(i, c)]).norm_sqr()
                })
                .sum();
            s.sqrt() / frob
        })
        .collect()
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All eigenvalues in spectral order.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn retained(&self) -> usize {
        self.diagnostics.retained
    }

    /// A copy retaining `j` pairs (extended to keep conjugate pairs whole).
    pub fn with_retained(&self, j: usize) -> Spectrum {
        let mut s = self.clone();
        let j = respect_pairs(&self.values, j.max(1));
        if j > self.residuals.len() {
            // residuals are only known for the originally retained prefix
            s.residuals.resize(j, f64::NAN);
        }
        s.diagnostics.retained = j;
        s.refresh_diagnostics();
        s
    }

    pub fn diagnostics(&self) -> &SpectrumDiagnostics {
        &self.diagnostics
    }

    /// Residual of pair `j`, if it was computed.
    pub fn residual(&self, j: usize) -> Option<f64> {
        self.residuals.get(j).copied().filter(|r| r.is_finite())
    }

    pub fn condition(&self, j: usize) -> f64 {
        self.conditions[j]
    }

    /// `r_j(z_k)`.
    pub fn right(&self, j: usize, k: usize) -> Complex64 {
        self.right[(k, j)]
    }

    /// `l_j(z_k)`.
    pub fn left(&self, j: usize, k: usize) -> Complex64 {
        self.dual[(j, k)].conj() / self.weights[k]
    }

    pub fn right_fn(&self, j: usize) -> Vec<Complex64> {
        (0..self.values.len()).map(|k| self.right(j, k)).collect()
    }

    pub fn left_fn(&self, j: usize) -> Vec<Complex64> {
        (0..self.values.len()).map(|k| self.left(j, k)).collect()
    }

    /// `B_j(G) = sum_k w_k G(z_k) conj(l_j(z_k))` for every pair.
    pub fn weights_b(&self, g: &[f64]) -> Vec<Complex64> {
        let n = self.values.len();
        assert_eq!(g.len(), n);
        (0..n)
            .into_par_iter()
            .map(|j| (0..n).map(|k| self.dual[(j, k)] * g[k]).sum())
            .collect()
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j < self.values.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: j, len: self.values.len() })
        }
    }

    fn refresh_diagnostics(&mut self) {
        let j = self.diagnostics.retained;
        let floor = self.diagnostics.noise_floor;
        let above = |k: &usize| self.values[*k].norm() > floor;
        self.diagnostics.max_condition_retained =
            (0..j).filter(above).map(|k| self.conditions[k]).fold(0.0, f64::max);
        self.diagnostics.max_condition_all = self.conditions.iter().copied().fold(0.0, f64::max);
        self.diagnostics.max_residual_retained =
            self.residuals.iter().take(j).copied().filter(|r| r.is_finite()).fold(0.0, f64::max);
        self.diagnostics.biorthonormality_defect = self.biorthonormality_defect(j);
        self.diagnostics.multiplicity = leading_multiplicity(&self.values);
        self.diagnostics.leading_is_real = self.values.first().is_some_and(|l| l.im.abs() <= 1e-10);
    }

    /// `max |sum_m w_m r_j(z_m) conj(l_k(z_m)) - delta_jk|` for `j, k < count`.
    pub fn biorthonormality_defect(&self, count: usize) -> f64 {
        let n = self.values.len();
        let count = count.min(n);
        let w = self.dual.as_ref().subrows(0, count);
        let v = self.right.as_ref().subcols(0, count);
        let gram = w * v;
        let mut worst = 0.0f64;
        for k in 0..count {
            for j in 0..count {
                let want = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((gram[(k, j)] - want).norm());
            }
        }
        worst
    }

    /// Largest `k <= limit` such that the leading `k` pairs are resolved:
    /// condition numbers at most [`MAX_CONDITION`] (pairs above the noise
    /// floor), `|W V - I| <= BIORTHO_TOL` on the leading block, and no
    /// conjugate pair split.
    pub fn resolved_prefix(&self, limit: usize) -> usize {
        let limit = limit.min(self.values.len());
        if limit == 0 {
            return 0;
        }
        let w = self.dual.as_ref().subrows(0, limit);
        let v = self.right.as_ref().subcols(0, limit);
        let gram = w * v;
        let floor = self.diagnostics.noise_floor;
        let mut good = 0;
        for k in 0..limit {
            let cond_ok = self.values[k].norm() <= floor || self.conditions[k] <= MAX_CONDITION;
            let bio_ok = (0..=k).all(|i| {
                let d = if i == k { 1.0 } else { 0.0 };
                (gram[(i, k)] - d).norm() <= BIORTHO_TOL && (gram[(k, i)] - d).norm() <= BIORTHO_TOL
            });
            if !(cond_ok && bio_ok) {
                break;
            }
            good = k + 1;
        }
        if good < self.values.len() && respect_pairs(&self.values, good) != good {
            good - 1
        } else {
            good
        }
    }

    /// Eigenvalues as `re,im,residual` CSV; residual is empty where unknown.
    pub fn write_csv<W: Write>(&self, mut out: W, count: usize) -> Result<()> {
        writeln!(out, "re,im,residual")?;
        for j in 0..count.min(self.values.len()) {
            let v = self.values[j];
            match self.residual(j) {
                Some(r) => writeln!(out, "{:e},{:e},{:e}", v.re, v.im, r)?,
                None => writeln!(out, "{:e},{:e},", v.re, v.im)?,
            }
        }
        Ok(())
    }
}

/// `r_j(inf) = lambda_j^{-1} sum_k w_k K(inf, z_k) r_j(z_k)`.
pub fn r_at_infinity(spec: &Spectrum, op: &DiscreteOperator, j: usize) -> Result<Complex64> {
    spec.check_index(j)?;
    let lam = spec.values[j];
    if lam.norm() < ZERO_EIGENVALUE {
        return Err(Error::EigenvalueNearZero { index: j, modulus: lam.norm() });
    }
    let s: Complex64 = (0..op.n())
        .map(|k| op.weights()[k] * op.row_at_inf()[k] * spec.right(j, k))
        .sum();
    Ok(s / lam)
}

/// `B_j(G) = sum_k w_k G(z_k) conj(l_j(z_k))` with `g` the node values of `G`.
pub fn weight_b(spec: &Spectrum, g: &[f64], j: usize) -> Result<Complex64> {
    spec.check_index(j)?;
    if g.len() != spec.len() {
        return Err(Error::InvalidParameter("function values do not match the grid".into()));
    }
    Ok((0..g.len()).map(|k| spec.weights[k] * g[k] * spec.left(j, k).conj()).sum())
}

/// Dominant eigenvalue by power iteration, independent of the dense solver.
/// Returns `(lambda, v)` with `v` scaled to unit max-norm.
pub fn power_iteration(op: &DiscreteOperator, tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>)> {
    let n = op.n();
    let mut v = vec![1.0; n];
    let mut lam = 0.0;
    for _ in 0..max_iter {
        let w = op.matvec(&v);
        let (idx, peak) = w
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1.abs() { (i, *x) } else { acc });
        if peak == 0.0 {
            return Err(Error::EigenFailure("power iteration collapsed to zero".into()));
        }
        // Rayleigh-type estimate on the component that dominates
        let next = peak / v[idx];
        let v_new: Vec<f64> = w.iter().map(|x| x / peak).collect();
        let change = v_new.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = v_new;
        let done = (next - lam).abs() <= tol * next.abs() && change <= tol.sqrt();
        lam = next;
        if done {
            return Ok((lam, v));
        }
    }
    Err(Error::EigenFailure(format!("power iteration did not converge in {max_iter} steps")))
}
