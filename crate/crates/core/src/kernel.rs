//! The two-step transition operator and its kernel.
//!
//! For a state `z = (z0, z1)` (latest value first) and a target `y`, let
//! `Q_y(z) = P(X_1 <= y1x, X_2 <= y0x | X_0 = z0, X_{-1} = z1)`, which equals
//! `P(z0 <= g_y(z1, e1, e0))`. With `w0 = e0 + r1 e1` this becomes
//!
//! ```text
//! Q_y(z) = (1/r1) * int_{w0 >= delta} f(alpha1(w0)) F(w0) dw0
//! ```
//!
//! and the operator acting on clip-invariant functions has kernel
//! `K = d^2 Q / dz0 dz1`, with `gamma = -dQ/dz0` and `K = -d gamma/dz1`.
//! All inner integrals run over `w0 >= delta_y(z0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ARParams, InnovationModel};
use crate::quadrature::{gauss_legendre_1d, Point, Tail};

pub const DEFAULT_INNER_RULE: usize = 32;
pub const DEFAULT_EPS: f64 = 1e-8;

/// A finite threshold `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(x: f64) -> Result<Self> {
        if x.is_finite() {
            Ok(Threshold(x))
        } else {
            Err(Error::InvalidParameter(format!("threshold must be finite, got {x}")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Everything the kernel depends on: coefficients, innovation law,
/// threshold and the inner quadrature rule.
#[derive(Debug, Clone)]
pub struct KernelContext {
    params: ARParams,
    innovation: InnovationModel,
    x: Threshold,
    inner_rule: usize,
    eps: f64,
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelContext {
    pub fn new(
        params: ARParams,
        innovation: InnovationModel,
        x: f64,
        inner_rule: usize,
        eps: f64,
    ) -> Result<Self> {
        let x = Threshold::new(x)?;
        if inner_rule < 8 {
            return Err(Error::InvalidParameter(format!("inner rule needs >= 8 nodes, got {inner_rule}")));
        }
        if !(eps > 0.0 && eps < 1e-2) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1e-2), got {eps}")));
        }
        let (lo, hi) = innovation.tail_cutoffs(eps);
        let (nodes, weights) = gauss_legendre_1d(inner_rule, -1.0, 1.0)?;
        Ok(KernelContext { params, innovation, x, inner_rule, eps, lo, hi, nodes, weights })
    }

    pub fn with_defaults(params: ARParams, innovation: InnovationModel, x: f64) -> Result<Self> {
        Self::new(params, innovation, x, DEFAULT_INNER_RULE, DEFAULT_EPS)
    }

    pub fn params(&self) -> &ARParams {
        &self.params
    }

    pub fn innovation(&self) -> &InnovationModel {
        &self.innovation
    }

    pub fn x(&self) -> f64 {
        self.x.value()
    }

    pub fn inner_rule(&self) -> usize {
        self.inner_rule
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Innovation cutoffs `(F^{-1}(eps), F^{-1}(1 - eps))`.
    pub fn cutoffs(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Gauss–Legendre sum of `g` over `[a, b]`; zero for an empty interval.
    #[inline]
    fn inner<G: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut g: G) -> f64 {
        if b <= a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut s = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            s += w * g(mid + half * t);
        }
        half * s
    }

    /// `(int f(alpha1) f(w0), int f'(alpha1) f(w0))` over `w0 >= delta`.
    fn density_integrals(&self, v: f64, delta: f64) -> (f64, f64) {
        let r1 = self.params.r1();
        let a = delta.max(v - r1 * self.hi).max(self.lo);
        let b = self.hi.min(v - r1 * self.lo);
        if b <= a {
            return (0.0, 0.0);
        }
        let law = &self.innovation;
        let (half, mid) = (0.5 * (b - a), 0.5 * (b + a));
        let (mut i_f, mut i_fp) = (0.0, 0.0);
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            let w0 = mid + half * t;
            let a1 = (v - w0) / r1;
            let fw = w * law.pdf(w0);
            i_f += fw * law.pdf(a1);
            i_fp += fw * law.pdf_deriv(a1);
        }
        (half * i_f, half * i_fp)
    }

    /// `int f(alpha1) F(w0)` over `w0 >= delta`. Not capped at the upper
    /// cutoff, since `F` does not vanish there.
    fn cdf_integral(&self, v: f64, delta: f64) -> f64 {
        let r1 = self.params.r1();
        let law = &self.innovation;
        let a = delta.max(v - r1 * self.hi).max(self.lo);
        self.inner(a, v - r1 * self.lo, |w0| law.pdf((v - w0) / r1) * law.cdf(w0))
    }

    /// `(delta, alpha2, v)` with `v = alpha1 * r1 + w0`.
    #[inline]
    fn frame(&self, y: Point, z: Point) -> (f64, f64, f64) {
        let [y0, y1] = clip(y, self.x());
        let (r1, r2) = (self.params.r1(), self.params.r2());
        let delta = y0 - r1 * y1 - r2 * z[0];
        let alpha2 = y1 - r1 * z[0] - r2 * z[1];
        let v = y0 - r1 * r2 * z[1] - self.params.s() * z[0];
        (delta, alpha2, v)
    }
}

/// `(min(y0, x), min(y1, x))`.
#[inline]
pub fn clip(y: Point, x: f64) -> Point {
    [y[0].min(x), y[1].min(x)]
}

/// `g_1 = (y0x - e0 - r1 e1 - r1 r2 z1) / (r1^2 + r2)`.
pub fn g1(z1: f64, e1: f64, e0: f64, y: Point, ctx: &KernelContext) -> f64 {
    let p = ctx.params();
    let y0 = y[0].min(ctx.x());
    (y0 - e0 - p.r1() * e1 - p.r1() * p.r2() * z1) / p.s()
}

/// `g_2 = (y1x - e1 - r2 z1) / r1`.
pub fn g2(z1: f64, e1: f64, _e0: f64, y: Point, ctx: &KernelContext) -> f64 {
    let p = ctx.params();
    let y1 = y[1].min(ctx.x());
    (y1 - e1 - p.r2() * z1) / p.r1()
}

/// Largest `z0` for which both of the next two values stay below `clip(y)`.
pub fn g_min(z1: f64, e1: f64, e0: f64, y: Point, ctx: &KernelContext) -> f64 {
    g1(z1, e1, e0, y, ctx).min(g2(z1, e1, e0, y, ctx))
}

/// The geometry functions at `(y, z, w0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub delta: f64,
    /// `None` when `r2 = 0`.
    pub beta: Option<f64>,
    pub c: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// The `e1` at which `g_1 = g_2`, taking `e0 = w0`; `None` when `r2 = 0`.
    pub h: Option<f64>,
}

impl Geometry {
    pub fn beta(&self) -> Result<f64> {
        self.beta.ok_or(Error::BetaUndefined)
    }
}

pub fn geometry(y: Point, z: Point, w0: f64, ctx: &KernelContext) -> Geometry {
    let [y0, y1] = clip(y, ctx.x());
    let p = ctx.params();
    let (r1, r2, s) = (p.r1(), p.r2(), p.s());
    let delta = y0 - r1 * y1 - r2 * z[0];
    let c = (y0 - r1 * r2 * z[1] - s * z[0] - w0) / r1;
    let v = y0 - r1 * r2 * z[1] - s * z[0];
    let alpha1 = (v - w0) / r1;
    let alpha2 = y1 - r1 * z[0] - r2 * z[1];
    let (beta, h) = if r2 == 0.0 {
        (None, None)
    } else {
        (
            Some((y0 - r1 * y1 - w0) / r2),
            Some((s * y1 - r1 * y0 + r1 * w0 - r2 * r2 * z[1]) / r2),
        )
    };
    Geometry { delta, beta, c, alpha1, alpha2, h }
}

/// `Q_y(z)`: probability that the next two values stay below `clip(y)`
/// given the current state `z`.
pub fn transition_q(y: Point, z: Point, ctx: &KernelContext) -> f64 {
    let (delta, _, v) = ctx.frame(y, z);
    ctx.cdf_integral(v, delta) / ctx.params().r1()
}

/// `gamma_y(z) = -dQ_y/dz0
///   = (r1 + r2/r1) int f(alpha1) f(w0) dw0 + r1 f(alpha2) F(delta)`.
pub fn gamma(y: Point, z: Point, ctx: &KernelContext) -> f64 {
    let (delta, alpha2, v) = ctx.frame(y, z);
    let p = ctx.params();
    let law = ctx.innovation();
    let (i_f, _) = ctx.density_integrals(v, delta);
    (p.r1() + p.r2() / p.r1()) * i_f + p.r1() * law.pdf(alpha2) * law.cdf(delta)
}

/// `K(y,z) = -d gamma_y(z)/dz1
///   = (r1 + r2/r1) r2 int f'(alpha1) f(w0) dw0 + r1 r2 F(delta) f'(alpha2)`.
pub fn kernel_k(y: Point, z: Point, ctx: &KernelContext) -> f64 {
    let (delta, alpha2, v) = ctx.frame(y, z);
    let p = ctx.params();
    let law = ctx.innovation();
    let (_, i_fp) = ctx.density_integrals(v, delta);
    let (r1, r2) = (p.r1(), p.r2());
    (r1 + r2 / r1) * r2 * i_fp + r1 * r2 * law.cdf(delta) * law.pdf_deriv(alpha2)
}

/// `K((x, x), z)`, the row that reads a function off at `y = (inf, inf)`.
pub fn kernel_row_at_infinity(z: Point, ctx: &KernelContext) -> f64 {
    let x = ctx.x();
    kernel_k([x, x], z, ctx)
}

/// `int_x^inf K(y, (s, z1)) ds = -dQ_y/dz1` at `z0 = x`
///   `= r2 f(alpha2) F(delta) + r2 int f(alpha1) f(w0) dw0`.
pub fn tail_z0(y: Point, z1: f64, ctx: &KernelContext) -> f64 {
    let (delta, alpha2, v) = ctx.frame(y, [ctx.x(), z1]);
    let r2 = ctx.params().r2();
    let law = ctx.innovation();
    let (i_f, _) = ctx.density_integrals(v, delta);
    r2 * law.pdf(alpha2) * law.cdf(delta) + r2 * i_f
}

/// Kernel integrated over the half-lines a collapsed-grid node stands for.
pub fn collapsed_kernel(y: Point, node: Point, tail: Tail, ctx: &KernelContext) -> f64 {
    let x = ctx.x();
    match (tail.z0, tail.z1) {
        (false, false) => kernel_k(y, node, ctx),
        (true, false) => tail_z0(y, node[1], ctx),
        (false, true) => gamma(y, [node[0], x], ctx),
        (true, true) => transition_q(y, [x, x], ctx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gaussian_innovation, logistic_innovation, seeded_rng, validate_params};
    use rand::RngExt;

    fn reference(x: f64) -> KernelContext {
        let p = validate_params(0.5, 0.3, 1.0).unwrap();
        KernelContext::with_defaults(p, gaussian_innovation(1.0).unwrap(), x).unwrap()
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip([f64::INFINITY, f64::INFINITY], 1.0), [1.0, 1.0]);
        assert_eq!(clip([0.2, 5.0], 1.0), [0.2, 1.0]);
        assert_eq!(clip([0.2, 5.0], f64::INFINITY), [0.2, 5.0]);
    }

    #[test]
    fn g_function_example() {
        let ctx = reference(1.0);
        let y = [f64::INFINITY; 2];
        let a = g1(0.5, -0.2, 0.1, y, &ctx);
        let b = g2(0.5, -0.2, 0.1, y, &ctx);
        assert!((a - 0.925 / 0.55).abs() < 1e-14);
        assert!((b - 2.1).abs() < 1e-14);
        assert_eq!(g_min(0.5, -0.2, 0.1, y, &ctx), a);
    }

    #[test]
    fn geometry_examples() {
        let ctx = reference(1.0);
        let y = [f64::INFINITY; 2];
        let g = geometry(y, [0.2, -0.1], 0.0, &ctx);
        assert!((g.delta - 0.44).abs() < 1e-14);
        assert!((g.alpha2 - 0.93).abs() < 1e-14);
        let mut rng = seeded_rng(3, 0);
        for _ in 0..100 {
            let y = [rng.random::<f64>() * 6.0 - 3.0, rng.random::<f64>() * 6.0 - 3.0];
            let z = [rng.random::<f64>() * 6.0 - 3.0, rng.random::<f64>() * 6.0 - 3.0];
            let w0 = rng.random::<f64>() * 6.0 - 3.0;
            let g = geometry(y, z, w0, &ctx);
            assert!((g.c - g.alpha1).abs() <= 1e-12 * (1.0 + g.c.abs()));
            // z0 < beta(w0) exactly when w0 < delta(z0)
            assert_eq!(z[0] < g.beta().unwrap(), w0 < g.delta);
            let e1 = g.h.unwrap();
            let (a, b) = (g1(z[1], e1, w0, y, &ctx), g2(z[1], e1, w0, y, &ctx));
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
        let p = validate_params(0.5, 0.0, 1.0).unwrap();
        let flat = KernelContext::with_defaults(p, gaussian_innovation(1.0).unwrap(), 1.0).unwrap();
        let g = geometry([0.0, 0.0], [0.0, 0.0], 0.0, &flat);
        assert_eq!(g.beta(), Err(Error::BetaUndefined));
        assert!(kernel_k([0.0, 0.0], [0.1, 0.2], &flat).is_finite());
    }

    #[test]
    fn context_validation() {
        let p = validate_params(0.5, 0.3, 1.0).unwrap();
        let e = gaussian_innovation(1.0).unwrap();
        assert!(KernelContext::new(p, e, 1.0, 7, 1e-8).is_err());
        assert!(KernelContext::new(p, e, f64::NAN, 32, 1e-8).is_err());
        assert!(KernelContext::new(p, e, 1.0, 32, 0.5).is_err());
    }

    /// Monte Carlo oracle for `Q`: the fraction of innovation pairs with
    /// `z0 <= g_min(z1, e1, e0)`.
    #[test]
    fn transition_matches_simulation() {
        for law in [gaussian_innovation(1.0).unwrap(), logistic_innovation(0.6).unwrap()] {
            let p = validate_params(0.5, 0.3, 1.0).unwrap();
            let ctx = KernelContext::with_defaults(p, law, 1.5).unwrap();
            let mut rng = seeded_rng(5, 1);
            let reps = 200_000;
            let draws: Vec<(f64, f64)> =
                (0..reps).map(|_| (law.sample(&mut rng), law.sample(&mut rng))).collect();
            for (y, z) in [([1.0, 0.5], [0.2, -0.3]), ([9.0, 9.0], [1.5, 1.5]), ([0.0, 2.0], [-1.0, 0.7])] {
                let q = transition_q(y, z, &ctx);
                let hits = draws.iter().filter(|(e1, e0)| z[0] <= g_min(z[1], *e1, *e0, y, &ctx)).count();
                let p_hat = hits as f64 / reps as f64;
                let se = (p_hat * (1.0 - p_hat) / reps as f64).sqrt().max(1e-6);
                assert!((q - p_hat).abs() < 4.0 * se, "{law:?} y={y:?} z={z:?}: {q} vs {p_hat}");
            }
        }
    }

    #[test]
    fn derivative_chain_against_finite_differences() {
        let h = 1e-4;
        for law in [gaussian_innovation(1.0).unwrap(), logistic_innovation(0.6).unwrap()] {
            let p = validate_params(0.5, 0.3, 1.0).unwrap();
            let ctx = KernelContext::with_defaults(p, law, 1.0).unwrap();
            let mut rng = seeded_rng(9, 0);
            for _ in 0..200 {
                let y = [rng.random::<f64>() * 5.0 - 2.0, rng.random::<f64>() * 5.0 - 2.0];
                let z = [rng.random::<f64>() * 5.0 - 3.0, rng.random::<f64>() * 5.0 - 3.0];
                let k = kernel_k(y, z, &ctx);
                let fd = (gamma(y, [z[0], z[1] - h], &ctx) - gamma(y, [z[0], z[1] + h], &ctx)) / (2.0 * h);
                assert!((k - fd).abs() <= 1e-5 * (1.0 + k.abs()), "K {k} vs {fd}");
                let g = gamma(y, z, &ctx);
                let fd = (transition_q(y, [z[0] - h, z[1]], &ctx) - transition_q(y, [z[0] + h, z[1]], &ctx))
                    / (2.0 * h);
                assert!((g - fd).abs() <= 1e-6 * (1.0 + g.abs()), "gamma {g} vs {fd}");
                let e = tail_z0(y, z[1], &ctx);
                let x = ctx.x();
                let fd = (transition_q(y, [x, z[1] - h], &ctx) - transition_q(y, [x, z[1] + h], &ctx))
                    / (2.0 * h);
                assert!((e - fd).abs() <= 1e-6 * (1.0 + e.abs()), "tail {e} vs {fd}");
            }
        }
    }

    #[test]
    fn clipping_invariance_is_exact() {
        let ctx = reference(1.0);
        let mut rng = seeded_rng(1, 2);
        for _ in 0..100 {
            let y = [1.0 + 5.0 * rng.random::<f64>(), 1.0 + 5.0 * rng.random::<f64>()];
            let z = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0];
            assert_eq!(kernel_k(y, z, &ctx), kernel_k(clip(y, 1.0), z, &ctx));
            assert_eq!(gamma(y, z, &ctx), gamma(clip(y, 1.0), z, &ctx));
            assert_eq!(kernel_row_at_infinity(z, &ctx), kernel_k([6.0, 8.0], z, &ctx));
            assert_eq!(kernel_row_at_infinity(z, &ctx), kernel_k([1.0, 1.0], z, &ctx));
        }
    }

    #[test]
    fn decay_in_z1() {
        let ctx = reference(1.0);
        for y in [[f64::INFINITY; 2], [0.0, 0.5]] {
            // the z1 coupling runs through r1 r2 = 0.15, so at 50 sd the
            // inner Gaussian product is still around 1e-10
            for z1 in [-50.0, 50.0] {
                assert!(gamma(y, [0.3, z1], &ctx).abs() < 1e-8);
                assert!(kernel_k(y, [0.3, z1], &ctx).abs() < 1e-8);
            }
            for z1 in [-200.0, 200.0] {
                assert!(gamma(y, [0.3, z1], &ctx).abs() < 1e-300);
                assert!(kernel_k(y, [0.3, z1], &ctx).abs() < 1e-300);
            }
        }
        // empty inner region and F(delta) ~ 0
        let g = gamma([-20.0, 0.0], [0.0, 0.0], &ctx);
        assert!(g.abs() < 1e-12);
    }

    #[test]
    fn inner_rule_refinement() {
        let p = validate_params(0.5, 0.3, 1.0).unwrap();
        let e = gaussian_innovation(1.0).unwrap();
        let a = KernelContext::new(p, e, 1.0, 32, 1e-8).unwrap();
        let b = KernelContext::new(p, e, 1.0, 64, 1e-8).unwrap();
        let y = [f64::INFINITY; 2];
        assert!((gamma(y, [0.0, 0.0], &a) - gamma(y, [0.0, 0.0], &b)).abs() < 1e-10);
        assert!((kernel_k(y, [0.0, 0.0], &a) - kernel_k(y, [0.0, 0.0], &b)).abs() < 1e-10);
        assert!((transition_q(y, [0.0, 0.0], &a) - transition_q(y, [0.0, 0.0], &b)).abs() < 1e-10);
    }

    #[test]
    fn square_integrability_proxy() {
        let ctx = reference(3.0);
        let g = crate::quadrature::tensor_grid(
            12,
            crate::quadrature::Rect::square(-8.4, 3.0).unwrap(),
        )
        .unwrap();
        let (nodes, w) = (g.nodes(), g.weights());
        let mut s = 0.0;
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                s += w[i] * w[j] * kernel_k(nodes[i], nodes[j], &ctx) * kernel_k(nodes[j], nodes[i], &ctx);
            }
        }
        assert!(s.is_finite() && s > 0.0, "{s}");
    }
}
