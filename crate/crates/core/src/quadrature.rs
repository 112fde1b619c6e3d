//! Gauss–Legendre rules, tensor-product grids over a rectangle, and the
//! collapsed grid used to discretize the operator on functions that are
//! constant beyond the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stationary_moments, ARParams, InnovationModel};

pub type Point = [f64; 2];

/// Default cap on the number of grid points.
pub const DEFAULT_POINT_CAP: usize = 10_000;

/// Gauss–Legendre nodes (ascending) and weights mapped to `[a, b]`.
pub fn gauss_legendre_1d(m: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::InvalidParameter("quadrature needs m >= 1".into()));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidInterval { a, b });
    }
    let mut t = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        // root i of P_m, counted from the right end
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if p.abs() < 1e-14 || dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        t[i] = -z;
        t[m - 1 - i] = z;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    if m % 2 == 1 {
        t[m / 2] = 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let nodes = t.iter().map(|ti| mid + half * ti).collect();
    let weights = w.iter().map(|wi| half * wi).collect();
    Ok((nodes, weights))
}

/// `(P_m(z), P_m'(z))` by the three-term recurrence.
fn legendre(m: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Axis-aligned rectangle `[lo[0], hi[0]] x [lo[1], hi[1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Point,
    pub hi: Point,
}

impl Rect {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        for k in 0..2 {
            if !(lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]) {
                return Err(Error::InvalidInterval { a: lo[k], b: hi[k] });
            }
        }
        Ok(Rect { lo, hi })
    }

    pub fn square(a: f64, b: f64) -> Result<Self> {
        Rect::new([a, a], [b, b])
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
}

/// Square truncation `[a, b]^2` holding all but about `4 eps` of the
/// stationary mass, with `a = mu - c sd_X`, `b = max(x, mu + c sd_X)`.
///
/// `c` is the innovation's `1 - eps` quantile in innovation standard
/// deviations; a weighted sum of innovations has no heavier standardized tail,
/// and for Gaussian innovations this is exactly the normal quantile.
pub fn truncation_box(
    innovation: &InnovationModel,
    params: &ARParams,
    x: f64,
    eps: f64,
) -> Result<Rect> {
    if !(eps > 0.0 && eps < 1e-2) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1e-2), got {eps}")));
    }
    let sd = stationary_moments(params).sd_x();
    let (_, upper) = innovation.tail_cutoffs(eps);
    let c = upper / innovation.std_dev();
    let mu = 0.0;
    Rect::square(mu - c * sd, x.max(mu + c * sd))
}

/// Tensor-product Gauss–Legendre grid on a rectangle.
///
/// Nodes are stored row-major: `k = i * m + j` is `(t_i, s_j)` with `t` the
/// axis-0 nodes and `s` the axis-1 nodes.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    nodes: Vec<Point>,
    weights: Vec<f64>,
    rect: Rect,
    m: usize,
}

impl QuadratureGrid {
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub fn tensor_grid(m: usize, rect: Rect) -> Result<QuadratureGrid> {
    tensor_grid_with_cap(m, rect, DEFAULT_POINT_CAP)
}

pub fn tensor_grid_with_cap(m: usize, rect: Rect, cap: usize) -> Result<QuadratureGrid> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("tensor grid needs m >= 2, got {m}")));
    }
    if m * m > cap {
        return Err(Error::GridTooLarge { points: m * m, cap });
    }
    let (t, wt) = gauss_legendre_1d(m, rect.lo[0], rect.hi[0])?;
    let (s, ws) = gauss_legendre_1d(m, rect.lo[1], rect.hi[1])?;
    let mut nodes = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            nodes.push([t[i], s[j]]);
            weights.push(wt[i] * ws[j]);
        }
    }
    Ok(QuadratureGrid { nodes, weights, rect, m })
}

pub fn integrate<F: Fn(Point) -> f64>(grid: &QuadratureGrid, f: F) -> f64 {
    grid.nodes.iter().zip(&grid.weights).map(|(z, w)| w * f(*z)).sum()
}

pub fn try_integrate<E, F: Fn(Point) -> std::result::Result<f64, E>>(
    grid: &QuadratureGrid,
    f: F,
) -> std::result::Result<f64, E> {
    let mut total = 0.0;
    for (z, w) in grid.nodes.iter().zip(&grid.weights) {
        total += w * f(*z)?;
    }
    Ok(total)
}

/// Which coordinates of a collapsed-grid node stand for the half-line
/// `[x, inf)` rather than a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tail {
    pub z0: bool,
    pub z1: bool,
}

/// Grid for functions `r` with `r(z) = r(min(z0,x), min(z1,x))`.
///
/// Each axis carries `m` Gauss–Legendre nodes on `[a, x]` followed by one
/// tail node located at `x` with unit weight; a tail node stands for the
/// whole half-line `[x, inf)`, over which such functions are constant, and
/// the operator integrates its kernel over that half-line in closed form.
/// Nodes are row-major over `(m + 1)^2` points; the last one is the corner
/// `(x, x)`, which is also where `y = (inf, inf)` clips to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapsedGrid {
    axis: Vec<f64>,
    axis_weights: Vec<f64>,
    lower: f64,
    x: f64,
    m: usize,
}

impl CollapsedGrid {
    pub fn new(m: usize, lower: f64, x: f64) -> Result<Self> {
        Self::with_cap(m, lower, x, DEFAULT_POINT_CAP)
    }

    pub fn with_cap(m: usize, lower: f64, x: f64, cap: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!("grid needs m >= 2, got {m}")));
        }
        if !x.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        if x <= lower {
            return Err(Error::ThresholdBelowDomain { x, lower });
        }
        let points = (m + 1) * (m + 1);
        if points > cap {
            return Err(Error::GridTooLarge { points, cap });
        }
        let (mut axis, mut axis_weights) = gauss_legendre_1d(m, lower, x)?;
        axis.push(x);
        axis_weights.push(1.0);
        Ok(CollapsedGrid { axis, axis_weights, lower, x, m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Axis coordinates, ascending, tail node last.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn len(&self) -> usize {
        self.axis.len() * self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn corner(&self) -> usize {
        self.len() - 1
    }

    pub fn node(&self, k: usize) -> Point {
        let n = self.axis.len();
        [self.axis[k / n], self.axis[k % n]]
    }

    pub fn weight(&self, k: usize) -> f64 {
        let n = self.axis.len();
        self.axis_weights[k / n] * self.axis_weights[k % n]
    }

    pub fn tail(&self, k: usize) -> Tail {
        let n = self.axis.len();
        Tail { z0: k / n == self.m, z1: k % n == self.m }
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// The interior `[a, x]^2` tensor grid.
    pub fn interior(&self) -> QuadratureGrid {
        tensor_grid_with_cap(self.m, Rect::square(self.lower, self.x).expect("x > lower"), usize::MAX)
            .expect("m >= 2")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gaussian_innovation, validate_params};
    use crate::normal;
    use proptest::prelude::*;

    #[test]
    fn small_rules() {
        let (t, w) = gauss_legendre_1d(1, -1.0, 1.0).unwrap();
        assert_eq!(t, vec![0.0]);
        assert!((w[0] - 2.0).abs() < 1e-15);
        let (t, w) = gauss_legendre_1d(2, -1.0, 1.0).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((t[0] + r).abs() < 1e-15 && (t[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        let i: f64 = t.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((i - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_interval() {
        assert!(matches!(gauss_legendre_1d(4, 1.0, 1.0), Err(Error::InvalidInterval { .. })));
        assert!(matches!(gauss_legendre_1d(4, 2.0, 1.0), Err(Error::InvalidInterval { .. })));
        assert!(gauss_legendre_1d(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn nodes_converge_tightly() {
        for m in [5, 16, 32, 64, 100] {
            let (t, w) = gauss_legendre_1d(m, -1.0, 1.0).unwrap();
            for z in &t {
                assert!(legendre(m, *z).0.abs() < 1e-13, "m={m}");
            }
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            assert!(t.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn tensor_grid_basics() {
        let g = tensor_grid(2, Rect::square(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(g.len(), 4);
        for w in g.weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        let g = tensor_grid(7, Rect::new([0.0, 0.0], [2.0, 3.0]).unwrap()).unwrap();
        assert!((integrate(&g, |_| 1.0) - 6.0).abs() < 1e-13);
        for z in g.nodes() {
            assert!(z[0] > 0.0 && z[0] < 2.0 && z[1] > 0.0 && z[1] < 3.0);
        }
        let g = tensor_grid(3, Rect::square(-1.0, 1.0).unwrap()).unwrap();
        assert!(integrate(&g, |z| z[0] * z[1]).abs() < 1e-15);
        assert!(matches!(
            tensor_grid(101, Rect::square(0.0, 1.0).unwrap()),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn normal_density_integrates_to_one() {
        let g = tensor_grid(40, Rect::square(-8.0, 8.0).unwrap()).unwrap();
        let got = integrate(&g, |z| normal::pdf(z[0]) * normal::pdf(z[1]));
        let want = (normal::cdf(8.0) - normal::cdf(-8.0)).powi(2);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn refinement_is_stable() {
        let f = |z: Point| (0.3 * z[0]).cos() * (-0.1 * z[1] * z[1]).exp() * (1.0 + z[0] * z[1]);
        let r = Rect::new([-3.0, -2.0], [4.0, 5.0]).unwrap();
        for m in [32, 40] {
            let a = integrate(&tensor_grid(m, r).unwrap(), f);
            let b = integrate(&tensor_grid(2 * m, r).unwrap(), f);
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn try_integrate_propagates() {
        let g = tensor_grid(3, Rect::square(0.0, 1.0).unwrap()).unwrap();
        let r: std::result::Result<f64, &str> =
            try_integrate(&g, |z| if z[0] > 0.5 { Err("boom") } else { Ok(1.0) });
        assert_eq!(r, Err("boom"));
    }

    #[test]
    fn reference_truncation_box() {
        let p = validate_params(0.5, 0.3, 1.0).unwrap();
        let e = gaussian_innovation(1.0).unwrap();
        let b = truncation_box(&e, &p, 3.0, 1e-8).unwrap();
        assert!((b.lo[0] + 8.406).abs() < 0.01, "{b:?}");
        assert!((b.hi[0] - 8.406).abs() < 0.01);
        let c = -b.lo[0] / stationary_moments(&p).sd_x();
        assert!((c - normal::quantile(1.0 - 1e-8)).abs() < 1e-6);
        let wide = truncation_box(&e, &p, 20.0, 1e-8).unwrap();
        assert_eq!(wide.hi[0], 20.0);
        let loose = truncation_box(&e, &p, 3.0, 1e-4).unwrap();
        assert!(loose.lo[0] > b.lo[0] && loose.hi[0] < b.hi[0]);
        assert!(truncation_box(&e, &p, 3.0, 0.1).is_err());
    }

    #[test]
    fn collapsed_grid_layout() {
        let g = CollapsedGrid::new(4, -5.0, 1.0).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.node(g.corner()), [1.0, 1.0]);
        assert_eq!(g.tail(g.corner()), Tail { z0: true, z1: true });
        assert_eq!(g.tail(4), Tail { z0: false, z1: true });
        assert_eq!(g.tail(20), Tail { z0: true, z1: false });
        assert_eq!(g.weight(g.corner()), 1.0);
        let interior: f64 = (0..g.len())
            .filter(|&k| g.tail(k) == Tail { z0: false, z1: false })
            .map(|k| g.weight(k))
            .sum();
        assert!((interior - 36.0).abs() < 1e-12);
        assert!(matches!(
            CollapsedGrid::new(4, 2.0, 1.0),
            Err(Error::ThresholdBelowDomain { .. })
        ));
    }

    proptest! {
        /// Tensor rules integrate separable polynomials of per-axis degree
        /// up to 2m-1 exactly.
        #[test]
        fn polynomial_exactness(
            m in 2usize..12,
            c in proptest::collection::vec(-2.0f64..2.0, 1..24),
            d in proptest::collection::vec(-2.0f64..2.0, 1..24),
            a0 in -3.0f64..0.0, len0 in 0.5f64..4.0,
            a1 in -3.0f64..0.0, len1 in 0.5f64..4.0,
        ) {
            let deg = 2 * m - 1;
            let c: Vec<f64> = c.into_iter().take(deg + 1).collect();
            let d: Vec<f64> = d.into_iter().take(deg + 1).collect();
            let r = Rect::new([a0, a1], [a0 + len0, a1 + len1]).unwrap();
            let g = tensor_grid(m, r).unwrap();
            let poly = |cs: &[f64], t: f64| cs.iter().rev().fold(0.0, |acc, c| acc * t + c);
            let anti = |cs: &[f64], lo: f64, hi: f64| {
                cs.iter().enumerate().map(|(k, c)| {
                    let p = (k + 1) as i32;
                    c * (hi.powi(p) - lo.powi(p)) / p as f64
                }).sum::<f64>()
            };
            let got = integrate(&g, |z| poly(&c, z[0]) * poly(&d, z[1]));
            let want = anti(&c, r.lo[0], r.hi[0]) * anti(&d, r.lo[1], r.hi[1]);
            let scale = 1.0 + want.abs()
                + anti(&c.iter().map(|v| v.abs()).collect::<Vec<_>>(), 0.0, 7.0).abs()
                    * anti(&d.iter().map(|v| v.abs()).collect::<Vec<_>>(), 0.0, 7.0).abs();
            prop_assert!((got - want).abs() <= 1e-10 * scale, "{} vs {}", got, want);
        }
    }
}
