//! Gauss-Legendre rules, tensor grids and the collapsed grid used by the operator.

use ar2max::normal;
use ar2max::prelude::*;
use ar2max::quadrature::{integrate, tensor_grid, truncation_box, Rect};

fn main() -> ar2max::Result<()> {
    let (t, w) = gauss_legendre_1d(5, -1.0, 1.0)?;
    println!("5-point nodes {t:.6?}");
    println!("5-point weights {w:.6?}");

    let grid = tensor_grid(40, Rect::square(-8.0, 8.0)?)?;
    let mass = integrate(&grid, |z| normal::pdf(z[0]) * normal::pdf(z[1]));
    println!("normal density on [-8, 8]^2: {mass:.12}");

    let params = validate_params(0.5, 0.3, 1.0)?;
    let e = gaussian_innovation(1.0)?;
    let rect = truncation_box(&e, &params, 3.0, 1e-8)?;
    println!("truncation box {:?} to {:?}", rect.lo, rect.hi);

    let c = CollapsedGrid::new(4, rect.lo[0], 3.0)?;
    println!("collapsed grid: {} nodes, corner {:?} with weight {}", c.len(), c.node(c.corner()), c.weight(c.corner()));
    Ok(())
}
