//! Discretize the operator and list its leading eigenvalues with diagnostics.
//!
//! Usage: `cargo run --release --example spectrum [m]`

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let m = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let params = validate_params(0.5, 0.3, 1.0)?;
    let e = gaussian_innovation(1.0)?;
    let disc = discretize(&params, &e, &InitialLaw::gaussian(&params), 3.0, &Settings::with_m(m))?;
    let spec = disc.spectrum(10)?;
    println!("{} nodes, ||A||_F = {:.4}", disc.grid().len(), spec.diagnostics().frobenius_norm);
    println!("{:>3} {:>14} {:>11} {:>10} {:>10}", "j", "lambda", "im", "residual", "condition");
    for j in 0..10 {
        let v = spec.values()[j];
        println!("{:>3} {:>14.10} {:>11.2e} {:>10.1e} {:>10.2e}", j + 1, v.re, v.im, spec.residual(j).unwrap_or(f64::NAN), spec.condition(j));
    }
    println!("resolved prefix: {} pairs", spec.resolved_prefix(50));
    let (p, _) = power_iteration(disc.operator(), 1e-13, 10_000)?;
    println!("power iteration: {p:.12}");
    Ok(())
}
