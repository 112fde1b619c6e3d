//! P(M_n <= x) from the spectral expansion, next to direct iteration.
//!
//! Usage: `cargo run --release --example max_cdf [m]`

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let m = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let params = validate_params(0.5, 0.3, 1.0)?;
    let e = gaussian_innovation(1.0)?;
    let disc = discretize(&params, &e, &InitialLaw::gaussian(&params), 3.0, &Settings::with_m(m))?;
    let exp = expansion_from(&disc, &disc.spectrum(1)?, None)?;
    println!("{} terms, u_2 truncation error {:.1e}", exp.terms(), exp.diagnostics.u2_truncation_error);
    let direct = direct_sequence(&disc, 50);
    println!("{:>3} {:>14} {:>14}", "n", "expansion", "direct");
    for n in [0, 1, 2, 3, 5, 10, 20, 50] {
        println!("{n:>3} {:>14.10} {:>14.10}", cdf_at(&exp, n)?.clamped, direct[n]);
    }
    Ok(())
}
