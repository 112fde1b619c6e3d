//! Simulated P(M_n <= x) with standard errors, compared with the expansion.

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let params = validate_params(0.5, 0.3, 1.0)?;
    let e = gaussian_innovation(1.0)?;
    let exp = build_expansion(&params, &e, &InitialLaw::gaussian(&params), 3.0, &Settings::with_m(20))?;
    let est = simulate_max_cdf(&params, &e, McSettings::gaussian(), &[1, 2, 5, 10, 25, 50], &[3.0], 200_000, 1)?;
    ar2max::mc::write_estimates_csv(std::io::stdout(), &est)?;
    for c in compare(&exp, &est)? {
        println!("n = {:>2}: model {:.5}, simulated {:.5}, z = {:+.2}{}", c.n, c.model, c.p_hat, c.z, if c.flagged { " (flagged)" } else { "" });
    }
    Ok(())
}
