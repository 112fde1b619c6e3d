//! Logistic innovations with an empirical burn-in initial law.

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let params = validate_params(0.5, 0.3, 1.0)?;
    let e = logistic_innovation(3f64.sqrt() / std::f64::consts::PI)?;
    let law = initial_law(&params, &e, InitMode::EmpiricalBurnin, 1000, 200_000, 3)?;
    let disc = discretize(&params, &e, &law, 3.0, &Settings::with_m(20))?;
    let spec = disc.spectrum(1)?;
    let exp = expansion_from(&disc, &spec, None)?;
    println!("resolved prefix {} pairs, kept {}", spec.resolved_prefix(50), exp.terms());
    for w in &exp.diagnostics.warnings {
        println!("note: {w}");
    }
    let est = simulate_max_cdf(&params, &e, McSettings::burnin(1000), &[1, 5, 25], &[3.0], 100_000, 4)?;
    for c in compare(&exp, &est)? {
        println!("n = {:>2}: model {:.5}, simulated {:.5} +- {:.5}", c.n, c.model, c.p_hat, c.se);
    }
    Ok(())
}
