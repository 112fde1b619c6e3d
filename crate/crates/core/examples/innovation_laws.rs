//! Innovation laws, stationary moments and the joint law of (X_0, X_{-1}).

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let params = validate_params(0.5, 0.3, 1.0)?;
    let m = stationary_moments(&params);
    println!("var_X = {:.6}, rho1 = {:.6}, rho2 = {:.6}", m.var_x, m.rho1, m.rho2);

    for law in [gaussian_innovation(1.0)?, logistic_innovation(1.0)?] {
        println!(
            "{:>8}: F(0) = {:.4}, f(0) = {:.7}, f'(1) = {:+.6}, sd = {:.4}",
            law.name(),
            law.cdf(0.0),
            law.pdf(0.0),
            law.pdf_deriv(1.0),
            law.std_dev()
        );
    }

    let h = InitialLaw::gaussian(&params);
    println!("H(0, 0) = {:.6} (orthant formula {:.6})", h.joint_cdf(0.0, 0.0), 0.25 + m.rho1.asin() / (2.0 * std::f64::consts::PI));
    println!("H(3, inf) = {:.6}", h.marginal_cdf(3.0));

    match validate_params(-0.5, 0.3, 1.0) {
        Err(e) => println!("r1 = -0.5 rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
