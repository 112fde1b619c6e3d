//! Geometric decay u_{2n} ~ B(H) lambda_1^n and where the ratio settles.

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let params = validate_params(0.5, 0.3, 1.0)?;
    let e = gaussian_innovation(1.0)?;
    let law = InitialLaw::gaussian(&params);
    for x in [2.0, 3.0, 4.0] {
        let exp = build_expansion(&params, &e, &law, x, &Settings::with_m(20))?;
        let d = decay_law(&exp)?;
        let settle = ratio_settles(&exp, 1e-3, 200)?;
        println!(
            "x = {x}: lambda_1 = {:.10}, M = {}, B(H) = {:.6}, B(G1) = {:.6}, ratio within 1e-3 from n = {settle:?}",
            d.lambda1, d.multiplicity, d.b_h, d.b_g1
        );
    }
    Ok(())
}
