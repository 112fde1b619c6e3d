//! The one-step transition probability Q, its derivative gamma and the kernel K,
//! with a finite-difference check of K = -d gamma / d z1.

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let params = validate_params(0.5, 0.3, 1.0)?;
    let ctx = KernelContext::with_defaults(params, gaussian_innovation(1.0)?, 1.0)?;
    let y = [f64::INFINITY, f64::INFINITY];
    for z in [[0.0, 0.0], [0.5, -1.0], [1.0, 1.0]] {
        let h = 1e-4;
        let k = kernel_k(y, z, &ctx);
        let fd = -(gamma(y, [z[0], z[1] + h], &ctx) - gamma(y, [z[0], z[1] - h], &ctx)) / (2.0 * h);
        println!(
            "z = {z:?}: Q = {:.8}, gamma = {:.8}, K = {:.8}, -dgamma/dz1 = {:.8}",
            transition_q(y, z, &ctx),
            gamma(y, z, &ctx),
            k,
            fd
        );
    }
    Ok(())
}
