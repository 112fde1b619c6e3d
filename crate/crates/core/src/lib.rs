//! Distribution of the running maximum `M_n = max(X_1, ..., X_n)` of a
//! stationary AR(2) process `X_i = e_i + r1 X_{i-1} + r2 X_{i-2}`.
//!
//! `u_n = P(M_n <= x)` is written as a sum of powers of the eigenvalues of
//! an integral operator on the two most recent values. The crate discretizes
//! that operator, decomposes it, assembles the expansion and checks it
//! against direct iteration and Monte Carlo.
//!
//! ```no_run
//! use ar2max::prelude::*;
//!
//! let params = validate_params(0.5, 0.3, 1.0)?;
//! let innovation = gaussian_innovation(1.0)?;
//! let law = InitialLaw::gaussian(&params);
//! let exp = build_expansion(&params, &innovation, &law, 3.0, &Settings::default())?;
//! println!("P(M_10 <= 3) = {}", cdf_at(&exp, 10)?.clamped);
//! # Ok::<(), ar2max::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod kernel;
pub mod maxdist;
pub mod mc;
pub mod model;
pub mod normal;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::kernel::{collapsed_kernel, gamma, kernel_k, transition_q, KernelContext};
    pub use crate::maxdist::{
        build_expansion, cdf_at, cdf_direct, decay_law, direct_sequence, discretize, expansion_from, ratio_settles,
        CdfValue, DecayLaw, Discretization, MaxCdfExpansion, Settings,
    };
    pub use crate::mc::{compare, simulate_max_cdf, Comparison, McEstimate, McSettings};
    pub use crate::model::{
        gaussian_innovation, initial_law, logistic_innovation, stationary_moments, validate_params, ARParams,
        InitMode, InitialLaw, InnovationModel,
    };
    pub use crate::quadrature::{gauss_legendre_1d, CollapsedGrid, QuadratureGrid};
    pub use crate::spectral::{build_operator, eig, eig_with, power_iteration, DiscreteOperator, Spectrum, Weighting};
}
