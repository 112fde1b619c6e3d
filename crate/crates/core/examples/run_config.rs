//! Drive the command-line layer from code: a TOML config rendered as a CDF table.

use ar2max::cli::{cmd_cdf, RunConfig, Session};

fn main() -> ar2max::Result<()> {
    let cfg = RunConfig::from_toml("m = 12\nx = [2.0, 3.0]\nn = \"0..=5\"\n")?;
    cmd_cdf(&Session::new(cfg)?, std::io::stdout())
}
