//! Dump an expansion to JSON and evaluate the reloaded copy.

use ar2max::prelude::*;

fn main() -> ar2max::Result<()> {
    let params = validate_params(0.5, 0.3, 1.0)?;
    let e = gaussian_innovation(1.0)?;
    let settings = Settings { spectrum_count: Some(6), ..Settings::with_m(16) };
    let exp = build_expansion(&params, &e, &InitialLaw::gaussian(&params), 3.0, &settings)?;
    let json = exp.to_json()?;
    println!("{} bytes of JSON, first lines:", json.len());
    for line in json.lines().take(8) {
        println!("  {line}");
    }
    let back = MaxCdfExpansion::from_json(&json)?;
    println!("u_10 = {:.10} (reloaded {:.10})", cdf_at(&exp, 10)?.raw, cdf_at(&back, 10)?.raw);
    Ok(())
}
