//! Runs the property suites, once as shipped and once with the
//! Newton-Schulz iteration reduced to the identity map.

use scale_opt::cli::{cmd_verify, VerifyConfig};
use scale_opt::NsConfig;

fn main() -> scale_opt::Result<()> {
    let pristine = cmd_verify(&VerifyConfig::default())?;
    print!("{pristine}");
    println!("all passed: {}\n", pristine.passed());

    let broken = VerifyConfig {
        ns: NsConfig {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            ..NsConfig::default()
        },
        ..VerifyConfig::default()
    };
    let report = cmd_verify(&broken)?;
    print!("{report}");
    println!("all passed: {}", report.passed());
    Ok(())
}
