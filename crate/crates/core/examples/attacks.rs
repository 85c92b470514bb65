//! Interception, impersonation and collusion attempts against a fresh deployment.

use vctp::cli::attack;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut all_held = true;
    for n in 1..=3 {
        let report = attack::run(n, 0)?;
        println!("{report}\n");
        all_held &= report.held();
    }
    std::process::exit(if all_held { 0 } else { 1 });
}
