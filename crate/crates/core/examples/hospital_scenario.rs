//! The bundled hospital run: seal, onboard the patient, issue the letter to a
//! relative, verify. Pass a script path to run another one.

use vctp::cli::scenario::{self, ScenarioScript, HOSPITAL_SCENARIO};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = match std::env::args().nth(1) {
        Some(path) => ScenarioScript::load(path)?,
        None => ScenarioScript::parse(HOSPITAL_SCENARIO)?,
    };
    let out = scenario::run(&script, None, None)?;
    for line in &out.transcript {
        println!("{line}");
    }
    let sigma_stable = out.sigmas.windows(2).all(|w| w[0] == w[1]);
    println!(
        "sigma identical across {} template versions: {sigma_stable}",
        out.sigmas.len()
    );
    std::process::exit(out.exit_code());
}
