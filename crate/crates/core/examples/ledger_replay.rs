//! Run the hospital scenario with a log file, then rebuild the state from the
//! log alone and compare state hashes.

use vctp::cli::scenario::{self, ScenarioScript, HOSPITAL_SCENARIO};
use vctp::ledger::{read_log, replay};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("vctp-ledger-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("ledger.jsonl");

    let out = scenario::run(
        &ScenarioScript::parse(HOSPITAL_SCENARIO)?,
        None,
        Some(&path),
    )?;
    let live = out.deployment.ledger.state_hash();
    let entries = read_log(&path)?;
    let rebuilt = replay(&entries)?;
    println!("{} log entries in {}", entries.len(), path.display());
    println!("live     {}", hex::encode(live));
    println!("replayed {}", hex::encode(rebuilt.state_hash()));
    for r in rebuilt.state().issuer_registry.values() {
        println!("issuer {} level {}", r.did, r.level);
    }

    // Swapping two entries breaks the hash chain.
    let mut swapped = entries.clone();
    swapped.swap(3, 4);
    println!(
        "reordered log: {}",
        replay(&swapped)
            .err()
            .map_or("accepted".into(), |e| e.to_string())
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
