//! Read and administer a ledger log file.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::ledger::{read_log, replay, Ledger, LedgerError};
use crate::protocol::{Actor, ActorKind};

/// Registers a freshly keyed DID and returns its keystore.
pub fn did_register(
    ledger_path: &Path,
    did: &str,
    kind: ActorKind,
    seed: u64,
) -> Result<Actor, LedgerError> {
    let mut ledger = Ledger::open(ledger_path)?;
    // Mix the DID into the seed so one seed can key several DIDs.
    let digest = crate::encoding::sha256_parts(
        "vctp keystore seed",
        [&seed.to_le_bytes()[..], did.as_bytes()],
    );
    let mut rng = ChaCha20Rng::from_seed(digest);
    let actor = Actor::generate(did, kind, &mut rng);
    ledger.register_did(did, actor.ddo())?;
    Ok(actor)
}

/// One line per issuer: DID, level, and who onboarded it.
pub fn issuer_list(ledger_path: &Path) -> Result<Vec<String>, LedgerError> {
    let ledger = replay(&read_log(ledger_path)?)?;
    Ok(ledger
        .state()
        .issuer_registry
        .values()
        .map(|r| {
            format!(
                "{}\tlevel {}\tonboarded by {}",
                r.did,
                r.level,
                r.onboarded_by.as_deref().unwrap_or("genesis")
            )
        })
        .collect())
}

/// The credential record with this hex id, as pretty JSON.
pub fn credential_show(ledger_path: &Path, record_id: &str) -> Result<Option<String>, LedgerError> {
    let ledger = replay(&read_log(ledger_path)?)?;
    Ok(ledger
        .state()
        .credential(record_id)
        .map(|r| serde_json::to_string_pretty(r).expect("records serialize")))
}

/// Hex digest of the state rebuilt from the log.
pub fn state_hash(ledger_path: &Path) -> Result<String, LedgerError> {
    Ok(hex::encode(replay(&read_log(ledger_path)?)?.state_hash()))
}
