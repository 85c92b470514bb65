//! A trapdoor holder finds randomness that makes a different message hash to
//! the same chameleon digest.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vctp::chameleon::{self, GroupParams, ParamProfile, Randomness};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(2021);
    let params = GroupParams::profile(ParamProfile::Default);
    let keys = chameleon::gen(&params, &mut rng)?;

    let original = br#"{"TrustProxy":"UNASSIGNED"}"#;
    let rewritten = br#"{"TrustProxy":"did:example_doctor:fcgfc2g823fcdd387"}"#;
    let r = Randomness::random(&params, &mut rng);
    let before = chameleon::hash(&params, &keys.hk, original, &r)?;

    let r2 = chameleon::find_collision(&params, &keys, original, &r, rewritten)?;
    let after = chameleon::hash(&params, &keys.hk, rewritten, &r2)?;

    println!(
        "group: {}-bit p, {}-bit q",
        params.p.bits(),
        params.q.bits()
    );
    println!("CH(original, r)    = {}…", &before.to_hex()[..32]);
    println!("CH(rewritten, r')  = {}…", &after.to_hex()[..32]);
    println!("digests equal: {}", before == after);

    // Without the trapdoor there is nothing to compute the collision with.
    let public_only = chameleon::ChameleonKeyPair::public_only(keys.hk.clone());
    let err =
        chameleon::find_collision(&params, &public_only, original, &r, rewritten).unwrap_err();
    println!("hashing key alone: {err}");
    Ok(())
}
