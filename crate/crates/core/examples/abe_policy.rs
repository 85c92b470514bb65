//! Encrypt a section trapdoor under the AND policy {doctor, HospitalA} and
//! see which attribute sets can read it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vctp::abe::{self, AccessPolicy};
use vctp::chameleon::{GroupParams, ParamProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let group = GroupParams::profile(ParamProfile::Default);
    let universe = abe::setup(
        &group,
        &["doctor", "nurse", "patient", "relative", "HospitalA"],
        &mut rng,
    )?;
    let policy = AccessPolicy::new(["doctor", "HospitalA"])?;
    let ct = abe::encrypt(universe.public(), &policy, b"section trapdoor", &mut rng)?;
    println!("ciphertext envelope: {} bytes", ct.to_bytes().len());

    for attrs in [
        vec!["doctor", "HospitalA"],
        vec!["doctor", "nurse", "HospitalA"],
        vec!["nurse", "HospitalA"],
        vec!["doctor"],
        vec!["patient", "HospitalA"],
    ] {
        let key = abe::keygen(&universe, "did:example_staff:1", &attrs)?;
        match abe::decrypt(&group, &key, &ct) {
            Ok(pt) => println!("{attrs:?}: decrypts to {:?}", String::from_utf8_lossy(&pt)),
            Err(e) => println!("{attrs:?}: {e}"),
        }
    }
    Ok(())
}
