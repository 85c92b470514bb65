//! Seal the letter-of-authority template, let the doctor rewrite the
//! trust-proxy section, and check that the outer signature still verifies.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vctp::abe;
use vctp::chameleon::{GroupParams, ParamProfile};
use vctp::encoding::canonical_json;
use vctp::keys::KeyBundle;
use vctp::pss::{self, Signer};
use vctp::template::{
    Grant, TrustPropagationTemplate, TrustProxySection, CREDENTIAL, HOSPITAL_TEMPLATE, TRUST_PROXY,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let group = GroupParams::profile(ParamProfile::Default);
    let hospital = KeyBundle::generate(&mut rng);
    let doctor = KeyBundle::generate(&mut rng);
    let hos_did = "did:example_hos:fcgfc2g823fcdd387";
    let doc_did = "did:example_doctor:fcgfc2g823fcdd387";

    let template = TrustPropagationTemplate::parse(HOSPITAL_TEMPLATE.as_bytes())?;
    let universe = abe::setup(
        &group,
        &["doctor", "nurse", "patient", "HospitalA"],
        &mut rng,
    )?;
    let sig = pss::hash_pch(
        &template,
        universe.public(),
        Signer {
            did: hos_did,
            key: &hospital.signing,
        },
        &mut rng,
    )?;
    println!("sealed; sigma = {}…", &hex::encode(&sig.sigma.0)[..24]);

    let doctor_key = abe::keygen(&universe, doc_did, ["doctor", "HospitalA"])?;
    let content = TrustProxySection {
        trust_proxy: doc_did.into(),
        next_level_issuer: Grant {
            id: "did:example_patient:fcgfc2g823fcdd387".into(),
            permissions: vec!["delegate-medical-decision".into()],
        },
    };
    let doctor_signer = Signer {
        did: doc_did,
        key: &doctor.signing,
    };
    let (updated, sig2) = pss::update_pch(
        &template,
        &sig,
        TRUST_PROXY,
        &canonical_json(&content),
        &doctor_key,
        doctor_signer,
    )?;
    println!(
        "updated trust_proxy; sigma unchanged: {}",
        sig2.sigma == sig.sigma
    );
    println!(
        "Verify_PCH = {}",
        pss::verify_pch(&updated, &sig2, &hospital.verifying_key()).decision()
    );

    // The doctor's attributes do not open the credential section's trapdoor.
    let err = pss::update_pch(
        &updated,
        &sig2,
        CREDENTIAL,
        b"{}",
        &doctor_key,
        doctor_signer,
    )
    .unwrap_err();
    println!("doctor on credential section: {err}");

    // Editing a section without a collision breaks verification.
    let mut tampered = TrustPropagationTemplate::parse(&updated.serialize_canonical())?;
    let mut tp = tampered.trust_proxy()?;
    tp.next_level_issuer.permissions.push("all".into());
    tampered = tampered.apply_update(TRUST_PROXY, &canonical_json(&tp))?;
    let v = pss::verify_pch(&tampered, &sig2, &hospital.verifying_key());
    println!(
        "tampered copy: Verify_PCH = {} ({})",
        v.decision(),
        v.reasons.join("; ")
    );
    Ok(())
}
