//! Policy-based sanitizable signatures over sectioned templates.
//!
//! Every updatable section gets its own chameleon key pair. The section is
//! hashed with that key and the trapdoor is ABE-encrypted under the section's
//! access policy. Fixed sections are hashed with SHA-256. The L1 issuer signs
//! the combination of all section digests once; authorized updaters later
//! rewrite a section by computing a collision, which leaves the digest, the
//! combined digest and the signature untouched.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abe::{self, AbeCiphertext, AbeError, AccessPolicy, AttributeSecretKey, PublicParams};
use crate::chameleon::{
    self, ChameleonDigest, ChameleonError, ChameleonKeyPair, GroupParams, HashingKey, Randomness,
    Trapdoor,
};
use crate::encoding::{hex_bytes, sha256, sha256_parts};
use crate::keys::{self, SignatureBytes, SigningKey, VerifyingKey};
use crate::template::{TemplateError, TrustPropagationTemplate};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PssError {
    #[error("unknown attribute `{0}` in a section policy")]
    UnknownAttribute(String),
    #[error("updater attributes do not satisfy the policy of `{section}`; missing {missing:?}")]
    PolicyNotSatisfied {
        section: String,
        missing: Vec<String>,
    },
    #[error("signature does not match the template: {0:?}")]
    StaleSignature(Vec<String>),
    #[error("encrypted trapdoor is corrupt or does not match the hashing key")]
    CorruptTrapdoor,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Chameleon(#[from] ChameleonError),
}

impl From<AbeError> for PssError {
    fn from(e: AbeError) -> Self {
        match e {
            AbeError::UnknownAttribute(a) => PssError::UnknownAttribute(a),
            _ => PssError::CorruptTrapdoor,
        }
    }
}

/// A signing key together with the DID it belongs to.
#[derive(Clone, Copy)]
pub struct Signer<'a> {
    pub did: &'a str,
    pub key: &'a SigningKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SectionHashRecord {
    Chameleon {
        section_id: String,
        digest: ChameleonDigest,
        randomness: Randomness,
        hk: HashingKey,
        etd: AbeCiphertext,
    },
    Plain {
        section_id: String,
        #[serde(with = "hex_bytes")]
        digest: [u8; 32],
    },
}

impl SectionHashRecord {
    pub fn section_id(&self) -> &str {
        match self {
            Self::Chameleon { section_id, .. } | Self::Plain { section_id, .. } => section_id,
        }
    }

    pub fn etd(&self) -> Option<&AbeCiphertext> {
        match self {
            Self::Chameleon { etd, .. } => Some(etd),
            Self::Plain { .. } => None,
        }
    }

    pub fn hk(&self) -> Option<&HashingKey> {
        match self {
            Self::Chameleon { hk, .. } => Some(hk),
            Self::Plain { .. } => None,
        }
    }
}

/// An updater's signature over the section content it wrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub section_id: String,
    pub updater_did: String,
    #[serde(with = "hex_bytes")]
    pub updater_key: [u8; 32],
    #[serde(with = "hex_bytes")]
    pub content_digest: [u8; 32],
    pub version: u64,
    pub signature: SignatureBytes,
}

impl Endorsement {
    fn message(
        combined: &[u8; 32],
        section_id: &str,
        version: u64,
        content_digest: &[u8; 32],
    ) -> [u8; 32] {
        sha256_parts(
            "vctp endorsement v1",
            [
                combined.as_slice(),
                section_id.as_bytes(),
                &version.to_be_bytes(),
                content_digest.as_slice(),
            ],
        )
    }

    pub fn verifies(&self, combined: &[u8; 32]) -> bool {
        let Some(key) = keys::verifying_key_from_bytes(&self.updater_key) else {
            return false;
        };
        let msg = Self::message(
            combined,
            &self.section_id,
            self.version,
            &self.content_digest,
        );
        keys::verify(&key, &msg, &self.signature)
    }
}

/// The sidecar that travels with a template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizableSignature {
    pub group: GroupParams,
    pub section_records: Vec<SectionHashRecord>,
    #[serde(with = "hex_bytes")]
    pub combined_digest: [u8; 32],
    pub sigma: SignatureBytes,
    pub signer_did: String,
    pub updater_endorsements: Vec<Endorsement>,
}

impl SanitizableSignature {
    pub fn record(&self, section_id: &str) -> Option<&SectionHashRecord> {
        self.section_records
            .iter()
            .find(|r| r.section_id() == section_id)
    }

    /// Most recent endorsement per section.
    pub fn latest_endorsements(&self) -> BTreeMap<&str, &Endorsement> {
        let mut out = BTreeMap::new();
        for e in &self.updater_endorsements {
            out.insert(e.section_id.as_str(), e);
        }
        out
    }
}

/// Hash over the group fingerprint and every record's identity, key and
/// digest, in order. Randomness is deliberately excluded: it changes on update.
pub fn combined_digest(group: &GroupParams, records: &[SectionHashRecord]) -> [u8; 32] {
    let fingerprint = group.fingerprint();
    let mut parts: Vec<Vec<u8>> = vec![fingerprint.to_vec()];
    for r in records {
        match r {
            SectionHashRecord::Chameleon {
                section_id,
                digest,
                hk,
                ..
            } => {
                parts.push(b"chameleon".to_vec());
                parts.push(section_id.as_bytes().to_vec());
                parts.push(hk.0.to_bytes_be());
                parts.push(digest.0.to_bytes_be());
            }
            SectionHashRecord::Plain { section_id, digest } => {
                parts.push(b"plain".to_vec());
                parts.push(section_id.as_bytes().to_vec());
                parts.push(digest.to_vec());
            }
        }
    }
    sha256_parts("vctp combined digest v1", parts.iter().map(Vec::as_slice))
}

/// Seals a template: fresh chameleon keys per updatable section, trapdoors
/// encrypted under each section's policy, and one signature over the lot.
pub fn hash_pch<R: RngCore + CryptoRng>(
    t: &TrustPropagationTemplate,
    universe: &PublicParams,
    signer: Signer<'_>,
    rng: &mut R,
) -> Result<SanitizableSignature, PssError> {
    let group = &universe.group;
    let mut records = Vec::with_capacity(t.sections().len());
    for s in t.sections() {
        let record = match &s.update_policy_attrs {
            Some(policy) if s.updatable => {
                let kp = chameleon::gen(group, rng)?;
                let randomness = Randomness::random(group, rng);
                let digest = chameleon::hash(group, &kp.hk, &s.content, &randomness)?;
                let td = kp.trapdoor().expect("fresh key pair has a trapdoor");
                let etd = abe::encrypt(universe, policy, &td.to_bytes(), rng)?;
                SectionHashRecord::Chameleon {
                    section_id: s.section_id.clone(),
                    digest,
                    randomness,
                    hk: kp.hk,
                    etd,
                }
            }
            _ => SectionHashRecord::Plain {
                section_id: s.section_id.clone(),
                digest: sha256(&s.content),
            },
        };
        records.push(record);
    }
    let combined = combined_digest(group, &records);
    Ok(SanitizableSignature {
        group: group.clone(),
        section_records: records,
        combined_digest: combined,
        sigma: keys::sign(signer.key, &combined),
        signer_did: signer.did.to_string(),
        updater_endorsements: Vec::new(),
    })
}

/// Everything `verify_pch` checks except the outer signature and endorsements.
fn structural_mismatches(t: &TrustPropagationTemplate, sig: &SanitizableSignature) -> Vec<String> {
    let mut reasons = Vec::new();
    if sig.group.validate().is_err() {
        reasons.push("group parameters invalid".to_string());
        return reasons;
    }
    if sig.section_records.len() != t.sections().len() {
        reasons.push(format!(
            "section count mismatch: template has {}, signature has {}",
            t.sections().len(),
            sig.section_records.len()
        ));
        return reasons;
    }
    for (s, r) in t.sections().iter().zip(&sig.section_records) {
        if s.section_id != r.section_id() {
            reasons.push(format!("section order mismatch at {}", s.section_id));
            continue;
        }
        let ok = match (r, s.updatable) {
            (SectionHashRecord::Plain { digest, .. }, false) => sha256(&s.content) == *digest,
            (
                SectionHashRecord::Chameleon {
                    digest,
                    randomness,
                    hk,
                    etd,
                    ..
                },
                true,
            ) => {
                if s.update_policy_attrs.as_ref() != Some(&etd.policy) {
                    reasons.push(format!("section {} trapdoor policy mismatch", s.section_id));
                }
                sig.group.contains(&hk.0)
                    && chameleon::hash(&sig.group, hk, &s.content, randomness).as_ref()
                        == Ok(digest)
            }
            _ => {
                reasons.push(format!("section {} updatability mismatch", s.section_id));
                continue;
            }
        };
        if !ok {
            reasons.push(format!("section {} digest mismatch", s.section_id));
        }
    }
    if combined_digest(&sig.group, &sig.section_records) != sig.combined_digest {
        reasons.push("combined digest mismatch".to_string());
    }
    reasons
}

/// Rewrites one updatable section without invalidating the signature.
///
/// The updater decrypts the section trapdoor with their attribute key, finds
/// a collision for the new content, and appends an endorsement signed with
/// their own key. Digests and `sigma` stay bit-identical.
pub fn update_pch(
    t: &TrustPropagationTemplate,
    sig: &SanitizableSignature,
    section_id: &str,
    new_content: &[u8],
    updater_key: &AttributeSecretKey,
    updater: Signer<'_>,
) -> Result<(TrustPropagationTemplate, SanitizableSignature), PssError> {
    let section = t.section(section_id)?;
    if !section.updatable {
        return Err(TemplateError::SectionNotUpdatable(section_id.to_string()).into());
    }
    let stale = structural_mismatches(t, sig);
    if !stale.is_empty() {
        return Err(PssError::StaleSignature(stale));
    }
    let idx = sig
        .section_records
        .iter()
        .position(|r| r.section_id() == section_id)
        .expect("structural check matched sections to records");
    let SectionHashRecord::Chameleon {
        randomness,
        hk,
        etd,
        ..
    } = &sig.section_records[idx]
    else {
        unreachable!("updatable sections carry chameleon records");
    };
    let group = &sig.group;

    let td_bytes = abe::decrypt(group, updater_key, etd).map_err(|e| match e {
        AbeError::PolicyNotSatisfied { missing } => PssError::PolicyNotSatisfied {
            section: section_id.to_string(),
            missing,
        },
        _ => PssError::CorruptTrapdoor,
    })?;
    let td = Trapdoor::from_bytes(group, &td_bytes).map_err(|_| PssError::CorruptTrapdoor)?;
    let kp = ChameleonKeyPair::from_trapdoor(group, td);
    if kp.hk != *hk {
        return Err(PssError::CorruptTrapdoor);
    }

    let updated = t.apply_update(section_id, new_content)?;
    let new_bytes = updated.section_bytes(section_id)?;
    let r_new = chameleon::find_collision(group, &kp, &section.content, randomness, new_bytes)?;

    let mut next = sig.clone();
    if let SectionHashRecord::Chameleon { randomness, .. } = &mut next.section_records[idx] {
        *randomness = r_new;
    }
    let content_digest = sha256(new_bytes);
    let msg = Endorsement::message(
        &sig.combined_digest,
        section_id,
        updated.version(),
        &content_digest,
    );
    next.updater_endorsements.push(Endorsement {
        section_id: section_id.to_string(),
        updater_did: updater.did.to_string(),
        updater_key: updater.key.verifying_key().to_bytes(),
        content_digest,
        version: updated.version(),
        signature: keys::sign(updater.key, &msg),
    });
    Ok((updated, next))
}

/// Outcome of [`verify_pch`]: decision 1 iff `reasons` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PchVerification {
    pub reasons: Vec<String>,
}

impl PchVerification {
    pub fn is_valid(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn decision(&self) -> u8 {
        u8::from(self.is_valid())
    }
}

pub fn verify_pch(
    t: &TrustPropagationTemplate,
    sig: &SanitizableSignature,
    signer_pub: &VerifyingKey,
) -> PchVerification {
    let mut reasons = structural_mismatches(t, sig);
    if !keys::verify(signer_pub, &sig.combined_digest, &sig.sigma) {
        reasons.push("signature sigma invalid".to_string());
    }
    for e in &sig.updater_endorsements {
        if !e.verifies(&sig.combined_digest) {
            reasons.push(format!(
                "endorsement by {} on {} invalid",
                e.updater_did, e.section_id
            ));
        }
        if e.version > t.version() {
            reasons.push(format!(
                "endorsement by {} is ahead of the template",
                e.updater_did
            ));
        }
    }
    for (section_id, e) in sig.latest_endorsements() {
        match t.section_bytes(section_id) {
            Ok(bytes) if sha256(bytes) == e.content_digest => {}
            Ok(_) => reasons.push(format!(
                "section {section_id} differs from its latest endorsement"
            )),
            Err(_) => reasons.push(format!("endorsement names unknown section {section_id}")),
        }
    }
    PchVerification { reasons }
}

/// True if `policy` admits an updater holding `attributes`. Convenience for callers
/// that want to pre-check before attempting a decryption.
pub fn admits(policy: &AccessPolicy, key: &AttributeSecretKey) -> bool {
    policy.is_satisfied_by(&key.attributes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abe::AttributeUniverse;
    use crate::chameleon::ParamProfile;
    use crate::encoding::canonical_json;
    use crate::template::{
        Grant, Section, TrustProxySection, HOSPITAL_TEMPLATE, TRUST_PROXY, UPDATE_POLICY,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const DOCTOR: &str = "did:example_doctor:fcgfc2g823fcdd387";
    const PATIENT: &str = "did:example_patient:fcgfc2g823fcdd387";

    struct Fixture {
        universe: AttributeUniverse,
        hospital: SigningKey,
        doctor: SigningKey,
        template: TrustPropagationTemplate,
        sig: SanitizableSignature,
    }

    fn fixture(profile: ParamProfile, seed: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let group = GroupParams::profile(profile);
        let universe = abe::setup(
            &group,
            &["doctor", "nurse", "patient", "HospitalA"],
            &mut rng,
        )
        .unwrap();
        let hospital = SigningKey::generate(&mut rng);
        let doctor = SigningKey::generate(&mut rng);
        let template = TrustPropagationTemplate::parse(HOSPITAL_TEMPLATE.as_bytes()).unwrap();
        let sig = hash_pch(
            &template,
            universe.public(),
            Signer {
                did: "did:example_hos:fcgfc2g823fcdd387",
                key: &hospital,
            },
            &mut rng,
        )
        .unwrap();
        Fixture {
            universe,
            hospital,
            doctor,
            template,
            sig,
        }
    }

    fn filled_proxy() -> Vec<u8> {
        canonical_json(&TrustProxySection {
            trust_proxy: DOCTOR.into(),
            next_level_issuer: Grant {
                id: PATIENT.into(),
                permissions: vec!["delegate-medical-decision".into()],
            },
        })
    }

    #[test]
    fn sealing_records_each_section() {
        let f = fixture(ParamProfile::Default, 1);
        let kinds: Vec<bool> = f
            .sig
            .section_records
            .iter()
            .map(|r| matches!(r, SectionHashRecord::Chameleon { .. }))
            .collect();
        assert_eq!(kinds, vec![false, true, true]);
        assert_eq!(
            verify_pch(&f.template, &f.sig, &f.hospital.verifying_key()).decision(),
            1
        );
    }

    #[test]
    fn sealing_is_deterministic_per_seed() {
        let a = fixture(ParamProfile::Test, 11);
        let b = fixture(ParamProfile::Test, 11);
        assert_eq!(a.sig.combined_digest, b.sig.combined_digest);
        assert_eq!(a.sig, b.sig);
    }

    #[test]
    fn zero_updatable_sections_is_a_plain_signed_hash() {
        let f = fixture(ParamProfile::Test, 2);
        let t = TrustPropagationTemplate::from_sections(f.template.update_policy().clone(), vec![])
            .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let sig = hash_pch(
            &t,
            f.universe.public(),
            Signer {
                did: "did:h:1",
                key: &f.hospital,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(sig.section_records.len(), 1);
        assert!(matches!(
            sig.section_records[0],
            SectionHashRecord::Plain { .. }
        ));
        assert!(verify_pch(&t, &sig, &f.hospital.verifying_key()).is_valid());
    }

    #[test]
    fn unknown_policy_attribute_fails_sealing() {
        let f = fixture(ParamProfile::Test, 2);
        let t = TrustPropagationTemplate::from_sections(
            f.template.update_policy().clone(),
            vec![Section {
                section_id: "extra".into(),
                content: b"{}".to_vec(),
                updatable: true,
                update_policy_attrs: Some(AccessPolicy::new(["pilot"]).unwrap()),
            }],
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let err = hash_pch(
            &t,
            f.universe.public(),
            Signer {
                did: "did:h:1",
                key: &f.hospital,
            },
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(err, PssError::UnknownAttribute("pilot".into()));
    }

    #[test]
    fn authorized_update_keeps_sigma() {
        let f = fixture(ParamProfile::Default, 3);
        let key = abe::keygen(&f.universe, DOCTOR, ["doctor", "HospitalA"]).unwrap();
        let (t2, sig2) = update_pch(
            &f.template,
            &f.sig,
            TRUST_PROXY,
            &filled_proxy(),
            &key,
            Signer {
                did: DOCTOR,
                key: &f.doctor,
            },
        )
        .unwrap();
        assert_eq!(sig2.sigma, f.sig.sigma);
        assert_eq!(sig2.combined_digest, f.sig.combined_digest);
        assert_eq!(t2.trust_proxy().unwrap().trust_proxy, DOCTOR);
        let v = verify_pch(&t2, &sig2, &f.hospital.verifying_key());
        assert!(v.is_valid(), "{:?}", v.reasons);
        assert_eq!(sig2.updater_endorsements.len(), 1);
        assert_eq!(sig2.updater_endorsements[0].updater_did, DOCTOR);
        assert!(sig2.updater_endorsements[0].verifies(&sig2.combined_digest));
    }

    #[test]
    fn unauthorized_update_is_rejected() {
        let f = fixture(ParamProfile::Test, 3);
        let nurse = abe::keygen(&f.universe, "did:nurse1:a", ["nurse"]).unwrap();
        let err = update_pch(
            &f.template,
            &f.sig,
            TRUST_PROXY,
            &filled_proxy(),
            &nurse,
            Signer {
                did: "did:nurse1:a",
                key: &f.doctor,
            },
        )
        .unwrap_err();
        assert!(matches!(err, PssError::PolicyNotSatisfied { .. }));
        let doctor = abe::keygen(&f.universe, DOCTOR, ["doctor", "HospitalA"]).unwrap();
        let err = update_pch(
            &f.template,
            &f.sig,
            UPDATE_POLICY,
            f.template.section_bytes(UPDATE_POLICY).unwrap(),
            &doctor,
            Signer {
                did: DOCTOR,
                key: &f.doctor,
            },
        )
        .unwrap_err();
        assert_eq!(
            err,
            PssError::Template(TemplateError::SectionNotUpdatable(UPDATE_POLICY.into()))
        );
    }

    #[test]
    fn identity_update_keeps_randomness() {
        let f = fixture(ParamProfile::Test, 4);
        let key = abe::keygen(&f.universe, DOCTOR, ["doctor", "HospitalA"]).unwrap();
        let same = f.template.section_bytes(TRUST_PROXY).unwrap().to_vec();
        let (_, sig2) = update_pch(
            &f.template,
            &f.sig,
            TRUST_PROXY,
            &same,
            &key,
            Signer {
                did: DOCTOR,
                key: &f.doctor,
            },
        )
        .unwrap();
        let mut stripped = sig2.clone();
        stripped.updater_endorsements.clear();
        assert_eq!(stripped, f.sig);
    }

    #[test]
    fn stale_signature_is_refused() {
        let f = fixture(ParamProfile::Test, 5);
        let key = abe::keygen(&f.universe, DOCTOR, ["doctor", "HospitalA"]).unwrap();
        let mut t = f.template.clone();
        // bypass the public API to simulate tampered state
        t.sections[2].content[5] ^= 0x01;
        let err = update_pch(
            &t,
            &f.sig,
            TRUST_PROXY,
            &filled_proxy(),
            &key,
            Signer {
                did: DOCTOR,
                key: &f.doctor,
            },
        )
        .unwrap_err();
        assert!(matches!(err, PssError::StaleSignature(_)));
    }

    #[test]
    fn single_byte_flips_in_fixed_section_are_detected() {
        let f = fixture(ParamProfile::Test, 6);
        let pk = f.hospital.verifying_key();
        let original = f.template.section_bytes(UPDATE_POLICY).unwrap().to_vec();
        for i in 0..original.len() {
            let mut t = f.template.clone();
            t.sections[0].content[i] ^= 0x01;
            let v = verify_pch(&t, &f.sig, &pk);
            assert_eq!(v.decision(), 0, "flip at {i} undetected");
            assert!(v
                .reasons
                .contains(&"section update_policy digest mismatch".to_string()));
        }
    }

    #[test]
    fn content_change_without_collision_is_detected() {
        let f = fixture(ParamProfile::Default, 7);
        let t = f
            .template
            .apply_update(TRUST_PROXY, &filled_proxy())
            .unwrap();
        let v = verify_pch(&t, &f.sig, &f.hospital.verifying_key());
        assert_eq!(v.decision(), 0);
        assert!(v
            .reasons
            .contains(&"section trust_proxy digest mismatch".to_string()));
    }

    #[test]
    fn substituted_hashing_key_is_detected() {
        // With a free choice of hk, anyone could make any content hash to the
        // signed digest: hk' = D * g^-H(m'), r' = 1.
        let f = fixture(ParamProfile::Default, 8);
        let t = f
            .template
            .apply_update(TRUST_PROXY, &filled_proxy())
            .unwrap();
        let mut sig = f.sig.clone();
        let group = sig.group.clone();
        let SectionHashRecord::Chameleon {
            digest,
            randomness,
            hk,
            ..
        } = &mut sig.section_records[1]
        else {
            panic!()
        };
        let m = group.hash_to_scalar(t.section_bytes(TRUST_PROXY).unwrap());
        let g_inv_m = group.exp_g(&(&group.q - m));
        hk.0 = &digest.0 * g_inv_m % &group.p;
        randomness.0 = 1u32.into();
        let v = verify_pch(&t, &sig, &f.hospital.verifying_key());
        assert!(
            !v.reasons.iter().any(|r| r.contains("trust_proxy digest")),
            "{:?}",
            v.reasons
        );
        assert!(v.reasons.contains(&"combined digest mismatch".to_string()));
    }

    #[test]
    fn combined_digest_is_order_sensitive() {
        let f = fixture(ParamProfile::Test, 9);
        let mut records = f.sig.section_records.clone();
        records.swap(1, 2);
        assert_ne!(
            combined_digest(&f.sig.group, &records),
            f.sig.combined_digest
        );
        let g = GroupParams::profile(ParamProfile::Test);
        assert_eq!(combined_digest(&g, &[]), combined_digest(&g, &[]));
    }

    #[test]
    fn sidecar_json_round_trip() {
        let f = fixture(ParamProfile::Test, 10);
        let json = serde_json::to_string(&f.sig).unwrap();
        assert!(json.contains("\"sigma\""));
        let back: SanitizableSignature = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f.sig);
    }
}
