//! Adversarial runs. Each attack drives the honest setup up to the point of
//! interest and then lets an attacker try its move; a report line records
//! whether the defense held.

use std::fmt;

use chrono::{DateTime, Utc};

use crate::chameleon::ParamProfile;
use crate::protocol::{
    Actor, ActorKind, Deployment, ManualClock, ProtocolError, ScriptedVoters, SealedTemplate,
};
use crate::pss::{self, Signer};
use crate::template::{CREDENTIAL, HOSPITAL_TEMPLATE, TRUST_PROXY};
use crate::voting::{self, RequestStatus, VoteOption};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefenseLine {
    pub attempt: String,
    pub held: bool,
    pub observed: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub scenario: u8,
    pub title: &'static str,
    pub lines: Vec<DefenseLine>,
}

impl AttackReport {
    pub fn held(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|l| l.held)
    }

    pub fn exit_code(&self) -> i32 {
        if self.held() {
            0
        } else {
            1
        }
    }

    fn expect<T>(
        &mut self,
        attempt: &str,
        result: Result<T, ProtocolError>,
        blocked: impl Fn(&ProtocolError) -> bool,
    ) {
        let (held, observed) = match result {
            Ok(_) => (false, "attempt succeeded".to_string()),
            Err(e) if blocked(&e) => (true, format!("{}: {e}", e.kind())),
            Err(e) => (false, format!("unexpected {}: {e}", e.kind())),
        };
        self.lines.push(DefenseLine {
            attempt: attempt.to_string(),
            held,
            observed,
        });
    }

    fn record(&mut self, attempt: &str, held: bool, observed: String) {
        self.lines.push(DefenseLine {
            attempt: attempt.to_string(),
            held,
            observed,
        });
    }
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "attack {}: {}", self.scenario, self.title)?;
        for l in &self.lines {
            writeln!(
                f,
                "  [{}] {}: {}",
                if l.held { "held" } else { "FAIL" },
                l.attempt,
                l.observed
            )?;
        }
        write!(
            f,
            "  result: {}",
            if self.held() {
                "all defenses held"
            } else {
                "DEFENSE FAILED"
            }
        )
    }
}

fn approve(staff: &[Actor]) -> ScriptedVoters<'_> {
    ScriptedVoters {
        votes: staff.iter().map(|v| (v, VoteOption::Approve)).collect(),
    }
}

const HOS: &str = "did:example_hos:fcgfc2g823fcdd387";
const ATTRS: [&str; 5] = ["doctor", "nurse", "patient", "relative", "HospitalA"];

/// The honest cast, with the template sealed and the doctor and patient attested.
struct Stage {
    d: Deployment,
    hospital: Actor,
    admin: Actor,
    doctor: Actor,
    patient: Actor,
    staff: Vec<Actor>,
    sealed: SealedTemplate,
}

fn stage(seed: u64) -> Result<Stage, ProtocolError> {
    let mut d = Deployment::new(ParamProfile::Test, seed);
    let at: DateTime<Utc> = "2021-07-12T09:00:00Z".parse().expect("valid timestamp");
    d.set_clock(ManualClock::new(at));
    let hospital = d.new_actor(HOS, ActorKind::L1Issuer)?;
    let admin = d.new_actor("did:example_admin:hospital-a-it", ActorKind::Admin)?;
    d.genesis(&[&hospital], &admin)?;
    let mut doctor = d.new_actor(
        "did:example_doctor:fcgfc2g823fcdd387",
        ActorKind::TrustProxy,
    )?;
    let mut patient = d.new_actor(
        "did:example_patient:fcgfc2g823fcdd387",
        ActorKind::PersonalIssuer,
    )?;
    d.new_actor("did:example_holder:fcgfc2g823fcdd387", ActorKind::Holder)?;
    d.issue_role_credential(&admin, &mut doctor, "doctor", "HospitalA")?;
    d.issue_role_credential(&admin, &mut patient, "patient", "HospitalA")?;
    let mut staff = Vec::new();
    for (i, role) in [
        "nurse", "nurse", "nurse", "doctor", "doctor", "nurse", "doctor",
    ]
    .iter()
    .enumerate()
    {
        let mut a = d.new_actor(&format!("did:example_staff:{i:02}"), ActorKind::Voter)?;
        d.issue_role_credential(&admin, &mut a, role, "HospitalA")?;
        staff.push(a);
    }
    let sealed = d.l1_setup(&hospital, &ATTRS, HOSPITAL_TEMPLATE.as_bytes())?;
    d.attest(HOS, &mut doctor, &["doctor", "HospitalA"])?;
    d.attest(HOS, &mut patient, &["patient", "HospitalA"])?;
    Ok(Stage {
        d,
        hospital,
        admin,
        doctor,
        patient,
        staff,
        sealed,
    })
}

/// Secret information intercepts: an eavesdropper copies the update kit on its
/// way to the doctor.
pub fn interception(seed: u64) -> Result<AttackReport, ProtocolError> {
    let mut s = stage(seed)?;
    let mut report = AttackReport {
        scenario: 1,
        title: "secret information intercept",
        lines: Vec::new(),
    };
    let mut eve = s.d.new_actor("did:example_eve:77", ActorKind::Holder)?;
    s.d.issue_role_credential(&s.admin, &mut eve, "visitor", "HospitalA")?;
    let envelope =
        s.d.send_update_kit(&s.hospital, &s.doctor.did, &s.sealed, TRUST_PROXY)?;

    report.expect(
        "interceptor opens the envelope addressed to the doctor",
        s.d.open_update_kit(&eve, &envelope),
        |e| matches!(e, ProtocolError::EnvelopeDecryptionFailed(_)),
    );

    let mut readdressed = envelope.clone();
    readdressed.recipient_did = eve.did.clone();
    report.expect(
        "interceptor re-addresses the envelope to itself",
        s.d.open_update_kit(&eve, &readdressed),
        |e| matches!(e, ProtocolError::EnvelopeSignatureInvalid(_)),
    );

    // The encrypted trapdoor is also visible in the public signature record.
    // Without the policy attributes it is useless.
    s.d.attest(HOS, &mut eve, &["HospitalA"])?;
    let new_content = br#"{"TrustProxy":"did:example_eve:77","nextLevelIssuerDetails":{"id":"did:example_eve:77","permissions":["delegate-medical-decision"]}}"#;
    let forged = pss::update_pch(
        s.sealed.template(),
        &s.sealed.signature,
        TRUST_PROXY,
        new_content,
        &eve.attribute_key(),
        eve.signer(),
    );
    report.expect(
        "interceptor decrypts the published trapdoor with its own attributes",
        forged.map_err(ProtocolError::from),
        |e| matches!(e, ProtocolError::PolicyNotSatisfied { .. }),
    );

    let opened = s.d.open_update_kit(&s.doctor, &envelope);
    report.record(
        "control: the intended recipient opens the kit",
        opened.is_ok(),
        match opened {
            Ok(k) => format!("doctor reads kit for `{}`", k.section_id),
            Err(e) => e.to_string(),
        },
    );
    Ok(report)
}

/// Impersonation: an issuer tries to act on a section whose trapdoor is
/// encrypted for someone else's attributes, or under someone else's DID.
pub fn impersonation(seed: u64) -> Result<AttackReport, ProtocolError> {
    let mut s = stage(seed)?;
    let mut report = AttackReport {
        scenario: 2,
        title: "impersonation",
        lines: Vec::new(),
    };

    // The patient uses its own keys on the doctor's section.
    let kit =
        s.d.send_update_kit(&s.hospital, &s.patient.did, &s.sealed, TRUST_PROXY)?;
    report.expect(
        "patient onboards itself through the trust-proxy section",
        s.d.onboard_personal_issuer(
            &s.patient,
            &kit,
            &s.sealed,
            &s.patient.did,
            &[],
            &mut approve(&s.staff),
        ),
        |e| matches!(e, ProtocolError::PolicyNotSatisfied { .. }),
    );

    // The doctor uses its keys on the patient's section.
    let kit =
        s.d.send_update_kit(&s.hospital, &s.doctor.did, &s.sealed, TRUST_PROXY)?;
    let onboarded = s.d.onboard_personal_issuer(
        &s.doctor,
        &kit,
        &s.sealed,
        &s.patient.did,
        &[],
        &mut approve(&s.staff),
    )?;
    let forged = pss::update_pch(
        onboarded.sealed.template(),
        &onboarded.sealed.signature,
        CREDENTIAL,
        br#"{"Title":"Letter of Authority","IssueDate":"2022-02-02","Text":"forged","signedBy":"did:example_patient:fcgfc2g823fcdd387","credentialSubject":{"id":"did:example_holder:fcgfc2g823fcdd387","permissions":["all"]}}"#,
        &s.doctor.attribute_key(),
        s.doctor.signer(),
    );
    report.expect(
        "doctor rewrites the patient's credential section",
        forged.map_err(ProtocolError::from),
        |e| matches!(e, ProtocolError::PolicyNotSatisfied { .. }),
    );

    // A member of another organization asks for HospitalA attributes.
    let mut other =
        s.d.new_actor("did:example_hosb:22", ActorKind::PersonalIssuer)?;
    s.d.issue_role_credential(&s.admin, &mut other, "patient", "HospitalB")?;
    report.expect(
        "HospitalB patient obtains HospitalA issuer attributes",
        s.d.attest(HOS, &mut other, &["patient", "HospitalA"]),
        |e| matches!(e, ProtocolError::MissingAttestation { .. }),
    );

    // Someone holding the patient's attributes signs the update as the patient.
    let mut mimic = s.d.new_actor("did:example_mimic:31", ActorKind::Holder)?;
    s.d.issue_role_credential(&s.admin, &mut mimic, "patient", "HospitalA")?;
    s.d.attest(HOS, &mut mimic, &["patient", "HospitalA"])?;
    let content = br#"{"Title":"Letter of Authority","IssueDate":"2022-02-02","Text":"forged","signedBy":"did:example_patient:fcgfc2g823fcdd387","credentialSubject":{"id":"did:example_holder:fcgfc2g823fcdd387","permissions":["all"]}}"#;
    let (t, sig) = pss::update_pch(
        onboarded.sealed.template(),
        &onboarded.sealed.signature,
        CREDENTIAL,
        content,
        &mimic.attribute_key(),
        Signer {
            did: &s.patient.did,
            key: mimic.signing_key(),
        },
    )?;
    let verifier =
        s.d.new_actor("did:example_physio:b71c09e2aa", ActorKind::Verifier)?;
    let r = s.d.verify_presentation(&verifier, &t, &sig);
    let failing: Vec<&str> = r
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    report.record(
        "attribute holder presents an update signed in the patient's name",
        !r.passed() && failing.contains(&"did_resolution"),
        format!("verification rejected; failed checks {failing:?}"),
    );
    Ok(report)
}

/// Collusion: a doctor and an accomplice try to onboard the accomplice. The
/// accomplice and an outside friend vote for it, repeatedly; the honest staff
/// vote it down.
pub fn collusion(seed: u64) -> Result<AttackReport, ProtocolError> {
    let mut s = stage(seed)?;
    let mut report = AttackReport {
        scenario: 3,
        title: "collusion",
        lines: Vec::new(),
    };
    let mut accomplice = s.d.new_actor("did:example_nurse:c01", ActorKind::Voter)?;
    s.d.issue_role_credential(&s.admin, &mut accomplice, "nurse", "HospitalA")?;
    let mut friend = s.d.new_actor("did:example_friend:c02", ActorKind::Voter)?;
    s.d.issue_role_credential(&s.admin, &mut friend, "receptionist", "HospitalA")?;
    let before = s.d.ledger.state().issuer_registry.clone();

    let kit =
        s.d.send_update_kit(&s.hospital, &s.doctor.did, &s.sealed, TRUST_PROXY)?;
    let accomplice_ref = &accomplice;
    let friend_ref = &friend;
    let honest = &s.staff;
    let mut collector = |req: &voting::VotingRequest, rng: &mut rand_chacha::ChaCha20Rng| {
        let mut ballots = Vec::new();
        // Colluders: one valid vote, four duplicates, and a vote from a role outside the policy.
        for _ in 0..5 {
            ballots.push(voting::prepare_ballot(
                req,
                &accomplice_ref.role_credentials[0],
                VoteOption::Approve,
                accomplice_ref.signing_key(),
                rng,
            ));
        }
        ballots.push(voting::prepare_ballot(
            req,
            &friend_ref.role_credentials[0],
            VoteOption::Approve,
            friend_ref.signing_key(),
            rng,
        ));
        for v in honest {
            ballots.push(voting::prepare_ballot(
                req,
                &v.role_credentials[0],
                VoteOption::Reject,
                v.signing_key(),
                rng,
            ));
        }
        ballots
    };
    let result = s.d.onboard_personal_issuer(
        &s.doctor,
        &kit,
        &s.sealed,
        &accomplice.did,
        &["propagate-trust"],
        &mut collector,
    );
    let tally = match &result {
        Err(ProtocolError::VoteGateFailed { tally, .. }) => tally.clone(),
        _ => None,
    };
    report.expect("colluding update reaches the ledger", result, |e| {
        matches!(e, ProtocolError::VoteGateFailed { .. })
    });
    if let Some(t) = tally {
        report.record(
            "colluders stuff the ballot box with duplicates and an out-of-policy role",
            t.approvals == 1 && t.status == RequestStatus::Failed,
            format!(
                "{} approval counted of 6 approve ballots; {} ballots refused; status {:?}",
                t.approvals, t.refused, t.status
            ),
        );
    }
    let after = &s.d.ledger.state().issuer_registry;
    report.record(
        "accomplice is written to the issuer registry",
        after == &before && !after.contains_key(&accomplice.did),
        format!("issuer registry holds {} entries, unchanged", after.len()),
    );
    Ok(report)
}

pub fn run(scenario: u8, seed: u64) -> Result<AttackReport, ProtocolError> {
    match scenario {
        1 => interception(seed),
        2 => impersonation(seed),
        3 => collusion(seed),
        n => panic!("no attack scenario {n}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_defenses_hold() {
        for n in 1..=3 {
            let r = run(n, 11).unwrap();
            println!("{r}");
            assert!(r.held(), "{r}");
            assert_eq!(r.exit_code(), 0);
        }
    }
}
