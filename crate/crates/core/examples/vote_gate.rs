//! A voting request for onboarding: ballots are sealed to the contract, bad
//! roles and repeat voters are refused, and the request passes at five approvals.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vctp::keys::KeyBundle;
use vctp::template::{TrustPropagationTemplate, HOSPITAL_TEMPLATE, TRUST_PROXY};
use vctp::voting::{self, PendingUpdate, VoteOption, VotingContract};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let template = TrustPropagationTemplate::parse(HOSPITAL_TEMPLATE.as_bytes())?;
    let admin = KeyBundle::generate(&mut rng);
    let contract = VotingContract::new("did:example_admin:1", admin.verifying_key(), &mut rng);

    let mut voters = Vec::new();
    for (i, role) in [
        "nurse",
        "receptionist",
        "doctor",
        "nurse",
        "nurse",
        "doctor",
    ]
    .iter()
    .enumerate()
    {
        let keys = KeyBundle::generate(&mut rng);
        let cred = contract.issue_role_credential(
            &admin.signing,
            &format!("did:example_staff:{i}"),
            role,
            "HospitalA",
        )?;
        voters.push((keys, cred));
    }
    let resolve = |did: &str| {
        voters
            .iter()
            .find(|(_, c)| c.subject_did == did)
            .map(|(k, _)| k.verifying_key())
    };

    let update = PendingUpdate {
        section_id: TRUST_PROXY.into(),
        new_content_digest: [1; 32],
        updater_did: "did:example_doctor:fcgfc2g823fcdd387".into(),
    };
    let mut req = contract.open_request(template.id(), update, template.update_policy())?;
    println!(
        "request {} needs {} approvals from {:?}",
        &req.id_hex()[..12],
        req.threshold,
        req.approval_policy
    );

    // Voter 0 votes twice.
    for idx in [0, 0, 1, 2, 3, 4, 5] {
        let (keys, cred) = &voters[idx];
        let ballot =
            voting::prepare_ballot(&req, cred, VoteOption::Approve, &keys.signing, &mut rng);
        match contract.evaluate_ballot(&req, &ballot, resolve) {
            Ok(record) => {
                let verdict = match record.rejection_reason {
                    None => "accepted".to_string(),
                    Some(r) => format!("refused ({r:?})"),
                };
                voting::record_vote(&mut req, record)?;
                println!(
                    "{} ({}): {verdict}; status {:?}",
                    cred.subject_did, cred.role, req.status
                );
            }
            Err(e) => println!("{}: {e}", cred.subject_did),
        }
    }
    println!("{:?}", req.summary());
    Ok(())
}
