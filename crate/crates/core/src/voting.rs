//! Vote-gated template updates.
//!
//! A gated update opens a [`VotingRequest`]. Voters holding a role credential
//! issued by the system administrator encrypt a signed ballot to the voting
//! contract's key. The contract decrypts it, checks the credential, the
//! voter's signature, the voter's role and whether the DID already voted, and
//! records the ballot as accepted or rejected. Only accepted `Approve` votes
//! count toward the threshold.

use chrono::{DateTime, Utc};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use x25519_dalek::{PublicKey as BoxPublicKey, StaticSecret};

use crate::encoding::{canonical_json, hex_bytes, sha256_parts};
use crate::keys::{self, SealedBox, SignatureBytes, SigningKey, VerifyingKey};
use crate::template::UpdatePolicySection;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VotingError {
    #[error("signing key does not belong to the registered administrator")]
    UnknownAdmin,
    #[error("voting request is {0:?}, not open")]
    RequestClosed(RequestStatus),
    #[error("template requires no votes; skip the voting process")]
    VotingNotRequired,
    #[error("ballot could not be decrypted by this contract")]
    UndecryptableBallot,
    #[error("ballot is malformed: {0}")]
    MalformedBallot(String),
    #[error("voter {0} already has an accepted vote")]
    DuplicateAcceptedVote(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteOption {
    Approve,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestStatus {
    Open,
    Passed,
    Failed,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectionReason {
    BadRole,
    DuplicateDid,
    BadSignature,
}

/// Employee credential naming a voter's role within an organisation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCredential {
    pub subject_did: String,
    pub role: String,
    pub organization: String,
    pub issuer_did: String,
    pub signature: SignatureBytes,
}

impl RoleCredential {
    fn signing_bytes(
        subject_did: &str,
        role: &str,
        organization: &str,
        issuer_did: &str,
    ) -> [u8; 32] {
        sha256_parts(
            "vctp role credential v1",
            [
                subject_did.as_bytes(),
                role.as_bytes(),
                organization.as_bytes(),
                issuer_did.as_bytes(),
            ],
        )
    }

    pub fn verify(&self, admin: &VerifyingKey) -> bool {
        let msg = Self::signing_bytes(
            &self.subject_did,
            &self.role,
            &self.organization,
            &self.issuer_did,
        );
        keys::verify(admin, &msg, &self.signature)
    }

    /// The attribute names this credential attests to.
    pub fn attributes(&self) -> [&str; 2] {
        [&self.role, &self.organization]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingUpdate {
    pub section_id: String,
    #[serde(with = "hex_bytes")]
    pub new_content_digest: [u8; 32],
    pub updater_did: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub voter_did: String,
    pub ciphertext: SealedBox,
    pub accepted: bool,
    pub option: Option<VoteOption>,
    pub rejection_reason: Option<RejectionReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotingRequest {
    #[serde(with = "hex_bytes")]
    pub request_id: [u8; 32],
    pub template_id: String,
    pub pending_update: PendingUpdate,
    pub approval_policy: Vec<String>,
    pub threshold: u32,
    pub votes: Vec<VoteRecord>,
    pub status: RequestStatus,
    #[serde(with = "hex_bytes")]
    pub contract_key: [u8; 32],
    pub expires_at: DateTime<Utc>,
}

impl VotingRequest {
    pub fn accepted_approvals(&self) -> usize {
        self.votes
            .iter()
            .filter(|v| v.accepted && v.option == Some(VoteOption::Approve))
            .count()
    }

    pub fn id_hex(&self) -> String {
        hex::encode(self.request_id)
    }

    pub fn summary(&self) -> TallyReport {
        TallyReport {
            request_id: self.id_hex(),
            status: self.status,
            threshold: self.threshold,
            approvals: self.accepted_approvals(),
            rejections: self
                .votes
                .iter()
                .filter(|v| v.accepted && v.option == Some(VoteOption::Reject))
                .count(),
            refused: self.votes.iter().filter(|v| !v.accepted).count(),
        }
    }
}

/// Structured per-request tally summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyReport {
    pub request_id: String,
    pub status: RequestStatus,
    pub threshold: u32,
    pub approvals: usize,
    pub rejections: usize,
    pub refused: usize,
}

/// What a voter submits: the canonical vote submission record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    #[serde(with = "hex_bytes")]
    pub request_id: [u8; 32],
    pub voter_did: String,
    pub credential: RoleCredential,
    pub ciphertext: SealedBox,
}

#[derive(Serialize, Deserialize)]
struct BallotPlaintext {
    voter_did: String,
    option: VoteOption,
    signature: SignatureBytes,
}

fn vote_message(request_id: &[u8; 32], voter_did: &str, option: VoteOption) -> [u8; 32] {
    let opt: &[u8] = match option {
        VoteOption::Approve => b"approve",
        VoteOption::Reject => b"reject",
    };
    sha256_parts(
        "vctp vote v1",
        [request_id.as_slice(), voter_did.as_bytes(), opt],
    )
}

/// Voter side: sign the option and encrypt it to the contract.
pub fn prepare_ballot<R: RngCore + CryptoRng>(
    req: &VotingRequest,
    credential: &RoleCredential,
    option: VoteOption,
    signing_key: &SigningKey,
    rng: &mut R,
) -> Ballot {
    let voter_did = credential.subject_did.clone();
    let plaintext = BallotPlaintext {
        signature: keys::sign(
            signing_key,
            &vote_message(&req.request_id, &voter_did, option),
        ),
        voter_did: voter_did.clone(),
        option,
    };
    let ciphertext = keys::seal(
        &BoxPublicKey::from(req.contract_key),
        &req.request_id,
        &canonical_json(&plaintext),
        rng,
    );
    Ballot {
        request_id: req.request_id,
        voter_did,
        credential: credential.clone(),
        ciphertext,
    }
}

/// Content address of a pending update.
pub fn request_id(template_id: &str, update: &PendingUpdate) -> [u8; 32] {
    sha256_parts(
        "vctp voting request v1",
        [
            template_id.as_bytes(),
            update.section_id.as_bytes(),
            update.new_content_digest.as_slice(),
            update.updater_did.as_bytes(),
        ],
    )
}

/// The voting contract and the administrator key it trusts.
pub struct VotingContract {
    pub admin_did: String,
    admin_key: VerifyingKey,
    secret: StaticSecret,
}

impl VotingContract {
    pub fn new<R: RngCore + CryptoRng>(
        admin_did: &str,
        admin_key: VerifyingKey,
        rng: &mut R,
    ) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self {
            admin_did: admin_did.to_string(),
            admin_key,
            secret: StaticSecret::from(seed),
        }
    }

    pub fn public_key(&self) -> [u8; 32] {
        *BoxPublicKey::from(&self.secret).as_bytes()
    }

    pub fn admin_key(&self) -> &VerifyingKey {
        &self.admin_key
    }

    pub fn issue_role_credential(
        &self,
        admin_signing_key: &SigningKey,
        subject_did: &str,
        role: &str,
        organization: &str,
    ) -> Result<RoleCredential, VotingError> {
        if admin_signing_key.verifying_key() != self.admin_key {
            return Err(VotingError::UnknownAdmin);
        }
        let msg = RoleCredential::signing_bytes(subject_did, role, organization, &self.admin_did);
        Ok(RoleCredential {
            subject_did: subject_did.to_string(),
            role: role.to_string(),
            organization: organization.to_string(),
            issuer_did: self.admin_did.clone(),
            signature: keys::sign(admin_signing_key, &msg),
        })
    }

    pub fn open_request(
        &self,
        template_id: &str,
        update: PendingUpdate,
        policy: &UpdatePolicySection,
    ) -> Result<VotingRequest, VotingError> {
        if policy.num_votes_required == 0 {
            return Err(VotingError::VotingNotRequired);
        }
        Ok(VotingRequest {
            request_id: request_id(template_id, &update),
            template_id: template_id.to_string(),
            pending_update: update,
            approval_policy: policy.approval_policy.clone(),
            threshold: policy.num_votes_required,
            votes: Vec::new(),
            status: RequestStatus::Open,
            contract_key: self.public_key(),
            expires_at: policy.expiration_date,
        })
    }

    /// Decrypts and checks a ballot. Role, duplicate and signature problems
    /// produce a rejected record, not an error.
    pub fn evaluate_ballot(
        &self,
        req: &VotingRequest,
        ballot: &Ballot,
        resolve_key: impl Fn(&str) -> Option<VerifyingKey>,
    ) -> Result<VoteRecord, VotingError> {
        if req.status != RequestStatus::Open {
            return Err(VotingError::RequestClosed(req.status));
        }
        if ballot.request_id != req.request_id {
            return Err(VotingError::MalformedBallot(
                "ballot is for a different request".into(),
            ));
        }
        let bytes = keys::open(&self.secret, &req.request_id, &ballot.ciphertext)
            .map_err(|_| VotingError::UndecryptableBallot)?;
        let plain: BallotPlaintext = serde_json::from_slice(&bytes)
            .map_err(|e| VotingError::MalformedBallot(e.to_string()))?;

        let reject = |reason| VoteRecord {
            voter_did: ballot.voter_did.clone(),
            ciphertext: ballot.ciphertext.clone(),
            accepted: false,
            option: Some(plain.option),
            rejection_reason: Some(reason),
        };
        let signature_ok = plain.voter_did == ballot.voter_did
            && ballot.credential.subject_did == ballot.voter_did
            && ballot.credential.issuer_did == self.admin_did
            && ballot.credential.verify(&self.admin_key)
            && resolve_key(&ballot.voter_did).is_some_and(|k| {
                keys::verify(
                    &k,
                    &vote_message(&req.request_id, &ballot.voter_did, plain.option),
                    &plain.signature,
                )
            });
        if !signature_ok {
            return Ok(reject(RejectionReason::BadSignature));
        }
        if !req.approval_policy.contains(&ballot.credential.role) {
            return Ok(reject(RejectionReason::BadRole));
        }
        if req
            .votes
            .iter()
            .any(|v| v.accepted && v.voter_did == ballot.voter_did)
        {
            return Ok(reject(RejectionReason::DuplicateDid));
        }
        Ok(VoteRecord {
            voter_did: ballot.voter_did.clone(),
            ciphertext: ballot.ciphertext.clone(),
            accepted: true,
            option: Some(plain.option),
            rejection_reason: None,
        })
    }

    /// Evaluates a ballot and returns the request with the vote recorded.
    pub fn cast_vote<R: RngCore + CryptoRng>(
        &self,
        req: &VotingRequest,
        voter: &RoleCredential,
        option: VoteOption,
        voter_signing_key: &SigningKey,
        resolve_key: impl Fn(&str) -> Option<VerifyingKey>,
        rng: &mut R,
    ) -> Result<VotingRequest, VotingError> {
        let ballot = prepare_ballot(req, voter, option, voter_signing_key, rng);
        let record = self.evaluate_ballot(req, &ballot, resolve_key)?;
        let mut next = req.clone();
        record_vote(&mut next, record)?;
        Ok(next)
    }
}

/// Appends an evaluated vote and advances the status. This is the step the
/// ledger replays, so it re-checks the one-accepted-vote-per-DID invariant.
pub fn record_vote(req: &mut VotingRequest, record: VoteRecord) -> Result<(), VotingError> {
    if req.status != RequestStatus::Open {
        return Err(VotingError::RequestClosed(req.status));
    }
    if record.accepted
        && req
            .votes
            .iter()
            .any(|v| v.accepted && v.voter_did == record.voter_did)
    {
        return Err(VotingError::DuplicateAcceptedVote(record.voter_did));
    }
    req.votes.push(record);
    if req.accepted_approvals() >= req.threshold as usize {
        req.status = RequestStatus::Passed;
    }
    Ok(())
}

/// Current decision without closing the request.
pub fn tally(req: &VotingRequest, now: DateTime<Utc>) -> RequestStatus {
    match req.status {
        RequestStatus::Open => {}
        terminal => return terminal,
    }
    if req.accepted_approvals() >= req.threshold as usize {
        RequestStatus::Passed
    } else if now > req.expires_at {
        RequestStatus::Expired
    } else {
        RequestStatus::Open
    }
}

/// Administrator close: the request settles as Passed, Failed or Expired.
pub fn close(req: &VotingRequest, now: DateTime<Utc>) -> RequestStatus {
    match tally(req, now) {
        RequestStatus::Open => RequestStatus::Failed,
        settled => settled,
    }
}
