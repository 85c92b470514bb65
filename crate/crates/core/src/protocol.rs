//! Actor-level workflow: an L1 issuer seals a template, a trust proxy fills in
//! the trust-proxy section to onboard a personal issuer, the personal issuer
//! fills in the credential section to issue it to a holder, and a verifier
//! checks the result against the registries.
//!
//! Every update that the template's policy gates goes through a vote before
//! it reaches the ledger.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use x25519_dalek::{PublicKey as BoxPublicKey, StaticSecret};

use crate::abe::{self, AbeCiphertext, AbeError, AttributeSecretKey, AttributeUniverse};
use crate::chameleon::{GroupParams, HashingKey, ParamProfile};
use crate::encoding::{canonical_json, hex_bytes, sha256, sha256_parts};
use crate::keys::{self, KeyBundle, SealedBox, SignatureBytes, SigningKey};
use crate::ledger::{CredentialRecord, Ddo, IssuerRecord, Ledger, LedgerError, Transaction};
use crate::pss::{self, PssError, SanitizableSignature, Signer};
use crate::template::{
    CredentialSection, Grant, TemplateError, TrustPropagationTemplate, TrustProxySection,
    CREDENTIAL, TRUST_PROXY,
};
use crate::voting::{
    self, Ballot, RequestStatus, RoleCredential, TallyReport, VoteOption, VotingContract,
    VotingError, VotingRequest,
};

/// Permission a template must grant its trust proxies before they can onboard anyone.
pub const PROPAGATE_TRUST: &str = "propagate-trust";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{0} is not a genesis L1 issuer")]
    NotL1Issuer(String),
    #[error("{0} is not in the issuer registry")]
    IssuerNotOnboarded(String),
    #[error("{0} is not the issuer named by the trust proxy section")]
    NotDesignatedIssuer(String),
    #[error("no attribute authority run by {0}")]
    UnknownAuthority(String),
    #[error("voting is not configured; run genesis with an administrator first")]
    NoVotingContract,
    #[error("{actor} holds no verified role credential attesting `{attribute}`")]
    MissingAttestation { actor: String, attribute: String },
    #[error("template policy does not grant `{0}`")]
    PermissionDenied(String),
    #[error("envelope could not be decrypted by {0}")]
    EnvelopeDecryptionFailed(String),
    #[error("envelope signature does not verify against {0}")]
    EnvelopeSignatureInvalid(String),
    #[error("update kit does not match the template or section: {0}")]
    KitMismatch(String),
    #[error("attributes do not satisfy the policy of `{section}`; missing {missing:?}")]
    PolicyNotSatisfied {
        section: String,
        missing: Vec<String>,
    },
    #[error("signature does not match the template: {0:?}")]
    StaleSignature(Vec<String>),
    #[error("vote gate failed: {detail}")]
    VoteGateFailed {
        detail: String,
        tally: Option<TallyReport>,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error(transparent)]
    Pss(PssError),
    #[error(transparent)]
    Ledger(LedgerError),
}

impl From<PssError> for ProtocolError {
    fn from(e: PssError) -> Self {
        match e {
            PssError::PolicyNotSatisfied { section, missing } => {
                Self::PolicyNotSatisfied { section, missing }
            }
            PssError::StaleSignature(r) => Self::StaleSignature(r),
            PssError::Template(t) => Self::Template(t),
            other => Self::Pss(other),
        }
    }
}

impl From<LedgerError> for ProtocolError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::VoteGateFailed(detail) => Self::VoteGateFailed {
                detail,
                tally: None,
            },
            other => Self::Ledger(other),
        }
    }
}

impl ProtocolError {
    /// Short stable name, used in transcripts.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NotL1Issuer(_) => "NotL1Issuer",
            Self::IssuerNotOnboarded(_) => "IssuerNotOnboarded",
            Self::NotDesignatedIssuer(_) => "NotDesignatedIssuer",
            Self::UnknownAuthority(_) => "UnknownAuthority",
            Self::NoVotingContract => "NoVotingContract",
            Self::MissingAttestation { .. } => "MissingAttestation",
            Self::PermissionDenied(_) => "PermissionDenied",
            Self::EnvelopeDecryptionFailed(_) => "EnvelopeDecryptionFailed",
            Self::EnvelopeSignatureInvalid(_) => "EnvelopeSignatureInvalid",
            Self::KitMismatch(_) => "KitMismatch",
            Self::PolicyNotSatisfied { .. } => "PolicyNotSatisfied",
            Self::StaleSignature(_) => "StaleSignature",
            Self::VoteGateFailed { .. } => "VoteGateFailed",
            Self::Template(_) => "TemplateError",
            Self::Abe(_) => "AbeError",
            Self::Voting(_) => "VotingError",
            Self::Pss(_) => "PssError",
            Self::Ledger(_) => "LedgerError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActorKind {
    L1Issuer,
    TrustProxy,
    PersonalIssuer,
    Holder,
    Verifier,
    Admin,
    Voter,
}

/// A participant: DID, keys, and whatever credentials it has collected.
#[derive(Debug, Clone)]
pub struct Actor {
    pub did: String,
    pub kind: ActorKind,
    keys: KeyBundle,
    pub role_credentials: Vec<RoleCredential>,
    pub attribute_keys: Vec<AttributeSecretKey>,
}

/// On-disk form of an [`Actor`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keystore {
    pub did: String,
    pub kind: ActorKind,
    #[serde(with = "hex_bytes")]
    pub signing_key: [u8; 32],
    #[serde(with = "hex_bytes")]
    pub encryption_key: [u8; 32],
    pub role_credentials: Vec<RoleCredential>,
    pub attribute_keys: Vec<AttributeSecretKey>,
}

impl Actor {
    pub fn generate(did: &str, kind: ActorKind, rng: &mut ChaCha20Rng) -> Self {
        Self {
            did: did.to_string(),
            kind,
            keys: KeyBundle::generate(rng),
            role_credentials: Vec::new(),
            attribute_keys: Vec::new(),
        }
    }

    pub fn ddo(&self) -> Ddo {
        Ddo {
            signing_key: self.keys.verifying_key().to_bytes(),
            encryption_key: *self.keys.box_public().as_bytes(),
            service_endpoints: Vec::new(),
        }
    }

    pub fn signing_key(&self) -> &SigningKey {
        &self.keys.signing
    }

    pub fn signer(&self) -> Signer<'_> {
        Signer {
            did: &self.did,
            key: &self.keys.signing,
        }
    }

    /// All attribute keys this actor holds, pooled into one.
    pub fn attribute_key(&self) -> AttributeSecretKey {
        let empty = AttributeSecretKey::empty(&self.did);
        self.attribute_keys
            .iter()
            .fold(empty, |acc, k| acc.merged_with(k))
    }

    pub fn to_keystore(&self) -> Keystore {
        Keystore {
            did: self.did.clone(),
            kind: self.kind,
            signing_key: self.keys.signing.to_bytes(),
            encryption_key: self.keys.encryption.to_bytes(),
            role_credentials: self.role_credentials.clone(),
            attribute_keys: self.attribute_keys.clone(),
        }
    }

    pub fn from_keystore(k: Keystore) -> Self {
        Self {
            did: k.did,
            kind: k.kind,
            keys: KeyBundle {
                signing: SigningKey::from_bytes(&k.signing_key),
                encryption: StaticSecret::from(k.encryption_key),
            },
            role_credentials: k.role_credentials,
            attribute_keys: k.attribute_keys,
        }
    }
}

/// A template with its sidecar signature and the credential record that committed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedTemplate {
    #[serde(skip)]
    pub template: Option<TrustPropagationTemplate>,
    pub signature: SanitizableSignature,
    pub record_id: String,
}

impl SealedTemplate {
    fn new(
        template: TrustPropagationTemplate,
        signature: SanitizableSignature,
        record_id: String,
    ) -> Self {
        Self {
            template: Some(template),
            signature,
            record_id,
        }
    }

    pub fn template(&self) -> &TrustPropagationTemplate {
        self.template
            .as_ref()
            .expect("sealed templates are built with their template")
    }
}

/// What an authorized updater needs: which template, which section, the
/// section's hashing key, and its attribute-encrypted trapdoor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateKit {
    pub template_id: String,
    pub record_id: String,
    #[serde(with = "hex_bytes")]
    pub combined_digest: [u8; 32],
    pub section_id: String,
    pub hk: HashingKey,
    pub etd: AbeCiphertext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecureEnvelope {
    pub sender_did: String,
    pub recipient_did: String,
    pub ciphertext: SealedBox,
    pub sender_signature: SignatureBytes,
}

impl SecureEnvelope {
    fn signed_bytes(sender: &str, recipient: &str, ct: &SealedBox) -> [u8; 32] {
        sha256_parts(
            "vctp envelope v1",
            [sender.as_bytes(), recipient.as_bytes(), &canonical_json(ct)],
        )
    }
}

/// Supplies ballots once a voting request is open.
pub trait VoteCollector {
    fn collect(&mut self, request: &VotingRequest, rng: &mut ChaCha20Rng) -> Vec<Ballot>;
}

impl<F> VoteCollector for F
where
    F: FnMut(&VotingRequest, &mut ChaCha20Rng) -> Vec<Ballot>,
{
    fn collect(&mut self, request: &VotingRequest, rng: &mut ChaCha20Rng) -> Vec<Ballot> {
        self(request, rng)
    }
}

/// Each listed voter casts one ballot with its first role credential.
pub struct ScriptedVoters<'a> {
    pub votes: Vec<(&'a Actor, VoteOption)>,
}

impl VoteCollector for ScriptedVoters<'_> {
    fn collect(&mut self, request: &VotingRequest, rng: &mut ChaCha20Rng) -> Vec<Ballot> {
        self.votes
            .iter()
            .filter_map(|(voter, option)| {
                let cred = voter.role_credentials.first()?;
                Some(voting::prepare_ballot(
                    request,
                    cred,
                    *option,
                    voter.signing_key(),
                    rng,
                ))
            })
            .collect()
    }
}

/// Collector that supplies no ballots.
pub struct NoVoters;

impl VoteCollector for NoVoters {
    fn collect(&mut self, _: &VotingRequest, _: &mut ChaCha20Rng) -> Vec<Ballot> {
        Vec::new()
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Clone)]
pub struct ManualClock(Arc<Mutex<DateTime<Utc>>>);

impl ManualClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        Self(Arc::new(Mutex::new(at)))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().expect("clock lock") = at;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock lock")
    }
}

/// Result of a gated update.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub sealed: SealedTemplate,
    pub tally: Option<TallyReport>,
    pub transactions: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verifier: String,
    pub template_id: String,
    pub pch_decision: u8,
    pub checks: Vec<Check>,
    /// Registry reads performed. Independent of how many issuer levels exist.
    pub registry_lookups: usize,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "verification of {} by {}",
            self.template_id, self.verifier
        )?;
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "  [{mark}] {:<18} {}", c.name, c.detail)?;
        }
        write!(
            f,
            "  result: {} (Verify_PCH = {}, {} registry lookups)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.pch_decision,
            self.registry_lookups
        )
    }
}

/// One SSI deployment: ledger, voting contract, attribute authorities, clock and RNG.
pub struct Deployment {
    pub ledger: Ledger,
    group: GroupParams,
    rng: ChaCha20Rng,
    clock: Box<dyn Clock>,
    contract: Option<VotingContract>,
    authorities: BTreeMap<String, AttributeUniverse>,
}

impl Deployment {
    pub fn new(profile: ParamProfile, seed: u64) -> Self {
        Self::with_group(GroupParams::profile(profile), seed)
    }

    pub fn with_group(group: GroupParams, seed: u64) -> Self {
        Self {
            ledger: Ledger::new(),
            group,
            rng: ChaCha20Rng::seed_from_u64(seed),
            clock: Box::new(SystemClock),
            contract: None,
            authorities: BTreeMap::new(),
        }
    }

    pub fn set_clock(&mut self, clock: impl Clock + 'static) {
        self.clock = Box::new(clock);
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn group(&self) -> &GroupParams {
        &self.group
    }

    pub fn contract(&self) -> Option<&VotingContract> {
        self.contract.as_ref()
    }

    pub fn universe(&self, authority_did: &str) -> Option<&AttributeUniverse> {
        self.authorities.get(authority_did)
    }

    /// Generates keys for a new actor and registers its DID.
    pub fn new_actor(&mut self, did: &str, kind: ActorKind) -> Result<Actor, ProtocolError> {
        let actor = Actor::generate(did, kind, &mut self.rng);
        self.ledger.register_did(did, actor.ddo())?;
        Ok(actor)
    }

    /// Seeds the L1 issuers and installs the voting contract under `admin`.
    pub fn genesis(&mut self, l1_issuers: &[&Actor], admin: &Actor) -> Result<(), ProtocolError> {
        for issuer in l1_issuers {
            self.ledger.submit(Transaction::SeedIssuer {
                did: issuer.did.clone(),
            })?;
        }
        self.ledger.submit(Transaction::SetAdmin {
            did: admin.did.clone(),
        })?;
        self.contract = Some(VotingContract::new(
            &admin.did,
            admin.signing_key().verifying_key(),
            &mut self.rng,
        ));
        Ok(())
    }

    pub fn issue_role_credential(
        &mut self,
        admin: &Actor,
        subject: &mut Actor,
        role: &str,
        organization: &str,
    ) -> Result<RoleCredential, ProtocolError> {
        let contract = self
            .contract
            .as_ref()
            .ok_or(ProtocolError::NoVotingContract)?;
        let cred = contract.issue_role_credential(
            admin.signing_key(),
            &subject.did,
            role,
            organization,
        )?;
        subject.role_credentials.push(cred.clone());
        Ok(cred)
    }

    /// The actor presents its role credentials to the attribute authority run
    /// by `authority_did` and receives keys for `attributes`.
    pub fn attest(
        &mut self,
        authority_did: &str,
        actor: &mut Actor,
        attributes: &[&str],
    ) -> Result<(), ProtocolError> {
        let contract = self
            .contract
            .as_ref()
            .ok_or(ProtocolError::NoVotingContract)?;
        let universe = self
            .authorities
            .get(authority_did)
            .ok_or_else(|| ProtocolError::UnknownAuthority(authority_did.to_string()))?;
        for attribute in attributes {
            let attested = actor.role_credentials.iter().any(|c| {
                c.subject_did == actor.did
                    && c.verify(contract.admin_key())
                    && c.attributes().contains(attribute)
            });
            if !attested {
                return Err(ProtocolError::MissingAttestation {
                    actor: actor.did.clone(),
                    attribute: attribute.to_string(),
                });
            }
        }
        let key = abe::keygen(universe, &actor.did, attributes.iter().copied())?;
        actor.attribute_keys.push(key);
        Ok(())
    }

    /// Runs the attribute authority setup (once per issuer and vocabulary),
    /// seals the template and commits it without a vote.
    pub fn l1_setup(
        &mut self,
        issuer: &Actor,
        attribute_names: &[&str],
        template_source: &[u8],
    ) -> Result<SealedTemplate, ProtocolError> {
        let is_l1 = self
            .ledger
            .lookup_issuer(&issuer.did)
            .is_some_and(|r| r.level == 1);
        if !is_l1 {
            return Err(ProtocolError::NotL1Issuer(issuer.did.clone()));
        }
        let template = TrustPropagationTemplate::parse(template_source)?;
        if template.update_policy().official_issuer != issuer.did {
            return Err(ProtocolError::NotL1Issuer(format!(
                "{} (template names {})",
                issuer.did,
                template.update_policy().official_issuer
            )));
        }
        let reuse = self.authorities.get(&issuer.did).is_some_and(|u| {
            let mut names: Vec<&str> = attribute_names.to_vec();
            names.sort_unstable();
            names.dedup();
            u.public().attribute_names().eq(names.iter().copied())
                && names.len() == attribute_names.len()
        });
        if !reuse {
            let universe = abe::setup(&self.group, attribute_names, &mut self.rng)?;
            self.ledger.submit(Transaction::PublishUniverse {
                issuer_did: issuer.did.clone(),
                params: universe.public().clone(),
            })?;
            self.authorities.insert(issuer.did.clone(), universe);
        }
        let universe = &self.authorities[&issuer.did];
        let signature =
            pss::hash_pch(&template, universe.public(), issuer.signer(), &mut self.rng)?;
        let record = CredentialRecord::new(
            signature.combined_digest,
            signature.sigma.clone(),
            template.id(),
            self.ledger.state().next_version(template.id()),
            &issuer.did,
            0,
            None,
        );
        let record_id = record.id_hex();
        self.ledger.commit_credential(record, None)?;
        Ok(SealedTemplate::new(template, signature, record_id))
    }

    /// Packs the section's hashing key and encrypted trapdoor for one updater.
    pub fn send_update_kit(
        &mut self,
        sender: &Actor,
        recipient_did: &str,
        sealed: &SealedTemplate,
        section_id: &str,
    ) -> Result<SecureEnvelope, ProtocolError> {
        let section = sealed.template().section(section_id)?;
        if !section.updatable {
            return Err(TemplateError::SectionNotUpdatable(section_id.to_string()).into());
        }
        let record = sealed
            .signature
            .record(section_id)
            .ok_or_else(|| TemplateError::UnknownSection(section_id.to_string()))?;
        let (Some(hk), Some(etd)) = (record.hk(), record.etd()) else {
            return Err(TemplateError::SectionNotUpdatable(section_id.to_string()).into());
        };
        let kit = UpdateKit {
            template_id: sealed.template().id().to_string(),
            record_id: sealed.record_id.clone(),
            combined_digest: sealed.signature.combined_digest,
            section_id: section_id.to_string(),
            hk: hk.clone(),
            etd: etd.clone(),
        };
        let recipient = self
            .ledger
            .state()
            .lookup_did(recipient_did)
            .ok_or_else(|| LedgerError::UnknownDid(recipient_did.to_string()))?;
        let ciphertext = keys::seal(
            &BoxPublicKey::from(recipient.ddo.encryption_key),
            recipient_did.as_bytes(),
            &canonical_json(&kit),
            &mut self.rng,
        );
        let sender_signature = keys::sign(
            sender.signing_key(),
            &SecureEnvelope::signed_bytes(&sender.did, recipient_did, &ciphertext),
        );
        Ok(SecureEnvelope {
            sender_did: sender.did.clone(),
            recipient_did: recipient_did.to_string(),
            ciphertext,
            sender_signature,
        })
    }

    /// Checks the sender's signature and decrypts with `recipient`'s key.
    pub fn open_update_kit(
        &self,
        recipient: &Actor,
        envelope: &SecureEnvelope,
    ) -> Result<UpdateKit, ProtocolError> {
        let sender_key = self
            .ledger
            .state()
            .verifying_key(&envelope.sender_did)
            .ok_or_else(|| ProtocolError::EnvelopeSignatureInvalid(envelope.sender_did.clone()))?;
        let msg = SecureEnvelope::signed_bytes(
            &envelope.sender_did,
            &envelope.recipient_did,
            &envelope.ciphertext,
        );
        if !keys::verify(&sender_key, &msg, &envelope.sender_signature) {
            return Err(ProtocolError::EnvelopeSignatureInvalid(
                envelope.sender_did.clone(),
            ));
        }
        // The recipient DID is bound as associated data: a re-addressed envelope fails here too.
        let bytes = keys::open(
            &recipient.keys.encryption,
            recipient.did.as_bytes(),
            &envelope.ciphertext,
        )
        .map_err(|_| ProtocolError::EnvelopeDecryptionFailed(recipient.did.clone()))?;
        serde_json::from_slice(&bytes).map_err(|e| ProtocolError::KitMismatch(e.to_string()))
    }

    fn check_kit(
        kit: &UpdateKit,
        working: &SealedTemplate,
        section_id: &str,
    ) -> Result<(), ProtocolError> {
        let record = working.signature.record(section_id);
        if kit.section_id != section_id {
            return Err(ProtocolError::KitMismatch(format!(
                "kit is for {}, not {section_id}",
                kit.section_id
            )));
        }
        if kit.template_id != working.template().id()
            || kit.combined_digest != working.signature.combined_digest
        {
            return Err(ProtocolError::KitMismatch(
                "kit belongs to a different template".into(),
            ));
        }
        if record.and_then(|r| r.hk()) != Some(&kit.hk)
            || record.and_then(|r| r.etd()) != Some(&kit.etd)
        {
            return Err(ProtocolError::KitMismatch(
                "hashing key or trapdoor differs from the signature".into(),
            ));
        }
        Ok(())
    }

    /// Opens a voting request, gathers ballots, and settles it.
    fn run_vote(
        &mut self,
        template: &TrustPropagationTemplate,
        section_id: &str,
        updater_did: &str,
        voters: &mut dyn VoteCollector,
    ) -> Result<Option<([u8; 32], TallyReport)>, ProtocolError> {
        let policy = template.update_policy();
        if policy.num_votes_required == 0 {
            return Ok(None);
        }
        let contract = self
            .contract
            .as_ref()
            .ok_or(ProtocolError::NoVotingContract)?;
        let update = voting::PendingUpdate {
            section_id: section_id.to_string(),
            new_content_digest: sha256(template.section_bytes(section_id)?),
            updater_did: updater_did.to_string(),
        };
        let request = contract.open_request(template.id(), update, policy)?;
        let id = request.request_id;
        self.ledger.submit(Transaction::OpenVote {
            request: request.clone(),
        })?;

        for ballot in voters.collect(&request, &mut self.rng) {
            let state = self.ledger.state();
            let current = state.voting_request(&id).expect("request was just opened");
            if current.status != RequestStatus::Open {
                break;
            }
            let contract = self.contract.as_ref().expect("checked above");
            let vote = match contract
                .evaluate_ballot(current, &ballot, |did| state.verifying_key(did))
            {
                Ok(v) => v,
                // Ballots the contract cannot read are dropped, as a contract would revert them.
                Err(VotingError::UndecryptableBallot | VotingError::MalformedBallot(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            self.ledger.submit(Transaction::CastVote {
                request_id: id,
                vote,
            })?;
        }

        let current = self
            .ledger
            .state()
            .voting_request(&id)
            .expect("request exists");
        if current.status == RequestStatus::Open {
            let status = voting::close(current, self.clock.now());
            self.ledger.submit(Transaction::CloseVote {
                request_id: id,
                status,
            })?;
        }
        let summary = self
            .ledger
            .state()
            .voting_request(&id)
            .expect("request exists")
            .summary();
        Ok(Some((id, summary)))
    }

    fn commit_update(
        &mut self,
        updated: TrustPropagationTemplate,
        signature: SanitizableSignature,
        section_id: &str,
        committer: &Actor,
        voters: &mut dyn VoteCollector,
        issuer: impl FnOnce(&str) -> Option<IssuerRecord>,
    ) -> Result<UpdateOutcome, ProtocolError> {
        let start = self.ledger.height();
        let vote = self.run_vote(&updated, section_id, &committer.did, voters)?;
        let votes_required = updated.update_policy().num_votes_required;
        let record = CredentialRecord::new(
            signature.combined_digest,
            signature.sigma.clone(),
            updated.id(),
            self.ledger.state().next_version(updated.id()),
            &committer.did,
            votes_required,
            vote.as_ref().map(|(id, _)| *id),
        );
        let record_id = record.id_hex();
        let tally = vote.map(|(_, t)| t);
        match self.ledger.commit_credential(record, issuer(&record_id)) {
            Ok(_) => {}
            Err(LedgerError::VoteGateFailed(detail)) => {
                return Err(ProtocolError::VoteGateFailed { detail, tally });
            }
            Err(e) => return Err(e.into()),
        }
        Ok(UpdateOutcome {
            sealed: SealedTemplate::new(updated, signature, record_id),
            tally,
            transactions: (start..self.ledger.height()).collect(),
        })
    }

    /// The trust proxy fills in the trust-proxy section naming the new issuer.
    /// On a passed vote the credential record and the new issuer record are
    /// committed in one transaction.
    pub fn onboard_personal_issuer(
        &mut self,
        proxy: &Actor,
        envelope: &SecureEnvelope,
        working: &SealedTemplate,
        new_issuer_did: &str,
        permissions: &[&str],
        voters: &mut dyn VoteCollector,
    ) -> Result<UpdateOutcome, ProtocolError> {
        let kit = self.open_update_kit(proxy, envelope)?;
        Self::check_kit(&kit, working, TRUST_PROXY)?;
        let template = working.template();
        let policy = template.update_policy();
        if !policy
            .policy
            .permissions
            .iter()
            .any(|p| p == PROPAGATE_TRUST)
        {
            return Err(ProtocolError::PermissionDenied(PROPAGATE_TRUST.into()));
        }
        if self.ledger.state().lookup_did(new_issuer_did).is_none() {
            return Err(LedgerError::UnknownDid(new_issuer_did.to_string()).into());
        }
        let content = TrustProxySection {
            trust_proxy: proxy.did.clone(),
            next_level_issuer: Grant {
                id: new_issuer_did.to_string(),
                permissions: permissions.iter().map(|p| p.to_string()).collect(),
            },
        };
        let (updated, signature) = pss::update_pch(
            template,
            &working.signature,
            TRUST_PROXY,
            &canonical_json(&content),
            &proxy.attribute_key(),
            proxy.signer(),
        )?;
        let level = self
            .ledger
            .lookup_issuer(&policy.official_issuer)
            .map_or(1, |r| r.level)
            + 1;
        let proxy_did = proxy.did.clone();
        let new_issuer = new_issuer_did.to_string();
        let perms = content.next_level_issuer.permissions.clone();
        self.commit_update(
            updated,
            signature,
            TRUST_PROXY,
            proxy,
            voters,
            move |record_id| {
                Some(IssuerRecord {
                    did: new_issuer,
                    level,
                    onboarded_by: Some(proxy_did),
                    template_ref: Some(record_id.to_string()),
                    permissions: perms,
                    committed_at: None,
                })
            },
        )
    }

    /// The onboarded personal issuer fills in the credential section for a holder.
    pub fn issue_credential(
        &mut self,
        personal_issuer: &Actor,
        envelope: &SecureEnvelope,
        working: &SealedTemplate,
        holder_did: &str,
        permissions: &[&str],
        voters: &mut dyn VoteCollector,
    ) -> Result<UpdateOutcome, ProtocolError> {
        if self.ledger.lookup_issuer(&personal_issuer.did).is_none() {
            return Err(ProtocolError::IssuerNotOnboarded(
                personal_issuer.did.clone(),
            ));
        }
        let template = working.template();
        if template.trust_proxy()?.next_level_issuer.id != personal_issuer.did {
            return Err(ProtocolError::NotDesignatedIssuer(
                personal_issuer.did.clone(),
            ));
        }
        let kit = self.open_update_kit(personal_issuer, envelope)?;
        Self::check_kit(&kit, working, CREDENTIAL)?;
        if self.ledger.state().lookup_did(holder_did).is_none() {
            return Err(LedgerError::UnknownDid(holder_did.to_string()).into());
        }
        let current = template.credential()?;
        let content = CredentialSection {
            signed_by: personal_issuer.did.clone(),
            credential_subject: Grant {
                id: holder_did.to_string(),
                permissions: permissions.iter().map(|p| p.to_string()).collect(),
            },
            ..current
        };
        let (updated, signature) = pss::update_pch(
            template,
            &working.signature,
            CREDENTIAL,
            &canonical_json(&content),
            &personal_issuer.attribute_key(),
            personal_issuer.signer(),
        )?;
        self.commit_update(
            updated,
            signature,
            CREDENTIAL,
            personal_issuer,
            voters,
            |_| None,
        )
    }

    /// Checks a presented credential with a fixed number of registry reads.
    pub fn verify_presentation(
        &self,
        verifier: &Actor,
        template: &TrustPropagationTemplate,
        signature: &SanitizableSignature,
    ) -> VerificationReport {
        let state = self.ledger.state();
        let mut lookups = 0usize;
        let mut checks = Vec::new();
        let mut push = |name: &str, passed: bool, detail: String| {
            checks.push(Check {
                name: name.to_string(),
                passed,
                detail,
            })
        };

        lookups += 1;
        let signer_key = state.verifying_key(&signature.signer_did);
        let pch = match &signer_key {
            Some(k) => pss::verify_pch(template, signature, k),
            None => pss::PchVerification {
                reasons: vec![format!(
                    "signer {} not in DID registry",
                    signature.signer_did
                )],
            },
        };
        push(
            "verify_pch",
            pch.is_valid(),
            if pch.is_valid() {
                "section digests and sigma valid".into()
            } else {
                pch.reasons.join("; ")
            },
        );

        let policy = template.update_policy();
        lookups += 1;
        let l1 = state.lookup_issuer(&signature.signer_did);
        push(
            "l1_seal",
            signature.signer_did == policy.official_issuer && l1.is_some_and(|r| r.level == 1),
            format!("sealed by {}", signature.signer_did),
        );

        let credential = template.credential().ok();
        let trust_proxy = template.trust_proxy().ok();
        let (issued, signed_by, holder) = match (&credential, &trust_proxy) {
            (Some(c), Some(tp)) => (
                c.is_issued() && tp.is_instantiated() && tp.next_level_issuer.id == c.signed_by,
                c.signed_by.clone(),
                c.credential_subject.id.clone(),
            ),
            _ => (false, String::new(), String::new()),
        };
        push(
            "issued",
            issued,
            format!("signed by {signed_by} for {holder}"),
        );

        lookups += 1;
        let committed = state.credentials_for(template.id()).any(|r| {
            r.combined_digest == signature.combined_digest
                && r.sigma == signature.sigma
                && r.committed_by == signed_by
        });
        push(
            "credential_record",
            committed,
            if committed {
                format!("record committed by {signed_by}")
            } else {
                format!("no record committed by {signed_by} matches digest and sigma")
            },
        );

        lookups += 1;
        let issuer = state.lookup_issuer(&signed_by);
        push(
            "issuer_registry",
            issuer.is_some(),
            match issuer {
                Some(r) => format!("{signed_by} is a level-{} issuer", r.level),
                None => format!("{signed_by} is unverifiable on-chain"),
            },
        );

        lookups += 2;
        let endorsements = signature.latest_endorsements();
        let endorsement_keys_ok = endorsements.values().all(|e| {
            state
                .lookup_did(&e.updater_did)
                .is_some_and(|r| r.ddo.signing_key == e.updater_key)
        });
        let resolved =
            state.lookup_did(&holder).is_some() && state.lookup_did(&signed_by).is_some();
        push(
            "did_resolution",
            resolved && endorsement_keys_ok,
            format!(
                "holder and issuer {}; endorsement keys {}",
                if resolved {
                    "resolve"
                } else {
                    "do not resolve"
                },
                if endorsement_keys_ok {
                    "match their DIDs"
                } else {
                    "do not match"
                }
            ),
        );

        let now = self.clock.now();
        push(
            "expiry",
            policy.is_valid_at(now),
            format!(
                "now {} within [{}, {}]",
                now.to_rfc3339(),
                policy.issuance_date.to_rfc3339(),
                policy.expiration_date.to_rfc3339()
            ),
        );

        VerificationReport {
            verifier: verifier.did.clone(),
            template_id: template.id().to_string(),
            pch_decision: pch.decision(),
            checks,
            registry_lookups: lookups,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{HOSPITAL_TEMPLATE, UPDATE_POLICY};

    pub(crate) const HOS: &str = "did:example_hos:fcgfc2g823fcdd387";
    const DOC: &str = "did:example_doctor:fcgfc2g823fcdd387";
    const PAT: &str = "did:example_patient:fcgfc2g823fcdd387";
    const HOLDER: &str = "did:example_holder:fcgfc2g823fcdd387";
    const ATTRS: [&str; 4] = ["doctor", "nurse", "patient", "HospitalA"];

    struct World {
        d: Deployment,
        hospital: Actor,
        admin: Actor,
        doctor: Actor,
        patient: Actor,
        voters: Vec<Actor>,
        sealed: SealedTemplate,
    }

    fn world() -> World {
        let mut d = Deployment::new(ParamProfile::Test, 1);
        let hospital = d.new_actor(HOS, ActorKind::L1Issuer).unwrap();
        let admin = d
            .new_actor("did:example_admin:1", ActorKind::Admin)
            .unwrap();
        d.genesis(&[&hospital], &admin).unwrap();
        let policy_time = "2021-07-12T00:00:00Z".parse().unwrap();
        d.set_clock(ManualClock::new(policy_time));
        let mut doctor = d.new_actor(DOC, ActorKind::TrustProxy).unwrap();
        let mut patient = d.new_actor(PAT, ActorKind::PersonalIssuer).unwrap();
        d.new_actor(HOLDER, ActorKind::Holder).unwrap();
        d.issue_role_credential(&admin, &mut doctor, "doctor", "HospitalA")
            .unwrap();
        d.issue_role_credential(&admin, &mut patient, "patient", "HospitalA")
            .unwrap();
        let mut voters = Vec::new();
        for i in 0..5 {
            let mut v = d
                .new_actor(&format!("did:example_staff:{i}"), ActorKind::Voter)
                .unwrap();
            d.issue_role_credential(
                &admin,
                &mut v,
                if i < 2 { "doctor" } else { "nurse" },
                "HospitalA",
            )
            .unwrap();
            voters.push(v);
        }
        let sealed = d
            .l1_setup(&hospital, &ATTRS, HOSPITAL_TEMPLATE.as_bytes())
            .unwrap();
        d.attest(HOS, &mut doctor, &["doctor", "HospitalA"])
            .unwrap();
        d.attest(HOS, &mut patient, &["patient", "HospitalA"])
            .unwrap();
        World {
            d,
            hospital,
            admin,
            doctor,
            patient,
            voters,
            sealed,
        }
    }

    fn approve_all(voters: &[Actor]) -> ScriptedVoters<'_> {
        ScriptedVoters {
            votes: voters.iter().map(|v| (v, VoteOption::Approve)).collect(),
        }
    }

    #[test]
    fn full_flow() {
        let mut w = world();
        let kit =
            w.d.send_update_kit(&w.hospital, DOC, &w.sealed, TRUST_PROXY)
                .unwrap();
        let out =
            w.d.onboard_personal_issuer(
                &w.doctor,
                &kit,
                &w.sealed,
                PAT,
                &["delegate-medical-decision"],
                &mut approve_all(&w.voters),
            )
            .unwrap();
        assert_eq!(out.tally.as_ref().unwrap().approvals, 5);
        let rec = w.d.ledger.lookup_issuer(PAT).unwrap();
        assert_eq!(rec.level, 2);
        assert_eq!(rec.onboarded_by.as_deref(), Some(DOC));
        assert_eq!(out.sealed.signature.sigma, w.sealed.signature.sigma);

        let kit =
            w.d.send_update_kit(&w.hospital, PAT, &out.sealed, CREDENTIAL)
                .unwrap();
        let issued =
            w.d.issue_credential(
                &w.patient,
                &kit,
                &out.sealed,
                HOLDER,
                &["routine-medical-care"],
                &mut approve_all(&w.voters),
            )
            .unwrap();
        assert_eq!(issued.sealed.signature.sigma, w.sealed.signature.sigma);
        let verifier = Actor::generate("did:example_physio:1", ActorKind::Verifier, w.d.rng());
        let report = w.d.verify_presentation(
            &verifier,
            issued.sealed.template(),
            &issued.sealed.signature,
        );
        assert!(report.passed(), "{report}");
        assert_eq!(report.pch_decision, 1);
    }

    #[test]
    fn non_l1_cannot_seal() {
        let mut w = world();
        let err =
            w.d.l1_setup(&w.doctor, &ATTRS, HOSPITAL_TEMPLATE.as_bytes())
                .unwrap_err();
        assert!(matches!(err, ProtocolError::NotL1Issuer(_)));
    }

    #[test]
    fn resealing_creates_a_new_record() {
        let mut w = world();
        let again =
            w.d.l1_setup(&w.hospital, &ATTRS, HOSPITAL_TEMPLATE.as_bytes())
                .unwrap();
        assert_ne!(again.record_id, w.sealed.record_id);
        let v = pss::verify_pch(
            again.template(),
            &again.signature,
            &w.hospital.signing_key().verifying_key(),
        );
        assert_eq!(v.decision(), 1);
    }

    #[test]
    fn envelopes_only_open_for_their_recipient() {
        let mut w = world();
        let kit =
            w.d.send_update_kit(&w.hospital, DOC, &w.sealed, TRUST_PROXY)
                .unwrap();
        assert!(w.d.open_update_kit(&w.doctor, &kit).is_ok());
        assert!(matches!(
            w.d.open_update_kit(&w.patient, &kit),
            Err(ProtocolError::EnvelopeDecryptionFailed(_))
        ));
        let mut readdressed = kit.clone();
        readdressed.recipient_did = PAT.into();
        assert!(w.d.open_update_kit(&w.patient, &readdressed).is_err());
        assert!(matches!(
            w.d.send_update_kit(&w.hospital, DOC, &w.sealed, UPDATE_POLICY),
            Err(ProtocolError::Template(TemplateError::SectionNotUpdatable(
                _
            )))
        ));
        assert!(matches!(
            w.d.send_update_kit(&w.hospital, DOC, &w.sealed, "holder"),
            Err(ProtocolError::Template(TemplateError::UnknownSection(_)))
        ));
    }

    #[test]
    fn insufficient_votes_block_onboarding() {
        let mut w = world();
        let kit =
            w.d.send_update_kit(&w.hospital, DOC, &w.sealed, TRUST_PROXY)
                .unwrap();
        let before = w.d.ledger.state().issuer_registry.clone();
        let err =
            w.d.onboard_personal_issuer(
                &w.doctor,
                &kit,
                &w.sealed,
                PAT,
                &[],
                &mut approve_all(&w.voters[..4]),
            )
            .unwrap_err();
        match err {
            ProtocolError::VoteGateFailed { tally, .. } => {
                let t = tally.unwrap();
                assert_eq!((t.approvals, t.status), (4, RequestStatus::Failed));
            }
            e => panic!("unexpected {e}"),
        }
        assert_eq!(w.d.ledger.state().issuer_registry, before);
    }

    #[test]
    fn issuance_requires_onboarding_and_attributes() {
        let mut w = world();
        let kit =
            w.d.send_update_kit(&w.hospital, PAT, &w.sealed, CREDENTIAL)
                .unwrap();
        let err =
            w.d.issue_credential(
                &w.patient,
                &kit,
                &w.sealed,
                HOLDER,
                &[],
                &mut approve_all(&w.voters),
            )
            .unwrap_err();
        assert!(matches!(err, ProtocolError::IssuerNotOnboarded(_)));

        // Onboard a DID that lacks the next-level issuer attributes.
        let mut outsider =
            w.d.new_actor("did:example_outsider:1", ActorKind::PersonalIssuer)
                .unwrap();
        w.d.issue_role_credential(&w.admin, &mut outsider, "visitor", "HospitalA")
            .unwrap();
        let kit =
            w.d.send_update_kit(&w.hospital, DOC, &w.sealed, TRUST_PROXY)
                .unwrap();
        let out =
            w.d.onboard_personal_issuer(
                &w.doctor,
                &kit,
                &w.sealed,
                &outsider.did,
                &[],
                &mut approve_all(&w.voters),
            )
            .unwrap();
        assert!(w.d.attest(HOS, &mut outsider, &["patient"]).is_err());
        let kit =
            w.d.send_update_kit(&w.hospital, &outsider.did, &out.sealed, CREDENTIAL)
                .unwrap();
        let err =
            w.d.issue_credential(
                &outsider,
                &kit,
                &out.sealed,
                HOLDER,
                &[],
                &mut approve_all(&w.voters),
            )
            .unwrap_err();
        assert!(
            matches!(err, ProtocolError::PolicyNotSatisfied { .. }),
            "{err}"
        );
    }

    #[test]
    fn verification_flags_expiry_and_missing_issuer() {
        let mut w = world();
        let verifier = Actor::generate("did:example_physio:1", ActorKind::Verifier, w.d.rng());
        let report =
            w.d.verify_presentation(&verifier, w.sealed.template(), &w.sealed.signature);
        assert_eq!(report.pch_decision, 1);
        assert!(!report.check("issued").unwrap().passed);
        assert!(!report.check("issuer_registry").unwrap().passed);
        w.d.set_clock(ManualClock::new("2021-08-01T00:00:00Z".parse().unwrap()));
        let report =
            w.d.verify_presentation(&verifier, w.sealed.template(), &w.sealed.signature);
        assert!(!report.check("expiry").unwrap().passed);
    }

    #[test]
    fn attestation_needs_a_matching_role_credential() {
        let mut w = world();
        let mut nurse =
            w.d.new_actor("did:example_nurse:1", ActorKind::Voter)
                .unwrap();
        w.d.issue_role_credential(&w.admin, &mut nurse, "nurse", "HospitalA")
            .unwrap();
        let err = w.d.attest(HOS, &mut nurse, &["doctor"]).unwrap_err();
        assert!(matches!(err, ProtocolError::MissingAttestation { .. }));
        w.d.attest(HOS, &mut nurse, &["nurse", "HospitalA"])
            .unwrap();
        assert_eq!(nurse.attribute_key().attributes().len(), 2);
    }

    #[test]
    fn keystore_round_trip() {
        let w = world();
        let ks = w.doctor.to_keystore();
        let json = serde_json::to_string(&ks).unwrap();
        let back = Actor::from_keystore(serde_json::from_str(&json).unwrap());
        assert_eq!(back.ddo(), w.doctor.ddo());
        assert_eq!(back.attribute_key(), w.doctor.attribute_key());
    }
}
