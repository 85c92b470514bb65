//! In-process registry ledger.
//!
//! Simulates the DID, issuer and credential registries plus the voting
//! contract's storage as a single append-only transaction log. State is a pure
//! fold over the log: [`replay`] rebuilds it, and [`LedgerState::state_hash`]
//! gives a digest to compare live and replayed state.
//!
//! Each log entry carries its sequence number and the hash of the previous
//! entry, so reordering or splicing is caught during replay.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abe::PublicParams;
use crate::encoding::{canonical_json, hex_bytes, sha256, sha256_parts};
use crate::keys::{self, SignatureBytes, VerifyingKey};
use crate::voting::{self, RequestStatus, VoteRecord, VotingError, VotingRequest};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("DID {0} is already registered")]
    DuplicateDid(String),
    #[error("DID {0} is not registered")]
    UnknownDid(String),
    #[error("credential record {0} already exists")]
    DuplicateRecord(String),
    #[error("vote gate failed: {0}")]
    VoteGateFailed(String),
    #[error("invalid issuer record: {0}")]
    InvalidIssuer(String),
    #[error("genesis transactions are only accepted before the first credential commit")]
    NotGenesis,
    #[error("voting request {0} already exists")]
    DuplicateRequest(String),
    #[error("unknown voting request {0}")]
    UnknownRequest(String),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// DID document: the public keys behind a DID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ddo {
    #[serde(with = "hex_bytes")]
    pub signing_key: [u8; 32],
    #[serde(with = "hex_bytes")]
    pub encryption_key: [u8; 32],
    #[serde(default)]
    pub service_endpoints: Vec<String>,
}

impl Ddo {
    pub fn verifying_key(&self) -> Option<VerifyingKey> {
        keys::verifying_key_from_bytes(&self.signing_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidRecord {
    pub did: String,
    pub ddo: Ddo,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuerRecord {
    pub did: String,
    pub level: u32,
    pub onboarded_by: Option<String>,
    pub template_ref: Option<String>,
    pub permissions: Vec<String>,
    /// Height of the committing transaction; `None` at genesis.
    pub committed_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialRecord {
    #[serde(with = "hex_bytes")]
    pub record_id: [u8; 32],
    #[serde(with = "hex_bytes")]
    pub combined_digest: [u8; 32],
    pub sigma: SignatureBytes,
    pub template_id: String,
    pub version: u64,
    pub committed_by: String,
    /// Votes the template policy demands for this commit.
    pub votes_required: u32,
    #[serde(with = "opt_hex")]
    pub gate: Option<[u8; 32]>,
}

mod opt_hex {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[u8; 32]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[u8; 32]>, D::Error> {
        let Some(s) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let bytes = hex::decode(s).map_err(D::Error::custom)?;
        bytes
            .try_into()
            .map(Some)
            .map_err(|_| D::Error::custom("expected 32 bytes"))
    }
}

impl CredentialRecord {
    pub fn compute_id(
        combined_digest: &[u8; 32],
        sigma: &SignatureBytes,
        template_id: &str,
        version: u64,
    ) -> [u8; 32] {
        sha256_parts(
            "vctp credential record v1",
            [
                combined_digest.as_slice(),
                sigma.0.as_slice(),
                template_id.as_bytes(),
                &version.to_be_bytes(),
            ],
        )
    }

    pub fn new(
        combined_digest: [u8; 32],
        sigma: SignatureBytes,
        template_id: &str,
        version: u64,
        committed_by: &str,
        votes_required: u32,
        gate: Option<[u8; 32]>,
    ) -> Self {
        Self {
            record_id: Self::compute_id(&combined_digest, &sigma, template_id, version),
            combined_digest,
            sigma,
            template_id: template_id.to_string(),
            version,
            committed_by: committed_by.to_string(),
            votes_required,
            gate,
        }
    }

    pub fn id_hex(&self) -> String {
        hex::encode(self.record_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transaction {
    SetAdmin {
        did: String,
    },
    RegisterDid {
        did: String,
        ddo: Ddo,
    },
    SeedIssuer {
        did: String,
    },
    PublishUniverse {
        issuer_did: String,
        params: PublicParams,
    },
    CommitCredential {
        record: CredentialRecord,
        issuer: Option<IssuerRecord>,
    },
    OpenVote {
        request: VotingRequest,
    },
    CastVote {
        #[serde(with = "hex_bytes")]
        request_id: [u8; 32],
        vote: VoteRecord,
    },
    CloseVote {
        #[serde(with = "hex_bytes")]
        request_id: [u8; 32],
        status: RequestStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(with = "hex_bytes")]
    pub prev: [u8; 32],
    pub tx: Transaction,
}

impl LogEntry {
    pub fn hash(&self) -> [u8; 32] {
        sha256(&canonical_json(self))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    pub did_registry: BTreeMap<String, DidRecord>,
    pub issuer_registry: BTreeMap<String, IssuerRecord>,
    pub credential_registry: BTreeMap<String, CredentialRecord>,
    pub voting_store: BTreeMap<String, VotingRequest>,
    pub consumed_gates: BTreeSet<String>,
    pub universes: BTreeMap<String, PublicParams>,
    pub admin: Option<String>,
    pub height: u64,
    #[serde(with = "hex_bytes")]
    pub head: [u8; 32],
}

impl LedgerState {
    pub fn state_hash(&self) -> [u8; 32] {
        sha256(&canonical_json(self))
    }

    pub fn lookup_did(&self, did: &str) -> Option<&DidRecord> {
        self.did_registry.get(did)
    }

    pub fn verifying_key(&self, did: &str) -> Option<VerifyingKey> {
        self.lookup_did(did)?.ddo.verifying_key()
    }

    pub fn lookup_issuer(&self, did: &str) -> Option<&IssuerRecord> {
        self.issuer_registry.get(did)
    }

    pub fn credential(&self, record_id_hex: &str) -> Option<&CredentialRecord> {
        self.credential_registry.get(record_id_hex)
    }

    pub fn credentials_for<'a>(
        &'a self,
        template_id: &'a str,
    ) -> impl Iterator<Item = &'a CredentialRecord> + 'a {
        self.credential_registry
            .values()
            .filter(move |r| r.template_id == template_id)
    }

    pub fn next_version(&self, template_id: &str) -> u64 {
        self.credentials_for(template_id)
            .map(|r| r.version)
            .max()
            .unwrap_or(0)
            + 1
    }

    pub fn voting_request(&self, request_id: &[u8; 32]) -> Option<&VotingRequest> {
        self.voting_store.get(&hex::encode(request_id))
    }

    fn require_did(&self, did: &str) -> Result<(), LedgerError> {
        if self.did_registry.contains_key(did) {
            Ok(())
        } else {
            Err(LedgerError::UnknownDid(did.to_string()))
        }
    }

    /// Validates `tx` against the current state and applies it. Either the
    /// whole transaction applies or the state is untouched.
    fn apply(&mut self, tx: &Transaction) -> Result<(), LedgerError> {
        let height = self.height;
        match tx {
            Transaction::SetAdmin { did } => {
                self.require_did(did)?;
                if !self.credential_registry.is_empty() {
                    return Err(LedgerError::NotGenesis);
                }
                self.admin = Some(did.clone());
            }
            Transaction::RegisterDid { did, ddo } => {
                if self.did_registry.contains_key(did) {
                    return Err(LedgerError::DuplicateDid(did.clone()));
                }
                self.did_registry.insert(
                    did.clone(),
                    DidRecord {
                        did: did.clone(),
                        ddo: ddo.clone(),
                        registered_at: height,
                    },
                );
            }
            Transaction::SeedIssuer { did } => {
                self.require_did(did)?;
                if !self.credential_registry.is_empty() {
                    return Err(LedgerError::NotGenesis);
                }
                if self.issuer_registry.contains_key(did) {
                    return Err(LedgerError::InvalidIssuer(format!(
                        "{did} is already an issuer"
                    )));
                }
                self.issuer_registry.insert(
                    did.clone(),
                    IssuerRecord {
                        did: did.clone(),
                        level: 1,
                        onboarded_by: None,
                        template_ref: None,
                        permissions: Vec::new(),
                        committed_at: None,
                    },
                );
            }
            Transaction::PublishUniverse { issuer_did, params } => {
                match self.issuer_registry.get(issuer_did) {
                    Some(r) if r.level == 1 => {}
                    _ => {
                        return Err(LedgerError::InvalidIssuer(format!(
                            "{issuer_did} is not an L1 issuer"
                        )))
                    }
                }
                self.universes.insert(issuer_did.clone(), params.clone());
            }
            Transaction::CommitCredential { record, issuer } => {
                self.check_commit(record, issuer.as_ref())?;
                let id = record.id_hex();
                if let Some(gate) = &record.gate {
                    self.consumed_gates.insert(hex::encode(gate));
                }
                if let Some(issuer) = issuer {
                    let mut issuer = issuer.clone();
                    issuer.committed_at = Some(height);
                    self.issuer_registry.insert(issuer.did.clone(), issuer);
                }
                self.credential_registry.insert(id, record.clone());
            }
            Transaction::OpenVote { request } => {
                let id = request.id_hex();
                if self.voting_store.contains_key(&id) {
                    return Err(LedgerError::DuplicateRequest(id));
                }
                if request.status != RequestStatus::Open || !request.votes.is_empty() {
                    return Err(LedgerError::Voting(VotingError::RequestClosed(
                        request.status,
                    )));
                }
                self.voting_store.insert(id, request.clone());
            }
            Transaction::CastVote { request_id, vote } => {
                let id = hex::encode(request_id);
                let req = self
                    .voting_store
                    .get(&id)
                    .ok_or_else(|| LedgerError::UnknownRequest(id.clone()))?;
                let mut next = req.clone();
                voting::record_vote(&mut next, vote.clone())?;
                self.voting_store.insert(id, next);
            }
            Transaction::CloseVote { request_id, status } => {
                let id = hex::encode(request_id);
                let req = self
                    .voting_store
                    .get_mut(&id)
                    .ok_or_else(|| LedgerError::UnknownRequest(id.clone()))?;
                if req.status != RequestStatus::Open {
                    return Err(VotingError::RequestClosed(req.status).into());
                }
                let consistent = match status {
                    RequestStatus::Passed => req.accepted_approvals() >= req.threshold as usize,
                    RequestStatus::Failed | RequestStatus::Expired => {
                        req.accepted_approvals() < req.threshold as usize
                    }
                    RequestStatus::Open => false,
                };
                if !consistent {
                    return Err(LedgerError::VoteGateFailed(format!(
                        "cannot close {id} as {status:?} with {} of {} approvals",
                        req.accepted_approvals(),
                        req.threshold
                    )));
                }
                req.status = *status;
            }
        }
        Ok(())
    }

    fn check_commit(
        &self,
        record: &CredentialRecord,
        issuer: Option<&IssuerRecord>,
    ) -> Result<(), LedgerError> {
        let expected = CredentialRecord::compute_id(
            &record.combined_digest,
            &record.sigma,
            &record.template_id,
            record.version,
        );
        if expected != record.record_id {
            return Err(LedgerError::CorruptLog(format!(
                "record id mismatch for {}",
                record.id_hex()
            )));
        }
        if self.credential_registry.contains_key(&record.id_hex()) {
            return Err(LedgerError::DuplicateRecord(record.id_hex()));
        }
        self.require_did(&record.committed_by)?;
        match (&record.gate, record.votes_required) {
            (None, 0) => {}
            (None, n) => {
                return Err(LedgerError::VoteGateFailed(format!(
                    "commit needs {n} votes but carries no gate"
                )));
            }
            (Some(gate), n) => {
                let id = hex::encode(gate);
                let req = self.voting_store.get(&id).ok_or_else(|| {
                    LedgerError::VoteGateFailed(format!("unknown voting request {id}"))
                })?;
                if self.consumed_gates.contains(&id) {
                    return Err(LedgerError::VoteGateFailed(format!(
                        "voting request {id} already used"
                    )));
                }
                if req.template_id != record.template_id || req.threshold < n {
                    return Err(LedgerError::VoteGateFailed(format!(
                        "voting request {id} does not cover this commit"
                    )));
                }
                if req.status != RequestStatus::Passed || req.accepted_approvals() < n as usize {
                    return Err(LedgerError::VoteGateFailed(format!(
                        "{} of {} approvals, status {:?}",
                        req.accepted_approvals(),
                        n,
                        req.status
                    )));
                }
            }
        }
        if let Some(issuer) = issuer {
            self.require_did(&issuer.did)?;
            if self.issuer_registry.contains_key(&issuer.did) {
                return Err(LedgerError::InvalidIssuer(format!(
                    "{} is already an issuer",
                    issuer.did
                )));
            }
            if issuer.level < 2 || issuer.onboarded_by.is_none() {
                return Err(LedgerError::InvalidIssuer(
                    "propagated issuers need level > 1 and an onboarding proxy".into(),
                ));
            }
            if issuer.template_ref.as_deref() != Some(record.id_hex().as_str()) {
                return Err(LedgerError::InvalidIssuer(
                    "issuer must reference the committing record".into(),
                ));
            }
        }
        Ok(())
    }

    /// Applies one log entry, checking its position in the chain.
    fn apply_entry(&mut self, entry: &LogEntry) -> Result<(), LedgerError> {
        if entry.seq != self.height {
            return Err(LedgerError::CorruptLog(format!(
                "expected seq {}, found {}",
                self.height, entry.seq
            )));
        }
        if entry.prev != self.head {
            return Err(LedgerError::CorruptLog(format!(
                "entry {} does not chain to its predecessor",
                entry.seq
            )));
        }
        let mut next = self.clone();
        next.apply(&entry.tx)
            .map_err(|e| LedgerError::CorruptLog(format!("entry {}: {e}", entry.seq)))?;
        next.height += 1;
        next.head = entry.hash();
        *self = next;
        Ok(())
    }
}

/// The live ledger: state, its log, and an optional append-only log file.
#[derive(Debug, Default)]
pub struct Ledger {
    state: LedgerState,
    log: Vec<LogEntry>,
    file: Option<File>,
    bytes_committed: u64,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) a log file, replays it, and appends to it from then on.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let entries = if path.exists() {
            read_log(path)?
        } else {
            Vec::new()
        };
        let mut ledger = replay(&entries)?;
        ledger.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(ledger)
    }

    /// Writes the full log to `path`, replacing it, and keeps appending there.
    pub fn persist_to(&mut self, path: impl AsRef<Path>) -> Result<(), LedgerError> {
        let mut f = File::create(path)?;
        for e in &self.log {
            f.write_all(&canonical_json(e))?;
            f.write_all(b"\n")?;
        }
        self.file = Some(f);
        Ok(())
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn height(&self) -> u64 {
        self.state.height
    }

    pub fn state_hash(&self) -> [u8; 32] {
        self.state.state_hash()
    }

    pub fn bytes_committed(&self) -> u64 {
        self.bytes_committed
    }

    /// The single commit point. Returns the sequence number of the new entry.
    pub fn submit(&mut self, tx: Transaction) -> Result<u64, LedgerError> {
        let mut next = self.state.clone();
        next.apply(&tx)?;
        let entry = LogEntry {
            seq: self.state.height,
            prev: self.state.head,
            tx,
        };
        let line = canonical_json(&entry);
        if let Some(f) = &mut self.file {
            f.write_all(&line)?;
            f.write_all(b"\n")?;
        }
        next.height += 1;
        next.head = entry.hash();
        self.bytes_committed += line.len() as u64 + 1;
        self.state = next;
        self.log.push(entry);
        Ok(self.state.height - 1)
    }

    pub fn register_did(&mut self, did: &str, ddo: Ddo) -> Result<u64, LedgerError> {
        self.submit(Transaction::RegisterDid {
            did: did.to_string(),
            ddo,
        })
    }

    pub fn commit_credential(
        &mut self,
        record: CredentialRecord,
        issuer: Option<IssuerRecord>,
    ) -> Result<u64, LedgerError> {
        self.submit(Transaction::CommitCredential { record, issuer })
    }

    pub fn lookup_issuer(&self, did: &str) -> Option<&IssuerRecord> {
        self.state.lookup_issuer(did)
    }
}

pub type SharedLedger = Arc<Mutex<Ledger>>;

/// Rebuilds a ledger by folding its log.
pub fn replay(entries: &[LogEntry]) -> Result<Ledger, LedgerError> {
    let mut state = LedgerState::default();
    let mut bytes = 0;
    for e in entries {
        state.apply_entry(e)?;
        bytes += canonical_json(e).len() as u64 + 1;
    }
    Ok(Ledger {
        state,
        log: entries.to_vec(),
        file: None,
        bytes_committed: bytes,
    })
}

/// Reads a line-delimited log. A trailing line without its newline is a torn
/// write and is dropped; any other unparsable line is corruption.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>, LedgerError> {
    let text = std::fs::read_to_string(path)?;
    parse_log(&text)
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LedgerError> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..i],
        None => "",
    };
    complete
        .split('\n')
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| LedgerError::CorruptLog(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ddo(b: u8) -> Ddo {
        Ddo {
            signing_key: [b; 32],
            encryption_key: [b; 32],
            service_endpoints: vec![],
        }
    }

    const HOS: &str = "did:example_hos:fcgfc2g823fcdd387";

    fn genesis() -> Ledger {
        let mut l = Ledger::new();
        l.register_did(HOS, ddo(1)).unwrap();
        l.submit(Transaction::SeedIssuer { did: HOS.into() })
            .unwrap();
        l
    }

    fn record(version: u64, votes: u32, gate: Option<[u8; 32]>) -> CredentialRecord {
        CredentialRecord::new(
            [9; 32],
            SignatureBytes(vec![1; 64]),
            "http://example.edu/credentials/1872",
            version,
            HOS,
            votes,
            gate,
        )
    }

    #[test]
    fn register_and_lookup() {
        let mut l = genesis();
        assert_eq!(l.state().lookup_did(HOS).unwrap().ddo, ddo(1));
        assert!(matches!(
            l.register_did(HOS, ddo(2)),
            Err(LedgerError::DuplicateDid(_))
        ));
        assert_eq!(l.height(), 2);
        let r = l.lookup_issuer(HOS).unwrap();
        assert_eq!(r.level, 1);
        assert!(r.onboarded_by.is_none());
        assert!(l.lookup_issuer("did:nobody:1").is_none());
    }

    #[test]
    fn ungated_commit_requires_zero_votes() {
        let mut l = genesis();
        l.commit_credential(record(1, 0, None), None).unwrap();
        assert!(matches!(
            l.commit_credential(record(1, 0, None), None),
            Err(LedgerError::DuplicateRecord(_))
        ));
        assert!(matches!(
            l.commit_credential(record(2, 5, None), None),
            Err(LedgerError::VoteGateFailed(_))
        ));
        assert!(matches!(
            l.commit_credential(record(3, 5, Some([4; 32])), None),
            Err(LedgerError::VoteGateFailed(_))
        ));
    }

    #[test]
    fn issuer_records_must_reference_their_commit() {
        let mut l = genesis();
        l.register_did("did:p:1", ddo(3)).unwrap();
        let rec = record(1, 0, None);
        let bad = IssuerRecord {
            did: "did:p:1".into(),
            level: 2,
            onboarded_by: Some("did:d:1".into()),
            template_ref: Some("00".into()),
            permissions: vec![],
            committed_at: None,
        };
        let h = l.state_hash();
        assert!(matches!(
            l.commit_credential(rec.clone(), Some(bad.clone())),
            Err(LedgerError::InvalidIssuer(_))
        ));
        assert_eq!(
            l.state_hash(),
            h,
            "failed commit must leave state untouched"
        );
        let good = IssuerRecord {
            template_ref: Some(rec.id_hex()),
            ..bad
        };
        l.commit_credential(rec, Some(good)).unwrap();
        assert_eq!(l.lookup_issuer("did:p:1").unwrap().level, 2);
    }

    #[test]
    fn genesis_closes_after_first_commit() {
        let mut l = genesis();
        l.register_did("did:x:1", ddo(5)).unwrap();
        l.commit_credential(record(1, 0, None), None).unwrap();
        assert!(matches!(
            l.submit(Transaction::SeedIssuer {
                did: "did:x:1".into()
            }),
            Err(LedgerError::NotGenesis)
        ));
    }

    #[test]
    fn replay_matches_live_state() {
        let mut l = genesis();
        l.commit_credential(record(1, 0, None), None).unwrap();
        let r = replay(l.log()).unwrap();
        assert_eq!(r.state_hash(), l.state_hash());
        assert_eq!(r.state(), l.state());
    }

    #[test]
    fn reordered_and_truncated_logs() {
        let mut l = genesis();
        l.register_did("did:x:1", ddo(5)).unwrap();
        let mut entries = l.log().to_vec();
        entries.swap(1, 2);
        assert!(matches!(replay(&entries), Err(LedgerError::CorruptLog(_))));

        let text: String = l
            .log()
            .iter()
            .map(|e| String::from_utf8(canonical_json(e)).unwrap() + "\n")
            .collect();
        let torn = &text[..text.len() - 10];
        let prefix = replay(&parse_log(torn).unwrap()).unwrap();
        assert_eq!(prefix.height(), 2);
        assert_eq!(
            prefix.state_hash(),
            replay(&l.log()[..2]).unwrap().state_hash()
        );

        let garbled = text.replacen("\"seq\":1", "\"seq\":x", 1);
        assert!(matches!(
            parse_log(&garbled),
            Err(LedgerError::CorruptLog(_))
        ));
    }

    #[test]
    fn file_persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.log");
        let hash = {
            let mut l = Ledger::open(&path).unwrap();
            l.register_did(HOS, ddo(1)).unwrap();
            l.submit(Transaction::SeedIssuer { did: HOS.into() })
                .unwrap();
            l.state_hash()
        };
        let mut l = Ledger::open(&path).unwrap();
        assert_eq!(l.state_hash(), hash);
        l.register_did("did:x:1", ddo(2)).unwrap();
        assert_eq!(Ledger::open(&path).unwrap().height(), 3);
    }
}
