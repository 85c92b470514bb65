//! Scripted multi-actor runs against a fresh ledger.
//!
//! A script is TOML. Actors are declared up front, genesis names the L1
//! issuers and the voting administrator, and steps run in order:
//!
//! ```toml
//! seed = 7
//! profile = "default"
//! clock = "2021-07-12T09:00:00Z"
//! template = "builtin:letter-of-authority"
//! attributes = ["doctor", "nurse", "patient", "relative", "HospitalA"]
//!
//! [genesis]
//! l1_issuers = ["hospital"]
//! admin = "admin"
//!
//! [[actors]]
//! name = "doctor"
//! did = "did:example_doctor:fcgfc2g823fcdd387"
//! kind = "trust-proxy"
//! role = "doctor"
//! organization = "HospitalA"
//!
//! [[voters.ward]]
//! voter = "nurse1"
//! vote = "approve"
//!
//! [[steps]]
//! action = "onboard"
//! actor = "doctor"
//! issuer = "patient"
//! permissions = ["delegate-medical-decision"]
//! voters = "ward"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chameleon::ParamProfile;
use crate::protocol::{
    Actor, ActorKind, Deployment, ManualClock, ProtocolError, ScriptedVoters, SealedTemplate,
    SecureEnvelope, VerificationReport,
};
use crate::template::{HOSPITAL_TEMPLATE, LISTING_TEMPLATE};
use crate::voting::VoteOption;

pub const HOSPITAL_SCENARIO: &str = include_str!("../../scenarios/hospital.scenario");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("script does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("script is invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Test,
    Default,
}

impl From<ProfileName> for ParamProfile {
    fn from(p: ProfileName) -> Self {
        match p {
            ProfileName::Test => ParamProfile::Test,
            ProfileName::Default => ParamProfile::Default,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorDecl {
    pub name: String,
    pub did: String,
    pub kind: ActorKind,
    pub role: Option<String>,
    pub organization: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genesis {
    pub l1_issuers: Vec<String>,
    pub admin: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedVote {
    Approve,
    Reject,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedBallot {
    pub voter: String,
    pub vote: ScriptedVote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Setup,
    Attest,
    SendKit,
    Onboard,
    Issue,
    Verify,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Setup => "setup",
            Action::Attest => "attest",
            Action::SendKit => "send-kit",
            Action::Onboard => "onboard",
            Action::Issue => "issue",
            Action::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub action: Action,
    pub actor: String,
    /// Clock reading for this step and everything after it.
    pub at: Option<DateTime<Utc>>,
    /// `attest`: the attribute authority. Defaults to the first L1 issuer.
    pub authority: Option<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    /// `send-kit`: recipient and section.
    pub to: Option<String>,
    pub section: Option<String>,
    /// `onboard`: the DID being onboarded.
    pub issuer: Option<String>,
    /// `issue`: the credential subject.
    pub holder: Option<String>,
    #[serde(default)]
    pub permissions: Vec<String>,
    /// Name of a voter script in `[voters]`.
    pub voters: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_profile")]
    pub profile: ProfileName,
    pub clock: DateTime<Utc>,
    pub template: String,
    pub attributes: Vec<String>,
    pub genesis: Option<Genesis>,
    /// Path of a genesis file, used when `[genesis]` is absent.
    pub genesis_file: Option<String>,
    pub actors: Vec<ActorDecl>,
    #[serde(default)]
    pub voters: BTreeMap<String, Vec<ScriptedBallot>>,
    pub steps: Vec<Step>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

fn default_profile() -> ProfileName {
    ProfileName::Default
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let script: Self = toml::from_str(text)?;
        script.check_names()?;
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let mut script = Self::parse(&read(path)?)?;
        script.base_dir = path.parent().map(Path::to_path_buf);
        Ok(script)
    }

    /// Replaces the genesis section with the contents of a genesis file.
    pub fn with_genesis_file(mut self, path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        self.genesis = Some(toml::from_str(&read(path.as_ref())?)?);
        self.check_names()?;
        Ok(self)
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        match &self.base_dir {
            Some(dir) => dir.join(rel),
            None => PathBuf::from(rel),
        }
    }

    fn genesis(&self) -> Result<Genesis, ScenarioError> {
        match (&self.genesis, &self.genesis_file) {
            (Some(g), _) => Ok(g.clone()),
            (None, Some(file)) => Ok(toml::from_str(&read(&self.resolve(file))?)?),
            (None, None) => Err(ScenarioError::Invalid(
                "no [genesis] and no genesis_file".into(),
            )),
        }
    }

    fn template_source(&self) -> Result<Vec<u8>, ScenarioError> {
        match self.template.as_str() {
            "builtin:letter-of-authority" => Ok(HOSPITAL_TEMPLATE.as_bytes().to_vec()),
            "builtin:listing" => Ok(LISTING_TEMPLATE.as_bytes().to_vec()),
            path => Ok(read(&self.resolve(path))?.into_bytes()),
        }
    }

    /// Every actor named by genesis, voter scripts and steps must be declared.
    fn check_names(&self) -> Result<(), ScenarioError> {
        let declared: Vec<&str> = self.actors.iter().map(|a| a.name.as_str()).collect();
        let need = |name: &str, place: &str| {
            if declared.contains(&name) {
                Ok(())
            } else {
                Err(ScenarioError::Invalid(format!(
                    "{place} names undeclared actor `{name}`"
                )))
            }
        };
        if let Some(g) = &self.genesis {
            for n in &g.l1_issuers {
                need(n, "genesis")?;
            }
            need(&g.admin, "genesis")?;
        }
        for (script, ballots) in &self.voters {
            for b in ballots {
                need(&b.voter, &format!("voter script `{script}`"))?;
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            let place = format!("step {} ({})", i + 1, s.action);
            need(&s.actor, &place)?;
            for n in [&s.authority, &s.to, &s.issuer, &s.holder]
                .into_iter()
                .flatten()
            {
                need(n, &place)?;
            }
            if let Some(v) = &s.voters {
                if !self.voters.contains_key(v) {
                    return Err(ScenarioError::Invalid(format!(
                        "{place} names unknown voter script `{v}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure {
    pub step: usize,
    pub action: Action,
    pub kind: String,
    pub message: String,
}

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at step {} ({}): {}",
            self.kind, self.step, self.action, self.message
        )
    }
}

pub struct ScenarioOutcome {
    pub transcript: Vec<String>,
    pub failure: Option<StepFailure>,
    pub reports: Vec<VerificationReport>,
    /// Stable σ check: the signature bytes after each template-changing step.
    pub sigmas: Vec<Vec<u8>>,
    pub deployment: Deployment,
    pub actors: BTreeMap<String, Actor>,
    pub latest: Option<SealedTemplate>,
}

impl ScenarioOutcome {
    /// True iff no step failed and the last verification passed.
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.reports.last().is_some_and(VerificationReport::passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

struct Runner<'s> {
    script: &'s ScenarioScript,
    genesis: Genesis,
    d: Deployment,
    clock: ManualClock,
    actors: BTreeMap<String, Actor>,
    dids: BTreeMap<String, String>,
    kits: BTreeMap<(String, String), SecureEnvelope>,
    latest: Option<SealedTemplate>,
    transcript: Vec<String>,
    reports: Vec<VerificationReport>,
    sigmas: Vec<Vec<u8>>,
}

#[derive(Debug)]
enum StepError {
    Protocol(ProtocolError),
    Script(String),
}

impl From<ProtocolError> for StepError {
    fn from(e: ProtocolError) -> Self {
        StepError::Protocol(e)
    }
}

impl StepError {
    fn kind(&self) -> &'static str {
        match self {
            StepError::Protocol(e) => e.kind(),
            StepError::Script(_) => "ScriptError",
        }
    }
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::Protocol(e) => e.fmt(f),
            StepError::Script(m) => f.write_str(m),
        }
    }
}

fn step_error(msg: impl Into<String>) -> StepError {
    StepError::Script(msg.into())
}

impl Runner<'_> {
    fn did(&self, name: &str) -> String {
        self.dids[name].clone()
    }

    fn working(&self) -> Result<SealedTemplate, StepError> {
        self.latest
            .clone()
            .ok_or_else(|| step_error("no sealed template yet; run setup first"))
    }
}

fn ballots<'a>(
    script: &ScenarioScript,
    actors: &'a BTreeMap<String, Actor>,
    name: Option<&str>,
) -> ScriptedVoters<'a> {
    let votes = name
        .and_then(|s| script.voters.get(s))
        .map(|ballots| {
            ballots
                .iter()
                .map(|b| {
                    let option = match b.vote {
                        ScriptedVote::Approve => VoteOption::Approve,
                        ScriptedVote::Reject => VoteOption::Reject,
                    };
                    (&actors[&b.voter], option)
                })
                .collect()
        })
        .unwrap_or_default();
    ScriptedVoters { votes }
}

impl Runner<'_> {
    fn record_template(&mut self, sealed: SealedTemplate) {
        self.sigmas.push(sealed.signature.sigma.0.clone());
        self.latest = Some(sealed);
    }

    fn run_step(&mut self, step: &Step) -> Result<String, StepError> {
        match step.action {
            Action::Setup => {
                let source = self
                    .script
                    .template_source()
                    .map_err(|e| step_error(e.to_string()))?;
                let names: Vec<&str> = self.script.attributes.iter().map(String::as_str).collect();
                let sealed = self
                    .d
                    .l1_setup(&self.actors[&step.actor], &names, &source)?;
                let line = format!(
                    "sealed template {} as record {}",
                    sealed.template().id(),
                    &sealed.record_id[..16]
                );
                self.record_template(sealed);
                Ok(line)
            }
            Action::Attest => {
                let authority = self.did(
                    step.authority
                        .as_ref()
                        .unwrap_or(&self.genesis.l1_issuers[0]),
                );
                let attrs: Vec<&str> = step.attributes.iter().map(String::as_str).collect();
                let mut actor = self.actors.remove(&step.actor).expect("declared");
                let result = self.d.attest(&authority, &mut actor, &attrs);
                self.actors.insert(step.actor.clone(), actor);
                result?;
                Ok(format!("attribute keys for {:?}", step.attributes))
            }
            Action::SendKit => {
                let to = step
                    .to
                    .as_deref()
                    .ok_or_else(|| step_error("send-kit needs `to`"))?;
                let section = step
                    .section
                    .as_deref()
                    .ok_or_else(|| step_error("send-kit needs `section`"))?;
                let working = self.working()?;
                let to_did = self.did(to);
                let env = self.d.send_update_kit(
                    &self.actors[&step.actor],
                    &to_did,
                    &working,
                    section,
                )?;
                self.kits.insert((to.to_string(), section.to_string()), env);
                Ok(format!("update kit for `{section}` sealed to {to}"))
            }
            Action::Onboard | Action::Issue => {
                let (section, subject) = match step.action {
                    Action::Onboard => (crate::template::TRUST_PROXY, step.issuer.as_deref()),
                    _ => (crate::template::CREDENTIAL, step.holder.as_deref()),
                };
                let subject =
                    subject.ok_or_else(|| step_error("step needs `issuer` or `holder`"))?;
                let env = self
                    .kits
                    .get(&(step.actor.clone(), section.to_string()))
                    .cloned()
                    .ok_or_else(|| {
                        step_error(format!("{} holds no kit for `{section}`", step.actor))
                    })?;
                let working = self.working()?;
                let perms: Vec<&str> = step.permissions.iter().map(String::as_str).collect();
                let subject_did = self.did(subject);
                let actor = self.actors[&step.actor].clone();
                let mut voters = ballots(self.script, &self.actors, step.voters.as_deref());
                let out = if step.action == Action::Onboard {
                    self.d.onboard_personal_issuer(
                        &actor,
                        &env,
                        &working,
                        &subject_did,
                        &perms,
                        &mut voters,
                    )?
                } else {
                    self.d.issue_credential(
                        &actor,
                        &env,
                        &working,
                        &subject_did,
                        &perms,
                        &mut voters,
                    )?
                };
                let votes = out
                    .tally
                    .as_ref()
                    .map(|t| {
                        format!(
                            "{}/{} approvals, {:?}; ",
                            t.approvals, t.threshold, t.status
                        )
                    })
                    .unwrap_or_default();
                let line = match step.action {
                    Action::Onboard => {
                        let level = self
                            .d
                            .ledger
                            .lookup_issuer(&subject_did)
                            .map_or(0, |r| r.level);
                        format!("{votes}{subject} registered as level-{level} issuer")
                    }
                    _ => format!("{votes}credential issued to {subject}"),
                };
                self.record_template(out.sealed);
                Ok(line)
            }
            Action::Verify => {
                let working = self.working()?;
                let report = self.d.verify_presentation(
                    &self.actors[&step.actor],
                    working.template(),
                    &working.signature,
                );
                let line = format!(
                    "{} (Verify_PCH = {}, {} checks)",
                    if report.passed() {
                        "presentation valid"
                    } else {
                        "presentation rejected"
                    },
                    report.pch_decision,
                    report.checks.len()
                );
                let failed: Vec<String> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| format!("{}: {}", c.name, c.detail))
                    .collect();
                self.reports.push(report);
                if failed.is_empty() {
                    Ok(line)
                } else {
                    Ok(format!("{line}; failed {}", failed.join("; ")))
                }
            }
        }
    }
}

/// Runs a script against a fresh in-memory ledger. With `ledger_path` the log
/// is also written to that file as it grows.
pub fn run(
    script: &ScenarioScript,
    seed_override: Option<u64>,
    ledger_path: Option<&Path>,
) -> Result<ScenarioOutcome, ScenarioError> {
    let genesis = script.genesis()?;
    let seed = seed_override.unwrap_or(script.seed);
    let mut d = Deployment::new(script.profile.into(), seed);
    if let Some(p) = ledger_path {
        d.ledger
            .persist_to(p)
            .map_err(|e| ScenarioError::Invalid(format!("ledger file: {e}")))?;
    }
    let clock = ManualClock::new(script.clock);
    d.set_clock(clock.clone());

    let mut transcript = vec![format!("scenario seed={seed} profile={:?}", script.profile)];
    let mut actors = BTreeMap::new();
    let mut dids = BTreeMap::new();
    for decl in &script.actors {
        let actor = d
            .new_actor(&decl.did, decl.kind)
            .map_err(|e| ScenarioError::Invalid(format!("actor {}: {e}", decl.name)))?;
        dids.insert(decl.name.clone(), decl.did.clone());
        actors.insert(decl.name.clone(), actor);
    }
    if let Some(n) = genesis
        .l1_issuers
        .iter()
        .chain([&genesis.admin])
        .find(|n| !actors.contains_key(*n))
    {
        return Err(ScenarioError::Invalid(format!(
            "genesis names undeclared actor `{n}`"
        )));
    }
    let l1: Vec<&Actor> = genesis.l1_issuers.iter().map(|n| &actors[n]).collect();
    if l1.is_empty() {
        return Err(ScenarioError::Invalid("genesis names no L1 issuer".into()));
    }
    d.genesis(&l1, &actors[&genesis.admin])
        .map_err(|e| ScenarioError::Invalid(format!("genesis: {e}")))?;
    transcript.push(format!(
        "genesis: L1 issuers {:?}, admin {}",
        genesis.l1_issuers, genesis.admin
    ));
    for decl in &script.actors {
        if let (Some(role), Some(org)) = (&decl.role, &decl.organization) {
            let admin = actors[&genesis.admin].clone();
            let mut subject = actors.remove(&decl.name).expect("declared");
            d.issue_role_credential(&admin, &mut subject, role, org)
                .map_err(|e| {
                    ScenarioError::Invalid(format!("role credential for {}: {e}", decl.name))
                })?;
            actors.insert(decl.name.clone(), subject);
        }
    }

    let mut runner = Runner {
        script,
        genesis,
        d,
        clock,
        actors,
        dids,
        kits: BTreeMap::new(),
        latest: None,
        transcript,
        reports: Vec::new(),
        sigmas: Vec::new(),
    };
    let mut failure = None;
    for (i, step) in script.steps.iter().enumerate() {
        if let Some(at) = step.at {
            runner.clock.set(at);
        }
        match runner.run_step(step) {
            Ok(line) => runner.transcript.push(format!(
                "step {} {} {}: {line}",
                i + 1,
                step.action,
                step.actor
            )),
            Err(e) => {
                let f = StepFailure {
                    step: i + 1,
                    action: step.action,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                };
                runner.transcript.push(format!(
                    "step {} {} {}: FAILED {f}",
                    i + 1,
                    step.action,
                    step.actor
                ));
                failure = Some(f);
                break;
            }
        }
    }
    if let (None, Some(r)) = (&failure, runner.reports.last()) {
        runner.transcript.push(r.to_string());
    }
    runner.transcript.push(format!(
        "ledger height {} state hash {}",
        runner.d.ledger.height(),
        hex::encode(runner.d.ledger.state_hash())
    ));
    Ok(ScenarioOutcome {
        transcript: runner.transcript,
        failure,
        reports: runner.reports,
        sigmas: runner.sigmas,
        deployment: runner.d,
        actors: runner.actors,
        latest: runner.latest,
    })
}
