//! Timing sweeps: sanitizable-signature operations against attribute count,
//! voting cost against voter count, and concurrent commits against the ledger.
//! Results are written as CSV with fixed headers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abe::{self, AbeError, AccessPolicy};
use crate::chameleon::{GroupParams, ParamProfile};
use crate::cli::scenario::ProfileName;
use crate::keys::{KeyBundle, VerifyingKey};
use crate::ledger::{Ddo, Ledger, SharedLedger};
use crate::pss::{self, PssError, Signer};
use crate::template::{TemplateError, TrustPropagationTemplate, HOSPITAL_TEMPLATE, TRUST_PROXY};
use crate::voting::{self, PendingUpdate, VoteOption, VotingContract};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot write results: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error(transparent)]
    Pss(#[from] PssError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_attribute_counts")]
    pub attribute_counts: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs_per_point: usize,
    #[serde(default = "default_voter_counts")]
    pub voter_counts: Vec<usize>,
    #[serde(default = "default_voter_runs")]
    pub voter_runs: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency_levels: Vec<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_profile")]
    pub profile: ProfileName,
    #[serde(default)]
    pub seed: u64,
}

fn default_attribute_counts() -> Vec<usize> {
    vec![8, 16, 24, 32]
}
fn default_runs() -> usize {
    100
}
fn default_voter_counts() -> Vec<usize> {
    (5..=50).step_by(5).collect()
}
fn default_voter_runs() -> usize {
    20
}
fn default_concurrency() -> Vec<usize> {
    (50..=500).step_by(50).collect()
}
fn default_output() -> PathBuf {
    PathBuf::from("bench-out")
}
fn default_profile() -> ProfileName {
    ProfileName::Default
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl BenchmarkConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut c = Self::parse(&text)?;
        if c.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                c.output_dir = dir.join(&c.output_dir);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = |name: &str, xs: &[usize]| {
            if xs.contains(&0) {
                Err(BenchError::Invalid(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        positive("attribute_counts", &self.attribute_counts)?;
        positive("voter_counts", &self.voter_counts)?;
        positive("concurrency_levels", &self.concurrency_levels)?;
        if self.runs_per_point == 0 || self.voter_runs == 0 {
            return Err(BenchError::Invalid("run counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PchOp {
    #[serde(rename = "hash_pch")]
    Hash,
    #[serde(rename = "update_pch")]
    Update,
    #[serde(rename = "verify_pch")]
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpTiming {
    pub n_attributes: usize,
    pub op: PchOp,
    pub mean_s: f64,
    pub stddev_s: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingCost {
    pub n_voters: usize,
    pub admin_s: f64,
    pub per_voter_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub concurrency: usize,
    pub mean_response_s: f64,
    pub commits_per_s: f64,
}

/// Ledger bytes committed per second. Kept apart from the load table because
/// it measures this ledger's log, not a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerThroughput {
    pub concurrency: usize,
    pub ledger_bytes_per_s: f64,
}

fn mean_stddev(samples: &[Duration]) -> (f64, f64) {
    let xs: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(samples: &mut [Duration]) -> f64 {
    samples.sort_unstable();
    let mid = samples.len() / 2;
    if samples.len().is_multiple_of(2) {
        (samples[mid - 1] + samples[mid]).as_secs_f64() / 2.0
    } else {
        samples[mid].as_secs_f64()
    }
}

/// The letter-of-authority template with its two access policies spread over
/// `names`: the first half guards the trust-proxy section, the rest the
/// credential section.
pub fn template_with_attributes(names: &[String]) -> Result<TrustPropagationTemplate, BenchError> {
    let base = TrustPropagationTemplate::parse(HOSPITAL_TEMPLATE.as_bytes())?;
    let split = (names.len() / 2).max(1);
    let mut policy = base.update_policy().clone();
    policy.policy.proxy_attributes = AccessPolicy::new(&names[..split])?;
    policy.policy.next_level_issuer_attrs = AccessPolicy::new(if split < names.len() {
        &names[split..]
    } else {
        names
    })?;
    Ok(TrustPropagationTemplate::new(
        policy,
        &base.trust_proxy()?,
        &base.credential()?,
    )?)
}

pub fn attribute_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("attr{i:02}")).collect()
}

/// Times Hash_PCH, Update_PCH (trust-proxy section) and Verify_PCH, `runs`
/// times each, for every attribute count.
pub fn pch_sweep(
    group: &GroupParams,
    counts: &[usize],
    runs: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<OpTiming>, BenchError> {
    let signer_keys = KeyBundle::generate(rng);
    let updater_keys = KeyBundle::generate(rng);
    let signer = Signer {
        did: "did:example_hos:fcgfc2g823fcdd387",
        key: &signer_keys.signing,
    };
    let updater = Signer {
        did: "did:example_doctor:fcgfc2g823fcdd387",
        key: &updater_keys.signing,
    };
    let signer_pub = signer_keys.verifying_key();
    let new_content = br#"{"TrustProxy":"did:example_doctor:fcgfc2g823fcdd387","nextLevelIssuerDetails":{"id":"did:example_patient:fcgfc2g823fcdd387","permissions":["delegate-medical-decision"]}}"#;

    let mut out = Vec::new();
    for &n in counts {
        let names = attribute_names(n);
        let template = template_with_attributes(&names)?;
        let universe = abe::setup(group, &names, rng)?;
        let proxy_attrs = template
            .update_policy()
            .policy
            .proxy_attributes
            .attributes()
            .to_vec();
        let key = abe::keygen(&universe, updater.did, &proxy_attrs)?;

        let (mut hash_t, mut update_t, mut verify_t) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..runs {
            let t0 = Instant::now();
            let sig = pss::hash_pch(&template, universe.public(), signer, rng)?;
            hash_t.push(t0.elapsed());

            let t0 = Instant::now();
            let (updated, next) =
                pss::update_pch(&template, &sig, TRUST_PROXY, new_content, &key, updater)?;
            update_t.push(t0.elapsed());

            let t0 = Instant::now();
            let v = pss::verify_pch(&updated, &next, &signer_pub);
            verify_t.push(t0.elapsed());
            assert!(
                v.is_valid(),
                "benchmark produced an invalid signature: {:?}",
                v.reasons
            );
        }
        for (op, samples) in [
            (PchOp::Hash, hash_t),
            (PchOp::Update, update_t),
            (PchOp::Verify, verify_t),
        ] {
            let (mean_s, stddev_s) = mean_stddev(&samples);
            out.push(OpTiming {
                n_attributes: n,
                op,
                mean_s,
                stddev_s,
                runs,
            });
        }
    }
    Ok(out)
}

/// Voter cost is the median time to prepare one ballot. Administrator cost is
/// the median, over runs, of the time to open the request, evaluate and record
/// every ballot, and settle the tally.
pub fn voting_sweep(counts: &[usize], runs: usize, rng: &mut ChaCha20Rng) -> Vec<VotingCost> {
    let base = TrustPropagationTemplate::parse(HOSPITAL_TEMPLATE.as_bytes())
        .expect("bundled template parses");
    let admin = KeyBundle::generate(rng);
    let contract = VotingContract::new("did:example_admin:bench", admin.verifying_key(), rng);
    let update = PendingUpdate {
        section_id: TRUST_PROXY.into(),
        new_content_digest: [7; 32],
        updater_did: "did:example_doctor:fcgfc2g823fcdd387".into(),
    };
    let now = base.update_policy().issuance_date;

    let mut out = Vec::new();
    for &n in counts {
        let mut policy = base.update_policy().clone();
        policy.num_votes_required = n as u32;
        let voters: Vec<(KeyBundle, voting::RoleCredential)> = (0..n)
            .map(|i| {
                let k = KeyBundle::generate(rng);
                let role = if i % 2 == 0 { "nurse" } else { "doctor" };
                let did = format!("did:example_staff:{i:03}");
                let cred = contract
                    .issue_role_credential(&admin.signing, &did, role, "HospitalA")
                    .expect("admin key matches");
                (k, cred)
            })
            .collect();
        let directory: BTreeMap<String, VerifyingKey> = voters
            .iter()
            .map(|(k, c)| (c.subject_did.clone(), k.verifying_key()))
            .collect();

        let (mut admin_t, mut voter_t) = (Vec::new(), Vec::new());
        for run in 0..runs {
            let mut update = update.clone();
            update.new_content_digest[0] = run as u8;
            let t0 = Instant::now();
            let mut req = contract
                .open_request(base.id(), update, &policy)
                .expect("voting is required");
            let mut admin_elapsed = t0.elapsed();

            for (k, cred) in &voters {
                let t0 = Instant::now();
                let ballot =
                    voting::prepare_ballot(&req, cred, VoteOption::Approve, &k.signing, rng);
                voter_t.push(t0.elapsed());

                let t0 = Instant::now();
                let record = contract
                    .evaluate_ballot(&req, &ballot, |did| directory.get(did).copied())
                    .expect("ballot evaluates");
                voting::record_vote(&mut req, record).expect("vote records");
                admin_elapsed += t0.elapsed();
            }
            let t0 = Instant::now();
            let status = voting::tally(&req, now);
            admin_elapsed += t0.elapsed();
            assert_eq!(status, voting::RequestStatus::Passed);
            admin_t.push(admin_elapsed);
        }
        out.push(VotingCost {
            n_voters: n,
            admin_s: median(&mut admin_t),
            per_voter_s: median(&mut voter_t),
        });
    }
    out
}

/// `c` client threads each register a DID through the shared ledger at once.
pub fn load_sweep(levels: &[usize], seed: u64) -> (Vec<LoadPoint>, Vec<LedgerThroughput>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut load, mut bytes) = (Vec::new(), Vec::new());
    for &c in levels {
        let ledger: SharedLedger = Arc::new(Mutex::new(Ledger::new()));
        let clients: Vec<(String, Ddo)> = (0..c)
            .map(|i| {
                let k = KeyBundle::generate(&mut rng);
                let ddo = Ddo {
                    signing_key: k.verifying_key().to_bytes(),
                    encryption_key: *k.box_public().as_bytes(),
                    service_endpoints: Vec::new(),
                };
                (format!("did:example_client:{i:04}"), ddo)
            })
            .collect();
        let barrier = Barrier::new(c + 1);
        let (responses, wall) = std::thread::scope(|scope| {
            let handles: Vec<_> = clients
                .into_iter()
                .map(|(did, ddo)| {
                    let ledger = Arc::clone(&ledger);
                    let barrier = &barrier;
                    scope.spawn(move || {
                        barrier.wait();
                        let t0 = Instant::now();
                        ledger
                            .lock()
                            .expect("ledger lock")
                            .register_did(&did, ddo)
                            .expect("fresh DID registers");
                        t0.elapsed()
                    })
                })
                .collect();
            barrier.wait();
            let t0 = Instant::now();
            let responses: Vec<Duration> = handles
                .into_iter()
                .map(|h| h.join().expect("client thread"))
                .collect();
            (responses, t0.elapsed())
        });
        let ledger = ledger.lock().expect("ledger lock");
        let wall_s = wall.as_secs_f64().max(f64::EPSILON);
        load.push(LoadPoint {
            concurrency: c,
            mean_response_s: mean_stddev(&responses).0,
            commits_per_s: ledger.height() as f64 / wall_s,
        });
        bytes.push(LedgerThroughput {
            concurrency: c,
            ledger_bytes_per_s: ledger.bytes_committed() as f64 / wall_s,
        });
    }
    (load, bytes)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub struct BenchResults {
    pub pch: Vec<OpTiming>,
    pub voting: Vec<VotingCost>,
    pub load: Vec<LoadPoint>,
    pub throughput: Vec<LedgerThroughput>,
    pub files: Vec<PathBuf>,
}

pub const PCH_CSV: &str = "pch_timing.csv";
pub const VOTING_CSV: &str = "voting_cost.csv";
pub const LOAD_CSV: &str = "load.csv";
pub const THROUGHPUT_CSV: &str = "ledger_throughput.csv";

/// Runs all three sweeps and writes one CSV per table into `output_dir`.
pub fn run(config: &BenchmarkConfig) -> Result<BenchResults, BenchError> {
    config.validate()?;
    let group = GroupParams::profile(ParamProfile::from(config.profile));
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let pch = pch_sweep(
        &group,
        &config.attribute_counts,
        config.runs_per_point,
        &mut rng,
    )?;
    let voting = voting_sweep(&config.voter_counts, config.voter_runs, &mut rng);
    let (load, throughput) = load_sweep(&config.concurrency_levels, config.seed);

    std::fs::create_dir_all(&config.output_dir).map_err(|source| BenchError::Io {
        path: config.output_dir.clone(),
        source,
    })?;
    let files: Vec<PathBuf> = [PCH_CSV, VOTING_CSV, LOAD_CSV, THROUGHPUT_CSV]
        .iter()
        .map(|f| config.output_dir.join(f))
        .collect();
    write_csv(&files[0], &pch)?;
    write_csv(&files[1], &voting)?;
    write_csv(&files[2], &load)?;
    write_csv(&files[3], &throughput)?;
    Ok(BenchResults {
        pch,
        voting,
        load,
        throughput,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_stddev() {
        let d = |ms| Duration::from_millis(ms);
        let (m, s) = mean_stddev(&[d(1), d(2), d(3), d(4)]);
        assert!((m - 0.0025).abs() < 1e-12);
        // sqrt(((1.5)^2 + 0.5^2 + 0.5^2 + 1.5^2) / 3) ms
        assert!((s - (5.0f64 / 3.0).sqrt() / 1000.0).abs() < 1e-12);
        assert_eq!(mean_stddev(&[d(5)]).1, 0.0);
        assert_eq!(median(&mut [d(9), d(1), d(4)]), 0.004);
        assert_eq!(median(&mut [d(9), d(1), d(4), d(2)]), 0.003);
    }

    #[test]
    fn template_policies_split_the_attributes() {
        let t = template_with_attributes(&attribute_names(8)).unwrap();
        let p = &t.update_policy().policy;
        assert_eq!(p.proxy_attributes.attributes().len(), 4);
        assert_eq!(p.next_level_issuer_attrs.attributes()[0], "attr04");
        let t = template_with_attributes(&attribute_names(1)).unwrap();
        assert_eq!(
            t.update_policy()
                .policy
                .next_level_issuer_attrs
                .attributes(),
            ["attr00"]
        );
    }

    #[test]
    fn single_point_config_writes_fixed_headers() {
        let dir = tempfile::tempdir().unwrap();
        let config = BenchmarkConfig {
            attribute_counts: vec![4],
            runs_per_point: 2,
            voter_counts: vec![5],
            voter_runs: 1,
            concurrency_levels: vec![3],
            output_dir: dir.path().to_path_buf(),
            profile: ProfileName::Test,
            seed: 1,
        };
        let r = run(&config).unwrap();
        let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
        let pch = read(PCH_CSV);
        assert_eq!(
            pch.lines().next(),
            Some("n_attributes,op,mean_s,stddev_s,runs")
        );
        assert_eq!(pch.lines().count(), 4);
        assert!(pch.contains(",hash_pch,"));
        assert_eq!(
            read(VOTING_CSV).lines().next(),
            Some("n_voters,admin_s,per_voter_s")
        );
        assert_eq!(
            read(LOAD_CSV).lines().next(),
            Some("concurrency,mean_response_s,commits_per_s")
        );
        assert_eq!(
            read(THROUGHPUT_CSV).lines().next(),
            Some("concurrency,ledger_bytes_per_s")
        );
        assert_eq!(r.load[0].concurrency, 3);
    }

    #[test]
    fn zero_counts_are_rejected() {
        assert!(BenchmarkConfig::parse("attribute_counts = [8, 0]").is_err());
        let c = BenchmarkConfig::parse("").unwrap();
        assert_eq!(c.attribute_counts, [8, 16, 24, 32]);
        assert_eq!(c.voter_counts.len(), 10);
        assert_eq!(c.concurrency_levels.last(), Some(&500));
    }
}
