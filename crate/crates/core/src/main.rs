use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vctp::cli::{attack, bench, registry, scenario};
use vctp::protocol::ActorKind;

#[derive(Parser)]
#[command(
    name = "vctp",
    version,
    about = "Vote-gated trust propagation for self-sovereign identity"
)]
struct Cli {
    /// Ledger log file. Scenarios write to it; registry commands read it.
    #[arg(long, global = true)]
    ledger: Option<PathBuf>,
    /// Genesis file naming the L1 issuers and the voting administrator.
    #[arg(long, global = true)]
    genesis: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario script against a fresh ledger.
    Scenario {
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an adversarial scenario and report whether each defense held.
    Attack {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        scenario: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the timing sweeps in a benchmark config and write CSVs.
    Bench { config: PathBuf },
    /// Inspect or administer the ledger given by --ledger.
    Registry {
        #[command(subcommand)]
        command: RegistryCommand,
    },
}

#[derive(Subcommand)]
enum RegistryCommand {
    /// Generate keys for a DID, register it, and write its keystore.
    DidRegister {
        did: String,
        #[arg(long, default_value = "holder")]
        kind: String,
        /// Where to write the keystore JSON. Defaults to stdout.
        #[arg(long)]
        keystore: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List registered issuers with their level
    IssuerList,
    /// Print a credential record by id (exit 2 if absent)
    CredentialShow { record_id: String },
    /// Print the hash of the replayed registry state
    StateHash,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Scenario { file, seed } => {
            let script = match scenario::ScenarioScript::load(&file) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let script = match &cli.genesis {
                Some(g) => match script.with_genesis_file(g) {
                    Ok(s) => s,
                    Err(e) => return fail(e),
                },
                None => script,
            };
            match scenario::run(&script, seed, cli.ledger.as_deref()) {
                Ok(out) => {
                    for line in &out.transcript {
                        println!("{line}");
                    }
                    if let Some(f) = &out.failure {
                        eprintln!("{f}");
                    }
                    ExitCode::from(out.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Attack { scenario, seed } => match attack::run(scenario, seed) {
            Ok(report) => {
                println!("{report}");
                ExitCode::from(report.exit_code() as u8)
            }
            Err(e) => fail(format!("attack setup failed: {e}")),
        },
        Command::Bench { config } => {
            let config = match bench::BenchmarkConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match bench::run(&config) {
                Ok(r) => {
                    for t in &r.pch {
                        println!(
                            "{:>3} attributes {:?}: mean {:.6}s sd {:.6}s",
                            t.n_attributes, t.op, t.mean_s, t.stddev_s
                        );
                    }
                    for f in &r.files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Registry { command } => {
            let Some(ledger) = cli.ledger else {
                return fail("registry commands need --ledger <path>");
            };
            match command {
                RegistryCommand::DidRegister {
                    did,
                    kind,
                    keystore,
                    seed,
                } => {
                    let kind: ActorKind =
                        match serde_json::from_value(serde_json::Value::String(kind.clone())) {
                            Ok(k) => k,
                            Err(_) => return fail(format!("unknown actor kind `{kind}`")),
                        };
                    match registry::did_register(&ledger, &did, kind, seed) {
                        Ok(actor) => {
                            let json = serde_json::to_string_pretty(&actor.to_keystore())
                                .expect("keystore serializes");
                            match keystore {
                                Some(path) => {
                                    if let Err(e) = std::fs::write(&path, json) {
                                        return fail(e);
                                    }
                                    println!("registered {did}; keystore at {}", path.display());
                                }
                                None => println!("{json}"),
                            }
                            ExitCode::SUCCESS
                        }
                        Err(e) => fail(e),
                    }
                }
                RegistryCommand::IssuerList => match registry::issuer_list(&ledger) {
                    Ok(lines) => {
                        for l in lines {
                            println!("{l}");
                        }
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(e),
                },
                RegistryCommand::CredentialShow { record_id } => {
                    match registry::credential_show(&ledger, &record_id) {
                        Ok(Some(json)) => {
                            println!("{json}");
                            ExitCode::SUCCESS
                        }
                        Ok(None) => {
                            eprintln!("no credential record {record_id}");
                            ExitCode::from(2)
                        }
                        Err(e) => fail(e),
                    }
                }
                RegistryCommand::StateHash => match registry::state_hash(&ledger) {
                    Ok(h) => {
                        println!("{h}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(e),
                },
            }
        }
    }
}
