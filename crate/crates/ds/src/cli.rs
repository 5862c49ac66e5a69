//! The `ds` command line.
//!
//! Exit codes: 0 success, 2 policy rejection, 3 execution failure (or a
//! broken audit chain), 4 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use ds_core::canonical::to_canonical_bytes;
use ds_core::catalog::{browse, AssetKind, EncodingMode, OfferDocument};
use ds_core::identity::{issue_credential, AttributeSet, Credential, ParticipantId, Role, VerifyKey};
use ds_core::mpc::{MpcParams, ValueKind};
use ds_core::orchestrator::{
    verify_audit_jsonl, AuditVerdict, ContractProposal, DataSpace, Negotiation, ParameterFingerprint,
};

use crate::files::{read_json, transcript_jsonl, write_json};
use crate::scenario::{run_scenario, Options, Scenario};
use crate::state::StateDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_FAILED: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "ds", version, about = "Privacy-preserving computation in a simulated data space")]
struct Cli {
    /// State directory.
    #[arg(long, global = true, default_value = "ds-state")]
    dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a new data space.
    Init {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = MpcParams::DEFAULT_BIT_WIDTH)]
        bit_width: u32,
        /// Trust anchor to create alongside the data space.
        #[arg(long, default_value = "anchor")]
        anchor: String,
    },
    /// Issue a credential from a local trust anchor to a new participant.
    Issue(IssueArgs),
    /// Onboard a participant from a credential file.
    Onboard {
        #[arg(long)]
        credential: PathBuf,
    },
    /// Publish an offer file.
    Publish {
        #[arg(long)]
        offer: PathBuf,
        /// Sign with the owner's local key (fills an empty node encryption key).
        #[arg(long)]
        sign: bool,
    },
    /// List live offers.
    Browse {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// attr=value, repeatable.
        #[arg(long = "filter", value_parser = parse_filter)]
        filters: Vec<(String, String)>,
    },
    /// Install the data custodian.
    Custodian {
        #[arg(long)]
        participant: String,
    },
    /// Install the key-holding committee.
    Committee {
        #[arg(long = "participant", required = true)]
        participants: Vec<String>,
    },
    /// Store an input at the custodian and print its handle id.
    Store(StoreArgs),
    /// Record the value a synchronous dataset will contribute.
    Hold {
        #[arg(long)]
        offer: String,
        #[arg(long)]
        value: u64,
    },
    /// Submit a contract proposal for negotiation.
    Request {
        #[arg(long)]
        proposal: PathBuf,
    },
    /// Run a signed contract.
    Run {
        #[arg(long)]
        contract: String,
    },
    /// Audit log tools.
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
    /// Run a reference scenario end to end.
    Scenario {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report directory (default: report-<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// uc3: number of clinics taking part (1 to 5).
        #[arg(long)]
        contributors: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum AuditCommand {
    /// Verify a JSON Lines audit log.
    Verify {
        /// Log file (default: the state directory's log).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Orchestrator verify key, base64 (default: from the state directory).
        #[arg(long)]
        key: Option<String>,
    },
}

#[derive(Args, Debug)]
struct IssueArgs {
    #[arg(long, default_value = "anchor")]
    anchor: String,
    #[arg(long)]
    entity: String,
    #[arg(long)]
    country: String,
    #[arg(long, default_value = "default")]
    trust_zone: String,
    #[arg(long = "role", value_enum, required = true)]
    roles: Vec<RoleArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StoreArgs {
    #[arg(long)]
    owner: String,
    #[arg(long)]
    value: u64,
    #[arg(long, value_enum, default_value = "field-element")]
    kind: ValueKindArg,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// IMMEDIATE: node offers to encode for, in node order.
    #[arg(long = "node")]
    nodes: Vec<String>,
    /// IMMEDIATE: privacy threshold.
    #[arg(long, default_value_t = 1)]
    t: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Dataset,
    Node,
    Function,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    DataProvider,
    ComputeProvider,
    FunctionProvider,
    Consumer,
    Custodian,
    Committee,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ValueKindArg {
    FieldElement,
    Bits16,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Immediate,
    Late,
}

fn parse_filter(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((a, v)) if !a.is_empty() => Ok((a.to_string(), v.to_string())),
        _ => Err(format!("expected attr=value, got {s:?}")),
    }
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::DataProvider => Role::DataProvider,
            RoleArg::ComputeProvider => Role::ComputeProvider,
            RoleArg::FunctionProvider => Role::FunctionProvider,
            RoleArg::Consumer => Role::Consumer,
            RoleArg::Custodian => Role::Custodian,
            RoleArg::Committee => Role::Committee,
        }
    }
}

/// How a command ended, other than success.
#[derive(Debug)]
enum Exit {
    Usage(String),
    Rejected(String),
    Failed(String),
}

impl Exit {
    fn code(&self) -> i32 {
        match self {
            Exit::Usage(_) => EXIT_USAGE,
            Exit::Rejected(_) => EXIT_REJECTED,
            Exit::Failed(_) => EXIT_FAILED,
        }
    }

    fn message(&self) -> &str {
        match self {
            Exit::Usage(m) | Exit::Rejected(m) | Exit::Failed(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Exit {
    Exit::Usage(e.to_string())
}

/// Seed from `DS_SEED` if set, otherwise the flag.
fn seed(flag: u64) -> Result<u64, Exit> {
    match std::env::var("DS_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("DS_SEED is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(flag),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "ds: {}", e.message());
            e.code()
        }
    }
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), Exit> {
    writeln!(out, "{line}").map_err(usage)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Exit> {
    let state = StateDir::new(&cli.dir);
    match cli.command {
        Command::Init { seed: flag, bit_width, anchor } => {
            let seed = seed(flag)?;
            let fp = ParameterFingerprint::standard(bit_width);
            MpcParams::new(1, 3).with_bit_width(bit_width).validate().map_err(usage)?;
            let mut ds = DataSpace::new(seed, fp);
            ds.create_anchor(&anchor);
            state.create(&ds).map_err(usage)?;
            emit(out, format!("orchestrator {}", ds.orchestrator_id()))?;
            emit(out, format!("orchestrator_key {}", key_text(&ds.orchestrator_key())))
        }
        Command::Issue(a) => {
            let mut ds = state.load().map_err(usage)?;
            let anchor = ds.anchor_key(&a.anchor).cloned().ok_or_else(|| usage(format!("no local trust anchor {:?}", a.anchor)))?;
            let roles: Vec<Role> = a.roles.iter().map(|&r| r.into()).collect();
            let attrs = AttributeSet::new(&a.entity, &a.country, &a.trust_zone, &roles);
            let key = ds.new_participant_key();
            let credential = issue_credential(&anchor, &a.anchor, key.verify_key(), attrs, ds.clock).map_err(usage)?;
            write_json(&a.out, &credential).map_err(usage)?;
            state.save(&ds).map_err(usage)?;
            emit(out, credential.participant_id())
        }
        Command::Onboard { credential } => {
            let mut ds = state.load().map_err(usage)?;
            let c: Credential = read_json(&credential).map_err(usage)?;
            let id = ds.onboard(&c).map_err(|e| Exit::Rejected(e.to_string()))?;
            state.save(&ds).map_err(usage)?;
            emit(out, id)
        }
        Command::Publish { offer, sign } => {
            let mut ds = state.load().map_err(usage)?;
            let doc = load_offer(&mut ds, &offer, sign)?;
            let id = ds.publish(doc).map_err(|e| Exit::Rejected(e.to_string()))?;
            state.save(&ds).map_err(usage)?;
            emit(out, id)
        }
        Command::Browse { kind, filters } => {
            let ds = state.load().map_err(usage)?;
            let kind = kind.map(|k| match k {
                KindArg::Dataset => AssetKind::Dataset,
                KindArg::Node => AssetKind::Node,
                KindArg::Function => AssetKind::Function,
            });
            let filter: BTreeMap<String, String> = filters.into_iter().collect();
            for offer in browse(&ds.catalog, &filter, kind, ds.clock) {
                emit(out, String::from_utf8_lossy(&to_canonical_bytes(offer)))?;
            }
            Ok(())
        }
        Command::Custodian { participant } => {
            let mut ds = state.load().map_err(usage)?;
            ds.set_custodian(ParticipantId(participant)).map_err(usage)?;
            state.save(&ds).map_err(usage)?;
            emit(out, ds.custodian.as_ref().map(|c| c.public_key()).unwrap_or_default())
        }
        Command::Committee { participants } => {
            let mut ds = state.load().map_err(usage)?;
            ds.set_committee(participants.into_iter().map(ParticipantId).collect()).map_err(usage)?;
            state.save(&ds).map_err(usage)
        }
        Command::Store(a) => {
            let mut ds = state.load().map_err(usage)?;
            let kind = match a.kind {
                ValueKindArg::FieldElement => ValueKind::FieldElement,
                ValueKindArg::Bits16 => ValueKind::Bits16,
            };
            let (mode, immediate) = match a.mode {
                ModeArg::Late => (EncodingMode::Late, None),
                ModeArg::Immediate => {
                    let params = MpcParams::new(a.t, a.nodes.len()).with_modulus(ds.fingerprint.modulus).with_bit_width(ds.fingerprint.bit_width);
                    (EncodingMode::Immediate, Some((params, a.nodes)))
                }
            };
            let handle = ds.store(&ParticipantId(a.owner), a.value, kind, mode, immediate).map_err(usage)?;
            state.save(&ds).map_err(usage)?;
            emit(out, handle)
        }
        Command::Hold { offer, value } => {
            let mut ds = state.load().map_err(usage)?;
            if ds.catalog.live(&offer).and_then(|o| o.dataset()).is_none() {
                return Err(usage(format!("no live dataset offer {offer}")));
            }
            ds.hold_input(&offer, value);
            state.save(&ds).map_err(usage)
        }
        Command::Request { proposal } => {
            let mut ds = state.load().map_err(usage)?;
            let p: ContractProposal = read_json(&proposal).map_err(usage)?;
            let outcome = ds.propose(&p);
            // A rejection leaves the state untouched apart from RNG use.
            state.save(&ds).map_err(usage)?;
            match outcome {
                Ok(Negotiation::Signed(c)) => emit(out, c.contract_id),
                Ok(Negotiation::Rejected(r)) => {
                    emit(out, String::from_utf8_lossy(&to_canonical_bytes(&r)))?;
                    let codes: Vec<String> = r.codes().iter().map(|c| c.to_string()).collect();
                    Err(Exit::Rejected(format!("rejected: {}", codes.join(","))))
                }
                Err(e) => Err(Exit::Rejected(format!("{}: {e}", e.code()))),
            }
        }
        Command::Run { contract } => {
            let mut ds = state.load().map_err(usage)?;
            if ds.contract(&contract).is_none() {
                return Err(usage(format!("unknown contract {contract}")));
            }
            let outcome = ds.run_transaction(&contract);
            state.save(&ds).map_err(usage)?;
            match outcome {
                Ok(r) => {
                    let transcript = state.path("transcripts").join(format!("{contract}.jsonl"));
                    fs::create_dir_all(state.path("transcripts")).map_err(usage)?;
                    fs::write(&transcript, transcript_jsonl(&r.transcript)).map_err(usage)?;
                    let summary = serde_json::json!({
                        "contract_id": r.contract_id,
                        "outputs": r.outputs,
                        "audit_indices": r.audit_indices,
                        "transcript_digest": r.transcript_digest,
                        "rounds": r.rounds,
                        "message_count": r.message_count,
                    });
                    write_json(&state.path("results").join(format!("{contract}.json")), &summary).map_err(usage)?;
                    emit(out, serde_json::to_string(&r.outputs).map_err(usage)?)
                }
                Err(e) => Err(Exit::Failed(e.to_string())),
            }
        }
        Command::Audit { command: AuditCommand::Verify { log, key } } => {
            let key = match key {
                Some(k) => parse_key(&k)?,
                None => state.load().map_err(usage)?.orchestrator_key(),
            };
            let log = log.unwrap_or_else(|| state.path("audit.jsonl"));
            let bytes = fs::read(&log).map_err(|e| usage(format!("{}: {e}", log.display())))?;
            match verify_audit_jsonl(&bytes, &key) {
                AuditVerdict::Ok => emit(out, "OK"),
                AuditVerdict::Broken(i) => {
                    emit(out, format!("BROKEN({i})"))?;
                    Err(Exit::Failed(format!("audit chain broken at entry {i}")))
                }
            }
        }
        Command::Scenario { name, seed: flag, out: dir, contributors } => {
            let scenario = Scenario::parse(&name).ok_or_else(|| usage(format!("UNKNOWN_SCENARIO: {name}")))?;
            let opts = Options { seed: seed(flag)?, contributors };
            let run = run_scenario(scenario, &opts).map_err(|e| usage(format!("{}: {e}", e.code())))?;
            let dir = dir.unwrap_or_else(|| PathBuf::from(format!("report-{}", name.to_ascii_lowercase())));
            run.write(&dir).map_err(usage)?;
            out.write_all(run.report.summary().as_bytes()).map_err(usage)?;
            match run.report.exit_code() {
                EXIT_OK => Ok(()),
                EXIT_REJECTED => Err(Exit::Rejected("request rejected".into())),
                _ => Err(Exit::Failed(run.report.error.clone().unwrap_or_else(|| "scenario failed".into()))),
            }
        }
    }
}

fn key_text(key: &VerifyKey) -> String {
    match serde_json::to_value(key) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}

fn parse_key(text: &str) -> Result<VerifyKey, Exit> {
    serde_json::from_value(Value::String(text.trim().to_string())).map_err(|e| usage(format!("bad verify key: {e}")))
}

/// Reads an offer file. With `sign`, the owner signature may be absent and
/// is produced from the local keyring; a node offer with an empty
/// encryption key gets a fresh one first.
fn load_offer(ds: &mut DataSpace, path: &std::path::Path, sign: bool) -> Result<OfferDocument, Exit> {
    let mut v: Value = read_json(path).map_err(usage)?;
    if !sign {
        return serde_json::from_value(v).map_err(usage);
    }
    let obj = v.as_object_mut().ok_or_else(|| usage("offer file is not a JSON object"))?;
    obj.insert("owner_signature".into(), Value::String(String::new()));
    if obj.get("kind").and_then(Value::as_str) == Some("NODE") {
        if let Some(d) = obj.get_mut("descriptor").and_then(Value::as_object_mut) {
            if d.get("encryption_key").and_then(Value::as_str).unwrap_or("").is_empty() {
                d.insert("encryption_key".into(), Value::String(ds.new_encryption_key()));
            }
        }
    }
    let doc: OfferDocument = serde_json::from_value(v).map_err(usage)?;
    let owner = doc.asset.owner().clone();
    let key = ds.keyring.get(&owner).cloned().ok_or_else(|| usage(format!("no local key for owner {owner}")))?;
    Ok(OfferDocument::signed(doc.asset, doc.policy, &key))
}
