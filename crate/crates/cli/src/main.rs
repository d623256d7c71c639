mod identity;
mod serve;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use polaris_bench::demo::{run_demo, Scenario, EXIT_AUTH_FAILED, EXIT_DENIED, EXIT_FAILURE, EXIT_REPLAY};
use polaris_bench::deployment::DeploymentOptions;
use polaris_bench::kd::{bench_kd, KdMode};
use polaris_bench::load::{find_saturation, run_load, LoadConfig, LoadOp, SaturationConfig, Target};
use polaris_core::access::{AccessError, ResourceClient};
use polaris_core::clock::{system_clock, Timestamp};
use polaris_core::credential::{answer_challenge, AttributeClaim, Issuer, IssuerConfig};
use polaris_core::did::Did;
use polaris_core::presentation::{build_presentation, AttributeTriple, DisclosureSelection, SignedPresentation};
use polaris_core::session::{SecureClient, SessionStore};
use polaris_core::vdr::{DidRegistrar, DidResolver, VdrClient};
use polaris_core::vppl::{evaluate_policy, parse_policy, serialize_policy, sign_policy, verify_policy_signature};
use polaris_core::wallet::Wallet;
use polaris_core::wire::HttpTransport;
use serde::Serialize;

use identity::Identity;

const DEFAULT_VDR: &str = "127.0.0.1:8700";
const DEFAULT_RS: &str = "127.0.0.1:8702";
const DEFAULT_AS: &str = "127.0.0.1:8701";

#[derive(Parser)]
#[command(name = "polaris", version, about = "Decentralized identity and cross-domain access control")]
struct Cli {
    /// Registry base URL used by every client-side command.
    #[arg(long, global = true, env = "POLARIS_VDR_ENDPOINT", default_value = DEFAULT_VDR)]
    vdr: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verifiable data registry.
    Vdr {
        #[command(subcommand)]
        command: VdrCommand,
    },
    /// Generate an Ed25519 identity file.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Register an identity's public key and record the minted DID in the file.
    Register {
        #[arg(long)]
        id: PathBuf,
        /// Free-form label stored in the DID document.
        #[arg(long, default_value = "polaris-cli")]
        uuid: String,
    },
    /// Run the challenge-response issuance between an issuer and a holder.
    Issue(IssueArgs),
    /// Build a signed presentation from wallet credentials.
    Present(PresentArgs),
    /// Policy tooling.
    Policy {
        #[command(subcommand)]
        command: PolicyCommand,
    },
    /// Authorization server.
    Authz {
        #[command(subcommand)]
        command: AuthzCommand,
    },
    /// Resource server and its clients.
    Resource {
        #[command(subcommand)]
        command: ResourceCommand,
    },
    /// Scripted end-to-end run with in-process services.
    Demo {
        /// grant, under-qualified, tampered, replay or all.
        #[arg(long, default_value = "grant")]
        scenario: String,
        /// Serve every role over loopback HTTP instead of direct calls.
        #[arg(long)]
        http: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand)]
enum VdrCommand {
    Serve {
        #[arg(long, env = "POLARIS_VDR_ADDR", default_value = DEFAULT_VDR)]
        addr: String,
        /// `memory`, or a path to an append-only journal file.
        #[arg(long, env = "POLARIS_VDR_STORE", default_value = "memory")]
        store: String,
        #[arg(long, default_value_t = 8)]
        workers: usize,
    },
}

#[derive(Subcommand)]
enum AuthzCommand {
    Serve {
        #[arg(long)]
        id: PathBuf,
        #[arg(long, env = "POLARIS_AS_ADDR", default_value = DEFAULT_AS)]
        addr: String,
    },
}

#[derive(Args)]
struct IssueArgs {
    #[arg(long)]
    issuer: PathBuf,
    #[arg(long)]
    holder: PathBuf,
    /// Attribute as name=value; repeatable.
    #[arg(long = "claim", required = true)]
    claims: Vec<String>,
    /// Holder wallet directory; created if missing.
    #[arg(long)]
    wallet: PathBuf,
    #[arg(long, default_value_t = 365 * 86_400)]
    validity: u64,
}

#[derive(Args)]
struct PresentArgs {
    #[arg(long)]
    holder: PathBuf,
    #[arg(long)]
    wallet: PathBuf,
    /// DID of the verifier the presentation is addressed to.
    #[arg(long)]
    audience: Did,
    /// Comma-separated attribute names to disclose.
    #[arg(long, value_delimiter = ',')]
    attrs: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Parse and validate a policy file.
    Lint { file: PathBuf },
    /// Sign a policy as its owner.
    Sign {
        file: PathBuf,
        #[arg(long)]
        id: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a policy against a JSON list of {issuer_did, name, value}.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        attrs: PathBuf,
        #[arg(long)]
        trace: bool,
    },
}

#[derive(Args)]
struct RsTarget {
    #[arg(long, env = "POLARIS_RS_ADDR", default_value = DEFAULT_RS)]
    rs: String,
    /// The resource server's DID; its key is resolved from the registry.
    #[arg(long)]
    rs_did: Did,
    /// Identity the session is opened as.
    #[arg(long)]
    id: PathBuf,
}

#[derive(Subcommand)]
enum ResourceCommand {
    Serve {
        #[arg(long)]
        id: PathBuf,
        #[arg(long, env = "POLARIS_RS_ADDR", default_value = DEFAULT_RS)]
        addr: String,
        /// Remote authorization server; embedded when omitted.
        #[arg(long, env = "POLARIS_AS_ADDR")]
        authz: Option<String>,
        #[arg(long, requires = "authz")]
        authz_did: Option<Did>,
        #[arg(long)]
        content_dir: Option<PathBuf>,
    },
    Upload {
        #[command(flatten)]
        target: RsTarget,
        #[arg(long)]
        file: PathBuf,
        /// Signed policy file.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value = "")]
        description: String,
    },
    Access {
        #[command(flatten)]
        target: RsTarget,
        #[arg(long)]
        resource: String,
        #[arg(long)]
        presentation: PathBuf,
    },
    Fetch {
        #[command(flatten)]
        target: RsTarget,
        #[arg(long)]
        resource: String,
        #[arg(long)]
        token: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Session key derivation against per-message public-key wrapping.
    Kd {
        /// Payload bytes; accepts K, M suffixes (binary).
        #[arg(long, default_value = "1M", value_parser = parse_size)]
        size: usize,
        #[arg(long, default_value_t = 5.0)]
        rounds: f64,
        /// kd, pki or both.
        #[arg(long, default_value = "both")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Open-loop load against in-process services.
    Load {
        /// resolve, register or request_vc_path.
        #[arg(long, default_value = "resolve")]
        op: String,
        #[arg(long, default_value_t = 1000.0)]
        rate: f64,
        /// Seconds.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        /// Search for the saturation rate instead of a single run.
        #[arg(long)]
        saturate: bool,
        #[arg(long, default_value_t = 8)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_size(s: &str) -> Result<usize, String> {
    let s = s.trim();
    let (digits, mult) = match s.char_indices().find(|(_, c)| !c.is_ascii_digit()) {
        None => (s, 1),
        Some((i, _)) => {
            let m = match s[i..].to_ascii_lowercase().as_str() {
                "k" | "kb" | "kib" => 1 << 10,
                "m" | "mb" | "mib" => 1 << 20,
                other => return Err(format!("unknown size suffix {other:?}")),
            };
            (&s[..i], m)
        }
    };
    digits.parse::<usize>().map(|n| n * mult).map_err(|e| e.to_string())
}

/// Accepts `host:port` or a full URL.
pub fn endpoint(addr: &str) -> String {
    if addr.starts_with("http://") || addr.starts_with("https://") {
        addr.trim_end_matches('/').to_string()
    } else {
        format!("http://{addr}")
    }
}

fn vdr_client(addr: &str) -> VdrClient<HttpTransport> {
    VdrClient::new(HttpTransport::new(endpoint(addr)))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_bytes(&text, out)
}

fn write_bytes(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let vdr = cli.vdr;
    match cli.command {
        Command::Vdr { command: VdrCommand::Serve { addr, store, workers } } => serve::vdr(&addr, &store, workers),
        Command::Authz { command: AuthzCommand::Serve { id, addr } } => serve::authz(&vdr, &id, &addr),
        Command::Keygen { out } => {
            if out.exists() {
                bail!("{} already exists", out.display());
            }
            let id = Identity::generate();
            id.save(&out)?;
            println!("{}", polaris_core::codec::b64_encode(&id.key.public_key().to_bytes()));
            Ok(0)
        }
        Command::Register { id, uuid } => {
            let mut ident = Identity::load(&id)?;
            if let Some(did) = ident.did {
                bail!("{} is already registered as {did}", id.display());
            }
            let did = vdr_client(&vdr).register_did(&ident.key.public_key(), &uuid)?;
            ident.did = Some(did);
            ident.save(&id)?;
            println!("{did}");
            Ok(0)
        }
        Command::Issue(args) => issue(&vdr, args),
        Command::Present(args) => present(args),
        Command::Policy { command } => policy(&vdr, command),
        Command::Resource { command } => resource(&vdr, command),
        Command::Demo { scenario, http, out } => demo(&scenario, http, out.as_deref()),
        Command::Bench { command } => bench(command),
    }
}

fn issue(vdr: &str, args: IssueArgs) -> Result<i32> {
    let issuer_id = Identity::load(&args.issuer)?;
    let holder_id = Identity::load(&args.holder)?;
    let (issuer_did, holder_did) = (issuer_id.did()?, holder_id.did()?);
    let claims = args
        .claims
        .iter()
        .map(|c| {
            let (name, value) = c.split_once('=').ok_or_else(|| anyhow!("claim {c:?} is not name=value"))?;
            Ok(AttributeClaim::new(name.trim(), value))
        })
        .collect::<Result<Vec<_>>>()?;

    let resolver: Arc<dyn DidResolver> = Arc::new(vdr_client(vdr));
    let config = IssuerConfig { validity_secs: args.validity, ..IssuerConfig::default() };
    let issuer = Issuer::new(issuer_did, issuer_id.key, resolver.clone(), system_clock(), config);
    let challenge = issuer.create_challenge(holder_did)?;
    let issued = issuer.issue(&answer_challenge(&challenge, &holder_id.key), claims)?;

    let mut wallet = open_wallet(holder_did, &args.wallet)?;
    let id = wallet.accept(issued, resolver.as_ref(), Timestamp::now())?;
    wallet.save_dir(&args.wallet)?;
    println!("{id}");
    Ok(0)
}

fn open_wallet(holder: Did, dir: &Path) -> Result<Wallet> {
    if dir.exists() {
        Ok(Wallet::load_dir(holder, dir)?)
    } else {
        std::fs::create_dir_all(dir)?;
        Ok(Wallet::new(holder))
    }
}

fn present(args: PresentArgs) -> Result<i32> {
    let holder = Identity::load(&args.holder)?;
    let wallet = Wallet::load_dir(holder.did()?, &args.wallet)?;
    let wanted: BTreeSet<&str> = args.attrs.iter().map(String::as_str).collect();
    let mut covered = BTreeSet::new();
    let mut selections = Vec::new();
    for id in wallet.credential_ids() {
        let entry = wallet.get(id).expect("listed id");
        let names: Vec<&str> = wanted.iter().copied().filter(|n| entry.claims.contains_key(*n) && !covered.contains(n)).collect();
        if !names.is_empty() {
            covered.extend(names.iter().copied());
            selections.push(DisclosureSelection::new(*id, names));
        }
    }
    if let Some(missing) = wanted.iter().find(|n| !covered.contains(*n)) {
        bail!("no credential in the wallet carries {missing:?}");
    }
    let sp = build_presentation(&wallet, &selections, args.audience, &holder.key, Timestamp::now())?;
    write_bytes(&sp.to_json(), args.out.as_deref())?;
    Ok(0)
}

fn policy(vdr: &str, command: PolicyCommand) -> Result<i32> {
    match command {
        PolicyCommand::Lint { file } => match parse_policy(&read(&file)?) {
            Ok(p) => {
                let signed = if p.signature.is_some() { "signed" } else { "unsigned" };
                println!("ok: {} rules, {}, {signed}", p.rules.len(), p.combining.name());
                Ok(0)
            }
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                Ok(EXIT_FAILURE)
            }
        },
        PolicyCommand::Sign { file, id, out } => {
            let owner = Identity::load(&id)?;
            let p = parse_policy(&read(&file)?)?;
            let signed = sign_policy(&p, owner.did()?, &owner.key);
            let mut bytes = serialize_policy(&signed);
            bytes.push(b'\n');
            write_bytes(&bytes, out.as_deref())?;
            Ok(0)
        }
        PolicyCommand::Eval { policy, attrs, trace } => {
            let p = parse_policy(&read(&policy)?)?;
            if p.signature.is_some() {
                let status = verify_policy_signature(&p, &vdr_client(vdr))?;
                eprintln!("policy signature: {status:?}");
            }
            let triples: Vec<AttributeTriple> = serde_json::from_slice(&read(&attrs)?).context("parsing attributes")?;
            let decision = evaluate_policy(&p, &triples);
            if trace {
                write_json(&decision, None)?;
            } else {
                write_json(&decision.outcome, None)?;
            }
            Ok(0)
        }
    }
}

type RsClient = ResourceClient<SecureClient<HttpTransport>>;

fn rs_client(vdr: &str, target: &RsTarget) -> Result<(RsClient, Did)> {
    let me = Identity::load(&target.id)?;
    let did = me.did()?;
    let rs_key = vdr_client(vdr).resolve_key(&target.rs_did).context("resolving the resource server")?;
    let store = Arc::new(SessionStore::new(did, Arc::new(me.key), system_clock()));
    let client = SecureClient::new(HttpTransport::new(endpoint(&target.rs)), store, target.rs_did, rs_key);
    Ok((ResourceClient::new(client), did))
}

fn resource(vdr: &str, command: ResourceCommand) -> Result<i32> {
    match command {
        ResourceCommand::Serve { id, addr, authz, authz_did, content_dir } => {
            serve::resource(vdr, &id, &addr, authz.as_deref().zip(authz_did), content_dir)
        }
        ResourceCommand::Upload { target, file, policy, description } => {
            let (client, owner) = rs_client(vdr, &target)?;
            let p = parse_policy(&read(&policy)?)?;
            let record = client.upload(owner, &read(&file)?, &description, &p)?;
            write_json(&record, None)?;
            Ok(0)
        }
        ResourceCommand::Access { target, resource, presentation } => {
            let (client, _) = rs_client(vdr, &target)?;
            let sp: SignedPresentation =
                serde_json::from_slice(&read(&presentation)?).context("parsing presentation")?;
            let attempt = client.request_access(&resource.parse()?, &sp);
            match attempt.result {
                Ok(grant) => {
                    write_json(&grant, None)?;
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("access refused: {e}");
                    Ok(match e {
                        AccessError::Denied(_) => EXIT_DENIED,
                        AccessError::Authentication { .. } => EXIT_AUTH_FAILED,
                        AccessError::Replay => EXIT_REPLAY,
                        _ => EXIT_FAILURE,
                    })
                }
            }
        }
        ResourceCommand::Fetch { target, resource, token, out } => {
            let (client, _) = rs_client(vdr, &target)?;
            let content = client.fetch(&resource.parse()?, &token)?;
            write_bytes(&content, out.as_deref())?;
            Ok(0)
        }
    }
}

fn demo(scenario: &str, http: bool, out: Option<&Path>) -> Result<i32> {
    let scenarios = match scenario {
        "all" => Scenario::ALL.to_vec(),
        name => vec![Scenario::from_name(name).ok_or_else(|| anyhow!("unknown scenario {name:?}"))?],
    };
    let opts = DeploymentOptions { http, ..Default::default() };
    let mut reports = Vec::new();
    for s in scenarios {
        let r = run_demo(s, &opts);
        println!("== {} ({:.0} ms)", s.name(), r.elapsed_ms);
        print!("{}", r.transcript());
        reports.push(r);
    }
    if let Some(path) = out {
        write_json(&reports, Some(path))?;
    }
    Ok(match reports.as_slice() {
        [single] => single.exit_code,
        all if all.iter().all(|r| r.exit_code == r.scenario.expected_exit()) => 0,
        _ => EXIT_FAILURE,
    })
}

fn bench(command: BenchCommand) -> Result<i32> {
    match command {
        BenchCommand::Kd { size, rounds, mode, out } => {
            let modes = match mode.as_str() {
                "both" => vec![KdMode::KdSession, KdMode::PkiPerMessage],
                m => vec![KdMode::from_name(m).ok_or_else(|| anyhow!("unknown mode {m:?}"))?],
            };
            let mut reports = Vec::new();
            for m in modes {
                let r = bench_kd(size, rounds, m)?;
                eprintln!(
                    "{:<16} {} bytes x {} rounds: {:.1} ms, {} asymmetric ops",
                    m.name(),
                    size,
                    rounds,
                    r.total_ms,
                    r.asymmetric_ops()
                );
                reports.push(r);
            }
            write_json(&reports, out.as_deref())?;
            Ok(0)
        }
        BenchCommand::Load { op, rate, duration, saturate, workers, out } => {
            let op = LoadOp::from_name(&op).ok_or_else(|| anyhow!("unknown op {op:?}"))?;
            let load = LoadConfig { workers, ..LoadConfig::default() };
            let target = Target::new(op)?;
            let probe = Duration::from_secs_f64(duration);
            if saturate {
                let cfg = SaturationConfig { start_rate: rate, probe, load, ..SaturationConfig::default() };
                let report = find_saturation(&target, &cfg)?;
                eprintln!("{} saturates at {:.0} req/s", op.name(), report.saturation_rate);
                write_json(&report, out.as_deref())?;
            } else {
                let r = run_load(&target, rate, probe, &load)?;
                eprintln!(
                    "{} @ {:.0}/s: {:.0}/s achieved, success {:.4}, p50 {:.3} ms, p99 {:.3} ms",
                    op.name(),
                    rate,
                    r.achieved_throughput,
                    r.success_rate,
                    r.latency_ms.p50,
                    r.latency_ms.p99
                );
                write_json(&r, out.as_deref())?;
            }
            Ok(0)
        }
    }
}
