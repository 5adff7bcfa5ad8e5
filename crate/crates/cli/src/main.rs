use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use tpm_kdc_core::experiments::{
    run_attack_bench, run_randomness, run_sweep, Dimension, ExperimentError, RunLimits, SweepSpec,
};
use tpm_kdc_core::kdc::{
    eavesdrop_client, party_client, EavesdropConfig, KdcConfig, KdcServer, NetError, PartyConfig,
};
use tpm_kdc_core::{LearningRule, Role, TpmParams};

const EXIT_SYNCED: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_TIMEOUT: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "kdc",
    version,
    about = "Neural key exchange over a key distribution centre"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the KDC service.
    Serve(ServeArgs),
    /// Join a session as partner A or B.
    Party(PartyArgs),
    /// Listen to a session as a passive attacker.
    Eavesdrop(EavesdropArgs),
    /// Offline experiments writing CSV.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    #[arg(long, default_value_t = 100_000)]
    max_rounds: u32,
    #[arg(long, default_value_t = 50)]
    agreement_window: u32,
    #[arg(long, default_value_t = 0)]
    input_seed: u64,
    /// Per-frame read/write timeout in seconds.
    #[arg(long, default_value_t = 30)]
    io_timeout: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartyRole {
    A,
    B,
}

#[derive(Args)]
struct PartyArgs {
    #[arg(long)]
    connect: String,
    #[arg(long)]
    session: u64,
    #[arg(long, value_enum, ignore_case = true)]
    role: PartyRole,
    #[arg(long)]
    k: u16,
    #[arg(long)]
    n: u16,
    #[arg(long)]
    l: u8,
    #[arg(long, default_value = "hebbian")]
    rule: LearningRule,
    #[arg(long)]
    weight_seed: u64,
    /// Must match the server's window.
    #[arg(long, default_value_t = 50)]
    agreement_window: u64,
    #[arg(long, default_value_t = 30)]
    io_timeout: u64,
    /// Print the derived key as lowercase hex on stdout.
    #[arg(long)]
    emit_key: bool,
}

#[derive(Args)]
struct EavesdropArgs {
    #[arg(long)]
    connect: String,
    #[arg(long)]
    session: u64,
    #[arg(long)]
    weight_seed: u64,
    #[arg(long, default_value_t = 30)]
    io_timeout: u64,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Sync time while one of k, n, l varies.
    Sweep(SweepArgs),
    /// Distinctness of keys across independent trials.
    Randomness(SimArgs),
    /// Simple-attack success against partner synchronization.
    Attack(SimArgs),
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 11)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    l: u8,
    #[arg(long, default_value = "hebbian")]
    rule: LearningRule,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    max_rounds: u64,
    #[arg(long, default_value_t = 50)]
    agreement_window: u64,
    /// Output file, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

impl SimArgs {
    fn limits(&self) -> RunLimits {
        RunLimits {
            max_rounds: self.max_rounds,
            agreement_window: self.agreement_window,
        }
    }

    fn params(&self) -> Result<TpmParams, ExperimentError> {
        TpmParams::new(self.k, self.n, self.l, self.rule)
            .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    vary: Dimension,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<u64>,
    #[command(flatten)]
    common: SimArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Serve(a) => serve(a),
        Command::Party(a) => party(a),
        Command::Eavesdrop(a) => eavesdrop(a),
        Command::Sim(s) => sim(s),
    };
    ExitCode::from(code)
}

fn serve(a: ServeArgs) -> u8 {
    let cfg = KdcConfig {
        max_rounds: a.max_rounds,
        agreement_window: a.agreement_window,
        input_seed: a.input_seed,
        io_timeout: Duration::from_secs(a.io_timeout),
        ..KdcConfig::default()
    };
    let run = || -> anyhow::Result<()> {
        let server =
            KdcServer::bind(&a.listen, cfg).with_context(|| format!("bind {}", a.listen))?;
        server.serve()?;
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_SYNCED,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

fn net_exit(e: &NetError) -> u8 {
    eprintln!("error: {e}");
    match e {
        NetError::Timeout => EXIT_TIMEOUT,
        NetError::Config(_) => EXIT_CONFIG,
        _ => EXIT_PROTOCOL,
    }
}

fn party(a: PartyArgs) -> u8 {
    let params = match TpmParams::new(a.k as usize, a.n as usize, a.l, a.rule) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let role = match a.role {
        PartyRole::A => Role::A,
        PartyRole::B => Role::B,
    };
    let mut cfg = PartyConfig::new(a.session, role, params, a.weight_seed);
    cfg.agreement_window = a.agreement_window;
    cfg.io_timeout = Duration::from_secs(a.io_timeout);
    let outcome = match party_client(a.connect.as_str(), cfg) {
        Ok(o) => o,
        Err(e) => return net_exit(&e),
    };
    let r = &outcome.report;
    eprintln!(
        "synced={} rounds_used={} updates_applied={} fingerprint_a={:016x} fingerprint_b={:016x}",
        r.synced, r.rounds_used, r.updates_applied, r.key_fingerprint_a, r.key_fingerprint_b
    );
    if !r.synced {
        return EXIT_TIMEOUT;
    }
    if a.emit_key {
        println!("{}", outcome.key().to_hex());
    }
    EXIT_SYNCED
}

fn eavesdrop(a: EavesdropArgs) -> u8 {
    let mut cfg = EavesdropConfig::new(a.session, a.weight_seed);
    cfg.io_timeout = Duration::from_secs(a.io_timeout);
    match eavesdrop_client(a.connect.as_str(), cfg) {
        Ok(r) => {
            eprintln!(
                "partners_synced={} rounds_observed={} fingerprint_e={:016x} matched={}",
                r.partners_synced, r.rounds_observed, r.key_fingerprint_e, r.matched
            );
            if r.partners_synced {
                EXIT_SYNCED
            } else {
                EXIT_TIMEOUT
            }
        }
        Err(e) => net_exit(&e),
    }
}

fn open_out(path: &PathBuf) -> io::Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdout().lock()))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn sim(cmd: SimCommand) -> u8 {
    let result = match cmd {
        SimCommand::Sweep(a) => run_sweep_cmd(a),
        SimCommand::Randomness(a) => run_randomness_cmd(a),
        SimCommand::Attack(a) => run_attack_cmd(a),
    };
    match result {
        Ok(()) => EXIT_SYNCED,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_PROTOCOL
            }
        }
    }
}

fn run_sweep_cmd(a: SweepArgs) -> Result<(), ExperimentError> {
    let c = &a.common;
    let spec = SweepSpec {
        varying: a.vary,
        values: a.values,
        k: c.k,
        n: c.n,
        l: c.l,
        rule: c.rule,
        trials_per_value: c.trials,
        base_seed: c.seed,
        limits: c.limits(),
    };
    let result = run_sweep(&spec)?;
    for s in &result.summary {
        info!(
            "value {}: {}/{} synced, mean rounds {:.2}, median {:.1}",
            s.varying_value, s.synced, s.trials, s.mean_rounds, s.median_rounds
        );
    }
    result.write_csv(open_out(&c.out)?)
}

fn run_randomness_cmd(a: SimArgs) -> Result<(), ExperimentError> {
    let result = run_randomness(a.trials, a.params()?, a.seed, a.limits())?;
    let s = &result.summary;
    info!(
        "{}/{} synced, {} distinct fingerprints, {} distinct keys",
        s.synced, s.trials, s.distinct_fingerprints, s.distinct_keys
    );
    result.write_csv(open_out(&a.out)?)
}

fn run_attack_cmd(a: SimArgs) -> Result<(), ExperimentError> {
    let result = run_attack_bench(a.trials, a.params()?, a.seed, a.limits())?;
    let s = &result.summary;
    info!(
        "partner sync {:.2}, attacker sync {:.2}, mean attacker overlap {:.4}",
        s.partner_sync_fraction, s.attacker_sync_fraction, s.mean_attacker_overlap
    );
    result.write_csv(open_out(&a.out)?)
}
