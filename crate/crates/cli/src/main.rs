use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use raftguard::attack::{
    live_entry_attack, live_replay_last, run_attack, AttackKind, AttackOutcome, AttackPlan, PlannedAttack, Pick,
    Role2Target,
};
use raftguard::bench::{
    compare, evaluate, run_live_bench, run_sim_bench, BenchReport, LatencyModelParams, LiveBenchOptions, Workload,
};
use raftguard::net::live::run_node;
use raftguard::net::{load_config, ClusterConfig, TransportMode};
use raftguard::raft::{NodeId, Term};
use raftguard::scenario::{run_scenario, Scenario, MILLI};

#[derive(Parser)]
#[command(name = "raftguard", version, about = "Raft with a replay- and forgery-resistant transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one cluster member over TCP until killed.
    Node {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        id: u64,
    },
    /// Run a named scenario in the deterministic simulator.
    Sim {
        #[arg(long)]
        scenario: Scenario,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value = "secure")]
        mode: TransportMode,
    },
    /// Replay captured frames or inject forged log entries.
    Attack(AttackArgs),
    /// Measure throughput and latency per transport mode.
    Bench(BenchArgs),
    /// Evaluate the transaction latency model.
    Model {
        #[arg(long)]
        rtt: f64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        q: f64,
        #[arg(long = "t-r", default_value_t = 0.0)]
        t_r: f64,
    },
    /// Run both attacks against plaintext and secure clusters and report.
    Demo {
        #[command(flatten)]
        seed: SeedArg,
    },
}

#[derive(Args)]
struct SeedArg {
    /// Falls back to RAFT_CHAOS_SEED, then 1.
    #[arg(long, env = "RAFT_CHAOS_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Replaylast,
    Entryattack,
}

#[derive(Args)]
struct AttackArgs {
    kind: Kind,
    #[arg(long)]
    count: Option<usize>,
    /// Milliseconds between capture and injection.
    #[arg(long)]
    delay: Option<u64>,
    #[arg(long)]
    target: Option<u64>,
    #[arg(long)]
    impersonate: Option<u64>,
    #[arg(long)]
    term: Option<u64>,
    /// Forged command bytes, hex encoded.
    #[arg(long, value_parser = parse_hex)]
    command: Option<HexBytes>,
    #[arg(long, default_value = "plaintext")]
    mode: TransportMode,
    #[command(flatten)]
    seed: SeedArg,
    /// Attack a running cluster described by --config instead of the simulator.
    #[arg(long, requires = "config")]
    live: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMode {
    Plaintext,
    Secure,
    Both,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    mode: BenchMode,
    #[arg(long, default_value_t = 4)]
    clients: usize,
    #[arg(long, default_value_t = 64)]
    command_size: usize,
    #[arg(long, default_value_t = 5_000)]
    ops: u64,
    /// Use the simulator instead of a localhost TCP cluster.
    #[arg(long)]
    sim: bool,
    /// Live warm-up in milliseconds.
    #[arg(long, default_value_t = 2_000)]
    warmup_ms: u64,
    /// Timing and cache settings for the live cluster.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone)]
struct HexBytes(Vec<u8>);

fn parse_hex(s: &str) -> Result<HexBytes, String> {
    hex::decode(s).map(HexBytes).map_err(|e| format!("invalid hex: {e}"))
}

enum Failure {
    Usage(String),
    Operational(String),
}

type Outcome = Result<ExitCode, Failure>;

fn op(e: impl std::fmt::Display) -> Failure {
    Failure::Operational(e.to_string())
}

fn load(path: &PathBuf) -> Result<ClusterConfig, Failure> {
    load_config(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn node(config: PathBuf, id: u64) -> Outcome {
    let config = load(&config)?;
    let id = NodeId(id);
    if config.address_of(id).is_none() {
        return Err(Failure::Usage(format!("node {id} is not in the config")));
    }
    run_node(&config, id).map_err(op)?;
    Ok(ExitCode::SUCCESS)
}

fn sim(scenario: Scenario, seed: u64, mode: TransportMode) -> Outcome {
    let report = run_scenario(scenario, mode, seed);
    print!("{}", report.render());
    Ok(if report.violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn sim_plan(args: &AttackArgs, kind: AttackKind) -> Result<AttackPlan, Failure> {
    let mut plan = AttackPlan::campaign(kind, args.mode, args.seed.seed);
    let node = |id: u64| {
        if (1..=plan.nodes).contains(&id) {
            Ok(Role2Target::Node(NodeId(id)))
        } else {
            Err(Failure::Usage(format!("node {id} is outside 1..={}", plan.nodes)))
        }
    };
    let target = args.target.map(node).transpose()?;
    let impersonate = args.impersonate.map(node).transpose()?;
    match &mut plan.attack {
        PlannedAttack::ReplayLast {
            count,
            delay,
            target: t,
            from,
            from_client,
            kind,
            pick,
        } => {
            if let Some(n) = args.count {
                *count = n;
            }
            if let Some(ms) = args.delay {
                *delay = ms * MILLI;
            }
            if let Some(new) = target {
                // An explicit target replays whatever it most recently received.
                *t = new;
                *from = None;
                *from_client = false;
                *kind = None;
                *pick = Pick::Newest;
            }
        }
        PlannedAttack::EntryAttack {
            target: t,
            impersonate: i,
            term,
            command,
            ..
        } => {
            if let Some(new) = target {
                *t = new;
            }
            if let Some(new) = impersonate {
                *i = new;
            }
            if let Some(v) = args.term {
                *term = Some(Term(v));
            }
            if let Some(c) = &args.command {
                *command = c.0.clone();
            }
        }
    }
    Ok(plan)
}

fn attack(args: AttackArgs) -> Outcome {
    let kind = match args.kind {
        Kind::Replaylast => AttackKind::ReplayLast,
        Kind::Entryattack => AttackKind::EntryAttack,
    };
    if args.live {
        let config = load(args.config.as_ref().expect("clap enforces --config"))?;
        let target = NodeId(
            args.target
                .ok_or_else(|| Failure::Usage("live attacks need --target".into()))?,
        );
        let report = match kind {
            AttackKind::ReplayLast => live_replay_last(
                &config,
                args.count.unwrap_or(1),
                Duration::from_millis(args.delay.unwrap_or(0)),
                target,
            ),
            AttackKind::EntryAttack => {
                let impersonate = NodeId(
                    args.impersonate
                        .ok_or_else(|| Failure::Usage("live entryattack needs --impersonate".into()))?,
                );
                let command = args.command.clone().map_or_else(|| b"forged".to_vec(), |c| c.0);
                live_entry_attack(&config, target, impersonate, args.term.map(Term), command)
            }
        }
        .map_err(op)?;
        print!("{}", report.render());
        return Ok(ExitCode::SUCCESS);
    }
    let plan = sim_plan(&args, kind)?;
    let outcome = run_attack(&plan).map_err(op)?;
    print!("{}", outcome.render());
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> Outcome {
    if args.clients == 0 {
        return Err(Failure::Usage("--clients must be at least 1".into()));
    }
    let workload = Workload {
        clients: args.clients,
        command_size: args.command_size,
        total_ops: args.ops,
    };
    let modes = match args.mode {
        BenchMode::Plaintext => vec![TransportMode::Plaintext],
        BenchMode::Secure => vec![TransportMode::Secure],
        BenchMode::Both => vec![TransportMode::Plaintext, TransportMode::Secure],
    };
    let template = args.config.as_ref().map(load).transpose()?;
    let mut reports: Vec<BenchReport> = Vec::new();
    for mode in modes {
        let report = if args.sim {
            run_sim_bench(mode, workload, args.seed.seed)
        } else {
            let options = LiveBenchOptions {
                warmup: Duration::from_millis(args.warmup_ms),
                seed: args.seed.seed,
                template: template.clone(),
                ..LiveBenchOptions::default()
            };
            run_live_bench(mode, workload, options)
        }
        .map_err(op)?;
        print!("{}", report.table());
        println!();
        print!("{}", report.machine_lines());
        println!();
        reports.push(report);
    }
    if let [default, secure] = reports.as_slice() {
        let comparison = compare(default, secure).map_err(op)?;
        print!("{}", comparison.table(default, secure));
        println!();
        print!("{}", comparison.machine_lines());
    }
    Ok(ExitCode::SUCCESS)
}

fn model(params: LatencyModelParams) -> Outcome {
    let result = evaluate(&params).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("p = {}", params.n as f64 / params.m as f64);
    println!("t_l = {}", result.t_l);
    println!("t_c = {}", result.t_c);
    Ok(ExitCode::SUCCESS)
}

fn demo(seed: u64) -> Outcome {
    let mut plaintext: Vec<AttackOutcome> = Vec::new();
    let mut secure: Vec<AttackOutcome> = Vec::new();
    for kind in [AttackKind::ReplayLast, AttackKind::EntryAttack] {
        for mode in [TransportMode::Plaintext, TransportMode::Secure] {
            let outcome = run_attack(&AttackPlan::campaign(kind, mode, seed)).map_err(op)?;
            println!("== {kind} / {mode}");
            print!("{}", outcome.render());
            println!();
            match mode {
                TransportMode::Plaintext => plaintext.push(outcome),
                TransportMode::Secure => secure.push(outcome),
            }
        }
    }
    let vulnerable = plaintext.iter().all(|o| o.frames_accepted > 0)
        && plaintext
            .iter()
            .any(|o| o.consensus_compromised || o.spurious_elections > 0);
    let protected = secure.iter().all(|o| {
        o.frames_accepted == 0
            && !o.consensus_compromised
            && o.legit_delivered == o.baseline_legit_delivered
    });
    println!("plaintext {}", if vulnerable { "compromised" } else { "not-compromised" });
    println!("secure {}", if protected { "clean" } else { "breached" });
    Ok(if vulnerable && protected {
        println!("verdict pass");
        ExitCode::SUCCESS
    } else {
        println!("verdict fail");
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Node { config, id } => node(config, id),
        Command::Sim { scenario, seed, mode } => sim(scenario, seed.seed, mode),
        Command::Attack(args) => attack(args),
        Command::Bench(args) => bench(args),
        Command::Model { rtt, n, m, q, t_r } => model(LatencyModelParams { rtt, n, m, q, t_r }),
        Command::Demo { seed } => demo(seed.seed),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Operational(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
