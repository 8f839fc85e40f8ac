use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use robomesh::bridge::{start_bridge, BridgeConfig};
use robomesh::envkit::{make_env, Action, EnvConfig, SpaceSpec};
use robomesh::launcher::{self, LaunchConfig, LaunchError, LaunchOptions, Supervisor, EXIT_INVALID};
use robomesh::logkit::{export_csv, parse_remap, read_log, replay, ExportOptions, Recorder, ReplayOptions, ResampleMode};
use robomesh::nodes::nav::{start_nav, NavConfig};
use robomesh::nodes::sim2d::{load_world, start_sim, SimNodeConfig, SimRole};
use robomesh::nodes::slam::{start_slam, SlamNodeConfig};
use robomesh::nodes::teleop::{load_script, start_teleop, TeleopConfig, TeleopSource};
use robomesh::nodes::Running;
use robomesh::tools::{render_table, Graph, Spy, Tap, TapLine};
use robomesh_msg::types::Twist2D;
use robomesh_msg::{Message, SchemaCatalog, Value};
use robomesh_net::registry::DEFAULT_ADDRESS;
use robomesh_net::transport::now_us;
use robomesh_net::{Endpoint, EndpointConfig, Node, NodeOptions, RegistryClient, RegistryServer, ShutdownToken};
use serde::de::DeserializeOwned;

type BoxResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "robomesh", version, about = "Robot middleware: nodes, launcher, logging and introspection tools")]
struct Cli {
    /// Registry address (host:port).
    #[arg(long, global = true, env = "ROBOMESH_REGISTRY", default_value = DEFAULT_ADDRESS)]
    registry: String,
    /// Transport URL, e.g. udp://239.255.76.67:7667?ttl=0 or loopback://7700?span=16.
    #[arg(long, global = true, env = "ROBOMESH_UDP")]
    udp: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a standalone discovery registry.
    Registry,
    /// Start every node of a launch file and supervise them.
    Launch { config: PathBuf },
    /// Check a launch file without starting anything.
    Validate {
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run one builtin node.
    #[command(subcommand)]
    Node(NodeKind),
    /// Publish twists from the keyboard or a `t,v,w` script.
    Teleop(TeleopArgs),
    /// Websocket bridge for the browser dashboard.
    Bridge(BridgeArgs),
    /// Record, replay and export message logs.
    #[command(subcommand)]
    Log(LogCmd),
    /// Print the node/channel graph from the registry.
    Graph {
        #[arg(value_enum, default_value = "dot")]
        format: GraphFormat,
    },
    /// Per-channel rate and jitter.
    Spy {
        /// Channel filters; a trailing `*` matches a prefix.
        #[arg(long, value_delimiter = ',', default_value = "*")]
        channels: Vec<String>,
        /// Statistics window, seconds.
        #[arg(long, default_value_t = 2.0)]
        window: f64,
        /// JSON lines instead of a table.
        #[arg(long)]
        json: bool,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Print decoded messages of one channel.
    Tap {
        channel: String,
        /// Schema name, e.g. pose_2d_t.
        #[arg(long)]
        schema: String,
        /// Emit `recv_time_us,<value>` rows for one field path.
        #[arg(long, value_name = "FIELD")]
        csv: Option<String>,
        /// Stop after this many messages.
        #[arg(long)]
        count: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Json,
}

#[derive(Args)]
struct TeleopArgs {
    /// Output channel, `<node>/<suffix>`.
    #[arg(long, default_value = "teleop/twist")]
    channel: String,
    #[arg(long)]
    script: Option<PathBuf>,
}

#[derive(Args)]
struct BridgeArgs {
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    http: String,
    /// Directory with the built dashboard.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum NodeKind {
    /// Simulator, or stub hardware when ROBOMESH_SIM=0.
    Sim2d(SimArgs),
    /// Stub hardware regardless of the sim flag.
    #[command(name = "stub_hw")]
    StubHw(SimArgs),
    Slam(ConfigArgs),
    Nav(ConfigArgs),
    Teleop {
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        script: Option<PathBuf>,
    },
    Bridge(BridgeArgs),
    /// Run episodes of an environment with a scripted policy.
    #[command(name = "env_demo")]
    EnvDemo {
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: u32,
        /// Steps per episode; the horizon still applies.
        #[arg(long)]
        steps: Option<u64>,
        /// `t,v,w` script for twist actions.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Record channels to a log file until stopped.
    Logger(RecordArgs),
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    world: PathBuf,
    /// Node wiring (YAML, see SimNodeConfig).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RecordArgs {
    #[arg(long)]
    name: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "*")]
    channels: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum LogCmd {
    Record(RecordArgs),
    Play {
        log: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// `from=to` channel renames.
        #[arg(long)]
        remap: Vec<String>,
        #[arg(long, default_value = "replay")]
        name: String,
    },
    Export {
        log: PathBuf,
        /// YAML map of channel to schema, or an env file (its observation space).
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        rate: f64,
        #[arg(long, value_enum, default_value = "latest")]
        mode: ModeArg,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Space channels allowed to be absent from the log.
        #[arg(long)]
        allow_missing: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Latest,
    Interp,
}

fn node_options(cli: &Cli) -> BoxResult<NodeOptions> {
    let transport = match &cli.udp {
        Some(u) => u.parse::<EndpointConfig>()?,
        None => EndpointConfig::default(),
    };
    Ok(NodeOptions::new(cli.registry.clone(), transport))
}

fn load_yaml<T: DeserializeOwned + Default>(path: Option<&Path>) -> BoxResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(serde_yaml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?)
        }
    }
}

fn signal_token() -> BoxResult<ShutdownToken> {
    let token = ShutdownToken::new();
    token.install_signal_handlers()?;
    Ok(token)
}

/// Runs a node until it stops by itself or a signal arrives.
fn supervise(running: Running) -> BoxResult<()> {
    running.node().shutdown_token().install_signal_handlers()?;
    log::info!("{} running", running.node().name());
    running.wait()?;
    Ok(())
}

fn run_sim(cli: &Cli, args: &SimArgs, role: SimRole) -> BoxResult<()> {
    let world = load_world(&args.world)?;
    let mut cfg: SimNodeConfig = load_yaml(args.config.as_deref())?;
    cfg.role = role;
    if let Some(n) = &args.name {
        cfg.name = n.clone();
    }
    let (running, _sim) = start_sim(&node_options(cli)?, world, cfg)?;
    supervise(running)
}

fn teleop_source(script: Option<&Path>) -> BoxResult<TeleopSource> {
    Ok(match script {
        Some(p) => TeleopSource::Script(load_script(p)?),
        None if std::io::stdin().is_terminal() => {
            eprintln!("teleop: WASD or arrows drive, space stops, q quits");
            TeleopSource::Keyboard
        }
        None => TeleopSource::Bridge,
    })
}

fn run_bridge(cli: &Cli, args: &BridgeArgs) -> BoxResult<()> {
    let mut cfg = BridgeConfig {
        http_addr: args.http.clone(),
        static_dir: args.static_dir.clone(),
        ..BridgeConfig::default()
    };
    if let Some(n) = &args.name {
        cfg.name = n.clone();
    }
    let handle = start_bridge(&node_options(cli)?, cfg)?;
    println!("bridge serving http://{}/ (websocket at /ws)", handle.local_addr());
    let token = signal_token()?;
    while !token.sleep(Duration::from_secs(1)) {}
    handle.stop();
    Ok(())
}

fn run_record(cli: &Cli, args: &RecordArgs) -> BoxResult<()> {
    let node = Node::create(args.name.as_deref().unwrap_or("logger"), &node_options(cli)?)?;
    let filters: Vec<&str> = args.channels.iter().map(String::as_str).collect();
    let recorder = Recorder::start(&node, &filters, &args.out)?;
    let token = signal_token()?;
    let start = Instant::now();
    while !token.sleep(Duration::from_millis(100)) {
        if args.duration.is_some_and(|d| start.elapsed().as_secs_f64() >= d) || !recorder.is_running() {
            break;
        }
    }
    let n = recorder.stop()?;
    eprintln!("recorded {n} messages to {}", args.out.display());
    Ok(())
}

/// Scripted policy: twist actions follow the script (or creep forward),
/// everything else is the schema default.
fn demo_action(config: &EnvConfig, catalog: &SchemaCatalog, script: Option<&robomesh_core::teleop::Script<f64>>, t: f64) -> Action {
    let twist_schema = Twist2D::schema();
    config
        .action_space
        .0
        .iter()
        .map(|(ch, schema)| {
            let v = if *schema == twist_schema.name {
                let tw = script.map_or(robomesh_core::geometry::Twist::new(0.1, 0.0), |s| s.at(t));
                Twist2D { v: tw.v, w: tw.w }.to_value()
            } else {
                catalog.by_name(schema).map_or(Value::Bool(false), |s| Value::default_struct(s))
            };
            (ch.clone(), v)
        })
        .collect()
}

fn run_env_demo(cli: &Cli, name: Option<&str>, env_path: &Path, episodes: u32, steps: Option<u64>, script: Option<&Path>) -> BoxResult<()> {
    let mut config = EnvConfig::load(env_path)?;
    if config.sim.is_none() && std::env::var(launcher::ENV_SIM).is_ok() {
        config.sim = Some(launcher::sim_from_env());
    }
    if let Some(n) = name {
        config.name = n.to_string();
    }
    let script = script.map(load_script).transpose()?;
    let catalog = SchemaCatalog::standard();
    let token = signal_token()?;
    let mut env = make_env(config.clone(), &node_options(cli)?)?;
    let dt = 1.0 / config.step_rate_hz;
    let limit = steps.unwrap_or(config.horizon);
    let mut out = std::io::stdout().lock();
    for _ in 0..episodes {
        let (obs, info) = env.reset()?;
        writeln!(out, "{}", serde_json::json!({"event": "reset", "info": info, "missing": obs.missing()}))?;
        for k in 0..limit {
            if token.is_triggered() {
                return Ok(());
            }
            let r = env.step(&demo_action(&config, &catalog, script.as_ref(), k as f64 * dt))?;
            writeln!(
                out,
                "{}",
                serde_json::json!({
                    "event": "step",
                    "reward": r.reward,
                    "terminated": r.terminated,
                    "truncated": r.truncated,
                    "info": r.info,
                    "missing": r.observation.missing(),
                })
            )?;
            if r.terminated || r.truncated {
                break;
            }
        }
    }
    Ok(())
}

fn run_node(cli: &Cli, kind: &NodeKind) -> BoxResult<()> {
    let opts = node_options(cli)?;
    match kind {
        NodeKind::Sim2d(a) => run_sim(cli, a, if launcher::sim_from_env() { SimRole::Sim } else { SimRole::StubHardware }),
        NodeKind::StubHw(a) => run_sim(cli, a, SimRole::StubHardware),
        NodeKind::Slam(a) => {
            let mut cfg: SlamNodeConfig = load_yaml(a.config.as_deref())?;
            if let Some(n) = &a.name {
                cfg.name = n.clone();
            }
            supervise(start_slam(&opts, cfg)?)
        }
        NodeKind::Nav(a) => {
            let mut cfg: NavConfig = load_yaml(a.config.as_deref())?;
            if let Some(n) = &a.name {
                cfg.name = n.clone();
            }
            supervise(start_nav(&opts, cfg)?)
        }
        NodeKind::Teleop { name, script } => {
            let mut cfg = TeleopConfig::new(teleop_source(script.as_deref())?);
            if let Some(n) = name {
                cfg.name = n.clone();
            }
            supervise(start_teleop(&opts, cfg)?)
        }
        NodeKind::Bridge(a) => run_bridge(cli, a),
        NodeKind::EnvDemo {
            name,
            env,
            episodes,
            steps,
            script,
        } => run_env_demo(cli, name.as_deref(), env, *episodes, *steps, script.as_deref()),
        NodeKind::Logger(a) => run_record(cli, a),
    }
}

fn run_launch(config: &Path) -> ExitCode {
    let parsed = match LaunchConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let exe = match std::env::current_exe() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot locate the robomesh binary: {e}");
            return ExitCode::FAILURE;
        }
    };
    let workdir = config.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
    let token = match signal_token() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match Supervisor::start(parsed, LaunchOptions::new(exe, workdir)) {
        Ok(sup) => {
            eprintln!("launched {} nodes (registry {})", sup.pids().len(), sup.registry_address());
            ExitCode::from(sup.run(&token) as u8)
        }
        Err(LaunchError::Invalid(report)) => {
            eprint!("{report}");
            ExitCode::from(EXIT_INVALID as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_validate(config: &Path, json: bool) -> ExitCode {
    let report = match LaunchConfig::load(config) {
        Ok(c) => c.validate(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report.findings).unwrap_or_default());
    } else if report.findings.is_empty() {
        println!("{}: ok", config.display());
    } else {
        print!("{report}");
    }
    if report.has_errors() {
        ExitCode::from(EXIT_INVALID as u8)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_graph(cli: &Cli, format: GraphFormat) -> ExitCode {
    let snapshot = RegistryClient::connect(cli.registry.clone()).and_then(|mut c| c.snapshot());
    match snapshot {
        Ok(s) => {
            let g = Graph::from_snapshot(&s);
            match format {
                GraphFormat::Dot => print!("{}", g.to_dot()),
                GraphFormat::Json => print!("{}", g.to_json()),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: registry at {}: {e}", cli.registry);
            ExitCode::from(2)
        }
    }
}

/// Listens without registering, so the tool does not appear in the graph.
fn open_listener(cli: &Cli) -> BoxResult<Endpoint> {
    Ok(Endpoint::open(node_options(cli)?.transport)?)
}

fn run_spy(cli: &Cli, channels: &[String], window: f64, json: bool, duration: Option<f64>) -> BoxResult<()> {
    let endpoint = open_listener(cli)?;
    let filters: Vec<&str> = channels.iter().map(String::as_str).collect();
    let sub = endpoint.subscribe_any(&filters, 1 << 16);
    let mut spy = Spy::new(window);
    // Channels known to the registry are listed even while silent.
    if let Ok(mut c) = RegistryClient::connect(cli.registry.clone()) {
        if let Ok(nodes) = c.list_nodes() {
            for p in nodes.iter().flat_map(|n| &n.publishers) {
                if filters.iter().any(|f| robomesh_net::ChannelFilter::parse(f).matches(&p.channel)) && !p.channel.starts_with("__") {
                    spy.declare(&p.channel);
                }
            }
        }
    }
    let token = signal_token()?;
    let start = Instant::now();
    let refresh = Duration::from_millis(500);
    let mut next = start + refresh;
    let mut out = std::io::stdout().lock();
    loop {
        if let Some(e) = sub.recv(Duration::from_millis(20)) {
            spy.observe(&e.channel, e.fingerprint, e.recv_time_us);
        }
        for e in sub.drain() {
            spy.observe(&e.channel, e.fingerprint, e.recv_time_us);
        }
        let done = token.is_triggered() || duration.is_some_and(|d| start.elapsed().as_secs_f64() >= d);
        if Instant::now() >= next || done {
            next += refresh;
            let rows = spy.rows(now_us());
            if json {
                for r in &rows {
                    writeln!(out, "{}", serde_json::to_string(r)?)?;
                }
            } else {
                write!(out, "\x1b[2J\x1b[H{}", render_table(&rows))?;
            }
            out.flush()?;
        }
        if done {
            return Ok(());
        }
    }
}

fn run_tap(cli: &Cli, channel: &str, schema: &str, field: Option<&str>, count: Option<u64>) -> BoxResult<()> {
    let tap = Tap::new(&SchemaCatalog::standard(), schema, field)?;
    let endpoint = open_listener(cli)?;
    let sub = endpoint.subscribe(channel, 4096);
    let token = signal_token()?;
    let mut out = std::io::stdout().lock();
    if let Some(h) = tap.header() {
        writeln!(out, "{h}")?;
    }
    let mut n = 0;
    while !token.is_triggered() && count.is_none_or(|c| n < c) {
        let Some(e) = sub.recv(Duration::from_millis(100)) else { continue };
        match tap.line(&e) {
            TapLine::Out(l) => {
                writeln!(out, "{l}")?;
                out.flush()?;
                n += 1;
            }
            TapLine::Warning(w) => eprintln!("warning: {w}"),
        }
    }
    Ok(())
}

fn load_space(path: &Path) -> BoxResult<SpaceSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let doc: serde_yaml::Value = serde_yaml::from_str(&text)?;
    let node = doc.get("observation_space").cloned().unwrap_or(doc);
    Ok(serde_yaml::from_value(node)?)
}

fn run_log(cli: &Cli, cmd: &LogCmd) -> BoxResult<()> {
    match cmd {
        LogCmd::Record(a) => run_record(cli, a),
        LogCmd::Play { log, speed, remap, name } => {
            let contents = read_log(log)?;
            if contents.truncated {
                log::warn!("{}: truncated tail ignored", log.display());
            }
            let node = Node::create(name, &node_options(cli)?)?;
            let options = ReplayOptions {
                speed: *speed,
                remap: parse_remap(remap)?,
            };
            let stats = replay(&node, &contents, &options, &signal_token()?)?;
            eprintln!("replayed {} messages in {:.3} s", stats.published, stats.elapsed.as_secs_f64());
            Ok(())
        }
        LogCmd::Export {
            log,
            space,
            rate,
            mode,
            out,
            allow_missing,
        } => {
            let contents = read_log(log)?;
            let space = load_space(space)?;
            let mut options = ExportOptions::new(
                *rate,
                match mode {
                    ModeArg::Latest => ResampleMode::Latest,
                    ModeArg::Interp => ResampleMode::Interp,
                },
            );
            options.allow_missing = allow_missing.clone();
            let catalog = SchemaCatalog::standard();
            let report = match out {
                Some(p) => export_csv(&contents, &space, &catalog, &options, std::io::BufWriter::new(std::fs::File::create(p)?))?,
                None => export_csv(&contents, &space, &catalog, &options, std::io::stdout().lock())?,
            };
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("{} rows, {} columns", report.rows, report.columns.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Launch { config } => return run_launch(config),
        Cmd::Validate { config, json } => return run_validate(config, *json),
        Cmd::Graph { format } => return run_graph(&cli, *format),
        Cmd::Registry => (|| -> BoxResult<()> {
            let mut server = RegistryServer::bind(cli.registry.as_str())?;
            println!("registry listening on {}", server.local_addr());
            let token = signal_token()?;
            while !token.sleep(Duration::from_secs(1)) {}
            server.stop();
            Ok(())
        })(),
        Cmd::Node(kind) => run_node(&cli, kind),
        Cmd::Teleop(a) => (|| -> BoxResult<()> {
            let (name, suffix) = a.channel.split_once('/').ok_or("channel must be <node>/<suffix>")?;
            let mut cfg = TeleopConfig::new(teleop_source(a.script.as_deref())?);
            cfg.name = name.to_string();
            cfg.suffix = suffix.to_string();
            supervise(start_teleop(&node_options(&cli)?, cfg)?)
        })(),
        Cmd::Bridge(a) => run_bridge(&cli, a),
        Cmd::Log(c) => run_log(&cli, c),
        Cmd::Spy {
            channels,
            window,
            json,
            duration,
        } => run_spy(&cli, channels, *window, *json, *duration),
        Cmd::Tap { channel, schema, csv, count } => run_tap(&cli, channel, schema, csv.as_deref(), *count),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
