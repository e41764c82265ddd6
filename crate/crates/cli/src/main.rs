use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dine_core::dine::ThresholdKind;
use dine_core::par::Execution;
use dine_core::runtime::sweep::{grid, sweep, write_csv};
use dine_core::runtime::telemetry::{serve, ReplaySource, ServeOptions, StepSource};
use dine_core::runtime::{
    load_trace, run_loop, run_with_sink, ControlLoop, RunConfig, RunSummary, StepRecord,
    TraceWriter,
};

/// Self-adaptive web-server control with a decomposed-reward DQN agent and
/// runtime explanation events.
#[derive(Parser, Debug)]
#[command(name = "dine", version)]
struct Cli {
    /// Key-value configuration file (`key = value` per line, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set agent.gamma=0.95`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    steps: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the control loop headless, optionally writing a JSONL trace.
    Run {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the control loop live and stream it to telemetry clients.
    Serve {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Serve a recorded trace in place of a live run.
    Replay {
        trace: PathBuf,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Count DINEs over a range of thresholds and print CSV.
    Sweep {
        /// Sweep the important-interaction threshold.
        #[arg(long)]
        rho: bool,
        /// Sweep the extremum margin threshold.
        #[arg(long)]
        phi: bool,
        /// Recorded trace to analyse; without it a run is performed first.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Intervals between the lowest and highest threshold.
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Upper end of the phi range (rho always spans 0..1).
        #[arg(long, default_value_t = 1.0)]
        phi_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct NetArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Wait for this many clients before the first step.
    #[arg(long, default_value_t = 0)]
    wait_clients: usize,
    /// Pause between steps, in milliseconds.
    #[arg(long, default_value_t = 0)]
    interval_ms: u64,
    /// Keep answering clients after the last step until they disconnect.
    #[arg(long)]
    linger: bool,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = cli.steps {
        cfg.total_steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn serve_options(cfg: &RunConfig, net: &NetArgs) -> ServeOptions {
    ServeOptions {
        backlog: cfg.backlog,
        wait_for_clients: net.wait_clients,
        step_interval: (net.interval_ms > 0).then(|| Duration::from_millis(net.interval_ms)),
        linger: net.linger,
    }
}

fn bind(cfg: &RunConfig, net: &NetArgs) -> Result<TcpListener> {
    let port = net.port.unwrap_or(cfg.port);
    let listener = TcpListener::bind((net.host.as_str(), port))
        .with_context(|| format!("binding {}:{port}", net.host))?;
    eprintln!("telemetry listening on {}", listener.local_addr()?);
    Ok(listener)
}

fn serve_source<S: StepSource>(
    source: &mut S,
    listener: TcpListener,
    opts: &ServeOptions,
    trace: Option<&PathBuf>,
) -> Result<u64> {
    match trace {
        Some(path) => {
            let mut writer = TraceWriter::create(path, &source.header())
                .with_context(|| format!("creating {}", path.display()))?;
            let n = serve(source, listener, opts, |r| writer.write(r))?;
            writer.finish()?;
            Ok(n)
        }
        None => Ok(serve(source, listener, opts, |_| Ok(()))?),
    }
}

fn print_summary(summary: &RunSummary) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = build_config(&cli)?;
    match &cli.command {
        Command::Run { trace } => {
            if let Some(t) = trace {
                cfg.trace_path = Some(t.clone());
            }
            let summary = run_loop(cfg)?;
            print_summary(&summary)?;
        }
        Command::Serve { trace, net } => {
            let listener = bind(&cfg, net)?;
            let opts = serve_options(&cfg, net);
            let trace = trace.clone().or_else(|| cfg.trace_path.clone());
            let mut lp = ControlLoop::new(cfg)?;
            let n = serve_source(&mut lp, listener, &opts, trace.as_ref())?;
            eprintln!("served {n} steps");
            print_summary(lp.summary())?;
        }
        Command::Replay { trace, net } => {
            let (header, records) =
                load_trace(trace).with_context(|| format!("reading {}", trace.display()))?;
            let listener = bind(&cfg, net)?;
            let opts = serve_options(&cfg, net);
            let mut src = ReplaySource::new(header, records);
            let n = serve_source(&mut src, listener, &opts, None)?;
            eprintln!("replayed {n} steps");
        }
        Command::Sweep {
            rho,
            phi,
            trace,
            points,
            phi_max,
            out,
        } => {
            if !rho && !phi {
                bail!("sweep needs --rho, --phi or both");
            }
            let records: Vec<StepRecord> = match trace {
                Some(path) => {
                    load_trace(path)
                        .with_context(|| format!("reading {}", path.display()))?
                        .1
                }
                None => {
                    let mut lp = ControlLoop::new(cfg)?;
                    let mut recs = Vec::new();
                    run_with_sink(&mut lp, |r| {
                        recs.push(r.clone());
                        Ok(())
                    })?;
                    recs
                }
            };
            let mut pts = Vec::new();
            if *rho {
                pts.extend(sweep(
                    &records,
                    ThresholdKind::Rho,
                    &grid(0.0, 1.0, *points),
                    Execution::default(),
                )?);
            }
            if *phi {
                pts.extend(sweep(
                    &records,
                    ThresholdKind::Phi,
                    &grid(0.0, *phi_max, *points),
                    Execution::default(),
                )?);
            }
            match out {
                Some(path) => write_csv(BufWriter::new(File::create(path)?), &pts)?,
                None => write_csv(io::stdout().lock(), &pts)?,
            }
        }
    }
    Ok(())
}
