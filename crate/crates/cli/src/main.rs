use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qkdsim::harness::{
    calibrate_jitter, jitter_experiment, monte_carlo_mask, run_alice, run_bob, run_with_keys, sweep_mu,
    write_sweep_csv, CalibrationTargets, RATE_312_MHZ, RATE_78_MHZ,
};
use qkdsim::protocol::SessionOutcome;
use qkdsim::transport::{accept, connect, listen, Mode, Role};
use qkdsim::{Execution, ProtocolKind, SimConfig, SimMetrics};

#[derive(Parser)]
#[command(name = "qkdsim", version, about = "Simulate a clock-synchronized B92/BB84 QKD link")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One end-to-end run; prints metrics.
    Run(RunArgs),
    /// Sifted rate and QBER over a list of mean photon numbers.
    Sweep(SweepArgs),
    /// Folded detector timing histograms at 312.5 and 78.125 MHz.
    Jitter(JitterArgs),
    /// Fit the jitter tail to mask targets; prints config lines.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    /// Daytime background rate instead of nighttime.
    #[arg(long)]
    daylight: bool,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    B92,
    Bb84,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Alice,
    Bob,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Wait for the peer on host:port (plays Alice unless --role says otherwise).
    #[arg(long, conflicts_with = "connect")]
    listen: Option<String>,
    /// Dial the peer at host:port (plays Bob unless --role says otherwise).
    #[arg(long)]
    connect: Option<String>,
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    /// Seconds to keep retrying --connect.
    #[arg(long, default_value_t = 30.0)]
    connect_timeout_s: f64,
    /// Metrics as `metric,value` CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Alice's sifted key, packed LSB first.
    #[arg(long)]
    alice_key: Option<PathBuf>,
    /// Bob's sifted key, packed LSB first.
    #[arg(long)]
    bob_key: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4])]
    mu_values: Vec<f64>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct JitterArgs {
    #[command(flatten)]
    common: Common,
    /// Detection events per pulse rate.
    #[arg(long, default_value_t = 1_000_000)]
    events: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.93)]
    acceptance: f64,
    #[arg(long, default_value_t = 0.005)]
    leakage: f64,
    /// Target FWHM in ps; 0 asks for a delta response.
    #[arg(long, default_value_t = 550.0)]
    fwhm: f64,
    /// Monte Carlo draws used to cross-check the fit.
    #[arg(long, default_value_t = 1_000_000)]
    draws: u64,
}

impl Common {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::from_file(path)?,
            None => SimConfig::default(),
        };
        if self.daylight {
            cfg.set_daylight(true);
        }
        if let Some(mu) = self.mu {
            cfg.budget.mu = mu;
        }
        if let Some(p) = self.protocol {
            cfg.protocol = match p {
                ProtocolArg::B92 => ProtocolKind::B92,
                ProtocolArg::Bb84 => ProtocolKind::Bb84,
            };
        }
        if let Some(d) = self.duration_s {
            cfg.duration_s = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_key(path: &Path, outcome: &SessionOutcome) -> Result<()> {
    std::fs::write(path, outcome.key.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn print_metrics(m: &SimMetrics, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "metric,value")?;
    writeln!(w, "duration_s,{:.6}", m.duration_s)?;
    writeln!(w, "sifted_bits,{}", m.sifted_bits)?;
    writeln!(w, "sifted_rate_bps,{:.3}", m.sifted_rate_bps)?;
    writeln!(w, "predicted_rate_bps,{:.3}", m.predicted_rate_bps)?;
    writeln!(w, "qber,{:.8}", m.qber)?;
    for (cause, q) in &m.qber_by_cause {
        writeln!(w, "qber_{},{q:.8}", cause.as_str())?;
    }
    writeln!(w, "frames_offered,{}", m.frames_offered)?;
    writeln!(w, "frames_processed,{}", m.frames_processed)?;
    writeln!(w, "frames_dropped,{}", m.frames_dropped)?;
    writeln!(w, "mask_acceptance,{:.6}", m.mask_acceptance)?;
    writeln!(w, "next_group_leakage,{:.6}", m.next_group_leakage)?;
    writeln!(w, "coincidence_discards,{}", m.coincidence_discards)?;
    writeln!(w, "detection_events,{}", m.detection_events)?;
    writeln!(w, "reports,{}", m.reports)?;
    writeln!(w, "late_events,{}", m.late_events)?;
    writeln!(w, "protocol_anomalies,{}", m.protocol_anomalies)?;
    w.flush()
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    if let Some(a) = &args.listen {
        cfg.transport = Mode::Listen(a.clone());
    }
    if let Some(a) = &args.connect {
        cfg.transport = Mode::Connect(a.clone());
    }
    let role = match (args.role, &cfg.transport) {
        (_, Mode::InProcess) => None,
        (Some(RoleArg::Alice), _) => Some(Role::Alice),
        (Some(RoleArg::Bob), _) => Some(Role::Bob),
        (None, Mode::Listen(_)) => Some(Role::Alice),
        (None, Mode::Connect(_)) => Some(Role::Bob),
    };
    match role {
        Some(Role::Alice) if args.bob_key.is_some() => bail!("--bob-key needs the Bob endpoint"),
        Some(Role::Bob) if args.alice_key.is_some() => bail!("--alice-key needs the Alice endpoint"),
        _ => {}
    }

    let mut transport = match &cfg.transport {
        Mode::InProcess => None,
        Mode::Listen(addr) => {
            let listener = listen(addr).with_context(|| format!("listening on {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (t, peer) = accept(&listener)?;
            eprintln!("peer {peer} connected");
            Some(t)
        }
        Mode::Connect(addr) => {
            let patience = Duration::from_secs_f64(args.connect_timeout_s.max(0.0));
            Some(connect(addr, patience).with_context(|| format!("connecting to {addr}"))?)
        }
    };

    let metrics = match (role, transport.as_mut()) {
        (Some(Role::Alice), Some(t)) => {
            let outcome = run_alice(&cfg, t)?;
            if let Some(p) = &args.alice_key {
                write_key(p, &outcome)?;
            }
            eprintln!(
                "alice: {} sifted bits from {} of {} frames, {} anomalies",
                outcome.key.len(),
                outcome.stats.frames_retained,
                outcome.stats.frames_offered,
                outcome.stats.anomalies
            );
            return Ok(());
        }
        (Some(Role::Bob), Some(t)) => {
            let (metrics, outcome) = run_bob(&cfg, t)?;
            if let Some(p) = &args.bob_key {
                write_key(p, &outcome)?;
            }
            metrics
        }
        _ => {
            let out = run_with_keys(&cfg)?;
            if let Some(p) = &args.alice_key {
                write_key(p, &out.alice)?;
            }
            if let Some(p) = &args.bob_key {
                write_key(p, &out.bob)?;
            }
            out.metrics
        }
    };
    let mut w = output(args.out.as_deref())?;
    print_metrics(&metrics, &mut w)?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let rows = sweep_mu(&cfg, &args.mu_values)?;
    let mut w = output(args.out.as_deref())?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn jitter(args: JitterArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let exp = jitter_experiment(&cfg, &[RATE_312_MHZ, RATE_78_MHZ], args.events)?;
    let mut w = output(args.out.as_deref())?;
    exp.write_csv(&mut w)?;
    w.flush()?;
    for (rate, h) in exp.rates_hz.iter().zip(&exp.histograms) {
        let fwhm = h.fwhm_ps().map_or("n/a".into(), |f| format!("{f:.1} ps"));
        let span = h.span_ps(0.999).map_or("n/a".into(), |s| format!("{s:.1} ps"));
        eprintln!("{:.3} MHz: fwhm {fwhm}, 99.9% span {span}", rate / 1e6);
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let targets = CalibrationTargets {
        acceptance: args.acceptance,
        leakage: args.leakage,
        fwhm_ps: Some(args.fwhm),
    };
    let model = calibrate_jitter(targets, &cfg.clock, cfg.jitter)?;
    let quad = model.mask_statistics(&cfg.clock);
    let mc = monte_carlo_mask(&model, &cfg.clock, args.draws, cfg.seed, cfg.execution);
    println!("jitter_core_sigma_ps = {}", model.core_sigma_ps);
    println!("jitter_tail_fraction = {}", model.tail_fraction);
    println!("jitter_tail_decay_ps = {}", model.tail_decay_ps);
    println!("jitter_offset_ps = {}", model.offset_ps);
    eprintln!(
        "quadrature: acceptance {:.6}, leakage {:.6}, fwhm {:.1} ps",
        quad.acceptance,
        quad.next_group_leakage,
        model.fwhm_ps()
    );
    eprintln!(
        "monte carlo: acceptance {:.6} ± {:.6}, leakage {:.6} ± {:.6}",
        mc.acceptance, mc.acceptance_sigma, mc.next_group_leakage, mc.leakage_sigma
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Jitter(a) => jitter(a),
        Command::Calibrate(a) => calibrate(a),
    }
}
