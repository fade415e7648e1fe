//! Acceptance suite. Each criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; any failure makes the process exit nonzero.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::RngExt;

use qkdsim::detector::Cause;
use qkdsim::harness::{
    calibrate_jitter, jitter_experiment, monte_carlo_mask, run_with_keys, sweep_mu, write_sweep_csv,
    CalibrationTargets, RATE_312_MHZ,
};
use qkdsim::linecode::{
    all_units, comma_at, decode, encode, mix_quantum, recover_quantum, CodeUnit, LineEncoder, RunningDisparity,
    TenBitSymbol,
};
use qkdsim::photonics::{predict_sift_rate, sample_photon_number};
use qkdsim::rng::{stream, Domain};
use qkdsim::{run, JitterModel, SimConfig};

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    title: &'static str,
    budget: Option<Duration>,
    check: fn() -> Outcome,
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn ac1_poisson() -> Outcome {
    let mut rng = stream(1, Domain::Test, 1);
    let n = 1_000_000;
    let (mut one, mut multi) = (0u64, 0u64);
    for _ in 0..n {
        match sample_photon_number(0.1, &mut rng) {
            0 => {}
            1 => one += 1,
            _ => multi += 1,
        }
    }
    let p1 = one as f64 / n as f64;
    let p2 = multi as f64 / n as f64;
    ensure!(within(p1, 0.0905, 0.003), "P(1) = {p1:.5}");
    ensure!(within(p2, 0.0047, 0.001), "P(>=2) = {p2:.5}");
    Ok(format!("P(1) = {p1:.5}, P(>=2) = {p2:.5}"))
}

fn parse_unit(s: &str) -> Result<CodeUnit, String> {
    let (x, y) = s
        .get(1..)
        .and_then(|r| r.split_once('.'))
        .ok_or_else(|| format!("bad unit {s}"))?;
    let x: u8 = x.parse().map_err(|_| format!("bad unit {s}"))?;
    let y: u8 = y.parse().map_err(|_| format!("bad unit {s}"))?;
    let byte = (y << 5) | x;
    match &s[..1] {
        "D" => Ok(CodeUnit::Data(byte)),
        "K" => CodeUnit::control(byte).map_err(|e| e.to_string()),
        _ => Err(format!("bad unit {s}")),
    }
}

fn parse_rd(s: &str) -> Result<RunningDisparity, String> {
    match s {
        "-" => Ok(RunningDisparity::Negative),
        "+" => Ok(RunningDisparity::Positive),
        _ => Err(format!("bad disparity {s}")),
    }
}

fn ac2_line_code() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/8b10b_golden.csv");
    let table = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut covered = BTreeSet::new();
    for line in table.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 4, "malformed row {line}");
        let unit = parse_unit(f[0])?;
        let rd = parse_rd(f[1])?;
        let symbol = TenBitSymbol::from_bits(u16::from_str_radix(f[2], 2).map_err(|e| e.to_string())?);
        let rd_out = parse_rd(f[3])?;
        ensure!(encode(unit, rd) == (symbol, rd_out), "encode {unit} at {rd:?}");
        ensure!(decode(symbol, rd) == Ok((unit, rd_out)), "decode {symbol} at {rd:?}");
        covered.insert((unit, rd == RunningDisparity::Positive));
    }
    let units: Vec<CodeUnit> = all_units().collect();
    ensure!(covered.len() == units.len() * 2, "table covers {} of {}", covered.len(), units.len() * 2);

    // 10^7 bits of random data with occasional commas
    let mut rng = stream(2, Domain::Test, 2);
    let mut enc = LineEncoder::default();
    let mut bits = Vec::with_capacity(10_000_000);
    while bits.len() < 10_000_000 {
        let unit = if rng.random_range(0..16) == 0 {
            CodeUnit::K28_5
        } else {
            CodeUnit::Data(rng.random())
        };
        enc.push(unit, &mut bits);
    }
    let (mut rds, mut max_rds, mut run, mut max_run) = (RunningDisparity::default().as_sum(), 0, 0, 0);
    let mut prev = None;
    for (i, &b) in bits.iter().enumerate() {
        rds += if b { 1 } else { -1 };
        max_rds = max_rds.max(rds.abs());
        ensure!(i % 10 != 9 || rds.abs() == 1, "digital sum {rds} at symbol boundary {i}");
        run = if prev == Some(b) { run + 1 } else { 1 };
        max_run = max_run.max(run);
        prev = Some(b);
    }
    ensure!(max_run <= 5, "run length {max_run}");
    ensure!(max_rds <= 3, "digital sum excursion {max_rds}");

    // misaligned commas: only after K28.7, a property of the standard code
    let k28_7 = CodeUnit::control(0xFC).map_err(|e| e.to_string())?;
    let mut pairs = 0u64;
    for &first in &units {
        for rd in [RunningDisparity::Negative, RunningDisparity::Positive] {
            let (s1, mid) = encode(first, rd);
            for &second in &units {
                let (s2, _) = encode(second, mid);
                let pair: Vec<bool> = s1.transmission_order().chain(s2.transmission_order()).collect();
                pairs += 1;
                for i in (1..=13).filter(|&i| i != 10) {
                    ensure!(
                        !comma_at(&pair, i) || first == k28_7,
                        "comma at offset {i} in {first} {second}"
                    );
                }
            }
        }
    }
    Ok(format!(
        "{} table rows, max run {max_run}, max |RDS| {max_rds}, {pairs} pairs scanned",
        covered.len()
    ))
}

fn ac3_xor() -> Outcome {
    let mut rng = stream(3, Domain::Test, 3);
    let mut total = 0usize;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=512);
        let classical: Vec<bool> = (0..len).map(|_| rng.random()).collect();
        // the quantum lane is sparse
        let quantum: Vec<bool> = (0..len).map(|_| rng.random_bool(0.05)).collect();
        let mixed = mix_quantum(&classical, &quantum).map_err(|e| e.to_string())?;
        let back = recover_quantum(&mixed, &classical).map_err(|e| e.to_string())?;
        ensure!(back == quantum, "round trip failed at length {len}");
        total += len;
    }
    Ok(format!("10000 pairs, {total} bits"))
}

fn ac4_calibration() -> Outcome {
    let cfg = SimConfig::default();
    let model = calibrate_jitter(CalibrationTargets::default(), &cfg.clock, JitterModel::default())
        .map_err(|e| e.to_string())?;
    let quad = model.mask_statistics(&cfg.clock);
    ensure!(within(quad.acceptance, 0.93, 0.005), "quadrature acceptance {}", quad.acceptance);
    ensure!(within(quad.next_group_leakage, 0.005, 0.002), "quadrature leakage {}", quad.next_group_leakage);
    let mc = monte_carlo_mask(&model, &cfg.clock, 1_000_000, cfg.seed, cfg.execution);
    ensure!(within(mc.acceptance, 0.93, 0.005), "monte carlo acceptance {}", mc.acceptance);
    ensure!(within(mc.next_group_leakage, 0.005, 0.002), "monte carlo leakage {}", mc.next_group_leakage);
    ensure!(
        within(mc.acceptance, quad.acceptance, 3.0 * mc.acceptance_sigma),
        "monte carlo acceptance {} vs quadrature {}",
        mc.acceptance,
        quad.acceptance
    );
    let fitted = SimConfig { jitter: model, ..cfg };
    let exp = jitter_experiment(&fitted, &[RATE_312_MHZ], 1_000_000).map_err(|e| e.to_string())?;
    let fwhm = exp.histograms[0].fwhm_ps().ok_or("empty histogram")?;
    ensure!(within(fwhm, 550.0, 25.0), "histogram fwhm {fwhm}");
    Ok(format!(
        "acceptance {:.4}/{:.4}, leakage {:.4}/{:.4} (quadrature/MC), fwhm {fwhm:.1} ps",
        quad.acceptance, mc.acceptance, quad.next_group_leakage, mc.next_group_leakage
    ))
}

fn ac5_prediction() -> Outcome {
    let cfg = SimConfig::default();
    let rate = predict_sift_rate(&cfg.budget, &cfg.clock, cfg.protocol)
        .map_err(|e| e.to_string())?
        .rate_bps;
    ensure!(within(rate, 8.88e5, 0.01 * 8.88e5), "predicted {rate}");
    Ok(format!("{rate:.0} bps"))
}

fn ac6_night_run() -> Outcome {
    let cfg = SimConfig::default();
    let m = run(&cfg).map_err(|e| e.to_string())?;
    let cause = |c| m.qber_by_cause.get(&c).copied().unwrap_or(0.0);
    let intersymbol = cause(Cause::Intersymbol);
    let leak = cause(Cause::Leak);
    // a blocked arm leaks p per photon against 1/4 conclusive on the open arm
    let p = cfg.budget.leak_probability();
    let leak_oracle = (p / 2.0) / (0.25 + p / 2.0);
    ensure!((6.0e5..=9.5e5).contains(&m.sifted_rate_bps), "rate {}", m.sifted_rate_bps);
    ensure!(m.qber <= 0.015, "qber {}", m.qber);
    ensure!(within(intersymbol, 0.0025, 0.001), "intersymbol {intersymbol}");
    ensure!(within(leak, leak_oracle, 0.001), "leak {leak} vs {leak_oracle}");
    Ok(format!(
        "rate {:.0} bps, qber {:.3} %, intersymbol {:.3} %, leak {:.3} % (oracle {:.3} %)",
        m.sifted_rate_bps,
        100.0 * m.qber,
        100.0 * intersymbol,
        100.0 * leak,
        100.0 * leak_oracle
    ))
}

const SWEEP_MU: [f64; 6] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4];

fn ac7_saturation() -> Outcome {
    let cfg = SimConfig::default();
    let rows = sweep_mu(&cfg, &SWEEP_MU).map_err(|e| e.to_string())?;
    let rates: Vec<f64> = rows.iter().map(|r| r.metrics.sifted_rate_bps).collect();
    ensure!(rates.windows(2).all(|w| w[1] >= w[0]), "not monotone: {rates:?}");
    let plateau_at = 1.0e6;
    ensure!(rates[0] < 0.5 * plateau_at, "no rising region: {rates:?}");
    for r in rows.iter().filter(|r| r.mu >= 0.2) {
        let rate = r.metrics.sifted_rate_bps;
        ensure!(within(rate, plateau_at, 0.1 * plateau_at), "mu {}: {rate}", r.mu);
        ensure!(r.metrics.frames_dropped > 0, "mu {}: no drops on the plateau", r.mu);
    }
    let shown: Vec<String> = rates.iter().map(|r| format!("{:.0}", r / 1e3)).collect();
    Ok(format!("kbps {}", shown.join(" ")))
}

fn ac8_background() -> Outcome {
    let mut night = SimConfig::default();
    night.budget.mu = 0.01;
    let mut day = night.clone();
    day.set_daylight(true);
    let qn = run(&night).map_err(|e| e.to_string())?.qber;
    let qd = run(&day).map_err(|e| e.to_string())?.qber;
    ensure!(qd > qn, "day {qd} vs night {qn}");
    let m = run(&SimConfig::default()).map_err(|e| e.to_string())?;
    let bg = m.qber_by_cause.get(&Cause::Background).copied().unwrap_or(0.0);
    ensure!(bg < m.qber - bg, "background {bg} of {}", m.qber);
    Ok(format!(
        "mu 0.01: day {:.2} % > night {:.2} %; mu 0.15 night: background {:.3} % of {:.3} %",
        100.0 * qd,
        100.0 * qn,
        100.0 * bg,
        100.0 * m.qber
    ))
}

fn sweep_csv(cfg: &SimConfig) -> Result<Vec<u8>, String> {
    let rows = sweep_mu(cfg, &SWEEP_MU).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    write_sweep_csv(&rows, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn run_two_process(dir: &Path, cfg_path: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let bin = env!("CARGO_BIN_EXE_qkdsim");
    let alice_key = dir.join("alice.key");
    let bob_key = dir.join("bob.key");
    let mut alice = Command::new(bin)
        .args(["run", "--listen", "127.0.0.1:0", "--config"])
        .arg(cfg_path)
        .arg("--alice-key")
        .arg(&alice_key)
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut lines = BufReader::new(alice.stderr.take().ok_or("no stderr")?).lines();
    let first = lines.next().ok_or("alice exited early")?.map_err(|e| e.to_string())?;
    let addr = first
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected alice output {first:?}"))?
        .to_string();
    let bob = Command::new(bin)
        .args(["run", "--connect", &addr, "--config"])
        .arg(cfg_path)
        .arg("--bob-key")
        .arg(&bob_key)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(bob.status.success(), "bob failed: {}", String::from_utf8_lossy(&bob.stderr));
    let status = alice.wait().map_err(|e| e.to_string())?;
    ensure!(status.success(), "alice failed");
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    Ok((read(&alice_key)?, read(&bob_key)?))
}

fn ac9_determinism() -> Outcome {
    let cfg = SimConfig {
        duration_s: 0.25,
        seed: 9,
        ..Default::default()
    };
    let a = sweep_csv(&cfg)?;
    let b = sweep_csv(&cfg)?;
    ensure!(a == b, "sweep CSVs differ");

    let link = SimConfig {
        duration_s: 0.05,
        seed: 9,
        ..Default::default()
    };
    let local = run_with_keys(&link).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("link.conf");
    std::fs::write(&cfg_path, link.to_config_string()).map_err(|e| e.to_string())?;
    let (alice, bob) = run_two_process(dir.path(), &cfg_path)?;
    ensure!(alice == local.alice.key.to_bytes(), "alice key differs between modes");
    ensure!(bob == local.bob.key.to_bytes(), "bob key differs between modes");
    ensure!(!alice.is_empty(), "empty key");
    Ok(format!(
        "sweep CSV {} bytes identical; {}-bit keys identical in-process and over TCP",
        a.len(),
        local.alice.key.len()
    ))
}

fn ac10_ideal() -> Outcome {
    let mut cfg = SimConfig {
        duration_s: 0.05,
        single_photon: true,
        jitter: JitterModel::delta(0.0),
        ..Default::default()
    };
    cfg.budget.path_loss_db = 0.0;
    cfg.budget.filter_transmissivity = 1.0;
    cfg.budget.quantum_efficiency = 1.0;
    cfg.budget.extinction_ratio = f64::INFINITY;
    cfg.budget.background_rate_hz = 0.0;
    cfg.capacity.enabled = false;
    let m = run(&cfg).map_err(|e| e.to_string())?;
    let slots = cfg.frames() * 2048;
    let conclusive = m.sifted_bits as f64 / slots as f64;
    ensure!(m.qber == 0.0, "qber {}", m.qber);
    ensure!(within(conclusive, 0.25, 0.005), "conclusive fraction {conclusive}");
    Ok(format!("qber 0, conclusive {conclusive:.4} over {slots} slots"))
}

fn main() {
    let criteria = [
        Criterion {
            id: "AC1",
            title: "Poisson source",
            budget: Some(Duration::from_secs(5)),
            check: ac1_poisson,
        },
        Criterion {
            id: "AC2",
            title: "8B/10B codec",
            budget: Some(Duration::from_secs(10)),
            check: ac2_line_code,
        },
        Criterion {
            id: "AC3",
            title: "XOR mixing",
            budget: None,
            check: ac3_xor,
        },
        Criterion {
            id: "AC4",
            title: "jitter calibration",
            budget: Some(Duration::from_secs(30)),
            check: ac4_calibration,
        },
        Criterion {
            id: "AC5",
            title: "analytic rate",
            budget: Some(Duration::from_secs(1)),
            check: ac5_prediction,
        },
        Criterion {
            id: "AC6",
            title: "night run",
            budget: Some(Duration::from_secs(120)),
            check: ac6_night_run,
        },
        Criterion {
            id: "AC7",
            title: "saturation sweep",
            budget: None,
            check: ac7_saturation,
        },
        Criterion {
            id: "AC8",
            title: "background",
            budget: None,
            check: ac8_background,
        },
        Criterion {
            id: "AC9",
            title: "determinism and transport",
            budget: None,
            check: ac9_determinism,
        },
        Criterion {
            id: "AC10",
            title: "ideal pipeline",
            budget: None,
            check: ac10_ideal,
        },
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {:<4} {} ({detail}) [{:.2?}]", c.id, c.title, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL {:<4} {}: {why} [{:.2?}]", c.id, c.title, elapsed);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
