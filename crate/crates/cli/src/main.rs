//! Batch front-end for the radial toolkit: JSON-configured runs, one-axis
//! sweeps, JSON + CSV reports with reproducibility hashes.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 hypothesis check evaluated to "does not hold".

mod commands;
mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use commands::{run_command, CliError};
use config::{RunConfig, SweepAxis};
use qcurv::report::Warning;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "qcurv", version, about = "Radial toolkit for singular fourth-order conformal equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct Common {
    /// JSON run configuration; CLI flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for report.json and CSV tables.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent runs for sweeps.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form constants and the Beta-integral lattice vs quadrature.
    Constants {
        #[arg(long)]
        n: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Oracle audit of the radial derivative identities.
    AuditDerivatives {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Validity thresholds rho1, rho2, rho3 with sampled sign conditions.
    Thresholds {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate an existence-hypothesis inequality.
    CheckHypothesis {
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, allow_negative_numbers = true)]
        rg: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        a: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        f: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        lap_f: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Bubble energy expansions and scaling exponents.
    Bubble {
        #[arg(long)]
        n: Option<u64>,
        /// Comma-separated strictly decreasing epsilon list.
        #[arg(long)]
        epsilons: Option<String>,
        /// Hoelder exponent; enables the scaling report.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        f_p: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        lap_f_p: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        s_g: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Constrained quotient minimization on a radial grid.
    Minimize {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        cells: Option<u64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        a0: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        b0: Option<f64>,
        #[arg(long)]
        rho_min: Option<f64>,
        #[arg(long)]
        f_p: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Warm-started continuation of the weight exponents toward (2, 4).
    Continuation {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        cells: Option<u64>,
        /// Path as "gamma:alpha,gamma:alpha,...".
        #[arg(long)]
        path: Option<String>,
        #[arg(long)]
        rho_min: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Kernel-decay classification and Hoelder class tables.
    Regularity {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        j_max: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common, command: &str) -> Result<(RunConfig, usize), CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("malformed config: {e}")))?;
            if cfg.command != command {
                return Err(CliError::Validation(format!(
                    "config is for command '{}', invoked as '{command}'",
                    cfg.command
                )));
            }
            cfg
        }
        None => RunConfig::new(command),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok((cfg, common.workers.unwrap_or(1).max(1)))
}

fn parse_eps_list(s: &str) -> Result<Value, CliError> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| CliError::Validation(format!("bad epsilon list: {e}")))?;
    Ok(json!(vals))
}

fn parse_path_list(s: &str) -> Result<Value, CliError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let (g, a) = part
            .split_once(':')
            .ok_or_else(|| CliError::Validation(format!("bad path entry '{part}', want g:a")))?;
        let g: f64 = g.trim().parse().map_err(|e| CliError::Validation(format!("{e}")))?;
        let a: f64 = a.trim().parse().map_err(|e| CliError::Validation(format!("{e}")))?;
        out.push(json!([g, a]));
    }
    Ok(Value::Array(out))
}

fn build_config(cli: Cli) -> Result<(RunConfig, usize), CliError> {
    let fnum = |x: Option<f64>| x.map(|v| json!(v));
    let unum = |x: Option<u64>| x.map(|v| json!(v));
    match cli.cmd {
        Cmd::Constants { n, common } => {
            let (mut cfg, w) = load_config(&common, "constants")?;
            cfg.set_if("n", unum(n));
            Ok((cfg, w))
        }
        Cmd::AuditDerivatives { n, alpha, common } => {
            let (mut cfg, w) = load_config(&common, "audit-derivatives")?;
            cfg.set_if("n", unum(n));
            cfg.set_if("alpha", fnum(alpha));
            Ok((cfg, w))
        }
        Cmd::Thresholds { n, alpha, common } => {
            let (mut cfg, w) = load_config(&common, "thresholds")?;
            cfg.set_if("n", unum(n));
            cfg.set_if("alpha", fnum(alpha));
            Ok((cfg, w))
        }
        Cmd::CheckHypothesis {
            variant,
            n,
            rg,
            a,
            f,
            lap_f,
            common,
        } => {
            let (mut cfg, w) = load_config(&common, "check-hypothesis")?;
            cfg.set_if("variant", variant.map(|v| json!(v)));
            cfg.set_if("n", unum(n));
            cfg.set_if("rg", fnum(rg));
            cfg.set_if("a", fnum(a));
            cfg.set_if("f", fnum(f));
            cfg.set_if("lap_f", fnum(lap_f));
            Ok((cfg, w))
        }
        Cmd::Bubble {
            n,
            epsilons,
            p,
            f_p,
            lap_f_p,
            s_g,
            common,
        } => {
            let (mut cfg, w) = load_config(&common, "bubble")?;
            cfg.set_if("n", unum(n));
            if let Some(e) = epsilons {
                cfg.set("epsilons", parse_eps_list(&e)?);
            }
            cfg.set_if("p", fnum(p));
            cfg.set_if("f_p", fnum(f_p));
            cfg.set_if("lap_f_p", fnum(lap_f_p));
            cfg.set_if("s_g", fnum(s_g));
            Ok((cfg, w))
        }
        Cmd::Minimize {
            n,
            cells,
            gamma,
            alpha,
            a0,
            b0,
            rho_min,
            f_p,
            common,
        } => {
            let (mut cfg, w) = load_config(&common, "minimize")?;
            cfg.set_if("n", unum(n));
            cfg.set_if("cells", unum(cells));
            cfg.set_if("gamma", fnum(gamma));
            cfg.set_if("alpha", fnum(alpha));
            cfg.set_if("a0", fnum(a0));
            cfg.set_if("b0", fnum(b0));
            cfg.set_if("rho_min", fnum(rho_min));
            cfg.set_if("f_p", fnum(f_p));
            Ok((cfg, w))
        }
        Cmd::Continuation {
            n,
            cells,
            path,
            rho_min,
            common,
        } => {
            let (mut cfg, w) = load_config(&common, "continuation")?;
            cfg.set_if("n", unum(n));
            cfg.set_if("cells", unum(cells));
            if let Some(p) = path {
                cfg.set("path", parse_path_list(&p)?);
            }
            cfg.set_if("rho_min", fnum(rho_min));
            Ok((cfg, w))
        }
        Cmd::Regularity { n, p, j_max, common } => {
            let (mut cfg, w) = load_config(&common, "regularity")?;
            cfg.set_if("n", unum(n));
            cfg.set_if("p", fnum(p));
            cfg.set_if("j_max", unum(j_max));
            Ok((cfg, w))
        }
    }
}

struct RunSummary {
    hypothesis_failed: bool,
}

fn run_single(cfg: &RunConfig, dir: &Path) -> Result<RunSummary, CliError> {
    let out = run_command(cfg)?;
    report::write_report(dir, cfg, &out.payload, out.csvs, &out.warnings)
        .map_err(|e| CliError::Numerical(format!("cannot write report: {e}")))?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Ok(RunSummary {
        hypothesis_failed: out.hypothesis_failed,
    })
}

fn run_sweep(cfg: &RunConfig, axis: &SweepAxis, workers: usize) -> Result<RunSummary, CliError> {
    if axis.values.is_empty() {
        // An empty axis degenerates to a single run of the template.
        let mut single = cfg.clone();
        single.sweep = None;
        return run_single(&single, Path::new(&cfg.output_dir));
    }
    let runs: Vec<RunConfig> = axis
        .values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.sweep = None;
            c.set(&axis.axis, v.clone());
            c
        })
        .collect();
    let root = PathBuf::from(&cfg.output_dir);
    let n = runs.len();
    let mut slots: Vec<Option<Result<String, String>>> = (0..n).map(|_| None).collect();
    {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots_mutex = std::sync::Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for _ in 0..workers.min(n) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let sub = root.join(format!("sweep_{i:03}"));
                    let res = match run_command(&runs[i]) {
                        Ok(out) => report::write_report(
                            &sub,
                            &runs[i],
                            &out.payload,
                            out.csvs,
                            &out.warnings,
                        )
                        .map(|_| report::payload_hash(&out.payload))
                        .map_err(|e| format!("io: {e}")),
                        Err(e) => Err(e.to_string()),
                    };
                    slots_mutex.lock().expect("no poisoned runs")[i] = Some(res);
                });
            }
        });
    }

    // Reduce in configuration order regardless of completion order.
    let mut rows = Vec::new();
    let mut failures = 0;
    let mut payload_runs = Vec::new();
    for (i, slot) in slots.iter().enumerate() {
        let value = &axis.values[i];
        match slot.as_ref().expect("every slot filled") {
            Ok(hash) => {
                rows.push(format!("{i},{value},ok,{hash}"));
                payload_runs
                    .push(json!({"index": i, "value": value, "status": "ok", "payload_hash": hash}));
            }
            Err(msg) => {
                failures += 1;
                rows.push(format!("{i},{value},failed,"));
                payload_runs
                    .push(json!({"index": i, "value": value, "status": "failed", "error": msg}));
            }
        }
    }
    let payload = json!({
        "axis": axis.axis,
        "runs": payload_runs,
        "failures": failures,
    });
    let csv = report::CsvFile::new("sweep_summary.csv", "index,value,status,payload_hash", rows);
    let warnings: Vec<Warning> = if failures > 0 {
        vec![Warning::new(
            "cli_harness",
            "sweep",
            format!("{failures} of {n} sweep runs failed; see sweep_summary.csv"),
        )]
    } else {
        vec![]
    };
    report::write_report(&root, cfg, &payload, vec![csv], &warnings)
        .map_err(|e| CliError::Numerical(format!("cannot write sweep report: {e}")))?;
    if failures > 0 {
        return Err(CliError::Numerical(format!(
            "{failures} of {n} sweep runs failed"
        )));
    }
    Ok(RunSummary {
        hypothesis_failed: false,
    })
}

fn main() {
    let cli = Cli::parse();
    let outcome = build_config(cli).and_then(|(cfg, workers)| match cfg.sweep.clone() {
        Some(axis) => run_sweep(&cfg, &axis, workers),
        None => {
            let dir = PathBuf::from(&cfg.output_dir);
            run_single(&cfg, &dir)
        }
    });
    match outcome {
        Ok(summary) => {
            if summary.hypothesis_failed {
                eprintln!("hypothesis check: does not hold");
                std::process::exit(4);
            }
        }
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(3);
        }
    }
}
