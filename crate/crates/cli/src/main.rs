//! `fedada`: run, sweep, verify and summarize federated optimization experiments.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedada_core::bounds::{fit_rate, theorem_rhs};
use fedada_core::config::{from_raw, RawConfig};
use fedada_core::metrics::{emit_metrics, load_metrics, write_report};
use fedada_core::numeric::ParamVector;
use fedada_core::{summarize, ConfigErrors, EngineError, ExperimentConfig, RoundRecord};

#[derive(Parser)]
#[command(
    name = "fedada",
    version,
    about = "Jointly adaptive federated optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment for every configured seed.
    ///
    /// Writes `seed_<s>.csv` per seed and `bounds.csv` (one row per seed) into
    /// the output directory.
    Run {
        config: PathBuf,
        /// Output directory; defaults to `experiment.output`, then `.`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Cartesian product of a hyperparameter grid.
    ///
    /// Each grid line reads `section.key = v1 | v2 | ...`. Every cell gets a
    /// directory `cell_<i>/` holding its config and per-seed CSVs, and
    /// `index.csv` lists the cell values and mean final test loss.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Run the oracle and invariant suite; exits 3 if any check fails.
    Verify,
    /// Summarize the `seed_*.csv` files in a directory.
    ///
    /// Writes `report.csv` (per-round mean and 95% band) and `rates.csv`
    /// (per-seed log-log slope of the min-so-far gradient norm).
    Report { dir: PathBuf },
}

enum Failure {
    Validation(String),
    Divergence(String),
    Verification,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Divergence(_) => 2,
            Failure::Verification => 3,
        }
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => Failure::Validation(c.to_string()),
            other => Failure::Divergence(other.to_string()),
        }
    }
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Validation(format!("{}: {e}", path.display()))
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_raw(path: &Path) -> Result<RawConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(io_fail(path))?;
    Ok(RawConfig::parse(&text)?)
}

const BOUNDS_HEADER: &str = "seed,phi1,phi2,rhs,observed,margin,min_phi1_margin,min_phi2_margin,total_bits,ratio_to_fedavg,peak_client_state_floats";

/// Run every seed of `cfg` into `out`; returns the per-seed records.
fn run_config(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Vec<RoundRecord>>, Failure> {
    std::fs::create_dir_all(out).map_err(io_fail(out))?;
    let mut bounds = format!("{BOUNDS_HEADER}\n");
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let problem = cfg
            .problem
            .build(seed)
            .map_err(|e| Failure::Validation(e.to_string()))?;
        let engine = cfg
            .engine_config(seed, problem.dim())
            .map_err(|e| Failure::Validation(e.to_string()))?;
        let recs = fedada_core::run_experiment(problem.as_ref(), &engine)?;
        let path = out.join(format!("seed_{seed}.csv"));
        emit_metrics(&recs, &path).map_err(io_fail(&path))?;

        let nan = f64::NAN;
        let (phi1, phi2, rhs, observed, margin) = match cfg.bound_inputs(problem.as_ref()) {
            Some(inp) => {
                let x0 = ParamVector::filled(problem.dim(), cfg.x0);
                let g0 = problem.global_gradient(&x0).norm_sq();
                let before_last = &recs[..recs.len().saturating_sub(1)];
                let observed = before_last
                    .iter()
                    .map(|r| r.grad_norm * r.grad_norm)
                    .fold(g0, f64::min);
                let rep = theorem_rhs(&inp, Some(observed));
                (
                    rep.phi1,
                    rep.phi2,
                    rep.rhs.unwrap_or(nan),
                    observed,
                    rep.margin.unwrap_or(nan),
                )
            }
            None => (nan, nan, nan, nan, nan),
        };
        let min1 = recs.iter().map(|r| r.phi1_margin).fold(nan, f64::min);
        let min2 = recs.iter().map(|r| r.phi2_margin).fold(nan, f64::min);
        let s = summarize(&recs);
        let _ = writeln!(
            bounds,
            "{seed},{},{},{},{},{},{},{},{},{},{}",
            real(phi1),
            real(phi2),
            real(rhs),
            real(observed),
            real(margin),
            real(min1),
            real(min2),
            s.total_bits,
            real(s.ratio_to_fedavg),
            s.peak_client_state_floats
        );
        if let Some(last) = recs.last() {
            println!(
                "seed {seed}: {} rounds, final train loss {:.6e}, test loss {:.6e}, grad norm {:.6e}, {} bits",
                recs.len(),
                last.train_loss,
                last.test_loss,
                last.grad_norm,
                s.total_bits
            );
        }
        runs.push(recs);
    }
    let path = out.join("bounds.csv");
    std::fs::write(&path, bounds).map_err(io_fail(&path))?;
    Ok(runs)
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = from_raw(read_raw(config)?)?;
    let out = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    run_config(&cfg, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// `section.key = v1 | v2` lines; blank lines and `#` comments are skipped.
fn parse_grid(text: &str) -> Result<Vec<(String, Vec<String>)>, Failure> {
    let mut axes = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Failure::Validation(format!(
                "grid line {}: expected `section.key = v1 | v2`",
                n + 1
            ))
        })?;
        let values: Vec<String> = v
            .split('|')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Failure::Validation(format!(
                "grid line {}: no values",
                n + 1
            )));
        }
        axes.push((k.trim().to_string(), values));
    }
    Ok(axes)
}

fn cmd_sweep(config: &Path, grid: &Path, out: &Path) -> Result<(), Failure> {
    let base = read_raw(config)?;
    let axes = parse_grid(&std::fs::read_to_string(grid).map_err(io_fail(grid))?)?;
    let cells: usize = axes.iter().map(|(_, v)| v.len()).product();

    // Validate every cell before running any of them.
    let mut configs = Vec::with_capacity(cells);
    for i in 0..cells {
        let mut raw = base.clone();
        let mut rest = i;
        let mut picks = Vec::new();
        for (key, values) in axes.iter().rev() {
            let v = &values[rest % values.len()];
            rest /= values.len();
            raw.set(key, v)
                .map_err(|e| Failure::Validation(e.to_string()))?;
            picks.push(v.clone());
        }
        picks.reverse();
        let cfg =
            from_raw(raw.clone()).map_err(|e| Failure::Validation(format!("cell {i}: {e}")))?;
        configs.push((raw, cfg, picks));
    }

    std::fs::create_dir_all(out).map_err(io_fail(out))?;
    let mut index = String::from("cell");
    for (k, _) in &axes {
        let _ = write!(index, ",{k}");
    }
    index.push_str(",seeds,final_test_loss_mean\n");
    for (i, (raw, cfg, picks)) in configs.iter().enumerate() {
        let dir = out.join(format!("cell_{i:03}"));
        println!("cell {i}: {}", picks.join(", "));
        let runs = run_config(cfg, &dir)?;
        let path = dir.join("config.txt");
        std::fs::write(&path, raw.to_text()).map_err(io_fail(&path))?;
        let finals: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.last().map(|l| l.test_loss))
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let _ = writeln!(
            index,
            "{i},{},{},{}",
            picks.join(","),
            runs.len(),
            real(mean)
        );
    }
    let path = out.join("index.csv");
    std::fs::write(&path, index).map_err(io_fail(&path))?;
    println!("wrote {cells} cells to {}", out.display());
    Ok(())
}

fn cmd_verify() -> Result<(), Failure> {
    let checks = fedada_core::verify::run_all();
    let failed = checks.iter().filter(|c| !c.pass).count();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        return Err(Failure::Verification);
    }
    Ok(())
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

fn cmd_report(dir: &Path) -> Result<(), Failure> {
    let mut files: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)
        .map_err(io_fail(dir))?
        .filter_map(|e| {
            let path = e.ok()?.path();
            let name = path.file_name()?.to_str()?;
            let seed = name
                .strip_prefix("seed_")?
                .strip_suffix(".csv")?
                .parse()
                .ok()?;
            Some((seed, path))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Validation(format!(
            "{}: no seed_*.csv files",
            dir.display()
        )));
    }
    let runs: Vec<Vec<RoundRecord>> = files
        .iter()
        .map(|(_, p)| load_metrics(p).map_err(|e| Failure::Validation(e.to_string())))
        .collect::<Result<_, _>>()?;

    let path = dir.join("report.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_fail(&path))?);
    write_report(&runs, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_fail(&path))?;

    let mut rates = String::from("seed,slope\n");
    let mut slopes = Vec::new();
    for ((seed, _), recs) in files.iter().zip(&runs) {
        let series: Vec<f64> = recs.iter().map(|r| r.grad_norm).collect();
        match fit_rate(&series) {
            Ok(s) => {
                slopes.push(s);
                let _ = writeln!(rates, "{seed},{}", real(s));
            }
            Err(e) => eprintln!("seed {seed}: no rate fit ({e})"),
        }
    }
    let path = dir.join("rates.csv");
    std::fs::write(&path, rates).map_err(io_fail(&path))?;

    let finals: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.last().map(|l| l.test_loss))
        .collect();
    let (m, h) = mean_ci(&finals);
    println!("{} seeds; final test loss {m:.6e} +- {h:.3e}", runs.len());
    if !slopes.is_empty() {
        let (m, h) = mean_ci(&slopes);
        println!(
            "min-so-far grad norm slope {m:.4} +- {h:.4} ({} fits)",
            slopes.len()
        );
    }
    let s = summarize(&runs[0]);
    println!(
        "ledger (seed {}): {} bits total, {:.4}x FedAvg, peak client state {} floats",
        files[0].0, s.total_bits, s.ratio_to_fedavg, s.peak_client_state_floats
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Sweep { config, grid, out } => cmd_sweep(&config, &grid, &out),
        Command::Verify => cmd_verify(),
        Command::Report { dir } => cmd_report(&dir),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Divergence(m) => eprintln!("diverged: {m}"),
                Failure::Verification => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
