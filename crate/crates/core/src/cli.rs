//! The `robust-miso` command line.
//!
//! Every command is a pure function of its flags and input files: parallel
//! work keeps grid order and the solver is deterministic, so re-running a
//! command reproduces its outputs byte for byte. Each command that solves
//! cone programs also writes `<output>.log` with one line per grid point.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::asymptotics::{
    db_to_linear, default_slope_window, ebno_region_from_table, high_snr_slope_estimate, linear_to_db,
    low_snr_metrics, multiplexing_gain, slope_region_from_table, spectral_efficiency_curve, sum_rate_sweep,
    uniform_laws, ErrorScalingLaw, Strategy,
};
use crate::error::{Error, Result};
use crate::model::{generate_scenario, load_scenario, save_scenario, BeamformerSet, Scenario, ScenarioSpec};
use crate::pareto::{
    boundary_region, export_region, format_value, sweep_candidates, sweep_region, ExportFormat,
    GridRecord, LambdaGrid,
};
use crate::robust_design::{robust_mrt, ConeStatus};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "ROBUST_MISO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "robust-miso", version, about = "Robust beamforming analysis for MISO interference channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random scenario and write it as JSON.
    Generate(GenerateArgs),
    /// Sample the robust rate region on a λ grid.
    Region(RegionArgs),
    /// Maximum sum rate versus SNR.
    Sumrate(SumrateArgs),
    /// Minimum energy per bit, wideband slopes and spectral efficiency.
    Lowsnr(LowsnrArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of links; defaults to the number of antenna counts.
    #[arg(long = "k")]
    pub k: Option<usize>,
    /// Antenna count per transmitter, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub antennas: Vec<usize>,
    /// Uncertainty radius: one value for every pair or K² values row-major.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    pub eps: Vec<f64>,
    /// Power budget: one value or one per transmitter.
    #[arg(long, value_delimiter = ',', default_value = "1", allow_negative_numbers = true)]
    pub power: Vec<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub noise_power: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short, default_value = "scenario.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// λ grid step; must divide one.
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = RegionFormat::Csv)]
    pub format: RegionFormat,
    /// Write every tuple of the candidate product instead of the boundary.
    #[arg(long)]
    pub unfiltered: bool,
    #[arg(long, short, default_value = "region.csv")]
    pub out: PathBuf,
    /// Exit successfully even if some grid points failed to solve.
    #[arg(long)]
    pub allow_failures: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawArg {
    Constant,
    InverseSqrt,
    InverseCbrt,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    RobustGrid,
    ZeroForcing,
    SingleUserMrt,
    JointMrt,
}

#[derive(Debug, Args)]
pub struct SumrateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = LawArg::Constant)]
    pub law: LawArg,
    /// Law coefficient `a` in `ε(ρ) = a·ρ^(−exponent)`. Defaults to the
    /// scenario's largest radius for the constant law and to 1 otherwise.
    #[arg(long)]
    pub coef: Option<f64>,
    /// Exponent of the custom law.
    #[arg(long, allow_negative_numbers = true)]
    pub exponent: Option<f64>,
    #[arg(long, value_enum, default_value_t = StrategyArg::RobustGrid)]
    pub strategy: StrategyArg,
    /// λ grid step of the robust grid strategy.
    #[arg(long, default_value_t = 0.001)]
    pub step: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub snr_min_db: f64,
    #[arg(long, default_value_t = 60.0, allow_negative_numbers = true)]
    pub snr_max_db: f64,
    #[arg(long, default_value_t = 2.5)]
    pub snr_step_db: f64,
    #[arg(long, short, default_value = "sumrate.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub allow_failures: bool,
}

#[derive(Debug, Args)]
pub struct LowsnrArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// λ grid step for the energy-per-bit and wideband-slope regions.
    #[arg(long, default_value_t = 0.001)]
    pub step: f64,
    /// Eb/N0 grid of the spectral-efficiency curves, in dB.
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub ebno_min_db: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub ebno_max_db: f64,
    #[arg(long, default_value_t = 0.1)]
    pub ebno_step_db: f64,
    #[arg(long, default_value = "lowsnr")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub allow_failures: bool,
}

/// What a command produced, for the exit status.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Grid solves that did not return an optimal solution.
    pub failures: usize,
    pub allow_failures: bool,
    /// Lines for standard output.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.failures == 0 || self.allow_failures
    }
}

/// Builds the global thread pool from [`THREADS_ENV`] if it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::param(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    if n == 0 {
        return Err(Error::param(format!("{THREADS_ENV} must be positive")));
    }
    // A pool that already exists (e.g. in tests) is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Region(a) => cmd_region(&a),
        Command::Sumrate(a) => cmd_sumrate(&a),
        Command::Lowsnr(a) => cmd_lowsnr(&a),
    }
}

fn expand(values: &[f64], k: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        n if n == k => Ok(values.to_vec()),
        n => Err(Error::param(format!("--{what} expects 1 or {k} values, got {n}"))),
    }
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<Outcome> {
    let k = a.k.unwrap_or(a.antennas.len());
    if k == 0 || a.antennas.len() != k {
        return Err(Error::param(format!("--k {k} does not match {} antenna counts", a.antennas.len())));
    }
    let radii = match a.eps.len() {
        1 => vec![vec![a.eps[0]; k]; k],
        n if n == k * k => a.eps.chunks(k).map(<[f64]>::to_vec).collect(),
        n => return Err(Error::param(format!("--eps expects 1 or {} values, got {n}", k * k))),
    };
    for &e in &a.eps {
        if !(e.is_finite() && e >= 0.0) {
            return Err(Error::param(format!("--eps must be finite and nonnegative, got {e}")));
        }
    }
    let spec = ScenarioSpec {
        antennas: a.antennas.clone(),
        radii,
        powers: expand(&a.power, k, "power")?,
        noise_power: a.noise_power,
        seed: a.seed,
    };
    let s = generate_scenario(&spec)?;
    save_scenario(&s, &a.out)?;
    Ok(Outcome {
        summary: vec![s.digest()],
        ..Outcome::default()
    })
}

fn log_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".log");
    PathBuf::from(p)
}

fn status_name(s: ConeStatus) -> &'static str {
    match s {
        ConeStatus::Optimal => "optimal",
        ConeStatus::Infeasible => "infeasible",
        ConeStatus::Unbounded => "unbounded",
        ConeStatus::NumericalFailure => "numerical_failure",
    }
}

fn write_records(log: &mut String, label: &str, records: &[GridRecord]) {
    for r in records {
        let lambda: Vec<String> = r.lambda.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(
            log,
            "{label}transmitter={} lambda=[{}] status={} iterations={}",
            r.transmitter + 1,
            lambda.join(","),
            status_name(r.status),
            r.iterations
        );
    }
}

pub fn cmd_region(a: &RegionArgs) -> Result<Outcome> {
    let s = load_scenario(&a.scenario)?;
    let sample = if a.unfiltered {
        sweep_region(&s, a.step)?
    } else {
        boundary_region(&s, a.step)?
    };
    let format = match a.format {
        RegionFormat::Csv => ExportFormat::Csv,
        RegionFormat::Json => ExportFormat::Json,
    };
    export_region(&sample, &a.out, format)?;
    let mut log = format!(
        "scenario={} digest={} step={} points={} failures={}\n",
        a.scenario.display(),
        sample.scenario_digest,
        a.step,
        sample.points.len(),
        sample.failures.len()
    );
    write_records(&mut log, "", &sample.records);
    std::fs::write(log_path(&a.out), log)?;
    Ok(Outcome {
        failures: sample.failures.len(),
        allow_failures: a.allow_failures,
        summary: vec![format!("{} points written to {}", sample.points.len(), a.out.display())],
    })
}

fn snr_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && hi >= lo) {
        return Err(Error::param(format!("invalid SNR grid {lo}..{hi} step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

pub fn cmd_sumrate(a: &SumrateArgs) -> Result<Outcome> {
    let s = load_scenario(&a.scenario)?;
    let k = s.num_links();
    let max_radius = s.radii().iter().flatten().copied().fold(0.0, f64::max);
    let law = match a.law {
        LawArg::Constant => ErrorScalingLaw::constant(a.coef.unwrap_or(max_radius))?,
        LawArg::InverseSqrt => ErrorScalingLaw::inverse_sqrt_snr(a.coef.unwrap_or(1.0))?,
        LawArg::InverseCbrt => ErrorScalingLaw::inverse_cbrt_snr(a.coef.unwrap_or(1.0))?,
        LawArg::Custom => {
            let e = a.exponent.ok_or_else(|| Error::param("--law custom requires --exponent"))?;
            ErrorScalingLaw::custom(a.coef.unwrap_or(1.0), e)?
        }
    };
    let strategy = match a.strategy {
        StrategyArg::RobustGrid => Strategy::RobustParetoGrid { step: a.step },
        StrategyArg::ZeroForcing => Strategy::ZeroForcing,
        StrategyArg::SingleUserMrt => Strategy::SingleUserMrt,
        StrategyArg::JointMrt => Strategy::JointMrt,
    };
    let grid = snr_grid(a.snr_min_db, a.snr_max_db, a.snr_step_db)?;
    let sweep = sum_rate_sweep(&s, &uniform_laws(k, law), &grid, strategy)?;

    let mut csv = String::from("snr_db,sum_rate");
    for l in 1..=k {
        let _ = write!(csv, ",R{l}");
    }
    csv.push_str(",active_links\n");
    let mut log = format!(
        "scenario={} digest={} law={:?} coefficient={} exponent={} strategy={:?}\n",
        a.scenario.display(),
        s.digest(),
        law.kind,
        law.coefficient,
        law.exponent,
        strategy
    );
    let mut failures = 0;
    for p in &sweep {
        let mut cells = vec![format_value(p.snr_db), format_value(p.sum_rate)];
        cells.extend(p.rates.iter().map(|&r| format_value(r)));
        cells.push(p.active_links.to_string());
        csv.push_str(&cells.join(","));
        csv.push('\n');
        let _ = writeln!(
            log,
            "snr_db={} sum_rate={} active_links={} failures={}",
            format_value(p.snr_db),
            format_value(p.sum_rate),
            p.active_links,
            p.failures
        );
        failures += p.failures;
    }
    let mut summary = Vec::new();
    if sweep.len() >= 2 {
        let window = default_slope_window(&sweep);
        if let Ok(slope) = high_snr_slope_estimate(&sweep, window) {
            let line = format!(
                "high-SNR slope over [{}, {}] dB: {:.4} (multiplexing gain bound {})",
                window.0,
                window.1,
                slope,
                multiplexing_gain(&s.antennas())
            );
            let _ = writeln!(log, "{line}");
            summary.push(line);
        }
    }
    std::fs::write(&a.out, csv)?;
    std::fs::write(log_path(&a.out), log)?;
    Ok(Outcome {
        failures,
        allow_failures: a.allow_failures,
        summary,
    })
}

fn joint_mrt(s: &Scenario) -> Result<BeamformerSet> {
    Ok(BeamformerSet::new((0..s.num_links()).map(|k| robust_mrt(s, k)).collect::<Result<_>>()?))
}

pub fn cmd_lowsnr(a: &LowsnrArgs) -> Result<Outcome> {
    let s = load_scenario(&a.scenario)?;
    let k = s.num_links();
    let grid = LambdaGrid::new(a.step)?;
    let ebno_db = snr_grid(a.ebno_min_db, a.ebno_max_db, a.ebno_step_db)?;
    std::fs::create_dir_all(&a.out_dir)?;

    let cols = |prefix: &str| (1..=k).map(|l| format!("{prefix}{l}")).collect::<Vec<_>>().join(",");
    let mut metrics = String::from("csi,link,ebno_min,ebno_min_db,wideband_slope\n");
    let mut ebno = format!("csi,{}\n", cols("ebno_"));
    let mut slopes = format!("csi,{}\n", cols("S0_"));
    let mut spectral = String::from("csi,link,ebno_db,spectral_efficiency,below_minimum\n");
    let mut log = format!("scenario={} digest={} step={}\n", a.scenario.display(), s.digest(), a.step);
    let mut failures = 0;

    for (label, sc) in [("imperfect", s.clone()), ("perfect", s.perfect_csi())] {
        let b = joint_mrt(&sc)?;
        let m = low_snr_metrics(&sc, &b)?;
        for l in 0..k {
            let _ = writeln!(
                metrics,
                "{label},{},{},{},{}",
                l + 1,
                format_value(m.ebno_min[l]),
                format_value(linear_to_db(m.ebno_min[l])),
                format_value(m.wideband_slope[l])
            );
            let linear: Vec<f64> = ebno_db.iter().map(|&d| db_to_linear(d)).collect();
            for p in spectral_efficiency_curve(&sc, &b, l, &linear)?.iter().zip(&ebno_db) {
                let _ = writeln!(
                    spectral,
                    "{label},{},{},{},{}",
                    l + 1,
                    format_value(*p.1),
                    format_value(p.0.efficiency),
                    p.0.below_minimum
                );
            }
        }
        let table = sweep_candidates(&sc, &grid)?;
        failures += table.failures.len();
        write_records(&mut log, &format!("csi={label} "), &table.records);
        let er = ebno_region_from_table(&sc, &table)?;
        let row: Vec<String> = er.boundary.iter().map(|&v| format_value(v)).collect();
        let _ = writeln!(ebno, "{label},{}", row.join(","));
        let sr = slope_region_from_table(&sc, &table)?;
        for v in &sr.boundary {
            let row: Vec<String> = v.iter().map(|&x| format_value(x)).collect();
            let _ = writeln!(slopes, "{label},{}", row.join(","));
        }
    }

    let dir = &a.out_dir;
    std::fs::write(dir.join("metrics.csv"), metrics)?;
    std::fs::write(dir.join("ebno_region.csv"), ebno)?;
    std::fs::write(dir.join("slope_region.csv"), slopes)?;
    std::fs::write(dir.join("spectral_efficiency.csv"), spectral)?;
    std::fs::write(dir.join("lowsnr.log"), log)?;
    Ok(Outcome {
        failures,
        allow_failures: a.allow_failures,
        summary: vec![format!("low-SNR outputs written to {}", dir.display())],
    })
}
