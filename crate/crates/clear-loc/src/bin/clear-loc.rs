//! Thin command-line front end over the library.
//!
//! Exit codes: 0 success, 2 usage (clap), 3 parse/config error,
//! 4 insufficient sensors, 5 estimation failure, 6 degenerate or
//! unobservable geometry, 7 I/O error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use clear_loc::error::Error;
use clear_loc::io::{
    self, CdfRow, OutputFormat, PercentileRow, RecordRow, SummaryRow,
};
use clear_loc::sim::{self, ErrorField, EstimatorKind, GeometrySpec, Scenario, SourceSpec};
use clear_loc::{
    clear_estimate, crlb_report, ml_cost, EstimateOptions, MeasurementSet, NoiseSpec, SourceState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "clear-loc",
    version,
    about = "Closed-form minimal-sensor TDOA/FDOA localization of a moving source"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo trials per noise cell (default: preset trials capped at 1000).
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Output directory for scenario tables.
    #[arg(long, global = true, env = "CLEAR_LOC_OUT_DIR", default_value = "out")]
    out: PathBuf,

    /// Output file format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Stage-1 weight passes (1..=5).
    #[arg(long, global = true, default_value_t = 2)]
    weight_iters: usize,

    /// TDOA noise variance (m^2) when no covariance file is given.
    #[arg(long, global = true)]
    sigma2_tdoa: Option<f64>,

    /// FDOA noise variance (m^2/s^2); defaults to the TDOA variance.
    #[arg(long, global = true)]
    sigma2_fdoa: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo scenario preset and write summary tables.
    Scenario {
        /// Preset name (see `list-scenarios`).
        #[arg(long)]
        name: String,
        /// Run the full preset trial count instead of the capped default.
        #[arg(long)]
        full: bool,
        /// Also write per-trial records.
        #[arg(long)]
        records: bool,
        /// Comma-separated estimator tags (clear, ho-xu, gauss-newton).
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<String>>,
    },
    /// One-shot estimation from sensor and measurement files.
    Estimate {
        /// Sensors CSV: id,x,y[,z],vx,vy[,vz] (id 0 = reference).
        #[arg(long)]
        sensors: PathBuf,
        /// Measurements CSV: i,tdoa_m,fdoa_mps.
        #[arg(long)]
        measurements: PathBuf,
        /// Optional covariance CSV (headerless 2M x 2M matrix).
        #[arg(long)]
        covariance: Option<PathBuf>,
    },
    /// CRLB report for a geometry, source state, and noise level.
    Crlb {
        /// Sensors CSV: id,x,y[,z],vx,vy[,vz] (id 0 = reference).
        #[arg(long)]
        sensors: PathBuf,
        /// Source position, e.g. `400,200` or `600,650,550`.
        #[arg(long)]
        source: String,
        /// Source velocity, e.g. `20,10`.
        #[arg(long)]
        source_velocity: String,
    },
    /// List scenario presets.
    ListScenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::InvalidInput(_) | Error::UnknownScenario(_) => 3,
        Error::InsufficientSensors { .. } => 4,
        Error::EstimationFailure { .. }
        | Error::RankDeficientQuadratics
        | Error::NoVdotSolution { .. }
        | Error::GeometryGeneration { .. }
        | Error::UndefinedStatistic
        | Error::CovarianceFactorization => 5,
        Error::DegenerateGeometry { .. }
        | Error::GeometryRank { .. }
        | Error::UnobservableGeometry => 6,
        Error::Io(_) => 7,
    }
}

fn run(cli: Cli) -> clear_loc::Result<()> {
    match &cli.command {
        Command::Scenario {
            name,
            full,
            records,
            estimators,
        } => cmd_scenario(&cli, name, *full, *records, estimators.as_deref()),
        Command::Estimate {
            sensors,
            measurements,
            covariance,
        } => cmd_estimate(&cli, sensors, measurements, covariance.as_deref()),
        Command::Crlb {
            sensors,
            source,
            source_velocity,
        } => cmd_crlb(&cli, sensors, source, source_velocity),
        Command::ListScenarios => {
            cmd_list();
            Ok(())
        }
    }
}

fn noise_spec_from_flags(cli: &Cli) -> clear_loc::Result<Option<NoiseSpec>> {
    match (cli.sigma2_tdoa, cli.sigma2_fdoa) {
        (None, None) => Ok(None),
        (Some(t), None) => Ok(Some(NoiseSpec::new(t, t)?)),
        (None, Some(f)) => Ok(Some(NoiseSpec::new(f, f)?)),
        (Some(t), Some(f)) => Ok(Some(NoiseSpec::new(t, f)?)),
    }
}

fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

fn opt_sig6(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| "-".into())
}

fn cmd_scenario(
    cli: &Cli,
    name: &str,
    full: bool,
    write_records: bool,
    estimator_tags: Option<&[String]>,
) -> clear_loc::Result<()> {
    let mut scenario = sim::preset(name)?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    scenario.weight_iterations = cli.weight_iters;
    scenario.trials = match (cli.trials, full) {
        (Some(t), _) => t,
        (None, true) => scenario.trials,
        (None, false) => scenario.trials.min(1000),
    };
    let estimators: Vec<EstimatorKind> = match estimator_tags {
        Some(tags) => tags
            .iter()
            .map(|t| t.parse())
            .collect::<clear_loc::Result<_>>()?,
        None => scenario.estimators.clone(),
    };

    std::fs::create_dir_all(&cli.out)?;
    let format: OutputFormat = cli.format.into();

    eprintln!(
        "running {name}: {} trials x {} cells, estimators [{}], seed {}",
        scenario.trials,
        scenario.cells().len(),
        estimators
            .iter()
            .map(|e| e.tag())
            .collect::<Vec<_>>()
            .join(", "),
        scenario.seed
    );
    let trials = sim::run_trials(&scenario, &estimators)?;
    let summary = summarize(&scenario, &estimators, &trials)?;

    let summary_path = cli.out.join(format!("{name}_summary.{}", format.extension()));
    io::write_rows(&summary_path, &summary, format)?;
    println!(
        "{:>12} {:>6} {:>13} {:>12} {:>12} {:>12} {:>12} {:>9} {:>7}",
        "sigma2", "M+1", "estimator", "rmse_pos", "rmse_vel", "crlb_pos", "crlb_vel", "fail", "L"
    );
    for row in &summary {
        println!(
            "{:>12} {:>6} {:>13} {:>12} {:>12} {:>12} {:>12} {:>9.4} {:>7}",
            sig6(row.sigma2),
            row.sensor_count,
            row.estimator,
            opt_sig6(row.rmse_pos),
            opt_sig6(row.rmse_vel),
            opt_sig6(row.crlb_pos),
            opt_sig6(row.crlb_vel),
            row.failure_rate,
            row.trials
        );
    }
    println!("wrote {}", summary_path.display());

    if matches!(scenario.geometry, GeometrySpec::Random { .. })
        && scenario.sensor_counts.is_none()
    {
        let (cdf_rows, pct_rows) = cdf_tables(&estimators, &trials)?;
        let cdf_path = cli.out.join(format!("{name}_cdf.{}", format.extension()));
        let pct_path = cli
            .out
            .join(format!("{name}_percentiles.{}", format.extension()));
        io::write_rows(&cdf_path, &cdf_rows, format)?;
        io::write_rows(&pct_path, &pct_rows, format)?;
        for row in &pct_rows {
            println!("p95 position error [{}]: {}", row.estimator, sig6(row.p95));
        }
        println!("wrote {}", cdf_path.display());
        println!("wrote {}", pct_path.display());
    }

    if write_records {
        let rows: Vec<RecordRow> = trials.iter().map(RecordRow::from).collect();
        let rec_path = cli.out.join(format!("{name}_records.{}", format.extension()));
        io::write_rows(&rec_path, &rows, format)?;
        println!("wrote {}", rec_path.display());
    }
    Ok(())
}

fn summarize(
    scenario: &Scenario,
    estimators: &[EstimatorKind],
    trials: &[sim::TrialRecord],
) -> clear_loc::Result<Vec<SummaryRow>> {
    let cells = scenario.cells();
    let fixed_truth = match (&scenario.geometry, &scenario.source) {
        (GeometrySpec::Fixed(sensors), SourceSpec::Fixed(source)) => {
            Some((sensors.clone(), source.clone()))
        }
        _ => None,
    };

    let mut grouped: BTreeMap<(usize, EstimatorKind), Vec<&sim::TrialRecord>> = BTreeMap::new();
    for r in trials {
        grouped.entry((r.cell, r.estimator)).or_default().push(r);
    }

    let mut rows = Vec::new();
    for (cell_idx, &(sigma2, sensor_count)) in cells.iter().enumerate() {
        let crlb_bounds = fixed_truth.as_ref().and_then(|(sensors, source)| {
            let q = sim::cell_covariance(sensor_count, sigma2).ok()?;
            let report = crlb_report(source, sensors, &q).ok()?;
            Some((report.position_rmse_bound, report.velocity_rmse_bound))
        });
        for &estimator in estimators {
            let records = grouped
                .get(&(cell_idx, estimator))
                .map(|v| v.as_slice())
                .unwrap_or(&[]);
            let pos = sim::rmse(records, ErrorField::Position).ok();
            let vel = sim::rmse(records, ErrorField::Velocity).ok();
            let failure_rate = pos
                .map(|s| s.failure_fraction)
                .unwrap_or(1.0);
            rows.push(SummaryRow {
                sigma2,
                sensor_count,
                estimator: estimator.tag().to_string(),
                rmse_pos: pos.map(|s| s.rmse),
                rmse_vel: vel.map(|s| s.rmse),
                crlb_pos: crlb_bounds.map(|(p, _)| p),
                crlb_vel: crlb_bounds.map(|(_, v)| v),
                failure_rate,
                trials: records.len(),
            });
        }
    }
    Ok(rows)
}

fn cdf_tables(
    estimators: &[EstimatorKind],
    trials: &[sim::TrialRecord],
) -> clear_loc::Result<(Vec<CdfRow>, Vec<PercentileRow>)> {
    let mut cdf_rows = Vec::new();
    let mut pct_rows = Vec::new();
    for &estimator in estimators {
        let records: Vec<&sim::TrialRecord> =
            trials.iter().filter(|r| r.estimator == estimator).collect();
        let cdf = match sim::empirical_cdf(&records, ErrorField::Position) {
            Ok(c) => c,
            Err(Error::UndefinedStatistic) => continue,
            Err(e) => return Err(e),
        };
        for (error, fraction) in &cdf.points {
            cdf_rows.push(CdfRow {
                estimator: estimator.tag().to_string(),
                error: *error,
                fraction: *fraction,
            });
        }
        pct_rows.push(PercentileRow {
            estimator: estimator.tag().to_string(),
            p95: cdf.p95,
        });
    }
    Ok((cdf_rows, pct_rows))
}

fn cmd_estimate(
    cli: &Cli,
    sensors_path: &Path,
    measurements_path: &Path,
    covariance_path: Option<&Path>,
) -> clear_loc::Result<()> {
    let sensors = io::read_sensors_csv(sensors_path)?;
    let (tdoa, fdoa) = io::read_measurements_csv(measurements_path)?;
    let covariance: DMatrix<f64> = match covariance_path {
        Some(path) => io::read_covariance_csv(path)?,
        None => {
            let spec = noise_spec_from_flags(cli)?.ok_or_else(|| {
                Error::InvalidInput(
                    "provide --covariance or --sigma2-tdoa/--sigma2-fdoa".into(),
                )
            })?;
            clear_loc::build_covariance(tdoa.len(), &spec)
        }
    };
    let meas = MeasurementSet::new(tdoa, fdoa, covariance)?;
    let options = EstimateOptions {
        weight_iterations: cli.weight_iters,
    };
    let result = clear_estimate(&meas, &sensors, &options)?;

    let fmt_state = |s: &SourceState| {
        let p: Vec<String> = s.position.iter().map(|x| sig6(*x)).collect();
        let v: Vec<String> = s.velocity.iter().map(|x| sig6(*x)).collect();
        format!("u = [{}], u_dot = [{}]", p.join(", "), v.join(", "))
    };
    println!("stage 1: {}", fmt_state(&result.stage1_estimate));
    println!("refined: {}", fmt_state(&result.refined_estimate));
    println!(
        "quartic roots: {} admissible, {} candidates",
        result.diagnostics.root_count,
        result.candidates.len()
    );
    for (k, c) in result.candidates.iter().enumerate() {
        println!(
            "candidate {k}: v = {}, v_dot = {}, ml cost = {}",
            sig6(c.nuisance.v),
            sig6(c.nuisance.vdot),
            sig6(c.ml_cost)
        );
    }
    if result.diagnostics.refinement_skipped {
        println!("note: stage-2 refinement skipped (singular system)");
    }
    let cost = ml_cost(&meas, &result.refined_estimate, &sensors)?;
    println!("refined ml cost: {}", sig6(cost));
    Ok(())
}

fn cmd_crlb(
    cli: &Cli,
    sensors_path: &Path,
    source: &str,
    source_velocity: &str,
) -> clear_loc::Result<()> {
    let sensors = io::read_sensors_csv(sensors_path)?;
    let state = io::parse_source(source, source_velocity)?;
    if state.dim() != sensors.dim() {
        return Err(Error::InvalidInput(format!(
            "source dimension {} does not match sensor dimension {}",
            state.dim(),
            sensors.dim()
        )));
    }
    let spec = noise_spec_from_flags(cli)?.unwrap_or(NoiseSpec {
        sigma2_tdoa: 1.0,
        sigma2_fdoa: 1.0,
    });
    let q = clear_loc::build_covariance(sensors.measurement_count(), &spec);
    let report = crlb_report(&state, &sensors, &q)?;

    println!("CRLB (position+velocity, {0}x{0}):", report.crlb.nrows());
    for i in 0..report.crlb.nrows() {
        let row: Vec<String> = (0..report.crlb.ncols())
            .map(|j| sig6(report.crlb[(i, j)]))
            .collect();
        println!("  [{}]", row.join(", "));
    }
    println!("position rmse bound: {} m", sig6(report.position_rmse_bound));
    println!("velocity rmse bound: {} m/s", sig6(report.velocity_rmse_bound));
    println!(
        "small-noise check: {} (tdoa margin {:.3}, fdoa margin {:.3})",
        if report.small_noise.ok { "ok" } else { "violated" },
        report.small_noise.tdoa_margin,
        report.small_noise.fdoa_margin
    );
    Ok(())
}

fn cmd_list() {
    println!("available scenario presets:");
    for name in sim::preset_names() {
        let s = sim::preset(name).expect("preset exists");
        let geometry = match &s.geometry {
            GeometrySpec::Fixed(a) => format!("{} fixed sensors, {}-D", a.sensor_count(), a.dim()),
            GeometrySpec::Random {
                dim, sensor_count, ..
            } => match &s.sensor_counts {
                Some(counts) => format!(
                    "random sensors ({}..={}), {}-D",
                    counts.first().unwrap(),
                    counts.last().unwrap(),
                    dim
                ),
                None => format!("{sensor_count} random sensors, {dim}-D"),
            },
        };
        println!(
            "  {name}: {geometry}; {} noise cells, {} trials, estimators [{}]",
            s.noise_grid.len(),
            s.trials,
            s.estimators
                .iter()
                .map(|e| e.tag())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
}
