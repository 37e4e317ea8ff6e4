//! carbon-sched: ingest carbon-intensity data, roll forecasts, run
//! scheduler-vs-baseline experiments, and emit plot-ready reports.

mod manifest;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use carbon_sched_core::carbon::{
    ingest_carbon_csv, write_carbon_csv_path, Dataset, IngestOptions, RegionId,
};
use carbon_sched_core::experiment;
use carbon_sched_core::forecast::{
    rolling_forecast_store, ForecastMethod, ForecastStore, DEFAULT_CONTEXT_HOURS,
    DEFAULT_HORIZON_HOURS,
};
use carbon_sched_core::report::{
    write_comparison_csv, write_delay_csv, write_outputs, write_per_region_csv, ExperimentReport,
};

/// Dataset root consulted for paths not found next to the config file.
const DATA_ENV: &str = "CARBON_SCHED_DATA";

#[derive(Debug, Parser)]
#[command(name = "carbon-sched", version, about)]
struct Cli {
    /// Override the seed of seeded commands (takes precedence over config
    /// files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch execution.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output location: a directory, or a .csv file for `forecast`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a raw carbon-intensity CSV into the dataset layout.
    Ingest(IngestArgs),
    /// Roll forecasts over a dataset and persist the store.
    Forecast(ForecastArgs),
    /// Execute an experiment config: schedule, simulate, report.
    Run(RunArgs),
    /// Merge run reports into comparison and plot-data CSVs.
    Report(ReportArgs),
    /// Check a config and its referenced files without running.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Region code the file belongs to, e.g. IT-NO.
    #[arg(long)]
    region: String,
    /// Raw CSV with timestamped carbon-intensity rows.
    #[arg(long)]
    csv: PathBuf,
    /// Timestamp column name.
    #[arg(long, default_value = carbon_sched_core::carbon::DEFAULT_TS_COLUMN)]
    ts_col: String,
    /// Carbon-intensity column name.
    #[arg(long, default_value = carbon_sched_core::carbon::DEFAULT_CI_COLUMN)]
    ci_col: String,
    /// Longest run of missing hours repaired by interpolation.
    #[arg(long, default_value_t = carbon_sched_core::carbon::DEFAULT_MAX_GAP_HOURS)]
    max_gap: u64,
    /// Offset (hours ahead of UTC) of timestamps lacking an explicit one.
    #[arg(long, default_value_t = 0)]
    utc_offset: i32,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    /// Dataset directory of normalized region CSVs.
    #[arg(long)]
    data: PathBuf,
    /// persistence | seasonal-naive | moving-average | perfect
    #[arg(long)]
    method: String,
    /// Seasonal period in hours (seasonal-naive).
    #[arg(long, default_value_t = 24)]
    period: usize,
    /// Averaging window in hours (moving-average).
    #[arg(long, default_value_t = 24)]
    window: usize,
    /// Context length p in hours.
    #[arg(long, default_value_t = DEFAULT_CONTEXT_HOURS)]
    context: usize,
    /// Forecast horizon h in hours.
    #[arg(long, default_value_t = DEFAULT_HORIZON_HOURS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    /// Hours between forecast issues.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    every: u64,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Forecast store to schedule against, overriding the config's
    /// `forecasts` entry (same CSV format as `forecast` produces).
    #[arg(long)]
    forecasts: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report JSON files produced by `run`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ENV).map(PathBuf::from)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(args) => cmd_ingest(args, &cli.out),
        Command::Forecast(args) => cmd_forecast(args, &cli.out),
        Command::Run(args) => cmd_run(args, &cli),
        Command::Report(args) => cmd_report(args, &cli.out),
        Command::Validate(args) => cmd_validate(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn cmd_ingest(args: &IngestArgs, out: &Path) -> anyhow::Result<()> {
    let region = RegionId::new(args.region.clone())?;
    let opts = IngestOptions {
        ts_col: args.ts_col.clone(),
        ci_col: args.ci_col.clone(),
        max_gap_hours: args.max_gap,
        assume_offset_hours: args.utc_offset,
    };
    let series = ingest_carbon_csv(&args.csv, &region, &opts)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let target = out.join(format!("{region}.csv"));
    write_carbon_csv_path(&series, &target)?;
    update_index(out, &region, &series)?;
    log::info!(
        "ingested {} hourly values for {region} starting {} -> {}",
        series.len(),
        series.start,
        target.display()
    );
    Ok(())
}

/// Rewrite the dataset index with this region's entry added or replaced.
fn update_index(
    dir: &Path,
    region: &RegionId,
    series: &carbon_sched_core::carbon::CarbonIntensitySeries,
) -> anyhow::Result<()> {
    let index_path = dir.join("index.csv");
    let mut entries: BTreeMap<String, (String, u64)> = BTreeMap::new();
    if index_path.exists() {
        let text = std::fs::read_to_string(&index_path)?;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 4 {
                entries.insert(
                    cols[0].to_string(),
                    (cols[2].to_string(), cols[3].parse().unwrap_or(0)),
                );
            }
        }
    }
    entries.insert(
        region.to_string(),
        (
            series.start.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            series.len(),
        ),
    );
    let mut buf = String::from("region,file,start,hours\n");
    for (code, (start, hours)) in &entries {
        buf.push_str(&format!("{code},{code}.csv,{start},{hours}\n"));
    }
    std::fs::write(&index_path, buf)?;
    Ok(())
}

fn cmd_forecast(args: &ForecastArgs, out: &Path) -> anyhow::Result<()> {
    let dataset = Dataset::load_dir(&args.data)?;
    let mut store = ForecastStore::new();
    for series in dataset.series.values() {
        let method = match args.method.as_str() {
            "persistence" => ForecastMethod::Persistence,
            "seasonal-naive" => ForecastMethod::SeasonalNaive {
                period: args.period,
            },
            "moving-average" => ForecastMethod::MovingAverage {
                window: args.window,
            },
            "perfect" => ForecastMethod::Perfect {
                actuals: series.clone(),
            },
            other => bail!(
                "unknown method `{other}`; expected persistence, seasonal-naive, \
                 moving-average, or perfect"
            ),
        };
        store.merge(rolling_forecast_store(
            series,
            &method,
            args.context,
            args.horizon as usize,
            args.every,
        )?);
    }
    let target = if out.extension().is_some_and(|e| e == "csv") {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        out.to_path_buf()
    } else {
        std::fs::create_dir_all(out)?;
        out.join("forecasts.csv")
    };
    store.write_csv_path(&target)?;
    log::info!(
        "stored {} forecasts for {} regions -> {}",
        store.len(),
        dataset.series.len(),
        target.display()
    );
    Ok(())
}

fn fail_with_problems(config: &Path, problems: &[String]) -> anyhow::Error {
    for p in problems {
        eprintln!("config error: {p}");
    }
    anyhow::anyhow!("{} problem(s) in {}", problems.len(), config.display())
}

fn cmd_run(args: &RunArgs, cli: &Cli) -> anyhow::Result<()> {
    let root = data_root();
    let (mut inputs, mut paths) = match experiment::load_inputs(&args.config, root.as_deref()) {
        Ok(loaded) => loaded,
        Err(carbon_sched_core::experiment::ExperimentError::Invalid(problems)) => {
            return Err(fail_with_problems(&args.config, &problems));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(store_path) = &args.forecasts {
        inputs.forecasts = Some(ForecastStore::read_csv_path(store_path)?);
        paths.forecasts = Some(store_path.clone());
    }
    if let Some(seed) = cli.seed {
        inputs.params.seed = seed;
    }
    let output = match experiment::run(&inputs, cli.jobs.max(1)) {
        Ok(output) => output,
        Err(carbon_sched_core::experiment::ExperimentError::Invalid(problems)) => {
            return Err(fail_with_problems(&args.config, &problems));
        }
        Err(e) => return Err(e.into()),
    };
    let written = write_outputs(&output, &cli.out)?;
    let output_names: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = manifest::RunManifest::new(
        inputs.params.seed,
        &args.config,
        &paths.all_files(),
        output_names,
    )?;
    manifest.save(&cli.out.join("manifest.json"))?;

    let report = &output.report;
    log::info!(
        "{}: baseline {:.1} gCO2eq{}",
        report.label,
        report.baseline.total_gco2,
        match (&report.optimized, report.reduction_pct) {
            (Some(opt), Some(red)) => format!(
                ", optimized {:.1} gCO2eq, reduction {red:.2}%",
                opt.total_gco2
            ),
            _ => String::new(),
        }
    );
    log::info!("outputs in {}", cli.out.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs, out: &Path) -> anyhow::Result<()> {
    let mut reports = Vec::new();
    for path in &args.reports {
        reports.push(ExperimentReport::load_json_path(path)?);
    }
    std::fs::create_dir_all(out)?;
    let write = |name: &str, render: &dyn Fn(&mut Vec<u8>)| -> anyhow::Result<PathBuf> {
        let mut buf = Vec::new();
        render(&mut buf);
        let path = out.join(name);
        std::fs::write(&path, buf)?;
        Ok(path)
    };
    write("comparison.csv", &|buf| {
        write_comparison_csv(&reports, buf).expect("write to vec")
    })?;
    write("per_region.csv", &|buf| {
        write_per_region_csv(&reports, buf).expect("write to vec")
    })?;
    write("delays.csv", &|buf| {
        write_delay_csv(&reports, buf).expect("write to vec")
    })?;
    // the merged comparison also goes to stdout for quick inspection
    let mut buf = Vec::new();
    write_comparison_csv(&reports, &mut buf)?;
    std::io::stdout().write_all(&buf)?;
    log::info!("tables in {}", out.display());
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> anyhow::Result<()> {
    let problems = experiment::validate_config(&args.config, data_root().as_deref());
    if problems.is_empty() {
        log::info!("{}: OK", args.config.display());
        Ok(())
    } else {
        for p in &problems {
            eprintln!("config error: {p}");
        }
        bail!("{} problem(s) in {}", problems.len(), args.config.display());
    }
}
