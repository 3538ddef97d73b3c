use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fqte::data::{load_fused_dataset, write_fused_dataset, QuantileSpec, Schema};
use fqte::estimate::{estimate_fqte, EstimateOptions};
use fqte::nalgebra::DVector;
use fqte::sim::{generate, run_monte_carlo, DgpConfig, McSettings, ScenarioName, ScenarioSpec};
use fqte::{FqteError, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "fqte",
    version,
    about = "Fused quantile treatment effect estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the fused QTE from a validation and an auxiliary CSV file.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo study and write BIAS/MSE/SE/CR tables.
    Simulate(SimulateArgs),
    /// Write one simulated dataset as validation and auxiliary CSV files.
    Generate(GenerateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct LevelArgs {
    /// Target quantile level.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Comma-separated calibration levels; defaults to `p`.
    #[arg(long)]
    p_cal: Option<String>,
    /// Confidence level of the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Normalize inverse-probability weights within each arm.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize_weights: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    validation: PathBuf,
    #[arg(long)]
    auxiliary: PathBuf,
    #[arg(long, default_value = "y")]
    y_col: String,
    #[arg(long, default_value = "t")]
    t_col: String,
    /// Comma-separated covariates observed in both files.
    #[arg(long, default_value = "x1")]
    x_cols: String,
    /// Comma-separated covariates observed only in the validation file.
    #[arg(long, default_value = "s1,s2,s3")]
    s_cols: String,
    #[command(flatten)]
    levels: LevelArgs,
    /// Sensitivity offsets: `;`-separated entries, each a scalar applied to
    /// every calibration component or a comma list of length 2d.
    #[arg(long, allow_hyphen_values = true)]
    delta_grid: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Validation sample size.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Total sample size.
    #[arg(long = "big-n", default_value_t = 2000)]
    big_n: usize,
    #[arg(long, default_value_t = 20240101)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Comma-separated scenarios.
    #[arg(long, default_value = "dr11,dr10,dr01,dr00")]
    scenarios: String,
    #[command(flatten)]
    levels: LevelArgs,
    /// Extra calibration sets separated by `;`, reported as c2, c3, ...
    #[arg(long)]
    extra_p_cal: Option<String>,
    /// Output directory for `report.json` and `report.csv`; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long = "big-n", default_value_t = 2000)]
    big_n: usize,
    #[arg(long, default_value_t = 20240101)]
    seed: u64,
    /// Output directory for `validation.csv` and `auxiliary.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{doc}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect()
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    split_list(s)
        .into_iter()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| FqteError::Config(format!("invalid number '{v}' in {what}")))
        })
        .collect()
}

fn quantile_spec(levels: &LevelArgs) -> Result<QuantileSpec> {
    let p_cal = levels
        .p_cal
        .as_deref()
        .map(|s| parse_floats(s, "--p-cal"))
        .transpose()?;
    QuantileSpec::new(levels.p, p_cal)
}

fn options(levels: &LevelArgs) -> Result<EstimateOptions> {
    if !(levels.level > 0.0 && levels.level < 1.0) {
        return Err(FqteError::Config(format!(
            "confidence level must lie in (0, 1), got {}",
            levels.level
        )));
    }
    Ok(EstimateOptions {
        confidence: levels.level,
        normalize_weights: levels.normalize_weights,
        ..EstimateOptions::default()
    })
}

fn parse_delta_grid(s: &str, dim: usize) -> Result<Vec<DVector<f64>>> {
    s.split(';')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|entry| {
            let vals = parse_floats(entry, "--delta-grid")?;
            match vals.len() {
                1 => Ok(DVector::from_element(dim, vals[0])),
                k if k == dim => Ok(DVector::from_vec(vals)),
                k => Err(FqteError::Config(format!(
                    "--delta-grid entry '{entry}' has {k} values; expected 1 or {dim}"
                ))),
            }
        })
        .collect()
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| FqteError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let spec = quantile_spec(&args.levels)?;
    let options = options(&args.levels)?;
    let delta_grid = match &args.delta_grid {
        Some(s) => parse_delta_grid(s, 2 * spec.d())?,
        None => Vec::new(),
    };
    let schema = Schema {
        y: args.y_col.clone(),
        t: args.t_col.clone(),
        x: split_list(&args.x_cols)
            .into_iter()
            .map(String::from)
            .collect(),
        s: split_list(&args.s_cols)
            .into_iter()
            .map(String::from)
            .collect(),
    };
    log::info!(
        "fqte {} estimate: validation={} auxiliary={} schema={} spec={} options={} delta_grid={}",
        fqte::VERSION,
        args.validation.display(),
        args.auxiliary.display(),
        json!(schema),
        json!(spec),
        json!(options),
        delta_grid.len()
    );
    let ds = load_fused_dataset(&args.validation, &args.auxiliary, &schema)?;
    let report = estimate_fqte(&ds, &spec, &options, &delta_grid)?;
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut s = String::from("delta_p,delta_v,se,se_v,ci_low,ci_high,efficiency_gain\n");
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                report.delta_p,
                report.delta_v,
                report.se,
                report.se_v,
                report.ci.0,
                report.ci.1,
                report.efficiency_gain
            ));
            s
        }
    };
    write_output(args.out.as_deref(), &text)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let spec = quantile_spec(&args.levels)?;
    let options = options(&args.levels)?;
    let mut quantiles = vec![spec.clone()];
    if let Some(extra) = &args.extra_p_cal {
        for set in extra.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            quantiles.push(QuantileSpec::new(
                spec.p,
                Some(parse_floats(set, "--extra-p-cal")?),
            )?);
        }
    }
    let scenarios = split_list(&args.scenarios)
        .into_iter()
        .map(|s| {
            s.parse::<ScenarioName>()
                .map(|name| ScenarioSpec::new(name, options.intercept))
        })
        .collect::<Result<Vec<_>>>()?;
    let dgp = DgpConfig::new(args.n, args.big_n, args.seed);
    log::info!(
        "fqte {} simulate: dgp={} scenarios={} p_cal={} reps={} workers={} options={}",
        fqte::VERSION,
        json!(dgp),
        args.scenarios,
        json!(quantiles.iter().map(|q| &q.p_cal).collect::<Vec<_>>()),
        args.reps,
        args.workers,
        json!(options)
    );
    let settings = McSettings {
        dgp,
        scenarios,
        quantiles,
        replications: args.reps,
        workers: args.workers,
        options,
        truth: None,
        keep_draws: false,
    };
    let report = run_monte_carlo(&settings)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|source| FqteError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            write_output(Some(&dir.join("report.json")), &to_json(&report))?;
            write_output(Some(&dir.join("report.csv")), &report.to_csv())
        }
        None => match args.format {
            Format::Json => write_output(None, &to_json(&report)),
            Format::Csv => write_output(None, &report.to_csv()),
        },
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let dgp = DgpConfig::new(args.n, args.big_n, args.seed);
    dgp.check()?;
    log::info!("fqte {} generate: dgp={}", fqte::VERSION, json!(dgp));
    fs::create_dir_all(&args.out).map_err(|source| FqteError::Io {
        path: args.out.display().to_string(),
        source,
    })?;
    let ds = generate(&dgp).dataset;
    write_fused_dataset(
        &ds,
        args.out.join("validation.csv"),
        args.out.join("auxiliary.csv"),
        &Schema::numbered(ds.p_x(), ds.p_s()),
    )
}
