//! Command-line front end: simulate, estimate, calibrate, fit-eval, pipeline.
//!
//! Exit codes: 0 on success (a flagged non-convergent fit still succeeds),
//! 1 on usage errors, 2 on data/model errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rrnginar::cluster::{baseline_states, renes_states, search_dp, search_impacts};
use rrnginar::io::{
    read_series_csv, read_states_csv, write_dp_table_csv, write_features_csv,
    write_impact_table_csv, write_json, write_sim_csv, write_states_csv, ExperimentConfig,
};
use rrnginar::likelihood::{cml_fit, forecast, predict, rms};
use rrnginar::model::{OrderRule, Variant};
use rrnginar::pipeline::run_pipeline;
use rrnginar::preestimate::build_features;
use rrnginar::sampling::{simulate, EnvSource};
use rrnginar::Error;

#[derive(Parser)]
#[command(name = "rrnginar", version, about = "Random-environment INAR count series toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Renes,
    Kmeans,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Max,
    One,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Max => Variant::Max,
            VariantArg::One => Variant::One,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderRuleArg {
    Min,
    LiteralMax,
}

impl From<OrderRuleArg> for OrderRule {
    fn from(v: OrderRuleArg) -> Self {
        match v {
            OrderRuleArg::Min => OrderRule::Min,
            OrderRuleArg::LiteralMax => OrderRule::LiteralMax,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed override; defaults to the first seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Model variant override.
    #[arg(long)]
    variant: Option<VariantArg>,
    /// Order rule override.
    #[arg(long)]
    order_rule: Option<OrderRuleArg>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(v) = self.variant {
            cfg.model = cfg.model.with_variant(v.into())?;
        }
        if let Some(rule) = self.order_rule {
            cfg.order_rule = rule.into();
        }
        if let Some(seed) = self.seed {
            cfg.seeds.insert(0, seed);
        }
        Ok(cfg)
    }
}

fn first_seed(cfg: &ExperimentConfig) -> Result<u64, Error> {
    cfg.seeds.first().copied().ok_or(Error::Empty("seed list"))
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as `t,x,z,P,lag`.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Series length override.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate environment states for a series file.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        series: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the pre-estimate/feature CSV (renes only;
        /// defaults to `<out>` with a `.features.csv` suffix).
        #[arg(long)]
        features_out: Option<PathBuf>,
    },
    /// Calibrate method parameters against truth columns in a series file.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// Series CSV with `z` and/or `P` truth columns.
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit by CML given states, then score one-step predictions.
    FitEval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        series: PathBuf,
        /// States CSV (`t,z_hat`); omit to use the truth column of the series.
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write predictions as `t,x,xhat`.
        #[arg(long)]
        pred_out: Option<PathBuf>,
    },
    /// Run the full per-seed experiment and write the report JSON.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn features_path(out: &Path) -> PathBuf {
    match out.extension() {
        Some(ext) => out.with_extension(format!("features.{}", ext.to_string_lossy())),
        None => out.with_extension("features.csv"),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { common, n, out } => {
            let cfg = common.load()?;
            let seed = first_seed(&cfg)?;
            let n = n.unwrap_or(cfg.n);
            let params = cfg.model.params();
            let env = cfg.model.env();
            let sim = simulate(&params, EnvSource::Chain(&env), n, cfg.order_rule, seed)?;
            write_sim_csv(&out, &sim)?;
            eprintln!("wrote {} rows to {}", n, out.display());
        }
        Command::Estimate { common, series, method, out, features_out } => {
            let cfg = common.load()?;
            let seed = first_seed(&cfg)?;
            let data = read_series_csv(&series)?;
            let params = cfg.model.params();
            match method {
                MethodArg::Kmeans => {
                    let states = baseline_states(&data.x, params.r, seed)?;
                    write_states_csv(&out, &states)?;
                }
                MethodArg::Renes => {
                    let states = renes_states(&data.x, &cfg.renes, params.r, params.max_order(), seed)?;
                    write_states_csv(&out, &states)?;
                    let pre = build_features(&data.x, &cfg.renes, params.max_order())?;
                    let fpath = features_out.unwrap_or_else(|| features_path(&out));
                    write_features_csv(&fpath, &pre)?;
                    eprintln!("wrote features to {}", fpath.display());
                }
            }
            eprintln!("wrote states to {}", out.display());
        }
        Command::Calibrate { common, series, out_dir } => {
            let cfg = common.load()?;
            let seed = first_seed(&cfg)?;
            let data = read_series_csv(&series)?;
            if data.z.is_none() && data.pn.is_none() {
                return Err(Error::MissingColumn("z"));
            }
            std::fs::create_dir_all(&out_dir)?;
            let params = cfg.model.params();
            let p_max = params.max_order();
            let mut selected = cfg.renes.clone();
            if let Some(truth_orders) = &data.pn {
                let search = search_dp(&data.x, truth_orders, cfg.dp_range.0..=cfg.dp_range.1, p_max)?;
                write_dp_table_csv(&out_dir.join("dp_table.csv"), &search)?;
                eprintln!("best d_p = {} (error {:.3})", search.best_dp, search.best_delta);
                selected.d_p = search.best_dp;
            }
            if let Some(truth) = &data.z {
                let search = search_impacts(
                    &data.x,
                    truth,
                    &selected,
                    params.r,
                    p_max,
                    cfg.impact_grid.0..=cfg.impact_grid.1,
                    seed,
                )?;
                write_impact_table_csv(&out_dir.join("c_table.csv"), &search)?;
                eprintln!(
                    "best impacts C = {:?} ({} matched states over {} cells)",
                    search.best, search.best_matches, search.evaluated
                );
                selected = selected.with_impacts(search.best[0], search.best[1], search.best[2]);
            }
            write_json(&out_dir.join("renes_selected.json"), &selected)?;
        }
        Command::FitEval { common, series, states, out, pred_out } => {
            let cfg = common.load()?;
            let seed = first_seed(&cfg)?;
            let data = read_series_csv(&series)?;
            let z = match states {
                Some(path) => read_states_csv(&path)?,
                None => data.z.clone().ok_or(Error::MissingColumn("z"))?,
            };
            let params = cfg.model.params();
            let mut fit = cml_fit(&data.x, &z, params.variant, &params.p, cfg.order_rule, seed)?;
            let pred = predict(&data.x, &z, &fit.params, cfg.order_rule)?;
            fit.rms = Some(rms(&data.x, &pred)?);
            let fc = forecast(&data.x, &z, &fit.params, cfg.order_rule)?;
            fit.forecast_rms = Some(rms(&data.x, &fc)?);
            write_json(&out, &fit)?;
            if let Some(ppath) = pred_out {
                let mut w = String::from("t,x,xhat\n");
                for (i, (&xi, &hi)) in data.x.x.iter().zip(&pred.xhat).enumerate() {
                    w.push_str(&format!("{},{},{}\n", i + 1, xi, hi));
                }
                std::fs::write(&ppath, w)?;
            }
            if !fit.converged {
                eprintln!("warning: fit did not converge within budget");
            }
            eprintln!(
                "loglik {:.3}, rms {:.3}, wrote {}",
                fit.loglik,
                fit.rms.unwrap(),
                out.display()
            );
        }
        Command::Pipeline { common, out } => {
            let cfg = common.load()?;
            let report = run_pipeline(&cfg)?;
            let out = out
                .or_else(|| cfg.paths.out_dir.as_ref().map(|d| d.join("report.json")))
                .unwrap_or_else(|| PathBuf::from("report.json"));
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            write_json(&out, &report)?;
            eprintln!(
                "{} seeds ({} ok); median matches renes {:?} vs kmeans {:?}; wrote {}",
                report.aggregates.seeds_total,
                report.aggregates.seeds_ok,
                report.aggregates.median_match_renes,
                report.aggregates.median_match_kmeans,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
