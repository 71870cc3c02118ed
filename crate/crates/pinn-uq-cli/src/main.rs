//! Command-line experiment runner: data generation, training, posterior
//! sampling, evaluation, and heatmap rendering for the built-in PDE
//! problems.

use clap::{Args, Parser, Subcommand};
use pinn_uq::config::ExperimentConfig;
use pinn_uq::error::{Error, Result};
use pinn_uq::experiment::{
    output_dir_for, run_experiment, stage_evaluate, stage_generate_data, stage_sample,
    stage_train,
};
use pinn_uq::render::{render_heatmap, Colormap};
use pinn_uq::Method;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pinn-uq",
    about = "Physics-informed neural PDE surrogates with HMC / deep-ensemble / MC-dropout \
             uncertainty quantification",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline: data, train/sample, evaluate, render.
    Run(ExpArgs),
    /// Generate (or import) the sensor dataset files.
    GenerateData(ExpArgs),
    /// Train a deep ensemble or MC-dropout model.
    Train(ExpArgs),
    /// Draw HMC posterior samples.
    Sample(ExpArgs),
    /// Compute predictive summaries and metrics from stored artifacts.
    Evaluate(ExpArgs),
    /// Render one column of a field CSV as an SVG heatmap.
    Render(RenderArgs),
}

#[derive(Args)]
struct ExpArgs {
    /// Experiment config JSON (flags below override its keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: burgers-forward[-desk], ns-forward[-desk],
    /// ns-inverse[-desk].
    #[arg(long)]
    preset: Option<String>,
    /// UQ method: hmc, de, or mcd.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Adam iterations override.
    #[arg(long)]
    iterations: Option<usize>,
    /// Ensemble size override.
    #[arg(long)]
    members: Option<usize>,
    /// State observation count override.
    #[arg(long)]
    sensors: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    /// Field CSV on a regular grid.
    field_csv: PathBuf,
    /// Output SVG path.
    output_svg: PathBuf,
    /// Colormap: viridis, coolwarm, gray.
    #[arg(long, default_value = "viridis")]
    colormap: String,
    /// Value column to render (defaults to the first data column).
    #[arg(long)]
    column: Option<String>,
}

impl ExpArgs {
    fn build_config(&self) -> Result<ExperimentConfig> {
        let method = self
            .method
            .as_deref()
            .map(str::parse::<Method>)
            .transpose()?;
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                ExperimentConfig::from_json(&text)?
            }
            (None, Some(preset)) => ExperimentConfig::preset(
                preset,
                method.ok_or_else(|| {
                    Error::Usage("--preset needs --method (hmc, de, or mcd)".into())
                })?,
            )?,
            (None, None) => {
                return Err(Error::Usage(
                    "provide --config FILE or --preset NAME with --method".into(),
                ))
            }
        };
        if let Some(m) = method {
            cfg.method = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = Some(dir.clone());
        }
        if let Some(it) = self.iterations {
            cfg.train.iterations = Some(it);
        }
        if let Some(m) = self.members {
            cfg.train.n_members = Some(m);
        }
        if let Some(n) = self.sensors {
            cfg.dataset.n_state = Some(n);
        }
        Ok(cfg)
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run(args) => {
            let cfg = args.build_config()?;
            let report = run_experiment(&cfg)?;
            println!(
                "wrote {} files to {}",
                report.files.len(),
                report.output_dir.display()
            );
            println!(
                "{}",
                serde_json::to_string_pretty(&report.metrics).expect("metrics serialize")
            );
        }
        Cmd::GenerateData(args) => {
            let cfg = args.build_config()?;
            for f in stage_generate_data(&cfg)? {
                println!("{}", f.display());
            }
        }
        Cmd::Train(args) => {
            let cfg = args.build_config()?;
            for f in stage_train(&cfg)? {
                println!("{}", f.display());
            }
        }
        Cmd::Sample(args) => {
            let cfg = args.build_config()?;
            for f in stage_sample(&cfg)? {
                println!("{}", f.display());
            }
        }
        Cmd::Evaluate(args) => {
            let cfg = args.build_config()?;
            let (metrics, files) = stage_evaluate(&cfg)?;
            for f in files {
                println!("{}", f.display());
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&metrics).expect("metrics serialize")
            );
            let _ = output_dir_for(&cfg);
        }
        Cmd::Render(args) => {
            let colormap: Colormap = args.colormap.parse()?;
            let info = render_heatmap(
                &args.field_csv,
                &args.output_svg,
                colormap,
                args.column.as_deref(),
            )?;
            println!(
                "rendered {} cells ({} x {}) to {}",
                info.cells,
                info.cols,
                info.rows,
                args.output_svg.display()
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
