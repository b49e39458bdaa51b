use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use t1rho_inr_cli::{
    configure_threads, replay, resolve_config, run, CliError, CliResult, Command, Dirs, MetricsArgs, Overrides,
};

#[derive(Parser)]
#[command(name = "t1rho-recon", version, about = "Undersampled T1rho series reconstruction pipeline")]
struct Cli {
    /// JSON experiment config; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training mode: dc, sc, hk or full.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Optimizer steps, overriding the config.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Input directory; defaults to the output directory, or to the
    /// manifest's directory when replaying.
    #[arg(long = "in", global = true)]
    input: Option<PathBuf>,
    /// Replay the run recorded in this manifest and verify its hashes.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate maps, coils, weighted images and fully sampled k-space.
    Phantom,
    /// Draw the sampling mask and undersample the k-space.
    Undersample,
    /// Calibrate the self-consistency kernel from the ACS lines.
    Calibrate,
    /// Train the coordinate network and write the reconstruction.
    Reconstruct {
        /// Checkpoint directory to start from.
        #[arg(long)]
        warm_start: Option<String>,
    },
    /// Fit M0 and T1rho maps to an image series.
    Fit {
        #[arg(long)]
        images: String,
        /// Real tensor whose nonzero pixels are fitted.
        #[arg(long)]
        support: Option<String>,
    },
    /// Score an image series against a reference.
    Metrics {
        #[arg(long)]
        images: String,
        #[arg(long)]
        reference: String,
        #[arg(long)]
        t1rho: Option<String>,
        #[arg(long)]
        reference_t1rho: Option<String>,
        #[arg(long)]
        support: Option<String>,
    },
    /// Reconstruct in every mode and tabulate metrics.
    Ablate,
    /// Run every stage from simulation to the ablation table.
    Repro,
}

impl Sub {
    fn into_command(self) -> Command {
        match self {
            Sub::Phantom => Command::Phantom,
            Sub::Undersample => Command::Undersample,
            Sub::Calibrate => Command::Calibrate,
            Sub::Reconstruct { warm_start } => Command::Reconstruct { warm_start },
            Sub::Fit { images, support } => Command::Fit { images, support },
            Sub::Metrics {
                images,
                reference,
                t1rho,
                reference_t1rho,
                support,
            } => Command::Metrics(MetricsArgs {
                images,
                reference,
                t1rho,
                reference_t1rho,
                support,
            }),
            Sub::Ablate => Command::Ablate,
            Sub::Repro => Command::Repro,
        }
    }
}

fn name_of(c: &Command) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.get("name").and_then(|n| n.as_str().map(str::to_string)))
        .unwrap_or_default()
}

fn execute(cli: Cli) -> CliResult<serde_json::Value> {
    configure_threads()?;
    let command = cli.command.into_command();
    let manifest = if let Some(path) = &cli.manifest {
        let recorded = t1rho_inr_cli::RunManifest::load(path)?;
        if name_of(&recorded.command) != name_of(&command) {
            return Err(CliError::Usage(format!(
                "manifest records `{}`, not `{}`",
                name_of(&recorded.command),
                name_of(&command)
            )));
        }
        replay(path, &cli.out, cli.input.as_deref())?
    } else {
        let cfg = resolve_config(
            cli.config.as_deref(),
            &Overrides {
                seed: cli.seed,
                mode: cli.mode,
                iters: cli.iters,
            },
        )?;
        let dirs = Dirs {
            input: cli.input.unwrap_or_else(|| cli.out.clone()),
            output: cli.out.clone(),
        };
        run(&command, &cfg, &dirs)?
    };
    Ok(json!({
        "command": name_of(&manifest.command),
        "manifest": cli.out.join(manifest.command.manifest_name(&manifest.config)),
        "outputs": manifest.outputs.len(),
        "output_digest": manifest.output_digest,
        "verified": cli.manifest.is_some(),
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
