use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ptf_fedrec::cli::{self, CliError, ExperimentConfig, OUTPUT_ENV};
use ptf_fedrec::models::checkpoint;

#[derive(Parser)]
#[command(name = "ptf-fedrec", version, about = "Deterministic simulator for score-exchange federated recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration for every configured seed.
    Run(ConfigArgs),
    /// Run a named experiment matrix.
    Preset {
        /// main, comm, privacy, hint-ablation, model-grid, beta-gamma-lambda-sweep or alpha-sweep
        name: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print a bundle's summary table and configuration, or describe a model checkpoint.
    Inspect {
        /// Bundle directory, summary.json or .ptfm checkpoint.
        path: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Config document of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    train_fraction: Option<String>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    client_arch: Option<String>,
    #[arg(long)]
    server_arch: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    participation: Option<String>,
    #[arg(long)]
    client_epochs: Option<String>,
    #[arg(long)]
    server_epochs: Option<String>,
    #[arg(long)]
    client_batch: Option<String>,
    #[arg(long)]
    server_batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    graph_layers: Option<String>,
    #[arg(long)]
    negative_ratio: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    beta_min: Option<String>,
    #[arg(long)]
    beta_max: Option<String>,
    #[arg(long)]
    gamma_min: Option<String>,
    #[arg(long)]
    gamma_max: Option<String>,
    #[arg(long)]
    defense: Option<String>,
    #[arg(long)]
    hint: Option<String>,
    #[arg(long)]
    edge_threshold: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    attack_gamma: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let named = [
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("train_fraction", &self.train_fraction),
            ("protocol", &self.protocol),
            ("client_arch", &self.client_arch),
            ("server_arch", &self.server_arch),
            ("rounds", &self.rounds),
            ("participation", &self.participation),
            ("client_epochs", &self.client_epochs),
            ("server_epochs", &self.server_epochs),
            ("client_batch", &self.client_batch),
            ("server_batch", &self.server_batch),
            ("lr", &self.lr),
            ("dim", &self.dim),
            ("graph_layers", &self.graph_layers),
            ("negative_ratio", &self.negative_ratio),
            ("alpha", &self.alpha),
            ("mu", &self.mu),
            ("lambda", &self.lambda),
            ("beta_min", &self.beta_min),
            ("beta_max", &self.beta_max),
            ("gamma_min", &self.gamma_min),
            ("gamma_max", &self.gamma_max),
            ("defense", &self.defense),
            ("hint", &self.hint),
            ("edge_threshold", &self.edge_threshold),
            ("top_k", &self.top_k),
            ("eval_every", &self.eval_every),
            ("attack_gamma", &self.attack_gamma),
            ("seeds", &self.seeds),
        ];
        let mut out = Vec::new();
        for raw in &self.set {
            let (k, v) = raw.split_once('=').ok_or_else(|| {
                CliError::Config(cli::ConfigError::Syntax {
                    line: 0,
                    text: raw.clone(),
                })
            })?;
            out.push((k.to_string(), v.to_string()));
        }
        out.extend(named.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))));
        Ok(out)
    }

    fn resolve(&self, default_out: &str) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let document = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.clone(),
                source,
            })?),
            None => None,
        };
        let mut cfg = cli::parse_config(document.as_deref(), &self.overrides()?)?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(default_out));
        cfg.output = Some(out.clone());
        Ok((cfg, out))
    }
}

fn inspect(path: &Path) -> Result<(), CliError> {
    if path.extension().is_some_and(|e| e == "ptfm") {
        let model = checkpoint::load(path)?;
        println!("architecture: {}", model.architecture());
        println!("users: {}  items: {}", model.n_users(), model.n_items());
        println!("dim: {}  optimizer steps: {}", model.config().dim, model.step_count());
        let params: usize = model.params().iter().map(|p| p.len()).sum();
        println!("parameters: {params}");
        return Ok(());
    }
    let summary = cli::read_summary(path)?;
    println!("kind: {}", summary.kind);
    println!(
        "seeds: {}",
        summary.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    );
    println!();
    print!("{}", summary.table);
    println!();
    print!("{}", summary.config);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => args.resolve("run").and_then(|(cfg, out)| {
            let summary = cli::run_config(&cfg, &out)?;
            print!("{}", summary.table);
            println!("bundle written to {}", out.display());
            Ok(())
        }),
        Command::Preset { name, config } => cli::preset_cells(&name).and_then(|_| {
            let (cfg, out) = config.resolve(&name)?;
            let summary = cli::run_preset(&name, &cfg, &out)?;
            print!("{}", summary.table);
            println!("bundle written to {}", out.display());
            Ok(())
        }),
        Command::Inspect { path } => inspect(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
