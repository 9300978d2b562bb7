use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use recbench_core::atomic::{FieldType, SourceKind};
use recbench_core::run::{
    cmd_evaluate, cmd_run, cmd_stats, cmd_tune, convert_delimited, filter_dataset,
    generate_synthetic, load_raw, parse_overrides, prepare, split_frames, write_synthetic,
    DatasetConfig, RunConfig, RunError, RunManifest, Stage, SyntheticSpec,
};

#[derive(Parser)]
#[command(name = "recbench", version, about = "Reproducible recommender benchmarking")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps every worker pool.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (or file, for `convert`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Directory holding the atomic files.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dataset name: files are `<dataset>/<name>.<suffix>`.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a delimited text file into an atomic file.
    Convert {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated `name:type` list, one per input column; `-:type` drops a column.
        #[arg(long)]
        fields: String,
        #[arg(long, default_value = ",")]
        separator: char,
        /// Skip the first line of the input.
        #[arg(long)]
        header: bool,
    },
    /// Apply k-core filtering and rewrite the atomic files.
    Filter {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        k_user: Option<usize>,
        #[arg(long)]
        k_item: Option<usize>,
        #[arg(long)]
        kg_k: Option<usize>,
        #[arg(long, value_enum)]
        inverse_relations: Option<OnOff>,
    },
    /// Write train/valid/test interaction files.
    Split {
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Run filter, split, features, training and evaluation.
    #[command(alias = "run")]
    Train {
        /// `name = value` overrides, e.g. the `best.toml` written by `tune`.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Replay the configuration recorded in a run manifest.
        #[arg(long, conflicts_with = "params")]
        replay: Option<PathBuf>,
    },
    /// Score a saved model on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Search hyperparameters as configured under `[tune]`.
    Tune,
    /// Print user, item and interaction counts and sparsity.
    Stats {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        json: bool,
    },
    /// Write a planted block-preference dataset.
    Generate {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        items: usize,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 20)]
        per_user: usize,
        #[arg(long, default_value = "synthetic")]
        name: String,
    },
}

fn config_error(message: impl Into<String>) -> RunError {
    RunError::config(Stage::Config, message)
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::runtime(Stage::Output, format!("{}: {e}", path.display()))
}

/// Loads `--config` (or builds a minimal one from dataset flags) and applies
/// the global overrides.
fn load_config(global: &Global, data: Option<&DatasetArgs>) -> Result<RunConfig, RunError> {
    let mut config = match (&global.config, data) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(DatasetArgs { dataset: Some(dir), name: Some(name) })) => RunConfig::parse(&format!(
            "[dataset]\npath = {}\nname = {}\n",
            toml_string(&dir.to_string_lossy()),
            toml_string(name)
        ))?,
        (None, _) => return Err(config_error("pass --config, or --dataset and --name")),
    };
    if let Some(data) = data {
        if let Some(dir) = &data.dataset {
            config.dataset.path = dir.clone();
        }
        if let Some(name) = &data.name {
            config.dataset.name = name.clone();
        }
    }
    apply_globals(&mut config, global);
    config.validate()?;
    Ok(config)
}

fn apply_globals(config: &mut RunConfig, global: &Global) {
    if let Some(seed) = global.seed {
        config.reproducibility.seed = seed;
    }
    if let Some(w) = global.workers {
        config.loader.workers = w;
        if let Some(t) = &mut config.tune {
            t.workers = w;
        }
    }
    if let Some(out) = &global.output {
        config.output = out.clone();
    }
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn parse_fields(spec: &str) -> Result<Vec<(String, FieldType)>, RunError> {
    spec.split(',')
        .map(|f| {
            let (name, tag) = f
                .trim()
                .split_once(':')
                .ok_or_else(|| config_error(format!("field `{f}` is not name:type")))?;
            let ty = FieldType::from_tag(tag)
                .ok_or_else(|| config_error(format!("unknown field type `{tag}`")))?;
            Ok((name.to_string(), ty))
        })
        .collect()
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let global = &cli.global;
    match cli.command {
        Command::Convert {
            input,
            fields,
            separator,
            header,
        } => {
            let output = global
                .output
                .clone()
                .ok_or_else(|| config_error("convert needs --output <file>.<suffix>"))?;
            let kind = SourceKind::from_path(&output).map_err(|e| config_error(e.to_string()))?;
            let fields = parse_fields(&fields)?;
            let text = std::fs::read_to_string(&input)
                .map_err(|e| RunError::data(Stage::Load, format!("{}: {e}", input.display())))?;
            let frame = convert_delimited(&text, separator, &fields, kind, header)
                .map_err(|e| RunError::data(Stage::Load, format!("{}: {e}", input.display())))?;
            frame
                .write_atomic_file(&output)
                .map_err(|e| output_error(&output, e))?;
            println!("rows\t{}", frame.row_count());
        }
        Command::Filter {
            data,
            k_user,
            k_item,
            kg_k,
            inverse_relations,
        } => {
            let mut config = load_config(global, Some(&data))?;
            let f = &mut config.filter;
            f.k_user = k_user.unwrap_or(f.k_user);
            f.k_item = k_item.unwrap_or(f.k_item);
            f.kg_k = kg_k.unwrap_or(f.kg_k);
            if let Some(flag) = inverse_relations {
                f.inverse_relations = matches!(flag, OnOff::On);
            }
            config.validate()?;
            let filtered = filter_dataset(load_raw(&config.dataset)?, &config.filter)?;
            std::fs::create_dir_all(&config.output).map_err(|e| output_error(&config.output, e))?;
            for (kind, frame) in filtered.detokenized() {
                let path = config
                    .output
                    .join(format!("{}.{}", config.dataset.name, kind.suffix()));
                frame.write_atomic_file(&path).map_err(|e| output_error(&path, e))?;
            }
            for (k, v) in &filtered.row_counts {
                println!("{k}\t{v}");
            }
        }
        Command::Split { data } => {
            let config = load_config(global, Some(&data))?;
            let prepared = prepare(&config)?;
            std::fs::create_dir_all(&config.output).map_err(|e| output_error(&config.output, e))?;
            let frames = split_frames(&prepared)?;
            for (part, frame) in ["train", "valid", "test"].iter().zip(&frames) {
                let path = config
                    .output
                    .join(format!("{}.{part}.inter", config.dataset.name));
                frame.write_atomic_file(&path).map_err(|e| output_error(&path, e))?;
                println!("{part}\t{}", frame.row_count());
            }
        }
        Command::Train { params, replay } => {
            let mut config = match &replay {
                Some(path) => {
                    let mut c = RunManifest::load(path)?.config;
                    apply_globals(&mut c, global);
                    c
                }
                None => load_config(global, None)?,
            };
            if let Some(path) = params {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
                config = config.with_overrides(&parse_overrides(&text)?)?;
            }
            let outcome = cmd_run(&config)?;
            print!("{}", outcome.manifest.metrics["test"].to_text());
        }
        Command::Evaluate { checkpoint } => {
            let config = load_config(global, None)?;
            print!("{}", cmd_evaluate(&config, &checkpoint)?.to_text());
        }
        Command::Tune => {
            let config = load_config(global, None)?;
            let summary = cmd_tune(&config)?;
            println!("trials\t{}", summary.trials);
            println!("failed\t{}", summary.failed);
            if let Some(best) = &summary.best {
                println!("best_trial\t{}", best.trial_id);
                println!("best_{}\t{}", summary.objective, best.objective.unwrap_or(f64::NAN));
                println!("best_params\t{}", best.params);
            }
        }
        Command::Stats { data, json } => {
            let dataset = match (&data.dataset, &data.name, &global.config) {
                (Some(path), Some(name), _) => DatasetConfig {
                    path: path.clone(),
                    name: name.clone(),
                },
                (_, _, Some(_)) => load_config(global, Some(&data))?.dataset,
                _ => return Err(config_error("pass --config, or --dataset and --name")),
            };
            let stats = cmd_stats(&dataset)?;
            if json {
                println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
            } else {
                print!("{}", stats.to_text());
            }
        }
        Command::Generate {
            users,
            items,
            blocks,
            noise,
            per_user,
            name,
        } => {
            let spec = SyntheticSpec {
                users,
                items,
                blocks,
                noise,
                per_user,
                seed: global.seed.unwrap_or(2022),
            };
            let out = global.output.clone().unwrap_or_else(|| PathBuf::from("."));
            let data = generate_synthetic(&spec)?;
            write_synthetic(&data, &out, &name)?;
            println!("interactions\t{}", data.inter.row_count());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("RECBENCH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

