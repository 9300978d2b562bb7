use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, TUNABLE};
use super::data::{prepare, Prepared};
use super::{RunError, Stage};
use crate::atomic::{Column, Frame, IdMap, SourceKind, PAD_ID, PAD_TOKEN};
use crate::model::{
    evaluate_topk, read_checkpoint, train_bpr, write_checkpoint, MetricReport, MfModel,
    PopularityModel, TrainError,
};
use crate::pipeline::{collate_parallel, index_blocks, BatchPlan, TIMESTAMP_FIELD};
use crate::seed::{derive_seed, indexed_rng};
use crate::seq::{apply_pipeline, ItemSequence, TransformedSequence};
use crate::tune::{
    best_config, run_tuning, trial_log, SearchSpace, TrialRecord, TrialStatus, TuneStrategy,
};

pub const MASK_TOKEN: &str = "[MASK]";

/// Everything needed to replay a run, plus what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    /// Root seed and the per-stage seeds derived from it.
    pub seeds: IndexMap<String, u64>,
    /// Fitted numerical feature encoders, one `field\tspec` line each.
    pub feature_spec: String,
    pub row_counts: IndexMap<String, usize>,
    pub epoch_losses: Vec<f64>,
    /// `test`, `valid` and, when enabled, `popularity` (on test).
    pub metrics: IndexMap<String, MetricReport>,
    /// Seconds per stage.
    pub wall_clock: IndexMap<String, f64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::config(Stage::Config, format!("{}: {e}", path.display())))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| RunError::config(Stage::Config, format!("{}: {e}", path.display())))?;
        manifest.config.validate()?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub model: MfModel,
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::runtime(Stage::Output, format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|e| output_err(path, e))
}

fn create_output(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| output_err(dir, e))
}

fn train_err(e: TrainError) -> RunError {
    match e {
        TrainError::EmptyTrain => RunError::data(Stage::Train, e),
        TrainError::InvalidConfig(_) => RunError::config(Stage::Train, e.to_string()),
        _ => RunError::runtime(Stage::Train, e),
    }
}

fn seeds(config: &RunConfig) -> IndexMap<String, u64> {
    let root = config.seed();
    let mut out = IndexMap::new();
    out.insert("root".to_string(), root);
    for stage in ["split", "init", "loader", "transforms"] {
        out.insert(stage.to_string(), derive_seed(root, stage));
    }
    out
}

/// Per-user training sequences in time order, keeping the most recent
/// `max_len` items. Users are listed in model order.
fn training_sequences(prepared: &Prepared, max_len: usize) -> Vec<(u32, ItemSequence)> {
    let inter = &prepared.data.inter;
    let stamps = inter.floats(TIMESTAMP_FIELD).ok();
    let mut rows = prepared.split.train.clone();
    if let Some(ts) = stamps {
        rows.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    }
    let mut by_user: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for r in rows {
        by_user.entry(prepared.users[r]).or_default().push(prepared.items[r] + 1);
    }
    by_user
        .into_iter()
        .map(|(u, mut items)| {
            if items.len() > max_len {
                items.drain(..items.len() - max_len);
            }
            (u, ItemSequence::new(items, max_len))
        })
        .collect()
}

/// Runs the configured sequence transforms over every user's training
/// history through the two-stage loader.
fn augment_sequences(config: &RunConfig, prepared: &Prepared) -> Result<Option<Frame>, RunError> {
    if config.transforms.is_empty() {
        return Ok(None);
    }
    let specs = config.transform_specs();
    let empty = IdMap::new();
    let item_map = prepared.data.maps.get("item_id").unwrap_or(&empty);
    let user_map = prepared.data.maps.get("user_id").unwrap_or(&empty);
    let mask_id = item_map.len() as u32;
    let sequences = training_sequences(prepared, config.loader.max_seq_len);
    let plan = BatchPlan::new(
        config.loader.batch_size,
        config.loader.shuffle,
        derive_seed(config.seed(), "loader"),
    );
    let blocks = index_blocks(sequences.len(), &plan);
    let transforms_seed = derive_seed(config.seed(), "transforms");
    let collated = collate_parallel(&blocks, config.loader.workers, |_, block| {
        block
            .iter()
            .map(|&p| {
                let (user, seq) = &sequences[p];
                let mut rng = indexed_rng(transforms_seed, "user", u64::from(*user));
                apply_pipeline(seq, &specs, mask_id, &mut rng).map(|t| (*user, t))
            })
            .collect::<Result<Vec<(u32, TransformedSequence)>, _>>()
    });
    let token = |id: u32| -> String {
        match id {
            PAD_ID => PAD_TOKEN.to_string(),
            id if id == mask_id => MASK_TOKEN.to_string(),
            id => item_map.token(id).to_string(),
        }
    };
    let (mut users, mut lists, mut positions, mut targets) = (vec![], vec![], vec![], vec![]);
    for batch in collated {
        for (user, t) in batch.map_err(|e| RunError::data(Stage::Loader, e))? {
            users.push(user_map.token(user + 1).to_string());
            lists.push(t.items.iter().map(|&i| token(i)).collect());
            positions.push(t.mask_positions.iter().map(|&p| p as f64).collect());
            targets.push(t.mask_targets.iter().map(|&i| token(i)).collect());
        }
    }
    let frame = Frame::from_columns(
        SourceKind::Inter,
        IndexMap::from([
            ("user_id".to_string(), Column::Token(users)),
            ("item_id_list".to_string(), Column::TokenSeq(lists)),
            ("mask_position_list".to_string(), Column::FloatSeq(positions)),
            ("mask_target_list".to_string(), Column::TokenSeq(targets)),
        ]),
    )
    .map_err(|e| RunError::runtime(Stage::Loader, e))?;
    Ok(Some(frame))
}

/// Filter, split, fit features, train BPR and evaluate it next to the
/// popularity control. Writes `metrics.txt` (test),
/// `valid_metrics.txt`, `baseline_metrics.txt`, `model.rbmf`,
/// `manifest.json` and, with transforms, `sequences.inter` into the output
/// directory.
pub fn cmd_run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let mut clock = IndexMap::new();
    let mut tick = |name: &str, start: Instant| {
        clock.insert(name.to_string(), start.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    let prepared = prepare(config)?;
    tick("prepare", t);

    let t = Instant::now();
    let sequences = augment_sequences(config, &prepared)?;
    tick("loader", t);

    let t = Instant::now();
    let outcome = train_bpr(&prepared.train_data(), &config.train_config()).map_err(train_err)?;
    tick("train", t);

    let t = Instant::now();
    let workers = config.loader.workers;
    let ks = &config.eval.topk;
    let mut metrics = IndexMap::new();
    metrics.insert(
        "test".to_string(),
        evaluate_topk(&outcome.model, &prepared.test_set(), ks, workers),
    );
    metrics.insert(
        "valid".to_string(),
        evaluate_topk(&outcome.model, &prepared.valid_set(), ks, workers),
    );
    if config.eval.baseline {
        let train_items: Vec<u32> = prepared.split.train.iter().map(|&r| prepared.items[r]).collect();
        let pop = PopularityModel::fit(&train_items, prepared.item_count);
        metrics.insert(
            "popularity".to_string(),
            evaluate_topk(&pop, &prepared.test_set(), ks, workers),
        );
    }
    tick("evaluate", t);

    let mut row_counts = prepared.row_counts().clone();
    if let Some(seqs) = &sequences {
        row_counts.insert("sequences".to_string(), seqs.row_count());
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds: seeds(config),
        feature_spec: prepared.feature_block(),
        row_counts,
        epoch_losses: outcome.epoch_losses.clone(),
        metrics,
        wall_clock: clock,
    };

    let out = &config.output;
    create_output(out)?;
    write_file(&out.join("metrics.txt"), manifest.metrics["test"].to_text())?;
    write_file(&out.join("valid_metrics.txt"), manifest.metrics["valid"].to_text())?;
    if let Some(pop) = manifest.metrics.get("popularity") {
        write_file(&out.join("baseline_metrics.txt"), pop.to_text())?;
    }
    let mut bytes = Vec::new();
    write_checkpoint(&outcome.model, &mut bytes).map_err(|e| RunError::runtime(Stage::Output, e))?;
    write_file(&out.join("model.rbmf"), bytes)?;
    if let Some(seqs) = &sequences {
        let path = out.join("sequences.inter");
        seqs.write_atomic_file(&path).map_err(|e| output_err(&path, e))?;
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::runtime(Stage::Output, e))?;
    write_file(&out.join("manifest.json"), json + "\n")?;
    Ok(RunOutcome {
        manifest,
        model: outcome.model,
    })
}

/// Scores a saved model on the test split rebuilt from `config`, writing
/// `eval_metrics.txt`.
pub fn cmd_evaluate(config: &RunConfig, checkpoint: &Path) -> Result<MetricReport, RunError> {
    config.validate()?;
    let file = std::fs::File::open(checkpoint)
        .map_err(|e| RunError::data(Stage::Evaluate, format!("{}: {e}", checkpoint.display())))?;
    let model = read_checkpoint(std::io::BufReader::new(file))
        .map_err(|e| RunError::data(Stage::Evaluate, format!("{}: {e}", checkpoint.display())))?;
    let prepared = prepare(config)?;
    if model.user_count() != prepared.user_count
        || crate::model::Scorer::item_count(&model) != prepared.item_count
    {
        return Err(RunError::data(
            Stage::Evaluate,
            format!(
                "checkpoint has {} users x {} items, dataset has {} x {}",
                model.user_count(),
                crate::model::Scorer::item_count(&model),
                prepared.user_count,
                prepared.item_count
            ),
        ));
    }
    let report = evaluate_topk(&model, &prepared.test_set(), &config.eval.topk, config.loader.workers);
    create_output(&config.output)?;
    write_file(&config.output.join("eval_metrics.txt"), report.to_text())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub strategy: TuneStrategy,
    pub objective: String,
    pub trials: usize,
    pub failed: usize,
    /// Seconds for the whole search.
    pub wall_clock: f64,
    pub best: Option<TrialRecord>,
}

/// Searches the `[tune]` space, maximizing `eval.valid_metric` on the
/// validation split. Writes `trials.tsv`, `best.toml` and `tune.json`.
pub fn cmd_tune(config: &RunConfig) -> Result<TuneSummary, RunError> {
    config.validate()?;
    let tune = config
        .tune
        .as_ref()
        .ok_or_else(|| RunError::config(Stage::Config, "config has no [tune] section"))?;
    let text = std::fs::read_to_string(&tune.space)
        .map_err(|e| RunError::config(Stage::Config, format!("{}: {e}", tune.space.display())))?;
    let space = SearchSpace::parse(&text).map_err(|e| RunError::config(Stage::Config, e.to_string()))?;
    if let Some(p) = space.params().iter().find(|p| !TUNABLE.contains(&p.name.as_str())) {
        return Err(RunError::config(
            Stage::Config,
            format!("unknown tunable parameter `{}`", p.name),
        ));
    }

    let prepared = prepare(config)?;
    let data = prepared.train_data();
    let valid = prepared.valid_set();
    let metric = config.eval.valid_metric.clone();
    let ks = config.eval.topk.clone();
    let spec = tune.tuner_spec(config.seed());
    let outcome = run_tuning(&spec, &space, |params| {
        let trial = config.with_overrides(params).map_err(|e| e.message)?;
        let trained = train_bpr(&data, &trial.train_config()).map_err(|e| e.to_string())?;
        let report = evaluate_topk(&trained.model, &valid, &ks, 1);
        report.get(&metric).ok_or_else(|| format!("metric `{metric}` missing"))
    })
    .map_err(|e| RunError::config(Stage::Tune, e.to_string()))?;

    let summary = TuneSummary {
        strategy: spec.strategy,
        objective: metric,
        trials: outcome.history.len(),
        failed: outcome
            .history
            .iter()
            .filter(|t| t.status == TrialStatus::Failed)
            .count(),
        wall_clock: outcome.wall_clock,
        best: outcome.best.clone(),
    };
    let out = &config.output;
    create_output(out)?;
    write_file(&out.join("trials.tsv"), trial_log(&space, &outcome.history))?;
    if let Some(best) = &outcome.best {
        write_file(&out.join("best.toml"), best_config(best))?;
    }
    let json = serde_json::to_string_pretty(&summary).map_err(|e| RunError::runtime(Stage::Output, e))?;
    write_file(&out.join("tune.json"), json + "\n")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::{generate_synthetic, write_synthetic, SyntheticSpec};

    fn setup(dir: &Path, extra: &str) -> RunConfig {
        let data = generate_synthetic(&SyntheticSpec {
            users: 30,
            items: 20,
            blocks: 2,
            noise: 0.1,
            per_user: 6,
            seed: 1,
        })
        .unwrap();
        write_synthetic(&data, &dir.join("data"), "toy").unwrap();
        let text = format!(
            "output = \"{out}\"\n[dataset]\npath = \"{data}\"\nname = \"toy\"\n\
             [train]\nepochs = 3\nembedding_size = 4\n{extra}",
            out = dir.join("out").display(),
            data = dir.join("data").display(),
        );
        RunConfig::parse(&text).unwrap()
    }

    #[test]
    fn run_writes_artifacts_and_evaluate_replays() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(
            dir.path(),
            "[[transforms]]\nkind = \"mask\"\nparams = { ratio = 0.5 }\n\
             [[transforms]]\nkind = \"pad\"\nparams = { location = \"begin\" }\n\
             [loader]\nmax_seq_len = 5\nbatch_size = 7\n\
             [numerical_features.price]\nmethod = \"logarithm\"\n",
        );
        let run = cmd_run(&config).unwrap();
        let out = &config.output;
        for f in ["metrics.txt", "valid_metrics.txt", "baseline_metrics.txt", "model.rbmf", "manifest.json", "sequences.inter"] {
            assert!(out.join(f).exists(), "{f}");
        }
        assert_eq!(run.manifest.row_counts["sequences"], 30);
        assert!(run.manifest.feature_spec.starts_with("price\tlogarithm\t"));
        let seqs = crate::atomic::parse_atomic_file(&out.join("sequences.inter")).unwrap();
        match seqs.column("item_id_list").unwrap() {
            Column::TokenSeq(v) => assert!(v.iter().all(|s| s.len() == 5 && s.contains(&MASK_TOKEN.to_string()))),
            _ => panic!("wrong column type"),
        }
        let report = cmd_evaluate(&config, &out.join("model.rbmf")).unwrap();
        assert_eq!(report, run.manifest.metrics["test"]);
        let manifest = RunManifest::load(&out.join("manifest.json")).unwrap();
        assert_eq!(manifest, run.manifest);
    }

    #[test]
    fn tune_grid_writes_log_and_best() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("space.txt"), "learning_rate choice 0.01 0.1\nembedding_size choice 2 4\n").unwrap();
        let config = setup(
            dir.path(),
            &format!(
                "[tune]\nstrategy = \"grid\"\nspace = \"{}\"\nworkers = 2\n",
                dir.path().join("space.txt").display()
            ),
        );
        let summary = cmd_tune(&config).unwrap();
        assert_eq!(summary.trials, 4);
        assert_eq!(summary.failed, 0);
        let log = std::fs::read_to_string(config.output.join("trials.tsv")).unwrap();
        assert_eq!(log.lines().count(), 5);
        let best = std::fs::read_to_string(config.output.join("best.toml")).unwrap();
        let replay = config.with_overrides(&crate::run::parse_overrides(&best).unwrap()).unwrap();
        let params = &summary.best.unwrap().params;
        assert_eq!(Some(replay.train.dim as f64), params.get("embedding_size").and_then(|v| v.as_f64()));
    }

    #[test]
    fn tune_rejects_unknown_parameter() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("space.txt"), "momentum choice 0.9\n").unwrap();
        let config = setup(
            dir.path(),
            &format!("[tune]\nstrategy = \"grid\"\nspace = \"{}\"\n", dir.path().join("space.txt").display()),
        );
        let err = cmd_tune(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!config.output.exists());
    }
}
