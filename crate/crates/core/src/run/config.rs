//! TOML run configuration.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{RunError, Stage};
use crate::feature::Method;
use crate::filtering::CoreSpec;
use crate::model::{TrainConfig, METRIC_NAMES};
use crate::pipeline::{SplitScheme, SplitSpec};
use crate::sampling::{SamplerSpec, Strategy};
use crate::seq::{validate_pipeline, PadLocation, TransformSpec};
use crate::tune::{Assignment, ParamValue, TpeSettings, TuneStrategy, TunerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub reproducibility: Reproducibility,
    /// Directory receiving every artifact of the run.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
    #[serde(default)]
    pub loader: LoaderConfig,
    #[serde(default)]
    pub transforms: Vec<TransformConfig>,
    #[serde(default)]
    pub train_neg_sample_args: SamplerSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub numerical_features: IndexMap<String, FeatureConfig>,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

fn default_split() -> SplitSpec {
    SplitSpec {
        scheme: SplitScheme::Ratio,
        ratios: vec![0.8, 0.1, 0.1],
        order: crate::pipeline::SplitOrder::Temporal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reproducibility {
    pub seed: u64,
}

impl Default for Reproducibility {
    fn default() -> Self {
        Reproducibility { seed: 2022 }
    }
}

/// Atomic files are read from `<path>/<name>.<suffix>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub name: String,
}

impl DatasetConfig {
    pub fn file(&self, suffix: &str) -> PathBuf {
        self.path.join(format!("{}.{suffix}", self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "one")]
    pub k_user: usize,
    #[serde(default = "one")]
    pub k_item: usize,
    /// 0 leaves the knowledge graph untouched.
    #[serde(default)]
    pub kg_k: usize,
    #[serde(default)]
    pub inverse_relations: bool,
}

fn one() -> usize {
    1
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            k_user: 1,
            k_item: 1,
            kg_k: 0,
            inverse_relations: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoaderConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "yes")]
    pub shuffle: bool,
    #[serde(default = "one")]
    pub workers: usize,
    /// Longest item sequence kept per user (most recent items win).
    #[serde(default = "default_max_seq_len")]
    pub max_seq_len: usize,
}

fn default_batch() -> usize {
    256
}

fn yes() -> bool {
    true
}

fn default_max_seq_len() -> usize {
    50
}

impl Default for LoaderConfig {
    fn default() -> Self {
        LoaderConfig {
            batch_size: 256,
            shuffle: true,
            workers: 1,
            max_seq_len: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformConfig {
    Mask { ratio: f64 },
    Crop { eta: f64 },
    Reorder { beta: f64 },
    Pad { location: PadSide },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadSide {
    Begin,
    End,
}

impl TransformConfig {
    pub fn to_spec(self) -> TransformSpec {
        match self {
            TransformConfig::Mask { ratio } => TransformSpec::Mask { ratio },
            TransformConfig::Crop { eta } => TransformSpec::Crop { eta },
            TransformConfig::Reorder { beta } => TransformSpec::Reorder { beta },
            TransformConfig::Pad { location } => TransformSpec::Pad {
                location: match location {
                    PadSide::Begin => PadLocation::Begin,
                    PadSide::End => PadLocation::End,
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_topk")]
    pub topk: Vec<usize>,
    /// Validation metric maximized by tuning, e.g. `ndcg@10`.
    #[serde(default = "default_valid_metric")]
    pub valid_metric: String,
    /// Also score the popularity control on the test split.
    #[serde(default = "yes")]
    pub baseline: bool,
}

fn default_topk() -> Vec<usize> {
    vec![5, 10]
}

fn default_valid_metric() -> String {
    "ndcg@10".into()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            topk: default_topk(),
            valid_metric: default_valid_metric(),
            baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub method: Method,
    #[serde(default)]
    pub buckets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub strategy: TuneStrategy,
    /// Search-space file, relative to the config file's directory.
    pub space: PathBuf,
    #[serde(default = "default_trials")]
    pub max_trials: usize,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    #[serde(default = "default_startup")]
    pub n_startup: usize,
}

fn default_trials() -> usize {
    20
}

fn default_gamma() -> f64 {
    TpeSettings::default().gamma
}

fn default_candidates() -> usize {
    TpeSettings::default().n_candidates
}

fn default_startup() -> usize {
    TpeSettings::default().n_startup
}

impl TuneConfig {
    pub fn tuner_spec(&self, seed: u64) -> TunerSpec {
        TunerSpec {
            strategy: self.strategy,
            max_trials: self.max_trials,
            seed,
            workers: self.workers,
            tpe: TpeSettings {
                gamma: self.gamma,
                n_candidates: self.n_candidates,
                n_startup: self.n_startup,
            },
        }
    }
}

/// Parameter names accepted by [`RunConfig::with_overrides`].
pub const TUNABLE: [&str; 9] = [
    "learning_rate",
    "l2_reg",
    "epochs",
    "embedding_size",
    "batch_size",
    "strategy",
    "alpha",
    "candidates",
    "per_positive",
];

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::config(Stage::Config, msg)
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        self.dataset.path = join(&self.dataset.path);
        self.output = join(&self.output);
        if let Some(t) = &mut self.tune {
            t.space = join(&t.space);
        }
    }

    pub fn seed(&self) -> u64 {
        self.reproducibility.seed
    }

    /// Training settings with the run seed and sampler folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed(),
            sampler: self.train_neg_sample_args,
            batch_size: self.loader.batch_size,
            ..self.train.clone()
        }
    }

    pub fn transform_specs(&self) -> Vec<TransformSpec> {
        self.transforms.iter().map(|t| t.to_spec()).collect()
    }

    /// Checks every section without touching the filesystem.
    pub fn validate(&self) -> Result<(), RunError> {
        if self.dataset.name.is_empty() {
            return Err(invalid("dataset.name is empty"));
        }
        CoreSpec::new(self.filter.k_user, self.filter.k_item).map_err(|e| invalid(e.to_string()))?;
        self.split.validate().map_err(|e| invalid(e.to_string()))?;
        if self.loader.batch_size == 0 || self.loader.workers == 0 || self.loader.max_seq_len == 0 {
            return Err(invalid("loader.batch_size, workers and max_seq_len must be >= 1"));
        }
        validate_pipeline(&self.transform_specs()).map_err(|e| invalid(e.to_string()))?;
        self.train_config().validate().map_err(|e| invalid(e.to_string()))?;
        if self.eval.topk.is_empty() || self.eval.topk.contains(&0) {
            return Err(invalid("eval.topk needs positive cutoffs"));
        }
        let valid_metric_ok = self.eval.valid_metric.split_once('@').is_some_and(|(name, k)| {
            METRIC_NAMES.contains(&name)
                && k.parse::<usize>().is_ok_and(|k| self.eval.topk.contains(&k))
        });
        if !valid_metric_ok {
            return Err(invalid(format!(
                "eval.valid_metric `{}` must be <metric>@<k> with k in eval.topk",
                self.eval.valid_metric
            )));
        }
        for (field, f) in &self.numerical_features {
            if f.method == Method::EqualDistance && f.buckets == 0 {
                return Err(invalid(format!("numerical_features.{field}.buckets must be >= 1")));
            }
        }
        if let Some(t) = &self.tune {
            t.tuner_spec(self.seed()).validate().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies tuned values by name (see [`TUNABLE`]) and revalidates.
    pub fn with_overrides(&self, params: &Assignment) -> Result<RunConfig, RunError> {
        let mut out = self.clone();
        for (name, value) in params.iter() {
            let num = || {
                value
                    .as_f64()
                    .ok_or_else(|| invalid(format!("`{name}` needs a number, got {value}")))
            };
            let count = || -> Result<usize, RunError> {
                let x = num()?;
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(invalid(format!("`{name}` needs a non-negative integer, got {value}")))
                }
            };
            match name {
                "learning_rate" => out.train.learning_rate = num()?,
                "l2_reg" => out.train.l2_reg = num()?,
                "epochs" => out.train.epochs = count()?,
                "embedding_size" => out.train.dim = count()?,
                "batch_size" => out.loader.batch_size = count()?,
                "alpha" => out.train_neg_sample_args.alpha = num()?,
                "candidates" => out.train_neg_sample_args.dns_candidates = count()?,
                "per_positive" => out.train_neg_sample_args.per_positive = count()?,
                "strategy" => {
                    out.train_neg_sample_args.strategy = match value {
                        ParamValue::Text(s) => match s.as_str() {
                            "rns" => Strategy::Rns,
                            "pns" => Strategy::Pns,
                            "dns" => Strategy::Dns,
                            _ => return Err(invalid(format!("unknown sampler `{s}`"))),
                        },
                        _ => return Err(invalid(format!("unknown sampler `{value}`"))),
                    }
                }
                other => return Err(invalid(format!("unknown tunable parameter `{other}`"))),
            }
        }
        out.validate()?;
        Ok(out)
    }
}

/// Parses `name = value` lines as written by the tuner's best-config file.
pub fn parse_overrides(text: &str) -> Result<Assignment, RunError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
    let mut out = Vec::new();
    for (name, value) in table {
        let value = match value {
            toml::Value::Integer(i) => ParamValue::Int(i),
            toml::Value::Float(f) => ParamValue::Float(f),
            toml::Value::String(s) => ParamValue::Text(s),
            other => return Err(invalid(format!("`{name}`: unsupported value {other}"))),
        };
        out.push((name, value));
    }
    Ok(Assignment(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[dataset]\npath = \"data\"\nname = \"toy\"\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed(), 2022);
        assert_eq!(c.split.ratios, vec![0.8, 0.1, 0.1]);
        assert_eq!(c.eval.topk, vec![5, 10]);
        assert_eq!(c.train_config().sampler.strategy, Strategy::Rns);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
output = "out"
[reproducibility]
seed = 7
[dataset]
path = "data"
name = "toy"
[filter]
k_user = 3
k_item = 2
kg_k = 1
inverse_relations = true
[split]
scheme = "leave_one_out"
[loader]
batch_size = 64
shuffle = false
workers = 2
[[transforms]]
kind = "crop"
params = { eta = 0.6 }
[[transforms]]
kind = "pad"
params = { location = "begin" }
[train_neg_sample_args]
strategy = "dns"
candidates = 4
[train]
learning_rate = 0.1
epochs = 5
embedding_size = 8
[eval]
topk = [10]
valid_metric = "recall@10"
[numerical_features.price]
method = "equal_distance"
buckets = 8
[tune]
strategy = "tpe"
space = "space.txt"
max_trials = 12
"#;
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.seed(), 7);
        assert_eq!(c.transforms.len(), 2);
        assert_eq!(c.train_config().sampler.dns_candidates, 4);
        assert_eq!(c.numerical_features["price"].buckets, 8);
        assert_eq!(c.tune.unwrap().max_trials, 12);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            format!("{MINIMAL}[split]\nscheme = \"ratio\"\nratios = [0.7, 0.1, 0.1]\n"),
            format!("{MINIMAL}bogus = 1\n"),
            format!("{MINIMAL}[filter]\nk_user = 0\n"),
            format!("{MINIMAL}[[transforms]]\nkind = \"pad\"\nparams = {{ location = \"end\" }}\n[[transforms]]\nkind = \"mask\"\nparams = {{ ratio = 0.2 }}\n"),
            format!("{MINIMAL}[[transforms]]\nkind = \"crop\"\nparams = {{ eta = 1.5 }}\n"),
            format!("{MINIMAL}[eval]\nvalid_metric = \"ndcg@20\"\n"),
            format!("{MINIMAL}[train]\nlearning_rate = 0.1\nepochs = 0\nembedding_size = 4\n"),
            format!("{MINIMAL}[train_neg_sample_args]\nstrategy = \"xyz\"\n"),
            format!("{MINIMAL}[numerical_features.p]\nmethod = \"equal_distance\"\n"),
            format!("{MINIMAL}[tune]\nstrategy = \"random\"\nspace = \"s\"\nmax_trials = 0\n"),
            "[dataset]\npath = \"d\"\n".to_string(),
        ];
        for text in &cases {
            let err = RunConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn overrides_apply_and_validate() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let a = parse_overrides("learning_rate = 0.5\nembedding_size = 16\nstrategy = \"pns\"\n").unwrap();
        let d = c.with_overrides(&a).unwrap();
        assert_eq!(d.train.learning_rate, 0.5);
        assert_eq!(d.train.dim, 16);
        assert_eq!(d.train_neg_sample_args.strategy, Strategy::Pns);
        assert!(c.with_overrides(&parse_overrides("nope = 1").unwrap()).is_err());
        assert!(c.with_overrides(&parse_overrides("embedding_size = 1.5").unwrap()).is_err());
    }
}
