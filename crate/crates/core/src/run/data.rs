use std::collections::BTreeSet;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, FilterConfig, RunConfig};
use super::{RunError, Stage};
use crate::atomic::{
    parse_atomic_file, parse_atomic_str, remap_tokens, AtomicError, FieldType, Frame, IdMaps,
    SourceKind,
};
use crate::feature::DiscretizerSpec;
use crate::filtering::{add_inverse_relations, k_core_filter, kg_k_core_filter, CoreSpec, TripleSet};
use crate::model::{EvalSet, TrainData};
use crate::pipeline::SplitResult;

/// Atomic files of one dataset as parsed, tokens not yet remapped.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub inter: Frame,
    pub user: Option<Frame>,
    pub item: Option<Frame>,
    pub kg: Option<Frame>,
    pub link: Option<Frame>,
}

impl RawDataset {
    /// Every frame present, in remapping order.
    pub fn frames(&self) -> Vec<&Frame> {
        std::iter::once(&self.inter)
            .chain([&self.user, &self.item, &self.link, &self.kg].into_iter().flatten())
            .collect()
    }
}

/// Reads `<path>/<name>.inter` and whichever of the other atomic files exist.
pub fn load_raw(dataset: &DatasetConfig) -> Result<RawDataset, RunError> {
    let read = |kind: SourceKind| -> Result<Option<Frame>, RunError> {
        let path = dataset.file(kind.suffix());
        if !path.exists() {
            return Ok(None);
        }
        parse_atomic_file(&path)
            .map(Some)
            .map_err(|e| RunError::data(Stage::Load, format!("{}: {e}", path.display())))
    };
    let inter = read(SourceKind::Inter)?.ok_or_else(|| {
        RunError::data(
            Stage::Load,
            format!("missing interaction file {}", dataset.file("inter").display()),
        )
    })?;
    Ok(RawDataset {
        inter,
        user: read(SourceKind::User)?,
        item: read(SourceKind::Item)?,
        kg: read(SourceKind::Kg)?,
        link: read(SourceKind::Link)?,
    })
}

/// A dataset after k-core filtering and remapping. The interaction frame is
/// remapped first, so its users and items hold the lowest ids.
#[derive(Debug, Clone)]
pub struct Filtered {
    pub inter: Frame,
    pub user: Option<Frame>,
    pub item: Option<Frame>,
    pub kg: Option<Frame>,
    pub link: Option<Frame>,
    pub maps: IdMaps,
    pub row_counts: IndexMap<String, usize>,
}

impl Filtered {
    /// Frames with ids turned back into tokens, keyed by suffix.
    pub fn detokenized(&self) -> Vec<(SourceKind, Frame)> {
        std::iter::once(&self.inter)
            .chain([&self.user, &self.item, &self.kg, &self.link].into_iter().flatten())
            .map(|f| (f.kind, f.detokenize(&self.maps)))
            .collect()
    }
}

fn filter_err(e: impl std::fmt::Display) -> RunError {
    RunError::data(Stage::Filter, e)
}

/// Applies the interaction and knowledge-graph cores, then remaps tokens.
/// Inverse relations get the tokens `<relation>_inv`.
pub fn filter_dataset(raw: RawDataset, filter: &FilterConfig) -> Result<Filtered, RunError> {
    let spec = CoreSpec::new(filter.k_user, filter.k_item)
        .map_err(|e| RunError::config(Stage::Filter, e.to_string()))?;
    let mut row_counts = IndexMap::new();
    row_counts.insert("inter_raw".to_string(), raw.inter.row_count());
    let inter = k_core_filter(&raw.inter, spec).map_err(filter_err)?;
    row_counts.insert("inter_filtered".to_string(), inter.row_count());

    let mut maps = IdMaps::new();
    let inter = remap_tokens(inter, &mut maps);
    let mut remap = |f: Option<Frame>| f.map(|f| remap_tokens(f, &mut maps));
    let user = remap(raw.user);
    let item = remap(raw.item);
    let link = remap(raw.link);
    let mut kg = remap(raw.kg);

    if let Some(frame) = &kg {
        row_counts.insert("kg_raw".to_string(), frame.row_count());
        let mut triples = TripleSet::from_frame(frame).map_err(filter_err)?;
        if filter.kg_k > 0 {
            triples = kg_k_core_filter(&triples, filter.kg_k);
        }
        if filter.inverse_relations {
            let relations = maps.entry("relation_id".to_string()).or_default();
            let count = relations.len() as u32 - 1;
            let tokens: Vec<String> = relations.tokens()[1..].to_vec();
            for (k, token) in tokens.iter().enumerate() {
                let id = relations.intern(&format!("{token}_inv"));
                if id != k as u32 + 1 + count {
                    return Err(filter_err(format!(
                        "relation token `{token}_inv` already exists"
                    )));
                }
            }
            // Relation ids are 1-based because of the pad; shift to dense and back.
            let dense = TripleSet::new(
                triples.heads.clone(),
                triples.relations.iter().map(|r| r - 1).collect(),
                triples.tails.clone(),
            )
            .map_err(filter_err)?;
            let both = add_inverse_relations(&dense, count).map_err(filter_err)?;
            triples = TripleSet::new(
                both.heads,
                both.relations.into_iter().map(|r| r + 1).collect(),
                both.tails,
            )
            .map_err(filter_err)?;
        }
        row_counts.insert("kg_filtered".to_string(), triples.len());
        kg = Some(triples.to_frame());
    }
    Ok(Filtered {
        inter,
        user,
        item,
        kg,
        link,
        maps,
        row_counts,
    })
}

/// Everything a training run needs, derived deterministically from the
/// config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Filtered,
    pub split: SplitResult,
    /// Model-space user index of each interaction row.
    pub users: Vec<u32>,
    /// Model-space item index of each interaction row.
    pub items: Vec<u32>,
    pub user_count: usize,
    pub item_count: usize,
    pub feature_specs: IndexMap<String, DiscretizerSpec>,
}

impl Prepared {
    pub fn row_counts(&self) -> &IndexMap<String, usize> {
        &self.data.row_counts
    }

    pub fn train_data(&self) -> TrainData {
        let rows = &self.split.train;
        TrainData::new(
            rows.iter().map(|&r| self.users[r]).collect(),
            rows.iter().map(|&r| self.items[r]).collect(),
            self.user_count,
            self.item_count,
        )
    }

    /// Targets are validation rows, with training rows masked.
    pub fn valid_set(&self) -> EvalSet {
        EvalSet::new(&self.users, &self.items, &self.split.train, &self.split.valid)
    }

    /// Targets are test rows, with training and validation rows masked.
    pub fn test_set(&self) -> EvalSet {
        let history: Vec<usize> = self
            .split
            .train
            .iter()
            .chain(&self.split.valid)
            .copied()
            .collect();
        EvalSet::new(&self.users, &self.items, &history, &self.split.test)
    }

    /// One `field\tspec` line per fitted numerical feature.
    pub fn feature_block(&self) -> String {
        let mut out = String::new();
        for (field, spec) in &self.feature_specs {
            let _ = writeln!(out, "{field}\t{spec}");
        }
        out
    }
}

fn fit_features(config: &RunConfig, data: &Filtered) -> Result<IndexMap<String, DiscretizerSpec>, RunError> {
    let mut specs = IndexMap::new();
    for (field, feature) in &config.numerical_features {
        let frame = [data.item.as_ref(), data.user.as_ref(), Some(&data.inter)]
            .into_iter()
            .flatten()
            .find(|f| f.has_field(field))
            .ok_or_else(|| RunError::data(Stage::Features, format!("no frame has field `{field}`")))?;
        let values = frame
            .floats(field)
            .map_err(|e| RunError::data(Stage::Features, e))?;
        let spec = DiscretizerSpec::fit(feature.method, values, feature.buckets)
            .map_err(|e| RunError::data(Stage::Features, format!("{field}: {e}")))?;
        spec.encode_column(values)
            .map_err(|e| RunError::data(Stage::Features, format!("{field}: {e}")))?;
        specs.insert(field.clone(), spec);
    }
    Ok(specs)
}

/// Loads, filters, fits features and splits according to `config`.
pub fn prepare(config: &RunConfig) -> Result<Prepared, RunError> {
    let raw = load_raw(&config.dataset)?;
    let data = filter_dataset(raw, &config.filter)?;
    let feature_specs = fit_features(config, &data)?;
    let split = config
        .split
        .apply(&data.inter, config.seed())
        .map_err(|e| RunError::data(Stage::Split, e))?;
    let shift = |name: &str| -> Result<Vec<u32>, RunError> {
        let ids = data.inter.ids(name).map_err(|e| RunError::data(Stage::Split, e))?;
        Ok(ids.iter().map(|&id| id - 1).collect())
    };
    let users = shift("user_id")?;
    let items = shift("item_id")?;
    let dense = |v: &[u32]| v.iter().max().map_or(0, |&m| m as usize + 1);
    let (user_count, item_count) = (dense(&users), dense(&items));
    let mut data = data;
    for (name, n) in [
        ("train", split.train.len()),
        ("valid", split.valid.len()),
        ("test", split.test.len()),
        ("users", user_count),
        ("items", item_count),
    ] {
        data.row_counts.insert(name.to_string(), n);
    }
    Ok(Prepared {
        data,
        split,
        users,
        items,
        user_count,
        item_count,
        feature_specs,
    })
}

/// Train, validation and test interaction frames with original tokens.
pub fn split_frames(prepared: &Prepared) -> Result<[Frame; 3], RunError> {
    let part = |rows: &[usize]| -> Result<Frame, RunError> {
        Ok(prepared
            .data
            .inter
            .select_rows(rows)
            .map_err(|e| RunError::data(Stage::Split, e))?
            .detokenize(&prepared.data.maps))
    };
    Ok([
        part(&prepared.split.train)?,
        part(&prepared.split.valid)?,
        part(&prepared.split.test)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// `1 - interactions / (users * items)`, or 0 for an empty dataset.
    pub sparsity: f64,
}

impl DatasetStats {
    pub fn from_pairs(users: &[u32], items: &[u32]) -> Self {
        let u = users.iter().collect::<BTreeSet<_>>().len();
        let i = items.iter().collect::<BTreeSet<_>>().len();
        let n = users.len();
        let sparsity = if u == 0 || i == 0 {
            0.0
        } else {
            1.0 - n as f64 / (u as f64 * i as f64)
        };
        DatasetStats {
            users: u,
            items: i,
            interactions: n,
            sparsity,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "users\t{}\nitems\t{}\ninteractions\t{}\nsparsity\t{}\n",
            self.users, self.items, self.interactions, self.sparsity
        )
    }
}

/// Counts users, items and interactions of the interaction file.
pub fn cmd_stats(dataset: &DatasetConfig) -> Result<DatasetStats, RunError> {
    let path = dataset.file("inter");
    let inter = parse_atomic_file(&path)
        .map_err(|e| RunError::data(Stage::Load, format!("{}: {e}", path.display())))?;
    let mut maps = IdMaps::new();
    let inter = remap_tokens(inter, &mut maps);
    let ids = |name| inter.ids(name).map_err(|e| RunError::data(Stage::Load, e));
    Ok(DatasetStats::from_pairs(ids("user_id")?, ids("item_id")?))
}

/// Turns a delimited text file into a typed frame. `fields` names every
/// input column in order; columns named `-` are dropped. With `has_header`
/// the first line is skipped.
pub fn convert_delimited(
    text: &str,
    separator: char,
    fields: &[(String, FieldType)],
    kind: SourceKind,
    has_header: bool,
) -> Result<Frame, AtomicError> {
    let keep: Vec<usize> = (0..fields.len()).filter(|&k| fields[k].0 != "-").collect();
    let mut out = keep
        .iter()
        .map(|&k| format!("{}:{}", fields[k].0, fields[k].1.tag()))
        .collect::<Vec<_>>()
        .join("\t");
    out.push('\n');
    for (n, line) in text.lines().enumerate().skip(usize::from(has_header)) {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(separator).collect();
        if cells.len() != fields.len() {
            return Err(AtomicError::RowArityMismatch {
                line: n + 1,
                expected: fields.len(),
                found: cells.len(),
            });
        }
        let row: Vec<&str> = keep.iter().map(|&k| cells[k].trim()).collect();
        if row.iter().any(|c| c.contains('\t')) {
            return Err(AtomicError::RowArityMismatch {
                line: n + 1,
                expected: fields.len(),
                found: cells.len() + 1,
            });
        }
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    parse_atomic_str(&out, kind)
}
