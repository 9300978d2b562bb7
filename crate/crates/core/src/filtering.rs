//! k-core filtering of interactions and knowledge-graph triples, plus
//! inverse-relation augmentation.
//!
//! Both filters use degree counters and a worklist: a node whose degree drops
//! below its threshold is queued once, and removing it decrements only the
//! counters of rows it touches. Total work is linear in the number of rows.

use std::collections::VecDeque;

use thiserror::Error;

use crate::atomic::{AtomicError, Column, Frame};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("core thresholds must be at least 1 (got k_user={k_user}, k_item={k_item})")]
    InvalidCoreSpec { k_user: usize, k_item: usize },
    #[error("relation id {relation} is not below relation count {relation_count}")]
    RelationIdOverflow { relation: u32, relation_count: u32 },
    #[error("triple columns have different lengths")]
    RaggedTriples,
    #[error(transparent)]
    Atomic(#[from] AtomicError),
}

/// Minimum interaction counts for users and items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreSpec {
    k_user: usize,
    k_item: usize,
}

impl CoreSpec {
    pub fn new(k_user: usize, k_item: usize) -> Result<Self, FilterError> {
        if k_user == 0 || k_item == 0 {
            return Err(FilterError::InvalidCoreSpec { k_user, k_item });
        }
        Ok(CoreSpec { k_user, k_item })
    }

    pub fn k_user(&self) -> usize {
        self.k_user
    }

    pub fn k_item(&self) -> usize {
        self.k_item
    }
}

/// Knowledge-graph triples as three parallel id columns.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleSet {
    pub heads: Vec<u32>,
    pub relations: Vec<u32>,
    pub tails: Vec<u32>,
}

impl TripleSet {
    pub fn new(heads: Vec<u32>, relations: Vec<u32>, tails: Vec<u32>) -> Result<Self, FilterError> {
        if heads.len() != relations.len() || heads.len() != tails.len() {
            return Err(FilterError::RaggedTriples);
        }
        Ok(TripleSet {
            heads,
            relations,
            tails,
        })
    }

    pub fn from_triples(triples: &[(u32, u32, u32)]) -> Self {
        TripleSet {
            heads: triples.iter().map(|t| t.0).collect(),
            relations: triples.iter().map(|t| t.1).collect(),
            tails: triples.iter().map(|t| t.2).collect(),
        }
    }

    /// Reads `head_id`, `relation_id`, `tail_id` from a `.kg` frame.
    pub fn from_frame(frame: &Frame) -> Result<Self, FilterError> {
        Ok(TripleSet {
            heads: frame.row_keys("head_id")?,
            relations: frame.row_keys("relation_id")?,
            tails: frame.row_keys("tail_id")?,
        })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn triple(&self, i: usize) -> (u32, u32, u32) {
        (self.heads[i], self.relations[i], self.tails[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.len()).map(|i| self.triple(i))
    }

    pub fn select(&self, rows: &[usize]) -> TripleSet {
        TripleSet {
            heads: rows.iter().map(|&i| self.heads[i]).collect(),
            relations: rows.iter().map(|&i| self.relations[i]).collect(),
            tails: rows.iter().map(|&i| self.tails[i]).collect(),
        }
    }

    /// Frame with `head_id`, `relation_id`, `tail_id` id columns.
    pub fn to_frame(&self) -> Frame {
        let columns = [
            ("head_id", &self.heads),
            ("relation_id", &self.relations),
            ("tail_id", &self.tails),
        ]
        .into_iter()
        .map(|(n, v)| (n.to_string(), Column::Id(v.clone())))
        .collect();
        Frame::from_columns(crate::atomic::SourceKind::Kg, columns)
            .expect("triple columns have equal length")
    }
}

fn dense_len(keys: &[u32]) -> usize {
    keys.iter().max().map_or(0, |&m| m as usize + 1)
}

/// Rows surviving the bipartite (k_user, k_item)-core of the edge list
/// `users[r] -- items[r]`, in row order.
pub fn k_core_rows(users: &[u32], items: &[u32], spec: CoreSpec) -> Vec<usize> {
    let n = users.len();
    let (nu, ni) = (dense_len(users), dense_len(items));
    // Node ids: users first, then items offset by nu.
    let nodes = nu + ni;
    let mut degree = vec![0usize; nodes];
    let mut adjacency_start = vec![0usize; nodes + 1];
    for r in 0..n {
        degree[users[r] as usize] += 1;
        degree[nu + items[r] as usize] += 1;
    }
    for v in 0..nodes {
        adjacency_start[v + 1] = adjacency_start[v] + degree[v];
    }
    let mut fill = adjacency_start.clone();
    let mut adjacency = vec![0usize; 2 * n];
    for r in 0..n {
        for v in [users[r] as usize, nu + items[r] as usize] {
            adjacency[fill[v]] = r;
            fill[v] += 1;
        }
    }
    let threshold = |v: usize| if v < nu { spec.k_user } else { spec.k_item };

    let mut removed = vec![false; nodes];
    let mut queued = vec![false; nodes];
    let mut alive = vec![true; n];
    let mut queue = VecDeque::new();
    for v in 0..nodes {
        if degree[v] > 0 && degree[v] < threshold(v) {
            queued[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        removed[v] = true;
        for &r in &adjacency[adjacency_start[v]..adjacency_start[v + 1]] {
            if !alive[r] {
                continue;
            }
            alive[r] = false;
            for w in [users[r] as usize, nu + items[r] as usize] {
                degree[w] -= 1;
                if !removed[w] && !queued[w] && degree[w] < threshold(w) {
                    queued[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    (0..n).filter(|&r| alive[r]).collect()
}

/// Maximal subframe where every user has at least `k_user` rows and every
/// item at least `k_item` rows. Row order is preserved.
pub fn k_core_filter(inter: &Frame, spec: CoreSpec) -> Result<Frame, FilterError> {
    let users = inter.row_keys("user_id")?;
    let items = inter.row_keys("item_id")?;
    let rows = k_core_rows(&users, &items, spec);
    Ok(inter.select_rows(&rows)?)
}

/// Rows of the k-core of a triple set: every surviving entity occurs (as head
/// or tail) in at least `k` triples and every surviving relation labels at
/// least `k` triples.
pub fn kg_k_core_rows(triples: &TripleSet, k: usize) -> Vec<usize> {
    let n = triples.len();
    let ne = dense_len(&triples.heads).max(dense_len(&triples.tails));
    let nr = dense_len(&triples.relations);
    // Node ids: entities first, then relations offset by ne.
    let nodes = ne + nr;
    let touched = |r: usize| -> ([usize; 3], usize) {
        let (h, rel, t) = triples.triple(r);
        if h == t {
            ([h as usize, ne + rel as usize, 0], 2)
        } else {
            ([h as usize, t as usize, ne + rel as usize], 3)
        }
    };
    let mut degree = vec![0usize; nodes];
    for r in 0..n {
        let (vs, m) = touched(r);
        for &v in &vs[..m] {
            degree[v] += 1;
        }
    }
    let mut start = vec![0usize; nodes + 1];
    for v in 0..nodes {
        start[v + 1] = start[v] + degree[v];
    }
    let mut fill = start.clone();
    let mut adjacency = vec![0usize; start[nodes]];
    for r in 0..n {
        let (vs, m) = touched(r);
        for &v in &vs[..m] {
            adjacency[fill[v]] = r;
            fill[v] += 1;
        }
    }

    let mut removed = vec![false; nodes];
    let mut queued = vec![false; nodes];
    let mut alive = vec![true; n];
    let mut queue: VecDeque<usize> = (0..nodes).filter(|&v| degree[v] > 0 && degree[v] < k).collect();
    for &v in &queue {
        queued[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        removed[v] = true;
        for &r in &adjacency[start[v]..start[v + 1]] {
            if !alive[r] {
                continue;
            }
            alive[r] = false;
            let (vs, m) = touched(r);
            for &w in &vs[..m] {
                degree[w] -= 1;
                if !removed[w] && !queued[w] && degree[w] < k {
                    queued[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    (0..n).filter(|&r| alive[r]).collect()
}

pub fn kg_k_core_filter(triples: &TripleSet, k: usize) -> TripleSet {
    triples.select(&kg_k_core_rows(triples, k))
}

/// Appends `(t, r + relation_count, h)` for every `(h, r, t)`, after all
/// original rows.
pub fn add_inverse_relations(
    triples: &TripleSet,
    relation_count: u32,
) -> Result<TripleSet, FilterError> {
    if let Some(&relation) = triples.relations.iter().find(|&&r| r >= relation_count) {
        return Err(FilterError::RelationIdOverflow {
            relation,
            relation_count,
        });
    }
    let mut out = triples.clone();
    out.heads.extend_from_slice(&triples.tails);
    out.relations
        .extend(triples.relations.iter().map(|r| r + relation_count));
    out.tails.extend_from_slice(&triples.heads);
    Ok(out)
}
