//! Atomic files: typed, tab-separated dataset files.
//!
//! Line 1 holds `name:type` entries joined by tabs, every following line is
//! one row. Sequence cells separate their elements with a single space. There
//! is no quoting or escaping.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

/// Token reserved for id 0 in every token field.
pub const PAD_TOKEN: &str = "[PAD]";
/// Id of [`PAD_TOKEN`].
pub const PAD_ID: u32 = 0;

#[derive(Debug, Error)]
pub enum AtomicError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} cells, found {found}")]
    RowArityMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: field `{field}` has non-numeric value `{value}`")]
    NumericParseError {
        line: usize,
        field: String,
        value: String,
    },
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown atomic file suffix in `{0}`")]
    UnknownSuffix(String),
    #[error("link file must declare exactly `item_id:token` and `entity_id:token`, found [{0}]")]
    LinkSchemaMismatch(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` is not a {expected} column")]
    WrongFieldType {
        field: String,
        expected: &'static str,
    },
    #[error("interactions disagree on column set")]
    ColumnMismatch,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = AtomicError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    Token,
    TokenSeq,
    Float,
    FloatSeq,
}

impl FieldType {
    pub fn tag(self) -> &'static str {
        match self {
            FieldType::Token => "token",
            FieldType::TokenSeq => "token_seq",
            FieldType::Float => "float",
            FieldType::FloatSeq => "float_seq",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "token" => FieldType::Token,
            "token_seq" => FieldType::TokenSeq,
            "float" => FieldType::Float,
            "float_seq" => FieldType::FloatSeq,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Inter,
    User,
    Item,
    Kg,
    Link,
}

impl SourceKind {
    pub fn suffix(self) -> &'static str {
        match self {
            SourceKind::Inter => "inter",
            SourceKind::User => "user",
            SourceKind::Item => "item",
            SourceKind::Kg => "kg",
            SourceKind::Link => "link",
        }
    }

    pub const ALL: [SourceKind; 5] = [
        SourceKind::Inter,
        SourceKind::User,
        SourceKind::Item,
        SourceKind::Kg,
        SourceKind::Link,
    ];

    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        SourceKind::ALL
            .into_iter()
            .find(|k| k.suffix() == ext)
            .ok_or_else(|| AtomicError::UnknownSuffix(path.display().to_string()))
    }
}

/// A typed column. Token columns hold raw strings until [`remap_tokens`]
/// turns them into `Id`/`IdSeq` columns.
#[derive(Debug, Clone)]
pub enum Column {
    Token(Vec<String>),
    TokenSeq(Vec<Vec<String>>),
    Id(Vec<u32>),
    IdSeq(Vec<Vec<u32>>),
    Float(Vec<f64>),
    FloatSeq(Vec<Vec<f64>>),
}

/// Borrowed view of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Token(&'a str),
    TokenSeq(&'a [String]),
    Id(u32),
    IdSeq(&'a [u32]),
    Float(f64),
    FloatSeq(&'a [f64]),
}

fn float_eq(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

fn float_slice_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| float_eq(*x, *y))
}

// NaN marks a missing float cell, so two missing cells compare equal.
impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        use Column::*;
        match (self, other) {
            (Token(a), Token(b)) => a == b,
            (TokenSeq(a), TokenSeq(b)) => a == b,
            (Id(a), Id(b)) => a == b,
            (IdSeq(a), IdSeq(b)) => a == b,
            (Float(a), Float(b)) => float_slice_eq(a, b),
            (FloatSeq(a), FloatSeq(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| float_slice_eq(x, y))
            }
            _ => false,
        }
    }
}

impl Column {
    fn empty(ty: FieldType) -> Self {
        match ty {
            FieldType::Token => Column::Token(Vec::new()),
            FieldType::TokenSeq => Column::TokenSeq(Vec::new()),
            FieldType::Float => Column::Float(Vec::new()),
            FieldType::FloatSeq => Column::FloatSeq(Vec::new()),
        }
    }

    pub fn field_type(&self) -> FieldType {
        match self {
            Column::Token(_) | Column::Id(_) => FieldType::Token,
            Column::TokenSeq(_) | Column::IdSeq(_) => FieldType::TokenSeq,
            Column::Float(_) => FieldType::Float,
            Column::FloatSeq(_) => FieldType::FloatSeq,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Token(v) => v.len(),
            Column::TokenSeq(v) => v.len(),
            Column::Id(v) => v.len(),
            Column::IdSeq(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::FloatSeq(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, row: usize) -> Option<Cell<'_>> {
        Some(match self {
            Column::Token(v) => Cell::Token(v.get(row)?),
            Column::TokenSeq(v) => Cell::TokenSeq(v.get(row)?),
            Column::Id(v) => Cell::Id(*v.get(row)?),
            Column::IdSeq(v) => Cell::IdSeq(v.get(row)?),
            Column::Float(v) => Cell::Float(*v.get(row)?),
            Column::FloatSeq(v) => Cell::FloatSeq(v.get(row)?),
        })
    }

    /// Gathers rows in `indices` order. Indices must already be in range.
    pub fn gather(&self, indices: &[usize]) -> Column {
        fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        match self {
            Column::Token(v) => Column::Token(pick(v, indices)),
            Column::TokenSeq(v) => Column::TokenSeq(pick(v, indices)),
            Column::Id(v) => Column::Id(pick(v, indices)),
            Column::IdSeq(v) => Column::IdSeq(pick(v, indices)),
            Column::Float(v) => Column::Float(pick(v, indices)),
            Column::FloatSeq(v) => Column::FloatSeq(pick(v, indices)),
        }
    }

    fn extend_from(&mut self, other: &Column) -> Result<()> {
        match (self, other) {
            (Column::Token(a), Column::Token(b)) => a.extend_from_slice(b),
            (Column::TokenSeq(a), Column::TokenSeq(b)) => a.extend_from_slice(b),
            (Column::Id(a), Column::Id(b)) => a.extend_from_slice(b),
            (Column::IdSeq(a), Column::IdSeq(b)) => a.extend_from_slice(b),
            (Column::Float(a), Column::Float(b)) => a.extend_from_slice(b),
            (Column::FloatSeq(a), Column::FloatSeq(b)) => a.extend_from_slice(b),
            _ => return Err(AtomicError::ColumnMismatch),
        }
        Ok(())
    }

    /// Dense per-row keys: ids as-is, raw tokens numbered by first appearance.
    pub fn row_keys(&self) -> Option<Vec<u32>> {
        match self {
            Column::Id(v) => Some(v.clone()),
            Column::Token(v) => {
                let mut seen: HashMap<&str, u32> = HashMap::new();
                Some(
                    v.iter()
                        .map(|t| {
                            let next = seen.len() as u32;
                            *seen.entry(t.as_str()).or_insert(next)
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    fn write_cell(&self, row: usize, out: &mut String) {
        fn join<T: std::fmt::Display>(xs: &[T], out: &mut String) {
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{x}");
            }
        }
        fn float(x: f64, out: &mut String) {
            if !x.is_nan() {
                let _ = write!(out, "{x}");
            }
        }
        match self {
            Column::Token(v) => out.push_str(&v[row]),
            Column::TokenSeq(v) => join(&v[row], out),
            Column::Id(v) => {
                let _ = write!(out, "{}", v[row]);
            }
            Column::IdSeq(v) => join(&v[row], out),
            Column::Float(v) => float(v[row], out),
            Column::FloatSeq(v) => {
                for (k, x) in v[row].iter().enumerate() {
                    if k > 0 {
                        out.push(' ');
                    }
                    float(*x, out);
                }
            }
        }
    }
}

/// Columnar table parsed from one atomic file.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: SourceKind,
    columns: IndexMap<String, Column>,
    row_count: usize,
}

impl Frame {
    /// Builds a frame from equal-length columns.
    pub fn from_columns(kind: SourceKind, columns: IndexMap<String, Column>) -> Result<Self> {
        let row_count = columns.values().next().map_or(0, Column::len);
        if columns.values().any(|c| c.len() != row_count) {
            return Err(AtomicError::ColumnMismatch);
        }
        Ok(Frame {
            kind,
            columns,
            row_count,
        })
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &IndexMap<String, Column> {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn field_types(&self) -> Vec<(String, FieldType)> {
        self.columns
            .iter()
            .map(|(k, c)| (k.clone(), c.field_type()))
            .collect()
    }

    /// Remapped ids of a token field.
    pub fn ids(&self, name: &str) -> Result<&[u32]> {
        match self.columns.get(name) {
            Some(Column::Id(v)) => Ok(v),
            Some(_) => Err(AtomicError::WrongFieldType {
                field: name.to_string(),
                expected: "remapped token",
            }),
            None => Err(AtomicError::MissingField(name.to_string())),
        }
    }

    pub fn floats(&self, name: &str) -> Result<&[f64]> {
        match self.columns.get(name) {
            Some(Column::Float(v)) => Ok(v),
            Some(_) => Err(AtomicError::WrongFieldType {
                field: name.to_string(),
                expected: "float",
            }),
            None => Err(AtomicError::MissingField(name.to_string())),
        }
    }

    /// Dense row keys of a token field, raw or remapped.
    pub fn row_keys(&self, name: &str) -> Result<Vec<u32>> {
        let column = self
            .columns
            .get(name)
            .ok_or_else(|| AtomicError::MissingField(name.to_string()))?;
        column.row_keys().ok_or_else(|| AtomicError::WrongFieldType {
            field: name.to_string(),
            expected: "token",
        })
    }

    /// Subframe of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Frame> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.row_count) {
            return Err(AtomicError::IndexOutOfRange {
                index: bad,
                len: self.row_count,
            });
        }
        Ok(Frame {
            kind: self.kind,
            columns: self
                .columns
                .iter()
                .map(|(k, c)| (k.clone(), c.gather(indices)))
                .collect(),
            row_count: indices.len(),
        })
    }

    /// Replaces id columns by their tokens.
    pub fn detokenize(&self, maps: &IdMaps) -> Frame {
        let columns = self
            .columns
            .iter()
            .map(|(name, col)| {
                let map = maps.get(map_key(name));
                let col = match (col, map) {
                    (Column::Id(v), Some(m)) => {
                        Column::Token(v.iter().map(|&i| m.token(i).to_string()).collect())
                    }
                    (Column::IdSeq(v), Some(m)) => Column::TokenSeq(
                        v.iter()
                            .map(|s| s.iter().map(|&i| m.token(i).to_string()).collect())
                            .collect(),
                    ),
                    (other, _) => other.clone(),
                };
                (name.clone(), col)
            })
            .collect();
        Frame {
            kind: self.kind,
            columns,
            row_count: self.row_count,
        }
    }

    /// Serializes to atomic-file text, newline-terminated.
    pub fn to_atomic_string(&self) -> String {
        let mut out = String::new();
        for (k, (name, col)) in self.columns.iter().enumerate() {
            if k > 0 {
                out.push('\t');
            }
            let _ = write!(out, "{}:{}", name, col.field_type().tag());
        }
        out.push('\n');
        for row in 0..self.row_count {
            for (k, col) in self.columns.values().enumerate() {
                if k > 0 {
                    out.push('\t');
                }
                col.write_cell(row, &mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_atomic_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_atomic_string()).map_err(|source| AtomicError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn parse_header(line: &str) -> Result<Vec<(String, FieldType)>> {
    if line.is_empty() {
        return Err(AtomicError::MalformedHeader("empty header line".into()));
    }
    let mut fields: Vec<(String, FieldType)> = Vec::new();
    for entry in line.split('\t') {
        let (name, tag) = entry
            .rsplit_once(':')
            .ok_or_else(|| AtomicError::MalformedHeader(format!("`{entry}` is not name:type")))?;
        let ty = FieldType::from_tag(tag)
            .ok_or_else(|| AtomicError::MalformedHeader(format!("unknown type tag `{tag}`")))?;
        if name.is_empty() {
            return Err(AtomicError::MalformedHeader("empty field name".into()));
        }
        if fields.iter().any(|(n, _)| n == name) {
            return Err(AtomicError::MalformedHeader(format!(
                "duplicate field `{name}`"
            )));
        }
        fields.push((name.to_string(), ty));
    }
    Ok(fields)
}

fn parse_float(cell: &str, line: usize, field: &str) -> Result<f64> {
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse().map_err(|_| AtomicError::NumericParseError {
        line,
        field: field.to_string(),
        value: cell.to_string(),
    })
}

fn split_seq(cell: &str) -> impl Iterator<Item = &str> {
    // An empty cell is an empty sequence, not a sequence of one empty element.
    cell.split(' ').filter(move |_| !cell.is_empty())
}

/// Parses atomic-file text. Line numbers in errors are 1-based.
pub fn parse_atomic_str(text: &str, kind: SourceKind) -> Result<Frame> {
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("");
    let fields = parse_header(header)?;
    if kind == SourceKind::Link {
        let names: Vec<_> = fields.iter().map(|(n, t)| format!("{n}:{}", t.tag())).collect();
        let ok = fields.len() == 2
            && fields
                .iter()
                .all(|(n, t)| (n == "item_id" || n == "entity_id") && *t == FieldType::Token)
            && fields[0].0 != fields[1].0;
        if !ok {
            return Err(AtomicError::LinkSchemaMismatch(names.join(", ")));
        }
    }
    let mut columns: Vec<Column> = fields.iter().map(|(_, t)| Column::empty(*t)).collect();
    let body: Vec<&str> = lines.collect();
    // A trailing newline terminates the last row; it does not open a new one.
    let body = match body.split_last() {
        Some((&"", rest)) => rest,
        _ => &body[..],
    };
    for (offset, line) in body.iter().enumerate() {
        let line_no = offset + 2;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != fields.len() {
            return Err(AtomicError::RowArityMismatch {
                line: line_no,
                expected: fields.len(),
                found: cells.len(),
            });
        }
        for ((col, cell), (name, _)) in columns.iter_mut().zip(&cells).zip(&fields) {
            match col {
                Column::Token(v) => v.push(cell.to_string()),
                Column::TokenSeq(v) => v.push(split_seq(cell).map(str::to_string).collect()),
                Column::Float(v) => v.push(parse_float(cell, line_no, name)?),
                Column::FloatSeq(v) => v.push(
                    split_seq(cell)
                        .map(|c| parse_float(c, line_no, name))
                        .collect::<Result<_>>()?,
                ),
                Column::Id(_) | Column::IdSeq(_) => unreachable!("parser never builds id columns"),
            }
        }
    }
    Ok(Frame {
        kind,
        row_count: body.len(),
        columns: fields.into_iter().map(|(n, _)| n).zip(columns).collect(),
    })
}

/// Parses one atomic file; the suffix selects the source kind.
pub fn parse_atomic_file(path: &Path) -> Result<Frame> {
    let kind = SourceKind::from_path(path)?;
    let text = fs::read_to_string(path).map_err(|source| AtomicError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_atomic_str(&text, kind)
}

/// Bijection between raw tokens and contiguous ids, id 0 being the pad.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Default for IdMap {
    fn default() -> Self {
        let mut token_to_id = HashMap::new();
        token_to_id.insert(PAD_TOKEN.to_string(), PAD_ID);
        IdMap {
            token_to_id,
            id_to_token: vec![PAD_TOKEN.to_string()],
        }
    }
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id of `token`, assigning the next free id on first sight.
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.to_string(), id);
        self.id_to_token.push(token.to_string());
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    /// Number of ids including the pad.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() == 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Id maps shared across the files of one dataset, keyed by field namespace.
pub type IdMaps = HashMap<String, IdMap>;

/// Namespace a token field is remapped in. Knowledge-graph heads and tails
/// share the entity space of `.link` files.
pub fn map_key(field: &str) -> &str {
    match field {
        "head_id" | "tail_id" => "entity_id",
        other => other,
    }
}

/// Replaces token columns by ids, extending `maps` with unseen tokens in
/// first-seen order.
pub fn remap_tokens(frame: Frame, maps: &mut IdMaps) -> Frame {
    let Frame {
        kind,
        columns,
        row_count,
    } = frame;
    let columns = columns
        .into_iter()
        .map(|(name, col)| {
            let col = match col {
                Column::Token(v) => {
                    let map = maps.entry(map_key(&name).to_string()).or_default();
                    Column::Id(v.iter().map(|t| map.intern(t)).collect())
                }
                Column::TokenSeq(v) => {
                    let map = maps.entry(map_key(&name).to_string()).or_default();
                    Column::IdSeq(
                        v.iter()
                            .map(|s| s.iter().map(|t| map.intern(t)).collect())
                            .collect(),
                    )
                }
                other => other,
            };
            (name, col)
        })
        .collect();
    Frame {
        kind,
        columns,
        row_count,
    }
}

/// Indexed batch of rows flowing between loader, model and evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    columns: IndexMap<String, Column>,
    length: usize,
}

impl Interaction {
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    pub fn columns(&self) -> &IndexMap<String, Column> {
        &self.columns
    }

    pub fn ids(&self, name: &str) -> Option<&[u32]> {
        match self.columns.get(name) {
            Some(Column::Id(v)) => Some(v),
            _ => None,
        }
    }

    pub fn cell(&self, row: usize, field: &str) -> Option<Cell<'_>> {
        self.columns.get(field)?.cell(row)
    }

    /// Attaches an extra column, such as sampled negatives.
    pub fn with_column(mut self, name: &str, column: Column) -> Result<Self> {
        if column.len() != self.length {
            return Err(AtomicError::ColumnMismatch);
        }
        self.columns.insert(name.to_string(), column);
        Ok(self)
    }

    /// Concatenates batches that share one column set.
    pub fn concat(parts: &[Interaction]) -> Result<Interaction> {
        let Some(first) = parts.first() else {
            return Ok(Interaction {
                columns: IndexMap::new(),
                length: 0,
            });
        };
        let mut out = first.clone();
        for part in &parts[1..] {
            if part.columns.len() != out.columns.len()
                || part.columns.keys().any(|k| !out.columns.contains_key(k))
            {
                return Err(AtomicError::ColumnMismatch);
            }
            for (name, col) in out.columns.iter_mut() {
                col.extend_from(&part.columns[name])?;
            }
            out.length += part.length;
        }
        Ok(out)
    }
}

/// Gathers `indices` (repeats allowed) into an [`Interaction`].
pub fn to_interaction(frame: &Frame, indices: &[usize]) -> Result<Interaction> {
    let sub = frame.select_rows(indices)?;
    Ok(Interaction {
        length: sub.row_count,
        columns: sub.columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "user_id:token\titem_id:token\ttimestamp:float\nu1\ti1\t3\nu2\ti1\t1.5\n";

    #[test]
    fn parses_header_and_rows() {
        let f = parse_atomic_str(SAMPLE, SourceKind::Inter).unwrap();
        assert_eq!(f.row_count(), 2);
        assert_eq!(f.columns().len(), 3);
        assert_eq!(f.floats("timestamp").unwrap(), &[3.0, 1.5]);
    }

    #[test]
    fn header_only_is_empty_frame() {
        let f = parse_atomic_str("user_id:token\titem_id:token\n", SourceKind::Inter).unwrap();
        assert_eq!(f.row_count(), 0);
        let f = parse_atomic_str("user_id:token", SourceKind::Inter).unwrap();
        assert_eq!(f.row_count(), 0);
    }

    #[test]
    fn seq_cells_split_on_space() {
        let f = parse_atomic_str("item_seq:token_seq\n1 5 9\n\n", SourceKind::Inter).unwrap();
        assert_eq!(f.row_count(), 2);
        match f.column("item_seq").unwrap() {
            Column::TokenSeq(v) => {
                assert_eq!(v[0], vec!["1", "5", "9"]);
                assert!(v[1].is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        for bad in ["a:token\ta:float", "a:int", "a", "", ":token"] {
            assert!(
                matches!(
                    parse_atomic_str(bad, SourceKind::Item),
                    Err(AtomicError::MalformedHeader(_))
                ),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn arity_error_reports_line() {
        let err = parse_atomic_str("a:token\tb:token\nx\ty\nz\n", SourceKind::Item).unwrap_err();
        assert!(matches!(
            err,
            AtomicError::RowArityMismatch {
                line: 3,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn numeric_errors_and_missing_floats() {
        let err = parse_atomic_str("x:float\n1.0\nabc\n", SourceKind::Item).unwrap_err();
        assert!(matches!(err, AtomicError::NumericParseError { line: 3, .. }));
        let f = parse_atomic_str("x:float\n\n2\n", SourceKind::Item).unwrap();
        let xs = f.floats("x").unwrap();
        assert!(xs[0].is_nan());
        assert_eq!(xs[1], 2.0);
    }

    #[test]
    fn link_schema_is_checked() {
        assert!(parse_atomic_str("item_id:token\tentity_id:token\n", SourceKind::Link).is_ok());
        assert!(matches!(
            parse_atomic_str("item_id:token\tent:token\n", SourceKind::Link),
            Err(AtomicError::LinkSchemaMismatch(_))
        ));
    }

    #[test]
    fn suffix_selects_kind() {
        assert_eq!(
            SourceKind::from_path(Path::new("ml.inter")).unwrap(),
            SourceKind::Inter
        );
        assert_eq!(
            SourceKind::from_path(Path::new("a/b/ml.kg")).unwrap(),
            SourceKind::Kg
        );
        assert!(SourceKind::from_path(Path::new("ml.csv")).is_err());
    }

    #[test]
    fn remap_first_seen_order() {
        let f = parse_atomic_str("item_id:token\na\nb\na\n", SourceKind::Inter).unwrap();
        let mut maps = IdMaps::new();
        let f = remap_tokens(f, &mut maps);
        assert_eq!(f.ids("item_id").unwrap(), &[1, 2, 1]);
        assert_eq!(maps["item_id"].token(0), PAD_TOKEN);

        let g = parse_atomic_str("item_id:token\nb\n", SourceKind::Item).unwrap();
        let g = remap_tokens(g, &mut maps);
        assert_eq!(g.ids("item_id").unwrap(), &[2]);
    }

    #[test]
    fn kg_heads_and_tails_share_entity_space() {
        let mut maps = IdMaps::new();
        let link = parse_atomic_str("item_id:token\tentity_id:token\ni1\te7\n", SourceKind::Link)
            .unwrap();
        remap_tokens(link, &mut maps);
        let kg = parse_atomic_str(
            "head_id:token\trelation_id:token\ttail_id:token\ne9\tr\te7\n",
            SourceKind::Kg,
        )
        .unwrap();
        let kg = remap_tokens(kg, &mut maps);
        assert_eq!(kg.ids("tail_id").unwrap(), &[1]);
        assert_eq!(kg.ids("head_id").unwrap(), &[2]);
    }

    #[test]
    fn interaction_gather_and_concat() {
        let f = parse_atomic_str(SAMPLE, SourceKind::Inter).unwrap();
        let empty = to_interaction(&f, &[]).unwrap();
        assert_eq!(empty.len(), 0);
        let dup = to_interaction(&f, &[0, 0]).unwrap();
        assert_eq!(dup.cell(0, "user_id"), dup.cell(1, "user_id"));
        assert_eq!(dup.cell(1, "timestamp"), Some(Cell::Float(3.0)));
        assert!(matches!(
            to_interaction(&f, &[2]),
            Err(AtomicError::IndexOutOfRange { index: 2, len: 2 })
        ));
        let both = Interaction::concat(&[dup.clone(), to_interaction(&f, &[1]).unwrap()]).unwrap();
        assert_eq!(both.len(), 3);
        assert_eq!(both.cell(2, "user_id"), Some(Cell::Token("u2")));

        let other = parse_atomic_str("x:float\n1\n", SourceKind::Item).unwrap();
        let other = to_interaction(&other, &[0]).unwrap();
        assert!(Interaction::concat(&[dup, other]).is_err());
    }

    #[test]
    fn detokenize_restores_tokens() {
        let raw = parse_atomic_str(SAMPLE, SourceKind::Inter).unwrap();
        let mut maps = IdMaps::new();
        let ids = remap_tokens(raw.clone(), &mut maps);
        assert_eq!(ids.detokenize(&maps), raw);
    }
}
