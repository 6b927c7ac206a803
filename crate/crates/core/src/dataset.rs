//! Feature schema, labeled datasets, delimited-text ingestion, max-min
//! normalization and per-group sampling.
//!
//! Cells are stored as [`Value`]s. Symbolic and ordinal cells hold an index
//! into the feature's category list; continuous cells hold a real. Any cell
//! may be [`Value::Missing`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Column names that the cluster-feature block emits. User schemas may not
/// use them.
pub const RESERVED_PREFIXES: [&str; 3] = ["_Z", "_B", "_P"];

pub const DEFAULT_MISSING: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Symbolic,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    /// Symbolic: known categories (declared or discovered while loading).
    /// Ordinal: the ordered category list, rank = position.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
        }
    }

    pub fn symbolic<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Symbolic,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn ordinal<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Ordinal,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    /// Number of ordered categories (`t`) for ordinals, category count for
    /// symbolics, 0 for continuous features.
    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, token: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == token)
            .map(|i| i as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
    pub missing: String,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        Self::with_missing(features, DEFAULT_MISSING)
    }

    pub fn with_missing(features: Vec<Feature>, missing: impl Into<String>) -> Result<Self> {
        let schema = FeatureSchema {
            features,
            missing: missing.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(Error::Schema("feature names must be non-empty".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate feature name {:?}",
                    f.name
                )));
            }
            let mut cats = BTreeSet::new();
            if !f.categories.iter().all(|c| cats.insert(c.as_str())) {
                return Err(Error::Schema(format!(
                    "feature {:?} repeats a category",
                    f.name
                )));
            }
            match f.kind {
                FeatureKind::Ordinal if f.categories.len() < 2 => {
                    return Err(Error::Schema(format!(
                        "ordinal feature {:?} needs at least 2 categories",
                        f.name
                    )));
                }
                FeatureKind::Continuous if !f.categories.is_empty() => {
                    return Err(Error::Schema(format!(
                        "continuous feature {:?} cannot list categories",
                        f.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Rejects names that collide with the cluster-feature columns.
    pub fn check_reserved(&self) -> Result<()> {
        for f in &self.features {
            if RESERVED_PREFIXES.iter().any(|p| f.name.starts_with(p)) {
                return Err(Error::Schema(format!(
                    "feature name {:?} uses a reserved prefix (_Z, _B, _P)",
                    f.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Short digest over feature names, kinds and ordinal orderings.
    /// Symbolic category lists are excluded because they grow while loading.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(f.name.as_bytes());
            h.update([0u8]);
            h.update(format!("{:?}", f.kind).as_bytes());
            if f.kind == FeatureKind::Ordinal {
                for c in &f.categories {
                    h.update([1u8]);
                    h.update(c.as_bytes());
                }
            }
            h.update([2u8]);
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Cat(u32),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    /// Numeric view: the real for continuous cells, the rank for ordinal
    /// cells.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Num(v) => Some(v),
            Value::Cat(c) => Some(c as f64),
            Value::Missing => None,
        }
    }

    pub fn as_cat(&self) -> Option<u32> {
        match *self {
            Value::Cat(c) => Some(c),
            _ => None,
        }
    }
}

/// Per-instance group tags (e.g. attack types) kept beside the class label.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTags {
    pub names: Vec<String>,
    pub tags: Vec<u32>,
}

impl GroupTags {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let names: Vec<String> = tokens
            .iter()
            .map(|t| t.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, u32> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect();
        let tags = tokens.iter().map(|t| index[t.as_ref()]).collect();
        GroupTags { names, tags }
    }

    pub fn name_of(&self, i: usize) -> &str {
        &self.names[self.tags[i] as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<Value>>,
    pub labels: Vec<u32>,
    pub classes: Vec<String>,
    pub groups: Option<GroupTags>,
}

impl Dataset {
    /// Builds a dataset from string labels; the class set is the sorted set
    /// of distinct labels.
    pub fn new<S: AsRef<str>>(
        schema: FeatureSchema,
        rows: Vec<Vec<Value>>,
        labels: &[S],
    ) -> Result<Self> {
        let classes: Vec<String> = labels
            .iter()
            .map(|l| l.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, u32> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u32))
            .collect();
        let labels = labels.iter().map(|l| index[l.as_ref()]).collect();
        Self::from_parts(schema, rows, labels, classes)
    }

    /// Builds a dataset from label indices into an explicit class list.
    pub fn from_parts(
        schema: FeatureSchema,
        rows: Vec<Vec<Value>>,
        labels: Vec<u32>,
        classes: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        let d = Dataset {
            schema,
            rows,
            labels,
            classes,
            groups: None,
        };
        d.check_rows()?;
        Ok(d)
    }

    pub fn with_groups(mut self, groups: GroupTags) -> Result<Self> {
        if groups.tags.len() != self.rows.len() {
            return Err(Error::LengthMismatch {
                left: groups.tags.len(),
                right: self.rows.len(),
            });
        }
        self.groups = Some(groups);
        Ok(self)
    }

    fn check_rows(&self) -> Result<()> {
        let m = self.schema.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::RowArity {
                    row: i + 1,
                    expected: m,
                    found: row.len(),
                });
            }
            for (v, f) in row.iter().zip(&self.schema.features) {
                let ok = match (v, f.kind) {
                    (Value::Missing, _) => true,
                    (Value::Num(x), FeatureKind::Continuous) => x.is_finite(),
                    (Value::Cat(c), FeatureKind::Symbolic | FeatureKind::Ordinal) => {
                        (*c as usize) < f.categories.len()
                    }
                    _ => false,
                };
                if !ok {
                    return Err(Error::BadCell {
                        row: i + 1,
                        message: format!("value {v:?} does not conform to feature {:?}", f.name),
                    });
                }
            }
        }
        if let Some(&l) = self
            .labels
            .iter()
            .find(|&&l| l as usize >= self.classes.len())
        {
            return Err(Error::invalid(format!(
                "label index {l} outside the class list"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_name(&self, label: u32) -> &str {
        &self.classes[label as usize]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Stratification key: group tags when present, class labels otherwise.
    pub fn strata(&self) -> Vec<u32> {
        match &self.groups {
            Some(g) => g.tags.clone(),
            None => self.labels.clone(),
        }
    }

    /// Rows at `indices`, in that order. Keeps the parent's class list and
    /// group names so label indices stay comparable.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
            groups: self.groups.as_ref().map(|g| GroupTags {
                names: g.names.clone(),
                tags: indices.iter().map(|&i| g.tags[i]).collect(),
            }),
        }
    }

    pub fn column(&self, q: usize) -> Vec<Value> {
        self.rows.iter().map(|r| r[q]).collect()
    }
}

// ---------------------------------------------------------------------------
// Schema files and delimited text ingestion

/// A schema file: features, label column, optional group column and an
/// optional raw-label to class mapping.
///
/// When `label_map` is present and `group_column` is not, the raw label
/// becomes the group tag (e.g. attack type) and the mapped value the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub label_column: String,
    #[serde(default)]
    pub group_column: Option<String>,
    #[serde(default = "default_missing")]
    pub missing: String,
    pub features: Vec<Feature>,
    #[serde(default)]
    pub label_map: Option<BTreeMap<String, String>>,
}

fn default_missing() -> String {
    DEFAULT_MISSING.to_string()
}

impl SchemaFile {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let schema = file.schema()?;
        schema.check_reserved()?;
        if file.label_column.is_empty() {
            return Err(Error::Schema("label_column must be non-empty".into()));
        }
        if schema.index_of(&file.label_column).is_some() {
            return Err(Error::Schema(format!(
                "label column {:?} is also listed as a feature",
                file.label_column
            )));
        }
        Ok(file)
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::with_missing(self.features.clone(), self.missing.clone())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            group_column: self.group_column.clone(),
            label_map: self.label_map.clone(),
            ..LoadOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub group_column: Option<String>,
    pub label_map: Option<BTreeMap<String, String>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            group_column: None,
            label_map: None,
        }
    }
}

/// Loads a labeled dataset with comma delimiter and no label mapping.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    label_column: &str,
) -> Result<Dataset> {
    load_dataset_with(path, schema, label_column, &LoadOptions::default())
}

fn open_reader(path: &Path, delimiter: u8) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

struct CellParser<'a> {
    schema: &'a mut FeatureSchema,
    /// Unseen symbolic tokens extend the category list when true and read as
    /// missing when false.
    discover: bool,
    lookup: Vec<HashMap<String, u32>>,
}

impl<'a> CellParser<'a> {
    fn new(schema: &'a mut FeatureSchema, discover: bool) -> Self {
        let lookup = schema
            .features
            .iter()
            .map(|f| {
                f.categories
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.clone(), i as u32))
                    .collect()
            })
            .collect();
        CellParser {
            schema,
            discover,
            lookup,
        }
    }

    fn parse(&mut self, q: usize, token: &str, row: usize) -> Result<Value> {
        if token == self.schema.missing {
            return Ok(Value::Missing);
        }
        let feature = &mut self.schema.features[q];
        match feature.kind {
            FeatureKind::Continuous => Ok(match token.parse::<f64>() {
                Ok(v) if v.is_finite() => Value::Num(v),
                _ => Value::Missing,
            }),
            FeatureKind::Symbolic => {
                if let Some(&c) = self.lookup[q].get(token) {
                    Ok(Value::Cat(c))
                } else if self.discover {
                    let c = feature.categories.len() as u32;
                    feature.categories.push(token.to_string());
                    self.lookup[q].insert(token.to_string(), c);
                    Ok(Value::Cat(c))
                } else {
                    Ok(Value::Missing)
                }
            }
            FeatureKind::Ordinal => match self.lookup[q].get(token) {
                Some(&c) => Ok(Value::Cat(c)),
                None => Err(Error::BadCell {
                    row,
                    message: format!(
                        "{token:?} is not a category of ordinal feature {:?}",
                        feature.name
                    ),
                }),
            },
        }
    }
}

/// Loads a labeled dataset. The returned dataset carries a copy of `schema`
/// whose symbolic category lists are extended with every token seen.
pub fn load_dataset_with(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    label_column: &str,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let path = path.as_ref();
    schema.validate()?;
    let mut rdr = open_reader(path, opts.delimiter)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let position = |name: &str| header.iter().position(|h| h == name);
    let mut expected: BTreeSet<&str> = schema.names().collect();
    expected.insert(label_column);
    if let Some(g) = &opts.group_column {
        expected.insert(g.as_str());
    }
    let present: BTreeSet<&str> = header.iter().map(String::as_str).collect();
    if present.len() != header.len() {
        return Err(Error::Header("header repeats a column name".into()));
    }
    if present != expected {
        let missing: Vec<_> = expected.difference(&present).collect();
        let extra: Vec<_> = present.difference(&expected).collect();
        return Err(Error::Header(format!(
            "missing columns {missing:?}, unexpected columns {extra:?}"
        )));
    }
    let feature_cols: Vec<usize> = schema.names().map(|n| position(n).unwrap()).collect();
    let label_col = position(label_column).unwrap();
    let group_col = opts.group_column.as_deref().map(|g| position(g).unwrap());

    let mut schema = schema.clone();
    let mut parser = CellParser::new(&mut schema, true);
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut group_tokens = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        if record.len() != header.len() {
            return Err(Error::RowArity {
                row: row_no,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for (q, &col) in feature_cols.iter().enumerate() {
            row.push(parser.parse(q, &record[col], row_no)?);
        }
        rows.push(row);
        raw_labels.push(record[label_col].to_string());
        if let Some(g) = group_col {
            group_tokens.push(record[g].to_string());
        }
    }

    let labels = match &opts.label_map {
        Some(map) => {
            let mut mapped = Vec::with_capacity(raw_labels.len());
            for (i, raw) in raw_labels.iter().enumerate() {
                match map.get(raw) {
                    Some(c) => mapped.push(c.clone()),
                    None => {
                        return Err(Error::BadCell {
                            row: i + 1,
                            message: format!("label {raw:?} has no entry in label_map"),
                        })
                    }
                }
            }
            if group_col.is_none() {
                group_tokens = raw_labels;
            }
            mapped
        }
        None => raw_labels,
    };

    let mut d = Dataset::new(schema, rows, &labels)?;
    if group_col.is_some() || opts.label_map.is_some() {
        d = d.with_groups(GroupTags::from_tokens(&group_tokens))?;
    }
    Ok(d)
}

/// Reads feature rows only, against a frozen schema. Columns not in the
/// schema are ignored; unseen symbolic tokens read as missing.
pub fn load_instances(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    delimiter: u8,
) -> Result<Vec<Vec<Value>>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path, delimiter)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut cols = Vec::with_capacity(schema.len());
    let mut absent = Vec::new();
    for name in schema.names() {
        match header.iter().position(|h| h == name) {
            Some(c) => cols.push(c),
            None => absent.push(name.to_string()),
        }
    }
    if !absent.is_empty() {
        return Err(Error::Header(format!("missing columns {absent:?}")));
    }
    let mut schema = schema.clone();
    let mut parser = CellParser::new(&mut schema, false);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::RowArity {
                row: i + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        let row = cols
            .iter()
            .enumerate()
            .map(|(q, &c)| parser.parse(q, &record[c], i + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads one named column as raw strings (labels, group tags).
pub fn load_column(path: impl AsRef<Path>, column: &str, delimiter: u8) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path, delimiter)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Header(format!("missing column {column:?}")))?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = record.get(col).ok_or(Error::RowArity {
            row: i + 1,
            expected: col + 1,
            found: record.len(),
        })?;
        out.push(cell.to_string());
    }
    Ok(out)
}

/// Writes a dataset back as delimited text. Group tags, when present, are
/// written in `group_column`.
pub fn write_dataset(
    path: impl AsRef<Path>,
    d: &Dataset,
    label_column: &str,
    group_column: Option<&str>,
    delimiter: u8,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(file);
    let mut header: Vec<&str> = d.schema.names().collect();
    header.push(label_column);
    let groups = group_column.zip(d.groups.as_ref());
    if let Some((g, _)) = groups {
        header.push(g);
    }
    w.write_record(&header)?;
    for (i, row) in d.rows.iter().enumerate() {
        let mut rec: Vec<String> = row
            .iter()
            .zip(&d.schema.features)
            .map(|(v, f)| format_value(v, f, &d.schema.missing))
            .collect();
        rec.push(d.class_name(d.labels[i]).to_string());
        if let Some((_, t)) = groups {
            rec.push(t.name_of(i).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn format_value(v: &Value, f: &Feature, missing: &str) -> String {
    match *v {
        Value::Num(x) => x.to_string(),
        Value::Cat(c) => f.categories[c as usize].clone(),
        Value::Missing => missing.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Normalization

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRange {
    pub feature: usize,
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Observed (min, max) of every continuous feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub ranges: Vec<NormRange>,
}

impl NormalizationParams {
    /// Maps continuous cells into [0, 1]. Out-of-range values clamp; a
    /// zero-width range maps everything to 0.
    pub fn normalize_row(&self, row: &[Value]) -> Vec<Value> {
        let mut out = row.to_vec();
        for r in &self.ranges {
            if let Value::Num(v) = out[r.feature] {
                out[r.feature] = Value::Num(scale(v, r.min, r.max));
            }
        }
        out
    }

    fn check(&self, schema: &FeatureSchema) -> Result<()> {
        let continuous: Vec<usize> = schema
            .features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FeatureKind::Continuous)
            .map(|(i, _)| i)
            .collect();
        let covered: Vec<usize> = self.ranges.iter().map(|r| r.feature).collect();
        let names_match = self.ranges.iter().all(|r| {
            schema
                .features
                .get(r.feature)
                .is_some_and(|f| f.name == r.name)
        });
        if continuous != covered || !names_match {
            return Err(Error::SchemaMismatch {
                expected: format!(
                    "{:?}",
                    self.ranges.iter().map(|r| &r.name).collect::<Vec<_>>()
                ),
                found: format!(
                    "{:?}",
                    continuous
                        .iter()
                        .map(|&i| &schema.features[i].name)
                        .collect::<Vec<_>>()
                ),
            });
        }
        Ok(())
    }
}

fn scale(v: f64, min: f64, max: f64) -> f64 {
    let width = max - min;
    if width <= 0.0 {
        0.0
    } else {
        ((v - min) / width).clamp(0.0, 1.0)
    }
}

pub fn fit_normalization(d: &Dataset) -> Result<NormalizationParams> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ranges = d
        .schema
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind == FeatureKind::Continuous)
        .map(|(q, f)| {
            let (min, max) = d
                .rows
                .iter()
                .filter_map(|r| match r[q] {
                    Value::Num(v) => Some(v),
                    _ => None,
                })
                .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                    None => Some((v, v)),
                    Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
                })
                .unwrap_or((0.0, 0.0));
            NormRange {
                feature: q,
                name: f.name.clone(),
                min,
                max,
            }
        })
        .collect();
    Ok(NormalizationParams { ranges })
}

pub fn apply_normalization(d: &Dataset, p: &NormalizationParams) -> Result<Dataset> {
    p.check(&d.schema)?;
    let mut out = d.clone();
    for row in &mut out.rows {
        *row = p.normalize_row(row);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sampling

/// Keeps round-half-up(f * n_g) uniformly chosen instances of every group g
/// listed in `fractions`; unlisted groups are kept whole. Output preserves
/// the input order of the retained rows.
pub fn sample_by_group(
    d: &Dataset,
    groups: &GroupTags,
    fractions: &BTreeMap<String, f64>,
    seed: u64,
) -> Result<Dataset> {
    if groups.tags.len() != d.n() {
        return Err(Error::LengthMismatch {
            left: groups.tags.len(),
            right: d.n(),
        });
    }
    let keep = sample_indices(groups, fractions, seed)?;
    let mut out = d.subset(&keep);
    out.groups = Some(GroupTags {
        names: groups.names.clone(),
        tags: keep.iter().map(|&i| groups.tags[i]).collect(),
    });
    Ok(out)
}

/// Row indices retained by [`sample_by_group`], ascending.
pub fn sample_indices(
    groups: &GroupTags,
    fractions: &BTreeMap<String, f64>,
    seed: u64,
) -> Result<Vec<usize>> {
    for (g, &f) in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::invalid(format!(
                "fraction for group {g:?} must lie in (0, 1], got {f}"
            )));
        }
        if !groups.names.contains(g) {
            return Err(Error::invalid(format!(
                "group {g:?} does not occur in the data"
            )));
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups.names.len()];
    for (i, &t) in groups.tags.iter().enumerate() {
        members[t as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(groups.tags.len());
    for (name, idx) in groups.names.iter().zip(&members) {
        let f = fractions.get(name).copied().unwrap_or(1.0);
        if f >= 1.0 {
            keep.extend_from_slice(idx);
            continue;
        }
        let count = ((f * idx.len() as f64) + 0.5).floor() as usize;
        let count = count.min(idx.len());
        keep.extend(idx.choose_multiple(&mut rng, count).copied());
    }
    keep.sort_unstable();
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn two_continuous() -> FeatureSchema {
        FeatureSchema::new(vec![Feature::continuous("a"), Feature::continuous("b")]).unwrap()
    }

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn num_dataset(col: &[Option<f64>]) -> Dataset {
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let rows = col
            .iter()
            .map(|v| vec![v.map_or(Value::Missing, Value::Num)])
            .collect();
        let labels = vec!["a"; col.len()];
        Dataset::new(schema, rows, &labels).unwrap()
    }

    #[test]
    fn loads_small_file() {
        let f = write_tmp("a,b,class\n1,2,x\n3,4,y\n5,?,x\n7,oops,y\n");
        let d = load_dataset(f.path(), &two_continuous(), "class").unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(d.m(), 2);
        assert_eq!(d.classes, vec!["x", "y"]);
        assert!(d.rows[2][1].is_missing());
        assert!(d.rows[3][1].is_missing());
    }

    #[test]
    fn header_without_label_is_rejected() {
        let f = write_tmp("a,b\n1,2\n");
        let err = load_dataset(f.path(), &two_continuous(), "class").unwrap_err();
        assert!(matches!(err, Error::Header(_)), "{err}");
    }

    #[test]
    fn arity_error_names_the_row() {
        let f = write_tmp("a,b,class\n1,2,x\n1,2\n");
        match load_dataset(f.path(), &two_continuous(), "class").unwrap_err() {
            Error::RowArity { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_dataset("/nonexistent/data.csv", &two_continuous(), "class").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn symbolic_categories_are_discovered_in_order() {
        let schema =
            FeatureSchema::new(vec![Feature::symbolic("proto", Vec::<String>::new())]).unwrap();
        let f = write_tmp("proto,class\ntcp,a\nudp,b\ntcp,a\n");
        let d = load_dataset(f.path(), &schema, "class").unwrap();
        assert_eq!(d.schema.features[0].categories, vec!["tcp", "udp"]);
        assert_eq!(d.rows[2][0], Value::Cat(0));

        // frozen schema maps unseen tokens to missing
        let g = write_tmp("proto\nicmp\nudp\n");
        let rows = load_instances(g.path(), &d.schema, b',').unwrap();
        assert_eq!(rows, vec![vec![Value::Missing], vec![Value::Cat(1)]]);
    }

    #[test]
    fn label_map_moves_raw_label_into_groups() {
        let file = SchemaFile::parse(
            r#"
            label_column = "label"
            [[features]]
            name = "x"
            kind = "continuous"
            [label_map]
            "neptune." = "DoS"
            "smurf." = "DoS"
            "normal." = "Normal"
            "#,
        )
        .unwrap();
        let f = write_tmp("x,label\n1,neptune.\n2,normal.\n3,smurf.\n");
        let d = load_dataset_with(
            f.path(),
            &file.schema().unwrap(),
            "label",
            &file.load_options(),
        )
        .unwrap();
        assert_eq!(d.classes, vec!["DoS", "Normal"]);
        let g = d.groups.unwrap();
        assert_eq!(g.names, vec!["neptune.", "normal.", "smurf."]);
        assert_eq!(g.tags, vec![0, 1, 2]);
    }

    #[test]
    fn schema_rejects_bad_definitions() {
        assert!(FeatureSchema::new(vec![Feature::continuous("")]).is_err());
        assert!(
            FeatureSchema::new(vec![Feature::continuous("a"), Feature::continuous("a")]).is_err()
        );
        assert!(FeatureSchema::new(vec![Feature::ordinal("o", ["lo"])]).is_err());
        assert!(FeatureSchema::new(vec![Feature::ordinal("o", ["lo", "lo"])]).is_err());
        let reserved = FeatureSchema::new(vec![Feature::continuous("_B")]).unwrap();
        assert!(reserved.check_reserved().is_err());
    }

    #[test]
    fn normalization_min_max() {
        let p = fit_normalization(&num_dataset(&[Some(2.0), Some(8.0), Some(5.0)])).unwrap();
        assert_eq!((p.ranges[0].min, p.ranges[0].max), (2.0, 8.0));
        assert_eq!(p.normalize_row(&[Value::Num(8.0)]), vec![Value::Num(1.0)]);
        assert_eq!(p.normalize_row(&[Value::Num(5.0)]), vec![Value::Num(0.5)]);
        // clamped outside the training range
        assert_eq!(p.normalize_row(&[Value::Num(11.0)]), vec![Value::Num(1.0)]);
        assert_eq!(p.normalize_row(&[Value::Num(-1.0)]), vec![Value::Num(0.0)]);
        assert_eq!(p.normalize_row(&[Value::Missing]), vec![Value::Missing]);
    }

    #[test]
    fn normalization_degenerate_and_missing() {
        let p = fit_normalization(&num_dataset(&[Some(3.0); 3])).unwrap();
        assert_eq!((p.ranges[0].min, p.ranges[0].max), (3.0, 3.0));
        assert_eq!(p.normalize_row(&[Value::Num(3.0)]), vec![Value::Num(0.0)]);

        let p = fit_normalization(&num_dataset(&[Some(1.0), None, Some(4.0)])).unwrap();
        assert_eq!((p.ranges[0].min, p.ranges[0].max), (1.0, 4.0));

        let p = fit_normalization(&num_dataset(&[None, None])).unwrap();
        assert_eq!((p.ranges[0].min, p.ranges[0].max), (0.0, 0.0));
    }

    #[test]
    fn apply_normalization_rejects_other_schema() {
        let p = fit_normalization(&num_dataset(&[Some(1.0)])).unwrap();
        let schema = FeatureSchema::new(vec![Feature::continuous("y")]).unwrap();
        let other = Dataset::new(schema, vec![vec![Value::Num(1.0)]], &["a"]).unwrap();
        assert!(apply_normalization(&other, &p).is_err());
    }

    fn grouped(sizes: &[(&str, usize)]) -> Dataset {
        let mut tokens = Vec::new();
        let mut rows = Vec::new();
        for (g, n) in sizes {
            for i in 0..*n {
                tokens.push(g.to_string());
                rows.push(vec![Value::Num(i as f64)]);
            }
        }
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let labels = tokens.clone();
        Dataset::new(schema, rows, &labels)
            .unwrap()
            .with_groups(GroupTags::from_tokens(&tokens))
            .unwrap()
    }

    #[test]
    fn sampling_counts_and_reproducibility() {
        let d = grouped(&[("big", 200), ("small", 100)]);
        let g = d.groups.clone().unwrap();
        let fr = BTreeMap::from([("big".to_string(), 0.05)]);
        let a = sample_by_group(&d, &g, &fr, 7).unwrap();
        let b = sample_by_group(&d, &g, &fr, 7).unwrap();
        assert_eq!(a, b);
        let counts = a
            .groups
            .as_ref()
            .unwrap()
            .tags
            .iter()
            .fold([0, 0], |mut c, &t| {
                c[t as usize] += 1;
                c
            });
        assert_eq!(counts, [10, 100]);
    }

    #[test]
    fn sampling_rounds_half_up() {
        let d = grouped(&[("g", 30)]);
        let g = d.groups.clone().unwrap();
        // 0.05 * 30 = 1.5 -> 2
        let fr = BTreeMap::from([("g".to_string(), 0.05)]);
        assert_eq!(sample_by_group(&d, &g, &fr, 1).unwrap().n(), 2);
    }

    #[test]
    fn sampling_rejects_bad_fractions() {
        let d = grouped(&[("g", 10)]);
        let g = d.groups.clone().unwrap();
        for f in [0.0, -0.1, 1.5, f64::NAN] {
            let fr = BTreeMap::from([("g".to_string(), f)]);
            assert!(sample_by_group(&d, &g, &fr, 1).is_err());
        }
        let fr = BTreeMap::from([("nope".to_string(), 0.5)]);
        assert!(sample_by_group(&d, &g, &fr, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalized_training_values_in_unit_interval(
            col in proptest::collection::vec(-1e6f64..1e6, 1..40)
        ) {
            let d = num_dataset(&col.iter().map(|&v| Some(v)).collect::<Vec<_>>());
            let p = fit_normalization(&d).unwrap();
            let nd = apply_normalization(&d, &p).unwrap();
            for r in &nd.rows {
                let v = r[0].as_f64().unwrap();
                proptest::prop_assert!((0.0..=1.0).contains(&v));
            }
            // refitting on normalized data is idempotent
            let p2 = fit_normalization(&nd).unwrap();
            let nd2 = apply_normalization(&nd, &p2).unwrap();
            if p.ranges[0].max > p.ranges[0].min {
                for (a, b) in nd.rows.iter().zip(&nd2.rows) {
                    let (a, b) = (a[0].as_f64().unwrap(), b[0].as_f64().unwrap());
                    proptest::prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn sampling_all_ones_is_identity(sizes in proptest::collection::vec(1usize..30, 1..5), seed: u64) {
            let names: Vec<String> = (0..sizes.len()).map(|i| format!("g{i}")).collect();
            let spec: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(sizes.iter().copied()).collect();
            let d = grouped(&spec);
            let g = d.groups.clone().unwrap();
            let fr: BTreeMap<String, f64> = names.iter().map(|n| (n.clone(), 1.0)).collect();
            proptest::prop_assert_eq!(sample_by_group(&d, &g, &fr, seed).unwrap(), d);
        }
    }
}
