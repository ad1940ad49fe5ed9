//! Tabular data: CSV loading, preprocessing, discretization, and replicas.
//!
//! The pipeline is `load_csv -> preprocess -> discretize -> make_replicas`.
//! Loading keeps every record and marks missing cells; preprocessing drops
//! incomplete records and optionally merges class labels; discretization
//! turns continuous attributes into a small number of ordered levels by
//! maximizing information gain; replica cutting produces seeded, stratified
//! train/test splits that downstream experiments can reproduce exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cell contents that mark a missing value, unless overridden in [`CsvSchema`].
pub const DEFAULT_MISSING_TOKENS: &[&str] = &["?", ""];

const DATASET_FORMAT: &str = "diagpol-dataset";
const REPLICA_FORMAT: &str = "diagpol-replicas";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("data row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("class column {0:?} not found in header")]
    UnknownClassColumn(String),
    #[error("column {0:?} appears more than once in the header")]
    DuplicateColumn(String),
    #[error("dataset has no records")]
    Empty,
    #[error("preprocessing removed every record")]
    AllRecordsRemoved,
    #[error("{0} distinct class label(s) after preprocessing; at least 2 are required")]
    TooFewClasses(usize),
    #[error("data row {row} still contains a missing value; preprocess the data first")]
    MissingValue { row: usize },
    #[error("discretization needs at least 2 levels, got {0}")]
    BadLevels(usize),
    #[error("train fraction must be a ratio strictly between 0 and 1, got {0}")]
    BadTrainFraction(String),
    #[error("class {0:?} has {1} example(s); replicas need at least 2 per class")]
    TooFewClassExamples(String, usize),
    #[error("replica count must be at least 1")]
    NoReplicas,
    #[error("not a {expected} file (found format {found:?})")]
    WrongFormat { expected: &'static str, found: String },
    #[error("unsupported {format} file version {found} (this build reads version {supported})")]
    UnsupportedVersion {
        format: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("invalid file: {0}")]
    BadFile(String),
}

/// How to interpret a CSV file: which column carries the class label and
/// which cell contents count as missing.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub class_column: String,
    pub missing_tokens: Vec<String>,
}

impl CsvSchema {
    pub fn new(class_column: impl Into<String>) -> Self {
        CsvSchema {
            class_column: class_column.into(),
            missing_tokens: DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_missing_tokens(mut self, tokens: Vec<String>) -> Self {
        self.missing_tokens = tokens;
        self
    }

    fn is_missing(&self, cell: &str) -> bool {
        self.missing_tokens.iter().any(|t| t == cell)
    }
}

/// One loaded record; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub values: Vec<Option<String>>,
    pub class: Option<String>,
}

impl RawRecord {
    pub fn has_missing(&self) -> bool {
        self.class.is_none() || self.values.iter().any(|v| v.is_none())
    }
}

/// Loaded but not yet cleaned data: attribute names plus raw records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub attributes: Vec<String>,
    pub records: Vec<RawRecord>,
}

/// Reads a headered CSV file. Every non-class column becomes an attribute,
/// in header order; cells matching a missing token are kept as missing.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<RawDataset, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_csv_reader(file, schema)
}

/// Same as [`load_csv`] but over any reader, which keeps tests file-free.
pub fn load_csv_reader<R: io::Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<RawDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.is_empty() {
        return Err(DatasetError::Empty);
    }
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(DatasetError::DuplicateColumn(h.clone()));
        }
    }
    let class_pos = headers
        .iter()
        .position(|h| *h == schema.class_column)
        .ok_or_else(|| DatasetError::UnknownClassColumn(schema.class_column.clone()))?;

    let attributes: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != class_pos)
        .map(|(_, h)| h.clone())
        .collect();

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != headers.len() {
            return Err(DatasetError::MalformedRow {
                row: i + 1,
                expected: headers.len(),
                found: row.len(),
            });
        }
        let mut values = Vec::with_capacity(attributes.len());
        let mut class = None;
        for (j, cell) in row.iter().enumerate() {
            let parsed = if schema.is_missing(cell) {
                None
            } else {
                Some(cell.to_string())
            };
            if j == class_pos {
                class = parsed;
            } else {
                values.push(parsed);
            }
        }
        records.push(RawRecord { values, class });
    }
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(RawDataset {
        attributes: attributes.clone(),
        records,
    })
}

/// Drops every record with a missing value (class included) and relabels
/// classes through `class_merge`; labels absent from the map pass through.
pub fn preprocess(
    raw: &RawDataset,
    class_merge: &BTreeMap<String, String>,
) -> Result<RawDataset, DatasetError> {
    let mut records = Vec::new();
    for rec in &raw.records {
        if rec.has_missing() {
            continue;
        }
        let class = rec.class.as_ref().expect("checked non-missing");
        let merged = class_merge.get(class).unwrap_or(class).clone();
        records.push(RawRecord {
            values: rec.values.clone(),
            class: Some(merged),
        });
    }
    if records.is_empty() {
        return Err(DatasetError::AllRecordsRemoved);
    }
    let mut classes: Vec<&str> = Vec::new();
    for rec in &records {
        let c = rec.class.as_deref().expect("complete");
        if !classes.contains(&c) {
            classes.push(c);
        }
    }
    if classes.len() < 2 {
        return Err(DatasetError::TooFewClasses(classes.len()));
    }
    Ok(RawDataset {
        attributes: raw.attributes.clone(),
        records,
    })
}

/// Whether an attribute column is categorical or was discretized from
/// numeric values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Discrete,
    Continuous,
}

/// Per-attribute metadata: the ordered value labels and, for discretized
/// attributes, the thresholds that separate them (`values.len()` is always
/// `thresholds.len() + 1` for those).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMeta {
    pub name: String,
    pub kind: AttributeKind,
    pub values: Vec<String>,
    pub thresholds: Vec<f64>,
}

impl AttributeMeta {
    pub fn arity(&self) -> usize {
        self.values.len()
    }
}

/// One complete example: a value index per attribute plus a class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub values: Vec<u16>,
    pub class: u16,
}

/// Cleaned, fully discrete data ready for learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub attributes: Vec<AttributeMeta>,
    pub classes: Vec<String>,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_examples(&self) -> usize {
        self.examples.len()
    }

    pub fn arity(&self, attribute: usize) -> usize {
        self.attributes[attribute].arity()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Number of examples per class, in class order.
    pub fn class_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.classes.len()];
        for ex in &self.examples {
            counts[ex.class as usize] += 1;
        }
        counts
    }

    /// Every example index, the identity "split".
    pub fn all_indices(&self) -> Vec<u32> {
        (0..self.examples.len() as u32).collect()
    }
}

/// Turns raw records into a [`Dataset`]. Attributes whose values all parse
/// as numbers are treated as continuous and cut into at most `levels`
/// ordered bins; the thresholds are chosen from midpoints between
/// consecutive distinct sorted values by exhaustively maximizing
/// information gain about the class (ties prefer the lexicographically
/// smallest threshold vector). Other attributes pass through with their
/// values enumerated in first-occurrence order. Classes are enumerated in
/// first-occurrence order as well.
///
/// Discretization sees the full dataset, so thresholds are shared across
/// any later train/test split; splits made from the result inherit that.
pub fn discretize(raw: &RawDataset, levels: usize) -> Result<Dataset, DatasetError> {
    if levels < 2 {
        return Err(DatasetError::BadLevels(levels));
    }
    if raw.records.is_empty() {
        return Err(DatasetError::Empty);
    }
    for (i, rec) in raw.records.iter().enumerate() {
        if rec.has_missing() {
            return Err(DatasetError::MissingValue { row: i + 1 });
        }
    }

    let mut classes: Vec<String> = Vec::new();
    let mut class_of = Vec::with_capacity(raw.records.len());
    for rec in &raw.records {
        let label = rec.class.as_ref().expect("complete");
        let idx = match classes.iter().position(|c| c == label) {
            Some(i) => i,
            None => {
                classes.push(label.clone());
                classes.len() - 1
            }
        };
        class_of.push(idx as u16);
    }
    if classes.len() < 2 {
        return Err(DatasetError::TooFewClasses(classes.len()));
    }

    let n_attrs = raw.attributes.len();
    let mut attributes = Vec::with_capacity(n_attrs);
    let mut columns: Vec<Vec<u16>> = Vec::with_capacity(n_attrs);

    for a in 0..n_attrs {
        let cells: Vec<&str> = raw
            .records
            .iter()
            .map(|r| r.values[a].as_deref().expect("complete"))
            .collect();
        let numeric: Option<Vec<f64>> = cells
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        match numeric {
            Some(nums) => {
                let thresholds = choose_thresholds(&nums, &class_of, classes.len(), levels);
                let values = bin_labels(&nums, &thresholds);
                let column = nums
                    .iter()
                    .map(|&x| thresholds.partition_point(|&t| t < x) as u16)
                    .collect();
                attributes.push(AttributeMeta {
                    name: raw.attributes[a].clone(),
                    kind: AttributeKind::Continuous,
                    values,
                    thresholds,
                });
                columns.push(column);
            }
            None => {
                let mut values: Vec<String> = Vec::new();
                let mut column = Vec::with_capacity(cells.len());
                for cell in &cells {
                    let idx = match values.iter().position(|v| v == cell) {
                        Some(i) => i,
                        None => {
                            values.push(cell.to_string());
                            values.len() - 1
                        }
                    };
                    column.push(idx as u16);
                }
                attributes.push(AttributeMeta {
                    name: raw.attributes[a].clone(),
                    kind: AttributeKind::Discrete,
                    values,
                    thresholds: Vec::new(),
                });
                columns.push(column);
            }
        }
    }

    let examples = (0..raw.records.len())
        .map(|i| Example {
            values: columns.iter().map(|col| col[i]).collect(),
            class: class_of[i],
        })
        .collect();

    Ok(Dataset {
        attributes,
        classes,
        examples,
    })
}

/// Picks up to `levels - 1` thresholds for one numeric column by exhaustive
/// search over midpoints between consecutive distinct sorted values. With
/// `d` distinct values and `d <= levels` every midpoint is used, giving one
/// bin per distinct value; a constant column gets no thresholds at all.
fn choose_thresholds(values: &[f64], class_of: &[u16], n_classes: usize, levels: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    distinct.dedup();
    let d = distinct.len();
    if d <= 1 {
        return Vec::new();
    }

    let midpoints: Vec<f64> = (0..d - 1)
        .map(|i| (distinct[i] + distinct[i + 1]) / 2.0)
        .collect();
    if d <= levels {
        return midpoints;
    }

    // Class counts per distinct value, then prefix sums so any bin's counts
    // come from two lookups.
    let mut per_value = vec![vec![0u32; n_classes]; d];
    for (x, &y) in values.iter().zip(class_of) {
        let vi = distinct.partition_point(|&u| u < *x);
        per_value[vi][y as usize] += 1;
    }
    let mut prefix = vec![vec![0u32; n_classes]; d + 1];
    for i in 0..d {
        for k in 0..n_classes {
            prefix[i + 1][k] = prefix[i][k] + per_value[i][k];
        }
    }
    let total = values.len() as f64;
    let parent_entropy = entropy_of(&prefix[d]);

    let n_cuts = levels - 1;
    let mut best_gain = f64::NEG_INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut cuts: Vec<usize> = (0..n_cuts).collect();
    loop {
        // Cut at index c separates distinct values [..=c] from [c+1..].
        let mut child_term = 0.0;
        let mut lo = 0usize;
        for b in 0..=n_cuts {
            let hi = if b == n_cuts { d } else { cuts[b] + 1 };
            let counts: Vec<u32> = (0..n_classes).map(|k| prefix[hi][k] - prefix[lo][k]).collect();
            let n_bin: u32 = counts.iter().sum();
            if n_bin > 0 {
                child_term += f64::from(n_bin) / total * entropy_of(&counts);
            }
            lo = hi;
        }
        let gain = parent_entropy - child_term;
        if gain > best_gain {
            best_gain = gain;
            best = cuts.clone();
        }
        // Advance to the next cut combination in lexicographic order, so the
        // first combination reaching the best gain has the smallest
        // thresholds.
        let mut i = n_cuts;
        loop {
            if i == 0 {
                return best.iter().map(|&c| midpoints[c]).collect();
            }
            i -= 1;
            if cuts[i] < d - 1 - (n_cuts - i) {
                cuts[i] += 1;
                for j in i + 1..n_cuts {
                    cuts[j] = cuts[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn bin_labels(values: &[f64], thresholds: &[f64]) -> Vec<String> {
    if thresholds.is_empty() {
        // Constant column: one bin, labeled by the sole observed value.
        let v = values.first().copied().unwrap_or(0.0);
        return vec![format!("{v}")];
    }
    let mut labels = Vec::with_capacity(thresholds.len() + 1);
    labels.push(format!("<={}", thresholds[0]));
    for w in thresholds.windows(2) {
        labels.push(format!("({},{}]", w[0], w[1]));
    }
    labels.push(format!(">{}", thresholds[thresholds.len() - 1]));
    labels
}

/// Shannon entropy of a count vector, in bits. Zero counts contribute zero.
fn entropy_of(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = f64::from(total);
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = f64::from(c) / total;
            h -= p * p.log2();
        }
    }
    h
}

/// A train fraction kept as an exact integer ratio so that split sizes come
/// out of integer floor arithmetic instead of float rounding: two thirds of
/// 768 examples is exactly 512.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainFrac {
    num: u32,
    den: u32,
}

impl TrainFrac {
    /// Two thirds, the usual experiment split.
    pub const TWO_THIRDS: TrainFrac = TrainFrac { num: 2, den: 3 };
    /// One half, used by early-stopping validation splits.
    pub const HALF: TrainFrac = TrainFrac { num: 1, den: 2 };

    pub fn new(num: u32, den: u32) -> Result<Self, DatasetError> {
        if num == 0 || den == 0 || num >= den {
            return Err(DatasetError::BadTrainFraction(format!("{num}/{den}")));
        }
        Ok(TrainFrac { num, den })
    }

    pub fn value(&self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// `floor(self * n)` exactly.
    fn floor_of(&self, n: usize) -> usize {
        (self.num as u64 * n as u64 / self.den as u64) as usize
    }

    /// Remainder of `self * n` as an integer numerator over `den`.
    fn rem_of(&self, n: usize) -> u64 {
        self.num as u64 * n as u64 % self.den as u64
    }
}

impl fmt::Display for TrainFrac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for TrainFrac {
    type Err = DatasetError;

    /// Accepts `"2/3"` or a decimal like `"0.75"` (read as 75/100).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::BadTrainFraction(s.to_string());
        if let Some((a, b)) = s.split_once('/') {
            let num: u32 = a.trim().parse().map_err(|_| bad())?;
            let den: u32 = b.trim().parse().map_err(|_| bad())?;
            return TrainFrac::new(num, den);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if !int.is_empty() && int != "0" {
                return Err(bad());
            }
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let num: u32 = frac.parse().map_err(|_| bad())?;
            let den = 10u32.pow(frac.len() as u32);
            return TrainFrac::new(num, den);
        }
        Err(bad())
    }
}

/// One train/test split, with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replica {
    pub id: u32,
    pub seed: u64,
    pub train_idx: Vec<u32>,
    pub test_idx: Vec<u32>,
}

/// Cuts `n` independent stratified train/test splits. Each replica gets its
/// own seed drawn from a master stream seeded with `seed`, so the whole set
/// is reproducible from one number and any single replica is reproducible
/// from its own.
pub fn make_replicas(
    data: &Dataset,
    n: usize,
    train_frac: TrainFrac,
    seed: u64,
) -> Result<Vec<Replica>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::NoReplicas);
    }
    let counts = data.class_counts();
    for (k, &c) in counts.iter().enumerate() {
        if c < 2 {
            return Err(DatasetError::TooFewClassExamples(
                data.classes[k].clone(),
                c as usize,
            ));
        }
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let pool = data.all_indices();
    let mut replicas = Vec::with_capacity(n);
    for id in 0..n {
        let replica_seed: u64 = master.gen();
        let mut rng = ChaCha8Rng::seed_from_u64(replica_seed);
        let (train_idx, test_idx) = stratified_split(data, &pool, train_frac, &mut rng);
        replicas.push(Replica {
            id: id as u32,
            seed: replica_seed,
            train_idx,
            test_idx,
        });
    }
    Ok(replicas)
}

/// Splits `pool` into train and test, stratified by class: within each class
/// the pool is shuffled and the first `floor(train_frac * count)` examples go
/// to train; leftover train slots (from the exact total `floor(train_frac *
/// pool size)`) go to the classes with the largest fractional parts, lowest
/// class index first on ties. Classes are processed in ascending index order
/// so RNG consumption is reproducible. Both halves come back sorted.
pub fn stratified_split(
    data: &Dataset,
    pool: &[u32],
    train_frac: TrainFrac,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, Vec<u32>) {
    let n_classes = data.n_classes();
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); n_classes];
    for &i in pool {
        by_class[data.examples[i as usize].class as usize].push(i);
    }

    let total_train = train_frac.floor_of(pool.len());
    let mut take: Vec<usize> = by_class.iter().map(|g| train_frac.floor_of(g.len())).collect();
    let assigned: usize = take.iter().sum();
    let mut leftover = total_train - assigned;
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(train_frac.rem_of(by_class[k].len())), k));
    for &k in &order {
        if leftover == 0 {
            break;
        }
        if train_frac.rem_of(by_class[k].len()) > 0 {
            take[k] += 1;
            leftover -= 1;
        }
    }
    debug_assert_eq!(leftover, 0, "leftover train slots must fit fractional classes");

    let mut train = Vec::with_capacity(total_train);
    let mut test = Vec::with_capacity(pool.len() - total_train);
    for (k, group) in by_class.iter_mut().enumerate() {
        group.shuffle(rng);
        train.extend_from_slice(&group[..take[k]]);
        test.extend_from_slice(&group[take[k]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    dataset: Dataset,
}

/// Writes a dataset as versioned JSON.
pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let file = DatasetFile {
        format: DATASET_FORMAT.to_string(),
        version: FILE_VERSION,
        dataset: data.clone(),
    };
    let text = serde_json::to_string_pretty(&file).expect("dataset serializes");
    fs::write(path.as_ref(), text).map_err(|source| DatasetError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Reads a dataset written by [`save_dataset`], refusing other formats and
/// newer versions by name.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|source| DatasetError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let file: DatasetFile =
        serde_json::from_str(&text).map_err(|e| DatasetError::BadFile(e.to_string()))?;
    check_header(DATASET_FORMAT, &file.format, file.version)?;
    Ok(file.dataset)
}

#[derive(Serialize, Deserialize)]
struct ReplicaFile {
    format: String,
    version: u32,
    master_seed: u64,
    train_frac: TrainFrac,
    replicas: Vec<Replica>,
}

/// Writes a replica set plus the master seed and fraction that produced it.
pub fn save_replicas(
    replicas: &[Replica],
    master_seed: u64,
    train_frac: TrainFrac,
    path: impl AsRef<Path>,
) -> Result<(), DatasetError> {
    let file = ReplicaFile {
        format: REPLICA_FORMAT.to_string(),
        version: FILE_VERSION,
        master_seed,
        train_frac,
        replicas: replicas.to_vec(),
    };
    let text = serde_json::to_string_pretty(&file).expect("replicas serialize");
    fs::write(path.as_ref(), text).map_err(|source| DatasetError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Reads a replica manifest written by [`save_replicas`].
pub fn load_replicas(path: impl AsRef<Path>) -> Result<Vec<Replica>, DatasetError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|source| DatasetError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let file: ReplicaFile =
        serde_json::from_str(&text).map_err(|e| DatasetError::BadFile(e.to_string()))?;
    check_header(REPLICA_FORMAT, &file.format, file.version)?;
    Ok(file.replicas)
}

fn check_header(expected: &'static str, found: &str, version: u32) -> Result<(), DatasetError> {
    if found != expected {
        return Err(DatasetError::WrongFormat {
            expected,
            found: found.to_string(),
        });
    }
    if version != FILE_VERSION {
        return Err(DatasetError::UnsupportedVersion {
            format: expected,
            found: version,
            supported: FILE_VERSION,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> CsvSchema {
        CsvSchema::new("class")
    }

    /// A numeric CSV shaped like the liver-disorders file: 345 rows, five
    /// measurement columns and a class column.
    fn bupa_like_csv() -> String {
        let mut out = String::from("mcv,alkphos,sgpt,sgot,gammagt,class\n");
        let mut x = 7u64;
        for i in 0..345 {
            let mut next = || {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 33) % 97
            };
            let cls = if i % 3 == 0 { 1 } else { 2 };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                next(),
                next(),
                next(),
                next(),
                next(),
                cls
            ));
        }
        out
    }

    #[test]
    fn loads_bupa_shaped_file() {
        let raw = load_csv_reader(bupa_like_csv().as_bytes(), &schema()).unwrap();
        assert_eq!(raw.records.len(), 345);
        assert_eq!(raw.attributes.len(), 5);
        assert_eq!(raw.attributes[0], "mcv");
    }

    #[test]
    fn missing_markers_are_preserved() {
        let csv = "a,b,class\n1,?,x\n,2,y\n3,4,x\n";
        let raw = load_csv_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(raw.records[0].values[1], None);
        assert_eq!(raw.records[1].values[0], None);
        assert_eq!(raw.records[2].values, vec![Some("3".into()), Some("4".into())]);
        assert!(raw.records[0].has_missing());
        assert!(!raw.records[2].has_missing());
    }

    #[test]
    fn malformed_row_reports_its_number() {
        let csv = "a,b,c,d,e,class\n1,2,3,4,5,x\n1,2,3,4\n";
        let err = load_csv_reader(csv.as_bytes(), &schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "message should name the row: {msg}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(load_csv_reader("".as_bytes(), &schema()).is_err());
        assert!(load_csv_reader("a,b,class\n".as_bytes(), &schema()).is_err());
    }

    #[test]
    fn unknown_class_column_is_an_error() {
        let err = load_csv_reader("a,b\n1,2\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownClassColumn(_)));
    }

    #[test]
    fn preprocess_drops_exactly_the_incomplete_records() {
        let csv = "a,b,class\n1,?,x\n5,2,y\n?,4,x\n3,3,x\n6,1,\n";
        let raw = load_csv_reader(csv.as_bytes(), &schema()).unwrap();
        let clean = preprocess(&raw, &BTreeMap::new()).unwrap();
        assert_eq!(clean.records.len(), 2);
        assert!(clean.records.iter().all(|r| !r.has_missing()));
    }

    #[test]
    fn identity_merge_keeps_labels() {
        let csv = "a,class\n1,x\n2,y\n";
        let raw = load_csv_reader(csv.as_bytes(), &schema()).unwrap();
        let clean = preprocess(&raw, &BTreeMap::new()).unwrap();
        let labels: Vec<_> = clean.records.iter().map(|r| r.class.clone().unwrap()).collect();
        assert_eq!(labels, vec!["x", "y"]);
    }

    #[test]
    fn merge_collapsing_to_one_class_is_an_error() {
        let csv = "a,class\n1,x\n2,y\n";
        let raw = load_csv_reader(csv.as_bytes(), &schema()).unwrap();
        let mut merge = BTreeMap::new();
        merge.insert("x".to_string(), "z".to_string());
        merge.insert("y".to_string(), "z".to_string());
        let err = preprocess(&raw, &merge).unwrap_err();
        assert!(matches!(err, DatasetError::TooFewClasses(1)));
    }

    #[test]
    fn merge_relabels_and_keeps_the_rest() {
        let csv = "a,class\n1,x\n2,y\n3,z\n";
        let raw = load_csv_reader(csv.as_bytes(), &schema()).unwrap();
        let mut merge = BTreeMap::new();
        merge.insert("y".to_string(), "x".to_string());
        let clean = preprocess(&raw, &merge).unwrap();
        let labels: Vec<_> = clean.records.iter().map(|r| r.class.clone().unwrap()).collect();
        assert_eq!(labels, vec!["x", "x", "z"]);
    }

    fn raw_from_columns(cols: &[(&str, &[&str])], classes: &[&str]) -> RawDataset {
        let n = classes.len();
        RawDataset {
            attributes: cols.iter().map(|(name, _)| name.to_string()).collect(),
            records: (0..n)
                .map(|i| RawRecord {
                    values: cols.iter().map(|(_, col)| Some(col[i].to_string())).collect(),
                    class: Some(classes[i].to_string()),
                })
                .collect(),
        }
    }

    #[test]
    fn three_level_split_separating_classes_perfectly() {
        // Values 1..=6, one example each; class is "sick" iff value >= 4. A
        // threshold in (3, 4) separates perfectly, the second cut adds
        // nothing, and the tie breaks toward the smallest threshold vector.
        let raw = raw_from_columns(
            &[("v", &["1", "2", "3", "4", "5", "6"])],
            &["h", "h", "h", "s", "s", "s"],
        );
        let data = discretize(&raw, 3).unwrap();
        assert_eq!(data.attributes[0].thresholds, vec![1.5, 3.5]);
        assert_eq!(
            data.attributes[0].values,
            vec!["<=1.5", "(1.5,3.5]", ">3.5"]
        );
        let vals: Vec<u16> = data.examples.iter().map(|e| e.values[0]).collect();
        assert_eq!(vals, vec![0, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn discrete_attribute_passes_through_unchanged() {
        let raw = raw_from_columns(&[("color", &["red", "blue", "red"])], &["x", "y", "x"]);
        let data = discretize(&raw, 3).unwrap();
        assert_eq!(data.attributes[0].kind, AttributeKind::Discrete);
        assert_eq!(data.attributes[0].values, vec!["red", "blue"]);
        assert!(data.attributes[0].thresholds.is_empty());
    }

    #[test]
    fn constant_numeric_attribute_becomes_single_valued() {
        let raw = raw_from_columns(&[("v", &["42", "42", "42"])], &["x", "y", "x"]);
        let data = discretize(&raw, 3).unwrap();
        assert_eq!(data.attributes[0].values.len(), 1);
        assert!(data.attributes[0].thresholds.is_empty());
    }

    #[test]
    fn fewer_distinct_values_than_levels_gives_one_bin_each() {
        let raw = raw_from_columns(&[("v", &["0", "1", "0", "1"])], &["x", "y", "x", "y"]);
        let data = discretize(&raw, 3).unwrap();
        assert_eq!(data.attributes[0].thresholds, vec![0.5]);
        assert_eq!(data.attributes[0].values.len(), 2);
    }

    #[test]
    fn value_count_is_threshold_count_plus_one() {
        let raw = raw_from_columns(
            &[("v", &["1", "3", "9", "27", "81", "243", "729"])],
            &["a", "b", "a", "b", "a", "b", "a"],
        );
        let data = discretize(&raw, 3).unwrap();
        let meta = &data.attributes[0];
        assert_eq!(meta.values.len(), meta.thresholds.len() + 1);
        assert_eq!(meta.values.len(), 3);
    }

    #[test]
    fn boundary_value_falls_in_the_left_bin() {
        let raw = raw_from_columns(
            &[("v", &["1", "2", "3", "4"])],
            &["a", "a", "b", "b"],
        );
        let data = discretize(&raw, 2).unwrap();
        assert_eq!(data.attributes[0].thresholds, vec![2.5]);
        let vals: Vec<u16> = data.examples.iter().map(|e| e.values[0]).collect();
        assert_eq!(vals, vec![0, 0, 1, 1]);
    }

    /// Test-side information gain computed directly from value/class pairs,
    /// for checking the threshold search against brute force.
    fn gain_of(values: &[f64], classes: &[u16], n_classes: usize, cuts: &[f64]) -> f64 {
        let mut bins: Vec<Vec<u32>> = vec![vec![0; n_classes]; cuts.len() + 1];
        let mut parent = vec![0u32; n_classes];
        for (&x, &y) in values.iter().zip(classes) {
            let b = cuts.iter().filter(|&&t| t < x).count();
            bins[b][y as usize] += 1;
            parent[y as usize] += 1;
        }
        let total = values.len() as f64;
        let mut child = 0.0;
        for counts in &bins {
            let n: u32 = counts.iter().sum();
            if n > 0 {
                child += f64::from(n) / total * entropy_of(counts);
            }
        }
        entropy_of(&parent) - child
    }

    proptest! {
        /// With at most 12 distinct values, the chosen thresholds reach the
        /// gain of a brute-force scan over every midpoint pair.
        #[test]
        fn chosen_thresholds_are_gain_optimal(
            raw_vals in proptest::collection::vec(0u8..12, 4..40),
            raw_cls in proptest::collection::vec(0u8..2, 40),
        ) {
            let values: Vec<f64> = raw_vals.iter().map(|&v| f64::from(v)).collect();
            let classes: Vec<u16> = raw_vals
                .iter()
                .zip(&raw_cls)
                .map(|(_, &c)| u16::from(c))
                .collect();
            let chosen = choose_thresholds(&values, &classes, 2, 3);
            let chosen_gain = gain_of(&values, &classes, 2, &chosen);

            let mut distinct = values.clone();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            let mids: Vec<f64> = distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
            let mut best = f64::NEG_INFINITY;
            if distinct.len() <= 3 {
                best = gain_of(&values, &classes, 2, &chosen);
            } else {
                for i in 0..mids.len() {
                    for j in i + 1..mids.len() {
                        let g = gain_of(&values, &classes, 2, &[mids[i], mids[j]]);
                        if g > best {
                            best = g;
                        }
                    }
                }
            }
            prop_assert!(chosen_gain >= best - 1e-12,
                "chosen {chosen_gain} vs brute force {best}");
        }
    }

    fn toy_dataset(counts: &[(usize, &str)]) -> Dataset {
        // One dummy binary attribute; classes repeated per the given counts.
        let mut classes = Vec::new();
        let mut examples = Vec::new();
        for &(n, label) in counts {
            let k = classes.len() as u16;
            classes.push(label.to_string());
            for i in 0..n {
                examples.push(Example {
                    values: vec![(i % 2) as u16],
                    class: k,
                });
            }
        }
        Dataset {
            attributes: vec![AttributeMeta {
                name: "a".into(),
                kind: AttributeKind::Discrete,
                values: vec!["0".into(), "1".into()],
                thresholds: Vec::new(),
            }],
            classes,
            examples,
        }
    }

    #[test]
    fn two_thirds_of_ninety_nine_is_stratified_exactly() {
        let data = toy_dataset(&[(66, "sick"), (33, "healthy")]);
        let replicas = make_replicas(&data, 1, TrainFrac::TWO_THIRDS, 7).unwrap();
        let train = &replicas[0].train_idx;
        assert_eq!(train.len(), 66);
        let sick = train
            .iter()
            .filter(|&&i| data.examples[i as usize].class == 0)
            .count();
        assert_eq!(sick, 44);
        assert_eq!(train.len() - sick, 22);
    }

    #[test]
    fn two_thirds_of_pima_sized_data_is_512() {
        let data = toy_dataset(&[(500, "neg"), (268, "pos")]);
        let replicas = make_replicas(&data, 20, TrainFrac::TWO_THIRDS, 11).unwrap();
        assert_eq!(replicas.len(), 20);
        for r in &replicas {
            assert_eq!(r.train_idx.len(), 512, "replica {}", r.id);
            assert_eq!(r.test_idx.len(), 256);
        }
    }

    #[test]
    fn replicas_are_deterministic_and_distinct() {
        let data = toy_dataset(&[(30, "a"), (20, "b")]);
        let r1 = make_replicas(&data, 5, TrainFrac::TWO_THIRDS, 42).unwrap();
        let r2 = make_replicas(&data, 5, TrainFrac::TWO_THIRDS, 42).unwrap();
        assert_eq!(r1, r2);
        assert_ne!(r1[0].train_idx, r1[1].train_idx);
    }

    #[test]
    fn train_and_test_partition_the_pool() {
        let data = toy_dataset(&[(17, "a"), (23, "b")]);
        let replicas = make_replicas(&data, 3, TrainFrac::TWO_THIRDS, 5).unwrap();
        for r in &replicas {
            let mut all: Vec<u32> = r.train_idx.iter().chain(&r.test_idx).copied().collect();
            all.sort_unstable();
            assert_eq!(all, data.all_indices());
        }
    }

    #[test]
    fn replica_needs_two_examples_per_class() {
        let data = toy_dataset(&[(5, "a"), (1, "b")]);
        let err = make_replicas(&data, 1, TrainFrac::TWO_THIRDS, 0).unwrap_err();
        assert!(matches!(err, DatasetError::TooFewClassExamples(_, 1)));
    }

    proptest! {
        /// Per-class train fractions stay within 1/count of the target.
        #[test]
        fn stratification_error_is_bounded(
            na in 2usize..40,
            nb in 2usize..40,
            seed in 0u64..1000,
        ) {
            let data = toy_dataset(&[(na, "a"), (nb, "b")]);
            let replicas = make_replicas(&data, 1, TrainFrac::TWO_THIRDS, seed).unwrap();
            let train = &replicas[0].train_idx;
            for (k, &count) in data.class_counts().iter().enumerate() {
                let got = train
                    .iter()
                    .filter(|&&i| data.examples[i as usize].class as usize == k)
                    .count() as f64;
                let frac = got / f64::from(count);
                let target = TrainFrac::TWO_THIRDS.value();
                prop_assert!((frac - target).abs() <= 1.0 / f64::from(count) + 1e-12);
            }
        }
    }

    #[test]
    fn train_frac_parses_ratios_and_decimals() {
        assert_eq!("2/3".parse::<TrainFrac>().unwrap(), TrainFrac::TWO_THIRDS);
        assert_eq!("0.5".parse::<TrainFrac>().unwrap(), TrainFrac::new(5, 10).unwrap());
        assert!("3/2".parse::<TrainFrac>().is_err());
        assert!("1".parse::<TrainFrac>().is_err());
        assert!("0".parse::<TrainFrac>().is_err());
    }

    #[test]
    fn dataset_file_round_trips() {
        let data = toy_dataset(&[(4, "a"), (3, "b")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        save_dataset(&data, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn future_file_version_is_rejected_by_name() {
        let data = toy_dataset(&[(2, "a"), (2, "b")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        save_dataset(&data, &path).unwrap();
        let bumped = fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 9");
        fs::write(&path, bumped).unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains('9'), "{err}");
    }

    #[test]
    fn replica_file_round_trips() {
        let data = toy_dataset(&[(6, "a"), (6, "b")]);
        let replicas = make_replicas(&data, 4, TrainFrac::TWO_THIRDS, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        save_replicas(&replicas, 99, TrainFrac::TWO_THIRDS, &path).unwrap();
        assert_eq!(load_replicas(&path).unwrap(), replicas);
    }
}
