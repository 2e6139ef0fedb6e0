//! Datasets, groupings, file formats, synthetic shift generators and splits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense features, class labels and optional latent group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    groups: Option<Vec<usize>>,
    num_groups: usize,
    metadata: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from row-major features. The class count is
    /// `max(label) + 1`.
    pub fn from_flat(features: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::domain("dataset must contain at least one sample"));
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::domain(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
            groups: None,
            num_groups: 0,
            metadata: BTreeMap::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::domain("rows have differing lengths"));
        }
        Self::from_flat(rows.concat(), dim, labels)
    }

    /// Attaches group labels; the group count becomes `max(group) + 1`.
    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.len() {
            return Err(Error::domain(format!(
                "{} group labels for {} samples",
                groups.len(),
                self.len()
            )));
        }
        self.num_groups = groups.iter().max().map_or(0, |m| m + 1);
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn with_num_classes(mut self, k: usize) -> Result<Self> {
        if self.labels.iter().any(|&y| y >= k) || k < 2 {
            return Err(Error::domain(format!("class count {k} does not cover the labels")));
        }
        self.num_classes = k;
        Ok(self)
    }

    pub fn with_num_groups(mut self, s: usize) -> Result<Self> {
        match &self.groups {
            Some(g) if g.iter().all(|&z| z < s) => {
                self.num_groups = s;
                Ok(self)
            }
            _ => Err(Error::domain(format!("group count {s} does not cover the groups"))),
        }
    }

    pub fn with_metadata(mut self, name: &str, values: Vec<String>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::domain(format!("metadata column {name:?} has wrong length")));
        }
        self.metadata.insert(name.to_string(), values);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn metadata(&self, name: &str) -> Option<&[String]> {
        self.metadata.get(name).map(Vec::as_slice)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    pub fn group_counts(&self) -> Option<Vec<usize>> {
        self.groups.as_ref().map(|g| {
            let mut c = vec![0; self.num_groups];
            for &z in g {
                c[z] += 1;
            }
            c
        })
    }

    /// Rows at the given indices, keeping the class and group counts.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            dim: self.dim,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            groups: self.groups.as_ref().map(|g| idx.iter().map(|&i| g[i]).collect()),
            num_groups: self.num_groups,
            metadata: self
                .metadata
                .iter()
                .map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
        }
    }

    /// Pads every row with zeros up to `dim` features.
    pub fn pad_to_dim(&mut self, dim: usize) -> Result<()> {
        if dim < self.dim {
            return Err(Error::config(format!(
                "data has {} features, more than the requested {dim}",
                self.dim
            )));
        }
        if dim == self.dim {
            return Ok(());
        }
        let mut out = Vec::with_capacity(self.len() * dim);
        for i in 0..self.len() {
            out.extend_from_slice(self.row(i));
            out.resize(out.len() + dim - self.dim, 0.0);
        }
        self.features = out;
        self.dim = dim;
        Ok(())
    }

    /// Writes the CSV layout read by [`load`]: feature columns `x0..`, then
    /// `label`, then `group` (if present), then `meta:<name>` columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        if self.groups.is_some() {
            header.push("group".into());
        }
        header.extend(self.metadata.keys().map(|k| format!("meta:{k}")));
        w.write_record(&header).map_err(|e| io(e.into()))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.labels[i].to_string());
            if let Some(g) = &self.groups {
                rec.push(g[i].to_string());
            }
            rec.extend(self.metadata.values().map(|v| v[i].clone()));
            w.write_record(&rec).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Libsvm,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "libsvm" => Ok(Format::Libsvm),
            "csv" => Ok(Format::Csv),
            other => Err(Error::config(format!("unknown data format {other:?}"))),
        }
    }
}

/// Reads a dataset.
///
/// LIBSVM lines are `label idx:val ...` with 1-based sparse indices; the
/// dimension is the largest index seen. CSV files need a header row with a
/// `label` column; an optional `group` column holds latent group labels and
/// `meta:<name>` columns hold metadata usable by [`GroupingSpec::ByColumn`].
/// Every other column is a numeric feature.
///
/// Labels that are all nonnegative integers are used as class indices
/// directly; any other label set is mapped to `0..K` in sorted order (so
/// `-1/+1` becomes `0/1`).
pub fn load(path: &Path, format: Format) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        Format::Libsvm => parse_libsvm(&text, path),
        Format::Csv => parse_csv(&text, path),
    }
}

pub fn parse_libsvm(text: &str, path: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut dim = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let label = toks.next().expect("nonempty line has a token");
        label
            .parse::<f64>()
            .map_err(|_| err(lineno, format!("label {label:?} is not numeric")))?;
        raw_labels.push(label.to_string());
        let mut row = Vec::new();
        for tok in toks {
            if tok.starts_with("qid:") {
                continue;
            }
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err(lineno, "feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric feature value {val:?}")))?;
            dim = dim.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(1, "no samples in file".into()));
    }
    let dim = dim.max(1);
    let mut features = vec![0.0; rows.len() * dim];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * dim + j] = v;
        }
    }
    let labels = map_labels(&raw_labels);
    Dataset::from_flat(features, dim, labels)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(err(1, "missing header row".into()));
    }
    let label_col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| err(1, "no \"label\" column".into()))?;
    let group_col = header.iter().position(|h| h == "group");
    let meta_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("meta:").map(|n| (i, n.to_string())))
        .collect();
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&i| i != label_col && Some(i) != group_col && !meta_cols.iter().any(|(m, _)| *m == i))
        .collect();
    if feature_cols.is_empty() {
        return Err(err(1, "no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut raw_groups = Vec::new();
    let mut meta: Vec<Vec<String>> = vec![Vec::new(); meta_cols.len()];
    for (i, rec) in reader.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| err(lineno, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(err(
                lineno,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        for &c in &feature_cols {
            let v: f64 = rec[c].parse().map_err(|_| {
                err(lineno, format!("non-numeric value {:?} in column {:?}", &rec[c], &header[c]))
            })?;
            features.push(v);
        }
        raw_labels.push(rec[label_col].to_string());
        if let Some(g) = group_col {
            raw_groups.push(rec[g].to_string());
        }
        for (slot, (c, _)) in meta.iter_mut().zip(&meta_cols) {
            slot.push(rec[*c].to_string());
        }
    }
    if raw_labels.is_empty() {
        return Err(err(2, "no samples in file".into()));
    }
    let mut ds = Dataset::from_flat(features, feature_cols.len(), map_labels(&raw_labels))?;
    if group_col.is_some() {
        ds = ds.with_groups(map_groups(&raw_groups))?;
    }
    for (values, (_, name)) in meta.into_iter().zip(meta_cols) {
        ds = ds.with_metadata(&name, values)?;
    }
    Ok(ds)
}

fn map_labels(raw: &[String]) -> Vec<usize> {
    if let Some(direct) = as_indices(raw) {
        return direct;
    }
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    match numeric {
        Some(values) => {
            let mut distinct = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            values
                .iter()
                .map(|v| distinct.partition_point(|d| d < v))
                .collect()
        }
        None => {
            let mut distinct: Vec<&String> = raw.iter().collect();
            distinct.sort();
            distinct.dedup();
            raw.iter()
                .map(|s| distinct.partition_point(|d| *d < s))
                .collect()
        }
    }
}

fn map_groups(raw: &[String]) -> Vec<usize> {
    as_indices(raw).unwrap_or_else(|| first_appearance(raw))
}

fn as_indices(raw: &[String]) -> Option<Vec<usize>> {
    raw.iter().map(|s| s.parse::<usize>().ok()).collect()
}

fn first_appearance(raw: &[String]) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = ids.len();
            *ids.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// How samples are assigned to latent groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupingSpec {
    /// One group per class.
    ByClass,
    /// Distinct values of a metadata column.
    ByColumn(String),
    /// Distinct values of the `subcategory` metadata column.
    BySubcategoryLabels,
    /// One group per sample.
    Singleton,
}

pub const SUBCATEGORY_COLUMN: &str = "subcategory";

impl FromStr for GroupingSpec {
    type Err = Error;

    /// `class`, `singleton`, `subcategory` or `column:<name>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(GroupingSpec::ByClass),
            "singleton" => Ok(GroupingSpec::Singleton),
            "subcategory" => Ok(GroupingSpec::BySubcategoryLabels),
            other => match other.strip_prefix("column:") {
                Some(name) if !name.is_empty() => Ok(GroupingSpec::ByColumn(name.to_string())),
                _ => Err(Error::config(format!("unknown grouping {other:?}"))),
            },
        }
    }
}

impl fmt::Display for GroupingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupingSpec::ByClass => f.write_str("class"),
            GroupingSpec::ByColumn(c) => write!(f, "column:{c}"),
            GroupingSpec::BySubcategoryLabels => f.write_str("subcategory"),
            GroupingSpec::Singleton => f.write_str("singleton"),
        }
    }
}

/// Replaces the group labels according to `spec`. Column values get group ids
/// in order of first appearance.
pub fn apply_grouping(ds: &Dataset, spec: &GroupingSpec) -> Result<Dataset> {
    let groups = match spec {
        GroupingSpec::ByClass => {
            let out = ds.clone().with_groups(ds.labels.clone())?;
            return out.with_num_groups(ds.num_classes);
        }
        GroupingSpec::Singleton => (0..ds.len()).collect(),
        GroupingSpec::ByColumn(name) => {
            let col = ds.metadata(name).ok_or_else(|| {
                Error::config(format!("no metadata column {name:?} to group by"))
            })?;
            first_appearance(col)
        }
        GroupingSpec::BySubcategoryLabels => {
            let col = ds.metadata(SUBCATEGORY_COLUMN).ok_or_else(|| {
                Error::config(format!("no {SUBCATEGORY_COLUMN:?} metadata column"))
            })?;
            first_appearance(col)
        }
    };
    ds.clone().with_groups(groups)
}

/// Collapses a multi-class task into a binary one whose latent groups are the
/// original classes.
///
/// Classes are ranked by descending sample count (ties: smaller class id
/// first); ranks 1, 3, 5, ... become the positive class (label 1) and the
/// rest the negative class (label 0). The original class of each sample is
/// kept as its group and written to the `subcategory` metadata column.
pub fn make_subcategory_task(ds: &Dataset) -> Result<Dataset> {
    let k = ds.num_classes;
    if k < 2 {
        return Err(Error::domain("sub-category task needs at least 2 classes"));
    }
    let counts = ds.class_counts();
    let mut ranked: Vec<usize> = (0..k).collect();
    ranked.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut positive = vec![false; k];
    for (rank0, &c) in ranked.iter().enumerate() {
        positive[c] = rank0 % 2 == 0;
    }
    let labels = ds.labels.iter().map(|&y| usize::from(positive[y])).collect();
    let sub = ds.labels.iter().map(|y| y.to_string()).collect();
    let mut out = Dataset {
        labels,
        num_classes: 2,
        ..ds.clone()
    };
    out.metadata.insert(SUBCATEGORY_COLUMN.to_string(), sub);
    out.with_groups(ds.labels.clone())?.with_num_groups(k)
}

/// One Gaussian class-conditional component of a latent group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub label: usize,
    /// Probability of this component within its group.
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic standard deviation.
    pub std: f64,
}

/// The shared conditional `p(x, y | z)` of one latent group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGenerator {
    pub components: Vec<GaussianComponent>,
}

impl GroupGenerator {
    /// A group that is a single isotropic Gaussian of one class.
    pub fn single(label: usize, mean: Vec<f64>, std: f64) -> Self {
        Self {
            components: vec![GaussianComponent {
                label,
                weight: 1.0,
                mean,
                std,
            }],
        }
    }
}

/// Draws a train and a test set that share every group conditional and
/// differ only in the group priors. Train samples are drawn before test
/// samples from one seeded stream.
pub fn synth_prior_shift(
    seed: u64,
    groups: &[GroupGenerator],
    train_priors: &[f64],
    test_priors: &[f64],
    n_train: usize,
    n_test: usize,
) -> Result<(Dataset, Dataset)> {
    check_priors(train_priors, groups.len())?;
    check_priors(test_priors, groups.len())?;
    let dim = groups
        .first()
        .and_then(|g| g.components.first())
        .map(|c| c.mean.len())
        .ok_or_else(|| Error::domain("at least one group with one component is required"))?;
    let mut num_classes = 2;
    let mut component_pickers = Vec::with_capacity(groups.len());
    for (z, g) in groups.iter().enumerate() {
        for c in &g.components {
            if c.mean.len() != dim {
                return Err(Error::domain(format!("group {z} has a component of the wrong dimension")));
            }
            if !(c.std > 0.0) {
                return Err(Error::domain(format!("group {z} has nonpositive std")));
            }
            num_classes = num_classes.max(c.label + 1);
        }
        let picker = WeightedIndex::new(g.components.iter().map(|c| c.weight))
            .map_err(|e| Error::domain(format!("group {z} component weights: {e}")))?;
        component_pickers.push(picker);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |priors: &[f64], n: usize| -> Result<Dataset> {
        let prior = WeightedIndex::new(priors).map_err(|e| Error::domain(e.to_string()))?;
        let mut features = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let z = prior.sample(&mut rng);
            let c = &groups[z].components[component_pickers[z].sample(&mut rng)];
            for &m in &c.mean {
                features.push(m + c.std * standard.sample(&mut rng));
            }
            labels.push(c.label);
            zs.push(z);
        }
        Dataset::from_flat(features, dim, labels)?
            .with_num_classes(num_classes)?
            .with_groups(zs)?
            .with_num_groups(groups.len())
    };
    let train = draw(train_priors, n_train)?;
    let test = draw(test_priors, n_test)?;
    Ok((train, test))
}

fn check_priors(priors: &[f64], s: usize) -> Result<()> {
    if priors.len() != s {
        return Err(Error::domain(format!("{} priors for {s} groups", priors.len())));
    }
    if priors.iter().any(|&p| !(p >= 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("priors {priors:?} are not a distribution")));
    }
    Ok(())
}

/// Stratum of each sample: its group when present, else its class.
fn strata(ds: &Dataset) -> (Vec<usize>, usize, bool) {
    match ds.groups() {
        Some(g) => (g.to_vec(), ds.num_groups(), true),
        None => (ds.labels().to_vec(), ds.num_classes(), false),
    }
}

fn shuffled_strata(ds: &Dataset, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let (ids, count, _) = strata(ds);
    let mut members = vec![Vec::new(); count];
    for (i, &s) in ids.iter().enumerate() {
        members[s].push(i);
    }
    for m in &mut members {
        m.shuffle(rng);
    }
    members
}

/// Group-stratified k-fold partition. Returns `(train, validation)` index
/// lists, each sorted ascending. Without group labels the classes stratify.
pub fn kfold_split(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > ds.len() {
        return Err(Error::config(format!("{folds} folds for {} samples", ds.len())));
    }
    let (_, _, grouped) = strata(ds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = shuffled_strata(ds, &mut rng);
    if grouped {
        if let Some((s, m)) = members.iter().enumerate().find(|(_, m)| m.len() < folds) {
            return Err(Error::config(format!(
                "group {s} has {} samples, fewer than {folds} folds",
                m.len()
            )));
        }
    }
    let mut valid = vec![Vec::new(); folds];
    let mut offset = 0;
    for m in &members {
        for (j, &i) in m.iter().enumerate() {
            valid[(offset + j) % folds].push(i);
        }
        offset += m.len();
    }
    Ok(valid
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let mut in_valid = vec![false; ds.len()];
            for &i in &v {
                in_valid[i] = true;
            }
            let train = (0..ds.len()).filter(|&i| !in_valid[i]).collect();
            (train, v)
        })
        .collect())
}

/// Stratified random train/test split with `train_fraction` of every stratum
/// (rounded, keeping at least one sample on each side when a stratum has two
/// or more).
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for m in shuffled_strata(ds, &mut rng) {
        if m.is_empty() {
            continue;
        }
        let mut k = (train_fraction * m.len() as f64).round() as usize;
        if m.len() >= 2 {
            k = k.clamp(1, m.len() - 1);
        }
        train.extend_from_slice(&m[..k]);
        test.extend_from_slice(&m[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-feature affine map to zero mean and unit variance, fit on one dataset
/// and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.len() as f64;
        let d = ds.dim();
        let mut means = vec![0.0; d];
        for i in 0..ds.len() {
            for (m, x) in means.iter_mut().zip(ds.row(i)) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for i in 0..ds.len() {
            for ((v, x), m) in vars.iter_mut().zip(ds.row(i)).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let stds = vars
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { means, stds }
    }

    pub fn apply(&self, ds: &mut Dataset) -> Result<()> {
        if ds.dim != self.means.len() {
            return Err(Error::config("standardizer dimension mismatch"));
        }
        let d = ds.dim;
        for (j, x) in ds.features.iter_mut().enumerate() {
            let k = j % d;
            *x = (*x - self.means[k]) / self.stds[k];
        }
        Ok(())
    }
}
