//! Labeled tabular data: ingestion, min-max normalization and stratified splits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into [`Dataset::classes`].
pub type ClassId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMeta {
    pub name: String,
    pub index: usize,
    /// Minimum of the stored values (current scale).
    pub observed_min: f64,
    /// Maximum of the stored values (current scale).
    pub observed_max: f64,
    /// Number of distinct stored values.
    pub resolution: usize,
    /// Original-scale minimum, kept so normalized data can be inverted.
    pub raw_min: f64,
    /// Original-scale maximum.
    pub raw_max: f64,
}

impl AttributeMeta {
    pub fn span(&self) -> f64 {
        self.observed_max - self.observed_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCase {
    pub values: Vec<f64>,
    pub label: ClassId,
    /// 1-based line number in the source file.
    pub source_row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    /// Label as written in the source file.
    pub label: String,
    /// Display name.
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    MinMaxUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    DropRow,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Comma,
    Whitespace,
}

/// Column roles for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Label column; `None` means the last column.
    pub label_column: Option<usize>,
    /// Columns ignored entirely (sample ids).
    pub skip_columns: Vec<usize>,
    pub has_header: bool,
    pub missing_marker: String,
    pub delimiter: Delimiter,
    /// Accepted labels in class order. When absent the sorted set of
    /// observed labels is used.
    pub class_labels: Option<Vec<String>>,
    /// Display names parallel to `class_labels`.
    pub class_names: Option<Vec<String>>,
    /// Attribute names; overrides header names.
    pub attribute_names: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label_column: None,
            skip_columns: Vec::new(),
            has_header: false,
            missing_marker: "?".to_string(),
            delimiter: Delimiter::Comma,
            class_labels: None,
            class_names: None,
            attribute_names: None,
        }
    }
}

impl CsvSchema {
    /// UCI `breast-cancer-wisconsin.data`: sample id, nine attributes, class 2/4.
    pub fn wbc() -> Self {
        CsvSchema {
            skip_columns: vec![0],
            class_labels: Some(vec!["2".into(), "4".into()]),
            class_names: Some(vec!["benign".into(), "malignant".into()]),
            attribute_names: Some(
                [
                    "clump_thickness",
                    "cell_size_uniformity",
                    "cell_shape_uniformity",
                    "marginal_adhesion",
                    "single_epithelial_cell_size",
                    "bare_nuclei",
                    "bland_chromatin",
                    "normal_nucleoli",
                    "mitoses",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ),
            ..CsvSchema::default()
        }
    }

    /// UCI `page-blocks.data`: ten whitespace separated attributes, class 1..5.
    pub fn pbc() -> Self {
        CsvSchema {
            delimiter: Delimiter::Whitespace,
            class_labels: Some((1..=5).map(|c| c.to_string()).collect()),
            class_names: Some(
                ["text", "horiz_line", "graphic", "vert_line", "picture"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
            attribute_names: Some(
                [
                    "height", "length", "area", "eccen", "p_black", "p_and", "mean_tr", "blackpix",
                    "blackand", "wb_trans",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ),
            ..CsvSchema::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub attributes: Vec<AttributeMeta>,
    pub cases: Vec<LabeledCase>,
    pub classes: Vec<ClassInfo>,
    pub normalization: Normalization,
}

pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    missing: MissingPolicy,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_csv(&name, &text, schema, missing)
}

/// Parses delimited text already in memory. See [`ingest_csv`].
pub fn parse_csv(
    name: &str,
    text: &str,
    schema: &CsvSchema,
    missing: MissingPolicy,
) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let split = |line: &str| -> Vec<String> {
        match schema.delimiter {
            Delimiter::Comma => line.split(',').map(|f| f.trim().to_string()).collect(),
            Delimiter::Whitespace => line.split_whitespace().map(str::to_string).collect(),
        }
    };

    let header = if schema.has_header {
        match lines.next() {
            Some((_, l)) => Some(split(l)),
            None => return Err(Error::Empty(format!("{name}: no header"))),
        }
    } else {
        None
    };

    let mut raw_rows: Vec<(usize, Vec<f64>, String)> = Vec::new();
    let mut width: Option<usize> = None;
    for (row, line) in lines {
        let fields = split(line);
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {w} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        let label_col = schema.label_column.unwrap_or(fields.len() - 1);
        if label_col >= fields.len() {
            return Err(Error::Parse {
                row,
                message: format!("label column {label_col} out of range"),
            });
        }
        let mut has_missing = false;
        let mut values = Vec::with_capacity(fields.len());
        for (c, f) in fields.iter().enumerate() {
            if c == label_col || schema.skip_columns.contains(&c) {
                continue;
            }
            if *f == schema.missing_marker {
                has_missing = true;
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {c}: cannot parse {f:?} as a number"),
            })?;
            values.push(v);
        }
        let label = fields[label_col].clone();
        if label == schema.missing_marker {
            has_missing = true;
        }
        if has_missing {
            match missing {
                MissingPolicy::DropRow => continue,
                MissingPolicy::Error => {
                    return Err(Error::Parse {
                        row,
                        message: format!("missing value marker {:?}", schema.missing_marker),
                    })
                }
            }
        }
        raw_rows.push((row, values, label));
    }

    if raw_rows.is_empty() {
        return Err(Error::Empty(format!("{name}: no usable rows")));
    }

    let labels: Vec<String> = match &schema.class_labels {
        Some(l) => l.clone(),
        None => {
            let mut l: Vec<String> = raw_rows.iter().map(|r| r.2.clone()).collect();
            l.sort();
            l.dedup();
            l
        }
    };
    let names: Vec<String> = match &schema.class_names {
        Some(n) if n.len() == labels.len() => n.clone(),
        _ => labels.clone(),
    };
    let lookup: BTreeMap<&str, ClassId> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let mut cases = Vec::with_capacity(raw_rows.len());
    for (row, values, label) in &raw_rows {
        let id = *lookup
            .get(label.as_str())
            .ok_or_else(|| Error::UnknownLabel {
                row: *row,
                label: label.clone(),
            })?;
        cases.push(LabeledCase {
            values: values.clone(),
            label: id,
            source_row: *row,
        });
    }

    let dim = cases[0].values.len();
    let attr_names: Vec<String> = if let Some(n) = &schema.attribute_names {
        if n.len() != dim {
            return Err(Error::Dimension {
                expected: n.len(),
                actual: dim,
            });
        }
        n.clone()
    } else if let Some(h) = header {
        let label_col = schema.label_column.unwrap_or(h.len().saturating_sub(1));
        h.into_iter()
            .enumerate()
            .filter(|(c, _)| *c != label_col && !schema.skip_columns.contains(c))
            .map(|(_, n)| n)
            .collect()
    } else {
        (0..dim).map(|i| format!("X{i}")).collect()
    };

    let classes = labels
        .iter()
        .zip(names)
        .map(|(l, n)| ClassInfo {
            label: l.clone(),
            name: n,
            count: 0,
        })
        .collect();

    let mut ds = Dataset {
        name: name.to_string(),
        attributes: attr_names
            .into_iter()
            .enumerate()
            .map(|(index, name)| AttributeMeta {
                name,
                index,
                observed_min: 0.0,
                observed_max: 0.0,
                resolution: 1,
                raw_min: 0.0,
                raw_max: 0.0,
            })
            .collect(),
        cases,
        classes,
        normalization: Normalization::Raw,
    };
    ds.refresh_stats();
    for a in &mut ds.attributes {
        a.raw_min = a.observed_min;
        a.raw_max = a.observed_max;
    }
    Ok(ds)
}

impl Dataset {
    pub fn dimension(&self) -> usize {
        self.attributes.len()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        &self.classes[c].name
    }

    /// Recomputes class counts and per-attribute observed statistics.
    pub fn refresh_stats(&mut self) {
        for c in &mut self.classes {
            c.count = 0;
        }
        for case in &self.cases {
            self.classes[case.label].count += 1;
        }
        for (i, a) in self.attributes.iter_mut().enumerate() {
            let mut vals: Vec<f64> = self.cases.iter().map(|c| c.values[i]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            a.observed_min = vals.first().copied().unwrap_or(0.0);
            a.observed_max = vals.last().copied().unwrap_or(0.0);
            a.resolution = vals.len().max(1);
        }
    }

    /// New dataset holding the cases at `indices`, with statistics recomputed
    /// over that subset. Class list and raw bounds are kept.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut ds = Dataset {
            name: self.name.clone(),
            attributes: self.attributes.clone(),
            cases: indices.iter().map(|&i| self.cases[i].clone()).collect(),
            classes: self.classes.clone(),
            normalization: self.normalization,
        };
        ds.refresh_stats();
        ds
    }

    /// Smallest positive gap between distinct values of attribute `i`
    /// (1.0 when the attribute is constant).
    pub fn quantum(&self, i: usize) -> f64 {
        let mut vals: Vec<f64> = self.cases.iter().map(|c| c.values[i]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let q = vals
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        if q.is_finite() {
            q
        } else {
            1.0
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Dataset> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Converts normalized values back to the original scale.
    pub fn denormalize(&self) -> Dataset {
        match self.normalization {
            Normalization::Raw => self.clone(),
            Normalization::MinMaxUnit => {
                let mut ds = self.clone();
                for case in &mut ds.cases {
                    for (v, a) in case.values.iter_mut().zip(&self.attributes) {
                        *v = a.raw_min + *v * (a.raw_max - a.raw_min);
                    }
                }
                ds.normalization = Normalization::Raw;
                ds.refresh_stats();
                ds
            }
        }
    }
}

/// `v' = (v - min) / (max - min)`; constant attributes map to 0.
pub fn normalize(dataset: &Dataset, mode: Normalization) -> Dataset {
    let raw = dataset.denormalize();
    match mode {
        Normalization::Raw => raw,
        Normalization::MinMaxUnit => {
            let mut ds = raw;
            for case in &mut ds.cases {
                for (v, a) in case.values.iter_mut().zip(&dataset.attributes) {
                    let range = a.raw_max - a.raw_min;
                    *v = if range > 0.0 {
                        (*v - a.raw_min) / range
                    } else {
                        0.0
                    };
                }
            }
            ds.normalization = Normalization::MinMaxUnit;
            ds.refresh_stats();
            ds
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Holdout,
    StratifiedKfold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

/// How to partition a dataset. For k-fold plans each fold is the test set
/// and `fractions.validation` is the share of the remaining cases held out
/// for validation (the rest is training).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub fractions: Fractions,
    pub fold_count: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn holdout(train: f64, validation: f64, test: f64, seed: u64) -> Self {
        SplitPlan {
            kind: SplitKind::Holdout,
            fractions: Fractions {
                train,
                validation,
                test,
            },
            fold_count: 1,
            seed,
        }
    }

    /// `folds`-fold plan; `validation` is carved from each fold's training part.
    pub fn kfold(folds: usize, validation: f64, seed: u64) -> Self {
        let test = if folds > 0 { 1.0 / folds as f64 } else { 0.0 };
        let rest = 1.0 - test;
        SplitPlan {
            kind: SplitKind::StratifiedKfold,
            fractions: Fractions {
                train: rest * (1.0 - validation),
                validation: rest * validation,
                test,
            },
            fold_count: folds,
            seed,
        }
    }

    fn inner_validation(&self) -> f64 {
        let rest = self.fractions.train + self.fractions.validation;
        if rest > 0.0 {
            self.fractions.validation / rest
        } else {
            0.0
        }
    }
}

/// Case indices (into `Dataset::cases`) of one partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn indices_by_class(dataset: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); dataset.class_count()];
    for (i, c) in dataset.cases.iter().enumerate() {
        by_class[c.label].push(i);
    }
    by_class
}

/// Takes `round(len * frac)` items from the front of each class list.
fn carve(by_class: &mut [Vec<usize>], frac: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for list in by_class.iter_mut() {
        let k = ((list.len() as f64) * frac).round() as usize;
        let k = k.min(list.len());
        out.extend(list.drain(..k));
    }
    out.sort_unstable();
    out
}

pub fn stratified_split(dataset: &Dataset, plan: &SplitPlan) -> Result<Vec<Partition>> {
    let f = plan.fractions;
    if [f.train, f.validation, f.test].iter().any(|x| *x < 0.0) {
        return Err(Error::Split("negative fraction".into()));
    }
    if ((f.train + f.validation + f.test) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions sum to {}, expected 1",
            f.train + f.validation + f.test
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut by_class = indices_by_class(dataset);
    for list in &mut by_class {
        list.shuffle(&mut rng);
    }

    match plan.kind {
        SplitKind::Holdout => {
            let test = carve(&mut by_class, f.test);
            let validation = carve(
                &mut by_class,
                f.validation / (1.0 - f.test).max(f64::MIN_POSITIVE),
            );
            let mut train: Vec<usize> = by_class.into_iter().flatten().collect();
            train.sort_unstable();
            Ok(vec![Partition {
                train,
                validation,
                test,
            }])
        }
        SplitKind::StratifiedKfold => {
            let k = plan.fold_count;
            if k < 2 {
                return Err(Error::Split("k-fold needs at least 2 folds".into()));
            }
            for (c, list) in by_class.iter().enumerate() {
                if list.len() < k {
                    return Err(Error::TooFewCases {
                        class: dataset.classes[c].name.clone(),
                        count: list.len(),
                        folds: k,
                    });
                }
            }
            // Concatenating class lists and dealing positions round-robin keeps
            // every class within one case of count/k in every fold.
            let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (pos, idx) in by_class.iter().flatten().enumerate() {
                folds[pos % k].push(*idx);
            }
            let inner = plan.inner_validation();
            let mut out = Vec::with_capacity(k);
            for (fi, fold) in folds.iter().enumerate() {
                let mut test = fold.clone();
                test.sort_unstable();
                // Rest of the data keeps the shuffled within-class order.
                let mut rest_by_class: Vec<Vec<usize>> = by_class
                    .iter()
                    .map(|l| l.iter().copied().filter(|i| !fold.contains(i)).collect())
                    .collect();
                // Rotate so each fold draws a different validation subset.
                for l in &mut rest_by_class {
                    if !l.is_empty() {
                        let r = (fi * l.len() / k) % l.len();
                        l.rotate_left(r);
                    }
                }
                let validation = carve(&mut rest_by_class, inner);
                let mut train: Vec<usize> = rest_by_class.into_iter().flatten().collect();
                train.sort_unstable();
                out.push(Partition {
                    train,
                    validation,
                    test,
                });
            }
            Ok(out)
        }
    }
}
