//! Dataset loading and experiment shaping: attribute-relation and delimited
//! text parsing, min-max rescaling, label masking and repeated k-fold plans.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::som::ClassId;

/// Row-major feature matrix with per-row labels and a label-visibility mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    m: usize,
    labels: Vec<Option<ClassId>>,
    visible: Vec<bool>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from rows; every known label starts out visible.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        labels: Vec<Option<ClassId>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        let m = rows[0].len();
        let mut features = Vec::with_capacity(rows.len() * m);
        for r in &rows {
            if r.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    got: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= class_names.len()) {
            return Err(Error::Contract(format!("label {bad} outside class dictionary")));
        }
        let visible = labels.iter().map(Option::is_some).collect();
        Ok(Dataset {
            features,
            m,
            labels,
            visible,
            class_names,
            feature_names: (0..m).map(|i| format!("f{}", i + 1)).collect(),
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.m {
            self.feature_names = names;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact on an empty slice with m == 0 would panic
        self.features.chunks_exact(self.m.max(1))
    }

    pub fn label(&self, i: usize) -> Option<ClassId> {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Option<ClassId>] {
        &self.labels
    }

    /// The label of row `i` if the learner is allowed to see it.
    pub fn visible_label(&self, i: usize) -> Option<ClassId> {
        if self.visible[i] {
            self.labels[i]
        } else {
            None
        }
    }

    pub fn visible(&self) -> &[bool] {
        &self.visible
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn set_visible(&mut self, visible: Vec<bool>) -> Result<()> {
        if visible.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: visible.len(),
                right: self.len(),
            });
        }
        self.visible = visible
            .into_iter()
            .zip(&self.labels)
            .map(|(v, l)| v && l.is_some())
            .collect();
        Ok(())
    }

    /// Rows at `indices`, in that order. The class dictionary is shared.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.m);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            m: self.m,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            visible: indices.iter().map(|&i| self.visible[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Comma-separated dump with a header row, label name in the last column.
    /// Rows without a label get an empty last cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.feature_names {
            let _ = write!(out, "{name},");
        }
        out.push_str("class\n");
        for (i, row) in self.rows().enumerate() {
            for v in row {
                let _ = write!(out, "{v:?},");
            }
            if let Some(c) = self.labels[i] {
                out.push_str(&self.class_names[c]);
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path, label_column: Option<usize>) -> Result<Dataset> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_arff = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("arff"));
        if is_arff {
            parse_arff(&text)
        } else {
            parse_csv(&text, label_column)
        }
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    if s.len() >= 2
        && ((s.starts_with('\'') && s.ends_with('\'')) || (s.starts_with('"') && s.ends_with('"')))
    {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Splits `@attribute <name> <type>` into name and type, honoring quotes.
fn split_attribute(rest: &str) -> Option<(&str, &str)> {
    let rest = rest.trim_start();
    let first = rest.chars().next()?;
    if first == '\'' || first == '"' {
        let end = rest[1..].find(first)? + 1;
        Some((&rest[1..end], rest[end + 1..].trim()))
    } else {
        let end = rest.find(char::is_whitespace)?;
        Some((&rest[..end], rest[end..].trim()))
    }
}

enum AttrKind {
    Numeric,
    Nominal(Vec<String>),
}

/// Parses an attribute-relation file. Every attribute but the last must be
/// numeric; the last must be nominal and becomes the class.
pub fn parse_arff(text: &str) -> Result<Dataset> {
    let mut attrs: Vec<(String, AttrKind)> = Vec::new();
    let mut in_data = false;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut class_index: HashMap<String, ClassId> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            } else if lower.starts_with("@attribute") {
                let (name, ty) = split_attribute(&line["@attribute".len()..])
                    .ok_or_else(|| Error::parse(line_no, "malformed @attribute line"))?;
                let kind = if ty.starts_with('{') {
                    let close = ty
                        .rfind('}')
                        .ok_or_else(|| Error::parse(line_no, "unterminated nominal set"))?;
                    let values: Vec<String> = ty[1..close]
                        .split(',')
                        .map(|v| unquote(v).to_string())
                        .filter(|v| !v.is_empty())
                        .collect();
                    if values.is_empty() {
                        return Err(Error::parse(line_no, "empty nominal set"));
                    }
                    AttrKind::Nominal(values)
                } else {
                    match ty.to_ascii_lowercase().as_str() {
                        "numeric" | "real" | "integer" => AttrKind::Numeric,
                        other => {
                            return Err(Error::parse(line_no, format!("unsupported attribute type '{other}'")))
                        }
                    }
                };
                attrs.push((name.to_string(), kind));
            } else if lower.starts_with("@data") {
                if attrs.len() < 2 {
                    return Err(Error::parse(line_no, "need at least one feature and a class attribute"));
                }
                for (name, kind) in &attrs[..attrs.len() - 1] {
                    if !matches!(kind, AttrKind::Numeric) {
                        return Err(Error::parse(line_no, format!("feature attribute '{name}' is not numeric")));
                    }
                }
                match &attrs[attrs.len() - 1].1 {
                    AttrKind::Nominal(values) => {
                        for (i, v) in values.iter().enumerate() {
                            class_index.insert(v.clone(), i);
                        }
                    }
                    AttrKind::Numeric => {
                        return Err(Error::parse(line_no, "last attribute must be a nominal class"))
                    }
                }
                in_data = true;
            } else {
                return Err(Error::parse(line_no, format!("unexpected header line '{line}'")));
            }
            continue;
        }

        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != attrs.len() {
            return Err(Error::parse(
                line_no,
                format!("expected {} values, found {}", attrs.len(), cells.len()),
            ));
        }
        let (class_cell, feature_cells) = cells.split_last().expect("non-empty");
        let mut row = Vec::with_capacity(feature_cells.len());
        for cell in feature_cells {
            let v: f64 = unquote(cell)
                .parse()
                .map_err(|_| Error::parse(line_no, format!("non-numeric value '{cell}'")))?;
            row.push(v);
        }
        let class_cell = unquote(class_cell);
        let label = if class_cell == "?" {
            None
        } else {
            Some(*class_index.get(class_cell).ok_or_else(|| {
                Error::parse(line_no, format!("unknown class value '{class_cell}'"))
            })?)
        };
        rows.push(row);
        labels.push(label);
    }

    if !in_data {
        return Err(Error::parse(text.lines().count(), "missing @data section"));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (names, class_attr) = attrs.split_at(attrs.len() - 1);
    let class_names = match &class_attr[0].1 {
        AttrKind::Nominal(v) => v.clone(),
        AttrKind::Numeric => unreachable!("checked at @data"),
    };
    let feature_names = names.iter().map(|(n, _)| n.clone()).collect();
    Ok(Dataset::from_rows(rows, labels, class_names)?.with_feature_names(feature_names))
}

/// Parses comma-separated text. `label_column` defaults to the last column;
/// a first row whose feature cells are not all numeric is taken as a header.
pub fn parse_csv(text: &str, label_column: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(line, e.to_string())
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::EmptyDataset);
    };
    let width = first.len();
    let label_col = label_column.unwrap_or(width.saturating_sub(1));
    if label_col >= width {
        return Err(Error::Contract(format!(
            "label column {label_col} out of range for {width} columns"
        )));
    }
    if width < 2 {
        return Err(Error::Contract("need at least one feature column and a label column".into()));
    }

    let header = first
        .iter()
        .enumerate()
        .any(|(i, cell)| i != label_col && cell.parse::<f64>().is_err());
    let mut feature_names = Vec::new();
    if header {
        feature_names = first
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_col)
            .map(|(_, c)| c.to_string())
            .collect();
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, ClassId> = HashMap::new();
    for (line, rec) in records.iter().skip(usize::from(header)) {
        if rec.len() != width {
            return Err(Error::parse(
                *line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(width - 1);
        let mut label = None;
        for (i, cell) in rec.iter().enumerate() {
            if i == label_col {
                if !cell.is_empty() && cell != "?" {
                    let next = class_names.len();
                    let id = *class_index.entry(cell.to_string()).or_insert_with(|| {
                        class_names.push(cell.to_string());
                        next
                    });
                    label = Some(id);
                }
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::parse(*line, format!("non-numeric value '{cell}'")))?;
                row.push(v);
            }
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ds = Dataset::from_rows(rows, labels, class_names)?;
    Ok(if header { ds.with_feature_names(feature_names) } else { ds })
}

/// Per-column `(v - min) / (max - min)`; constant columns map to zero.
pub fn rescale_minmax(data: &Dataset) -> Dataset {
    let m = data.m;
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for row in data.rows() {
        for j in 0..m {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut out = data.clone();
    for (k, v) in out.features.iter_mut().enumerate() {
        let j = k % m;
        let range = hi[j] - lo[j];
        *v = if range > 0.0 {
            ((*v - lo[j]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    out
}

/// Indices of rows grouped by label; rows without a label form the last group.
fn class_groups(data: &Dataset) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); data.class_names.len() + 1];
    for (i, l) in data.labels.iter().enumerate() {
        match l {
            Some(c) => groups[*c].push(i),
            None => groups[data.class_names.len()].push(i),
        }
    }
    groups
}

/// Makes `round(fraction * N)` labels visible, stratified by class. Each
/// class gets its floor share and the leftover goes to the largest
/// remainders. Rows without a label are never made visible.
pub fn mask_labels(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Contract(format!("fraction {fraction} outside [0, 1]")));
    }
    let mut groups = class_groups(data);
    groups.pop();
    let labeled: usize = groups.iter().map(Vec::len).sum();
    let target = (fraction * labeled as f64).round() as usize;

    let mut quota: Vec<usize> = Vec::with_capacity(groups.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(groups.len());
    for (c, g) in groups.iter().enumerate() {
        let exact = fraction * g.len() as f64;
        let floor = exact.floor();
        quota.push(floor as usize);
        remainders.push((exact - floor, c));
    }
    let mut missing = target.saturating_sub(quota.iter().sum());
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in &remainders {
        if missing == 0 {
            break;
        }
        if quota[c] < groups[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visible = vec![false; data.len()];
    for (c, g) in groups.iter_mut().enumerate() {
        g.shuffle(&mut rng);
        for &i in g.iter().take(quota[c]) {
            visible[i] = true;
        }
    }
    let mut out = data.clone();
    out.visible = visible;
    Ok(out)
}

/// Repeated k-fold partition of row indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// `repetitions[r][f]` holds the sorted test indices of fold `f`.
    pub repetitions: Vec<Vec<Vec<usize>>>,
    pub seeds: Vec<u64>,
}

impl FoldPlan {
    /// Training indices for fold `f` of repetition `r`: every other fold.
    pub fn train_indices(&self, r: usize, f: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self.repetitions[r]
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }

    pub fn test_indices(&self, r: usize, f: usize) -> &[usize] {
        &self.repetitions[r][f]
    }
}

/// Stratified shuffled k-fold assignment, repeated with seeds `seed + r`.
/// Rows of each class are dealt round-robin, and the dealing position carries
/// over from one class to the next so overall fold sizes stay balanced too.
pub fn make_folds(data: &Dataset, k: usize, repetitions: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Contract(format!("k = {k}, need at least 2 folds")));
    }
    if k > data.len() {
        return Err(Error::Contract(format!("k = {k} exceeds {} rows", data.len())));
    }
    let base = class_groups(data);
    let mut plan = FoldPlan {
        k,
        repetitions: Vec::with_capacity(repetitions),
        seeds: Vec::with_capacity(repetitions),
    };
    for r in 0..repetitions {
        let rep_seed = seed.wrapping_add(r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
        let mut folds = vec![Vec::new(); k];
        let mut pos = 0;
        for group in &base {
            let mut g = group.clone();
            g.shuffle(&mut rng);
            for i in g {
                folds[pos % k].push(i);
                pos += 1;
            }
        }
        folds.iter_mut().for_each(|f| f.sort_unstable());
        plan.repetitions.push(folds);
        plan.seeds.push(rep_seed);
    }
    Ok(plan)
}
