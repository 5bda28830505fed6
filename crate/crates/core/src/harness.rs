//! Experiment orchestration: Latin Hypercube sampling of the hyperparameter
//! space, repeated cross-validation across supervision levels, aggregation
//! and CSV/JSON exports.
//!
//! Seeds fan out from one master seed with [`derive_seed`], so any single
//! (config, repetition, fold, fraction) cell can be rerun on its own.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{make_folds, mask_labels, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::learning::fit;
use crate::metrics::{accuracy, clustering_error};
use crate::som::{round_half_up, Params, DEFAULT_EPS_ACT, DEFAULT_N_MAX, DEFAULT_VAR_FLOOR};

/// Supervision levels used throughout the classification experiments.
pub const PAPER_FRACTIONS: [f64; 7] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 1.0];

const TAG_LHS: u64 = 1;
const TAG_FOLDS: u64 = 2;
const TAG_MASK: u64 = 3;
const TAG_FIT: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of counters into a seed: `s <- splitmix64(s ^ splitmix64(c))`
/// for each counter `c`, starting from `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |s, &c| splitmix64(s ^ splitmix64(c)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
}

/// A range whose sampled value is a multiplier of another quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependency {
    /// Multiplies the sampled winner learning rate.
    TimesEb,
    /// Multiplies the number of training rows.
    TimesRows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub dependency: Option<Dependency>,
}

impl ParamRange {
    pub fn new(name: &str, low: f64, high: f64) -> Self {
        ParamRange {
            name: name.to_string(),
            low,
            high,
            scale: Scale::Linear,
            dependency: None,
        }
    }

    fn depends(mut self, dep: Dependency) -> Self {
        self.dependency = Some(dep);
        self
    }
}

const PARAM_NAMES: [&str; 8] = ["lp", "beta", "age_wins", "e_b", "e_n", "s", "minwd", "epochs"];

/// The hyperparameter space swept by [`lhs_sample`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpace {
    pub ranges: Vec<ParamRange>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

impl Default for SweepSpace {
    fn default() -> Self {
        SweepSpace {
            ranges: vec![
                ParamRange::new("lp", 0.001, 0.002),
                ParamRange::new("beta", 0.90, 0.95),
                ParamRange::new("age_wins", 1.0, 200.0).depends(Dependency::TimesRows),
                ParamRange::new("e_b", 0.001, 0.2),
                ParamRange::new("e_n", 0.002, 1.0).depends(Dependency::TimesEb),
                ParamRange::new("s", 0.01, 0.1),
                ParamRange::new("minwd", 0.0, 0.5),
                ParamRange::new("epochs", 1.0, 100.0),
            ],
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl SweepSpace {
    pub fn validate(&self) -> Result<()> {
        for r in &self.ranges {
            if !PARAM_NAMES.contains(&r.name.as_str()) {
                return Err(Error::Contract(format!("unknown parameter range '{}'", r.name)));
            }
            if !(r.low.is_finite() && r.high.is_finite() && r.low <= r.high) {
                return Err(Error::Contract(format!(
                    "range '{}' has low {} > high {}",
                    r.name, r.low, r.high
                )));
            }
        }
        for name in PARAM_NAMES {
            match self.ranges.iter().filter(|r| r.name == name).count() {
                1 => {}
                0 => return Err(Error::Contract(format!("missing parameter range '{name}'"))),
                _ => return Err(Error::Contract(format!("duplicate parameter range '{name}'"))),
            }
        }
        if self.n_max == 0 {
            return Err(Error::Contract("n_max must be at least 1".into()));
        }
        Ok(())
    }

    fn range(&self, name: &str) -> usize {
        self.ranges
            .iter()
            .position(|r| r.name == name)
            .expect("validated")
    }
}

/// Stratified samples: column `j` holds one uniform draw from each of `n`
/// equal-width strata of range `j`, in an independently shuffled order.
pub fn lhs_columns(ranges: &[ParamRange], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ranges
        .iter()
        .map(|r| {
            let width = (r.high - r.low) / n as f64;
            let mut col: Vec<f64> = (0..n)
                .map(|i| {
                    let u: f64 = rng.random();
                    (r.low + (i as f64 + u) * width).min(r.high)
                })
                .collect();
            col.shuffle(&mut rng);
            col
        })
        .collect()
}

fn resolve(value: f64, dep: Option<Dependency>, e_b: f64, rows: usize) -> f64 {
    match dep {
        None => value,
        Some(Dependency::TimesEb) => value * e_b,
        Some(Dependency::TimesRows) => value * rows as f64,
    }
}

/// `n` parameter settings for a training set of `rows` patterns. Dependent
/// ranges are resolved against their sampled anchors; `age_wins` and
/// `epochs` are rounded half-up.
pub fn lhs_sample(space: &SweepSpace, n: usize, seed: u64, rows: usize) -> Result<Vec<Params>> {
    space.validate()?;
    if n == 0 {
        return Err(Error::Contract("need at least one sample".into()));
    }
    let cols = lhs_columns(&space.ranges, n, seed);
    let get = |name: &str, i: usize| cols[space.range(name)][i];
    let dep = |name: &str| space.ranges[space.range(name)].dependency;
    let rows = rows.max(1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let e_b = resolve(get("e_b", i), dep("e_b"), f64::NAN, rows);
        let value = |name: &str| resolve(get(name, i), dep(name), e_b, rows);
        out.push(Params {
            lp: value("lp"),
            beta: value("beta"),
            age_wins: round_half_up(value("age_wins")).max(1.0) as u64,
            e_b,
            e_n: value("e_n"),
            s: value("s"),
            minwd: value("minwd"),
            epochs: round_half_up(value("epochs")).max(1.0) as u32,
            n_max: space.n_max,
            eps_act: DEFAULT_EPS_ACT,
            var_floor: DEFAULT_VAR_FLOOR,
        });
    }
    Ok(out)
}

/// One (config, repetition, fold, supervision fraction) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_index: usize,
    pub params: Params,
    pub repetition: usize,
    pub fold: usize,
    pub supervision_fraction: f64,
    pub accuracy: f64,
    pub ce: f64,
    pub node_count: usize,
    /// Seconds spent fitting and scoring. Not exported.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Trains on every fold complement at every supervision fraction and scores
/// accuracy and clustering error on the held-out fold. Label masks depend only
/// on `seed` and the (repetition, fold, fraction) cell, so configs evaluated
/// with the same seed see identical masks.
pub fn run_cv_experiment(
    data: &Dataset,
    params: &Params,
    fractions: &[f64],
    folds: &FoldPlan,
    seed: u64,
) -> Result<Vec<SweepResult>> {
    params.validate()?;
    let mut out = Vec::with_capacity(folds.repetitions.len() * folds.k * fractions.len());
    for (r, rep) in folds.repetitions.iter().enumerate() {
        for f in 0..rep.len() {
            let train_all = data.subset(&folds.train_indices(r, f));
            let test = data.subset(folds.test_indices(r, f));
            for (k, &fraction) in fractions.iter().enumerate() {
                let cell = [r as u64, f as u64, k as u64];
                let started = Instant::now();
                let train = mask_labels(&train_all, fraction, derive_seed(seed, &[TAG_MASK, cell[0], cell[1], cell[2]]))?;
                let model = fit(&train, params, derive_seed(seed, &[TAG_FIT, cell[0], cell[1], cell[2]]))?;

                let mut predicted = Vec::with_capacity(test.len());
                let mut clusters = Vec::with_capacity(test.len());
                let mut truth = Vec::with_capacity(test.len());
                for (i, x) in test.rows().enumerate() {
                    let Some(label) = test.label(i) else { continue };
                    predicted.push(model.predict_class(x)?);
                    clusters.push(model.assign_cluster(x)?);
                    truth.push(label);
                }
                let (acc, ce) = if truth.is_empty() {
                    (0.0, 0.0)
                } else {
                    (accuracy(&predicted, &truth)?, clustering_error(&clusters, &truth)?)
                };
                out.push(SweepResult {
                    config_index: 0,
                    params: params.clone(),
                    repetition: r,
                    fold: f,
                    supervision_fraction: fraction,
                    accuracy: acc,
                    ce,
                    node_count: model.len(),
                    wall_time: started.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(out)
}

/// Mean and sample standard deviation of one (config, fraction) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub config_index: usize,
    pub supervision_fraction: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_ce: f64,
    pub std_ce: f64,
    pub mean_nodes: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Every group, ordered by fraction then config.
    pub groups: Vec<GroupStats>,
    /// Per fraction, the config with the best mean accuracy (CE breaks ties).
    pub best_accuracy: Vec<GroupStats>,
    /// Per fraction, the config with the best mean CE (accuracy breaks ties).
    pub best_ce: Vec<GroupStats>,
}

/// Mean and sample standard deviation; values are summed in sorted order so
/// the result does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

pub fn aggregate(results: &[SweepResult]) -> Summary {
    let mut buckets: BTreeMap<(u64, usize), Vec<&SweepResult>> = BTreeMap::new();
    for r in results {
        // non-negative floats order like their bit patterns
        buckets
            .entry((r.supervision_fraction.to_bits(), r.config_index))
            .or_default()
            .push(r);
    }
    let groups: Vec<GroupStats> = buckets
        .into_iter()
        .map(|((bits, config), rs)| {
            let accs: Vec<f64> = rs.iter().map(|r| r.accuracy).collect();
            let ces: Vec<f64> = rs.iter().map(|r| r.ce).collect();
            let nodes: Vec<f64> = rs.iter().map(|r| r.node_count as f64).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&accs);
            let (mean_ce, std_ce) = mean_std(&ces);
            GroupStats {
                config_index: config,
                supervision_fraction: f64::from_bits(bits),
                runs: rs.len(),
                mean_accuracy,
                std_accuracy,
                mean_ce,
                std_ce,
                mean_nodes: mean_std(&nodes).0,
            }
        })
        .collect();

    let mut best_accuracy: Vec<GroupStats> = Vec::new();
    let mut best_ce: Vec<GroupStats> = Vec::new();
    for g in &groups {
        let same = |b: &GroupStats| b.supervision_fraction.to_bits() == g.supervision_fraction.to_bits();
        match best_accuracy.last_mut() {
            Some(b) if same(b) => {
                if (g.mean_accuracy, g.mean_ce) > (b.mean_accuracy, b.mean_ce) {
                    *b = g.clone();
                }
            }
            _ => best_accuracy.push(g.clone()),
        }
        match best_ce.last_mut() {
            Some(b) if same(b) => {
                if (g.mean_ce, g.mean_accuracy) > (b.mean_ce, b.mean_accuracy) {
                    *b = g.clone();
                }
            }
            _ => best_ce.push(g.clone()),
        }
    }
    Summary {
        groups,
        best_accuracy,
        best_ce,
    }
}

pub const RUNS_FILE: &str = "runs.csv";
pub const ACCURACY_FILE: &str = "accuracy_by_fraction.csv";
pub const CE_FILE: &str = "best_ce.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Raw per-run table.
pub fn runs_csv(results: &[SweepResult]) -> String {
    let mut out = String::from(
        "config,repetition,fold,fraction,lp,beta,age_wins,e_b,e_n,s,minwd,epochs,n_max,accuracy,ce,nodes\n",
    );
    for r in results {
        let p = &r.params;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.config_index,
            r.repetition,
            r.fold,
            r.supervision_fraction,
            p.lp,
            p.beta,
            p.age_wins,
            p.e_b,
            p.e_n,
            p.s,
            p.minwd,
            p.epochs,
            p.n_max,
            r.accuracy,
            r.ce,
            r.node_count
        );
    }
    out
}

/// Best mean accuracy and its standard deviation per supervision fraction.
pub fn accuracy_csv(summary: &Summary) -> String {
    let mut out = String::from("fraction,config,runs,mean_accuracy,std_accuracy,mean_ce,std_ce,mean_nodes\n");
    for g in &summary.best_accuracy {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g.supervision_fraction,
            g.config_index,
            g.runs,
            g.mean_accuracy,
            g.std_accuracy,
            g.mean_ce,
            g.std_ce,
            g.mean_nodes
        );
    }
    out
}

/// Best mean CE per fraction, one column per dataset.
pub fn ce_table_csv(columns: &[(&str, &Summary)]) -> String {
    let mut out = String::from("fraction");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let mut fractions: Vec<f64> = columns
        .iter()
        .flat_map(|(_, s)| s.best_ce.iter().map(|g| g.supervision_fraction))
        .collect();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup_by(|a, b| a.to_bits() == b.to_bits());
    for f in fractions {
        let _ = write!(out, "{f}");
        for (_, s) in columns {
            out.push(',');
            if let Some(g) = s.best_ce.iter().find(|g| g.supervision_fraction.to_bits() == f.to_bits()) {
                let _ = write!(out, "{}", g.mean_ce);
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportPaths {
    pub runs: PathBuf,
    pub accuracy: PathBuf,
    pub ce: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the raw run table, the per-fraction best accuracy table and the
/// best CE table into `dest` (created if missing).
pub fn export_results(
    results: &[SweepResult],
    summary: &Summary,
    dataset_name: &str,
    dest: &Path,
) -> Result<ExportPaths> {
    std::fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
    let paths = ExportPaths {
        runs: dest.join(RUNS_FILE),
        accuracy: dest.join(ACCURACY_FILE),
        ce: dest.join(CE_FILE),
    };
    write_file(&paths.runs, &runs_csv(results))?;
    write_file(&paths.accuracy, &accuracy_csv(summary))?;
    write_file(&paths.ce, &ce_table_csv(&[(dataset_name, summary)]))?;
    Ok(paths)
}

/// Provenance record written next to sweep exports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub dataset: String,
    pub dataset_sha256: String,
    pub master_seed: u64,
    pub n_configs: usize,
    pub fractions: Vec<f64>,
    pub folds: usize,
    pub repetitions: usize,
    pub space: SweepSpace,
}

impl RunManifest {
    pub fn write(&self, dest: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
        let path = dest.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(&path, &text)?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub n_configs: usize,
    pub fractions: Vec<f64>,
    pub folds: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_configs: 500,
            fractions: PAPER_FRACTIONS.to_vec(),
            folds: 3,
            repetitions: 3,
            master_seed: 0,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub configs: Vec<Params>,
    pub plan: FoldPlan,
    pub results: Vec<SweepResult>,
    pub summary: Summary,
}

/// Samples the design, runs every config through the same fold plan and
/// aggregates. Configs run in parallel; results come back in config order.
pub fn run_sweep(data: &Dataset, space: &SweepSpace, cfg: &SweepConfig) -> Result<SweepOutput> {
    let plan = make_folds(data, cfg.folds, cfg.repetitions, derive_seed(cfg.master_seed, &[TAG_FOLDS]))?;
    // age_wins scales with the size of the training portion
    let train_rows = data.len() - data.len() / cfg.folds;
    let configs = lhs_sample(space, cfg.n_configs, derive_seed(cfg.master_seed, &[TAG_LHS]), train_rows)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    let per_config: Vec<Result<Vec<SweepResult>>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rs = run_cv_experiment(data, p, &cfg.fractions, &plan, cfg.master_seed)?;
                rs.iter_mut().for_each(|r| r.config_index = i);
                Ok(rs)
            })
            .collect()
    });
    let mut results = Vec::with_capacity(configs.len() * cfg.folds * cfg.repetitions * cfg.fractions.len());
    for rs in per_config {
        results.extend(rs?);
    }
    let summary = aggregate(&results);
    Ok(SweepOutput {
        configs,
        plan,
        results,
        summary,
    })
}
