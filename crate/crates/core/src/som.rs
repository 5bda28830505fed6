//! Node and map data model, plus the per-node arithmetic used by training.
//!
//! A node is a prototype with a center, a relevance vector and a pair of
//! moving-average distance vectors (raw and bias-corrected). The relevance
//! and the corrected distances together define a box-shaped receptive field
//! around the center which acts as a local reject option during learning.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a dataset's class dictionary.
pub type ClassId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const DEFAULT_EPS_ACT: f64 = 1e-7;
pub const DEFAULT_VAR_FLOOR: f64 = 1e-6;
pub const DEFAULT_N_MAX: usize = 200;

fn default_eps_act() -> f64 {
    DEFAULT_EPS_ACT
}

fn default_var_floor() -> f64 {
    DEFAULT_VAR_FLOOR
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

/// Hyperparameters of the map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Lowest cluster percentage: minimum share of competitions a node must win.
    pub lp: f64,
    /// Decay rate of the distance moving averages.
    pub beta: f64,
    /// Competitions between two removal resets.
    pub age_wins: u64,
    /// Winner learning rate.
    pub e_b: f64,
    /// Neighbor learning rate.
    pub e_n: f64,
    /// Slope of the relevance logistic.
    pub s: f64,
    /// Connection threshold on relevance dissimilarity.
    pub minwd: f64,
    /// Passes over the training set during organization.
    pub epochs: u32,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_eps_act")]
    pub eps_act: f64,
    #[serde(default = "default_var_floor")]
    pub var_floor: f64,
}

impl Params {
    /// Midpoints of the standard sweep ranges, for a training set of `s_count` rows.
    pub fn midpoint(s_count: usize) -> Self {
        let e_b = (0.001 + 0.2) / 2.0;
        Params {
            lp: 0.0015,
            beta: 0.925,
            age_wins: round_half_up(100.5 * s_count.max(1) as f64) as u64,
            e_b,
            e_n: e_b * (0.002 + 1.0) / 2.0,
            s: 0.055,
            minwd: 0.25,
            epochs: round_half_up(50.5) as u32,
            n_max: DEFAULT_N_MAX,
            eps_act: DEFAULT_EPS_ACT,
            var_floor: DEFAULT_VAR_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidParam {
                name,
                reason: reason.into(),
            })
        }
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let rate = |v: f64| v > 0.0 && v <= 1.0;
        if !open_unit(self.beta) {
            return bad("beta", format!("{} not in (0, 1)", self.beta));
        }
        if !open_unit(self.lp) {
            return bad("lp", format!("{} not in (0, 1)", self.lp));
        }
        if !rate(self.e_b) {
            return bad("e_b", format!("{} not in (0, 1]", self.e_b));
        }
        if !rate(self.e_n) {
            return bad("e_n", format!("{} not in (0, 1]", self.e_n));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return bad("s", format!("{} must be positive", self.s));
        }
        if !(self.minwd >= 0.0 && self.minwd.is_finite()) {
            return bad("minwd", format!("{} must be non-negative", self.minwd));
        }
        if self.age_wins == 0 {
            return bad("age_wins", "must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.n_max == 0 {
            return bad("n_max", "must be at least 1");
        }
        if !(self.eps_act > 0.0 && self.eps_act.is_finite()) {
            return bad("eps_act", "must be positive");
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return bad("var_floor", "must be positive");
        }
        Ok(())
    }
}

pub(crate) fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// One prototype of the map.
///
/// Freshly inserted nodes have unit relevance, zero distance vectors and
/// `t == 0`. Duplicated nodes are the exception: they inherit the distance
/// vectors of their source while restarting `t` at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub center: Vec<f64>,
    pub relevance: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_hat: Vec<f64>,
    pub t: u64,
    pub wins: f64,
    pub class_label: Option<ClassId>,
}

impl Node {
    pub fn new(id: NodeId, center: Vec<f64>, class_label: Option<ClassId>) -> Self {
        let m = center.len();
        Node {
            id,
            center,
            relevance: vec![1.0; m],
            delta: vec![0.0; m],
            delta_hat: vec![0.0; m],
            t: 0,
            wins: 0.0,
            class_label,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Advances the node clock, folds `|x - c|` into the moving average,
    /// bias-corrects it and recomputes the relevances from the corrected
    /// estimate.
    pub fn update_relevances(&mut self, x: &[f64], beta: f64, slope: f64) -> Result<()> {
        self.check_dim(x)?;
        self.t += 1;
        let correction = 1.0 - beta.powf(self.t as f64);
        for i in 0..self.dim() {
            let dist = (x[i] - self.center[i]).abs();
            self.delta[i] = beta * self.delta[i] + (1.0 - beta) * dist;
            self.delta_hat[i] = self.delta[i] / correction;
        }
        relevances_from(&self.delta_hat, slope, &mut self.relevance);
        Ok(())
    }

    /// Relevance update followed by a step of the center toward `x`.
    pub fn update(&mut self, x: &[f64], lr: f64, beta: f64, slope: f64) -> Result<()> {
        self.update_relevances(x, beta, slope)?;
        // written relative to x: exact when lr = 1 or when x already equals c
        for (c, &xi) in self.center.iter_mut().zip(x) {
            *c = xi - (1.0 - lr) * (xi - *c);
        }
        Ok(())
    }
}

/// Inverse logistic of the corrected distances, centered at their mean.
/// All ones when the distances are flat.
pub fn relevances_from(delta_hat: &[f64], slope: f64, out: &mut [f64]) {
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &d in delta_hat {
        min = min.min(d);
        max = max.max(d);
        sum += d;
    }
    if delta_hat.is_empty() || min == max {
        out.iter_mut().for_each(|w| *w = 1.0);
        return;
    }
    let mean = sum / delta_hat.len() as f64;
    let scale = slope * (max - min);
    for (w, &d) in out.iter_mut().zip(delta_hat) {
        // exp overflow would give exactly zero; relevance stays strictly positive
        *w = (1.0 / (1.0 + ((mean - d) / scale).exp())).max(f64::MIN_POSITIVE);
    }
}

pub fn weighted_distance(x: &[f64], node: &Node) -> Result<f64> {
    node.check_dim(x)?;
    Ok(weighted_distance_unchecked(x, node))
}

fn weighted_distance_unchecked(x: &[f64], node: &Node) -> f64 {
    x.iter()
        .zip(&node.center)
        .zip(&node.relevance)
        .map(|((xi, ci), wi)| wi * (xi - ci) * (xi - ci))
        .sum::<f64>()
        .sqrt()
}

pub fn activation(x: &[f64], node: &Node, eps_act: f64) -> Result<f64> {
    node.check_dim(x)?;
    Ok(activation_unchecked(x, node, eps_act))
}

fn activation_unchecked(x: &[f64], node: &Node, eps_act: f64) -> f64 {
    let total: f64 = node.relevance.iter().sum();
    total / (total + weighted_distance_unchecked(x, node) + eps_act)
}

/// Per-dimension half-width of the acceptance box: floored corrected
/// distance divided by relevance.
pub fn relaxed_variance(node: &Node, var_floor: f64) -> Vec<f64> {
    node.delta_hat
        .iter()
        .zip(&node.relevance)
        .map(|(&d, &w)| d.max(var_floor) / w)
        .collect()
}

/// Whether `x` falls strictly inside the node's receptive field. Nodes that
/// were never updated accept everything.
pub fn acceptance(x: &[f64], node: &Node, var_floor: f64) -> Result<bool> {
    node.check_dim(x)?;
    if node.t == 0 {
        return Ok(true);
    }
    Ok(x.iter()
        .zip(&node.center)
        .zip(node.delta_hat.iter().zip(&node.relevance))
        .all(|((&xi, &ci), (&d, &w))| {
            let v = d.max(var_floor) / w;
            xi > ci - v && xi < ci + v
        }))
}

/// Mean absolute difference between two relevance vectors.
pub fn relevance_dissimilarity(a: &Node, b: &Node) -> f64 {
    let m = a.dim().max(1) as f64;
    a.relevance
        .iter()
        .zip(&b.relevance)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / m
}

fn class_compatible(a: Option<ClassId>, b: Option<ClassId>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Organization,
    Convergence,
    Inference,
}

impl Phase {
    pub fn allows_insertion(self) -> bool {
        self == Phase::Organization
    }
}

/// The whole map: nodes kept sorted by id, a symmetric neighborhood graph and
/// the competition counter since the last removal reset.
#[derive(Clone, Debug, PartialEq)]
pub struct SomModel {
    pub(crate) nodes: Vec<Node>,
    pub(crate) connections: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub(crate) nwins: u64,
    pub(crate) m: usize,
    pub(crate) params: Params,
    pub(crate) phase: Phase,
    pub(crate) next_id: u64,
    pub(crate) class_names: Vec<String>,
}

impl SomModel {
    /// An empty map. Training starts from [`SomModel::with_first_node`].
    pub fn new(m: usize, params: Params) -> Self {
        SomModel {
            nodes: Vec::new(),
            connections: BTreeMap::new(),
            nwins: 0,
            m,
            params,
            phase: Phase::Organization,
            next_id: 0,
            class_names: Vec::new(),
        }
    }

    pub fn with_first_node(params: Params, x: &[f64], class_label: Option<ClassId>) -> Self {
        let mut model = SomModel::new(x.len(), params);
        model.push_node(x.to_vec(), class_label);
        model
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn nwins(&self) -> u64 {
        self.nwins
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn set_class_names(&mut self, names: Vec<String>) {
        self.class_names = names;
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.index_of(id).map(move |i| &mut self.nodes[i])
    }

    pub(crate) fn index_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    /// Appends a fresh node and returns its id. Does not touch connections.
    pub fn push_node(&mut self, center: Vec<f64>, class_label: Option<ClassId>) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.push(Node::new(id, center, class_label));
        id
    }

    /// Appends an already built node, assigning it the next id.
    pub(crate) fn push_built(&mut self, mut node: Node) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        node.id = id;
        self.nodes.push(node);
        id
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.connections
            .get(&id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn are_connected(&self, a: NodeId, b: NodeId) -> bool {
        self.connections.get(&a).is_some_and(|s| s.contains(&b))
    }

    /// Undirected edges with `a < b`, in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.connections
            .iter()
            .flat_map(|(&a, set)| set.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    pub(crate) fn connect(&mut self, a: NodeId, b: NodeId) {
        if a == b {
            return;
        }
        self.connections.entry(a).or_default().insert(b);
        self.connections.entry(b).or_default().insert(a);
    }

    fn disconnect(&mut self, a: NodeId, b: NodeId) {
        if let Some(s) = self.connections.get_mut(&a) {
            s.remove(&b);
            if s.is_empty() {
                self.connections.remove(&a);
            }
        }
        if let Some(s) = self.connections.get_mut(&b) {
            s.remove(&a);
            if s.is_empty() {
                self.connections.remove(&b);
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn activation_of(&self, id: NodeId, x: &[f64]) -> Result<f64> {
        let node = self
            .node(id)
            .ok_or_else(|| Error::Contract(format!("unknown node {id}")))?;
        activation(x, node, self.params.eps_act)
    }

    /// Most activated node; ties go to the lowest id.
    pub fn find_winner(&self, x: &[f64]) -> Result<NodeId> {
        self.check_dim(x)?;
        let eps = self.params.eps_act;
        let mut best: Option<(NodeId, f64)> = None;
        for node in &self.nodes {
            let a = activation_unchecked(x, node, eps);
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((node.id, a));
            }
        }
        best.map(|(id, _)| id).ok_or(Error::EmptyMap)
    }

    /// Most activated node other than `exclude` whose class is unset or equal
    /// to `label`.
    pub fn find_next_winner(&self, x: &[f64], label: ClassId, exclude: NodeId) -> Result<Option<NodeId>> {
        self.check_dim(x)?;
        if self.nodes.is_empty() {
            return Err(Error::EmptyMap);
        }
        let eps = self.params.eps_act;
        let mut best: Option<(NodeId, f64)> = None;
        for node in &self.nodes {
            if node.id == exclude || !class_compatible(node.class_label, Some(label)) {
                continue;
            }
            let a = activation_unchecked(x, node, eps);
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((node.id, a));
            }
        }
        Ok(best.map(|(id, _)| id))
    }

    /// Rebuilds every edge incident to `id`: connect to each other node whose
    /// relevance profile is closer than `minwd` and whose class does not
    /// conflict.
    pub fn update_connections(&mut self, id: NodeId) -> Result<()> {
        let j = self
            .index_of(id)
            .ok_or_else(|| Error::Contract(format!("unknown node {id}")))?;
        let minwd = self.params.minwd;
        let mut link = Vec::new();
        let mut unlink = Vec::new();
        for (k, other) in self.nodes.iter().enumerate() {
            if k == j {
                continue;
            }
            let me = &self.nodes[j];
            if relevance_dissimilarity(me, other) < minwd
                && class_compatible(me.class_label, other.class_label)
            {
                link.push(other.id);
            } else {
                unlink.push(other.id);
            }
        }
        for k in unlink {
            self.disconnect(id, k);
        }
        for k in link {
            self.connect(id, k);
        }
        Ok(())
    }

    pub(crate) fn rebuild_connections(&mut self) {
        self.connections.clear();
        let ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        for id in ids {
            // id is live by construction
            let _ = self.update_connections(id);
        }
    }
}
