//! Training state machine: per-pattern unsupervised and supervised steps,
//! periodic removal, the organization and convergence phases, and inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::som::{acceptance, ClassId, NodeId, Params, Phase, SomModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// A winner (and its neighbors) moved toward the pattern.
    UpdatedWinner,
    /// A fresh node was inserted at the pattern.
    CreatedNode,
    /// The first winner was cloned under the pattern's class.
    DuplicatedNode,
    /// Only the distance statistics and relevances of one node changed.
    RelevanceOnly,
}

/// What a single training step did. `winner` is the node the step acted on
/// (or the first winner, for insertions).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStepOutcome {
    pub kind: StepKind,
    pub winner: NodeId,
    pub created: Option<NodeId>,
}

impl TrainStepOutcome {
    fn of(kind: StepKind, winner: NodeId) -> Self {
        TrainStepOutcome {
            kind,
            winner,
            created: None,
        }
    }

    fn created(kind: StepKind, winner: NodeId, created: NodeId) -> Self {
        TrainStepOutcome {
            kind,
            winner,
            created: Some(created),
        }
    }
}

impl SomModel {
    fn relevance_only(&mut self, id: NodeId, x: &[f64]) -> Result<()> {
        let (beta, s) = (self.params.beta, self.params.s);
        self.node_mut(id)
            .ok_or_else(|| Error::Contract(format!("unknown node {id}")))?
            .update_relevances(x, beta, s)
    }

    fn update_with_neighbors(&mut self, id: NodeId, x: &[f64]) -> Result<()> {
        let Params { beta, s, e_b, e_n, .. } = self.params;
        self.node_mut(id)
            .ok_or_else(|| Error::Contract(format!("unknown node {id}")))?
            .update(x, e_b, beta, s)?;
        for n in self.neighbors(id) {
            if let Some(node) = self.node_mut(n) {
                node.update(x, e_n, beta, s)?;
            }
        }
        Ok(())
    }

    fn accepts(&self, id: NodeId, x: &[f64]) -> Result<bool> {
        let node = self
            .node(id)
            .ok_or_else(|| Error::Contract(format!("unknown node {id}")))?;
        acceptance(x, node, self.params.var_floor)
    }

    fn can_grow(&self) -> bool {
        self.phase.allows_insertion() && self.nodes.len() < self.params.n_max
    }

    fn add_wins(&mut self, id: NodeId) {
        if let Some(n) = self.node_mut(id) {
            n.wins += 1.0;
        }
    }

    fn insert_at(&mut self, x: &[f64], class_label: Option<ClassId>) -> Result<NodeId> {
        let id = self.push_node(x.to_vec(), class_label);
        let wins = self.params.lp * self.nwins as f64;
        if let Some(n) = self.node_mut(id) {
            n.wins = wins;
        }
        self.update_connections(id)?;
        Ok(id)
    }

    fn duplicate(&mut self, source: NodeId, class_label: ClassId) -> Result<NodeId> {
        let mut copy = self
            .node(source)
            .ok_or_else(|| Error::Contract(format!("unknown node {source}")))?
            .clone();
        copy.t = 0;
        copy.class_label = Some(class_label);
        copy.wins = self.params.lp * self.nwins as f64;
        let id = self.push_built(copy);
        self.update_connections(id)?;
        Ok(id)
    }

    fn check_trainable(&self) -> Result<()> {
        if self.phase == Phase::Inference {
            return Err(Error::Contract("model is frozen for inference".into()));
        }
        Ok(())
    }

    /// One competition for an unlabeled pattern.
    pub fn unsupervised_step(&mut self, x: &[f64]) -> Result<TrainStepOutcome> {
        self.check_trainable()?;
        let s1 = self.find_winner(x)?;
        let accepted = self.accepts(s1, x)?;
        let not_full = self.nodes.len() < self.params.n_max;

        if accepted && not_full {
            self.update_with_neighbors(s1, x)?;
            self.add_wins(s1);
            Ok(TrainStepOutcome::of(StepKind::UpdatedWinner, s1))
        } else if !accepted && self.can_grow() {
            let j = self.insert_at(x, None)?;
            self.relevance_only(s1, x)?;
            Ok(TrainStepOutcome::created(StepKind::CreatedNode, s1, j))
        } else {
            self.relevance_only(s1, x)?;
            Ok(TrainStepOutcome::of(StepKind::RelevanceOnly, s1))
        }
    }

    /// One competition for a labeled pattern.
    pub fn supervised_step(&mut self, x: &[f64], label: ClassId) -> Result<TrainStepOutcome> {
        self.check_trainable()?;
        let s1 = self.find_winner(x)?;
        let s1_class = self.node(s1).and_then(|n| n.class_label);

        if s1_class.is_none() || s1_class == Some(label) {
            let accepted = self.accepts(s1, x)?;
            if !accepted && self.can_grow() {
                let j = self.insert_at(x, Some(label))?;
                self.relevance_only(s1, x)?;
                Ok(TrainStepOutcome::created(StepKind::CreatedNode, s1, j))
            } else if accepted {
                self.update_with_neighbors(s1, x)?;
                if let Some(n) = self.node_mut(s1) {
                    n.class_label = Some(label);
                }
                self.update_connections(s1)?;
                self.add_wins(s1);
                Ok(TrainStepOutcome::of(StepKind::UpdatedWinner, s1))
            } else {
                self.relevance_only(s1, x)?;
                Ok(TrainStepOutcome::of(StepKind::RelevanceOnly, s1))
            }
        } else if let Some(s2) = self.find_next_winner(x, label, s1)? {
            let outcome = if self.accepts(s2, x)? && self.nodes.len() < self.params.n_max {
                self.update_with_neighbors(s2, x)?;
                if let Some(n) = self.node_mut(s2) {
                    n.class_label = Some(label);
                }
                self.update_connections(s2)?;
                TrainStepOutcome::of(StepKind::UpdatedWinner, s2)
            } else {
                self.relevance_only(s2, x)?;
                TrainStepOutcome::of(StepKind::RelevanceOnly, s2)
            };
            self.add_wins(s2);
            Ok(outcome)
        } else if self.can_grow() {
            let j = self.duplicate(s1, label)?;
            Ok(TrainStepOutcome::created(StepKind::DuplicatedNode, s1, j))
        } else {
            self.relevance_only(s1, x)?;
            Ok(TrainStepOutcome::of(StepKind::RelevanceOnly, s1))
        }
    }

    /// Drops nodes that won less than `lp * age_wins` competitions since the
    /// last reset (the most winning node always survives), rebuilds the
    /// neighborhood graph and zeroes all win counters.
    pub fn removal_reset(&mut self) {
        let threshold = self.params.lp * self.params.age_wins as f64;
        let keep = self
            .nodes
            .iter()
            .fold(None::<(NodeId, f64)>, |best, n| match best {
                Some((_, w)) if n.wins <= w => best,
                _ => Some((n.id, n.wins)),
            })
            .map(|(id, _)| id);
        self.nodes.retain(|n| n.wins >= threshold || Some(n.id) == keep);
        self.rebuild_connections();
        for n in &mut self.nodes {
            n.wins = 0.0;
        }
        self.nwins = 0;
    }

    /// Presents one pattern, dispatching on label visibility, then advances
    /// the competition counter and resets when it reaches `age_wins`.
    pub fn present(&mut self, x: &[f64], label: Option<ClassId>) -> Result<TrainStepOutcome> {
        let outcome = match label {
            Some(c) => self.supervised_step(x, c)?,
            None => self.unsupervised_step(x)?,
        };
        self.nwins += 1;
        if self.nwins >= self.params.age_wins {
            self.removal_reset();
        }
        Ok(outcome)
    }

    /// Winning node for `x`. Never rejects.
    pub fn assign_cluster(&self, x: &[f64]) -> Result<NodeId> {
        self.find_winner(x)
    }

    /// Class of the winner, or of the most activated labeled node when the
    /// winner has none. `None` when no node carries a class.
    pub fn predict_class(&self, x: &[f64]) -> Result<Option<ClassId>> {
        let winner = self.find_winner(x)?;
        if let Some(c) = self.node(winner).and_then(|n| n.class_label) {
            return Ok(Some(c));
        }
        let eps = self.params.eps_act;
        let mut best: Option<(ClassId, f64)> = None;
        for node in &self.nodes {
            let Some(c) = node.class_label else { continue };
            let a = crate::som::activation(x, node, eps)?;
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((c, a));
            }
        }
        Ok(best.map(|(c, _)| c))
    }
}

/// Per-step observer used by [`fit_with`].
pub trait StepObserver {
    fn on_step(&mut self, phase: Phase, outcome: &TrainStepOutcome, model: &SomModel);
}

impl StepObserver for () {
    fn on_step(&mut self, _: Phase, _: &TrainStepOutcome, _: &SomModel) {}
}

impl<F: FnMut(Phase, &TrainStepOutcome, &SomModel)> StepObserver for F {
    fn on_step(&mut self, phase: Phase, outcome: &TrainStepOutcome, model: &SomModel) {
        self(phase, outcome, model)
    }
}

/// Trains a map on `data`. Deterministic for a fixed seed.
pub fn fit(data: &Dataset, params: &Params, seed: u64) -> Result<SomModel> {
    fit_with(data, params, seed, &mut ())
}

/// [`fit`] with a callback after every step.
///
/// Organization runs `epochs` shuffled passes over the data. Convergence then
/// runs `age_wins` more presentations (one pass when that exceeds the
/// organization budget) with insertion and duplication disabled.
pub fn fit_with(
    data: &Dataset,
    params: &Params,
    seed: u64,
    observer: &mut dyn StepObserver,
) -> Result<SomModel> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let first = order[0];
    let mut model = SomModel::with_first_node(params.clone(), data.row(first), data.visible_label(first));
    model.set_class_names(data.class_names().to_vec());

    for epoch in 0..params.epochs {
        if epoch > 0 {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let outcome = model.present(data.row(i), data.visible_label(i))?;
            observer.on_step(Phase::Organization, &outcome, &model);
        }
    }

    model.set_phase(Phase::Convergence);
    let budget = params.epochs as u64 * n as u64;
    let steps = if params.age_wins <= budget {
        params.age_wins
    } else {
        n as u64
    };
    let mut done = 0;
    while done < steps {
        order.shuffle(&mut rng);
        for &i in order.iter().take((steps - done).min(n as u64) as usize) {
            let outcome = model.present(data.row(i), data.visible_label(i))?;
            observer.on_step(Phase::Convergence, &outcome, &model);
            done += 1;
        }
    }

    model.set_phase(Phase::Inference);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::som::Node;

    fn params() -> Params {
        Params {
            lp: 0.002,
            beta: 0.9,
            age_wins: 1000,
            e_b: 0.1,
            e_n: 0.01,
            s: 0.05,
            minwd: 0.25,
            epochs: 1,
            n_max: 10,
            eps_act: 1e-7,
            var_floor: 1e-6,
        }
    }

    /// A node with a tight trained field around `center`.
    fn tight(model: &mut SomModel, id: NodeId) {
        let n = model.node_mut(id).unwrap();
        n.t = 5;
        n.delta = vec![0.01; n.dim()];
        n.delta_hat = vec![0.01; n.dim()];
    }

    #[test]
    fn newborn_winner_is_updated() {
        let mut m = SomModel::with_first_node(params(), &[0.2, 0.2], None);
        let out = m.unsupervised_step(&[0.8, 0.6]).unwrap();
        assert_eq!(out.kind, StepKind::UpdatedWinner);
        let n = m.node(NodeId(0)).unwrap();
        assert!((n.center[0] - 0.26).abs() < 1e-12);
        assert!((n.center[1] - 0.24).abs() < 1e-12);
        assert_eq!(n.wins, 1.0);
        assert_eq!(n.t, 1);
    }

    #[test]
    fn far_pattern_creates_node_and_updates_winner_stats() {
        let mut m = SomModel::with_first_node(params(), &[0.2, 0.2], None);
        tight(&mut m, NodeId(0));
        m.nwins = 50;
        let out = m.unsupervised_step(&[0.9, 0.9]).unwrap();
        assert_eq!(out.kind, StepKind::CreatedNode);
        assert_eq!(out.winner, NodeId(0));
        let j = out.created.unwrap();
        let new = m.node(j).unwrap();
        assert_eq!(new.center, vec![0.9, 0.9]);
        assert_eq!(new.t, 0);
        assert_eq!(new.class_label, None);
        assert!((new.wins - 0.1).abs() < 1e-12);
        let s1 = m.node(NodeId(0)).unwrap();
        assert_eq!(s1.t, 6);
        assert_eq!(s1.center, vec![0.2, 0.2]);
    }

    #[test]
    fn full_map_only_updates_relevances() {
        let mut p = params();
        p.n_max = 1;
        let mut m = SomModel::with_first_node(p, &[0.2, 0.2], None);
        tight(&mut m, NodeId(0));
        let out = m.unsupervised_step(&[0.9, 0.9]).unwrap();
        assert_eq!(out.kind, StepKind::RelevanceOnly);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn unlabeled_winner_adopts_class() {
        let mut m = SomModel::with_first_node(params(), &[0.2, 0.2], None);
        let out = m.supervised_step(&[0.3, 0.3], 1).unwrap();
        assert_eq!(out.kind, StepKind::UpdatedWinner);
        let n = m.node(NodeId(0)).unwrap();
        assert_eq!(n.class_label, Some(1));
        assert!((n.center[0] - 0.21).abs() < 1e-12);
    }

    #[test]
    fn conflicting_sole_winner_is_duplicated() {
        let mut m = SomModel::with_first_node(params(), &[0.2, 0.4], Some(1));
        tight(&mut m, NodeId(0));
        let out = m.supervised_step(&[0.25, 0.4], 0).unwrap();
        assert_eq!(out.kind, StepKind::DuplicatedNode);
        let j = out.created.unwrap();
        let (src, dup) = (m.node(NodeId(0)).unwrap(), m.node(j).unwrap());
        assert_eq!(dup.center, src.center);
        assert_eq!(dup.relevance, src.relevance);
        assert_eq!(dup.delta, src.delta);
        assert_eq!(dup.delta_hat, src.delta_hat);
        assert_eq!(dup.t, 0);
        assert_eq!(dup.class_label, Some(0));
        // the source is left untouched
        assert_eq!(src.t, 5);
    }

    #[test]
    fn second_winner_takes_over() {
        let mut m = SomModel::with_first_node(params(), &[0.2, 0.2], Some(1));
        let s2 = m.push_node(vec![0.5, 0.5], None);
        let out = m.supervised_step(&[0.25, 0.25], 0).unwrap();
        assert_eq!(out.kind, StepKind::UpdatedWinner);
        assert_eq!(out.winner, s2);
        let n = m.node(s2).unwrap();
        assert_eq!(n.wins, 1.0);
        assert_eq!(n.class_label, Some(0));
        assert!((n.center[0] - 0.475).abs() < 1e-12);
    }

    #[test]
    fn removal_keeps_threshold_and_best() {
        let mut p = params();
        p.age_wins = 1000;
        p.lp = 0.002;
        let mut m = SomModel::with_first_node(p, &[0.1, 0.1], None);
        let b = m.push_node(vec![0.5, 0.5], None);
        let c = m.push_node(vec![0.9, 0.9], None);
        m.node_mut(NodeId(0)).unwrap().wins = 2.0;
        m.node_mut(b).unwrap().wins = 1.999;
        m.node_mut(c).unwrap().wins = 7.0;
        m.nwins = 1000;
        m.removal_reset();
        let ids: Vec<NodeId> = m.nodes().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![NodeId(0), c]);
        assert!(m.nodes().iter().all(|n| n.wins == 0.0));
        assert_eq!(m.nwins(), 0);

        m.node_mut(NodeId(0)).unwrap().wins = 0.5;
        m.node_mut(c).unwrap().wins = 0.5;
        m.removal_reset();
        assert_eq!(m.len(), 1);
        assert_eq!(m.nodes()[0].id, NodeId(0));
    }

    #[test]
    fn predict_class_fallbacks() {
        let mut m = SomModel::with_first_node(params(), &[0.1, 0.1], None);
        assert_eq!(m.predict_class(&[0.1, 0.1]).unwrap(), None);
        let b = m.push_node(vec![0.5, 0.5], Some(2));
        m.push_node(vec![0.9, 0.9], Some(3));
        assert_eq!(m.predict_class(&[0.1, 0.1]).unwrap(), Some(2));
        assert_eq!(m.predict_class(&[0.85, 0.85]).unwrap(), Some(3));
        assert_eq!(m.assign_cluster(&[0.5, 0.5]).unwrap(), b);
    }

    #[test]
    fn inference_phase_refuses_training() {
        let mut m = SomModel::with_first_node(params(), &[0.1, 0.1], None);
        m.set_phase(Phase::Inference);
        assert!(m.unsupervised_step(&[0.1, 0.1]).is_err());
    }

    #[test]
    fn single_point_fit() {
        let d = Dataset::from_rows(vec![vec![0.3, 0.7]], vec![None], vec![]).unwrap();
        let mut p = params();
        p.age_wins = 1;
        let m = fit(&d, &p, 5).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.nodes()[0].center, vec![0.3, 0.7]);
        assert_eq!(m.phase(), Phase::Inference);
    }

    #[test]
    fn node_copy_is_independent() {
        let n = Node::new(NodeId(3), vec![0.0], None);
        let mut m = SomModel::new(1, params());
        let id = m.push_built(n);
        assert_eq!(id, NodeId(0));
    }
}
