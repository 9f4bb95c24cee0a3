//! Hidden Markov models with emissions attached to transitions.
//!
//! A transition `i -> j` made while emitting `y` carries two numbers: the
//! transition probability `P(i,j|y)` and the emission probability `P(y|i,j)`.
//! Their product is the joint weight `P_{i,j}(y)` the decoders work with.
//! Tables are sparse; an absent entry reads as probability zero.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Tolerance for the stochasticity identities.
pub const STOCHASTIC_TOL: f64 = 1e-12;

type Key = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    num_states: usize,
    emissions: Vec<String>,
    trans: BTreeMap<Key, f64>,
    emit: BTreeMap<Key, f64>,
    initial: Vec<f64>,
}

/// Outcome of a stochasticity check together with the worst residual seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticReport {
    pub pass: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FanoutReport {
    pub per_state: Vec<usize>,
    pub fanout: usize,
}

/// JSON document layout for HMM fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmmDocument {
    pub num_states: usize,
    pub emissions: Vec<String>,
    pub trans: Vec<(usize, usize, usize, f64)>,
    pub emit: Vec<(usize, usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("{what} probability {p} outside [0, 1]"));
    }
    Ok(())
}

impl Hmm {
    /// Builds a model from sparse `(i, j, y, p)` entries.
    ///
    /// `initial` defaults to a point mass on state 0. Entries repeated for the
    /// same key are rejected.
    pub fn new(
        num_states: usize,
        emissions: Vec<String>,
        trans: impl IntoIterator<Item = (usize, usize, usize, f64)>,
        emit: impl IntoIterator<Item = (usize, usize, usize, f64)>,
        initial: Option<Vec<f64>>,
    ) -> Result<Self> {
        if num_states == 0 {
            return domain("an HMM needs at least one state");
        }
        if emissions.is_empty() {
            return domain("the emission alphabet is empty");
        }
        let mut hmm = Hmm { num_states, emissions, trans: BTreeMap::new(), emit: BTreeMap::new(), initial: Vec::new() };
        for (i, j, y, p) in trans {
            hmm.check_key(i, j, y)?;
            check_probability(p, "transition")?;
            if hmm.trans.insert((i, j, y), p).is_some() {
                return domain(format!("duplicate transition entry ({i},{j},{y})"));
            }
        }
        for (i, j, y, p) in emit {
            hmm.check_key(i, j, y)?;
            check_probability(p, "emission")?;
            if hmm.emit.insert((i, j, y), p).is_some() {
                return domain(format!("duplicate emission entry ({i},{j},{y})"));
            }
        }
        let initial = initial.unwrap_or_else(|| {
            let mut v = vec![0.0; num_states];
            v[0] = 1.0;
            v
        });
        if initial.len() != num_states {
            return domain(format!("initial distribution has {} entries for {num_states} states", initial.len()));
        }
        for &p in &initial {
            check_probability(p, "initial")?;
        }
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return domain(format!("initial distribution sums to {total}"));
        }
        hmm.initial = initial;
        Ok(hmm)
    }

    pub fn from_document(doc: HmmDocument) -> Result<Self> {
        Hmm::new(doc.num_states, doc.emissions, doc.trans, doc.emit, doc.initial)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Hmm::from_document(serde_json::from_str(s)?)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Hmm::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> HmmDocument {
        let flatten = |m: &BTreeMap<Key, f64>| m.iter().map(|(&(i, j, y), &p)| (i, j, y, p)).collect();
        HmmDocument {
            num_states: self.num_states,
            emissions: self.emissions.clone(),
            trans: flatten(&self.trans),
            emit: flatten(&self.emit),
            initial: Some(self.initial.clone()),
        }
    }

    fn check_key(&self, i: usize, j: usize, y: usize) -> Result<()> {
        if i >= self.num_states || j >= self.num_states {
            return domain(format!("state pair ({i},{j}) out of range 0..{}", self.num_states));
        }
        if y >= self.emissions.len() {
            return domain(format!("emission {y} out of range 0..{}", self.emissions.len()));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn emissions(&self) -> &[String] {
        &self.emissions
    }

    pub fn num_emissions(&self) -> usize {
        self.emissions.len()
    }

    pub fn emission_index(&self, label: &str) -> Option<usize> {
        self.emissions.iter().position(|e| e == label)
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `P(i,j|y)`, zero when absent.
    pub fn trans(&self, i: usize, j: usize, y: usize) -> f64 {
        self.trans.get(&(i, j, y)).copied().unwrap_or(0.0)
    }

    /// `P(y|i,j)`, zero when absent.
    pub fn emit(&self, i: usize, j: usize, y: usize) -> f64 {
        self.emit.get(&(i, j, y)).copied().unwrap_or(0.0)
    }

    /// `P_{i,j}(y) = P(i,j|y) P(y|i,j)`.
    pub fn joint_prob(&self, i: usize, j: usize, y: usize) -> Result<f64> {
        self.check_key(i, j, y)?;
        Ok(self.trans(i, j, y) * self.emit(i, j, y))
    }

    /// Successors of `i` under emission `y` with nonzero joint weight, in
    /// ascending state order.
    pub fn successors(&self, i: usize, y: usize) -> Vec<(usize, f64)> {
        self.trans
            .range((i, 0, 0)..(i + 1, 0, 0))
            .filter(|(&(_, _, yy), &p)| yy == y && p > 0.0)
            .filter_map(|(&(_, j, _), &p)| {
                let w = p * self.emit(i, j, y);
                (w > 0.0).then_some((j, w))
            })
            .collect()
    }

    fn row_residual(&self, weight: impl Fn(usize, usize, usize) -> f64) -> f64 {
        let mut sums = vec![0.0; self.num_states * self.emissions.len()];
        let ny = self.emissions.len();
        for &(i, j, y) in self.trans.keys() {
            sums[i * ny + y] += weight(i, j, y);
        }
        sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Every `(i, y)` row of the transition table must sum to one.
    pub fn check_row_stochastic(&self) -> StochasticReport {
        let residual = self.row_residual(|i, j, y| self.trans(i, j, y));
        StochasticReport { pass: residual <= STOCHASTIC_TOL, residual }
    }

    /// Every `(i, y)` row of the joint weights must sum to one; only then can
    /// transition probabilities live in amplitudes rather than phases.
    pub fn check_doubly_normalized(&self) -> StochasticReport {
        let residual = self.row_residual(|i, j, y| self.trans(i, j, y) * self.emit(i, j, y));
        StochasticReport { pass: residual <= STOCHASTIC_TOL, residual }
    }

    pub fn fanout(&self) -> FanoutReport {
        let ny = self.emissions.len();
        let mut counts = vec![0usize; self.num_states * ny];
        for (&(i, _, y), &p) in &self.trans {
            if p > 0.0 {
                counts[i * ny + y] += 1;
            }
        }
        let per_state: Vec<usize> = counts.chunks(ny).map(|row| row.iter().copied().max().unwrap_or(0)).collect();
        let fanout = per_state.iter().copied().max().unwrap_or(0);
        FanoutReport { per_state, fanout }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|y| y.to_string()).collect()
    }

    /// Complete `q`-state model, uniform transitions, emission weight one.
    fn complete(q: usize) -> Hmm {
        let p = 1.0 / q as f64;
        let trans: Vec<_> = (0..q).flat_map(|i| (0..q).map(move |j| (i, j, 0, p))).collect();
        let emit: Vec<_> = (0..q).flat_map(|i| (0..q).map(move |j| (i, j, 0, 1.0))).collect();
        Hmm::new(q, labels(1), trans, emit, None).unwrap()
    }

    #[test]
    fn joint_prob_products() {
        let h = Hmm::new(
            2,
            labels(1),
            [(0, 0, 0, 1.0), (1, 0, 0, 0.5), (1, 1, 0, 0.5)],
            [(0, 0, 0, 1.0), (1, 0, 0, 0.5)],
            None,
        )
        .unwrap();
        assert_eq!(h.joint_prob(0, 0, 0).unwrap(), 1.0);
        assert_eq!(h.joint_prob(1, 0, 0).unwrap(), 0.25);
        // absent emission entry reads as zero
        assert_eq!(h.joint_prob(1, 1, 0).unwrap(), 0.0);
        assert!(h.joint_prob(2, 0, 0).is_err());
        assert!(h.joint_prob(0, 0, 1).is_err());
    }

    #[test]
    fn row_stochastic_detects_scaled_row() {
        let h = complete(3);
        let r = h.check_row_stochastic();
        assert!(r.pass && r.residual <= STOCHASTIC_TOL);

        let mut doc = h.to_document();
        for e in doc.trans.iter_mut().filter(|e| e.0 == 1) {
            e.3 *= 0.5;
        }
        let r = Hmm::from_document(doc).unwrap().check_row_stochastic();
        assert!(!r.pass);
        assert!((r.residual - 0.5).abs() < 1e-15);
    }

    #[test]
    fn doubly_normalized_with_unit_emissions() {
        assert!(complete(2).check_doubly_normalized().pass);
        assert!(complete(4).check_doubly_normalized().pass);
    }

    #[test]
    fn fanout_cases() {
        let chain = Hmm::new(
            3,
            labels(1),
            [(0, 1, 0, 1.0), (1, 2, 0, 1.0), (2, 0, 0, 1.0)],
            [(0, 1, 0, 1.0), (1, 2, 0, 1.0), (2, 0, 0, 1.0)],
            None,
        )
        .unwrap();
        assert_eq!(chain.fanout().fanout, 1);
        let full = complete(4).fanout();
        assert_eq!(full.fanout, 4);
        assert_eq!(full.per_state, vec![4; 4]);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(Hmm::new(2, labels(1), [(0, 0, 0, 1.5)], [], None).is_err());
        assert!(Hmm::new(2, labels(1), [(0, 0, 0, 0.5), (0, 0, 0, 0.5)], [], None).is_err());
        assert!(Hmm::new(2, labels(1), [], [], Some(vec![0.5, 0.4])).is_err());
        assert!(Hmm::new(2, labels(1), [], [], Some(vec![1.0])).is_err());
        assert!(Hmm::new(0, labels(1), [], [], None).is_err());
    }

    #[test]
    fn json_fixture_loads() {
        let text = r#"{"num_states": 2, "emissions": ["a", "b"],
            "trans": [[0,0,0,0.5],[0,1,0,0.5],[1,1,0,1.0],[0,0,1,1.0],[1,0,1,1.0]],
            "emit": [[0,0,0,1.0],[0,1,0,1.0],[1,1,0,1.0],[0,0,1,1.0],[1,0,1,1.0]],
            "initial": [0.25, 0.75]}"#;
        let h = Hmm::from_json_str(text).unwrap();
        assert_eq!(h.num_states(), 2);
        assert_eq!(h.emission_index("b"), Some(1));
        assert_eq!(h.initial(), &[0.25, 0.75]);
        assert!(h.check_row_stochastic().pass);
        assert_eq!(h.successors(0, 0), vec![(0, 0.5), (1, 0.5)]);
        let again = Hmm::from_document(h.to_document()).unwrap();
        assert_eq!(again, h);
    }
}
