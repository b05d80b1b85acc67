//! Federated averaging across roadside-unit agents.
//!
//! The aggregate of a tensor element is the sample-weighted mean of the
//! contributors' elements, folded as a running mean in ascending value
//! order. The result is therefore independent of argument order and agent
//! numbering, identical inputs reproduce themselves bit for bit, and every
//! element stays inside the contributors' range.

use serde::{Deserialize, Serialize};

use crate::error::{PalcasError, Result};
use crate::nn::NamedTensor;
use crate::pdqn::{ModelWeights, PdqnAgent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FederationMode {
    /// One agent per cluster, weights averaged every round.
    Fedavg,
    /// A single agent controls every cluster.
    Centralized,
    /// One agent per cluster, never averaged.
    Isolated,
}

impl FederationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FederationMode::Fedavg => "fedavg",
            FederationMode::Centralized => "centralized",
            FederationMode::Isolated => "isolated",
        }
    }

    pub fn agent_count(self, clusters: usize) -> usize {
        match self {
            FederationMode::Centralized => 1,
            FederationMode::Fedavg | FederationMode::Isolated => clusters,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub agent_id: usize,
    pub weights: ModelWeights,
    /// Transitions the agent collected this round.
    pub samples: u64,
}

pub fn aggregate(contributions: &[Contribution]) -> Result<ModelWeights> {
    let mut order: Vec<&Contribution> = contributions.iter().collect();
    order.sort_by_key(|c| c.agent_id);
    let Some(first) = order.first() else {
        return Err(PalcasError::Aggregation("no contributions".into()));
    };
    for c in &order {
        check_compatible(&first.weights, c)?;
    }
    let weighted: Vec<&Contribution> = order.iter().copied().filter(|c| c.samples > 0).collect();
    if weighted.is_empty() {
        return Err(PalcasError::Aggregation("total sample count is zero".into()));
    }

    let mut tensors = first.weights.tensors.clone();
    let mut pairs: Vec<(f64, u64)> = Vec::with_capacity(weighted.len());
    for (k, acc) in tensors.iter_mut().enumerate() {
        for (i, a) in acc.data.iter_mut().enumerate() {
            pairs.clear();
            pairs.extend(weighted.iter().map(|c| (c.weights.tensors[k].data[i], c.samples)));
            *a = weighted_mean(&mut pairs);
        }
    }
    Ok(ModelWeights { signature: first.weights.signature.clone(), tensors })
}

/// Sample-weighted mean of `(value, samples)` pairs as a running mean over
/// the pairs in value order, so the result does not depend on how agents
/// are numbered. Clamped to the values' range, which rounding could
/// otherwise leave by an ulp.
fn weighted_mean(pairs: &mut [(f64, u64)]) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (lo, hi) = (pairs[0].0, pairs[pairs.len() - 1].0);
    let mut mean = 0.0;
    let mut total = 0.0;
    for &(x, n) in pairs.iter() {
        total += n as f64;
        mean += n as f64 / total * (x - mean);
    }
    mean.clamp(lo, hi)
}

fn check_compatible(reference: &ModelWeights, c: &Contribution) -> Result<()> {
    let w = &c.weights;
    let same_layout = w.tensors.len() == reference.tensors.len()
        && w
            .tensors
            .iter()
            .zip(&reference.tensors)
            .all(|(a, b): (&NamedTensor, &NamedTensor)| a.name == b.name && a.shape == b.shape);
    if w.signature != reference.signature || !same_layout {
        return Err(PalcasError::Aggregation(format!(
            "agent {} has signature {:?}, expected {:?}",
            c.agent_id, w.signature, reference.signature
        )));
    }
    Ok(())
}

/// Loads `global` into every agent and returns each agent's checksum after
/// the load.
pub fn broadcast(agents: &mut [PdqnAgent], global: &ModelWeights) -> Result<Vec<u64>> {
    agents
        .iter_mut()
        .map(|a| {
            a.import_weights(global)?;
            Ok(a.export_weights().checksum())
        })
        .collect()
}

/// One agent's line in the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub agent_id: usize,
    pub n_k: u64,
    pub mean_loss: f64,
    pub epsilon: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub rows: Vec<RoundRow>,
    /// Checksum of the aggregated weights, when aggregation ran.
    pub global_checksum: Option<u64>,
    /// Per-agent checksums after the round.
    pub agent_checksums: Vec<u64>,
    /// Environment ticks the round took.
    pub ticks: u64,
    pub validation: Option<Validation>,
}

/// Greedy validation of the models at the end of a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub dsr: Option<f64>,
    pub collision_rate: Option<f64>,
    /// Environment ticks the validation episodes took.
    pub ticks: u64,
    /// Whether this round's models became the checkpoint.
    pub selected: bool,
}

impl Validation {
    /// Higher DSR first, then lower collision rate; undefined rates count
    /// as 0.
    pub fn beats(&self, other: &Validation) -> bool {
        let key = |v: &Validation| (v.dsr.unwrap_or(0.0), -v.collision_rate.unwrap_or(0.0));
        key(self) >= key(other)
    }
}

impl RoundReport {
    pub fn total_samples(&self) -> u64 {
        self.rows.iter().map(|r| r.n_k).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(values: &[f64]) -> ModelWeights {
        ModelWeights {
            signature: "s".into(),
            tensors: vec![NamedTensor { name: "t".into(), shape: vec![values.len()], data: values.to_vec() }],
        }
    }

    fn contrib(agent_id: usize, values: &[f64], samples: u64) -> Contribution {
        Contribution { agent_id, weights: weights(values), samples }
    }

    #[test]
    fn weighted_mean_case() {
        let out = aggregate(&[contrib(0, &[0.0, 0.0], 1), contrib(1, &[4.0, 4.0], 3)]).unwrap();
        assert_eq!(out.tensors[0].data, vec![3.0, 3.0]);
    }

    #[test]
    fn single_contribution_is_unchanged() {
        let c = contrib(2, &[0.1, -7.25, 1e-300], 9);
        assert_eq!(aggregate(&[c.clone()]).unwrap(), c.weights);
    }

    #[test]
    fn errors() {
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[contrib(0, &[1.0], 0), contrib(1, &[2.0], 0)]).is_err());
        let mut odd = contrib(5, &[1.0], 1);
        odd.weights.signature = "other".into();
        let err = aggregate(&[contrib(0, &[1.0], 1), odd]).unwrap_err();
        assert!(err.to_string().contains("agent 5"));
    }
}
