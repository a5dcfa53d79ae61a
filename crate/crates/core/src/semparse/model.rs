//! Log-linear ranking model over derivations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lang::GrammarRule;

pub const DEFAULT_BEAM: usize = 50;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

pub const F_CORE: &str = "core-rule-count";
pub const F_INDUCED: &str = "induced-rule-count";
pub const F_AUTHOR_SELF: &str = "rule-author-is-user-count";
pub const F_AUTHOR_OTHER: &str = "rule-author-is-other-count";
pub const F_DEPTH: &str = "tree-depth";
pub const F_COVERAGE: &str = "span-coverage-fraction";

pub fn rule_feature(id: &str) -> String {
    format!("rule:{id}")
}

/// Sparse feature counts.
pub type FeatureVector = BTreeMap<String, f64>;

/// Features contributed by a single rule application for user `user`.
pub fn local_features(rule: &GrammarRule, user: &str) -> Vec<(String, f64)> {
    let mut out = Vec::with_capacity(3);
    if rule.origin.is_core() {
        out.push((F_CORE.to_string(), 1.0));
    } else {
        out.push((F_INDUCED.to_string(), 1.0));
        if rule.author == user {
            out.push((F_AUTHOR_SELF.to_string(), 1.0));
        } else {
            out.push((F_AUTHOR_OTHER.to_string(), 1.0));
        }
    }
    out.push((rule_feature(&rule.id), 1.0));
    out
}

/// Parameters θ of the ranking model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: BTreeMap<String, f64>,
    pub learning_rate: f64,
    pub beam_size: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            weights: BTreeMap::new(),
            learning_rate: DEFAULT_LEARNING_RATE,
            beam_size: DEFAULT_BEAM,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum UpdateError {
    #[error("chosen index {chosen} out of range for {len} candidates")]
    IndexOutOfRange { chosen: usize, len: usize },
}

impl ModelParams {
    pub fn weight(&self, feature: &str) -> f64 {
        self.weights.get(feature).copied().unwrap_or(0.0)
    }

    pub fn dot(&self, phi: &FeatureVector) -> f64 {
        phi.iter().map(|(k, v)| self.weight(k) * v).sum()
    }

    /// Weights only, as persisted in `params.json`.
    pub fn weights_json(&self) -> String {
        serde_json::to_string_pretty(&self.weights).expect("weights serialize")
    }

    pub fn from_weights_json(s: &str) -> serde_json::Result<ModelParams> {
        Ok(ModelParams {
            weights: serde_json::from_str(s)?,
            ..ModelParams::default()
        })
    }

    /// One gradient step on the log-likelihood of `chosen` under a softmax over
    /// `candidates`: θ += η (φ(chosen) − E_p[φ]).
    pub fn update(&mut self, candidates: &[FeatureVector], chosen: usize) -> Result<(), UpdateError> {
        if chosen >= candidates.len() {
            return Err(UpdateError::IndexOutOfRange {
                chosen,
                len: candidates.len(),
            });
        }
        let scores: Vec<f64> = candidates.iter().map(|phi| self.dot(phi)).collect();
        let probs = softmax(&scores);
        let mut grad: FeatureVector = candidates[chosen].clone();
        for (phi, p) in candidates.iter().zip(&probs) {
            for (k, v) in phi {
                *grad.entry(k.clone()).or_insert(0.0) -= p * v;
            }
        }
        let eta = self.learning_rate;
        for (k, g) in grad {
            let delta = eta * g;
            if delta != 0.0 && delta.is_finite() {
                *self.weights.entry(k).or_insert(0.0) += delta;
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax; empty input gives an empty output.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![1.0 / scores.len().max(1) as f64; scores.len()];
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(pairs: &[(&str, f64)]) -> FeatureVector {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn single_candidate_leaves_theta_unchanged() {
        let mut m = ModelParams::default();
        m.weights.insert("a".into(), 0.3);
        let before = m.clone();
        m.update(&[fv(&[("a", 2.0), ("b", 1.0)])], 0).unwrap();
        for (k, v) in &m.weights {
            assert!((v - before.weight(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut m = ModelParams {
            learning_rate: 0.0,
            ..ModelParams::default()
        };
        m.update(&[fv(&[("a", 1.0)]), fv(&[("b", 1.0)])], 1).unwrap();
        assert!(m.weights.is_empty());
    }

    #[test]
    fn out_of_range() {
        let mut m = ModelParams::default();
        assert_eq!(
            m.update(&[fv(&[])], 1),
            Err(UpdateError::IndexOutOfRange { chosen: 1, len: 1 })
        );
    }

    #[test]
    fn gradient_matches_finite_difference() {
        // d/dθ log p(chosen) estimated numerically, independent of `update`.
        let cands = vec![
            fv(&[("a", 1.0), ("c", 2.0)]),
            fv(&[("b", 1.0), ("c", 1.0)]),
            fv(&[("a", 2.0)]),
        ];
        let mut m = ModelParams {
            learning_rate: 1.0,
            ..ModelParams::default()
        };
        m.weights.insert("a".into(), 0.2);
        m.weights.insert("c".into(), -0.4);
        let loglik = |m: &ModelParams| {
            let s: Vec<f64> = cands.iter().map(|p| m.dot(p)).collect();
            softmax(&s)[1].ln()
        };
        let h = 1e-6;
        let mut numeric = BTreeMap::new();
        for k in ["a", "b", "c"] {
            let mut plus = m.clone();
            *plus.weights.entry(k.into()).or_insert(0.0) += h;
            let mut minus = m.clone();
            *minus.weights.entry(k.into()).or_insert(0.0) -= h;
            numeric.insert(k, (loglik(&plus) - loglik(&minus)) / (2.0 * h));
        }
        let before = m.clone();
        m.update(&cands, 1).unwrap();
        for (k, g) in numeric {
            let step = m.weight(k) - before.weight(k);
            assert!((step - g).abs() < 1e-6, "{k}: {step} vs {g}");
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
    }
}
