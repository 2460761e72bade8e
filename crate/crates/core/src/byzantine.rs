//! Attack strategies for Byzantine participants: data poisoning by label
//! flipping, model poisoning variants, and adversarial think-tank voting.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataAttack {
    None,
    /// Replace every label by `mapping[label]`.
    LabelFlip { mapping: BTreeMap<usize, usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelAttack {
    None,
    /// Negate every parameter.
    SignFlip,
    /// Add seeded N(0, sigma^2) noise per coordinate.
    Gaussian { sigma: f64 },
    /// Multiply every parameter by a constant.
    Scale { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteAttack {
    Honest,
    Invert,
    AlwaysYes,
    AlwaysNo,
}

/// Which participants misbehave, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub byzantine_ids: BTreeSet<usize>,
    pub data_attack: DataAttack,
    pub model_attack: ModelAttack,
    pub vote_attack: VoteAttack,
}

impl AttackConfig {
    /// No Byzantine participants at all.
    pub fn benign() -> Self {
        Self {
            byzantine_ids: BTreeSet::new(),
            data_attack: DataAttack::None,
            model_attack: ModelAttack::None,
            vote_attack: VoteAttack::Honest,
        }
    }

    pub fn is_byzantine(&self, participant: usize) -> bool {
        self.byzantine_ids.contains(&participant)
    }

    pub fn validate(&self, n_participants: usize, n_classes: usize) -> Result<()> {
        if let Some(&id) = self.byzantine_ids.iter().find(|&&id| id >= n_participants) {
            return Err(Error::invalid(format!(
                "byzantine id {id} out of range for {n_participants} participants"
            )));
        }
        if let DataAttack::LabelFlip { mapping } = &self.data_attack {
            if let Some((&from, &to)) = mapping
                .iter()
                .find(|(&from, &to)| from >= n_classes || to >= n_classes)
            {
                return Err(Error::invalid(format!(
                    "label flip {from} -> {to} out of range for {n_classes} classes"
                )));
            }
            if mapping.iter().all(|(from, to)| from == to) {
                return Err(Error::invalid(
                    "label flip mapping must move at least one label",
                ));
            }
        }
        if let ModelAttack::Gaussian { sigma } = self.model_attack {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::invalid("gaussian attack sigma must be finite and >= 0"));
            }
        }
        if let ModelAttack::Scale { factor } = self.model_attack {
            if !factor.is_finite() {
                return Err(Error::invalid("scale attack factor must be finite"));
            }
        }
        Ok(())
    }
}

/// The derangement `c -> (c + 1) mod n_classes`, the default poisoning map.
pub fn shift_mapping(n_classes: usize) -> BTreeMap<usize, usize> {
    (0..n_classes).map(|c| (c, (c + 1) % n_classes)).collect()
}

/// Rewrite labels through the mapping; features are untouched.
pub fn apply_label_flip(data: &Dataset, mapping: &BTreeMap<usize, usize>) -> Result<Dataset> {
    let labels = data
        .labels()
        .iter()
        .map(|&l| mapping.get(&l).copied().ok_or(Error::UnmappedLabel(l)))
        .collect::<Result<Vec<_>>>()?;
    data.with_labels(labels)
}

/// Corrupt a shared model before it reaches the aggregator.
pub fn poison_model(model: &ModelParams, attack: ModelAttack, seed: u64) -> Result<ModelParams> {
    match attack {
        ModelAttack::None => Ok(model.clone()),
        ModelAttack::SignFlip => ModelParams::new(
            model.values().iter().map(|v| -v).collect(),
            model.shape_id().to_string(),
        ),
        ModelAttack::Scale { factor } => ModelParams::new(
            model.values().iter().map(|v| factor * v).collect(),
            model.shape_id().to_string(),
        ),
        ModelAttack::Gaussian { sigma } => {
            if sigma == 0.0 {
                return Ok(model.clone());
            }
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::invalid(format!("gaussian attack: {e}")))?;
            let mut rng = seeding::rng(seed);
            ModelParams::new(
                model
                    .values()
                    .iter()
                    .map(|v| v + normal.sample(&mut rng))
                    .collect(),
                model.shape_id().to_string(),
            )
        }
    }
}

/// Transform an honest vote through the voter's strategy.
pub fn adversarial_vote(honest_vote: bool, strategy: VoteAttack) -> bool {
    match strategy {
        VoteAttack::Honest => honest_vote,
        VoteAttack::Invert => !honest_vote,
        VoteAttack::AlwaysYes => true,
        VoteAttack::AlwaysNo => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;

    #[test]
    fn identity_mapping_is_identity() {
        let data = synth_blobs(3, 4, 5, 0.3, 1).unwrap();
        let mapping: BTreeMap<usize, usize> = (0..3).map(|c| (c, c)).collect();
        let out = apply_label_flip(&data, &mapping).unwrap();
        assert_eq!(out, data);
    }

    #[test]
    fn shift_mapping_is_a_derangement() {
        let mapping = shift_mapping(10);
        for (&from, &to) in &mapping {
            assert_ne!(from, to);
        }
        let data = synth_blobs(10, 4, 3, 0.3, 2).unwrap();
        let out = apply_label_flip(&data, &mapping).unwrap();
        for (a, b) in out.labels().iter().zip(data.labels()) {
            assert_ne!(a, b, "derangement must change every label");
        }
        // Features are untouched, bit for bit.
        assert_eq!(out.features(), data.features());
        assert_eq!(out.len(), data.len());
    }

    #[test]
    fn single_class_flip() {
        let data = synth_blobs(1, 3, 4, 0.2, 3).unwrap();
        // Class universe of 2 with all samples in class 0, flipped to 1.
        let wide = Dataset::new(data.features().clone(), vec![0; 4], 2).unwrap();
        let mut mapping = BTreeMap::new();
        mapping.insert(0usize, 1usize);
        let out = apply_label_flip(&wide, &mapping).unwrap();
        assert!(out.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn unmapped_label_errors() {
        let data = synth_blobs(3, 4, 2, 0.3, 4).unwrap();
        let mut mapping = BTreeMap::new();
        mapping.insert(0usize, 1usize);
        assert!(matches!(
            apply_label_flip(&data, &mapping),
            Err(Error::UnmappedLabel(_))
        ));
    }

    #[test]
    fn sign_flip_is_an_involution() {
        let model = ModelParams::new(vec![1.5, -2.0, 0.0], "t").unwrap();
        let once = poison_model(&model, ModelAttack::SignFlip, 0).unwrap();
        let twice = poison_model(&once, ModelAttack::SignFlip, 0).unwrap();
        assert_eq!(twice.values(), model.values());
    }

    #[test]
    fn neutral_poisonings_are_identities() {
        let model = ModelParams::new(vec![1.5, -2.0, 3.25], "t").unwrap();
        let scaled = poison_model(&model, ModelAttack::Scale { factor: 1.0 }, 9).unwrap();
        assert_eq!(scaled.values(), model.values());
        let noiseless = poison_model(&model, ModelAttack::Gaussian { sigma: 0.0 }, 9).unwrap();
        assert_eq!(noiseless.values(), model.values());
        let none = poison_model(&model, ModelAttack::None, 9).unwrap();
        assert_eq!(none.values(), model.values());
    }

    #[test]
    fn gaussian_poisoning_is_seed_deterministic() {
        let model = ModelParams::new(vec![0.0; 64], "t").unwrap();
        let a = poison_model(&model, ModelAttack::Gaussian { sigma: 0.5 }, 11).unwrap();
        let b = poison_model(&model, ModelAttack::Gaussian { sigma: 0.5 }, 11).unwrap();
        let c = poison_model(&model, ModelAttack::Gaussian { sigma: 0.5 }, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn vote_strategies() {
        assert!(!adversarial_vote(true, VoteAttack::Invert));
        assert!(adversarial_vote(false, VoteAttack::AlwaysYes));
        assert!(!adversarial_vote(true, VoteAttack::AlwaysNo));
        assert!(adversarial_vote(true, VoteAttack::Honest));
        assert!(!adversarial_vote(false, VoteAttack::Honest));
    }

    #[test]
    fn config_validation() {
        let mut cfg = AttackConfig::benign();
        cfg.byzantine_ids.insert(4);
        assert!(cfg.validate(5, 10).is_ok());
        assert!(cfg.validate(4, 10).is_err());
        cfg.byzantine_ids.clear();
        cfg.data_attack = DataAttack::LabelFlip {
            mapping: (0..3).map(|c| (c, c)).collect(),
        };
        assert!(cfg.validate(5, 3).is_err(), "identity mapping must be rejected");
    }
}
