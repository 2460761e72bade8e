//! Round-by-round experiment orchestration.
//!
//! Each round: every participant trains from the current global model on
//! its (possibly poisoned) local data, Byzantine shares are perturbed, the
//! configured aggregator combines the shares, and the new global model is
//! evaluated on the held-out test set. For the two-layer aggregator the
//! think-tank vote runs in-process: every participant scores the benchmark
//! and each candidate mixture on its own test shard and casts a ballot.
//!
//! Everything is a deterministic function of `(config, train, test)`:
//! every random choice draws from a stream named by
//! `(master_seed, purpose, round, participant)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    benchmark_model, fedavg, filter_scores, global_aggregate, hypothetical_model, multi_krum,
    select_smallest, tally_votes, FilterConfig, SelectionState, VoteBallot,
};
use crate::byzantine::{adversarial_vote, apply_label_flip, poison_model, AttackConfig, DataAttack};
use crate::data::{partition_longtail, sample_test_shards, Dataset, ShardMode, TailPlan};
use crate::error::{Error, Result};
use crate::params::{self, ModelParams};
use crate::seeding;
use crate::training::{evaluate, init_model, local_train, Architecture, EvalReport, TrainConfig};

/// Which server-side rule combines the shared models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AggregatorKind {
    Fedavg,
    MultiKrum,
    Median,
    TrimmedMean { beta: usize },
    TwoLayer,
}

impl AggregatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorKind::Fedavg => "fedavg",
            AggregatorKind::MultiKrum => "multi_krum",
            AggregatorKind::Median => "median",
            AggregatorKind::TrimmedMean { .. } => "trimmed_mean",
            AggregatorKind::TwoLayer => "two_layer",
        }
    }

    fn uses_filter(&self) -> bool {
        matches!(self, AggregatorKind::MultiKrum | AggregatorKind::TwoLayer)
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of one experiment.
///
/// `train.seed` is ignored here: local training draws its shuffle streams
/// from `(master_seed, round, participant)` so that results cannot depend
/// on evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub tail_plan: TailPlan,
    pub attack: AttackConfig,
    pub filter: FilterConfig,
    pub aggregator: AggregatorKind,
    pub rounds: usize,
    pub thinktank_mode: ShardMode,
    pub shard_size: usize,
    pub master_seed: u64,
    /// Test hook: force every ballot's vote bit. `Some(false)` reduces the
    /// two-layer rule to plain multi-Krum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_override: Option<bool>,
}

impl ExperimentConfig {
    pub fn n_participants(&self) -> usize {
        self.tail_plan.n_participants
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        self.arch.validate()?;
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be >= 1"));
        }
        if self.train.learning_rate <= 0.0 || !self.train.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.train.local_epochs == 0 {
            return Err(Error::invalid("local_epochs must be >= 1"));
        }
        self.tail_plan.validate(n_classes)?;
        self.attack.validate(self.n_participants(), n_classes)?;
        if self.aggregator.uses_filter() {
            self.filter.validate(self.n_participants())?;
        }
        if let AggregatorKind::TrimmedMean { beta } = self.aggregator {
            if 2 * beta >= self.n_participants() {
                return Err(Error::invalid(format!(
                    "trimmed_mean: 2*beta = {} must be < N = {}",
                    2 * beta,
                    self.n_participants()
                )));
            }
        }
        if self.aggregator == AggregatorKind::TwoLayer && self.shard_size == 0 {
            return Err(Error::invalid("two_layer needs shard_size >= 1"));
        }
        Ok(())
    }
}

/// One participant as the round loop sees it: its (post-attack) local data
/// and whether it misbehaves.
#[derive(Debug, Clone)]
pub struct Participant {
    pub data: Dataset,
    pub byzantine: bool,
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub n_participants: usize,
    /// Present for selective aggregators (multi_krum, two_layer).
    pub selection: Option<SelectionState>,
    /// Think-tank ballots; empty for every aggregator but two_layer.
    pub ballots: Vec<VoteBallot>,
    /// Evaluation of the new global model on the held-out test set.
    pub global_eval: EvalReport,
    /// Per-class accuracy on the held-out test set (the tail-class curve).
    pub per_class: BTreeMap<usize, f64>,
    /// Final selection indicator per Byzantine participant.
    pub byzantine_selected: BTreeMap<usize, bool>,
}

impl RoundRecord {
    pub fn n_selected(&self) -> usize {
        self.selection
            .as_ref()
            .map_or(self.n_participants, SelectionState::n_selected)
    }
}

/// Seed of participant `i`'s local-training stream in a given round.
pub fn participant_seed(round_seed: u64, participant: usize) -> u64 {
    seeding::mix_u64(seeding::mix(round_seed, "train"), participant as u64)
}

/// Seed of the model-poisoning stream for participant `i` in a round.
pub fn poison_seed(round_seed: u64, participant: usize) -> u64 {
    seeding::mix_u64(seeding::mix(round_seed, "poison"), participant as u64)
}

/// Seed of the shard-drawing stream for an experiment.
pub fn shard_seed(master_seed: u64) -> u64 {
    seeding::mix(master_seed, "shards")
}

/// Seed of the global model initialization stream.
pub fn init_seed(master_seed: u64) -> u64 {
    seeding::mix(master_seed, "init")
}

/// Seed of round `r`'s stream.
pub fn round_seed(master_seed: u64, round: usize) -> u64 {
    seeding::mix_u64(seeding::mix(master_seed, "round"), round as u64)
}

/// Run one global round; returns the new global model and its record.
pub fn run_round(
    global: &ModelParams,
    participants: &[Participant],
    shards: &[Dataset],
    held_out: &Dataset,
    cfg: &ExperimentConfig,
    round: usize,
    round_seed: u64,
) -> Result<(ModelParams, RoundRecord)> {
    let n = participants.len();

    // (a) Local training from the current global model.
    let mut shared = Vec::with_capacity(n);
    for (i, p) in participants.iter().enumerate() {
        let train_cfg = TrainConfig {
            seed: participant_seed(round_seed, i),
            ..cfg.train
        };
        let mut model = local_train(global, &p.data, &cfg.arch, &train_cfg)?;
        // (b) Model poisoning on Byzantine shares.
        if p.byzantine {
            model = poison_model(&model, cfg.attack.model_attack, poison_seed(round_seed, i))?;
        }
        shared.push(model);
    }

    // (c) Aggregation.
    let (new_global, selection, ballots) = match cfg.aggregator {
        AggregatorKind::Fedavg => {
            let counts: Vec<usize> = participants.iter().map(|p| p.data.len()).collect();
            (fedavg(&shared, &counts)?, None, Vec::new())
        }
        AggregatorKind::Median => (params::coordinate_median(&shared)?, None, Vec::new()),
        AggregatorKind::TrimmedMean { beta } => {
            (params::trimmed_mean(&shared, beta)?, None, Vec::new())
        }
        AggregatorKind::MultiKrum => {
            let scores = filter_scores(&shared, cfg.filter.k_nearest)?;
            let indicators = select_smallest(&scores, cfg.filter.m_select)?;
            let state = SelectionState { scores, indicators };
            let model = multi_krum(&shared, cfg.filter.k_nearest, cfg.filter.m_select)?;
            (model, Some(state), Vec::new())
        }
        AggregatorKind::TwoLayer => {
            let (model, state, ballots) = two_layer_round(&shared, participants, shards, cfg)?;
            (model, Some(state), ballots)
        }
    };

    // (d) Evaluate the new global model on the held-out set.
    let global_eval = evaluate(&new_global, held_out, &cfg.arch)?;
    let per_class = global_eval.per_class_accuracy.clone();
    let byzantine_selected = participants
        .iter()
        .enumerate()
        .filter(|(_, p)| p.byzantine)
        .map(|(i, _)| {
            let selected = selection.as_ref().map_or(true, |s| s.indicators[i]);
            (i, selected)
        })
        .collect();

    let record = RoundRecord {
        round,
        n_participants: n,
        selection,
        ballots,
        global_eval,
        per_class,
        byzantine_selected,
    };
    Ok((new_global, record))
}

/// Filter layer, think-tank vote, and final aggregation.
fn two_layer_round(
    shared: &[ModelParams],
    participants: &[Participant],
    shards: &[Dataset],
    cfg: &ExperimentConfig,
) -> Result<(ModelParams, SelectionState, Vec<VoteBallot>)> {
    let n = shared.len();
    if shards.len() != n {
        return Err(Error::invalid(format!(
            "two_layer needs one shard per participant ({} shards for {n})",
            shards.len()
        )));
    }
    let scores = filter_scores(shared, cfg.filter.k_nearest)?;
    let indicators = select_smallest(&scores, cfg.filter.m_select)?;
    let state = SelectionState { scores, indicators };

    let m = cfg.filter.m_select;
    let benchmark = benchmark_model(shared, &state.indicators)?;
    let candidates: Vec<usize> = state.candidates().collect();
    let hypotheticals = candidates
        .iter()
        .map(|&j| hypothetical_model(&benchmark, m, &shared[j]))
        .collect::<Result<Vec<_>>>()?;

    let mut ballots = Vec::with_capacity(n * candidates.len());
    for (voter, participant) in participants.iter().enumerate() {
        let acc_benchmark = evaluate(&benchmark, &shards[voter], &cfg.arch)?.overall_accuracy;
        for (&j, hyp) in candidates.iter().zip(&hypotheticals) {
            let acc_candidate = evaluate(hyp, &shards[voter], &cfg.arch)?.overall_accuracy;
            let mut ballot = VoteBallot::honest(voter, j, acc_benchmark, acc_candidate);
            if participant.byzantine {
                ballot.vote = adversarial_vote(ballot.vote, cfg.attack.vote_attack);
            }
            if let Some(forced) = cfg.vote_override {
                ballot.vote = forced;
            }
            ballots.push(ballot);
        }
    }

    let final_state = tally_votes(&ballots, n, &state)?;
    let global = global_aggregate(shared, &final_state.indicators)?;
    Ok((global, final_state, ballots))
}

/// Build the per-participant datasets (after any data attack) from a
/// training set and the experiment config.
pub fn build_participants(cfg: &ExperimentConfig, train: &Dataset) -> Result<Vec<Participant>> {
    let partitions = partition_longtail(train, &cfg.tail_plan)?;
    partitions
        .into_iter()
        .enumerate()
        .map(|(i, data)| {
            let byzantine = cfg.attack.is_byzantine(i);
            let data = if byzantine {
                match &cfg.attack.data_attack {
                    DataAttack::None => data,
                    DataAttack::LabelFlip { mapping } => apply_label_flip(&data, mapping)?,
                }
            } else {
                data
            };
            Ok(Participant { data, byzantine })
        })
        .collect()
}

/// Run a full experiment: partition, attack, iterate rounds, record.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<RoundRecord>> {
    cfg.validate(train.n_classes())?;
    if train.n_features() != test.n_features() || train.n_classes() != test.n_classes() {
        return Err(Error::invalid(
            "train and test sets disagree on feature width or class count",
        ));
    }

    let participants = build_participants(cfg, train)?;
    let shards = if cfg.aggregator == AggregatorKind::TwoLayer {
        let datasets: Vec<Dataset> = participants.iter().map(|p| p.data.clone()).collect();
        sample_test_shards(
            test,
            participants.len(),
            cfg.shard_size,
            cfg.thinktank_mode,
            shard_seed(cfg.master_seed),
            Some(&datasets),
        )?
    } else {
        Vec::new()
    };

    let mut global = init_model(&cfg.arch, init_seed(cfg.master_seed))?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let seed = round_seed(cfg.master_seed, r);
        let (next, record) = run_round(&global, &participants, &shards, test, cfg, r, seed)
            .map_err(|e| e.in_round(r))?;
        global = next;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;

    fn blob_config(aggregator: AggregatorKind) -> (ExperimentConfig, Dataset, Dataset) {
        let train = synth_blobs(4, 8, 60, 0.4, 100).unwrap();
        let test = synth_blobs(4, 8, 20, 0.4, 200).unwrap();
        let cfg = ExperimentConfig {
            arch: Architecture::softmax_linear(8, 4),
            train: TrainConfig {
                learning_rate: 0.2,
                batch_size: 16,
                local_epochs: 1,
                seed: 0,
            },
            tail_plan: TailPlan {
                n_participants: 6,
                tail_classes: Default::default(),
                tail_holder_fraction: 0.5,
                tail_volume_ratio: 0.5,
                seed: 7,
            },
            attack: AttackConfig::benign(),
            filter: FilterConfig {
                k_nearest: 3,
                m_select: 4,
            },
            aggregator,
            rounds: 3,
            thinktank_mode: ShardMode::BalancedRandom,
            shard_size: 40,
            master_seed: 42,
            vote_override: None,
        };
        (cfg, train, test)
    }

    #[test]
    fn experiment_is_deterministic() {
        let (cfg, train, test) = blob_config(AggregatorKind::TwoLayer);
        let a = run_experiment(&cfg, &train, &test).unwrap();
        let b = run_experiment(&cfg, &train, &test).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_round_yields_one_record() {
        let (mut cfg, train, test) = blob_config(AggregatorKind::Fedavg);
        cfg.rounds = 1;
        let records = run_experiment(&cfg, &train, &test).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].round, 0);
        assert!(records[0].selection.is_none());
        assert_eq!(records[0].n_selected(), 6);
    }

    #[test]
    fn fedavg_round_matches_weighted_mean_of_reconstructed_shares() {
        let (mut cfg, train, test) = blob_config(AggregatorKind::Fedavg);
        cfg.rounds = 1;
        let participants = build_participants(&cfg, &train).unwrap();
        let global = init_model(&cfg.arch, init_seed(cfg.master_seed)).unwrap();
        let seed = round_seed(cfg.master_seed, 0);
        let (new_global, _) =
            run_round(&global, &participants, &[], &test, &cfg, 0, seed).unwrap();

        // Oracle: retrain each share with the same derived seeds and take
        // the count-weighted mean through the params module.
        let shares: Vec<ModelParams> = participants
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let tc = TrainConfig {
                    seed: participant_seed(seed, i),
                    ..cfg.train
                };
                local_train(&global, &p.data, &cfg.arch, &tc).unwrap()
            })
            .collect();
        let weights: Vec<f64> = participants.iter().map(|p| p.data.len() as f64).collect();
        let oracle = params::weighted_mean(&shares, &weights).unwrap();
        assert_eq!(new_global.values(), oracle.values());
    }

    #[test]
    fn two_layer_with_votes_forced_off_is_multi_krum_bitwise() {
        let (mut cfg, train, test) = blob_config(AggregatorKind::TwoLayer);
        cfg.vote_override = Some(false);
        let forced = run_experiment(&cfg, &train, &test).unwrap();
        cfg.aggregator = AggregatorKind::MultiKrum;
        cfg.vote_override = None;
        let krum = run_experiment(&cfg, &train, &test).unwrap();
        for (a, b) in forced.iter().zip(&krum) {
            assert_eq!(a.global_eval, b.global_eval);
            assert_eq!(
                a.selection.as_ref().unwrap().indicators,
                b.selection.as_ref().unwrap().indicators
            );
        }
    }

    #[test]
    fn benign_two_layer_selection_never_shrinks_below_m() {
        let (cfg, train, test) = blob_config(AggregatorKind::TwoLayer);
        let records = run_experiment(&cfg, &train, &test).unwrap();
        for rec in &records {
            assert!(rec.n_selected() >= cfg.filter.m_select);
            // N voters times (N - m) filter-stage candidates.
            assert_eq!(rec.ballots.len(), 6 * 2);
        }
    }

    #[test]
    fn flagged_but_harmless_byzantine_changes_nothing() {
        let (mut cfg, train, test) = blob_config(AggregatorKind::TwoLayer);
        let baseline = run_experiment(&cfg, &train, &test).unwrap();
        cfg.attack.byzantine_ids.insert(3);
        // All attack modes are neutral, so behaviour must be identical.
        let flagged = run_experiment(&cfg, &train, &test).unwrap();
        for (a, b) in baseline.iter().zip(&flagged) {
            assert_eq!(a.global_eval, b.global_eval);
            assert_eq!(a.selection, b.selection);
            assert_eq!(a.ballots, b.ballots);
        }
        assert_eq!(flagged[0].byzantine_selected.len(), 1);
    }

    #[test]
    fn every_aggregator_stays_in_the_convex_hull() {
        for aggregator in [
            AggregatorKind::Fedavg,
            AggregatorKind::MultiKrum,
            AggregatorKind::Median,
            AggregatorKind::TrimmedMean { beta: 1 },
            AggregatorKind::TwoLayer,
        ] {
            let (mut cfg, train, test) = blob_config(aggregator);
            cfg.rounds = 1;
            let participants = build_participants(&cfg, &train).unwrap();
            let shards = sample_test_shards(
                &test,
                6,
                cfg.shard_size,
                cfg.thinktank_mode,
                shard_seed(cfg.master_seed),
                None,
            )
            .unwrap();
            let global = init_model(&cfg.arch, init_seed(cfg.master_seed)).unwrap();
            let seed = round_seed(cfg.master_seed, 0);
            let (new_global, _) =
                run_round(&global, &participants, &shards, &test, &cfg, 0, seed).unwrap();

            let shares: Vec<ModelParams> = participants
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let tc = TrainConfig {
                        seed: participant_seed(seed, i),
                        ..cfg.train
                    };
                    local_train(&global, &p.data, &cfg.arch, &tc).unwrap()
                })
                .collect();
            for d in 0..new_global.len() {
                let lo = shares.iter().map(|s| s.values()[d]).fold(f64::INFINITY, f64::min);
                let hi = shares
                    .iter()
                    .map(|s| s.values()[d])
                    .fold(f64::NEG_INFINITY, f64::max);
                let v = new_global.values()[d];
                assert!(
                    v >= lo - 1e-12 && v <= hi + 1e-12,
                    "{aggregator}: coordinate {d} escaped the hull"
                );
            }
        }
    }

    #[test]
    fn config_validation_rejects_bad_knobs() {
        let (mut cfg, train, test) = blob_config(AggregatorKind::TwoLayer);
        cfg.rounds = 0;
        assert!(run_experiment(&cfg, &train, &test).is_err());
        let (mut cfg, train, test) = blob_config(AggregatorKind::TrimmedMean { beta: 3 });
        cfg.rounds = 1;
        assert!(run_experiment(&cfg, &train, &test).is_err());
        let (mut cfg, train, test) = blob_config(AggregatorKind::MultiKrum);
        cfg.filter.m_select = 6;
        assert!(run_experiment(&cfg, &train, &test).is_err());
    }

    #[test]
    fn round_errors_carry_round_context() {
        let err = Error::invalid("boom").in_round(7);
        assert!(matches!(err, Error::Round { round: 7, .. }));
        assert!(err.to_string().contains("round 7"));
    }
}
