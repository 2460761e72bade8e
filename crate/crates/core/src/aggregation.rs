//! Server-side aggregation rules.
//!
//! The two-layer method works in stages: a distance-based filter scores
//! every shared model by the summed squared distances to its k nearest
//! peers and keeps the m best (this is exactly the multi-Krum selection
//! step); each rejected candidate is then mixed into the benchmark model
//! one at a time, the think tank votes on the mixtures, and candidates
//! with at least N/2 affirmative votes rejoin the final unweighted mean.
//!
//! FedAvg, multi-Krum, coordinate-wise median, and trimmed mean are
//! provided as baselines over the same `ModelParams` currency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{self, ModelParams};

/// Filter-layer knobs: k nearest peers per score, m models kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub k_nearest: usize,
    pub m_select: usize,
}

impl FilterConfig {
    /// Classical Krum defaults for an assumed Byzantine count `f`:
    /// k = N - f - 2 scored neighbours, m = N - f - 1 survivors.
    pub fn for_population(n_participants: usize, assumed_byzantine: usize) -> Result<Self> {
        let n = n_participants;
        let f = assumed_byzantine;
        if n < f + 3 {
            return Err(Error::invalid(format!(
                "filter defaults need N >= f + 3 (N = {n}, f = {f})"
            )));
        }
        Ok(Self {
            k_nearest: n - f - 2,
            m_select: n - f - 1,
        })
    }

    pub fn validate(&self, n_participants: usize) -> Result<()> {
        if self.k_nearest == 0 || self.k_nearest > n_participants.saturating_sub(1) {
            return Err(Error::invalid(format!(
                "k_nearest {} out of range [1, {}]",
                self.k_nearest,
                n_participants.saturating_sub(1)
            )));
        }
        if self.m_select == 0 || self.m_select >= n_participants {
            return Err(Error::invalid(format!(
                "m_select {} out of range [1, {})",
                self.m_select, n_participants
            )));
        }
        Ok(())
    }
}

/// Per-round scores and selection indicators, indexed by participant id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub scores: Vec<f64>,
    pub indicators: Vec<bool>,
}

impl SelectionState {
    pub fn n_selected(&self) -> usize {
        self.indicators.iter().filter(|&&i| i).count()
    }

    pub fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        self.indicators
            .iter()
            .enumerate()
            .filter(|(_, &sel)| !sel)
            .map(|(i, _)| i)
    }
}

/// One think-tanker's verdict on one rejected candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteBallot {
    pub voter: usize,
    pub candidate: usize,
    pub acc_benchmark: f64,
    pub acc_candidate: f64,
    pub vote: bool,
}

impl VoteBallot {
    /// Honest ballot: affirmative iff the candidate mixture does at least
    /// as well as the benchmark on the voter's shard.
    pub fn honest(voter: usize, candidate: usize, acc_benchmark: f64, acc_candidate: f64) -> Self {
        Self {
            voter,
            candidate,
            acc_benchmark,
            acc_candidate,
            vote: acc_candidate >= acc_benchmark,
        }
    }
}

fn ensure_models(models: &[ModelParams], min: usize, what: &'static str) -> Result<()> {
    if models.len() < min {
        return Err(Error::EmptyInput(what));
    }
    Ok(())
}

/// Score each model by the summed squared distances to its k nearest other
/// models; distance ties break toward the lower index.
pub fn filter_scores(models: &[ModelParams], k: usize) -> Result<Vec<f64>> {
    ensure_models(models, 2, "filter_scores: need at least two models")?;
    let n = models.len();
    if k == 0 || k > n - 1 {
        return Err(Error::invalid(format!(
            "filter_scores: k = {k} out of range [1, {}]",
            n - 1
        )));
    }
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = params::squared_distance(&models[i], &models[j])?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut scores = Vec::with_capacity(n);
    let mut neighbours: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        neighbours.clear();
        neighbours.extend((0..n).filter(|&j| j != i).map(|j| (dist[i][j], j)));
        neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scores.push(neighbours[..k].iter().map(|&(d, _)| d).sum());
    }
    Ok(scores)
}

/// Indicator vector with the m smallest scores set; ties break toward the
/// lower participant index.
pub fn select_smallest(scores: &[f64], m: usize) -> Result<Vec<bool>> {
    let n = scores.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "select_smallest: m = {m} out of range [1, {n}]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut indicators = vec![false; n];
    for &i in &order[..m] {
        indicators[i] = true;
    }
    Ok(indicators)
}

/// Sum of the models at `true` indicators in index order, plus the count.
fn sum_selected(models: &[ModelParams], indicators: &[bool]) -> Result<(Vec<f64>, usize)> {
    if models.len() != indicators.len() {
        return Err(Error::invalid(format!(
            "{} models vs {} indicators",
            models.len(),
            indicators.len()
        )));
    }
    let mut count = 0usize;
    let mut sums: Option<Vec<f64>> = None;
    let mut first: Option<&ModelParams> = None;
    for (m, &keep) in models.iter().zip(indicators) {
        if !keep {
            continue;
        }
        match first {
            None => first = Some(m),
            Some(f) => {
                if !f.combinable_with(m) {
                    return Err(Error::ShapeMismatch {
                        left: format!("{}[{}]", f.shape_id(), f.len()),
                        right: format!("{}[{}]", m.shape_id(), m.len()),
                    });
                }
            }
        }
        let sums = sums.get_or_insert_with(|| vec![0.0; m.len()]);
        for (s, v) in sums.iter_mut().zip(m.values()) {
            *s += v;
        }
        count += 1;
    }
    match sums {
        Some(s) => Ok((s, count)),
        None => Err(Error::EmptyInput("aggregation: no model selected")),
    }
}

/// Benchmark model: unweighted mean of the filter-selected models.
pub fn benchmark_model(models: &[ModelParams], indicators: &[bool]) -> Result<ModelParams> {
    let (mut sums, count) = sum_selected(models, indicators)?;
    let scale = count as f64;
    for s in &mut sums {
        *s /= scale;
    }
    let shape = models
        .iter()
        .zip(indicators)
        .find(|(_, &keep)| keep)
        .map(|(m, _)| m.shape_id().to_string())
        .expect("sum_selected guarantees a selected model");
    ModelParams::new(sums, shape)
}

/// Hypothetical global model: the benchmark with one rejected candidate
/// mixed in, `(m * benchmark + candidate) / (m + 1)`.
pub fn hypothetical_model(
    benchmark: &ModelParams,
    m: usize,
    candidate: &ModelParams,
) -> Result<ModelParams> {
    if m == 0 {
        return Err(Error::invalid("hypothetical_model: m must be >= 1"));
    }
    if !benchmark.combinable_with(candidate) {
        return Err(Error::ShapeMismatch {
            left: format!("{}[{}]", benchmark.shape_id(), benchmark.len()),
            right: format!("{}[{}]", candidate.shape_id(), candidate.len()),
        });
    }
    let mf = m as f64;
    let values = benchmark
        .values()
        .iter()
        .zip(candidate.values())
        .map(|(b, c)| (mf * b + c) / (mf + 1.0))
        .collect();
    ModelParams::new(values, benchmark.shape_id().to_string())
}

/// Apply the majority rule: a candidate with at least N/2 affirmative
/// ballots flips its indicator to selected. Scores and previously selected
/// indicators are untouched.
pub fn tally_votes(
    ballots: &[VoteBallot],
    n_participants: usize,
    state: &SelectionState,
) -> Result<SelectionState> {
    let n_models = state.indicators.len();
    let mut yes = vec![0usize; n_models];
    let mut seen = std::collections::HashSet::new();
    for b in ballots {
        if b.candidate >= n_models {
            return Err(Error::Protocol(format!(
                "ballot names candidate {} of {n_models}",
                b.candidate
            )));
        }
        if b.voter >= n_participants {
            return Err(Error::Protocol(format!(
                "ballot names voter {} of {n_participants}",
                b.voter
            )));
        }
        if state.indicators[b.candidate] {
            return Err(Error::Protocol(format!(
                "ballot for already-selected candidate {}",
                b.candidate
            )));
        }
        if !seen.insert((b.voter, b.candidate)) {
            return Err(Error::Protocol(format!(
                "duplicate ballot from voter {} for candidate {}",
                b.voter, b.candidate
            )));
        }
        if b.vote {
            yes[b.candidate] += 1;
        }
    }
    let mut out = state.clone();
    for (j, &count) in yes.iter().enumerate() {
        // count >= N/2, compared without leaving the integers.
        if !out.indicators[j] && 2 * count >= n_participants {
            out.indicators[j] = true;
        }
    }
    Ok(out)
}

/// Final global aggregation: unweighted mean over all selected models.
pub fn global_aggregate(models: &[ModelParams], indicators: &[bool]) -> Result<ModelParams> {
    benchmark_model(models, indicators)
}

/// FedAvg: sample-count-weighted mean of every shared model.
pub fn fedavg(models: &[ModelParams], sample_counts: &[usize]) -> Result<ModelParams> {
    if models.len() != sample_counts.len() {
        return Err(Error::invalid(format!(
            "fedavg: {} models vs {} sample counts",
            models.len(),
            sample_counts.len()
        )));
    }
    if let Some(pos) = sample_counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "fedavg: sample count at index {pos} is zero"
        )));
    }
    let weights: Vec<f64> = sample_counts.iter().map(|&c| c as f64).collect();
    params::weighted_mean(models, &weights)
}

/// Multi-Krum: mean of the m models with the smallest filter scores.
///
/// Defined as exactly the filter layer with no vote additions.
pub fn multi_krum(models: &[ModelParams], k: usize, m: usize) -> Result<ModelParams> {
    let scores = filter_scores(models, k)?;
    let indicators = select_smallest(&scores, m)?;
    benchmark_model(models, &indicators)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use rand::Rng;

    fn mp(values: &[f64]) -> ModelParams {
        ModelParams::new(values.to_vec(), "t").unwrap()
    }

    fn random_models(n: usize, dim: usize, seed: u64) -> Vec<ModelParams> {
        let mut rng = seeding::rng(seed);
        (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                mp(&v)
            })
            .collect()
    }

    #[test]
    fn identical_models_score_zero() {
        let models = vec![mp(&[1.0, 2.0]); 3];
        assert_eq!(filter_scores(&models, 2).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn nearest_neighbour_scores_on_a_line() {
        let models = [mp(&[0.0]), mp(&[1.0]), mp(&[10.0])];
        assert_eq!(filter_scores(&models, 1).unwrap(), vec![1.0, 1.0, 81.0]);
    }

    #[test]
    fn scores_match_full_matrix_oracle() {
        let models = random_models(10, 5, 3);
        let got = filter_scores(&models, 6).unwrap();
        // Oracle: all-pairs distance matrix + per-row sort, summed in the
        // same ascending order.
        for i in 0..10 {
            let mut row: Vec<(f64, usize)> = (0..10)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = models[i]
                        .values()
                        .iter()
                        .zip(models[j].values())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, j)
                })
                .collect();
            row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expected: f64 = row[..6].iter().map(|&(d, _)| d).sum();
            assert_eq!(got[i], expected, "participant {i}");
        }
    }

    #[test]
    fn filter_scores_k_bounds() {
        let models = random_models(4, 2, 5);
        assert!(filter_scores(&models, 0).is_err());
        assert!(filter_scores(&models, 4).is_err());
        assert!(filter_scores(&models[..1], 1).is_err());
    }

    #[test]
    fn select_smallest_basics() {
        assert_eq!(
            select_smallest(&[5.0, 1.0, 3.0], 2).unwrap(),
            vec![false, true, true]
        );
        assert_eq!(
            select_smallest(&[2.0, 2.0, 2.0], 2).unwrap(),
            vec![true, true, false]
        );
        assert_eq!(
            select_smallest(&[9.0, 1.0], 2).unwrap(),
            vec![true, true]
        );
        assert!(select_smallest(&[1.0], 0).is_err());
        assert!(select_smallest(&[1.0], 2).is_err());
    }

    #[test]
    fn benchmark_of_one_is_that_model() {
        let models = random_models(4, 3, 9);
        let picked = benchmark_model(&models, &[false, true, false, false]).unwrap();
        assert_eq!(picked.values(), models[1].values());
    }

    #[test]
    fn benchmark_mean_of_two() {
        let models = [mp(&[2.0]), mp(&[4.0])];
        assert_eq!(
            benchmark_model(&models, &[true, true]).unwrap().values(),
            &[3.0]
        );
        assert!(benchmark_model(&models, &[false, false]).is_err());
    }

    #[test]
    fn benchmark_agrees_with_weighted_mean_on_subset() {
        let models = random_models(10, 6, 13);
        let indicators = [true, false, true, true, false, true, false, false, true, false];
        let got = benchmark_model(&models, &indicators).unwrap();
        let subset: Vec<ModelParams> = models
            .iter()
            .zip(&indicators)
            .filter(|(_, &k)| k)
            .map(|(m, _)| m.clone())
            .collect();
        let oracle = params::weighted_mean(&subset, &vec![1.0; subset.len()]).unwrap();
        assert_eq!(got.values(), oracle.values());
    }

    #[test]
    fn hypothetical_model_arithmetic() {
        let got = hypothetical_model(&mp(&[2.0]), 1, &mp(&[4.0])).unwrap();
        assert_eq!(got.values(), &[3.0]);
        let fixed = hypothetical_model(&mp(&[5.0, -1.0]), 4, &mp(&[5.0, -1.0])).unwrap();
        assert_eq!(fixed.values(), &[5.0, -1.0]);
        assert!(hypothetical_model(&mp(&[1.0]), 0, &mp(&[1.0])).is_err());
    }

    #[test]
    fn hypothetical_equals_enlarged_mean() {
        // mean(S) mixed with j at weight 1/(m+1) must equal mean(S u {j}).
        let models = random_models(7, 11, 17);
        let subset = [true, true, false, true, false, true, false];
        let m = 4;
        let bench = benchmark_model(&models, &subset).unwrap();
        let hyp = hypothetical_model(&bench, m, &models[2]).unwrap();
        let mut enlarged = subset;
        enlarged[2] = true;
        let direct = benchmark_model(&models, &enlarged).unwrap();
        for (a, b) in hyp.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tally_threshold_boundary() {
        let state = SelectionState {
            scores: vec![0.0; 10],
            indicators: {
                let mut v = vec![true; 10];
                v[7] = false;
                v
            },
        };
        let ballots: Vec<VoteBallot> = (0..5)
            .map(|i| VoteBallot::honest(i, 7, 0.5, 0.6))
            .collect();
        // 5 yes votes out of N = 10 reaches the N/2 threshold.
        let out = tally_votes(&ballots, 10, &state).unwrap();
        assert!(out.indicators[7]);

        let ballots: Vec<VoteBallot> = (0..4)
            .map(|i| VoteBallot::honest(i, 7, 0.5, 0.6))
            .collect();
        let out = tally_votes(&ballots, 10, &state).unwrap();
        assert!(!out.indicators[7]);

        // No ballots at all: candidate stays out.
        let out = tally_votes(&[], 10, &state).unwrap();
        assert!(!out.indicators[7]);
        assert_eq!(out.scores, state.scores);
    }

    #[test]
    fn tally_rejects_protocol_violations() {
        let state = SelectionState {
            scores: vec![0.0; 3],
            indicators: vec![true, false, false],
        };
        // Ballot for a selected candidate.
        let bad = [VoteBallot::honest(0, 0, 0.5, 0.9)];
        assert!(matches!(
            tally_votes(&bad, 3, &state),
            Err(Error::Protocol(_))
        ));
        // Duplicate (voter, candidate) pair.
        let dup = [
            VoteBallot::honest(0, 1, 0.5, 0.9),
            VoteBallot::honest(0, 1, 0.5, 0.9),
        ];
        assert!(matches!(
            tally_votes(&dup, 3, &state),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn vote_monotonicity() {
        // An extra affirmative ballot can only grow the selected set.
        let state = SelectionState {
            scores: vec![0.0; 6],
            indicators: vec![true, true, true, true, false, false],
        };
        let base: Vec<VoteBallot> = (0..3).map(|i| VoteBallot::honest(i, 4, 0.1, 0.2)).collect();
        let with_extra: Vec<VoteBallot> = (0..4)
            .map(|i| VoteBallot::honest(i, 4, 0.1, 0.2))
            .collect();
        let a = tally_votes(&base, 6, &state).unwrap();
        let b = tally_votes(&with_extra, 6, &state).unwrap();
        for (x, y) in a.indicators.iter().zip(&b.indicators) {
            assert!(!x | y, "monotonicity violated");
        }
    }

    #[test]
    fn global_aggregate_all_selected_is_plain_mean() {
        let models = random_models(5, 4, 23);
        let got = global_aggregate(&models, &[true; 5]).unwrap();
        let mean = params::weighted_mean(&models, &[1.0; 5]).unwrap();
        assert_eq!(got.values(), mean.values());
    }

    #[test]
    fn global_aggregate_equals_benchmark_without_vote_additions() {
        let models = random_models(6, 3, 29);
        let scores = filter_scores(&models, 3).unwrap();
        let indicators = select_smallest(&scores, 4).unwrap();
        let bench = benchmark_model(&models, &indicators).unwrap();
        let global = global_aggregate(&models, &indicators).unwrap();
        assert_eq!(bench.values(), global.values());
    }

    #[test]
    fn global_aggregate_matches_indicator_weighted_mean() {
        let models = random_models(10, 7, 31);
        let indicators = [true, false, false, true, true, false, true, true, false, true];
        let got = global_aggregate(&models, &indicators).unwrap();
        let weights: Vec<f64> = indicators.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let oracle = params::weighted_mean(&models, &weights).unwrap();
        for (a, b) in got.values().iter().zip(oracle.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fedavg_weighting() {
        let models = [mp(&[0.0]), mp(&[10.0])];
        assert_eq!(fedavg(&models, &[1, 4]).unwrap().values(), &[8.0]);
        let equal = fedavg(&models, &[3, 3]).unwrap();
        assert_eq!(equal.values(), &[5.0]);
        assert!(fedavg(&models, &[1]).is_err());
        assert!(fedavg(&models, &[1, 0]).is_err());
    }

    #[test]
    fn fedavg_matches_weighted_mean_oracle() {
        let models = random_models(10, 4, 37);
        let counts: Vec<usize> = (1..=10).collect();
        let got = fedavg(&models, &counts).unwrap();
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let oracle = params::weighted_mean(&models, &weights).unwrap();
        assert_eq!(got.values(), oracle.values());
    }

    #[test]
    fn multi_krum_tie_break_picks_lower_index() {
        let models = [mp(&[0.0]), mp(&[1.0]), mp(&[10.0])];
        let got = multi_krum(&models, 1, 1).unwrap();
        assert_eq!(got.values(), &[0.0]);
    }

    #[test]
    fn multi_krum_all_is_plain_mean() {
        let models = random_models(5, 3, 41);
        // m = N is outside the config invariant but legal for the op.
        let scores = filter_scores(&models, 2).unwrap();
        let all = select_smallest(&scores, 5).unwrap();
        let got = benchmark_model(&models, &all).unwrap();
        let mean = params::weighted_mean(&models, &[1.0; 5]).unwrap();
        assert_eq!(got.values(), mean.values());
    }

    #[test]
    fn multi_krum_excludes_far_outlier() {
        let mut models = random_models(9, 5, 43);
        let outlier = mp(&[50.0, -50.0, 50.0, -50.0, 50.0]);
        models.push(outlier.clone());
        let scores = filter_scores(&models, 7).unwrap();
        let indicators = select_smallest(&scores, 8).unwrap();
        assert!(!indicators[9], "outlier must not be selected");
        let global = multi_krum(&models, 7, 8).unwrap();
        for &v in global.values() {
            assert!(v.abs() < 2.0, "outlier leaked into the mean: {v}");
        }
    }

    #[test]
    fn two_layer_with_no_votes_equals_multi_krum_exactly() {
        for seed in 0..20 {
            let n = 4 + (seed as usize % 9);
            let models = random_models(n, 6, 1000 + seed);
            let k = 1 + (seed as usize % (n - 1));
            let m = 1 + (seed as usize % (n - 1));
            let scores = filter_scores(&models, k).unwrap();
            let state = SelectionState {
                indicators: select_smallest(&scores, m).unwrap(),
                scores,
            };
            let voted = tally_votes(&[], n, &state).unwrap();
            let two_layer = global_aggregate(&models, &voted.indicators).unwrap();
            let krum = multi_krum(&models, k, m).unwrap();
            assert_eq!(two_layer.values(), krum.values(), "seed {seed}");
        }
    }

    #[test]
    fn permutation_equivariance_of_the_pipeline() {
        let models = random_models(6, 4, 47);
        let k = 3;
        let m = 4;
        let scores = filter_scores(&models, k).unwrap();
        let indicators = select_smallest(&scores, m).unwrap();
        let global = global_aggregate(&models, &indicators).unwrap();

        let perm = [5usize, 2, 0, 4, 1, 3];
        let pm: Vec<ModelParams> = perm.iter().map(|&i| models[i].clone()).collect();
        let pscores = filter_scores(&pm, k).unwrap();
        for (new_pos, &old) in perm.iter().enumerate() {
            assert!(
                (pscores[new_pos] - scores[old]).abs() < 1e-12,
                "scores must permute with participants"
            );
        }
        // Ties are absent with continuous random models, so the selected
        // set permutes too and the aggregate is unchanged.
        let pind = select_smallest(&pscores, m).unwrap();
        for (new_pos, &old) in perm.iter().enumerate() {
            assert_eq!(pind[new_pos], indicators[old]);
        }
        let pglobal = global_aggregate(&pm, &pind).unwrap();
        for (a, b) in pglobal.values().iter().zip(global.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregates_stay_in_convex_hull() {
        let models = random_models(8, 5, 53);
        let counts: Vec<usize> = (1..=8).collect();
        let outputs = vec![
            fedavg(&models, &counts).unwrap(),
            multi_krum(&models, 5, 6).unwrap(),
            params::coordinate_median(&models).unwrap(),
            params::trimmed_mean(&models, 2).unwrap(),
            global_aggregate(&models, &[true, false, true, true, false, true, false, true])
                .unwrap(),
        ];
        for d in 0..5 {
            let lo = models.iter().map(|m| m.values()[d]).fold(f64::INFINITY, f64::min);
            let hi = models
                .iter()
                .map(|m| m.values()[d])
                .fold(f64::NEG_INFINITY, f64::max);
            for out in &outputs {
                let v = out.values()[d];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn filter_config_defaults_follow_krum() {
        let cfg = FilterConfig::for_population(10, 1).unwrap();
        assert_eq!(cfg.k_nearest, 7);
        assert_eq!(cfg.m_select, 8);
        assert!(cfg.validate(10).is_ok());
        assert!(FilterConfig::for_population(3, 1).is_err());
        assert!(FilterConfig { k_nearest: 10, m_select: 8 }.validate(10).is_err());
        assert!(FilterConfig { k_nearest: 7, m_select: 10 }.validate(10).is_err());
    }
}
