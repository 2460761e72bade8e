//! The `fedtank verify` suite: fast self-checks pitting the aggregation
//! and training paths against independent oracles. Exits nonzero if any
//! check fails.

use rand::Rng;

use crate::aggregation::{
    filter_scores, global_aggregate, hypothetical_model, multi_krum, select_smallest, tally_votes,
    benchmark_model, SelectionState, VoteBallot,
};
use crate::data::synth_blobs;
use crate::error::{Error, Result};
use crate::params::{self, ModelParams};
use crate::seeding;
use crate::training::{numeric_gradient_check, Architecture};

type Check = (&'static str, fn() -> std::result::Result<(), String>);

const CHECKS: &[Check] = &[
    ("gradient_check_softmax_linear", gradient_check_softmax),
    ("gradient_check_mlp1", gradient_check_mlp),
    ("composition_identity", composition_identity),
    ("hypothetical_model_identity", hypothetical_identity),
    ("vote_tally_enumeration", vote_tally_enumeration),
    ("convex_hull_invariant", convex_hull),
];

/// Run every check, print one PASS/FAIL line each, fail on any FAIL.
pub fn run(quiet: bool) -> Result<()> {
    let mut failures = 0usize;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => {
                if !quiet {
                    println!("PASS {name}");
                }
            }
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failures += 1;
            }
        }
    }
    if failures == 0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{failures} verify check(s) failed")))
    }
}

fn fixture(seed: u64, n_classes: usize, n_features: usize) -> crate::data::Dataset {
    let blobs = synth_blobs(n_classes, n_features, 4, 0.5, seed).expect("fixture");
    blobs.subset(&[0, 1, 2, 3, 4, 5, 6, 7]).expect("8-sample fixture")
}

fn gradient_check_softmax() -> std::result::Result<(), String> {
    let arch = Architecture::softmax_linear(6, 3);
    let err = numeric_gradient_check(&arch, &fixture(101, 3, 6), 1e-5)
        .map_err(|e| e.to_string())?;
    if err < 1e-4 {
        Ok(())
    } else {
        Err(format!("max relative error {err:.3e} >= 1e-4"))
    }
}

fn gradient_check_mlp() -> std::result::Result<(), String> {
    let arch = Architecture::mlp1(6, 5, 3);
    let err = numeric_gradient_check(&arch, &fixture(102, 3, 6), 1e-5)
        .map_err(|e| e.to_string())?;
    if err < 1e-3 {
        Ok(())
    } else {
        Err(format!("max relative error {err:.3e} >= 1e-3"))
    }
}

fn random_models(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<ModelParams> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            ModelParams::new(v, "verify").expect("finite")
        })
        .collect()
}

fn composition_identity() -> std::result::Result<(), String> {
    let mut rng = seeding::rng(seeding::mix(0xf00d, "verify/composition"));
    for case in 0..200 {
        let n = rng.random_range(4..=12);
        let dim = rng.random_range(3..=50);
        let models = random_models(&mut rng, n, dim);
        let k = rng.random_range(1..n);
        let m = rng.random_range(1..n);
        let scores = filter_scores(&models, k).map_err(|e| e.to_string())?;
        let state = SelectionState {
            indicators: select_smallest(&scores, m).map_err(|e| e.to_string())?,
            scores,
        };
        let voted = tally_votes(&[], n, &state).map_err(|e| e.to_string())?;
        let two_layer =
            global_aggregate(&models, &voted.indicators).map_err(|e| e.to_string())?;
        let krum = multi_krum(&models, k, m).map_err(|e| e.to_string())?;
        for (d, (a, b)) in two_layer.values().iter().zip(krum.values()).enumerate() {
            if (a - b).abs() > 1e-12 {
                return Err(format!("case {case}: coordinate {d} differs by {}", a - b));
            }
        }
    }
    Ok(())
}

fn hypothetical_identity() -> std::result::Result<(), String> {
    let mut rng = seeding::rng(seeding::mix(0xf00d, "verify/hypothetical"));
    for case in 0..200 {
        let n = rng.random_range(4..=12);
        let dim = rng.random_range(3..=50);
        let models = random_models(&mut rng, n, dim);
        let m = rng.random_range(1..n);
        let mut indicators = vec![false; n];
        for i in 0..m {
            indicators[i] = true;
        }
        let candidate = m; // first unselected index
        let bench = benchmark_model(&models, &indicators).map_err(|e| e.to_string())?;
        let hyp =
            hypothetical_model(&bench, m, &models[candidate]).map_err(|e| e.to_string())?;
        indicators[candidate] = true;
        let direct = benchmark_model(&models, &indicators).map_err(|e| e.to_string())?;
        for (d, (a, b)) in hyp.values().iter().zip(direct.values()).enumerate() {
            if (a - b).abs() > 1e-12 {
                return Err(format!("case {case}: coordinate {d} differs by {}", a - b));
            }
        }
    }
    Ok(())
}

fn vote_tally_enumeration() -> std::result::Result<(), String> {
    for n in 2..=6usize {
        for n_cand in 1..=2usize.min(n - 1) {
            let n_models = n;
            let selected = n_models - n_cand;
            let state = SelectionState {
                scores: vec![0.0; n_models],
                indicators: (0..n_models).map(|i| i < selected).collect(),
            };
            let patterns = 1usize << (n * n_cand);
            for pattern in 0..patterns {
                let mut ballots = Vec::with_capacity(n * n_cand);
                for voter in 0..n {
                    for c in 0..n_cand {
                        let bit = (pattern >> (voter * n_cand + c)) & 1 == 1;
                        ballots.push(VoteBallot {
                            voter,
                            candidate: selected + c,
                            acc_benchmark: 0.5,
                            acc_candidate: if bit { 0.6 } else { 0.4 },
                            vote: bit,
                        });
                    }
                }
                let got = tally_votes(&ballots, n, &state).map_err(|e| e.to_string())?;
                // Oracle: count bits per candidate straight off the pattern.
                for c in 0..n_cand {
                    let yes = (0..n)
                        .filter(|voter| (pattern >> (voter * n_cand + c)) & 1 == 1)
                        .count();
                    let expected = 2 * yes >= n;
                    if got.indicators[selected + c] != expected {
                        return Err(format!(
                            "n={n} cand={c} pattern={pattern:#b}: got {}, expected {expected}",
                            got.indicators[selected + c]
                        ));
                    }
                }
                for i in 0..selected {
                    if !got.indicators[i] {
                        return Err("previously selected indicator was cleared".into());
                    }
                }
            }
        }
    }
    Ok(())
}

fn convex_hull() -> std::result::Result<(), String> {
    let mut rng = seeding::rng(seeding::mix(0xf00d, "verify/hull"));
    for case in 0..100 {
        let n = rng.random_range(4..=10);
        let dim = rng.random_range(2..=20);
        let models = random_models(&mut rng, n, dim);
        let counts: Vec<usize> = (0..n).map(|_| rng.random_range(1..50)).collect();
        let k = rng.random_range(1..n);
        let m = rng.random_range(1..n);
        let beta = rng.random_range(0..n.div_ceil(2)).min((n - 1) / 2);
        let mut indicators = vec![false; n];
        for ind in indicators.iter_mut() {
            *ind = rng.random_bool(0.5);
        }
        if !indicators.iter().any(|&b| b) {
            indicators[0] = true;
        }
        let outputs = vec![
            crate::aggregation::fedavg(&models, &counts).map_err(|e| e.to_string())?,
            multi_krum(&models, k, m).map_err(|e| e.to_string())?,
            params::coordinate_median(&models).map_err(|e| e.to_string())?,
            params::trimmed_mean(&models, beta).map_err(|e| e.to_string())?,
            global_aggregate(&models, &indicators).map_err(|e| e.to_string())?,
        ];
        for d in 0..dim {
            let lo = models
                .iter()
                .map(|m| m.values()[d])
                .fold(f64::INFINITY, f64::min);
            let hi = models
                .iter()
                .map(|m| m.values()[d])
                .fold(f64::NEG_INFINITY, f64::max);
            for (which, out) in outputs.iter().enumerate() {
                let v = out.values()[d];
                if v < lo - 1e-12 || v > hi + 1e-12 {
                    return Err(format!(
                        "case {case} rule {which}: coordinate {d} value {v} outside [{lo}, {hi}]"
                    ));
                }
            }
        }
    }
    Ok(())
}
