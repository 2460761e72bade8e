//! Flat parameter vectors and the arithmetic shared by training and
//! aggregation: distances, linear combinations, coordinate-wise statistics.
//!
//! Summation is always sequential in index order and in double precision,
//! so every operation here is bit-reproducible run to run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model as a flat vector of finite weights plus an architecture tag.
///
/// The tag exists only for compatibility checks: two `ModelParams` may be
/// combined iff their tags and lengths agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    values: Vec<f64>,
    shape_id: String,
}

impl ModelParams {
    /// Build a parameter vector, rejecting NaN and infinity.
    pub fn new(values: Vec<f64>, shape_id: impl Into<String>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite parameter at index {pos}"
            )));
        }
        Ok(Self {
            values,
            shape_id: shape_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; callers must keep entries finite.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shape_id(&self) -> &str {
        &self.shape_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn combinable_with(&self, other: &Self) -> bool {
        self.shape_id == other.shape_id && self.values.len() == other.values.len()
    }

    fn describe(&self) -> String {
        format!("{}[{}]", self.shape_id, self.values.len())
    }
}

fn ensure_combinable(a: &ModelParams, b: &ModelParams) -> Result<()> {
    if a.combinable_with(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            left: a.describe(),
            right: b.describe(),
        })
    }
}

fn ensure_all_combinable(models: &[ModelParams]) -> Result<()> {
    for m in &models[1..] {
        ensure_combinable(&models[0], m)?;
    }
    Ok(())
}

/// Squared Euclidean distance between two combinable models.
pub fn squared_distance(a: &ModelParams, b: &ModelParams) -> Result<f64> {
    ensure_combinable(a, b)?;
    let mut acc = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc)
}

/// Weighted mean of a model list: `result_d = sum_i w_i * m_{i,d} / sum_i w_i`.
pub fn weighted_mean(models: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::EmptyInput("weighted_mean: model list"));
    }
    if models.len() != weights.len() {
        return Err(Error::invalid(format!(
            "weighted_mean: {} models vs {} weights",
            models.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
        return Err(Error::invalid(format!(
            "weighted_mean: weight {w} is not a non-negative finite number"
        )));
    }
    ensure_all_combinable(models)?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeightSum);
    }
    let dim = models[0].len();
    let mut sums = vec![0.0f64; dim];
    for (m, &w) in models.iter().zip(weights) {
        for (s, v) in sums.iter_mut().zip(&m.values) {
            *s += w * v;
        }
    }
    for s in &mut sums {
        *s /= total;
    }
    ModelParams::new(sums, models[0].shape_id.clone())
}

/// Coordinate-wise median; even counts take the midpoint of the two middle
/// values.
pub fn coordinate_median(models: &[ModelParams]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::EmptyInput("coordinate_median: model list"));
    }
    ensure_all_combinable(models)?;
    let n = models.len();
    let dim = models[0].len();
    let mut out = vec![0.0f64; dim];
    let mut column = vec![0.0f64; n];
    for (d, slot) in out.iter_mut().enumerate() {
        for (i, m) in models.iter().enumerate() {
            column[i] = m.values[d];
        }
        column.sort_by(|a, b| a.total_cmp(b));
        *slot = if n % 2 == 1 {
            column[n / 2]
        } else {
            (column[n / 2 - 1] + column[n / 2]) / 2.0
        };
    }
    ModelParams::new(out, models[0].shape_id.clone())
}

/// Coordinate-wise trimmed mean: per coordinate, drop the `beta` smallest
/// and `beta` largest values and average the rest.
///
/// The kept values are accumulated in model-index order, so `beta == 0`
/// reproduces the unweighted mean bitwise.
pub fn trimmed_mean(models: &[ModelParams], beta: usize) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::EmptyInput("trimmed_mean: model list"));
    }
    let n = models.len();
    if 2 * beta >= n {
        return Err(Error::invalid(format!(
            "trimmed_mean: 2*beta = {} must be < {} models",
            2 * beta,
            n
        )));
    }
    ensure_all_combinable(models)?;
    let dim = models[0].len();
    let kept = (n - 2 * beta) as f64;
    let mut out = vec![0.0f64; dim];
    // (value, model index) pairs per coordinate; ties on value break by
    // lower model index so the dropped set is deterministic.
    let mut column: Vec<(f64, usize)> = vec![(0.0, 0); n];
    let mut drop = vec![false; n];
    for (d, slot) in out.iter_mut().enumerate() {
        for (i, m) in models.iter().enumerate() {
            column[i] = (m.values[d], i);
        }
        column.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        drop.fill(false);
        for &(_, i) in &column[..beta] {
            drop[i] = true;
        }
        for &(_, i) in &column[n - beta..] {
            drop[i] = true;
        }
        let mut acc = 0.0;
        for (i, m) in models.iter().enumerate() {
            if !drop[i] {
                acc += m.values[d];
            }
        }
        *slot = acc / kept;
    }
    ModelParams::new(out, models[0].shape_id.clone())
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
    fn distance_identity_is_zero() {
        assert_eq!(squared_distance(&mp(&[1.0, 2.0]), &mp(&[1.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn distance_three_four_five() {
        assert_eq!(squared_distance(&mp(&[0.0, 0.0]), &mp(&[3.0, 4.0])).unwrap(), 25.0);
    }

    #[test]
    fn distance_matches_elementwise_oracle_in_high_dim() {
        let mut rng = seeding::rng(11);
        let a: Vec<f64> = (0..7850).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..7850).map(|_| rng.random_range(-2.0..2.0)).collect();
        // Oracle: independently computed per-coordinate squared differences,
        // accumulated in the same index order.
        let mut expected = 0.0;
        for d in 0..7850 {
            expected += (a[d] - b[d]).powi(2);
        }
        let got = squared_distance(&mp(&a), &mp(&b)).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn distance_shape_mismatch_errors() {
        let a = mp(&[1.0]);
        let b = ModelParams::new(vec![1.0], "other").unwrap();
        assert!(matches!(
            squared_distance(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
        let c = mp(&[1.0, 2.0]);
        assert!(squared_distance(&a, &c).is_err());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(ModelParams::new(vec![0.0, f64::NAN], "t").is_err());
        assert!(ModelParams::new(vec![f64::INFINITY], "t").is_err());
    }

    #[test]
    fn weighted_mean_plain() {
        let r = weighted_mean(&[mp(&[2.0]), mp(&[4.0])], &[1.0, 1.0]).unwrap();
        assert_eq!(r.values(), &[3.0]);
    }

    #[test]
    fn weighted_mean_single_model_any_weight() {
        let r = weighted_mean(&[mp(&[5.0, 5.0])], &[7.0]).unwrap();
        assert_eq!(r.values(), &[5.0, 5.0]);
    }

    #[test]
    fn weighted_mean_zero_weight_drops_model() {
        let r = weighted_mean(&[mp(&[0.0]), mp(&[3.0]), mp(&[9.0])], &[1.0, 2.0, 0.0]).unwrap();
        assert_eq!(r.values(), &[2.0]);
    }

    #[test]
    fn weighted_mean_distinct_errors() {
        assert!(matches!(
            weighted_mean(&[], &[]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            weighted_mean(&[mp(&[1.0])], &[0.0]),
            Err(Error::ZeroWeightSum)
        ));
        let other = ModelParams::new(vec![1.0], "other").unwrap();
        assert!(matches!(
            weighted_mean(&[mp(&[1.0]), other], &[1.0, 1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn median_odd_and_even() {
        let r = coordinate_median(&[mp(&[1.0]), mp(&[2.0]), mp(&[100.0])]).unwrap();
        assert_eq!(r.values(), &[2.0]);
        let r = coordinate_median(&[mp(&[1.0]), mp(&[3.0])]).unwrap();
        assert_eq!(r.values(), &[2.0]);
        assert!(coordinate_median(&[]).is_err());
    }

    #[test]
    fn median_matches_sort_oracle() {
        let models = random_models(9, 5, 21);
        let got = coordinate_median(&models).unwrap();
        for d in 0..5 {
            let mut col: Vec<f64> = models.iter().map(|m| m.values()[d]).collect();
            col.sort_by(f64::total_cmp);
            assert_eq!(got.values()[d], col[4]);
        }
    }

    #[test]
    fn trimmed_mean_drops_extremes() {
        let r = trimmed_mean(&[mp(&[1.0]), mp(&[2.0]), mp(&[100.0])], 1).unwrap();
        assert_eq!(r.values(), &[2.0]);
    }

    #[test]
    fn trimmed_mean_beta_zero_is_plain_mean_bitwise() {
        let models = random_models(6, 17, 33);
        let trimmed = trimmed_mean(&models, 0).unwrap();
        let mean = weighted_mean(&models, &vec![1.0; 6]).unwrap();
        assert_eq!(trimmed.values(), mean.values());
    }

    #[test]
    fn trimmed_mean_matches_sort_drop_average_oracle() {
        let models = random_models(7, 3, 55);
        let got = trimmed_mean(&models, 2).unwrap();
        for d in 0..3 {
            let mut col: Vec<f64> = models.iter().map(|m| m.values()[d]).collect();
            col.sort_by(f64::total_cmp);
            let kept = &col[2..5];
            let expected = kept.iter().sum::<f64>() / 3.0;
            assert!((got.values()[d] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn trimmed_mean_rejects_over_trimming() {
        let models = random_models(4, 2, 1);
        assert!(trimmed_mean(&models, 2).is_err());
    }

    #[test]
    fn distance_is_symmetric_on_random_pairs() {
        let models = random_models(8, 12, 77);
        for a in &models {
            for b in &models {
                assert_eq!(
                    squared_distance(a, b).unwrap(),
                    squared_distance(b, a).unwrap()
                );
            }
        }
    }

    #[test]
    fn means_are_permutation_invariant() {
        let models = random_models(5, 9, 91);
        let weights = [1.0, 2.0, 0.5, 3.0, 1.5];
        let base = weighted_mean(&models, &weights).unwrap();
        let med = coordinate_median(&models).unwrap();
        let trim = trimmed_mean(&models, 1).unwrap();
        let perm = [3usize, 0, 4, 2, 1];
        let pm: Vec<ModelParams> = perm.iter().map(|&i| models[i].clone()).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| weights[i]).collect();
        let got = weighted_mean(&pm, &pw).unwrap();
        for (x, y) in got.values().iter().zip(base.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(coordinate_median(&pm).unwrap().values(), med.values());
        for (x, y) in trimmed_mean(&pm, 1).unwrap().values().iter().zip(trim.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
