//! Dataset loading, synthesis, and partitioning.
//!
//! Training data is spread across participants with a controllable
//! tail-class profile: head classes split evenly, each tail class handed
//! to a small set of holders at a fraction of the head-class volume.
//! Think-tanker test shards are drawn either balanced from the full test
//! set or mirroring each participant's local class histogram.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Dense classification dataset: one feature row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "dataset: {} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if n_classes == 0 {
            return Err(Error::invalid("dataset: n_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!(
                "dataset: label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Per-class sample counts, indexed by class id.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.n_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Sample indices grouped by class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// New dataset holding copies of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Array2::zeros((indices.len(), self.n_features()));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::invalid(format!("subset index {i} out of range")));
            }
            features.row_mut(row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.n_classes)
    }

    /// Replace the labels wholesale (used by label-flip attacks).
    pub(crate) fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Dataset::new(self.features.clone(), labels, self.n_classes)
    }
}

/// How training data is spread across participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPlan {
    /// Number of participants N.
    pub n_participants: usize,
    /// Classes treated as tail classes.
    pub tail_classes: BTreeSet<usize>,
    /// Fraction of participants that receive tail-class data; holders per
    /// tail class = ceil(fraction * N).
    pub tail_holder_fraction: f64,
    /// Tail-class sample count per holder, relative to a head class's
    /// per-holder count.
    pub tail_volume_ratio: f64,
    pub seed: u64,
}

impl TailPlan {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.n_participants == 0 {
            return Err(Error::invalid("tail plan: n_participants must be positive"));
        }
        if !(self.tail_holder_fraction > 0.0 && self.tail_holder_fraction <= 1.0) {
            return Err(Error::invalid(
                "tail plan: tail_holder_fraction must be in (0, 1]",
            ));
        }
        if !(self.tail_volume_ratio > 0.0 && self.tail_volume_ratio <= 1.0) {
            return Err(Error::invalid(
                "tail plan: tail_volume_ratio must be in (0, 1]",
            ));
        }
        if let Some(&c) = self.tail_classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::invalid(format!(
                "tail plan: tail class {c} out of range for {n_classes} classes"
            )));
        }
        if !self.tail_classes.is_empty() && self.tail_classes.len() == n_classes {
            return Err(Error::invalid(
                "tail plan: at least one class must remain a head class",
            ));
        }
        Ok(())
    }

    pub fn n_holders(&self) -> usize {
        (self.tail_holder_fraction * self.n_participants as f64).ceil() as usize
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Truncated {
            path: path.to_string(),
            needed: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an MNIST-style IDX image/label file pair.
///
/// Pixel bytes are scaled by 1/255 into features. The class count is taken
/// as `max label + 1` (10 for MNIST).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let ipath = images_path.display().to_string();
    let lpath = labels_path.display().to_string();

    let ibytes = fs::read(images_path)?;
    let magic = read_be_u32(&ibytes, 0, &ipath)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: ipath,
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n_images = read_be_u32(&ibytes, 4, &ipath)? as usize;
    let rows = read_be_u32(&ibytes, 8, &ipath)? as usize;
    let cols = read_be_u32(&ibytes, 12, &ipath)? as usize;
    let pixels = rows * cols;
    let needed = 16 + n_images * pixels;
    if ibytes.len() < needed {
        return Err(Error::Truncated {
            path: ipath,
            needed,
            found: ibytes.len(),
        });
    }

    let lbytes = fs::read(labels_path)?;
    let magic = read_be_u32(&lbytes, 0, &lpath)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: lpath,
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = read_be_u32(&lbytes, 4, &lpath)? as usize;
    let needed = 8 + n_labels;
    if lbytes.len() < needed {
        return Err(Error::Truncated {
            path: lpath,
            needed,
            found: lbytes.len(),
        });
    }
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let mut features = Array2::zeros((n_images, pixels));
    for (i, mut row) in features.axis_iter_mut(Axis(0)).enumerate() {
        let start = 16 + i * pixels;
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = ibytes[start + j] as f64 / 255.0;
        }
    }
    let labels: Vec<usize> = lbytes[8..8 + n_labels].iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, n_classes)
}

/// Serialize a dataset back to a pair of IDX files (8-bit payload).
///
/// Feature values are clamped to [0, 1] and quantized to bytes; used by
/// tests and tooling, not by the experiment path.
pub fn write_idx(data: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let n = data.len();
    let pixels = data.n_features();
    let mut ibytes = Vec::with_capacity(16 + n * pixels);
    ibytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    ibytes.extend_from_slice(&(n as u32).to_be_bytes());
    // Write as a flat n x pixels x 1 raster; readers only use the product.
    ibytes.extend_from_slice(&(pixels as u32).to_be_bytes());
    ibytes.extend_from_slice(&1u32.to_be_bytes());
    for row in data.features.rows() {
        for &v in row {
            ibytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut lbytes = Vec::with_capacity(8 + n);
    lbytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbytes.extend_from_slice(&(n as u32).to_be_bytes());
    lbytes.extend(data.labels.iter().map(|&l| l as u8));
    fs::write(images_path, ibytes)?;
    fs::write(labels_path, lbytes)?;
    Ok(())
}

/// Isotropic Gaussian blobs around fixed per-class centers.
///
/// Class `c`'s center has ones at features `f` with `f % n_classes == c`
/// and zeros elsewhere; rows come out grouped by class.
pub fn synth_blobs(
    n_classes: usize,
    n_features: usize,
    n_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes == 0 || n_features == 0 || n_per_class == 0 {
        return Err(Error::invalid("synth_blobs: all counts must be positive"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::invalid("synth_blobs: spread must be positive"));
    }
    let normal = Normal::new(0.0, spread).expect("validated spread");
    let mut rng = seeding::rng(seed);
    let n = n_classes * n_per_class;
    let mut features = Array2::zeros((n, n_features));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0usize;
    for c in 0..n_classes {
        for _ in 0..n_per_class {
            for f in 0..n_features {
                let center = if f % n_classes == c { 1.0 } else { 0.0 };
                features[[row, f]] = center + normal.sample(&mut rng);
            }
            labels.push(c);
            row += 1;
        }
    }
    Dataset::new(features, labels, n_classes)
}

/// Head-class sample count a single participant receives, on average.
///
/// This is the reference volume that `tail_volume_ratio` scales: each tail
/// holder receives `floor(ratio * head_per_holder)` samples of the class.
fn head_per_holder(train: &Dataset, plan: &TailPlan) -> usize {
    let hist = train.histogram();
    let mut head_total = 0usize;
    let mut head_classes = 0usize;
    for (c, &count) in hist.iter().enumerate() {
        if !plan.tail_classes.contains(&c) {
            head_total += count;
            head_classes += 1;
        }
    }
    if head_classes == 0 {
        0
    } else {
        head_total / (head_classes * plan.n_participants)
    }
}

/// Split a training set across `plan.n_participants` datasets.
///
/// Head classes are dealt round-robin after a seeded shuffle, so every
/// participant sees a near-equal IID share. Each tail class goes to
/// `ceil(fraction * N)` seeded-drawn holders, each holding
/// `floor(ratio * head_per_holder)` samples; everyone else gets none.
/// No sample is assigned twice; surplus tail samples stay unassigned.
pub fn partition_longtail(train: &Dataset, plan: &TailPlan) -> Result<Vec<Dataset>> {
    plan.validate(train.n_classes())?;
    let n = plan.n_participants;
    let by_class = train.class_indices();
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n];

    for (c, idxs) in by_class.iter().enumerate() {
        if plan.tail_classes.contains(&c) {
            continue;
        }
        let mut idxs = idxs.clone();
        idxs.shuffle(&mut seeding::rng(seeding::mix_u64(
            seeding::mix(plan.seed, "partition/head"),
            c as u64,
        )));
        for (t, idx) in idxs.into_iter().enumerate() {
            assigned[t % n].push(idx);
        }
    }

    let quota = (plan.tail_volume_ratio * head_per_holder(train, plan) as f64).floor() as usize;
    for &c in &plan.tail_classes {
        let n_holders = plan.n_holders();
        let available = by_class[c].len();
        if n_holders * quota > available {
            return Err(Error::InsufficientSamples {
                class: c,
                needed: n_holders * quota,
                available,
            });
        }
        let mut participants: Vec<usize> = (0..n).collect();
        participants.shuffle(&mut seeding::rng(seeding::mix_u64(
            seeding::mix(plan.seed, "partition/tail-holders"),
            c as u64,
        )));
        let holders = &participants[..n_holders];
        let mut idxs = by_class[c].clone();
        idxs.shuffle(&mut seeding::rng(seeding::mix_u64(
            seeding::mix(plan.seed, "partition/tail"),
            c as u64,
        )));
        for (h, &holder) in holders.iter().enumerate() {
            assigned[holder].extend_from_slice(&idxs[h * quota..(h + 1) * quota]);
        }
    }

    assigned
        .iter()
        .map(|idxs| train.subset(idxs))
        .collect::<Result<Vec<_>>>()
}

/// How think-tanker test shards are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardMode {
    /// Equal per-class quotas from the full test set.
    BalancedRandom,
    /// Match each participant's local class histogram.
    LocalMirror,
}

/// Build one test shard per think tanker.
///
/// `balanced_random` draws each shard without replacement from the full
/// test set with equal per-class quotas (`shard_size` rounded down to a
/// multiple of the class count); shards may overlap each other.
/// `local_mirror` sizes each shard's classes after the matching
/// partition's histogram; classes absent locally are absent from the
/// shard.
pub fn sample_test_shards(
    test: &Dataset,
    n_shards: usize,
    shard_size: usize,
    mode: ShardMode,
    seed: u64,
    partitions: Option<&[Dataset]>,
) -> Result<Vec<Dataset>> {
    if shard_size > test.len() {
        return Err(Error::invalid(format!(
            "shard_size {} exceeds test set size {}",
            shard_size,
            test.len()
        )));
    }
    let by_class = test.class_indices();
    match mode {
        ShardMode::BalancedRandom => {
            let n_classes = test.n_classes();
            if shard_size < n_classes {
                return Err(Error::invalid(format!(
                    "balanced shards need shard_size >= {n_classes} (one per class)"
                )));
            }
            let quota = shard_size / n_classes;
            for (c, idxs) in by_class.iter().enumerate() {
                if idxs.len() < quota {
                    return Err(Error::InsufficientSamples {
                        class: c,
                        needed: quota,
                        available: idxs.len(),
                    });
                }
            }
            (0..n_shards)
                .map(|s| {
                    let mut picked = Vec::with_capacity(quota * n_classes);
                    for (c, idxs) in by_class.iter().enumerate() {
                        draw_without_replacement(
                            idxs,
                            quota,
                            seeding::mix_u64(
                                seeding::mix_u64(seeding::mix(seed, "shard"), s as u64),
                                c as u64,
                            ),
                            &mut picked,
                        );
                    }
                    test.subset(&picked)
                })
                .collect()
        }
        ShardMode::LocalMirror => {
            let partitions = partitions.ok_or_else(|| {
                Error::invalid("local_mirror shards require the participant partitions")
            })?;
            if partitions.len() != n_shards {
                return Err(Error::invalid(format!(
                    "local_mirror: {} partitions vs {} shards requested",
                    partitions.len(),
                    n_shards
                )));
            }
            partitions
                .iter()
                .enumerate()
                .map(|(s, part)| {
                    let quotas = mirror_quotas(&part.histogram(), part.len(), shard_size);
                    let mut picked = Vec::with_capacity(shard_size);
                    for (c, &q) in quotas.iter().enumerate() {
                        if q == 0 {
                            continue;
                        }
                        let pool = by_class.get(c).map_or(&[][..], |v| &v[..]);
                        if pool.len() < q {
                            return Err(Error::InsufficientSamples {
                                class: c,
                                needed: q,
                                available: pool.len(),
                            });
                        }
                        draw_without_replacement(
                            pool,
                            q,
                            seeding::mix_u64(
                                seeding::mix_u64(seeding::mix(seed, "mirror-shard"), s as u64),
                                c as u64,
                            ),
                            &mut picked,
                        );
                    }
                    test.subset(&picked)
                })
                .collect()
        }
    }
}

/// Largest-remainder apportionment of `shard_size` across classes in
/// proportion to `hist`; ties go to the lower class id.
fn mirror_quotas(hist: &[usize], total: usize, shard_size: usize) -> Vec<usize> {
    if total == 0 {
        return vec![0; hist.len()];
    }
    let mut quotas = vec![0usize; hist.len()];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(hist.len());
    let mut assigned = 0usize;
    for (c, &count) in hist.iter().enumerate() {
        let exact = shard_size as f64 * count as f64 / total as f64;
        let base = exact.floor() as usize;
        quotas[c] = base;
        assigned += base;
        if count > 0 {
            remainders.push((exact - base as f64, c));
        }
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = shard_size.saturating_sub(assigned);
    for &(_, c) in &remainders {
        if leftover == 0 {
            break;
        }
        quotas[c] += 1;
        leftover -= 1;
    }
    quotas
}

fn draw_without_replacement(pool: &[usize], k: usize, seed: u64, out: &mut Vec<usize>) {
    let mut rng = seeding::rng(seed);
    let picked = rand::seq::index::sample(&mut rng, pool.len(), k);
    out.extend(picked.iter().map(|i| pool[i]));
}
