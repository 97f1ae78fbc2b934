//! Noise models and label corruption.

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

/// A K×K label transition matrix. `entry(j, i)` is the probability of
/// observing noisy label `j` when the clean label is `i`, so each column sums
/// to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    entries: Vec<f64>, // row-major
}

impl TransitionMatrix {
    /// Build from row-major entries; validates shape and column-stochasticity.
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidConfig("transition matrix needs k ≥ 2".into()));
        }
        if entries.len() != k * k {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {k}×{k} matrix",
                entries.len()
            )));
        }
        let m = TransitionMatrix { k, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(k: usize) -> Result<Self> {
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            entries[i * k + i] = 1.0;
        }
        TransitionMatrix::new(k, entries)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// P(noisy = j | clean = i).
    pub fn entry(&self, j: usize, i: usize) -> f64 {
        self.entries[j * self.k + i]
    }

    /// Column `i`: the noisy-label distribution of clean class `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.k).map(|j| self.entry(j, i)).collect()
    }

    fn validate(&self) -> Result<()> {
        for (pos, &v) in self.entries.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "transition entry ({}, {}) is {v}",
                    pos / self.k,
                    pos % self.k
                )));
            }
        }
        for i in 0..self.k {
            let sum: f64 = (0..self.k).map(|j| self.entry(j, i)).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "transition column {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// How labels get corrupted.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Binary class-dependent noise: a clean positive flips with probability
    /// `e_plus`, a clean negative with probability `e_minus`.
    BinaryClass { e_minus: f64, e_plus: f64 },
    /// Binary group-dependent symmetric noise: any label in group a (id 0)
    /// flips with probability `e_a`, in group b (id 1) with `e_b`.
    GroupSymmetric { e_a: f64, e_b: f64 },
    /// General K-class noise via a transition matrix.
    Matrix(TransitionMatrix),
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if !(0.0..0.5).contains(&value) {
        return Err(Error::InvalidConfig(format!(
            "{name} = {value} outside [0, 0.5): labels must stay informative"
        )));
    }
    Ok(())
}

impl NoiseSpec {
    /// Check rate ranges (scalar rates must stay below one half) and matrix
    /// column-stochasticity.
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::BinaryClass { e_minus, e_plus } => {
                check_rate("e_minus", *e_minus)?;
                check_rate("e_plus", *e_plus)
            }
            NoiseSpec::GroupSymmetric { e_a, e_b } => {
                check_rate("e_a", *e_a)?;
                check_rate("e_b", *e_b)
            }
            NoiseSpec::Matrix(t) => t.validate(),
        }
    }
}

/// Corrupt the clean labels of `ds` under `spec`, independently per row, and
/// return the dataset with its noisy labels replaced (clean labels and groups
/// are untouched). Deterministic in `seed`.
pub fn inject_noise(ds: &LabeledDataset, spec: &NoiseSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let clean = ds.clean_labels().ok_or(Error::MissingCleanLabels)?;
    let mut rng = rng::stream(seed, rng::TAG_INJECT);
    let noisy: Vec<u32> = match spec {
        NoiseSpec::BinaryClass { e_minus, e_plus } => {
            if ds.class_count() != 2 {
                return Err(Error::DimensionMismatch(format!(
                    "binary noise on a {}-class dataset",
                    ds.class_count()
                )));
            }
            clean
                .iter()
                .map(|&y| {
                    let flip = rng.gen::<f64>() < if y == 1 { *e_plus } else { *e_minus };
                    if flip {
                        1 - y
                    } else {
                        y
                    }
                })
                .collect()
        }
        NoiseSpec::GroupSymmetric { e_a, e_b } => {
            let groups = ds.groups().ok_or(Error::MissingGroups)?;
            if ds.class_count() != 2 || ds.group_count() != 2 {
                return Err(Error::DimensionMismatch(
                    "group-symmetric noise needs 2 classes and 2 groups".into(),
                ));
            }
            clean
                .iter()
                .zip(groups)
                .map(|(&y, &z)| {
                    let flip = rng.gen::<f64>() < if z == 1 { *e_b } else { *e_a };
                    if flip {
                        1 - y
                    } else {
                        y
                    }
                })
                .collect()
        }
        NoiseSpec::Matrix(t) => {
            if t.k() != ds.class_count() {
                return Err(Error::DimensionMismatch(format!(
                    "{}×{} matrix on a {}-class dataset",
                    t.k(),
                    t.k(),
                    ds.class_count()
                )));
            }
            clean
                .iter()
                .map(|&y| {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for j in 0..t.k() {
                        acc += t.entry(j, y as usize);
                        if u < acc {
                            return j as u32;
                        }
                    }
                    // guard against rounding in the column sum
                    (t.k() - 1) as u32
                })
                .collect()
        }
    };
    ds.clone().with_noisy_labels(noisy)
}

/// Generate a random K×K transition matrix whose diagonal (correct-label)
/// probabilities are equally spaced over `[0.4, 0.4 + noise_gap]` — so the
/// spread between the cleanest and noisiest class is exactly `noise_gap` — in
/// a random class order, with the remaining column mass split across the
/// off-diagonal entries at random. Deterministic in `seed`.
pub fn generate_noise_matrix(k: usize, noise_gap: f64, seed: u64) -> Result<NoiseSpec> {
    if k < 2 {
        return Err(Error::InvalidConfig("noise matrix needs k ≥ 2".into()));
    }
    if !(0.0..0.6).contains(&noise_gap) {
        return Err(Error::InvalidConfig(format!(
            "noise_gap = {noise_gap} outside [0, 0.6): diagonals must fit in [0.4, 1]"
        )));
    }
    let mut rng = rng::stream(seed, rng::TAG_MATRIX);
    let mut diag: Vec<f64> = (0..k)
        .map(|i| {
            if k == 1 {
                0.4
            } else {
                0.4 + noise_gap * i as f64 / (k - 1) as f64
            }
        })
        .collect();
    // Fisher–Yates permutation of the diagonal values
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        diag.swap(i, j);
    }

    let mut entries = vec![0.0; k * k];
    for (i, &d) in diag.iter().enumerate() {
        entries[i * k + i] = d;
        let rest = 1.0 - d;
        if k > 1 {
            let raw: Vec<f64> = (0..k - 1).map(|_| rng.gen::<f64>() + 1e-12).collect();
            let total: f64 = raw.iter().sum();
            let mut r = 0;
            for j in 0..k {
                if j == i {
                    continue;
                }
                entries[j * k + i] = rest * raw[r] / total;
                r += 1;
            }
        }
    }
    Ok(NoiseSpec::Matrix(TransitionMatrix::new(k, entries)?))
}
