//! Datasets, synthetic generation, noise injection, and resampling.
//!
//! Labels are stored as class ids `0..k`. For binary problems the ids map to
//! signs at the API boundary:
//!
//! | id | sign |
//! |----|------|
//! | 0  | −1   |
//! | 1  | +1   |
//!
//! so "positive class" always means id 1. Group tags, when present, are ids
//! `0..g`; the two-group operations call group 0 "a" and group 1 "b".

mod csv;
mod noise;
mod synth;

pub use csv::{load_csv, save_csv, CsvSchema, LabelEncoding};
pub use noise::{generate_noise_matrix, inject_noise, NoiseSpec, TransitionMatrix};
pub use synth::{
    generate_clusterable, generate_grouped_clusterable, GroupSyntheticConfig, SyntheticConfig,
};

use crate::error::{Error, Result};
use crate::rng;
use rand::seq::index::sample;

/// Map a stored binary class id to its sign representation.
pub fn label_to_sign(label: u32) -> i32 {
    if label == 1 {
        1
    } else {
        -1
    }
}

/// Map a sign (−1 / +1) to the stored binary class id.
pub fn sign_to_label(sign: i32) -> u32 {
    if sign > 0 {
        1
    } else {
        0
    }
}

/// A feature matrix with noisy labels, optional clean labels, and optional
/// group tags. Immutable after construction; all operations that "modify" a
/// dataset return a new one.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>, // row-major, n × dim
    dim: usize,
    noisy_labels: Vec<u32>,
    clean_labels: Option<Vec<u32>>,
    groups: Option<Vec<u32>>,
    class_count: usize,
    group_count: usize,
}

impl LabeledDataset {
    /// Build a dataset from a row-major feature matrix and noisy labels.
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        noisy_labels: Vec<u32>,
        class_count: usize,
    ) -> Result<Self> {
        let n = noisy_labels.len();
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dimension must be ≥ 1".into()));
        }
        if class_count == 0 {
            return Err(Error::InvalidConfig("class count must be ≥ 1".into()));
        }
        if features.len() != n * dim {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix has {} values, expected {} ({} rows × {} dims)",
                features.len(),
                n * dim,
                n,
                dim
            )));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature value at row {}, column {}",
                bad / dim,
                bad % dim
            )));
        }
        check_ids(&noisy_labels, class_count, "label")?;
        Ok(LabeledDataset {
            features,
            dim,
            noisy_labels,
            clean_labels: None,
            groups: None,
            class_count,
            group_count: 0,
        })
    }

    /// Attach clean labels (same length and class universe as the noisy ones).
    pub fn with_clean(mut self, clean_labels: Vec<u32>) -> Result<Self> {
        if clean_labels.len() != self.noisy_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} clean labels for {} rows",
                clean_labels.len(),
                self.noisy_labels.len()
            )));
        }
        check_ids(&clean_labels, self.class_count, "clean label")?;
        self.clean_labels = Some(clean_labels);
        Ok(self)
    }

    /// Attach group tags.
    pub fn with_groups(mut self, groups: Vec<u32>, group_count: usize) -> Result<Self> {
        if groups.len() != self.noisy_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} group tags for {} rows",
                groups.len(),
                self.noisy_labels.len()
            )));
        }
        if group_count == 0 {
            return Err(Error::InvalidConfig("group count must be ≥ 1".into()));
        }
        check_ids(&groups, group_count, "group")?;
        self.groups = Some(groups);
        self.group_count = group_count;
        Ok(self)
    }

    /// Replace the noisy labels, keeping everything else. The replacement
    /// must respect the class universe.
    pub fn with_noisy_labels(mut self, noisy_labels: Vec<u32>) -> Result<Self> {
        if noisy_labels.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                noisy_labels.len(),
                self.len()
            )));
        }
        check_ids(&noisy_labels, self.class_count, "label")?;
        self.noisy_labels = noisy_labels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Number of groups; 0 when the dataset carries no group tags.
    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn noisy_labels(&self) -> &[u32] {
        &self.noisy_labels
    }

    pub fn clean_labels(&self) -> Option<&[u32]> {
        self.clean_labels.as_deref()
    }

    pub fn groups(&self) -> Option<&[u32]> {
        self.groups.as_deref()
    }

    /// The subset of rows at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut noisy = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.feature_row(i));
            noisy.push(self.noisy_labels[i]);
        }
        LabeledDataset {
            features,
            dim: self.dim,
            noisy_labels: noisy,
            clean_labels: self
                .clean_labels
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            groups: self
                .groups
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
            class_count: self.class_count,
            group_count: self.group_count,
        }
    }

    /// Rows of each noisy-label class.
    pub(crate) fn rows_by_label(&self) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); self.class_count];
        for (i, &l) in self.noisy_labels.iter().enumerate() {
            by[l as usize].push(i);
        }
        by
    }
}

fn check_ids(ids: &[u32], count: usize, what: &str) -> Result<()> {
    if let Some((i, &bad)) = ids.iter().enumerate().find(|(_, &v)| v as usize >= count) {
        return Err(Error::InvalidConfig(format!(
            "{what} {bad} at row {i} exceeds universe of {count}"
        )));
    }
    Ok(())
}

/// What to balance over in [`resample_balanced`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceBy {
    /// Equalize noisy-label counts globally.
    Class,
    /// Equalize noisy-label counts within each group.
    Group,
}

/// Downsample majority noisy-label classes (without replacement) until every
/// class — per group, for [`BalanceBy::Group`] — has the minority count.
/// Retained rows keep their original relative order; clean labels and groups
/// are preserved. Never duplicates a row.
pub fn resample_balanced(ds: &LabeledDataset, by: BalanceBy, seed: u64) -> Result<LabeledDataset> {
    let mut rng = rng::stream(seed, rng::TAG_RESAMPLE);
    let mut retained: Vec<usize> = Vec::new();
    match by {
        BalanceBy::Class => {
            let cells = ds.rows_by_label();
            balance_cells(&cells, &mut retained, &mut rng, |c| format!("class {c}"))?;
        }
        BalanceBy::Group => {
            let groups = ds.groups().ok_or(Error::MissingGroups)?;
            for g in 0..ds.group_count() {
                let mut cells = vec![Vec::new(); ds.class_count()];
                for (i, (&l, &gi)) in ds.noisy_labels.iter().zip(groups).enumerate() {
                    if gi as usize == g {
                        cells[l as usize].push(i);
                    }
                }
                balance_cells(&cells, &mut retained, &mut rng, |c| {
                    format!("class {c} in group {g}")
                })?;
            }
        }
    }
    retained.sort_unstable();
    Ok(ds.subset(&retained))
}

fn balance_cells(
    cells: &[Vec<usize>],
    retained: &mut Vec<usize>,
    rng: &mut rand_chacha::ChaCha8Rng,
    describe: impl Fn(usize) -> String,
) -> Result<()> {
    let target = cells.iter().map(|c| c.len()).min().unwrap_or(0);
    if target == 0 {
        let empty = cells.iter().position(|c| c.is_empty()).unwrap_or(0);
        return Err(Error::EmptyCell(format!(
            "{} has no samples to balance against",
            describe(empty)
        )));
    }
    for cell in cells {
        if cell.len() == target {
            retained.extend_from_slice(cell);
        } else {
            let pick = sample(rng, cell.len(), target);
            retained.extend(pick.iter().map(|j| cell[j]));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(labels: &[u32], k: usize) -> LabeledDataset {
        let features: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
        LabeledDataset::new(features, 1, labels.to_vec(), k).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(LabeledDataset::new(vec![0.0; 5], 2, vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![0.0, f64::NAN], 1, vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![0.0, 1.0], 1, vec![0, 2], 2).is_err());
    }

    #[test]
    fn clean_and_group_validation() {
        let ds = toy(&[0, 1, 1], 2);
        assert!(ds.clone().with_clean(vec![0, 1]).is_err());
        assert!(ds.clone().with_clean(vec![0, 1, 3]).is_err());
        assert!(ds.clone().with_groups(vec![0, 1, 2], 2).is_err());
        let ds = ds.with_clean(vec![0, 1, 0]).unwrap();
        assert_eq!(ds.clean_labels(), Some(&[0, 1, 0][..]));
    }

    #[test]
    fn resample_downsamples_majority() {
        // 60 positive, 40 negative → 40 + 40.
        let labels: Vec<u32> = (0..100).map(|i| u32::from(i < 60)).collect();
        let ds = toy(&labels, 2);
        let out = resample_balanced(&ds, BalanceBy::Class, 7).unwrap();
        assert_eq!(out.len(), 80);
        let pos = out.noisy_labels().iter().filter(|&&l| l == 1).count();
        assert_eq!(pos, 40);
    }

    #[test]
    fn resample_keeps_balanced_input() {
        let labels: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let ds = toy(&labels, 2);
        let out = resample_balanced(&ds, BalanceBy::Class, 7).unwrap();
        assert_eq!(out.len(), 100);
    }

    #[test]
    fn resample_by_group_balances_within_each_group() {
        // group a: 70 pos / 30 neg; group b: 45 pos / 55 neg.
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for i in 0..100 {
            labels.push(u32::from(i < 70));
            groups.push(0);
        }
        for i in 0..100 {
            labels.push(u32::from(i < 45));
            groups.push(1);
        }
        let n = labels.len();
        let ds = LabeledDataset::new((0..n).map(|i| i as f64).collect(), 1, labels, 2)
            .unwrap()
            .with_groups(groups, 2)
            .unwrap();
        let out = resample_balanced(&ds, BalanceBy::Group, 3).unwrap();
        assert_eq!(out.len(), 30 * 2 + 45 * 2);
        let g = out.groups().unwrap();
        let l = out.noisy_labels();
        let count = |gi: u32, li: u32| {
            g.iter()
                .zip(l)
                .filter(|(&gv, &lv)| gv == gi && lv == li)
                .count()
        };
        assert_eq!(count(0, 0), 30);
        assert_eq!(count(0, 1), 30);
        assert_eq!(count(1, 0), 45);
        assert_eq!(count(1, 1), 45);
    }

    #[test]
    fn resample_errors_on_empty_class() {
        let ds = toy(&[1, 1, 1], 2);
        assert!(matches!(
            resample_balanced(&ds, BalanceBy::Class, 0),
            Err(Error::EmptyCell(_))
        ));
    }

    #[test]
    fn resample_is_deterministic_and_subset() {
        let labels: Vec<u32> = (0..50).map(|i| u32::from(i % 3 == 0)).collect();
        let ds = toy(&labels, 2);
        let a = resample_balanced(&ds, BalanceBy::Class, 11).unwrap();
        let b = resample_balanced(&ds, BalanceBy::Class, 11).unwrap();
        assert_eq!(a, b);
        // every retained row exists in the input (features are unique here)
        for i in 0..a.len() {
            let f = a.feature_row(i)[0];
            assert!(ds.features().contains(&f));
        }
    }

    #[test]
    fn sign_mapping_round_trips() {
        assert_eq!(label_to_sign(0), -1);
        assert_eq!(label_to_sign(1), 1);
        assert_eq!(sign_to_label(-1), 0);
        assert_eq!(sign_to_label(1), 1);
    }
}
