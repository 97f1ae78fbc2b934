//! Label-agreement statistics over 2-NN neighborhoods.
//!
//! On a noisy-label-balanced dataset, the fraction of positive anchors whose
//! two nearest neighbors are also positive (`pa`) and the mirror-image
//! negative fraction (`na`) order the class noise rates: the class with the
//! *smaller* agreement carries *more* noise, and `pa − na` has the opposite
//! sign of `e₊ − e₋`. The per-class generalization (`ka`) orders the classes
//! of a K-class problem the same way. These statistics need only noisy
//! labels — no ground truth.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::neighbors::NeighborIndex;

/// An exact empirical fraction: `hits` agreeing anchors out of `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub hits: u64,
    pub total: u64,
}

impl Fraction {
    pub fn value(&self) -> f64 {
        self.hits as f64 / self.total as f64
    }
}

/// Per-class 2-NN agreement fractions. A class with no anchors has an absent
/// entry rather than a fabricated zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementStats {
    per_class: Vec<Option<Fraction>>,
}

impl AgreementStats {
    pub fn class_count(&self) -> usize {
        self.per_class.len()
    }

    /// Agreement fraction of class `k` anchors (absent when the class has no
    /// anchors).
    pub fn ka(&self, k: usize) -> Option<Fraction> {
        self.per_class.get(k).copied().flatten()
    }

    /// Positive agreement — class-1 anchors of a binary problem.
    pub fn pa(&self) -> Option<Fraction> {
        if self.class_count() == 2 {
            self.ka(1)
        } else {
            None
        }
    }

    /// Negative agreement — class-0 anchors of a binary problem.
    pub fn na(&self) -> Option<Fraction> {
        if self.class_count() == 2 {
            self.ka(0)
        } else {
            None
        }
    }

    /// `pa − na`, when both are present.
    pub fn gap(&self) -> Option<f64> {
        Some(self.pa()?.value() - self.na()?.value())
    }
}

/// Count, for every class, the fraction of its anchors whose two nearest
/// neighbors share the anchor's noisy label. The caller is responsible for
/// having balanced the dataset first when the balanced-form closed-form
/// predictions are wanted; this operation never re-balances.
pub fn estimate_agreements(ds: &LabeledDataset, idx: &NeighborIndex) -> Result<AgreementStats> {
    if idx.len() != ds.len() {
        return Err(Error::DimensionMismatch(format!(
            "index over {} rows used with a {}-row dataset",
            idx.len(),
            ds.len()
        )));
    }
    let labels = ds.noisy_labels();
    let mut hits = vec![0u64; ds.class_count()];
    let mut totals = vec![0u64; ds.class_count()];
    for (i, &y) in labels.iter().enumerate() {
        let [a, b] = idx.neighbors(i);
        totals[y as usize] += 1;
        hits[y as usize] += u64::from(labels[a] == y && labels[b] == y);
    }
    let per_class = hits
        .into_iter()
        .zip(totals)
        .map(|(hits, total)| (total > 0).then_some(Fraction { hits, total }))
        .collect();
    Ok(AgreementStats { per_class })
}

/// Positive-agreement fractions of group a (id 0) and group b (id 1),
/// counted over a group-restricted index (see
/// [`crate::neighbors::build_index_grouped`]) so neighborhoods never cross
/// groups. The dataset should be noisy-label-balanced within each group.
pub fn estimate_group_agreements(
    ds: &LabeledDataset,
    idx: &NeighborIndex,
) -> Result<(Fraction, Fraction)> {
    let groups = ds.groups().ok_or(Error::MissingGroups)?;
    if ds.group_count() != 2 || ds.class_count() != 2 {
        return Err(Error::DimensionMismatch(
            "group agreement compares exactly 2 groups on binary labels".into(),
        ));
    }
    if idx.len() != ds.len() {
        return Err(Error::DimensionMismatch(format!(
            "index over {} rows used with a {}-row dataset",
            idx.len(),
            ds.len()
        )));
    }
    let labels = ds.noisy_labels();
    let mut hits = [0u64; 2];
    let mut totals = [0u64; 2];
    for (i, (&y, &z)) in labels.iter().zip(groups).enumerate() {
        if y != 1 {
            continue;
        }
        let [a, b] = idx.neighbors(i);
        totals[z as usize] += 1;
        hits[z as usize] += u64::from(labels[a] == 1 && labels[b] == 1);
    }
    for (z, name) in [(0usize, "a"), (1, "b")] {
        if totals[z] == 0 {
            return Err(Error::AbsentStatistic(format!(
                "group {name} has no positive anchors"
            )));
        }
    }
    Ok((
        Fraction { hits: hits[0], total: totals[0] },
        Fraction { hits: hits[1], total: totals[1] },
    ))
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if !(0.0..0.5).contains(&value) {
        return Err(Error::InvalidConfig(format!(
            "{name} = {value} outside [0, 0.5)"
        )));
    }
    Ok(())
}

/// The expected `pa − na` on perfectly clusterable, noisy-label-balanced data
/// with class noise rates (e₊, e₋):
///
/// ```text
/// pa − na = 4 · (0.5 − e₊) · (0.5 − e₋) · (e₋ − e₊)
/// ```
///
/// Antisymmetric under swapping the rates; zero exactly at e₊ = e₋. Only the
/// sign is load-bearing downstream, and the constant is pinned by
/// Monte-Carlo tests.
pub fn agreement_gap_closed_form(e_plus: f64, e_minus: f64) -> Result<f64> {
    check_rate("e_plus", e_plus)?;
    check_rate("e_minus", e_minus)?;
    Ok(4.0 * (0.5 - e_plus) * (0.5 - e_minus) * (e_minus - e_plus))
}

/// Which binary class carries more noise, according to the agreement gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// `pa − na < −gamma`: positives are noisier (e₊ > e₋).
    PositiveNoisier,
    /// `pa − na > gamma`: negatives are noisier (e₋ > e₊).
    NegativeNoisier,
    /// `|pa − na| ≤ gamma`.
    Balanced,
}

/// Read the sign of `pa − na` against the tolerance `gamma`.
pub fn detect_noisier_class(stats: &AgreementStats, gamma: f64) -> Result<Verdict> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidConfig(format!("gamma = {gamma} must be ≥ 0")));
    }
    let pa = stats
        .pa()
        .ok_or_else(|| Error::AbsentStatistic("pa (no positive anchors)".into()))?;
    let na = stats
        .na()
        .ok_or_else(|| Error::AbsentStatistic("na (no negative anchors)".into()))?;
    let gap = pa.value() - na.value();
    Ok(if gap > gamma {
        Verdict::NegativeNoisier
    } else if gap < -gamma {
        Verdict::PositiveNoisier
    } else {
        Verdict::Balanced
    })
}

/// Order the classes from cleanest to noisiest by descending agreement.
/// Classes whose agreement values sit within `gamma` of each other (chained)
/// share a tier. Every class must have an agreement value.
pub fn rank_classes_by_ka(stats: &AgreementStats, gamma: f64) -> Result<Vec<Vec<usize>>> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidConfig(format!("gamma = {gamma} must be ≥ 0")));
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(stats.class_count());
    for k in 0..stats.class_count() {
        let f = stats
            .ka(k)
            .ok_or_else(|| Error::AbsentStatistic(format!("class {k} has no anchors")))?;
        scored.push((k, f.value()));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite fractions").then(a.0.cmp(&b.0)));
    let mut tiers: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::INFINITY;
    for (k, v) in scored {
        match tiers.last_mut() {
            Some(tier) if last - v <= gamma => tier.push(k),
            _ => tiers.push(vec![k]),
        }
        last = v;
    }
    Ok(tiers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        generate_clusterable, inject_noise, resample_balanced, BalanceBy, NoiseSpec,
        SyntheticConfig, TransitionMatrix,
    };
    use crate::neighbors::{build_index, build_index_grouped};
    use rand::Rng;

    #[test]
    fn degenerate_single_class_reports_absent_na() {
        let feats: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = LabeledDataset::new(feats, 1, vec![1; 10], 2).unwrap();
        let idx = build_index(&ds).unwrap();
        let stats = estimate_agreements(&ds, &idx).unwrap();
        assert_eq!(stats.pa().unwrap().value(), 1.0);
        assert!(stats.na().is_none());
        assert!(matches!(
            detect_noisier_class(&stats, 0.001),
            Err(Error::AbsentStatistic(_))
        ));
    }

    #[test]
    fn perfect_triads_agree_fully() {
        let feats = vec![0.0, 0.1, 0.2, 100.0, 100.1, 100.2];
        let ds = LabeledDataset::new(feats, 1, vec![1, 1, 1, 0, 0, 0], 2).unwrap();
        let idx = build_index(&ds).unwrap();
        let stats = estimate_agreements(&ds, &idx).unwrap();
        assert_eq!(stats.pa().unwrap().value(), 1.0);
        assert_eq!(stats.na().unwrap().value(), 1.0);
        assert_eq!(stats.gap(), Some(0.0));
    }

    #[test]
    fn closed_form_matches_pinned_values() {
        assert!((agreement_gap_closed_form(0.2, 0.4).unwrap() - 0.024).abs() < 1e-15);
        assert_eq!(agreement_gap_closed_form(0.2, 0.2).unwrap(), 0.0);
        assert!((agreement_gap_closed_form(0.4, 0.2).unwrap() + 0.024).abs() < 1e-15);
        assert!(agreement_gap_closed_form(0.5, 0.2).is_err());
        assert!(agreement_gap_closed_form(0.2, -0.1).is_err());
    }

    #[test]
    fn closed_form_is_antisymmetric() {
        for a in [0.0, 0.1, 0.23, 0.4] {
            for b in [0.05, 0.2, 0.44] {
                let ab = agreement_gap_closed_form(a, b).unwrap();
                let ba = agreement_gap_closed_form(b, a).unwrap();
                assert_eq!(ab, -ba);
            }
        }
    }

    fn stats_from(pa: (u64, u64), na: (u64, u64)) -> AgreementStats {
        AgreementStats {
            per_class: vec![
                Some(Fraction { hits: na.0, total: na.1 }),
                Some(Fraction { hits: pa.0, total: pa.1 }),
            ],
        }
    }

    #[test]
    fn verdict_follows_gap_sign() {
        let s = stats_from((352, 1000), (328, 1000));
        assert_eq!(detect_noisier_class(&s, 0.001).unwrap(), Verdict::NegativeNoisier);
        let s = stats_from((300, 1000), (330, 1000));
        assert_eq!(detect_noisier_class(&s, 0.001).unwrap(), Verdict::PositiveNoisier);
        let s = stats_from((330, 1000), (330, 1000));
        assert_eq!(detect_noisier_class(&s, 0.0).unwrap(), Verdict::Balanced);
    }

    #[test]
    fn ka_ranking_sorts_and_ties() {
        let stats = AgreementStats {
            per_class: vec![
                Some(Fraction { hits: 9, total: 10 }),
                Some(Fraction { hits: 5, total: 10 }),
                Some(Fraction { hits: 7, total: 10 }),
            ],
        };
        assert_eq!(
            rank_classes_by_ka(&stats, 0.0).unwrap(),
            vec![vec![0], vec![2], vec![1]]
        );
        let flat = AgreementStats {
            per_class: vec![Some(Fraction { hits: 5, total: 10 }); 3],
        };
        assert_eq!(rank_classes_by_ka(&flat, 0.0).unwrap(), vec![vec![0, 1, 2]]);
        let missing = AgreementStats {
            per_class: vec![Some(Fraction { hits: 5, total: 10 }), None],
        };
        assert!(rank_classes_by_ka(&missing, 0.0).is_err());
    }

    #[test]
    fn balanced_estimates_match_closed_form() {
        // Clean prior chosen so the noisy labels come out balanced, which is
        // the regime where the closed form applies exactly.
        let mut cfg = SyntheticConfig::new(20_000, 5, 8, 41);
        cfg.cluster_spread = 0.05;
        cfg.class_balance = 0.25;
        let ds = generate_clusterable(&cfg).unwrap();
        let ds = inject_noise(
            &ds,
            &NoiseSpec::BinaryClass { e_minus: 0.4, e_plus: 0.2 },
            17,
        )
        .unwrap();
        let ds = resample_balanced(&ds, BalanceBy::Class, 23).unwrap();
        let idx = build_index(&ds).unwrap();
        let stats = estimate_agreements(&ds, &idx).unwrap();
        let pa = stats.pa().unwrap().value();
        let na = stats.na().unwrap().value();
        assert!((pa - 0.352).abs() < 0.02, "pa = {pa}");
        assert!((na - 0.328).abs() < 0.02, "na = {na}");
        assert_eq!(
            detect_noisier_class(&stats, 0.001).unwrap(),
            Verdict::NegativeNoisier
        );
    }

    #[test]
    fn group_agreement_gap_matches_closed_form() {
        let mut cfg = SyntheticConfig::new(30_000, 5, 8, 51);
        cfg.cluster_spread = 0.05;
        let ds = generate_clusterable(&cfg).unwrap();
        let mut rng = crate::rng::stream(99, crate::rng::TAG_GROUPS);
        let groups: Vec<u32> = (0..ds.len()).map(|_| rng.gen_range(0..2)).collect();
        let ds = ds.with_groups(groups, 2).unwrap();
        let ds = inject_noise(&ds, &NoiseSpec::GroupSymmetric { e_a: 0.2, e_b: 0.4 }, 7).unwrap();
        let ds = resample_balanced(&ds, BalanceBy::Group, 31).unwrap();
        let idx = build_index_grouped(&ds).unwrap();
        let (pa_a, pa_b) = estimate_group_agreements(&ds, &idx).unwrap();
        // (1−e_a)³+e_a³ − (1−e_b)³−e_b³ = 0.52 − 0.28 = 0.24
        let gap = pa_a.value() - pa_b.value();
        assert!((gap - 0.24).abs() < 0.03, "gap = {gap}");
    }

    #[test]
    fn group_agreement_requires_positive_anchors() {
        let feats: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let labels = vec![1, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0];
        let groups = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let ds = LabeledDataset::new(feats, 1, labels, 2)
            .unwrap()
            .with_groups(groups, 2)
            .unwrap();
        let idx = build_index_grouped(&ds).unwrap();
        assert!(matches!(
            estimate_group_agreements(&ds, &idx),
            Err(Error::AbsentStatistic(_))
        ));
    }

    #[test]
    fn multiclass_ka_ranking_recovers_rate_order() {
        let mut cfg = SyntheticConfig::new(40_000, 5, 8, 61);
        cfg.cluster_spread = 0.05;
        cfg.class_count = 4;
        let ds = generate_clusterable(&cfg).unwrap();
        // uniform-diagonal noise: class k keeps its label w.p. 1−e_k, the
        // rest of the column mass spread evenly
        let e = [0.1, 0.2, 0.3, 0.15];
        let mut entries = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                entries[j * 4 + i] = if i == j { 1.0 - e[i] } else { e[i] / 3.0 };
            }
        }
        let t = TransitionMatrix::new(4, entries).unwrap();
        let ds = inject_noise(&ds, &NoiseSpec::Matrix(t), 19).unwrap();
        let ds = resample_balanced(&ds, BalanceBy::Class, 3).unwrap();
        let idx = build_index(&ds).unwrap();
        let stats = estimate_agreements(&ds, &idx).unwrap();
        let tiers = rank_classes_by_ka(&stats, 0.0).unwrap();
        let order: Vec<usize> = tiers.into_iter().flatten().collect();
        assert_eq!(order, vec![0, 3, 1, 2]);
    }
}
