//! Noise-rate balancing by deliberate label flipping.
//!
//! When the positive class carries less noise than the negative class (or
//! vice versa), flipping labels of the *cleaner* class at rate ε moves the
//! two effective noise rates toward each other:
//!
//! ```text
//! ê₊ = (1 − e₊)·ε + e₊        ê₋ = (1 − ε)·e₋
//! ê₋ − ê₊ = (e₋ − e₊) − (1 − e₊ + e₋)·ε
//! ```
//!
//! so the gap is linear in ε with root ε₂ = (e₋ − e₊)/(1 − e₊ + e₋). The
//! rates themselves are unobservable without clean labels, but the 2-NN
//! agreement gap of [`crate::agreement`] is a computable proxy with the same
//! root, and [`noise_plus`] bisects it to zero. Group and multi-class
//! variants follow the same pattern with their own agreement statistics.

use crate::agreement::estimate_agreements;
use crate::data::{resample_balanced, BalanceBy, LabeledDataset};
use crate::error::{Error, Result};
use crate::neighbors::{build_index, build_index_grouped, NeighborIndex};
use crate::rng;
use rand::Rng;

/// Parameters for a single [`flip`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipParams {
    /// Flip probability, in [0, 1].
    pub epsilon: f64,
    /// The noisy-label class whose labels are flipped.
    pub target: u32,
    pub seed: u64,
}

/// Outcome of a balancing run.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceResult {
    /// The flip rate actually applied (largest per-class rate for the
    /// multi-class balancer).
    pub epsilon_found: f64,
    /// Bisection steps taken (bracket probes not counted).
    pub iterations: usize,
    /// The agreement gap at termination; within ±gamma iff `success`.
    pub final_gap: f64,
    /// The full input dataset with flips applied on success; the unmodified
    /// input on failure.
    pub balanced_dataset: LabeledDataset,
    pub success: bool,
    /// One `(epsilon_mid, gap)` entry per bisection step.
    pub trace: Vec<(f64, f64)>,
    /// Per-class flip rates, for the multi-class balancer only.
    pub per_class_epsilon: Option<Vec<f64>>,
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if !(0.0..0.5).contains(&value) {
        return Err(Error::InvalidConfig(format!(
            "{name} = {value} outside [0, 0.5)"
        )));
    }
    Ok(())
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidConfig(format!(
            "{name} = {value} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Closed-form post-flip noise rates when noisy-positive labels are flipped
/// with probability ε: `ê₊ = (1−e₊)·ε + e₊`, `ê₋ = (1−ε)·e₋`.
pub fn predicted_flipped_rates(e_plus: f64, e_minus: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_rate("e_plus", e_plus)?;
    check_rate("e_minus", e_minus)?;
    check_probability("epsilon", epsilon)?;
    Ok(((1.0 - e_plus) * epsilon + e_plus, (1.0 - epsilon) * e_minus))
}

/// The post-flip rate gap `ê₋ − ê₊ = (e₋ − e₊) − (1 − e₊ + e₋)·ε`, linear
/// in ε.
pub fn predicted_flipped_gap(e_plus: f64, e_minus: f64, epsilon: f64) -> Result<f64> {
    check_rate("e_plus", e_plus)?;
    check_rate("e_minus", e_minus)?;
    check_probability("epsilon", epsilon)?;
    Ok(e_minus - e_plus - (1.0 - e_plus + e_minus) * epsilon)
}

/// The flip rate that equalizes the two class noise rates:
/// `ε₂ = (e₋ − e₊)/(1 − e₊ + e₋)`. Requires the flipped (positive) class to
/// be the cleaner one, e₊ ≤ e₋. Always strictly below the uninformative rate
/// ε₃ = (0.5 − e₊)/(1 − e₊).
pub fn epsilon_star(e_plus: f64, e_minus: f64) -> Result<f64> {
    check_rate("e_plus", e_plus)?;
    check_rate("e_minus", e_minus)?;
    if e_plus > e_minus {
        return Err(Error::InvalidConfig(format!(
            "epsilon_star needs e_plus ≤ e_minus, got ({e_plus}, {e_minus}): \
             orient the flip toward the cleaner class first"
        )));
    }
    Ok((e_minus - e_plus) / (1.0 - e_plus + e_minus))
}

/// Flip each noisy label equal to `params.target` to the opposite binary
/// class with probability `params.epsilon`. Features, clean labels, and
/// groups are untouched. Deterministic in `params.seed`.
pub fn flip(ds: &LabeledDataset, params: &FlipParams) -> Result<LabeledDataset> {
    if ds.class_count() != 2 {
        return Err(Error::InvalidConfig(format!(
            "binary flip on a {}-class dataset; use flip_multiclass",
            ds.class_count()
        )));
    }
    check_probability("epsilon", params.epsilon)?;
    if params.target > 1 {
        return Err(Error::InvalidConfig(format!(
            "flip target {} is not a binary class",
            params.target
        )));
    }
    let mut rng = rng::stream(params.seed, rng::TAG_FLIP);
    let labels = ds
        .noisy_labels()
        .iter()
        .map(|&y| {
            if y == params.target && rng.gen::<f64>() < params.epsilon {
                1 - y
            } else {
                y
            }
        })
        .collect();
    ds.clone().with_noisy_labels(labels)
}

/// Flip each label of class k away with probability `per_class_epsilon[k]`,
/// the destination drawn uniformly over the other K−1 classes. With K = 2
/// and rates `(0, ε)` or `(ε, 0)` this reduces exactly to [`flip`].
pub fn flip_multiclass(
    ds: &LabeledDataset,
    per_class_epsilon: &[f64],
    seed: u64,
) -> Result<LabeledDataset> {
    let k = ds.class_count();
    if per_class_epsilon.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} flip rates for {k} classes",
            per_class_epsilon.len()
        )));
    }
    for (c, &eps) in per_class_epsilon.iter().enumerate() {
        check_probability(&format!("epsilon[{c}]"), eps)?;
    }
    let mut rng = rng::stream(seed, rng::TAG_FLIP);
    let labels = ds
        .noisy_labels()
        .iter()
        .map(|&y| {
            let eps = per_class_epsilon[y as usize];
            // zero-rate classes draw nothing, so binary (0, ε) consumes the
            // stream exactly like the binary flip
            if eps > 0.0 && rng.gen::<f64>() < eps {
                if k == 2 {
                    1 - y
                } else {
                    let d = rng.gen_range(0..k - 1) as u32;
                    if d >= y {
                        d + 1
                    } else {
                        d
                    }
                }
            } else {
                y
            }
        })
        .collect();
    ds.clone().with_noisy_labels(labels)
}

/// Pre-drawn per-row uniforms shared by every gap evaluation of one
/// balancing run. Reusing one draw per row across all ε values keeps the
/// estimated gap monotone in ε (common random numbers); independent draws
/// per evaluation would jitter the bracket near the root.
fn draw_uniforms(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::TAG_FLIP);
    (0..n).map(|_| rng.gen()).collect()
}

fn apply_flip_with(
    ds: &LabeledDataset,
    target: u32,
    epsilon: f64,
    uniforms: &[f64],
    out: &mut Vec<u32>,
) {
    out.clear();
    out.extend(ds.noisy_labels().iter().zip(uniforms).map(|(&y, &u)| {
        if y == target && u < epsilon {
            1 - y
        } else {
            y
        }
    }));
}

/// Per-class 2-NN agreement fractions of a label vector over a fixed index.
fn agreement_of(labels: &[u32], idx: &NeighborIndex, k: usize) -> Vec<Option<f64>> {
    let mut hits = vec![0u64; k];
    let mut totals = vec![0u64; k];
    for (i, &y) in labels.iter().enumerate() {
        let [a, b] = idx.neighbors(i);
        totals[y as usize] += 1;
        hits[y as usize] += u64::from(labels[a] == y && labels[b] == y);
    }
    hits.iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect()
}

/// Driver shared by the balancers: establish a bracket for a decreasing gap
/// function and bisect it to within `gamma` of zero.
struct Bisection {
    epsilon: f64,
    final_gap: f64,
    iterations: usize,
    trace: Vec<(f64, f64)>,
    success: bool,
}

fn bisect_gap(
    mut eval: impl FnMut(f64) -> f64,
    gap_at_zero: f64,
    gamma: f64,
    r_candidates: &[f64],
    max_iterations: usize,
) -> Bisection {
    let mut out = Bisection {
        epsilon: 0.0,
        final_gap: gap_at_zero,
        iterations: 0,
        trace: Vec::new(),
        success: false,
    };
    if gap_at_zero.abs() <= gamma {
        out.success = true;
        return out;
    }
    // bracket: find ε_r with gap < −gamma (or land inside the tolerance)
    let mut right = None;
    for &r in r_candidates {
        let c = eval(r);
        if c.abs() <= gamma {
            out.epsilon = r;
            out.final_gap = c;
            out.success = true;
            return out;
        }
        if c < -gamma {
            right = Some(r);
            break;
        }
    }
    let Some(mut eps_r) = right else {
        return out; // no bracket: success stays false, ε stays 0
    };
    let mut eps_l = 0.0;
    while out.iterations < max_iterations {
        let mid = 0.5 * (eps_l + eps_r);
        let c = eval(mid);
        out.iterations += 1;
        out.trace.push((mid, c));
        out.epsilon = mid;
        out.final_gap = c;
        if c.abs() <= gamma {
            out.success = true;
            return out;
        }
        if c > gamma {
            eps_l = mid;
        } else {
            eps_r = mid;
        }
    }
    out
}

const BRACKET_GRID: [f64; 3] = [0.1, 0.2, 0.3];
/// The group balancer's equalizing rate is (e_b − e_a)/(1 − 2e_a), which
/// exceeds 0.3 already at (e_a, e_b) = (0.2, 0.4); its bracket grid reaches
/// further. The gap stays monotone up to 0.5, so probing below it is safe.
const GROUP_BRACKET_GRID: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.45];

fn candidate_list(init: f64, grid: &[f64]) -> Vec<f64> {
    let mut cands = vec![init];
    for &g in grid {
        if (g - init).abs() > 1e-12 {
            cands.push(g);
        }
    }
    cands
}

/// Balance the two class noise rates of a binary dataset by bisecting the
/// flip rate of the cleaner class until the 2-NN agreement gap vanishes.
///
/// Detection runs on a label-balanced resample; the bisection itself
/// re-evaluates the agreement gap on the *full* dataset with one shared
/// per-row randomness draw, and the returned dataset is the full input
/// flipped at the final rate with that same draw. If the initial gap is
/// negative the flip target switches to the negative class; if the gap is
/// already within `gamma`, the input is returned untouched with ε = 0.
pub fn noise_plus(
    ds: &LabeledDataset,
    gamma: f64,
    epsilon_r_init: f64,
    max_iterations: usize,
    seed: u64,
) -> Result<BalanceResult> {
    if ds.class_count() != 2 {
        return Err(Error::InvalidConfig(format!(
            "noise_plus balances binary labels, got {} classes",
            ds.class_count()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("gamma = {gamma} must be > 0")));
    }
    check_probability("epsilon_r_init", epsilon_r_init)?;
    if max_iterations == 0 {
        return Err(Error::InvalidConfig("max_iterations must be ≥ 1".into()));
    }

    // Orientation pass on the balanced resample: which class is cleaner?
    let diamond = resample_balanced(ds, BalanceBy::Class, seed)?;
    let idx_diamond = build_index(&diamond)?;
    let stats = estimate_agreements(&diamond, &idx_diamond)?;
    let pa = stats
        .pa()
        .ok_or_else(|| Error::AbsentStatistic("no positive anchors".into()))?;
    let na = stats
        .na()
        .ok_or_else(|| Error::AbsentStatistic("no negative anchors".into()))?;
    let c0 = pa.value() - na.value();
    if c0.abs() <= gamma {
        return Ok(BalanceResult {
            epsilon_found: 0.0,
            iterations: 0,
            final_gap: c0,
            balanced_dataset: ds.clone(),
            success: true,
            trace: Vec::new(),
            per_class_epsilon: None,
        });
    }
    // positive gap ⇒ positives agree more ⇒ positives cleaner ⇒ flip them
    let mut target: u32 = if c0 > 0.0 { 1 } else { 0 };

    let idx = build_index(ds)?;
    let uniforms = draw_uniforms(ds.len(), seed);
    let mut buf = Vec::with_capacity(ds.len());
    let mut eval = |target: u32, eps: f64, buf: &mut Vec<u32>| -> f64 {
        apply_flip_with(ds, target, eps, &uniforms, buf);
        let ka = agreement_of(buf, &idx, 2);
        match (ka[target as usize], ka[1 - target as usize]) {
            (Some(t), Some(o)) => t - o,
            // a side emptied out: gap is maximally overshot
            _ => -1.0,
        }
    };

    let mut gap_at_zero = eval(target, 0.0, &mut buf);
    if gap_at_zero < -gamma {
        // the full set disagrees with the resample about the sign; trust it
        target = 1 - target;
        gap_at_zero = -gap_at_zero;
    }
    let outcome = bisect_gap(
        |eps| eval(target, eps, &mut buf),
        gap_at_zero,
        gamma,
        &candidate_list(epsilon_r_init, &BRACKET_GRID),
        max_iterations,
    );

    let balanced_dataset = if outcome.success && outcome.epsilon > 0.0 {
        apply_flip_with(ds, target, outcome.epsilon, &uniforms, &mut buf);
        ds.clone().with_noisy_labels(std::mem::take(&mut buf))?
    } else {
        ds.clone()
    };
    Ok(BalanceResult {
        epsilon_found: outcome.epsilon,
        iterations: outcome.iterations,
        final_gap: outcome.final_gap,
        balanced_dataset,
        success: outcome.success,
        trace: outcome.trace,
        per_class_epsilon: None,
    })
}

/// Balance per-class noise rates of a K-class dataset: rank classes by their
/// 2-NN agreement on a balanced resample, take the noisiest as the anchor,
/// and bisect every other class's flip-away rate until its full-set
/// agreement matches the anchor's. All flips are then applied together. Each
/// class needs at least 30 anchors in the resample.
pub fn balance_multiclass(ds: &LabeledDataset, gamma: f64, seed: u64) -> Result<BalanceResult> {
    let k = ds.class_count();
    if k < 2 {
        return Err(Error::InvalidConfig(
            "balance_multiclass needs at least 2 classes".into(),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("gamma = {gamma} must be > 0")));
    }

    let diamond = resample_balanced(ds, BalanceBy::Class, seed)?;
    let idx_diamond = build_index(&diamond)?;
    let stats = estimate_agreements(&diamond, &idx_diamond)?;
    let mut ka_diamond = Vec::with_capacity(k);
    for c in 0..k {
        let f = stats
            .ka(c)
            .ok_or_else(|| Error::AbsentStatistic(format!("class {c} has no anchors")))?;
        if f.total < 30 {
            return Err(Error::AbsentStatistic(format!(
                "class {c} has only {} anchors after balancing, need ≥ 30",
                f.total
            )));
        }
        ka_diamond.push(f.value());
    }
    let noisiest = ka_diamond
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite").then(a.0.cmp(&b.0)))
        .map(|(c, _)| c)
        .expect("k ≥ 2");

    let idx = build_index(ds)?;
    let uniforms = draw_uniforms(ds.len(), seed);
    let baseline = agreement_of(ds.noisy_labels(), &idx, k);
    let target_ka = baseline[noisiest]
        .ok_or_else(|| Error::AbsentStatistic(format!("class {noisiest} has no anchors")))?;

    let max_iterations = 25;
    let mut per_class = vec![0.0; k];
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut success = true;
    let mut final_gap = 0.0f64;
    let mut buf = Vec::with_capacity(ds.len());
    for c in 0..k {
        if c == noisiest {
            continue;
        }
        // flipping class c away only lowers class-c agreement, so this gap
        // is decreasing in ε and independent of the other classes' flips;
        // the evaluation destination is irrelevant to class c's own
        // agreement, so a fixed stand-in class serves
        let stand_in = ((c + 1) % k) as u32;
        let mut eval = |eps: f64| -> f64 {
            buf.clear();
            buf.extend(ds.noisy_labels().iter().zip(&uniforms).map(|(&y, &u)| {
                if y as usize == c && u < eps {
                    stand_in
                } else {
                    y
                }
            }));
            match agreement_of(&buf, &idx, k)[c] {
                Some(v) => v - target_ka,
                None => -1.0,
            }
        };
        let gap_at_zero = eval(0.0);
        let outcome = bisect_gap(&mut eval, gap_at_zero, gamma, &BRACKET_GRID, max_iterations);
        per_class[c] = outcome.epsilon;
        iterations += outcome.iterations;
        trace.extend(outcome.trace);
        success &= outcome.success;
        if outcome.final_gap.abs() > final_gap.abs() {
            final_gap = outcome.final_gap;
        }
    }

    let balanced_dataset = if success {
        flip_multiclass_with(ds, &per_class, &uniforms, seed)?
    } else {
        ds.clone()
    };
    Ok(BalanceResult {
        epsilon_found: per_class.iter().cloned().fold(0.0, f64::max),
        iterations,
        final_gap,
        balanced_dataset,
        success,
        trace,
        per_class_epsilon: Some(per_class),
    })
}

/// Composite multi-class flip reusing the per-row uniforms from the
/// bisection, so the applied flips realize exactly the rates that were
/// evaluated. Destinations for K > 2 are drawn from a separate stream.
fn flip_multiclass_with(
    ds: &LabeledDataset,
    per_class_epsilon: &[f64],
    uniforms: &[f64],
    seed: u64,
) -> Result<LabeledDataset> {
    let k = ds.class_count();
    let mut dest_rng = rng::stream(seed, rng::TAG_DEST);
    let labels = ds
        .noisy_labels()
        .iter()
        .zip(uniforms)
        .map(|(&y, &u)| {
            if u < per_class_epsilon[y as usize] {
                if k == 2 {
                    1 - y
                } else {
                    let d = dest_rng.gen_range(0..k - 1) as u32;
                    if d >= y {
                        d + 1
                    } else {
                        d
                    }
                }
            } else {
                y
            }
        })
        .collect();
    ds.clone().with_noisy_labels(labels)
}

/// Balance the noise rates of two groups under group-symmetric noise: detect
/// the cleaner group by comparing within-group positive agreements on a
/// per-group balanced resample, then bisect a symmetric flip rate (both
/// classes of that group) until the within-group agreements match on the
/// full dataset.
pub fn balance_groups(ds: &LabeledDataset, gamma: f64, seed: u64) -> Result<BalanceResult> {
    let groups = ds.groups().ok_or(Error::MissingGroups)?;
    if ds.group_count() != 2 {
        return Err(Error::InvalidConfig(format!(
            "group balancing works on exactly 2 groups, got {}",
            ds.group_count()
        )));
    }
    if ds.class_count() != 2 {
        return Err(Error::InvalidConfig(format!(
            "group balancing needs binary labels, got {} classes",
            ds.class_count()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("gamma = {gamma} must be > 0")));
    }

    let diamond = resample_balanced(ds, BalanceBy::Group, seed)?;
    let idx_diamond = build_index_grouped(&diamond)?;
    let (pa_a, pa_b) = crate::agreement::estimate_group_agreements(&diamond, &idx_diamond)?;
    let c0 = pa_a.value() - pa_b.value();
    if c0.abs() <= gamma {
        return Ok(BalanceResult {
            epsilon_found: 0.0,
            iterations: 0,
            final_gap: c0,
            balanced_dataset: ds.clone(),
            success: true,
            trace: Vec::new(),
            per_class_epsilon: None,
        });
    }
    // higher agreement ⇒ cleaner ⇒ that group receives the flips
    let mut target: u32 = if c0 > 0.0 { 0 } else { 1 };

    let idx = build_index_grouped(ds)?;
    let uniforms = draw_uniforms(ds.len(), seed);
    let labels = ds.noisy_labels();
    let mut buf: Vec<u32> = Vec::with_capacity(ds.len());
    let mut eval = |target: u32, eps: f64, buf: &mut Vec<u32>| -> f64 {
        buf.clear();
        buf.extend(labels.iter().zip(groups).zip(&uniforms).map(|((&y, &z), &u)| {
            if z == target && u < eps {
                1 - y
            } else {
                y
            }
        }));
        // within-group positive agreement, target minus other
        let mut hits = [0u64; 2];
        let mut totals = [0u64; 2];
        for (i, (&y, &z)) in buf.iter().zip(groups).enumerate() {
            if y != 1 {
                continue;
            }
            let [a, b] = idx.neighbors(i);
            totals[z as usize] += 1;
            hits[z as usize] += u64::from(buf[a] == 1 && buf[b] == 1);
        }
        if totals[target as usize] == 0 || totals[1 - target as usize] == 0 {
            return -1.0;
        }
        let t = hits[target as usize] as f64 / totals[target as usize] as f64;
        let o = hits[1 - target as usize] as f64 / totals[1 - target as usize] as f64;
        t - o
    };

    let mut gap_at_zero = eval(target, 0.0, &mut buf);
    if gap_at_zero < -gamma {
        target = 1 - target;
        gap_at_zero = -gap_at_zero;
    }
    let outcome = bisect_gap(
        |eps| eval(target, eps, &mut buf),
        gap_at_zero,
        gamma,
        &candidate_list(0.3, &GROUP_BRACKET_GRID),
        25,
    );

    let balanced_dataset = if outcome.success && outcome.epsilon > 0.0 {
        eval(target, outcome.epsilon, &mut buf);
        ds.clone().with_noisy_labels(std::mem::take(&mut buf))?
    } else {
        ds.clone()
    };
    Ok(BalanceResult {
        epsilon_found: outcome.epsilon,
        iterations: outcome.iterations,
        final_gap: outcome.final_gap,
        balanced_dataset,
        success: outcome.success,
        trace: outcome.trace,
        per_class_epsilon: None,
    })
}
