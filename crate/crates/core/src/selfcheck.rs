//! Built-in verification suites: solver-vs-oracle equivalence, gradient
//! finite-difference checks, and probability normalization identities.
//! Backs the `selfcheck` CLI command.

use crate::assignment::{brute_force_assignment, hungarian_solve};
use crate::embedding::{assignment_probabilities, bidirectional_softmax, InstanceEmbedding};
use crate::error::Result;
use crate::losses::{contrastive_focal_loss, FocalParams, TrackTrainingPair};
use crate::simgen::SplitMix64;

/// Outcome of one suite: whether it passed and the observed worst error.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub max_error: f64,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, max_error: f64, detail: String) -> Self {
        Self {
            name,
            passed,
            max_error,
            detail,
        }
    }
}

/// Hungarian totals must equal brute-force totals: exactly on integer costs,
/// within 1e-9 relative on reals.
pub fn hungarian_suite(trials: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(seed);
    let mut max_rel = 0.0f64;
    let mut failures = 0usize;
    for trial in 0..trials {
        let rows = 1 + (rng.next_u64() % 7) as usize;
        let cols = 1 + (rng.next_u64() % 7) as usize;
        let integer = trial % 2 == 0;
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| {
                        if integer {
                            (rng.next_u64() % 100) as f64
                        } else {
                            rng.next_range(-50.0, 50.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let h = hungarian_solve(&cost)?;
        let b = brute_force_assignment(&cost)?;
        if integer {
            if h.total_cost != b.total_cost {
                failures += 1;
            }
        } else {
            let scale = b.total_cost.abs().max(1.0);
            let rel = (h.total_cost - b.total_cost).abs() / scale;
            max_rel = max_rel.max(rel);
            if rel > 1e-9 {
                failures += 1;
            }
        }
    }
    Ok(SuiteResult::new(
        "hungarian-vs-brute-force",
        failures == 0,
        max_rel,
        format!("{trials} trials, {failures} disagreements, max relative error {max_rel:.3e}"),
    ))
}

/// Central finite differences of the contrastive focal loss with respect to
/// the candidate embedding. The independent oracle for the analytic
/// gradient.
pub fn finite_difference_gradient(
    pair: &TrackTrainingPair,
    fp: &FocalParams,
    step: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; pair.candidate.dim()];
    for (k, g) in grad.iter_mut().enumerate() {
        let mut plus = pair.clone();
        plus.candidate.0[k] += step;
        let mut minus = pair.clone();
        minus.candidate.0[k] -= step;
        *g = (contrastive_focal_loss(&plus, fp)? - contrastive_focal_loss(&minus, fp)?)
            / (2.0 * step);
    }
    Ok(grad)
}

/// Run the gradient check against the production gradient.
pub fn gradient_suite(trials: usize, seed: u64) -> Result<SuiteResult> {
    gradient_suite_with(trials, seed, |pair, fp| {
        crate::losses::contrastive_focal_loss_grad(pair, fp).map(|(_, g)| g)
    })
}

/// Gradient check parameterized over the gradient implementation so a
/// deliberately broken gradient can be shown to fail.
pub fn gradient_suite_with<F>(trials: usize, seed: u64, grad_fn: F) -> Result<SuiteResult>
where
    F: Fn(&TrackTrainingPair, &FocalParams) -> Result<Vec<f64>>,
{
    let fp = FocalParams::default();
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let dim = 2 + (rng.next_u64() % 15) as usize;
        let n_refs = 1 + (rng.next_u64() % 5) as usize;
        let candidate =
            InstanceEmbedding::new((0..dim).map(|_| rng.next_range(-1.0, 1.0)).collect())?;
        let refs: Vec<InstanceEmbedding> = (0..n_refs)
            .map(|_| InstanceEmbedding::new((0..dim).map(|_| rng.next_range(-1.0, 1.0)).collect()))
            .collect::<Result<_>>()?;
        let gt_label = trial % (n_refs + 1);
        let pair = TrackTrainingPair::new(candidate, refs, gt_label)?;

        let analytic = grad_fn(&pair, &fp)?;
        let numeric = finite_difference_gradient(&pair, &fp, 1e-4)?;
        let diff: f64 = analytic
            .iter()
            .zip(numeric.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm = numeric
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(1e-8);
        worst = worst.max(diff / norm);
    }
    Ok(SuiteResult::new(
        "gradient-finite-difference",
        worst < 1e-5,
        worst,
        format!("{trials} pairs, max relative gradient error {worst:.3e}"),
    ))
}

/// Assignment probabilities must sum to one over all labels, including with
/// large-magnitude embeddings.
pub fn probability_normalization_suite(trials: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut finite = true;
    for trial in 0..trials {
        let dim = 1 + (rng.next_u64() % 64) as usize;
        let n_refs = (rng.next_u64() % 11) as usize;
        let scale = if trial % 4 == 0 { 1e3 } else { 2.0 };
        let candidate =
            InstanceEmbedding::new((0..dim).map(|_| rng.next_range(-scale, scale)).collect())?;
        let refs: Vec<InstanceEmbedding> = (0..n_refs)
            .map(|_| {
                InstanceEmbedding::new((0..dim).map(|_| rng.next_range(-scale, scale)).collect())
            })
            .collect::<Result<_>>()?;
        let probs = assignment_probabilities(&candidate, &refs)?;
        finite &= probs.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        worst = worst.max((probs.iter().sum::<f64>() - 1.0).abs());
    }
    Ok(SuiteResult::new(
        "assignment-probability-normalization",
        finite && worst < 1e-9,
        worst,
        format!("{trials} draws, max |sum - 1| = {worst:.3e}, all finite: {finite}"),
    ))
}

/// The bi-directional softmax must sum to (M + N) / 2 with entries in
/// [0, 1].
pub fn similarity_mass_suite(trials: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut bounded = true;
    for _ in 0..trials {
        let m = 1 + (rng.next_u64() % 10) as usize;
        let n = 1 + (rng.next_u64() % 10) as usize;
        let dim = 1 + (rng.next_u64() % 16) as usize;
        let cands: Vec<InstanceEmbedding> = (0..m)
            .map(|_| InstanceEmbedding::new((0..dim).map(|_| rng.next_range(-2.0, 2.0)).collect()))
            .collect::<Result<_>>()?;
        let refs: Vec<InstanceEmbedding> = (0..n)
            .map(|_| InstanceEmbedding::new((0..dim).map(|_| rng.next_range(-2.0, 2.0)).collect()))
            .collect::<Result<_>>()?;
        let s = bidirectional_softmax(&cands, &refs)?;
        worst = worst.max((s.sum() - (m + n) as f64 / 2.0).abs());
        for i in 0..m {
            for j in 0..n {
                let v = s.get(i, j);
                bounded &= (0.0..=1.0).contains(&v);
            }
        }
    }
    Ok(SuiteResult::new(
        "bidirectional-softmax-mass",
        bounded && worst < 1e-9,
        worst,
        format!("{trials} draws, max |sum - (M+N)/2| = {worst:.3e}, entries bounded: {bounded}"),
    ))
}

/// Run every suite with fixed seeds.
pub fn run_all() -> Result<Vec<SuiteResult>> {
    Ok(vec![
        hungarian_suite(1000, 0x5EED_0001)?,
        gradient_suite(100, 0x5EED_0002)?,
        probability_normalization_suite(1000, 0x5EED_0003)?,
        similarity_mass_suite(1000, 0x5EED_0004)?,
    ])
}
