//! Exact minimum-cost bipartite assignment and the composite matching cost
//! that binds predictions to ground-truth instances one-to-one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{giou, l1_box_distance, BBox, FrameSize};

const LOG_EPS: f64 = 1e-8;

/// Weights of the three matching-cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCostWeights {
    pub lambda_cls: f64,
    pub lambda_l1: f64,
    pub lambda_giou: f64,
}

impl Default for MatchCostWeights {
    fn default() -> Self {
        Self {
            lambda_cls: 2.0,
            lambda_l1: 5.0,
            lambda_giou: 2.0,
        }
    }
}

/// Which form of the focal classification cost enters the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClsCostForm {
    /// Positive-minus-negative focal cost.
    #[default]
    Difference,
    /// Positive focal term only.
    PositiveOnly,
}

/// Per-class scores of one prediction. Sigmoid-style: entries lie in
/// `[0, 1]` but need not sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub probs: Vec<f64>,
}

impl ClassPrediction {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs }
    }
}

/// One side of the matching problem: a predicted class distribution and box.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub class_pred: ClassPrediction,
    pub bbox: BBox,
}

/// The other side: a ground-truth class and box.
#[derive(Debug, Clone)]
pub struct GroundTruthBox {
    pub class_id: usize,
    pub bbox: BBox,
}

/// Matcher parameters: term weights plus the focal-cost shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherParams {
    pub weights: MatchCostWeights,
    pub alpha: f64,
    pub gamma: f64,
    pub cls_cost_form: ClsCostForm,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            weights: MatchCostWeights::default(),
            alpha: 0.25,
            gamma: 2.0,
            cls_cost_form: ClsCostForm::Difference,
        }
    }
}

/// A one-to-one matching between rows and columns of a cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, column)` pairs, sorted by row. Each row and column appears at
    /// most once; the pair count is `min(rows, cols)`.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn empty() -> Self {
        Self {
            pairs: Vec::new(),
            total_cost: 0.0,
        }
    }
}

/// Focal classification cost for assigning `pred` to `target_class`.
///
/// The difference form is `alpha*(1-p)^gamma*(-ln(p+eps))
/// - alpha*p^gamma*(-ln(1-p+eps))` with `p` the target-class score.
pub fn focal_cls_cost(
    pred: &ClassPrediction,
    target_class: usize,
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    focal_cls_cost_with_form(pred, target_class, alpha, gamma, ClsCostForm::Difference)
}

pub fn focal_cls_cost_with_form(
    pred: &ClassPrediction,
    target_class: usize,
    alpha: f64,
    gamma: f64,
    form: ClsCostForm,
) -> Result<f64> {
    let p = *pred
        .probs
        .get(target_class)
        .ok_or(Error::ClassIndex {
            index: target_class,
            num_classes: pred.probs.len(),
        })?;
    let positive = alpha * (1.0 - p).powf(gamma) * (-(p + LOG_EPS).ln());
    match form {
        ClsCostForm::PositiveOnly => Ok(positive),
        ClsCostForm::Difference => {
            let negative = alpha * p.powf(gamma) * (-(1.0 - p + LOG_EPS).ln());
            Ok(positive - negative)
        }
    }
}

/// Composite matching cost: weighted focal classification cost, normalized
/// L1 box distance, and GIoU loss (`1 - giou`).
pub fn pairwise_match_cost(
    pred: &Prediction,
    gt: &GroundTruthBox,
    params: &MatcherParams,
    frame: FrameSize,
) -> Result<f64> {
    let cls = focal_cls_cost_with_form(
        &pred.class_pred,
        gt.class_id,
        params.alpha,
        params.gamma,
        params.cls_cost_form,
    )?;
    let l1 = l1_box_distance(&pred.bbox, &gt.bbox, frame);
    let giou_loss = 1.0 - giou(&pred.bbox, &gt.bbox);
    let w = &params.weights;
    Ok(w.lambda_cls * cls + w.lambda_l1 * l1 + w.lambda_giou * giou_loss)
}

fn validate_matrix(cost: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    for (i, row) in cost.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::IrregularMatrix {
                row: i,
                expected: cols,
                got: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteCost { row: i, col: j });
            }
        }
    }
    Ok((rows, cols))
}

/// Exact minimum-cost assignment via the O(n^3) shortest-augmenting-path
/// method, on a rectangular matrix padded to square with zeros. Returns the
/// cardinality-`min(rows, cols)` assignment with minimum total cost.
pub fn hungarian_solve(cost: &[Vec<f64>]) -> Result<Assignment> {
    let (rows, cols) = validate_matrix(cost)?;
    if rows == 0 || cols == 0 {
        return Ok(Assignment::empty());
    }
    let dim = rows.max(cols);

    // 1-based arrays; row/column 0 is the sentinel of the augmenting search.
    let a = |i: usize, j: usize| -> f64 {
        if i <= rows && j <= cols {
            cost[i - 1][j - 1]
        } else {
            0.0
        }
    };
    let mut u = vec![0.0f64; dim + 1];
    let mut v = vec![0.0f64; dim + 1];
    let mut matched_row = vec![0usize; dim + 1]; // column -> row
    let mut way = vec![0usize; dim + 1];

    for i in 1..=dim {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; dim + 1];
        let mut used = vec![false; dim + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=dim {
                if used[j] {
                    continue;
                }
                let slack = a(i0, j) - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=dim {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Walk the augmenting path back, flipping matches.
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::with_capacity(rows.min(cols));
    for j in 1..=dim {
        let i = matched_row[j];
        if i >= 1 && i <= rows && j <= cols {
            pairs.push((i - 1, j - 1));
        }
    }
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Ok(Assignment { pairs, total_cost })
}

/// Exhaustive-minimum assignment for small matrices; the independent oracle
/// against which the solver is checked. Limited to 8 rows and columns.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> Result<Assignment> {
    let (rows, cols) = validate_matrix(cost)?;
    if rows > 8 || cols > 8 {
        return Err(Error::BruteForceSize { rows, cols });
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment::empty());
    }

    let mut best: Option<Assignment> = None;
    let mut used_cols = vec![false; cols];
    let mut current = Vec::with_capacity(rows.min(cols));

    fn recurse(
        cost: &[Vec<f64>],
        row: usize,
        depth_left: usize,
        used_cols: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        best: &mut Option<Assignment>,
    ) {
        let rows = cost.len();
        if depth_left == 0 || row == rows {
            let total: f64 = current.iter().map(|&(i, j)| cost[i][j]).sum();
            if best.as_ref().is_none_or(|b| total < b.total_cost) {
                *best = Some(Assignment {
                    pairs: current.clone(),
                    total_cost: total,
                });
            }
            return;
        }
        // Skipping this row is only allowed when enough rows remain to reach
        // full cardinality.
        if rows - row - 1 >= depth_left {
            recurse(cost, row + 1, depth_left, used_cols, current, best);
        }
        for col in 0..used_cols.len() {
            if used_cols[col] {
                continue;
            }
            used_cols[col] = true;
            current.push((row, col));
            recurse(cost, row + 1, depth_left - 1, used_cols, current, best);
            current.pop();
            used_cols[col] = false;
        }
    }

    recurse(
        cost,
        0,
        rows.min(cols),
        &mut used_cols,
        &mut current,
        &mut best,
    );
    Ok(best.expect("at least one full assignment exists"))
}

/// Build the full pairwise cost matrix and solve it. Empty inputs yield an
/// empty assignment. Rows index predictions, columns ground truth.
pub fn match_predictions_to_gt(
    preds: &[Prediction],
    gts: &[GroundTruthBox],
    params: &MatcherParams,
    frame: FrameSize,
) -> Result<Assignment> {
    if preds.is_empty() || gts.is_empty() {
        return Ok(Assignment::empty());
    }
    let mut cost = vec![vec![0.0; gts.len()]; preds.len()];
    for (i, pred) in preds.iter().enumerate() {
        for (j, gt) in gts.iter().enumerate() {
            cost[i][j] = pairwise_match_cost(pred, gt, params, frame)?;
        }
    }
    hungarian_solve(&cost)
}
