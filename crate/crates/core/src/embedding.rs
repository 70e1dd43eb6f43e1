//! Instance embeddings and the two similarity constructions built on them:
//! label-assignment probabilities for training pairs and the bi-directional
//! softmax used at association time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense instance embedding. Dimension is fixed within a run; 256 by
/// convention unless configured otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceEmbedding(pub Vec<f64>);

impl InstanceEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &InstanceEmbedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::EmbeddingDim {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-norm copy; an all-zero embedding is returned unchanged.
    pub fn normalized(&self) -> InstanceEmbedding {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        InstanceEmbedding(self.0.iter().map(|v| v / n).collect())
    }
}

/// Dense candidate-by-reference similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn dot_matrix(cands: &[InstanceEmbedding], refs: &[InstanceEmbedding]) -> Result<Vec<Vec<f64>>> {
    cands
        .iter()
        .map(|c| refs.iter().map(|r| c.dot(r)).collect())
        .collect()
}

/// Probability of assigning each label `{0..N}` to a candidate given `N`
/// reference embeddings. Label `n >= 1` gets `exp(e_i . e_n) / (1 + sum_j
/// exp(e_i . e_j))`; label 0 is the no-existing-identity remainder.
///
/// Exponentials are stabilized by subtracting `max(0, max dot)` so the
/// implicit zero logit of the constant term shifts consistently.
pub fn assignment_probabilities(
    candidate: &InstanceEmbedding,
    refs: &[InstanceEmbedding],
) -> Result<Vec<f64>> {
    let mut dots = Vec::with_capacity(refs.len());
    for r in refs {
        dots.push(candidate.dot(r)?);
    }
    let shift = dots.iter().fold(0.0f64, |m, &d| m.max(d));
    let e0 = (-shift).exp();
    let exps: Vec<f64> = dots.iter().map(|&d| (d - shift).exp()).collect();
    let denom = e0 + exps.iter().sum::<f64>();
    let mut probs = Vec::with_capacity(refs.len() + 1);
    probs.push(e0 / denom);
    probs.extend(exps.iter().map(|&e| e / denom));
    Ok(probs)
}

/// Bi-directional softmax similarity: the mean of the row-wise softmax over
/// references and the column-wise softmax over candidates of the dot-product
/// matrix. Entries lie in `[0, 1]` and the matrix sums to `(M + N) / 2`.
pub fn bidirectional_softmax(
    cands: &[InstanceEmbedding],
    refs: &[InstanceEmbedding],
) -> Result<SimilarityMatrix> {
    let (m, n) = (cands.len(), refs.len());
    if m == 0 || n == 0 {
        return Ok(SimilarityMatrix {
            rows: m,
            cols: n,
            data: Vec::new(),
        });
    }
    let dots = dot_matrix(cands, refs)?;

    let mut data = vec![0.0f64; m * n];
    for (i, row) in dots.iter().enumerate() {
        let rmax = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&d| (d - rmax).exp()).collect();
        let denom: f64 = exps.iter().sum();
        for (j, &e) in exps.iter().enumerate() {
            data[i * n + j] += e / denom / 2.0;
        }
    }
    for j in 0..n {
        let cmax = (0..m).fold(f64::NEG_INFINITY, |mx, i| mx.max(dots[i][j]));
        let exps: Vec<f64> = (0..m).map(|i| (dots[i][j] - cmax).exp()).collect();
        let denom: f64 = exps.iter().sum();
        for (i, &e) in exps.iter().enumerate() {
            data[i * n + j] += e / denom / 2.0;
        }
    }
    Ok(SimilarityMatrix {
        rows: m,
        cols: n,
        data,
    })
}
