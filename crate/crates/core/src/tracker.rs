//! Online instance association: per-frame candidate filtering, matching
//! factors against already-identified instances, greedy identity assignment,
//! and track lifecycle.

use serde::{Deserialize, Serialize};

use crate::assignment::hungarian_solve;
use crate::embedding::{bidirectional_softmax, InstanceEmbedding};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Mask};

/// One per-frame instance candidate.
#[derive(Debug, Clone)]
pub struct Detection {
    pub bbox: BBox,
    pub mask: Option<Mask>,
    pub class_id: u32,
    pub score: f64,
    pub embedding: InstanceEmbedding,
}

/// A record of a detection committed to a track.
#[derive(Debug, Clone)]
pub struct TrackRecord {
    pub frame_index: u64,
    pub detection: Detection,
}

/// An identified instance: stable identity plus the memory state used when
/// matching future candidates.
#[derive(Debug, Clone)]
pub struct Track {
    pub identity: u64,
    pub class_id: u32,
    pub memory_embedding: InstanceEmbedding,
    pub memory_box: BBox,
    pub last_active_frame: u64,
    pub records: Vec<TrackRecord>,
}

impl Track {
    fn new(identity: u64, frame_index: u64, detection: Detection) -> Self {
        Self {
            identity,
            class_id: detection.class_id,
            memory_embedding: detection.embedding.clone(),
            memory_box: detection.bbox,
            last_active_frame: frame_index,
            records: vec![TrackRecord {
                frame_index,
                detection,
            }],
        }
    }

    fn absorb(&mut self, frame_index: u64, detection: Detection, momentum: f64) {
        let new = detection.embedding.as_slice();
        let old = self.memory_embedding.as_slice();
        let blended: Vec<f64> = new
            .iter()
            .zip(old.iter())
            .map(|(n, o)| (1.0 - momentum) * n + momentum * o)
            .collect();
        self.memory_embedding = InstanceEmbedding(blended);
        self.memory_box = detection.bbox;
        self.last_active_frame = frame_index;
        self.records.push(TrackRecord {
            frame_index,
            detection,
        });
    }

    pub fn max_score(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.detection.score)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_score(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.detection.score).sum::<f64>() / self.records.len() as f64
    }
}

/// How candidates are bound to tracks once the factor matrix is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMode {
    /// Per-candidate argmax in descending confidence order.
    #[default]
    Greedy,
    /// Minimum-cost assignment on the negated factor matrix.
    Hungarian,
}

/// Association engine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssocConfig {
    /// Candidates kept per frame, by descending detection confidence.
    pub top_k: usize,
    /// Minimum matching factor to inherit an identity; below it a fresh
    /// identity is created.
    pub tau_new: f64,
    /// Memory blend weight: 0 replaces the embedding on match, 1 freezes it.
    pub memory_momentum: f64,
    /// Tracks inactive longer than this are excluded from matching; `None`
    /// keeps every track alive.
    pub keep_alive_frames: Option<u64>,
    /// Tracks whose best record score stays below this are dropped from the
    /// final output.
    pub emit_score_threshold: f64,
    pub assign_mode: AssignMode,
    /// L2-normalize embeddings before similarity dot products.
    pub normalize_embeddings: bool,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            top_k: 10,
            tau_new: 0.1,
            memory_momentum: 0.0,
            keep_alive_frames: None,
            emit_score_threshold: 0.0,
            assign_mode: AssignMode::Greedy,
            normalize_embeddings: false,
        }
    }
}

/// Candidate-by-track matching factors; entries lie in `[0, 1]` and are zero
/// whenever the class predictions differ.
#[derive(Debug, Clone)]
pub struct MatchingFactorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatchingFactorMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Top-`k` detections by score, descending, ties keeping input order.
pub fn select_candidates(dets: &[Detection], k: usize) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.truncate(k);
    order.into_iter().map(|i| dets[i].clone()).collect()
}

/// Matching factor of every candidate against every track: appearance
/// similarity scaled by spatial overlap, detection confidence, and the
/// category-consistency indicator.
pub fn matching_factor_matrix(
    cands: &[Detection],
    tracks: &[Track],
) -> Result<MatchingFactorMatrix> {
    matching_factor_matrix_with(cands, tracks, false)
}

pub fn matching_factor_matrix_with(
    cands: &[Detection],
    tracks: &[Track],
    normalize_embeddings: bool,
) -> Result<MatchingFactorMatrix> {
    let (m, n) = (cands.len(), tracks.len());
    if m == 0 || n == 0 {
        return Ok(MatchingFactorMatrix {
            rows: m,
            cols: n,
            data: Vec::new(),
        });
    }
    let cand_embs: Vec<InstanceEmbedding> = cands
        .iter()
        .map(|c| {
            if normalize_embeddings {
                c.embedding.normalized()
            } else {
                c.embedding.clone()
            }
        })
        .collect();
    let track_embs: Vec<InstanceEmbedding> = tracks
        .iter()
        .map(|t| {
            if normalize_embeddings {
                t.memory_embedding.normalized()
            } else {
                t.memory_embedding.clone()
            }
        })
        .collect();
    let sim = bidirectional_softmax(&cand_embs, &track_embs)?;

    let mut data = vec![0.0f64; m * n];
    for (i, cand) in cands.iter().enumerate() {
        for (j, track) in tracks.iter().enumerate() {
            if cand.class_id != track.class_id {
                continue;
            }
            let spatial = (1.0 + iou(&cand.bbox, &track.memory_box)) / 2.0;
            let confidence = (1.0 + cand.score) / 2.0;
            data[i * n + j] = sim.get(i, j) * spatial * confidence;
        }
    }
    Ok(MatchingFactorMatrix {
        rows: m,
        cols: n,
        data,
    })
}

fn next_identity(tracks: &[Track]) -> u64 {
    tracks.iter().map(|t| t.identity).max().unwrap_or(0) + 1
}

/// Process one frame: filter candidates, score them against active tracks,
/// and either extend a track or spawn a fresh identity per candidate.
///
/// Returns the `(detection, identity)` assignments for the kept candidates
/// in descending score order. The frame index must exceed every track's
/// last active frame.
pub fn associate_frame(
    tracks: &mut Vec<Track>,
    frame_index: u64,
    dets: &[Detection],
    cfg: &AssocConfig,
) -> Result<Vec<(Detection, u64)>> {
    if let Some(last) = tracks.iter().map(|t| t.last_active_frame).max() {
        if frame_index <= last {
            return Err(Error::FrameOrder {
                frame: frame_index,
                last,
            });
        }
    }

    let cands = select_candidates(dets, cfg.top_k);

    // Tracks eligible for matching; state order is ascending identity, which
    // makes the strict-max scan below break factor ties toward the lowest
    // identity.
    let active: Vec<usize> = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| match cfg.keep_alive_frames {
            Some(limit) => frame_index - t.last_active_frame <= limit,
            None => true,
        })
        .map(|(i, _)| i)
        .collect();

    let factors = if !cands.is_empty() && !active.is_empty() {
        let active_tracks: Vec<Track> = active.iter().map(|&i| tracks[i].clone()).collect();
        Some(matching_factor_matrix_with(
            &cands,
            &active_tracks,
            cfg.normalize_embeddings,
        )?)
    } else {
        None
    };

    let mut matched_track: Vec<Option<usize>> = vec![None; cands.len()];
    let mut claimed = vec![false; active.len()];

    match cfg.assign_mode {
        AssignMode::Greedy => {
            if let Some(f) = &factors {
                for (ci, slot) in matched_track.iter_mut().enumerate() {
                    let mut best: Option<(usize, f64)> = None;
                    for (ai, _) in active.iter().enumerate() {
                        if claimed[ai] {
                            continue;
                        }
                        let value = f.get(ci, ai);
                        if best.is_none_or(|(_, bv)| value > bv) {
                            best = Some((ai, value));
                        }
                    }
                    if let Some((ai, value)) = best {
                        if value >= cfg.tau_new {
                            *slot = Some(active[ai]);
                            claimed[ai] = true;
                        }
                    }
                }
            }
        }
        AssignMode::Hungarian => {
            if let Some(f) = &factors {
                let cost: Vec<Vec<f64>> = (0..cands.len())
                    .map(|ci| (0..active.len()).map(|ai| -f.get(ci, ai)).collect())
                    .collect();
                let solution = hungarian_solve(&cost)?;
                for (ci, ai) in solution.pairs {
                    if f.get(ci, ai) >= cfg.tau_new {
                        matched_track[ci] = Some(active[ai]);
                    }
                }
            }
        }
    }

    let mut assignments = Vec::with_capacity(cands.len());
    for (ci, cand) in cands.into_iter().enumerate() {
        match matched_track[ci] {
            Some(track_idx) => {
                let track = &mut tracks[track_idx];
                track.absorb(frame_index, cand.clone(), cfg.memory_momentum);
                assignments.push((cand, track.identity));
            }
            None => {
                let identity = next_identity(tracks);
                tracks.push(Track::new(identity, frame_index, cand.clone()));
                assignments.push((cand, identity));
            }
        }
    }
    Ok(assignments)
}

/// Fold `associate_frame` over a whole video, starting from empty state.
/// Frame indices must be strictly increasing. Tracks whose best score stays
/// below the emit threshold are dropped from the output.
pub fn track_video(frames: &[(u64, Vec<Detection>)], cfg: &AssocConfig) -> Result<Vec<Track>> {
    let mut tracks: Vec<Track> = Vec::new();
    for (frame_index, dets) in frames {
        associate_frame(&mut tracks, *frame_index, dets, cfg)?;
    }
    tracks.retain(|t| t.max_score() >= cfg.emit_score_threshold);
    Ok(tracks)
}
