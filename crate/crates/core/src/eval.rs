//! Track-level average precision over spatio-temporal IoU thresholds, plus
//! recall limits and identity-switch diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::hungarian_solve;
use crate::error::Result;
use crate::geometry::{iou, track_st_iou, BBox, Mask, Region};

/// IoU thresholds the headline AP averages over: 0.50:0.05:0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// One frame of a track, for either side of the evaluation.
#[derive(Debug, Clone)]
pub struct TrackFrame {
    pub frame_index: u64,
    pub bbox: BBox,
    pub mask: Option<Mask>,
}

/// A ground-truth identity with its per-frame extents.
#[derive(Debug, Clone)]
pub struct GroundTruthTrack {
    pub identity: u64,
    pub class_id: u32,
    pub records: Vec<TrackFrame>,
}

/// A predicted track with a ranking score.
#[derive(Debug, Clone)]
pub struct PredTrack {
    pub identity: u64,
    pub class_id: u32,
    pub score: f64,
    pub records: Vec<TrackFrame>,
}

/// Aggregate metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "AR1")]
    pub ar1: f64,
    #[serde(rename = "AR10")]
    pub ar10: f64,
    pub id_switches: u64,
}

/// Outcome for one prediction at a fixed IoU threshold, ordered by
/// descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchDecision {
    pub pred_index: usize,
    pub score: f64,
    pub matched_gt: Option<usize>,
}

/// Masks are used for the track IoU only when every record on both sides
/// carries one; anything else falls back to boxes.
fn track_regions(records: &[TrackFrame], use_masks: bool) -> Vec<(u64, Region)> {
    records
        .iter()
        .map(|r| {
            let region = match (&r.mask, use_masks) {
                (Some(m), true) => Region::Mask(m.clone()),
                _ => Region::Box(r.bbox),
            };
            (r.frame_index, region)
        })
        .collect()
}

fn all_masked(records: &[TrackFrame]) -> bool {
    records.iter().all(|r| r.mask.is_some())
}

/// Spatio-temporal IoU between a predicted and a ground-truth track.
pub fn track_iou(pred: &PredTrack, gt: &GroundTruthTrack) -> Result<f64> {
    let use_masks = all_masked(&pred.records) && all_masked(&gt.records);
    track_st_iou(
        &track_regions(&pred.records, use_masks),
        &track_regions(&gt.records, use_masks),
    )
}

fn sort_by_score(preds: &[PredTrack]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn greedy_match(
    preds: &[PredTrack],
    order: &[usize],
    gts: &[GroundTruthTrack],
    ious: &[Vec<f64>],
    iou_threshold: f64,
) -> Vec<MatchDecision> {
    let mut gt_taken = vec![false; gts.len()];
    let mut decisions = Vec::with_capacity(order.len());
    for &pi in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] || gt.class_id != preds[pi].class_id {
                continue;
            }
            let value = ious[pi][gi];
            if value >= iou_threshold && best.is_none_or(|(_, bv)| value > bv) {
                best = Some((gi, value));
            }
        }
        let matched_gt = best.map(|(gi, _)| {
            gt_taken[gi] = true;
            gi
        });
        decisions.push(MatchDecision {
            pred_index: pi,
            score: preds[pi].score,
            matched_gt,
        });
    }
    decisions
}

/// Match predictions to ground truth at one IoU threshold: predictions in
/// descending score order each take the highest-overlap unmatched
/// ground-truth track of their class, or count as false positives.
pub fn match_tracks(
    preds: &[PredTrack],
    gts: &[GroundTruthTrack],
    iou_threshold: f64,
) -> Result<Vec<MatchDecision>> {
    let ious = pairwise_track_ious(preds, gts)?;
    let order = sort_by_score(preds);
    Ok(greedy_match(preds, &order, gts, &ious, iou_threshold))
}

fn pairwise_track_ious(preds: &[PredTrack], gts: &[GroundTruthTrack]) -> Result<Vec<Vec<f64>>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| track_iou(p, g)).collect())
        .collect()
}

/// Area under the interpolated precision-recall curve. Decisions are
/// re-sorted by score internally, so callers may pass them in any order.
pub fn average_precision(decisions: &[MatchDecision], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return if decisions.is_empty() { 1.0 } else { 0.0 };
    }
    let mut sorted: Vec<&MatchDecision> = decisions.iter().collect();
    sorted.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    // Precision at each true positive, then the running-max envelope from
    // the right; the area is the sum of envelope heights times recall steps.
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut precisions = Vec::new();
    for d in &sorted {
        seen += 1;
        if d.matched_gt.is_some() {
            tp += 1;
            precisions.push(tp as f64 / seen as f64);
        }
    }
    let mut envelope = precisions;
    let mut running = 0.0f64;
    for p in envelope.iter_mut().rev() {
        running = running.max(*p);
        *p = running;
    }
    envelope.iter().sum::<f64>() / num_gt as f64
}

fn recall(decisions: &[MatchDecision], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    decisions.iter().filter(|d| d.matched_gt.is_some()).count() as f64 / num_gt as f64
}

/// Evaluate one video. AP averages per-class APs over the 0.50:0.05:0.95
/// threshold ladder; AR1/AR10 limit predictions per video to 1/10 by score.
pub fn track_map(preds: &[PredTrack], gts: &[GroundTruthTrack]) -> Result<EvalReport> {
    track_map_videos(&[(preds.to_vec(), gts.to_vec())])
}

/// Evaluate several videos with per-class score pooling across videos.
pub fn track_map_videos(videos: &[(Vec<PredTrack>, Vec<GroundTruthTrack>)]) -> Result<EvalReport> {
    let mut classes: Vec<u32> = videos
        .iter()
        .flat_map(|(_, gts)| gts.iter().map(|g| g.class_id))
        .collect();
    classes.sort_unstable();
    classes.dedup();

    if classes.is_empty() {
        let id_switches = videos
            .iter()
            .map(|(p, g)| id_switch_count(p, g))
            .sum::<Result<u64>>()?;
        let empty_preds = videos.iter().all(|(p, _)| p.is_empty());
        let score = if empty_preds { 1.0 } else { 0.0 };
        return Ok(EvalReport {
            ap: score,
            ap50: score,
            ap75: score,
            ar1: 0.0,
            ar10: 0.0,
            id_switches,
        });
    }

    // Cache per-video, per-class prediction/gt subsets and their pairwise
    // track IoUs so each threshold pass is a cheap greedy sweep.
    struct ClassVideo {
        preds: Vec<PredTrack>,
        num_gt: usize,
        gts: Vec<GroundTruthTrack>,
        ious: Vec<Vec<f64>>,
        order: Vec<usize>,
    }
    let mut per_class: BTreeMap<u32, Vec<ClassVideo>> = BTreeMap::new();
    for (preds, gts) in videos {
        for &class_id in &classes {
            let class_preds: Vec<PredTrack> = preds
                .iter()
                .filter(|p| p.class_id == class_id)
                .cloned()
                .collect();
            let class_gts: Vec<GroundTruthTrack> = gts
                .iter()
                .filter(|g| g.class_id == class_id)
                .cloned()
                .collect();
            let ious = pairwise_track_ious(&class_preds, &class_gts)?;
            let order = sort_by_score(&class_preds);
            per_class.entry(class_id).or_default().push(ClassVideo {
                num_gt: class_gts.len(),
                preds: class_preds,
                gts: class_gts,
                ious,
                order,
            });
        }
    }

    let mut ap_sum = 0.0;
    let mut ap50_sum = 0.0;
    let mut ap75_sum = 0.0;
    let mut ar1_sum = 0.0;
    let mut ar10_sum = 0.0;
    for (_, class_videos) in per_class.iter() {
        let num_gt: usize = class_videos.iter().map(|cv| cv.num_gt).sum();
        for (ti, &threshold) in IOU_THRESHOLDS.iter().enumerate() {
            let mut decisions = Vec::new();
            for cv in class_videos {
                decisions.extend(greedy_match(
                    &cv.preds, &cv.order, &cv.gts, &cv.ious, threshold,
                ));
            }
            let ap = average_precision(&decisions, num_gt);
            ap_sum += ap;
            if ti == 0 {
                ap50_sum += ap;
            }
            if threshold == 0.75 {
                ap75_sum += ap;
            }

            for (limit, ar_sum) in [(1usize, &mut ar1_sum), (10usize, &mut ar10_sum)] {
                let mut limited = Vec::new();
                for cv in class_videos {
                    let order: Vec<usize> = cv.order.iter().take(limit).cloned().collect();
                    limited.extend(greedy_match(&cv.preds, &order, &cv.gts, &cv.ious, threshold));
                }
                *ar_sum += recall(&limited, num_gt);
            }
        }
    }
    let class_count = classes.len() as f64;
    let cells = class_count * IOU_THRESHOLDS.len() as f64;

    let id_switches = videos
        .iter()
        .map(|(p, g)| id_switch_count(p, g))
        .sum::<Result<u64>>()?;

    Ok(EvalReport {
        ap: ap_sum / cells,
        ap50: ap50_sum / class_count,
        ap75: ap75_sum / class_count,
        ar1: ar1_sum / cells,
        ar10: ar10_sum / cells,
        id_switches,
    })
}

/// Count identity switches: per frame, predictions are bound to ground truth
/// by minimum-cost assignment on box IoU (matches require IoU >= 0.5); a
/// switch is an event where a ground-truth identity's matched predicted
/// identity differs from its previously matched one.
pub fn id_switch_count(preds: &[PredTrack], gts: &[GroundTruthTrack]) -> Result<u64> {
    let mut frames: BTreeMap<u64, (Vec<(u64, BBox)>, Vec<(u64, BBox)>)> = BTreeMap::new();
    for gt in gts {
        for r in &gt.records {
            frames
                .entry(r.frame_index)
                .or_default()
                .0
                .push((gt.identity, r.bbox));
        }
    }
    for pred in preds {
        for r in &pred.records {
            frames
                .entry(r.frame_index)
                .or_default()
                .1
                .push((pred.identity, r.bbox));
        }
    }

    let mut last_matched: BTreeMap<u64, u64> = BTreeMap::new();
    let mut switches = 0u64;
    for (_, (gt_items, pred_items)) in frames {
        if gt_items.is_empty() || pred_items.is_empty() {
            continue;
        }
        let cost: Vec<Vec<f64>> = pred_items
            .iter()
            .map(|(_, pb)| gt_items.iter().map(|(_, gb)| 1.0 - iou(pb, gb)).collect())
            .collect();
        let solution = hungarian_solve(&cost)?;
        for (pi, gi) in solution.pairs {
            let overlap = iou(&pred_items[pi].1, &gt_items[gi].1);
            if overlap < 0.5 {
                continue;
            }
            let gt_id = gt_items[gi].0;
            let pred_id = pred_items[pi].0;
            if let Some(&prev) = last_matched.get(&gt_id) {
                if prev != pred_id {
                    switches += 1;
                }
            }
            last_matched.insert(gt_id, pred_id);
        }
    }
    Ok(switches)
}
