//! Cross-module properties: the tracker run against simulator ground truth,
//! matching-factor bounds on random configurations, and evaluator behavior
//! on tracked output.

use std::collections::BTreeMap;

use qtrack_core::eval::{id_switch_count, track_map, GroundTruthTrack, PredTrack, TrackFrame};
use qtrack_core::simgen::{generate_scenario, DetectorNoise, ScenarioConfig, SplitMix64};
use qtrack_core::tracker::{
    associate_frame, matching_factor_matrix, track_video, AssignMode, AssocConfig, Detection,
    Track,
};
use qtrack_core::{BBox, FrameSize, InstanceEmbedding};

fn tracks_to_preds(tracks: &[Track]) -> Vec<PredTrack> {
    tracks
        .iter()
        .map(|t| PredTrack {
            identity: t.identity,
            class_id: t.class_id,
            score: t.mean_score(),
            records: t
                .records
                .iter()
                .map(|r| TrackFrame {
                    frame_index: r.frame_index,
                    bbox: r.detection.bbox,
                    mask: r.detection.mask.clone(),
                })
                .collect(),
        })
        .collect()
}

/// Assert predicted tracks equal ground truth up to an identity relabeling:
/// a consistent bijection between predicted and true identities that matches
/// every record's frame set.
fn assert_matches_up_to_relabeling(tracks: &[Track], gts: &[GroundTruthTrack]) {
    assert_eq!(tracks.len(), gts.len(), "track count mismatch");
    let mut mapping: BTreeMap<u64, u64> = BTreeMap::new();
    let mut used: BTreeMap<u64, u64> = BTreeMap::new();
    for track in tracks {
        // Find the gt whose records line up with this track's boxes.
        let gt = gts
            .iter()
            .find(|g| {
                g.records.len() == track.records.len()
                    && g.records.iter().zip(track.records.iter()).all(|(gr, tr)| {
                        gr.frame_index == tr.frame_index
                            && qtrack_core::iou(&gr.bbox, &tr.detection.bbox) > 0.9
                    })
            })
            .unwrap_or_else(|| panic!("no ground truth aligns with track {}", track.identity));
        if let Some(&prev) = mapping.get(&track.identity) {
            assert_eq!(prev, gt.identity, "track {} remapped", track.identity);
        }
        if let Some(&prev) = used.get(&gt.identity) {
            assert_eq!(prev, track.identity, "gt {} claimed twice", gt.identity);
        }
        mapping.insert(track.identity, gt.identity);
        used.insert(gt.identity, track.identity);
        assert_eq!(track.class_id, gt.class_id);
    }
}

#[test]
fn noiseless_scenarios_recover_ground_truth() {
    for seed in 0..10 {
        let cfg = ScenarioConfig {
            num_objects: 1 + (seed as usize % 6),
            num_frames: 24,
            embedding_dim: 16,
            num_classes: 3,
            with_masks: false,
            ..Default::default()
        };
        let scenario = generate_scenario(&cfg, seed).unwrap();
        let tracks = track_video(&scenario.frames, &AssocConfig::default()).unwrap();
        assert_matches_up_to_relabeling(&tracks, &scenario.gt_tracks);
        let switches =
            id_switch_count(&tracks_to_preds(&tracks), &scenario.gt_tracks).unwrap();
        assert_eq!(switches, 0, "seed {seed}");
    }
}

#[test]
fn noisy_scenarios_keep_identities() {
    for seed in 100..110 {
        let cfg = ScenarioConfig {
            num_objects: 5,
            num_frames: 24,
            embedding_dim: 16,
            num_classes: 2,
            embedding_noise_sigma: 0.1,
            detector_noise: DetectorNoise {
                box_jitter: 0.02 * 640.0,
                ..Default::default()
            },
            with_masks: false,
            ..Default::default()
        };
        let scenario = generate_scenario(&cfg, seed).unwrap();
        let tracks = track_video(&scenario.frames, &AssocConfig::default()).unwrap();
        let switches =
            id_switch_count(&tracks_to_preds(&tracks), &scenario.gt_tracks).unwrap();
        assert_eq!(switches, 0, "seed {seed}");
    }
}

#[test]
fn hungarian_assign_mode_also_recovers_ground_truth() {
    let cfg = ScenarioConfig {
        num_objects: 4,
        num_frames: 20,
        embedding_dim: 8,
        embedding_noise_sigma: 0.05,
        with_masks: false,
        ..Default::default()
    };
    let scenario = generate_scenario(&cfg, 77).unwrap();
    let assoc = AssocConfig {
        assign_mode: AssignMode::Hungarian,
        ..Default::default()
    };
    let tracks = track_video(&scenario.frames, &assoc).unwrap();
    assert_eq!(tracks.len(), 4);
    let switches = id_switch_count(&tracks_to_preds(&tracks), &scenario.gt_tracks).unwrap();
    assert_eq!(switches, 0);
}

#[test]
fn matching_factor_bounds_on_random_configurations() {
    let mut rng = SplitMix64::new(0xFACADE);
    for _ in 0..1000 {
        let m = 1 + (rng.next_u64() % 6) as usize;
        let n = 1 + (rng.next_u64() % 6) as usize;
        let dim = 2 + (rng.next_u64() % 6) as usize;
        let mut rand_det = |class_id: u32| Detection {
            bbox: {
                let x = rng.next_range(0.0, 80.0);
                let y = rng.next_range(0.0, 80.0);
                BBox::new(x, y, x + rng.next_range(1.0, 20.0), y + rng.next_range(1.0, 20.0))
            },
            mask: None,
            class_id,
            score: rng.next_f64(),
            embedding: InstanceEmbedding::new(
                (0..dim).map(|_| rng.next_range(-3.0, 3.0)).collect(),
            )
            .unwrap(),
        };
        let cands: Vec<Detection> = (0..m)
            .map(|_| {
                let class = (rng.next_u64() % 3) as u32;
                rand_det(class)
            })
            .collect();
        let mut tracks = Vec::new();
        for _ in 0..n {
            let class = (rng.next_u64() % 3) as u32;
            let det = rand_det(class);
            let frame = tracks.len() as u64;
            let mut state = Vec::new();
            associate_frame(&mut state, frame, &[det], &AssocConfig::default()).unwrap();
            let mut t = state.into_iter().next().unwrap();
            t.identity = tracks.len() as u64 + 1;
            tracks.push(t);
        }

        let f = matching_factor_matrix(&cands, &tracks).unwrap();
        for i in 0..m {
            for j in 0..n {
                let v = f.get(i, j);
                assert!((0.0..=1.0).contains(&v), "factor {v} out of bounds");
                if cands[i].class_id != tracks[j].class_id {
                    assert_eq!(v, 0.0, "class indicator violated");
                }
            }
        }
    }
}

#[test]
fn tracker_output_scores_perfectly_under_evaluator() {
    let cfg = ScenarioConfig {
        num_objects: 3,
        num_frames: 12,
        embedding_dim: 8,
        num_classes: 2,
        with_masks: true,
        frame: FrameSize {
            width: 96,
            height: 64,
        },
        ..Default::default()
    };
    let scenario = generate_scenario(&cfg, 5).unwrap();
    let tracks = track_video(&scenario.frames, &AssocConfig::default()).unwrap();
    let report = track_map(&tracks_to_preds(&tracks), &scenario.gt_tracks).unwrap();
    assert_eq!(report.ap, 1.0);
    assert_eq!(report.ap50, 1.0);
    assert_eq!(report.ap75, 1.0);
    assert_eq!(report.id_switches, 0);
}

#[test]
fn occlusion_gap_rebinds_same_identity() {
    // One object vanishes for three frames; with no keep-alive limit the
    // track must resume under its original identity.
    let cfg = ScenarioConfig {
        num_objects: 2,
        num_frames: 12,
        embedding_dim: 8,
        num_classes: 2,
        occlusions: vec![(0, 4, 6)],
        with_masks: false,
        ..Default::default()
    };
    let scenario = generate_scenario(&cfg, 13).unwrap();
    let tracks = track_video(&scenario.frames, &AssocConfig::default()).unwrap();
    assert_eq!(tracks.len(), 2);
    assert_matches_up_to_relabeling(&tracks, &scenario.gt_tracks);
}

#[test]
fn prefix_run_is_a_prefix_of_the_full_run() {
    let cfg = ScenarioConfig {
        num_objects: 4,
        num_frames: 30,
        embedding_dim: 8,
        embedding_noise_sigma: 0.05,
        with_masks: false,
        ..Default::default()
    };
    let scenario = generate_scenario(&cfg, 31).unwrap();
    let assoc = AssocConfig::default();

    let assignments = |frames: &[(u64, Vec<Detection>)]| {
        let mut state = Vec::new();
        let mut per_frame = Vec::new();
        for (fi, dets) in frames {
            let out = associate_frame(&mut state, *fi, dets, &assoc).unwrap();
            per_frame.push(
                out.into_iter()
                    .map(|(d, id)| (d.bbox.x1.to_bits(), d.score.to_bits(), id))
                    .collect::<Vec<_>>(),
            );
        }
        per_frame
    };

    let full = assignments(&scenario.frames);
    for cut in [1usize, 10, 20] {
        let prefix = assignments(&scenario.frames[..cut]);
        assert_eq!(&full[..cut], &prefix[..], "prefix of length {cut}");
    }
}
