//! Versioned JSON file formats: per-frame detection streams in, track files
//! out, with ground truth sharing the track schema (score fixed at 1.0).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{GroundTruthTrack, PredTrack, TrackFrame};
use crate::geometry::{BBox, Rle};
use crate::simgen::{Scenario, ScenarioConfig};
use crate::tracker::{Detection, Track};
use crate::InstanceEmbedding;

pub const FORMAT_VERSION: u32 = 1;

/// Seed and configuration header written by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub seed: u64,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    pub class_id: u32,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<Rle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub format_version: u32,
    pub video_id: String,
    pub embedding_dim: usize,
    pub frames: Vec<FrameDetections>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecordEntry {
    pub frame_index: u64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<Rle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub identity: u64,
    pub class_id: u32,
    pub score: f64,
    pub records: Vec<TrackRecordEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub format_version: u32,
    pub video_id: String,
    pub tracks: Vec<TrackEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

fn check_box(raw: [f64; 4]) -> Result<BBox> {
    let [x1, y1, x2, y2] = raw;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema(format!("box {raw:?} has non-finite values")));
    }
    if x1 > x2 || y1 > y2 {
        return Err(Error::Schema(format!(
            "box {raw:?} has inverted corners"
        )));
    }
    Ok(BBox::new(x1, y1, x2, y2))
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersion(version));
    }
    Ok(())
}

/// Parse and validate a detection file: version, strictly increasing frame
/// indices, embedding dimensions, score range, and box orientation.
pub fn parse_detection_file(bytes: &[u8]) -> Result<DetectionFile> {
    let file: DetectionFile = serde_json::from_slice(bytes)?;
    check_version(file.format_version)?;
    let mut last_frame: Option<u64> = None;
    for frame in &file.frames {
        if let Some(last) = last_frame {
            if frame.frame_index <= last {
                return Err(Error::FrameOrder {
                    frame: frame.frame_index,
                    last,
                });
            }
        }
        last_frame = Some(frame.frame_index);
        for det in &frame.detections {
            if det.embedding.len() != file.embedding_dim {
                return Err(Error::EmbeddingDim {
                    expected: file.embedding_dim,
                    got: det.embedding.len(),
                });
            }
            if det.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEmbedding);
            }
            if !det.score.is_finite() || !(0.0..=1.0).contains(&det.score) {
                return Err(Error::Schema(format!(
                    "score {} outside [0, 1] at frame {}",
                    det.score, frame.frame_index
                )));
            }
            check_box(det.bbox)?;
        }
    }
    Ok(file)
}

pub fn serialize_detection_file(file: &DetectionFile) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(file).expect("detection file serializes");
    bytes.push(b'\n');
    bytes
}

/// Parse and validate a track file: version, unique identities, strictly
/// increasing record frames.
pub fn parse_track_file(bytes: &[u8]) -> Result<TrackFile> {
    let file: TrackFile = serde_json::from_slice(bytes)?;
    check_version(file.format_version)?;
    let mut seen = std::collections::BTreeSet::new();
    for track in &file.tracks {
        if !seen.insert(track.identity) {
            return Err(Error::Schema(format!(
                "duplicate track identity {}",
                track.identity
            )));
        }
        let mut last: Option<u64> = None;
        for record in &track.records {
            if let Some(prev) = last {
                if record.frame_index <= prev {
                    return Err(Error::FrameOrder {
                        frame: record.frame_index,
                        last: prev,
                    });
                }
            }
            last = Some(record.frame_index);
            check_box(record.bbox)?;
        }
    }
    Ok(file)
}

pub fn serialize_track_file(file: &TrackFile) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(file).expect("track file serializes");
    bytes.push(b'\n');
    bytes
}

/// Decode a detection file into per-frame tracker inputs.
pub fn detection_file_to_frames(file: &DetectionFile) -> Result<Vec<(u64, Vec<Detection>)>> {
    file.frames
        .iter()
        .map(|frame| {
            let dets = frame
                .detections
                .iter()
                .map(|d| {
                    let mask = d.mask_rle.as_ref().map(|r| r.decode()).transpose()?;
                    Ok(Detection {
                        bbox: check_box(d.bbox)?,
                        mask,
                        class_id: d.class_id,
                        score: d.score,
                        embedding: InstanceEmbedding::new(d.embedding.clone())?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((frame.frame_index, dets))
        })
        .collect()
}

fn box_array(bbox: &BBox) -> [f64; 4] {
    [bbox.x1, bbox.y1, bbox.x2, bbox.y2]
}

/// Convert tracker output to the file schema. The per-track score is the
/// mean of its record confidences.
pub fn tracks_to_file(video_id: &str, tracks: &[Track]) -> TrackFile {
    TrackFile {
        format_version: FORMAT_VERSION,
        video_id: video_id.to_string(),
        tracks: tracks
            .iter()
            .map(|t| TrackEntry {
                identity: t.identity,
                class_id: t.class_id,
                score: t.mean_score(),
                records: t
                    .records
                    .iter()
                    .map(|r| TrackRecordEntry {
                        frame_index: r.frame_index,
                        bbox: box_array(&r.detection.bbox),
                        mask_rle: r.detection.mask.as_ref().map(|m| m.to_rle()),
                    })
                    .collect(),
            })
            .collect(),
        generator: None,
    }
}

fn entry_records(entry: &TrackEntry) -> Result<Vec<TrackFrame>> {
    entry
        .records
        .iter()
        .map(|r| {
            Ok(TrackFrame {
                frame_index: r.frame_index,
                bbox: check_box(r.bbox)?,
                mask: r.mask_rle.as_ref().map(|m| m.decode()).transpose()?,
            })
        })
        .collect()
}

/// Read a track file as scored predictions for evaluation.
pub fn track_file_to_preds(file: &TrackFile) -> Result<Vec<PredTrack>> {
    file.tracks
        .iter()
        .map(|t| {
            Ok(PredTrack {
                identity: t.identity,
                class_id: t.class_id,
                score: t.score,
                records: entry_records(t)?,
            })
        })
        .collect()
}

/// Read a track file as ground truth; the score field is ignored.
pub fn track_file_to_gts(file: &TrackFile) -> Result<Vec<GroundTruthTrack>> {
    file.tracks
        .iter()
        .map(|t| {
            Ok(GroundTruthTrack {
                identity: t.identity,
                class_id: t.class_id,
                records: entry_records(t)?,
            })
        })
        .collect()
}

/// Serialize a scenario's detection stream, with the generating seed and
/// config embedded in the header.
pub fn scenario_to_detection_file(scenario: &Scenario) -> DetectionFile {
    DetectionFile {
        format_version: FORMAT_VERSION,
        video_id: format!("sim-{}", scenario.seed),
        embedding_dim: scenario.config.embedding_dim,
        frames: scenario
            .frames
            .iter()
            .map(|(frame_index, dets)| FrameDetections {
                frame_index: *frame_index,
                detections: dets
                    .iter()
                    .map(|d| DetectionRecord {
                        bbox: box_array(&d.bbox),
                        score: d.score,
                        class_id: d.class_id,
                        embedding: d.embedding.as_slice().to_vec(),
                        mask_rle: d.mask.as_ref().map(|m| m.to_rle()),
                    })
                    .collect(),
            })
            .collect(),
        generator: Some(GeneratorInfo {
            seed: scenario.seed,
            config: scenario.config.clone(),
        }),
    }
}

/// Serialize a scenario's ground truth in the track schema with score 1.0.
pub fn scenario_to_gt_file(scenario: &Scenario) -> TrackFile {
    TrackFile {
        format_version: FORMAT_VERSION,
        video_id: format!("sim-{}", scenario.seed),
        tracks: scenario
            .gt_tracks
            .iter()
            .map(|t| TrackEntry {
                identity: t.identity,
                class_id: t.class_id,
                score: 1.0,
                records: t
                    .records
                    .iter()
                    .map(|r| TrackRecordEntry {
                        frame_index: r.frame_index,
                        bbox: box_array(&r.bbox),
                        mask_rle: r.mask.as_ref().map(|m| m.to_rle()),
                    })
                    .collect(),
            })
            .collect(),
        generator: Some(GeneratorInfo {
            seed: scenario.seed,
            config: scenario.config.clone(),
        }),
    }
}
