//! Video-instance association engine: bipartite matching costs with an exact
//! Hungarian solver, contrastive embedding similarity, focal tracking losses
//! with analytic gradients, an online association tracker, a track-AP
//! evaluator, and a deterministic synthetic-scenario generator.

pub mod assignment;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod selfcheck;
pub mod simgen;
pub mod tracker;

pub use assignment::{
    brute_force_assignment, hungarian_solve, match_predictions_to_gt, Assignment, ClsCostForm,
    MatchCostWeights, MatcherParams,
};
pub use embedding::{assignment_probabilities, bidirectional_softmax, InstanceEmbedding};
pub use error::{Error, Result};
pub use eval::{track_map, EvalReport, GroundTruthTrack, PredTrack};
pub use geometry::{giou, iou, l1_box_distance, mask_iou, track_st_iou, BBox, FrameSize, Mask, Rle};
pub use losses::{
    contrastive_focal_loss, contrastive_focal_loss_grad, focal_loss, FocalParams, LossReduction,
    TrackTrainingPair,
};
pub use simgen::{generate_scenario, Scenario, ScenarioConfig};
pub use tracker::{associate_frame, track_video, AssocConfig, Detection, Track};
