//! Pedestrian-detection ground truth from skeletal pose annotations.
//!
//! - [`geometry`]: skeleton hulls padded to full-body boxes by camera distance.
//! - [`calibration`]: least-squares fit of the padding constant.
//! - [`sanitization`]: distance histograms, annotator distance limit, pruning.
//! - [`formats`]: JTA, COCO and MOT readers and writers.
//! - [`evaluation`]: IoU matching, PR curves and average precision.
//! - [`trainingplan`]: fine-tune and mixed-batch domain-adaptation schedules.
//! - [`cli`]: the `skel2box` command line.

pub mod calibration;
pub mod cli;
pub mod evaluation;
pub mod formats;
pub mod geometry;
pub mod sanitization;
pub mod trainingplan;

pub use calibration::{fit_alpha, load_calibration_samples, CalibrationResult, CalibrationSample};
pub use evaluation::{evaluate, EvalParams, EvalReport, FrameKey, GroundTruth};
pub use formats::{DatasetManifest, Detection};
pub use geometry::{
    synthesize_annotations, AnnotatedBox, BBox, Joint, SkeletonInstance, SynthesisOptions,
};
pub use trainingplan::{
    plan_finetune, plan_mixed_batches, BatchPlan, FineTunePlan, MixConfig, MixRatio, Plan,
};
