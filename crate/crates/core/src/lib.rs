//! Weakly supervised temporal evidence discovery.
//!
//! Given videos labeled only at the bag level (does this video contain
//! the event or not), the crate learns per-shot evidence classifiers by
//! self-paced instance labeling: a cost-weighted linear SVM alternates
//! with pseudo-label and sample-selection updates while an easiness
//! threshold relaxes, so confident shots enter training before ambiguous
//! ones. Localized evidence is scored against human annotations by
//! temporal overlap.

pub mod annotation;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod model;
pub mod recount;
pub mod spl;
pub mod svm;
pub mod synth;

pub use annotation::{AnnotationSet, StepTrack};
pub use config::{Lambda0, SplConfig, SvmParams};
pub use data::{Dataset, Label, ShotInstance, VideoBag};
pub use error::{Error, Result};
pub use model::{Calibration, LinearModel};
pub use recount::{
    calibrate, evaluate, f1_score, late_fusion, pct_overlap, regions_from_annotation,
    regions_from_scores, score_bag, EvalReport, EventPredictions, EventScore, PredictionRecord,
    RegionSet, ScoredShots,
};
pub use spl::{
    basic_mil_fit, init_pseudo_labels, objective, spl_fit, update_labels, update_weights,
    IterationRecord, SplRun, SplState,
};
pub use svm::oracle::qp_oracle;
pub use synth::{generate, generate_views, SynthOutput, SynthSpec, TruthRecord};
pub use svm::{hinge_loss, primal_objective, train_weighted_svm, SvmSolution, WeightedSample};
