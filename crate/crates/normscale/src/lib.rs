//! Out-of-distribution detection over classifier logits, built around
//! per-class standardization ("norm-scaling") of the logit vector.
//!
//! The crate takes logit dumps (it never touches model weights), fits
//! per-class mean/std on training logits, rescales test logits with them,
//! and scores samples with max-softmax-probability or the energy score.
//! On top of that sit threshold-free detection metrics (AUROC, AUPR,
//! FPR@95%TPR), a per-predicted-class evaluation that grants every class
//! its own threshold, confidence calibration (reliability diagrams, ECE,
//! temperature sweeps), deterministic file formats and stream shuffling,
//! and a synthetic logit generator for desk-scale experiments.
//!
//! ```
//! use normscale::prelude::*;
//!
//! let cfg = SynthConfig::fig1_like(1);
//! let data = generate(&cfg)?;
//! let stats = fit_class_stats(&data.train)?;
//!
//! let mut detector = DetectorConfig::default();
//! detector.scaling = Scaling::Norm;
//!
//! let inputs = EvalInputs {
//!     train: data.train,
//!     in_test: data.in_test,
//!     ood_sets: vec![("synthetic".into(), data.ood_test)],
//! };
//! let out = run_eval(&inputs, &stats, &detector, &[1], DEFAULT_BINS)?;
//! let auroc = out.report.seeds[0].datasets[0].single.auroc;
//! assert!(auroc > 0.5 && auroc < 1.0);
//! # Ok::<(), normscale::Error>(())
//! ```

pub mod detector;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod record;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};

/// The commonly used surface in one import.
pub mod prelude {
    pub use crate::detector::{
        argmax, decide, energy_score, msp_score, score_stream, softmax, Decision, DetectorConfig,
        PredictionSource, Scaling, ScoreKind, ScoredSample, StatsMode,
    };
    pub use crate::error::{Error, Result};
    pub use crate::ingest::{
        build_test_stream, read_logits, write_logits, DatasetManifest, FileFormat, ManifestEntry,
        Role, SHUFFLE_ALGORITHM,
    };
    pub use crate::metrics::{
        aggregate, auroc, aupr, ece, ece_from_predictions, fpr95, fpr_at_tpr, multi_threshold_eval,
        reliability, roc_points, single_eval, Aggregate, BinaryScoreSet, EvalReport, Grouping,
        MeanStd, ReliabilityBins,
    };
    pub use crate::pipeline::{
        default_tau_grid, run_eval, sweep_tau, EvalInputs, RunOutput, RunReport, SweepRow,
        DEFAULT_BINS,
    };
    pub use crate::record::{LogitRecord, Origin};
    pub use crate::stats::{
        fit_class_stats, norm_scale, tau_norm_scale, temperature_scale, ClassStats, StatsFile,
        StreamMode, StreamState, DEFAULT_EPSILON,
    };
    pub use crate::synthgen::{generate, OodModel, SplitCounts, SynthConfig, SynthDataset};
}
