//! Bounding-box layout guidance for cross-attention.
//!
//! Boxes tied to prompt tokens become soft masks over attention logits: a
//! Gaussian bump inside each box and suppression outside it. The crate
//! contains the mask construction, the guided attention kernel, a small
//! deterministic generator that exercises both end to end, and an evaluation
//! harness that scores layouts by per-object IoU against detections, broken
//! down by object size and distance from the image center.
//!
//! ```
//! use layout_guidance::{BoundingBox, ConceptVocabulary, GenerationConfig, GuidanceSet};
//!
//! let guidance = GuidanceSet::from_named(&[("circle", BoundingBox::new(0.0, 0.0, 0.5, 1.0)?)]);
//! let vocab = ConceptVocabulary::toy();
//! let out = layout_guidance::generate(&guidance, &vocab, &GenerationConfig::default().with_seed(3))?;
//! let detections = layout_guidance::oracle_detect(&out.image, &vocab);
//! let records = layout_guidance::match_guidance(&detections, &guidance);
//! assert_eq!(records.len(), 1);
//! # Ok::<(), layout_guidance::Error>(())
//! ```

pub mod attention;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod geometry;
pub mod guidance;
pub mod harness;
pub mod service;

pub use attention::{
    attention, guided_attention, mask_weight, AttentionInputs, AttentionMap, WeightSchedule,
};
pub use error::{Error, Result};
pub use evaluation::{
    fit_gaussian, frechet_distance, match_guidance, success_rate, ConsistencyRecord,
    DetectionRecord, FeatureStats, SubsetReport,
};
pub use generator::{generate, oracle_detect, ConceptVocabulary, GenerationConfig, RenderedImage};
pub use geometry::{iou, BoundingBox, DistanceClass, SizeClass};
pub use guidance::{
    build_flat_mask, build_soft_mask, gaussian_field, Grid, GuidanceEntry, GuidanceSet, MaskMode,
    SoftMask,
};
