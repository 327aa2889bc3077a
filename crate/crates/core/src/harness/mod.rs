//! Sample files, dataset selection, batch runs and reports.

mod bench;
mod dataset;
mod io;
mod sample;

pub use self::bench::{
    evaluate_detections, run_benchmark, sample_seed, Aggregate, BenchReport, RunConfig, RunReport,
    SampleResult,
};
pub use self::dataset::{filter_samples, load_coco, mentions_all, split_by_object_count};
pub use self::io::{
    load_samples, read_detections, read_features, save_samples, to_json, write_detections,
    write_json, DetectionsByImage, DETECTION_COLUMNS,
};
pub use self::sample::{SampleObject, SampleSpec};
