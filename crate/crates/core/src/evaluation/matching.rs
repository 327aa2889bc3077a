use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_terciles, iou, size_class, BoundingBox, DistanceClass, SizeClass};
use crate::guidance::{GuidanceEntry, GuidanceSet};

/// A guided object counts as placed when its recorded IoU is strictly above this.
pub const SUCCESS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub class_name: String,
    pub bbox: BoundingBox,
    pub score: f64,
}

/// How well one guidance entry was honoured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub entry: GuidanceEntry,
    pub class_name: String,
    pub recorded_iou: f64,
    pub success: bool,
    pub size_class: SizeClass,
    pub distance_class: DistanceClass,
}

/// Scores every guidance entry against the detections.
///
/// The recorded IoU is the best IoU among detections of the same class
/// (case-insensitive), or 0 when there is none. A detection may serve several
/// entries. Distance classes are terciles over this set's own entries; use
/// [`assign_distance_classes`] to recompute them over a larger population.
pub fn match_guidance(detections: &[DetectionRecord], g: &GuidanceSet) -> Vec<ConsistencyRecord> {
    if g.entries().is_empty() {
        return Vec::new();
    }
    let boxes: Vec<BoundingBox> = g.entries().iter().map(|e| e.bbox).collect();
    let distances = distance_terciles(&boxes).expect("entries are non-empty");
    g.entries()
        .iter()
        .zip(distances)
        .map(|(entry, distance_class)| {
            let class_name = g.concept_name(entry).to_string();
            let recorded_iou = detections
                .iter()
                .filter(|d| d.class_name.trim().eq_ignore_ascii_case(class_name.trim()))
                .map(|d| iou(&d.bbox, &entry.bbox))
                .fold(0.0, f64::max);
            ConsistencyRecord {
                entry: *entry,
                class_name,
                recorded_iou,
                success: recorded_iou > SUCCESS_THRESHOLD,
                size_class: size_class(&entry.bbox, g.reference_size()),
                distance_class,
            }
        })
        .collect()
}

/// Recomputes distance terciles across all `records` at once.
pub fn assign_distance_classes(records: &mut [ConsistencyRecord]) -> Result<()> {
    let boxes: Vec<BoundingBox> = records.iter().map(|r| r.entry.bbox).collect();
    let classes = distance_terciles(&boxes)?;
    for (r, c) in records.iter_mut().zip(classes) {
        r.distance_class = c;
    }
    Ok(())
}

/// Percentage of successful records.
pub fn success_rate(records: &[ConsistencyRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("success_rate"));
    }
    let hits = records.iter().filter(|r| r.success).count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

pub fn mean_iou(records: &[ConsistencyRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("mean_iou"));
    }
    Ok(records.iter().map(|r| r.recorded_iou).sum::<f64>() / records.len() as f64)
}
