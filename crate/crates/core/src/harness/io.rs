use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::DetectionRecord;
use crate::geometry::BoundingBox;

use super::sample::SampleSpec;

/// Column order of the detections file.
pub const DETECTION_COLUMNS: [&str; 7] = [
    "image_id",
    "class_name",
    "x_min",
    "y_min",
    "x_max",
    "y_max",
    "score",
];

/// Detections grouped by image id.
pub type DetectionsByImage = BTreeMap<String, Vec<DetectionRecord>>;

/// Reads a guidance-spec file: a JSON array of samples, each validated.
pub fn load_samples(path: &Path) -> Result<Vec<SampleSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let samples: Vec<SampleSpec> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    for (i, s) in samples.iter().enumerate() {
        s.validate()
            .map_err(|e| Error::parse(path, format!("[{i}] {e}")))?;
    }
    Ok(samples)
}

pub fn save_samples(path: &Path, samples: &[SampleSpec]) -> Result<()> {
    write_json(path, &samples)
}

/// Pretty JSON with a trailing newline. Field order follows the type
/// definitions, so equal values always produce equal bytes.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRow {
    image_id: String,
    class_name: String,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    score: f64,
}

/// Reads detections from a CSV file with a header row naming
/// [`DETECTION_COLUMNS`]. Coordinates are normalized; lines starting with `#`
/// are comments.
pub fn read_detections(path: &Path) -> Result<DetectionsByImage> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detections(file).map_err(|m| Error::parse(path, m))
}

fn parse_detections(input: impl std::io::Read) -> std::result::Result<DetectionsByImage, String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = DetectionsByImage::new();
    for row in reader.deserialize::<DetectionRow>() {
        let row = row.map_err(|e| e.to_string())?;
        let bbox = BoundingBox::new(row.x_min, row.y_min, row.x_max, row.y_max)
            .map_err(|e| format!("image {}: {e}", row.image_id))?;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(format!(
                "image {}: score {} outside [0, 1]",
                row.image_id, row.score
            ));
        }
        out.entry(row.image_id).or_default().push(DetectionRecord {
            class_name: row.class_name,
            bbox,
            score: row.score,
        });
    }
    Ok(out)
}

pub fn write_detections(path: &Path, detections: &DetectionsByImage) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    for (image_id, records) in detections {
        for d in records {
            let [x_min, y_min, x_max, y_max] = d.bbox.to_array();
            writer
                .serialize(DetectionRow {
                    image_id: image_id.clone(),
                    class_name: d.class_name.clone(),
                    x_min,
                    y_min,
                    x_max,
                    y_max,
                    score: d.score,
                })
                .map_err(|e| Error::parse(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a feature CSV: one row per image, the image id first and the feature
/// values after it. A header row is detected and skipped.
pub fn read_features(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_features(file).map_err(|m| Error::parse(path, m))
}

fn parse_features(
    input: impl std::io::Read,
) -> std::result::Result<(Vec<String>, DMatrix<f64>), String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut ids = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 2 {
            return Err(format!(
                "line {line}: expected an id and at least one feature"
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().skip(1).map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(format!("line {line}: {e}")),
        };
        if !row.iter().all(|v| v.is_finite()) {
            return Err(format!("line {line}: non-finite feature"));
        }
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(format!(
                "line {line}: expected {} features, found {}",
                width.unwrap_or(0),
                row.len()
            ));
        }
        ids.push(record[0].to_string());
        values.extend(row);
    }
    let k = width.ok_or("no feature rows")?;
    Ok((ids.clone(), DMatrix::from_row_slice(ids.len(), k, &values)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detections_parse_with_comments() {
        let text =
            "# from an external detector\nimage_id,class_name,x_min,y_min,x_max,y_max,score\n\
                    a, dog ,0.1,0.1,0.5,0.5,0.9\nb,cat,0,0,1,1,1\na,cat,0.2,0.2,0.3,0.3,0.5\n";
        let d = parse_detections(text.as_bytes()).unwrap();
        assert_eq!(d["a"].len(), 2);
        assert_eq!(d["a"][0].class_name, "dog");
        assert_eq!(d["b"][0].bbox, BoundingBox::full());
    }

    #[test]
    fn bad_detections_are_rejected() {
        let header = "image_id,class_name,x_min,y_min,x_max,y_max,score\n";
        assert!(
            parse_detections(format!("{header}a,dog,0.5,0.1,0.4,0.5,0.9\n").as_bytes()).is_err()
        );
        assert!(
            parse_detections(format!("{header}a,dog,0.1,0.1,0.4,0.5,1.5\n").as_bytes()).is_err()
        );
        assert!(parse_detections(format!("{header}a,dog,x,0.1,0.4,0.5,1\n").as_bytes()).is_err());
    }

    #[test]
    fn features_with_and_without_header() {
        let (ids, m) = parse_features("id,f0,f1\nx,1,2\ny,3,4\n".as_bytes()).unwrap();
        assert_eq!(ids, vec!["x", "y"]);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let (ids, _) = parse_features("x,1\ny,3\n".as_bytes()).unwrap();
        assert_eq!(ids.len(), 2);
        assert!(parse_features("x,1,2\ny,3\n".as_bytes()).is_err());
        assert!(parse_features("x,1\ny,z\n".as_bytes()).is_err());
        assert!(parse_features("".as_bytes()).is_err());
    }
}
