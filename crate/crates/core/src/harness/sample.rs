use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, DEFAULT_REFERENCE_SIZE};
use crate::guidance::{GuidanceEntry, GuidanceSet};

/// One annotated object in pixel coordinates `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleObject {
    pub category: String,
    pub bbox: [f64; 4],
}

/// A captioned image with its object annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub image_id: String,
    pub prompt: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SampleObject>,
}

impl SampleSpec {
    /// Checks the invariants; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: String, msg: &str| Err(Error::InvalidGuidance(format!("{field}: {msg}")));
        if self.width == 0 || self.height == 0 {
            return bad("width/height".into(), "must be positive");
        }
        if self.objects.is_empty() {
            return bad("objects".into(), "must not be empty");
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.category.trim().is_empty() {
                return bad(format!("objects[{i}].category"), "must not be empty");
            }
            let [x0, y0, x1, y1] = o.bbox;
            if !o.bbox.iter().all(|v| v.is_finite()) {
                return bad(format!("objects[{i}].bbox"), "must be finite");
            }
            if !(0.0 <= x0 && x0 < x1 && x1 <= f64::from(self.width))
                || !(0.0 <= y0 && y0 < y1 && y1 <= f64::from(self.height))
            {
                return bad(
                    format!("objects[{i}].bbox"),
                    "must satisfy 0 <= min < max <= image size",
                );
            }
        }
        Ok(())
    }

    /// Boxes normalized by the image's own width and height.
    pub fn normalized_boxes(&self) -> Result<Vec<BoundingBox>> {
        self.objects
            .iter()
            .map(|o| BoundingBox::from_pixels(o.bbox, self.width, self.height))
            .collect()
    }

    /// Distinct categories, ordered by where they are first mentioned in the
    /// prompt; unmentioned ones follow in annotation order.
    pub fn tokens(&self) -> Vec<String> {
        let prompt = normalize_text(&self.prompt);
        let mut tokens: Vec<(usize, usize, String)> = Vec::new();
        for (i, o) in self.objects.iter().enumerate() {
            let name = normalize_text(&o.category);
            if tokens.iter().any(|(_, _, t)| *t == name) {
                continue;
            }
            let at = prompt.find(&name).unwrap_or(usize::MAX);
            tokens.push((at, i, name));
        }
        tokens.sort_by_key(|&(at, i, _)| (at, i));
        tokens.into_iter().map(|(_, _, t)| t).collect()
    }

    /// The guidance this sample describes, in a square frame of
    /// `DEFAULT_REFERENCE_SIZE` pixels (boxes are stretched, not letterboxed).
    pub fn to_guidance(&self) -> Result<GuidanceSet> {
        self.validate()?;
        let prompt = self.tokens();
        let entries = self
            .objects
            .iter()
            .zip(self.normalized_boxes()?)
            .map(|(o, bbox)| GuidanceEntry {
                bbox,
                concept: prompt
                    .iter()
                    .position(|t| *t == normalize_text(&o.category))
                    .expect("every category is a token"),
            })
            .collect();
        GuidanceSet::new(prompt, entries, DEFAULT_REFERENCE_SIZE)
    }
}

/// Lowercase with runs of whitespace collapsed to one space.
pub(crate) fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(prompt: &str, objects: &[(&str, [f64; 4])]) -> SampleSpec {
        SampleSpec {
            image_id: "x".into(),
            prompt: prompt.into(),
            width: 640,
            height: 480,
            objects: objects
                .iter()
                .map(|(c, b)| SampleObject {
                    category: c.to_string(),
                    bbox: *b,
                })
                .collect(),
        }
    }

    #[test]
    fn tokens_follow_the_prompt() {
        let s = sample(
            "a cat chases a dog",
            &[
                ("dog", [0.0, 0.0, 10.0, 10.0]),
                ("cat", [5.0, 5.0, 20.0, 20.0]),
                ("dog", [1.0, 1.0, 2.0, 2.0]),
            ],
        );
        assert_eq!(s.tokens(), vec!["cat", "dog"]);
        let g = s.to_guidance().unwrap();
        assert_eq!(
            g.entries().iter().map(|e| e.concept).collect::<Vec<_>>(),
            vec![1, 0, 1]
        );
        assert_eq!(
            g.entries()[1].bbox.to_array(),
            [5.0 / 640.0, 5.0 / 480.0, 20.0 / 640.0, 20.0 / 480.0]
        );
    }

    #[test]
    fn validation_names_fields() {
        let s = sample("dog", &[("dog", [10.0, 0.0, 5.0, 10.0])]);
        assert!(s
            .validate()
            .unwrap_err()
            .to_string()
            .contains("objects[0].bbox"));
        let s = sample("dog", &[("dog", [0.0, 0.0, 641.0, 10.0])]);
        assert!(s.validate().is_err());
        assert!(sample("dog", &[]).validate().is_err());
    }
}
