//! Axis-aligned boxes in normalized image coordinates, IoU, and the size and
//! distance subsets used when reporting control efficiency.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel size of the square frame that normalized boxes are measured against.
pub const DEFAULT_REFERENCE_SIZE: u32 = 512;

/// Boxes below this pixel area are small.
pub const SMALL_AREA: f64 = 150.0 * 150.0;
/// Boxes above this pixel area are large.
pub const LARGE_AREA: f64 = 300.0 * 300.0;

/// An axis-aligned box with coordinates normalized to `[0, 1]`.
///
/// `y` grows downwards, as in image space. Zero-area boxes cannot be built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        if x_min < 0.0 || y_min < 0.0 || x_max > 1.0 || y_max > 1.0 {
            return Err(invalid("coordinates must lie in [0, 1]"));
        }
        if x_min >= x_max {
            return Err(invalid("x_min must be less than x_max"));
        }
        if y_min >= y_max {
            return Err(invalid("y_min must be less than y_max"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a normalized box from pixel coordinates in a `width × height` image.
    pub fn from_pixels(pixels: [f64; 4], width: u32, height: u32) -> Result<Self> {
        let (w, h) = (f64::from(width), f64::from(height));
        Self::new(pixels[0] / w, pixels[1] / h, pixels[2] / w, pixels[3] / h)
    }

    /// The whole frame.
    pub fn full() -> Self {
        Self {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 1.0,
            y_max: 1.0,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    /// Half-open membership test: `[x_min, x_max) × [y_min, y_max)`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:.4}, {:.4}, {:.4}, {:.4}]",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

/// Intersection over union. Symmetric in its arguments.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    S,
    M,
    L,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::S, SizeClass::M, SizeClass::L];
}

/// Classifies a box by its pixel area at `reference_size × reference_size`.
/// Areas exactly on a threshold are medium.
pub fn size_class(b: &BoundingBox, reference_size: u32) -> SizeClass {
    let side = f64::from(reference_size);
    let area = b.area() * side * side;
    if area < SMALL_AREA {
        SizeClass::S
    } else if area > LARGE_AREA {
        SizeClass::L
    } else {
        SizeClass::M
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceClass {
    Near,
    Mid,
    Far,
}

impl DistanceClass {
    pub const ALL: [DistanceClass; 3] =
        [DistanceClass::Near, DistanceClass::Mid, DistanceClass::Far];
}

/// Euclidean distance from the box center to the image center, in normalized units.
pub fn center_distance(b: &BoundingBox) -> f64 {
    let (cx, cy) = b.center();
    (cx - 0.5).hypot(cy - 0.5)
}

/// Splits a population of boxes into near/mid/far terciles of center distance.
///
/// Ties are broken by input position. Group sizes differ by at most one, with
/// the nearer groups taking the extra elements. The output is aligned with the
/// input.
pub fn distance_terciles(boxes: &[BoundingBox]) -> Result<Vec<DistanceClass>> {
    if boxes.is_empty() {
        return Err(Error::Empty("distance_terciles"));
    }
    let distances: Vec<f64> = boxes.iter().map(center_distance).collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // stable sort keeps input order among equal distances
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));

    let n = boxes.len();
    let (base, extra) = (n / 3, n % 3);
    let near_len = base + usize::from(extra > 0);
    let mid_len = base + usize::from(extra > 1);

    let mut classes = vec![DistanceClass::Far; n];
    for (rank, &idx) in order.iter().enumerate() {
        classes[idx] = if rank < near_len {
            DistanceClass::Near
        } else if rank < near_len + mid_len {
            DistanceClass::Mid
        } else {
            DistanceClass::Far
        };
    }
    Ok(classes)
}
