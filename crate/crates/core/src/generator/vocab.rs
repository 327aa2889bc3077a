use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the token that absorbs attention wherever no object is drawn.
pub const BACKGROUND: &str = "background";

/// Component shared by every default key. It sets the overall logit scale
/// (and so `max(Q Kᵀ)`) without changing which token a cell prefers.
pub const SHARED_KEY_OFFSET: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub fn hex(&self) -> String {
        let [r, g, b] = self.0;
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub name: String,
    pub key: DVector<f64>,
    pub value: DVector<f64>,
    pub color: Rgb,
}

/// Text-side embeddings of the toy generator: a key, a value and a display
/// color per concept. Concept `i` owns latent channel `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptVocabulary {
    concepts: Vec<Concept>,
    background: usize,
}

const DEFAULT_CONCEPTS: [(&str, [u8; 3]); 9] = [
    (BACKGROUND, [236, 236, 228]),
    ("circle", [220, 50, 47]),
    ("square", [38, 139, 210]),
    ("triangle", [133, 153, 0]),
    ("dog", [181, 137, 0]),
    ("cat", [211, 54, 130]),
    ("bird", [42, 161, 152]),
    ("car", [108, 113, 196]),
    ("tree", [0, 90, 40]),
];

impl ConceptVocabulary {
    pub fn new(concepts: Vec<Concept>) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidVocabulary(m));
        let Some(first) = concepts.first() else {
            return invalid("no concepts".into());
        };
        let (key_dim, value_dim) = (first.key.len(), first.value.len());
        if key_dim == 0 || value_dim == 0 {
            return invalid("key and value dimensions must be positive".into());
        }
        for c in &concepts {
            if c.key.len() != key_dim || c.value.len() != value_dim {
                return invalid(format!("concept `{}` has inconsistent dimensions", c.name));
            }
            if !c.key.iter().chain(c.value.iter()).all(|v| v.is_finite()) {
                return invalid(format!("concept `{}` has non-finite embeddings", c.name));
            }
        }
        for (i, a) in concepts.iter().enumerate() {
            for b in &concepts[i + 1..] {
                if a.name.eq_ignore_ascii_case(&b.name) {
                    return invalid(format!("duplicate concept `{}`", a.name));
                }
                if a.key == b.key {
                    return invalid(format!("`{}` and `{}` share a key", a.name, b.name));
                }
                if a.color == b.color {
                    return invalid(format!("`{}` and `{}` share a color", a.name, b.name));
                }
            }
        }
        let values = DMatrix::from_fn(concepts.len(), value_dim, |i, j| concepts[i].value[j]);
        if values.rank(1e-9) < concepts.len() {
            return invalid("value vectors are linearly dependent".into());
        }
        let Some(background) = concepts
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(BACKGROUND))
        else {
            return invalid(format!("a `{BACKGROUND}` concept is required"));
        };
        Ok(Self {
            concepts,
            background,
        })
    }

    /// Eight object concepts plus background. Values are one-hot plus a
    /// shared channel; keys are one-hot plus [`SHARED_KEY_OFFSET`] on that
    /// shared channel.
    pub fn toy() -> Self {
        let n = DEFAULT_CONCEPTS.len();
        let dim = n + 1;
        let concepts = DEFAULT_CONCEPTS
            .iter()
            .enumerate()
            .map(|(i, &(name, color))| {
                let mut key = DVector::zeros(dim);
                key[i] = 1.0;
                key[n] = SHARED_KEY_OFFSET;
                let mut value = DVector::zeros(dim);
                value[i] = 1.0;
                value[n] = 1.0;
                Concept {
                    name: name.to_string(),
                    key,
                    value,
                    color: Rgb(color),
                }
            })
            .collect();
        Self::new(concepts).expect("default vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept(&self, index: usize) -> &Concept {
        &self.concepts[index]
    }

    pub fn background(&self) -> usize {
        self.background
    }

    pub fn key_dim(&self) -> usize {
        self.concepts[0].key.len()
    }

    pub fn value_dim(&self) -> usize {
        self.concepts[0].value.len()
    }

    /// Case-insensitive lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.concepts
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name.trim()))
    }

    pub fn index_of_color(&self, color: Rgb) -> Option<usize> {
        self.concepts.iter().position(|c| c.color == color)
    }
}

impl Default for ConceptVocabulary {
    fn default() -> Self {
        Self::toy()
    }
}
