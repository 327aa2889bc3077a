use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as choose_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

use super::sample::{normalize_text, SampleObject, SampleSpec};

/// Whether every annotated category is mentioned in the caption.
///
/// Matching is a case-insensitive substring test with whitespace collapsed,
/// so multi-word categories match as phrases. There is no stemming: "dogs"
/// does not mention "dog".
pub fn mentions_all(sample: &SampleSpec) -> bool {
    mentions(&sample.prompt, &sample.objects)
}

fn mentions(prompt: &str, objects: &[SampleObject]) -> bool {
    let prompt = normalize_text(prompt);
    objects
        .iter()
        .all(|o| prompt.contains(&normalize_text(&o.category)))
}

/// Keeps the samples whose categories are all mentioned in their captions.
pub fn filter_samples(samples: &[SampleSpec]) -> Vec<SampleSpec> {
    samples
        .iter()
        .filter(|s| mentions_all(s))
        .cloned()
        .collect()
}

/// Seeded uniform draw of `n1` one-object and `n2` two-object samples.
///
/// Output is the one-object draw followed by the two-object draw, each in
/// input order.
pub fn split_by_object_count(
    samples: &[SampleSpec],
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<Vec<SampleSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n1 + n2);
    for (objects, needed) in [(1, n1), (2, n2)] {
        let stratum: Vec<&SampleSpec> = samples
            .iter()
            .filter(|s| s.objects.len() == objects)
            .collect();
        if stratum.len() < needed {
            return Err(Error::InsufficientStratum {
                objects,
                needed,
                available: stratum.len(),
            });
        }
        let mut picked = choose_indices(&mut rng, stratum.len(), needed).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| stratum[i].clone()));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoCaption {
    image_id: u64,
    caption: String,
}

#[derive(Deserialize)]
struct CocoCaptions {
    annotations: Vec<CocoCaption>,
}

#[derive(Deserialize)]
struct CocoInstance {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Deserialize)]
struct CocoInstances {
    images: Vec<CocoImage>,
    annotations: Vec<CocoInstance>,
    categories: Vec<CocoCategory>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Builds samples from COCO-style caption and instance annotation files.
///
/// Crowd annotations are skipped and boxes (`[x, y, w, h]`) are clipped to
/// the image. Each image becomes one sample whose prompt is its first caption
/// mentioning every category, or its first caption if none does. Images
/// without captions or objects are dropped. Samples are ordered by image id.
pub fn load_coco(captions: &Path, annotations: &Path) -> Result<Vec<SampleSpec>> {
    let captions: CocoCaptions = read_json(captions)?;
    let instances: CocoInstances = read_json(annotations)?;
    let names: BTreeMap<u64, &str> = instances
        .categories
        .iter()
        .map(|c| (c.id, c.name.as_str()))
        .collect();

    let mut by_image: BTreeMap<u64, (Vec<String>, Vec<SampleObject>)> = BTreeMap::new();
    for c in captions.annotations {
        by_image.entry(c.image_id).or_default().0.push(c.caption);
    }
    let sizes: BTreeMap<u64, (u32, u32)> = instances
        .images
        .iter()
        .map(|i| (i.id, (i.width, i.height)))
        .collect();
    for a in &instances.annotations {
        if a.iscrowd != 0 {
            continue;
        }
        let (Some(&(w, h)), Some(name)) = (sizes.get(&a.image_id), names.get(&a.category_id))
        else {
            log::warn!(
                "annotation for unknown image {} or category {}",
                a.image_id,
                a.category_id
            );
            continue;
        };
        let [x, y, bw, bh] = a.bbox;
        let bbox = [
            x.max(0.0),
            y.max(0.0),
            (x + bw).min(f64::from(w)),
            (y + bh).min(f64::from(h)),
        ];
        if !(bbox[0] < bbox[2] && bbox[1] < bbox[3]) {
            continue;
        }
        by_image
            .entry(a.image_id)
            .or_default()
            .1
            .push(SampleObject {
                category: name.to_string(),
                bbox,
            });
    }

    let mut samples = Vec::new();
    for (id, (captions, objects)) in by_image {
        let Some(&(width, height)) = sizes.get(&id) else {
            continue;
        };
        if captions.is_empty() || objects.is_empty() || width == 0 || height == 0 {
            continue;
        }
        let prompt = captions
            .iter()
            .map(|c| c.trim())
            .find(|c| mentions(c, &objects))
            .unwrap_or(captions[0].trim())
            .to_string();
        samples.push(SampleSpec {
            image_id: id.to_string(),
            prompt,
            width,
            height,
            objects,
        });
    }
    Ok(samples)
}
