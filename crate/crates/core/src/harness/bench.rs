use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{match_guidance, mean_iou, success_rate, ConsistencyRecord, SubsetReport};
use crate::generator::{generate, oracle_detect, ConceptVocabulary, GenerationConfig};
use crate::geometry::{distance_terciles, BoundingBox, DistanceClass};
use crate::guidance::{Grid, GuidanceSet, MaskMode};

use super::io::DetectionsByImage;
use super::sample::SampleSpec;

/// What produced the evaluated layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum RunConfig {
    /// The built-in generator and detector.
    Toy {
        mask_mode: MaskMode,
        w_prime: f64,
        softness: f64,
        flat_value: f64,
        steps: usize,
        resolutions: Vec<Grid>,
        base_seed: u64,
        seeds: usize,
    },
    /// Detections supplied from outside.
    External { detections: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub objects: usize,
    pub mean_iou: f64,
    /// Percentage.
    pub success_rate: f64,
}

impl Aggregate {
    pub fn from_records(records: &[ConsistencyRecord]) -> Result<Self> {
        Ok(Self {
            objects: records.len(),
            mean_iou: mean_iou(records)?,
            success_rate: success_rate(records)?,
        })
    }
}

/// Scores of one sample under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub records: Vec<ConsistencyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub aggregate: Aggregate,
    pub subsets: SubsetReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
    /// Sorted by image id, then seed.
    pub samples: Vec<SampleResult>,
}

impl RunReport {
    fn assemble(config: RunConfig, samples: Vec<SampleResult>) -> Result<Self> {
        let all: Vec<ConsistencyRecord> = samples
            .iter()
            .flat_map(|s| s.records.iter().cloned())
            .collect();
        Ok(Self {
            config,
            aggregate: Aggregate::from_records(&all)?,
            subsets: SubsetReport::from_records(&all),
            fid: None,
            samples,
        })
    }

    pub fn records(&self) -> impl Iterator<Item = &ConsistencyRecord> {
        self.samples.iter().flat_map(|s| s.records.iter())
    }

    pub fn with_fid(mut self, fid: f64) -> Self {
        self.fid = Some(fid);
        self
    }
}

/// One report per mask mode, in the order requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunReport>,
}

impl BenchReport {
    pub fn run(&self, mode: MaskMode) -> Option<&RunReport> {
        self.runs
            .iter()
            .find(|r| matches!(r.config, RunConfig::Toy { mask_mode, .. } if mask_mode == mode))
    }
}

/// Seed for the `index`-th run of a sample. Depends only on its arguments, so
/// every mode sees the same seeds and reordering samples changes nothing.
pub fn sample_seed(base: u64, image_id: &str, index: usize) -> u64 {
    // FNV-1a over the id, then two rounds of splitmix64
    let id_hash = image_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    });
    splitmix64(splitmix64(base ^ id_hash).wrapping_add(index as u64))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Samples sorted by image id (stably), with their guidance.
fn prepare(samples: &[SampleSpec]) -> Result<Vec<(&SampleSpec, GuidanceSet)>> {
    if samples.is_empty() {
        return Err(Error::Empty("a benchmark"));
    }
    let mut sorted: Vec<&SampleSpec> = samples.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    sorted
        .into_iter()
        .map(|s| {
            let g = s
                .to_guidance()
                .map_err(|e| Error::InvalidGuidance(format!("sample {}: {e}", s.image_id)))?;
            Ok((s, g))
        })
        .collect()
}

/// Distance terciles over every guidance box of every sample, computed once
/// so all modes and seeds share them.
fn population_distances(
    prepared: &[(&SampleSpec, GuidanceSet)],
) -> Result<Vec<Vec<DistanceClass>>> {
    let boxes: Vec<BoundingBox> = prepared
        .iter()
        .flat_map(|(_, g)| g.entries().iter().map(|e| e.bbox))
        .collect();
    let classes = distance_terciles(&boxes)?;
    let mut rest = classes.as_slice();
    Ok(prepared
        .iter()
        .map(|(_, g)| {
            let (head, tail) = rest.split_at(g.entries().len());
            rest = tail;
            head.to_vec()
        })
        .collect())
}

fn scored(
    image_id: &str,
    seed: Option<u64>,
    mut records: Vec<ConsistencyRecord>,
    distances: &[DistanceClass],
) -> SampleResult {
    for (r, &d) in records.iter_mut().zip(distances) {
        r.distance_class = d;
    }
    SampleResult {
        image_id: image_id.to_string(),
        seed,
        records,
    }
}

/// Runs generation, detection and scoring for every sample, seed and mode.
///
/// `cfg.seed` is the base seed; the mask mode in `cfg` is ignored in favour
/// of `modes`. Work is spread over threads but the report only depends on
/// the inputs.
pub fn run_benchmark(
    samples: &[SampleSpec],
    vocab: &ConceptVocabulary,
    cfg: &GenerationConfig,
    modes: &[MaskMode],
    seeds: usize,
) -> Result<BenchReport> {
    if modes.is_empty() {
        return Err(Error::Empty("a benchmark mode list"));
    }
    if seeds == 0 {
        return Err(Error::Config(
            "at least one seed per sample is required".into(),
        ));
    }
    cfg.validate()?;
    let prepared = prepare(samples)?;
    let missing: BTreeSet<String> = prepared
        .iter()
        .flat_map(|(_, g)| g.prompt().iter())
        .filter(|t| vocab.index_of(t).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::VocabularyGap(missing.into_iter().collect()));
    }
    let distances = population_distances(&prepared)?;

    let jobs: Vec<(usize, u64)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(i, (s, _))| (0..seeds).map(move |k| (i, sample_seed(cfg.seed, &s.image_id, k))))
        .collect();

    let mut runs = Vec::with_capacity(modes.len());
    for &mode in modes {
        let results: Vec<SampleResult> = jobs
            .par_iter()
            .map(|&(i, seed)| {
                let (sample, g) = &prepared[i];
                let run_cfg = cfg.clone().with_mode(mode).with_seed(seed);
                let out = generate(g, vocab, &run_cfg).map_err(|e| {
                    Error::InvalidGuidance(format!("sample {}: {e}", sample.image_id))
                })?;
                let records = match_guidance(&oracle_detect(&out.image, vocab), g);
                Ok(scored(&sample.image_id, Some(seed), records, &distances[i]))
            })
            .collect::<Result<_>>()?;
        let config = RunConfig::Toy {
            mask_mode: mode,
            w_prime: cfg.w_prime,
            softness: cfg.softness,
            flat_value: cfg.flat_value,
            steps: cfg.steps,
            resolutions: cfg.resolutions.clone(),
            base_seed: cfg.seed,
            seeds,
        };
        runs.push(RunReport::assemble(config, results)?);
    }
    Ok(BenchReport { runs })
}

/// Scores externally produced detections against the samples' guidance.
/// Images missing from `detections` score 0 on every object; detections for
/// unknown images are ignored with a warning.
pub fn evaluate_detections(
    samples: &[SampleSpec],
    detections: &DetectionsByImage,
    source: &str,
) -> Result<RunReport> {
    let prepared = prepare(samples)?;
    let known: HashSet<&str> = prepared.iter().map(|(s, _)| s.image_id.as_str()).collect();
    for id in detections.keys().filter(|id| !known.contains(id.as_str())) {
        log::warn!("detections for image {id} have no matching sample");
    }
    let distances = population_distances(&prepared)?;
    let results = prepared
        .iter()
        .zip(&distances)
        .map(|((s, g), d)| {
            let dets = detections.get(&s.image_id).map_or(&[][..], Vec::as_slice);
            scored(&s.image_id, None, match_guidance(dets, g), d)
        })
        .collect();
    RunReport::assemble(
        RunConfig::External {
            detections: source.to_string(),
        },
        results,
    )
}
