//! Seeded synthetic sequence data with clean, seen-noise and unseen-noise
//! conditions.
//!
//! Each class emits frames from an isotropic Gaussian around a fixed mean.
//! A sequence is a run of segments, one label per segment. Seen noise is
//! Gaussian; unseen noise is uniform with a larger variance plus a constant
//! per-sequence offset, so it differs from the training corruption in both
//! family and scale.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::ctc::LabelSequence;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid config: {field}: {reason}")]
    ConfigInvalid { field: &'static str, reason: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SynthError {
    SynthError::ConfigInvalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCondition {
    Clean,
    Seen,
    Unseen,
}

impl NoiseCondition {
    pub const ALL: [NoiseCondition; 3] = [Self::Clean, Self::Seen, Self::Unseen];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Clean => "clean",
            Self::Seen => "seen",
            Self::Unseen => "unseen",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Self::Clean => 1,
            Self::Seen => 2,
            Self::Unseen => 3,
        }
    }
}

impl std::fmt::Display for NoiseCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
}

/// Corruption used for the held-out unseen condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnseenNoise {
    pub family: NoiseFamily,
    /// Per-element variance of the frame noise.
    pub variance: f64,
    /// Standard deviation of the constant offset added to a whole sequence.
    pub offset_stddev: f64,
}

impl Default for UnseenNoise {
    fn default() -> Self {
        Self {
            family: NoiseFamily::Uniform,
            variance: 2.0,
            offset_stddev: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Non-blank classes; labels are `1..=num_classes`.
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Distance of each class mean from the origin. Means are mutually
    /// orthogonal, so pairwise distances are `sqrt(2)` times this.
    pub class_mean_scale: f64,
    pub emission_stddev: f64,
    /// Inclusive frame range per segment.
    pub segment_length: [usize; 2],
    /// Inclusive label-count range per sequence.
    pub labels_per_sequence: [usize; 2],
    pub allow_repeats: bool,
    pub max_frames: usize,
    pub condition: NoiseCondition,
    pub seen_noise_stddev: f64,
    pub unseen_noise: UnseenNoise,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            feature_dim: 8,
            class_mean_scale: 3.0,
            emission_stddev: 0.5,
            segment_length: [3, 8],
            labels_per_sequence: [2, 5],
            allow_repeats: false,
            max_frames: 64,
            condition: NoiseCondition::Clean,
            seen_noise_stddev: 0.8,
            unseen_noise: UnseenNoise::default(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn with_condition(&self, condition: NoiseCondition) -> Self {
        Self {
            condition,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_classes < 1 {
            return Err(invalid("num_classes", "must be >= 1"));
        }
        if self.feature_dim < self.num_classes {
            return Err(invalid(
                "feature_dim",
                format!("{} cannot hold {} orthogonal class means", self.feature_dim, self.num_classes),
            ));
        }
        for (field, v) in [
            ("emission_stddev", self.emission_stddev),
            ("seen_noise_stddev", self.seen_noise_stddev),
            ("unseen_noise.variance", self.unseen_noise.variance),
            ("unseen_noise.offset_stddev", self.unseen_noise.offset_stddev),
            ("class_mean_scale", self.class_mean_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("{v} must be finite and >= 0")));
            }
        }
        if self.num_classes > 1 && self.class_mean_scale * std::f64::consts::SQRT_2 < 4.0 * self.emission_stddev {
            return Err(invalid(
                "class_mean_scale",
                "class means must be at least 4 emission deviations apart",
            ));
        }
        for (field, [lo, hi]) in [
            ("segment_length", self.segment_length),
            ("labels_per_sequence", self.labels_per_sequence),
        ] {
            if lo > hi {
                return Err(invalid(field, format!("min {lo} exceeds max {hi}")));
            }
        }
        if self.segment_length[0] < 1 {
            return Err(invalid("segment_length", "segments need at least one frame"));
        }
        if self.allow_repeats && self.segment_length[0] < 2 {
            return Err(invalid(
                "segment_length",
                "repeated labels need segments of at least two frames to stay CTC-feasible",
            ));
        }
        if !self.allow_repeats && self.num_classes < 2 && self.labels_per_sequence[1] > 1 {
            return Err(invalid("num_classes", "a single class cannot form repeat-free sequences"));
        }
        if self.labels_per_sequence[1] * self.segment_length[1] > self.max_frames {
            return Err(invalid("max_frames", "longest possible sequence exceeds the frame limit"));
        }
        if self.labels_per_sequence[1] == 0 {
            return Err(invalid("labels_per_sequence", "sequences would have no frames"));
        }
        Ok(())
    }

    /// Class means, one row per class (row `j - 1` for label `j`).
    pub fn class_means(&self) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, 0, 0));
        let dim = self.feature_dim;
        // Gram-Schmidt on Gaussian vectors gives a random rotation.
        let mut basis: Vec<Array1<f64>> = Vec::with_capacity(self.num_classes);
        while basis.len() < self.num_classes {
            let mut v: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for b in &basis {
                let proj = v.dot(b);
                v.scaled_add(-proj, b);
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-6 {
                basis.push(v / norm);
            }
        }
        let mut means = Array2::zeros((self.num_classes, dim));
        for (j, b) in basis.iter().enumerate() {
            means.row_mut(j).assign(&(b * self.class_mean_scale));
        }
        means
    }
}

/// splitmix64-style mixing of a seed with two stream identifiers.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRecord", into = "SampleRecord")]
pub struct SequenceSample {
    /// `T x F`.
    pub features: Array2<f64>,
    /// One label in `1..=num_classes` per frame.
    pub framewise: Vec<usize>,
    pub collapsed: LabelSequence,
    pub condition: NoiseCondition,
}

impl SequenceSample {
    pub fn frames(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    condition: NoiseCondition,
    collapsed: Vec<usize>,
    framewise: Vec<usize>,
    features: Vec<Vec<f64>>,
}

impl TryFrom<SampleRecord> for SequenceSample {
    type Error = String;

    fn try_from(r: SampleRecord) -> Result<Self, Self::Error> {
        let frames = r.features.len();
        let dim = r.features.first().map_or(0, Vec::len);
        if r.features.iter().any(|row| row.len() != dim) {
            return Err("ragged feature rows".into());
        }
        if r.framewise.len() != frames {
            return Err(format!("{} framewise labels for {frames} frames", r.framewise.len()));
        }
        let features = Array2::from_shape_vec((frames, dim), r.features.concat()).map_err(|e| e.to_string())?;
        let collapsed = LabelSequence::new(r.collapsed).map_err(|e| e.to_string())?;
        Ok(Self {
            features,
            framewise: r.framewise,
            collapsed,
            condition: r.condition,
        })
    }
}

impl From<SequenceSample> for SampleRecord {
    fn from(s: SequenceSample) -> Self {
        Self {
            condition: s.condition,
            collapsed: s.collapsed.into(),
            framewise: s.framewise,
            features: s.features.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// `n` samples with indices `0..n`.
pub fn generate(cfg: &GeneratorConfig, n: usize) -> Result<Vec<SequenceSample>, SynthError> {
    if n == 0 {
        return Err(invalid("count", "must be >= 1"));
    }
    generate_range(cfg, 0, n)
}

/// Samples `first..first + n`. The label content of sample `i` depends only
/// on `(seed, i)`, so the same index yields the same utterance under every
/// noise condition.
pub fn generate_range(cfg: &GeneratorConfig, first: u64, n: usize) -> Result<Vec<SequenceSample>, SynthError> {
    cfg.validate()?;
    let means = cfg.class_means();
    (first..first + n as u64).map(|i| sample(cfg, &means, i)).collect()
}

fn sample(cfg: &GeneratorConfig, means: &Array2<f64>, index: u64) -> Result<SequenceSample, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, index, 0xC0));
    let count = rng.random_range(cfg.labels_per_sequence[0]..=cfg.labels_per_sequence[1]);
    let mut labels: Vec<usize> = Vec::with_capacity(count);
    for _ in 0..count {
        let label = loop {
            let l = rng.random_range(1..=cfg.num_classes);
            if cfg.allow_repeats || labels.last() != Some(&l) {
                break l;
            }
        };
        labels.push(label);
    }
    let lengths: Vec<usize> = labels
        .iter()
        .map(|_| rng.random_range(cfg.segment_length[0]..=cfg.segment_length[1]))
        .collect();

    let framewise: Vec<usize> = labels
        .iter()
        .zip(&lengths)
        .flat_map(|(&l, &len)| std::iter::repeat_n(l, len))
        .collect();
    let frames = framewise.len();
    let collapsed = LabelSequence::new(labels).expect("labels are drawn from 1..=num_classes");
    if frames < collapsed.min_frames() {
        return Err(invalid("segment_length", "generated labeling is not CTC-feasible"));
    }

    let emission = Normal::new(0.0, cfg.emission_stddev).map_err(|e| invalid("emission_stddev", e.to_string()))?;
    let dim = cfg.feature_dim;
    let mut features = Array2::zeros((frames, dim));
    for (t, &label) in framewise.iter().enumerate() {
        for (x, m) in features.row_mut(t).iter_mut().zip(means.row(label - 1)) {
            *x = m + emission.sample(&mut rng);
        }
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, index, 0xA0 + cfg.condition.stream()));
    add_noise(cfg, &mut features, &mut noise_rng)?;

    Ok(SequenceSample {
        features,
        framewise,
        collapsed,
        condition: cfg.condition,
    })
}

fn add_noise(cfg: &GeneratorConfig, features: &mut Array2<f64>, rng: &mut ChaCha8Rng) -> Result<(), SynthError> {
    match cfg.condition {
        NoiseCondition::Clean => {}
        NoiseCondition::Seen => {
            let noise = Normal::new(0.0, cfg.seen_noise_stddev).map_err(|e| invalid("seen_noise_stddev", e.to_string()))?;
            features.mapv_inplace(|x| x + noise.sample(rng));
        }
        NoiseCondition::Unseen => {
            let spec = &cfg.unseen_noise;
            let offset_dist = Normal::new(0.0, spec.offset_stddev).map_err(|e| invalid("unseen_noise.offset_stddev", e.to_string()))?;
            let offset: Vec<f64> = (0..features.ncols()).map(|_| offset_dist.sample(rng)).collect();
            let draw = unseen_sampler(spec)?;
            for mut row in features.outer_iter_mut() {
                for (x, o) in row.iter_mut().zip(&offset) {
                    *x += o + draw(rng);
                }
            }
        }
    }
    Ok(())
}

type NoiseDraw = Box<dyn Fn(&mut ChaCha8Rng) -> f64>;

/// Frame-noise sampler for the unseen family, scaled to the configured variance.
fn unseen_sampler(spec: &UnseenNoise) -> Result<NoiseDraw, SynthError> {
    let sd = spec.variance.sqrt();
    match spec.family {
        NoiseFamily::Gaussian => {
            let d = Normal::new(0.0, sd).map_err(|e| invalid("unseen_noise.variance", e.to_string()))?;
            Ok(Box::new(move |rng| d.sample(rng)))
        }
        NoiseFamily::Uniform => {
            let half = (3.0 * spec.variance).sqrt();
            if half == 0.0 {
                return Ok(Box::new(|_| 0.0));
            }
            let d = Uniform::new(-half, half).map_err(|e| invalid("unseen_noise.variance", e.to_string()))?;
            Ok(Box::new(move |rng| d.sample(rng)))
        }
    }
}

/// Draws `n` raw noise values of a condition, for inspecting its statistics.
pub fn noise_draws(cfg: &GeneratorConfig, condition: NoiseCondition, n: usize) -> Result<Vec<f64>, SynthError> {
    let mut c = cfg.with_condition(condition);
    c.feature_dim = 1;
    c.num_classes = 1;
    let mut features = Array2::zeros((n, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, u64::MAX, condition.stream()));
    add_noise(&c, &mut features, &mut rng)?;
    Ok(features.into_raw_vec_and_offset().0)
}

/// Disjoint `(train, valid, test)` subsets, stratified by condition and
/// shuffled deterministically within each condition.
pub fn split(
    samples: Vec<SequenceSample>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>, Vec<SequenceSample>), SynthError> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(invalid("fractions", "must be finite and >= 0"));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid("fractions", format!("sum to {sum}, expected 1")));
    }
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for condition in NoiseCondition::ALL {
        let mut group: Vec<SequenceSample> = samples.iter().filter(|s| s.condition == condition).cloned().collect();
        if group.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, condition.stream(), 0x5B));
        group.shuffle(&mut rng);
        let n = group.len() as f64;
        let n_train = (fractions[0] * n).round() as usize;
        let n_head = (((fractions[0] + fractions[1]) * n).round() as usize).min(group.len());
        let rest = group.split_off(n_head);
        let head_valid = group.split_off(n_train.min(n_head));
        train.extend(group);
        valid.extend(head_valid);
        test.extend(rest);
    }
    Ok((train, valid, test))
}

/// Sizes of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub generator: GeneratorConfig,
    /// Training sequences, half clean and half seen noise.
    pub train_sequences: usize,
    /// Validation set size as a fraction of `train_sequences`.
    pub valid_fraction: f64,
    /// Test utterances; each appears once per condition.
    pub test_sequences: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            train_sequences: 2000,
            valid_fraction: 0.1,
            test_sequences: 300,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.generator.validate()?;
        if self.train_sequences == 0 {
            return Err(invalid("train_sequences", "must be >= 1"));
        }
        if !(self.valid_fraction.is_finite() && self.valid_fraction > 0.0 && self.valid_fraction <= 1.0) {
            return Err(invalid("valid_fraction", format!("{} is outside (0, 1]", self.valid_fraction)));
        }
        if self.valid_sequences() == 0 {
            return Err(invalid("valid_fraction", "leaves no validation sequences"));
        }
        if self.test_sequences == 0 {
            return Err(invalid("test_sequences", "must be >= 1"));
        }
        Ok(())
    }

    pub fn valid_sequences(&self) -> usize {
        (self.valid_fraction * self.train_sequences as f64).round() as usize
    }
}

/// Index base for test utterances, far from the training indices.
const TEST_INDEX_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<SequenceSample>,
    pub valid: Vec<SequenceSample>,
    pub test_clean: Vec<SequenceSample>,
    pub test_seen: Vec<SequenceSample>,
    pub test_unseen: Vec<SequenceSample>,
}

impl Corpus {
    pub fn test(&self, condition: NoiseCondition) -> &[SequenceSample] {
        match condition {
            NoiseCondition::Clean => &self.test_clean,
            NoiseCondition::Seen => &self.test_seen,
            NoiseCondition::Unseen => &self.test_unseen,
        }
    }
}

/// Training and validation data mix clean and seen-noise sequences; the
/// unseen condition only ever appears in the test split.
pub fn build_corpus(cfg: &DatasetConfig) -> Result<Corpus, SynthError> {
    cfg.validate()?;
    let gen = &cfg.generator;
    let means = gen.class_means();
    let clean = gen.with_condition(NoiseCondition::Clean);
    let seen = gen.with_condition(NoiseCondition::Seen);
    let pool_size = cfg.train_sequences + cfg.valid_sequences();
    let pool = (0..pool_size as u64)
        .map(|i| sample(if i % 2 == 0 { &clean } else { &seen }, &means, i))
        .collect::<Result<Vec<_>, _>>()?;
    let train_fraction = cfg.train_sequences as f64 / pool_size as f64;
    let (train, valid, _) = split(pool, [train_fraction, 1.0 - train_fraction, 0.0], gen.seed)?;

    let test_for = |condition| {
        let c = gen.with_condition(condition);
        (0..cfg.test_sequences as u64)
            .map(|i| sample(&c, &means, TEST_INDEX_BASE + i))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(Corpus {
        train,
        valid,
        test_clean: test_for(NoiseCondition::Clean)?,
        test_seen: test_for(NoiseCondition::Seen)?,
        test_unseen: test_for(NoiseCondition::Unseen)?,
    })
}

pub fn write_jsonl(path: &Path, samples: &[SequenceSample]) -> Result<(), SynthError> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, s).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SequenceSample>, SynthError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| SynthError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_emission_clean_frames_sit_on_means() {
        let cfg = GeneratorConfig {
            emission_stddev: 0.0,
            ..Default::default()
        };
        let means = cfg.class_means();
        for s in generate(&cfg, 20).unwrap() {
            for (row, &k) in s.features.outer_iter().zip(&s.framewise) {
                assert_eq!(row, means.row(k - 1));
            }
        }
    }

    #[test]
    fn means_are_separated() {
        let cfg = GeneratorConfig::default();
        let means = cfg.class_means();
        for i in 0..cfg.num_classes {
            for j in 0..i {
                let d = &means.row(i) - &means.row(j);
                let dist = d.dot(&d).sqrt();
                assert!(dist >= 4.0 * cfg.emission_stddev, "{dist}");
                assert!((dist - cfg.class_mean_scale * std::f64::consts::SQRT_2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = GeneratorConfig::default().with_condition(NoiseCondition::Unseen);
        assert_eq!(generate(&cfg, 10).unwrap(), generate(&cfg, 10).unwrap());
        let other = GeneratorConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg, 10).unwrap(), generate(&other, 10).unwrap());
    }

    #[test]
    fn conditions_share_content() {
        let cfg = GeneratorConfig::default();
        let clean = generate(&cfg, 5).unwrap();
        let unseen = generate(&cfg.with_condition(NoiseCondition::Unseen), 5).unwrap();
        for (a, b) in clean.iter().zip(&unseen) {
            assert_eq!(a.framewise, b.framewise);
            assert_ne!(a.features, b.features);
        }
    }

    #[test]
    fn repeats_merge_framewise_only() {
        let cfg = GeneratorConfig {
            num_classes: 2,
            feature_dim: 2,
            allow_repeats: true,
            labels_per_sequence: [6, 6],
            segment_length: [2, 3],
            ..Default::default()
        };
        let samples = generate(&cfg, 50).unwrap();
        let with_repeat = samples
            .iter()
            .find(|s| s.collapsed.labels().windows(2).any(|w| w[0] == w[1]))
            .expect("some sequence repeats a label");
        assert!(with_repeat.frames() >= with_repeat.collapsed.min_frames());
        let mut merged = with_repeat.framewise.clone();
        merged.dedup();
        assert!(merged.len() < with_repeat.collapsed.len());
    }

    #[test]
    fn invalid_configs() {
        let bad = |f: fn(&mut GeneratorConfig)| {
            let mut c = GeneratorConfig::default();
            f(&mut c);
            c.validate().unwrap_err()
        };
        assert!(matches!(bad(|c| c.segment_length = [5, 3]), SynthError::ConfigInvalid { field: "segment_length", .. }));
        assert!(matches!(bad(|c| c.emission_stddev = -1.0), SynthError::ConfigInvalid { field: "emission_stddev", .. }));
        assert!(matches!(bad(|c| c.max_frames = 10), SynthError::ConfigInvalid { field: "max_frames", .. }));
        assert!(matches!(bad(|c| c.feature_dim = 3), SynthError::ConfigInvalid { field: "feature_dim", .. }));
        assert!(matches!(
            bad(|c| {
                c.allow_repeats = true;
                c.segment_length = [1, 4];
            }),
            SynthError::ConfigInvalid { field: "segment_length", .. }
        ));
        assert!(generate(&GeneratorConfig::default(), 0).is_err());
    }

    #[test]
    fn split_sizes() {
        let cfg = GeneratorConfig::default();
        let data = generate(&cfg, 100).unwrap();
        let (a, b, c) = split(data.clone(), [1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (100, 0, 0));
        let (a, b, c) = split(data.clone(), [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        assert_eq!(split(data.clone(), [0.8, 0.1, 0.1], 3).unwrap(), (a, b, c));
        assert!(split(data, [0.8, 0.3, 0.1], 3).is_err());
    }

    #[test]
    fn split_is_stratified() {
        let cfg = GeneratorConfig::default();
        let mut data = generate(&cfg, 40).unwrap();
        data.extend(generate(&cfg.with_condition(NoiseCondition::Seen), 20).unwrap());
        let (train, valid, test) = split(data, [0.5, 0.25, 0.25], 0).unwrap();
        let count = |v: &[SequenceSample], c| v.iter().filter(|s| s.condition == c).count();
        assert_eq!(count(&train, NoiseCondition::Clean), 20);
        assert_eq!(count(&train, NoiseCondition::Seen), 10);
        assert_eq!(count(&valid, NoiseCondition::Seen), 5);
        assert_eq!(count(&test, NoiseCondition::Clean), 10);
    }

    #[test]
    fn corpus_layout() {
        let cfg = DatasetConfig {
            train_sequences: 40,
            valid_fraction: 0.25,
            test_sequences: 7,
            ..Default::default()
        };
        let corpus = build_corpus(&cfg).unwrap();
        assert_eq!(corpus.train.len(), 40);
        assert_eq!(corpus.valid.len(), 10);
        assert!(corpus.train.iter().chain(&corpus.valid).all(|s| s.condition != NoiseCondition::Unseen));
        for condition in NoiseCondition::ALL {
            assert_eq!(corpus.test(condition).len(), 7);
            assert!(corpus.test(condition).iter().all(|s| s.condition == condition));
        }
        assert_eq!(corpus.test_clean[3].framewise, corpus.test_unseen[3].framewise);
    }
}
