//! Synthetic long-video environment.
//!
//! A video is a timeline of unit-norm frame embeddings, each with a handful
//! of region embeddings. Exactly one piece of evidence is planted at a chosen
//! granularity (whole video, segment, frame or region). Everything that is not
//! evidence or on the retrieval path to it stays below a cosine margin with
//! respect to the question embedding, so the retrieval chain finds the evidence
//! only when it is driven deep enough.
//!
//! Embeddings with an exact similarity `c` to the question `q` are built as
//! `c·q + sqrt(1-c²)·u` with `u` Gram-Schmidt-orthogonalised against `q`.
//! Segment-level evidence uses antipodal pairs of orthogonal components so the
//! segment mean points at `q` while every individual frame stays ambiguous.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{self, argmax, cosine, norm};

/// Similarity range for the evidence-bearing embedding.
const EVIDENCE_SIM: (f64, f64) = (0.92, 0.98);
/// Similarity range for a frame that guides zoom-in toward region evidence.
const GUIDE_SIM: (f64, f64) = (0.70, 0.85);
const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SandboxError {
    #[error("invalid sandbox config: {0}")]
    InvalidConfig(String),
    #[error("could not construct a video satisfying the margin invariants after {0} attempts")]
    ConstructionFailed(usize),
    #[error("answer choice {choice} out of range [0, {choices})")]
    ChoiceOutOfRange { choice: usize, choices: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceGranularity {
    Global,
    Segment,
    Frame,
    Region,
}

impl EvidenceGranularity {
    pub const ALL: [EvidenceGranularity; 4] = [
        EvidenceGranularity::Global,
        EvidenceGranularity::Segment,
        EvidenceGranularity::Frame,
        EvidenceGranularity::Region,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvidenceGranularity::Global => "global",
            EvidenceGranularity::Segment => "segment",
            EvidenceGranularity::Frame => "frame",
            EvidenceGranularity::Region => "region",
        }
    }
}

/// Relative weights of evidence granularities in generated corpora.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GranularityMix {
    pub global: f64,
    pub segment: f64,
    pub frame: f64,
    pub region: f64,
}

impl Default for GranularityMix {
    fn default() -> Self {
        Self {
            global: 0.25,
            segment: 0.25,
            frame: 0.25,
            region: 0.25,
        }
    }
}

impl GranularityMix {
    pub fn weights(&self) -> [f64; 4] {
        [self.global, self.segment, self.frame, self.region]
    }

    /// Largest-remainder apportionment of `count` items over the mix.
    pub fn apportion(&self, count: usize) -> [usize; 4] {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        let quotas: Vec<f64> = w.iter().map(|x| x / total * count as f64).collect();
        let mut counts = [0usize; 4];
        for (c, q) in counts.iter_mut().zip(&quotas) {
            *c = q.floor() as usize;
        }
        let mut left = count - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..4).collect();
        // stable: larger remainder first, lower index on ties
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for i in order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandboxConfig {
    pub frames: usize,
    pub segment_size: usize,
    pub dim: usize,
    pub regions: usize,
    /// Distractor cosine margin `m`.
    pub margin: f64,
    pub choices: usize,
    pub mix: GranularityMix,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            frames: 64,
            segment_size: 8,
            dim: 16,
            regions: 4,
            margin: 0.6,
            choices: 4,
            mix: GranularityMix::default(),
        }
    }
}

impl SandboxConfig {
    pub fn validate(&self) -> Result<(), SandboxError> {
        let bad = |m: String| Err(SandboxError::InvalidConfig(m));
        if self.segment_size < 2 {
            return bad(format!("segment_size must be at least 2, got {}", self.segment_size));
        }
        if self.frames == 0 || !self.frames.is_multiple_of(self.segment_size) {
            return bad(format!(
                "frames ({}) must be a positive multiple of segment_size ({})",
                self.frames, self.segment_size
            ));
        }
        if self.dim < 4 {
            return bad(format!("dim must be at least 4, got {}", self.dim));
        }
        if self.regions == 0 {
            return bad("regions must be at least 1".into());
        }
        if !(self.margin >= 0.1 && self.margin < 0.9) {
            return bad(format!("margin must lie in [0.1, 0.9), got {}", self.margin));
        }
        if self.choices < 2 {
            return bad(format!("choices must be at least 2, got {}", self.choices));
        }
        let w = self.mix.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return bad("granularity mix weights must be non-negative with a positive sum".into());
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.frames / self.segment_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSpec {
    pub granularity: EvidenceGranularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    /// Global frame index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
    pub correct_choice: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentCue {
    Global,
    Local,
}

impl IntentCue {
    pub fn name(self) -> &'static str {
        match self {
            IntentCue::Global => "global",
            IntentCue::Local => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub query: Vec<f64>,
    pub cue: IntentCue,
    pub choices: usize,
    pub video_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub id: String,
    pub seed: u64,
    pub segment_size: usize,
    pub margin: f64,
    pub frame_embeddings: Vec<Vec<f64>>,
    /// `region_embeddings[frame][region]`.
    pub region_embeddings: Vec<Vec<Vec<f64>>>,
    pub evidence: EvidenceSpec,
}

impl SyntheticVideo {
    pub fn frame_count(&self) -> usize {
        self.frame_embeddings.len()
    }

    pub fn segment_count(&self) -> usize {
        self.frame_count() / self.segment_size
    }

    pub fn segment_frames(&self, segment: usize) -> std::ops::Range<usize> {
        segment * self.segment_size..(segment + 1) * self.segment_size
    }

    pub fn segment_mean(&self, segment: usize) -> Vec<f64> {
        let dim = self.frame_embeddings[0].len();
        let mut m = vec![0.0; dim];
        for f in self.segment_frames(segment) {
            for (acc, x) in m.iter_mut().zip(&self.frame_embeddings[f]) {
                *acc += x;
            }
        }
        for x in &mut m {
            *x /= self.segment_size as f64;
        }
        m
    }

    /// Highest similarity to `query` among frames and regions off the
    /// evidence path.
    pub fn max_distractor_similarity(&self, query: &[f64]) -> f64 {
        let ev = &self.evidence;
        let mut best = f64::NEG_INFINITY;
        for (f, e) in self.frame_embeddings.iter().enumerate() {
            let on_path = ev.frame == Some(f);
            if !on_path {
                best = best.max(cosine(query, e));
            }
            for (r, e) in self.region_embeddings[f].iter().enumerate() {
                if !(on_path && ev.region == Some(r)) {
                    best = best.max(cosine(query, e));
                }
            }
        }
        best
    }

    /// Verify every construction invariant against the question embedding.
    pub fn check_invariants(&self, query: &[f64]) -> Result<(), String> {
        let m = self.margin;
        let ev = &self.evidence;
        for (f, e) in self.frame_embeddings.iter().enumerate() {
            if (norm(e) - 1.0).abs() > 1e-9 {
                return Err(format!("frame {f} not unit norm"));
            }
            for (r, e) in self.region_embeddings[f].iter().enumerate() {
                if (norm(e) - 1.0).abs() > 1e-9 {
                    return Err(format!("region {f}/{r} not unit norm"));
                }
            }
        }
        for (f, e) in self.frame_embeddings.iter().enumerate() {
            let on_path = ev.frame == Some(f);
            let sim = cosine(query, e);
            if !on_path && sim >= m {
                return Err(format!("distractor frame {f} similarity {sim} >= margin {m}"));
            }
            for (r, e) in self.region_embeddings[f].iter().enumerate() {
                let is_ev = on_path && ev.region == Some(r);
                let sim = cosine(query, e);
                if !is_ev && sim >= m {
                    return Err(format!("distractor region {f}/{r} similarity {sim} >= margin"));
                }
            }
        }
        for s in 0..self.segment_count() {
            if ev.segment == Some(s) {
                continue;
            }
            let sim = cosine(query, &self.segment_mean(s));
            if sim >= m {
                return Err(format!("distractor segment {s} similarity {sim} >= margin"));
            }
        }
        let evidence_sim = match ev.granularity {
            EvidenceGranularity::Global => None,
            EvidenceGranularity::Segment => Some(cosine(query, &self.segment_mean(ev.segment.unwrap()))),
            EvidenceGranularity::Frame => Some(cosine(query, &self.frame_embeddings[ev.frame.unwrap()])),
            EvidenceGranularity::Region => Some(cosine(
                query,
                &self.region_embeddings[ev.frame.unwrap()][ev.region.unwrap()],
            )),
        };
        if let Some(sim) = evidence_sim {
            if sim <= 0.9 {
                return Err(format!("evidence similarity {sim} <= 0.9"));
            }
        }
        if let Some(seg) = ev.segment {
            let pick = argmax((0..self.segment_count()).map(|s| cosine(query, &self.segment_mean(s))));
            if pick != Some(seg) {
                return Err(format!("segment retrieval picks {pick:?}, evidence in {seg}"));
            }
            if let Some(frame) = ev.frame {
                let range = self.segment_frames(seg);
                let start = range.start;
                let pick = argmax(range.map(|f| cosine(query, &self.frame_embeddings[f])));
                if pick.map(|p| p + start) != Some(frame) {
                    return Err(format!("frame pick misses evidence frame {frame}"));
                }
                if let Some(region) = ev.region {
                    let pick = argmax(self.region_embeddings[frame].iter().map(|e| cosine(query, e)));
                    if pick != Some(region) {
                        return Err(format!("zoom misses evidence region {region}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One corpus record: a question and the video it is asked about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxItem {
    pub question: Question,
    pub video: SyntheticVideo,
}

impl SandboxItem {
    pub fn granularity(&self) -> EvidenceGranularity {
        self.video.evidence.granularity
    }

    pub fn correct_choice(&self) -> usize {
        self.video.evidence.correct_choice
    }
}

/// How far the retrieval process has gone in the current episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Coarse,
    Browsed,
    SegmentSelected,
    FrameSelected,
    RegionSelected,
}

impl Granularity {
    pub const ALL: [Granularity; 5] = [
        Granularity::Coarse,
        Granularity::Browsed,
        Granularity::SegmentSelected,
        Granularity::FrameSelected,
        Granularity::RegionSelected,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Coarse => "coarse",
            Granularity::Browsed => "browsed",
            Granularity::SegmentSelected => "segment",
            Granularity::FrameSelected => "frame",
            Granularity::RegionSelected => "region",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationState {
    pub granularity: Granularity,
    /// Number of successful browse calls so far.
    pub resolution_level: u32,
    pub selected_segment: Option<usize>,
    /// Global frame index.
    pub selected_frame: Option<usize>,
    pub selected_region: Option<usize>,
    pub evidence_visible: bool,
    pub tokens_consumed: u32,
    pub turn: usize,
}

impl ObservationState {
    pub fn initial() -> Self {
        Self {
            granularity: Granularity::Coarse,
            resolution_level: 0,
            selected_segment: None,
            selected_frame: None,
            selected_region: None,
            evidence_visible: false,
            tokens_consumed: 0,
            turn: 0,
        }
    }
}

/// Whether the current observation exposes the planted evidence.
///
/// Global evidence needs at least one browse; localized evidence needs the
/// exact segment, frame or region to be the current selection.
pub fn reveal_rule(evidence: &EvidenceSpec, obs: &ObservationState) -> bool {
    match evidence.granularity {
        EvidenceGranularity::Global => obs.resolution_level >= 1,
        EvidenceGranularity::Segment => obs.selected_segment.is_some() && obs.selected_segment == evidence.segment,
        EvidenceGranularity::Frame => obs.selected_frame.is_some() && obs.selected_frame == evidence.frame,
        EvidenceGranularity::Region => {
            obs.selected_frame.is_some()
                && obs.selected_frame == evidence.frame
                && obs.selected_region.is_some()
                && obs.selected_region == evidence.region
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    /// Unseen evidence always yields a wrong answer.
    Deterministic,
    /// Unseen evidence yields a correct answer with probability `1/C`.
    Guess,
}

/// Judge an answer. Returns whether it counts as correct.
pub fn judge_answer(
    item: &SandboxItem,
    choice: usize,
    obs: &ObservationState,
    mode: JudgeMode,
    rng: &mut impl Rng,
) -> Result<bool, SandboxError> {
    let choices = item.question.choices;
    if choice >= choices {
        return Err(SandboxError::ChoiceOutOfRange { choice, choices });
    }
    if obs.evidence_visible {
        return Ok(choice == item.correct_choice());
    }
    Ok(match mode {
        JudgeMode::Deterministic => false,
        JudgeMode::Guess => rng.random_range(0..choices) == 0,
    })
}

/// Generate one video and question, sampling the evidence granularity from
/// the configured mix.
pub fn generate_video(seed: u64, config: &SandboxConfig) -> Result<SandboxItem, SandboxError> {
    config.validate()?;
    let mut rng = util::rng_for(seed, &[0x6772]);
    let w = config.mix.weights();
    let total: f64 = w.iter().sum();
    let mut x = rng.random::<f64>() * total;
    let mut granularity = EvidenceGranularity::Region;
    for (g, wi) in EvidenceGranularity::ALL.into_iter().zip(w) {
        if x < wi {
            granularity = g;
            break;
        }
        x -= wi;
    }
    generate_video_with(seed, config, granularity, format!("q-{seed}"))
}

/// Generate one video and question with a fixed evidence granularity.
pub fn generate_video_with(
    seed: u64,
    config: &SandboxConfig,
    granularity: EvidenceGranularity,
    id: String,
) -> Result<SandboxItem, SandboxError> {
    config.validate()?;
    let mut rng = util::rng_for(seed, &[0x7669]);
    for _ in 0..MAX_ATTEMPTS {
        let (video, query) = build_video(&mut rng, seed, config, granularity, &id);
        if video.check_invariants(&query).is_ok() {
            let question = Question {
                id: id.clone(),
                query,
                cue: if granularity == EvidenceGranularity::Global {
                    IntentCue::Global
                } else {
                    IntentCue::Local
                },
                choices: config.choices,
                video_ref: video.id.clone(),
            };
            return Ok(SandboxItem { question, video });
        }
    }
    Err(SandboxError::ConstructionFailed(MAX_ATTEMPTS))
}

/// Generate a corpus whose granularity counts match the mix exactly.
pub fn generate_corpus(seed: u64, config: &SandboxConfig, count: usize) -> Result<Vec<SandboxItem>, SandboxError> {
    config.validate()?;
    if count == 0 {
        return Err(SandboxError::InvalidConfig("corpus count must be positive".into()));
    }
    let counts = config.mix.apportion(count);
    let mut plan: Vec<EvidenceGranularity> = EvidenceGranularity::ALL
        .into_iter()
        .zip(counts)
        .flat_map(|(g, n)| std::iter::repeat_n(g, n))
        .collect();
    plan.shuffle(&mut util::rng_for(seed, &[0x706c616e]));
    plan.into_iter()
        .enumerate()
        .map(|(i, g)| {
            let item_seed = util::derive_seed(seed, &[i as u64]);
            generate_video_with(item_seed, config, g, format!("q{i:05}"))
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Random unit vector orthogonal to `q` (Gram-Schmidt).
fn orthogonal_unit(rng: &mut ChaCha8Rng, q: &[f64]) -> Vec<f64> {
    loop {
        let mut v = gaussian(rng, q.len());
        let p = util::dot(&v, q);
        for (x, qi) in v.iter_mut().zip(q) {
            *x -= p * qi;
        }
        if norm(&v) > 1e-6 {
            return normalize(v);
        }
    }
}

/// Project out `q` and renormalise.
fn orthonormalize(q: &[f64], v: Vec<f64>) -> Vec<f64> {
    let p = util::dot(&v, q);
    normalize(v.iter().zip(q).map(|(x, qi)| x - p * qi).collect())
}

fn with_similarity(q: &[f64], sim: f64, u: &[f64]) -> Vec<f64> {
    let s = (1.0 - sim * sim).sqrt();
    normalize(q.iter().zip(u).map(|(qi, ui)| sim * qi + s * ui).collect())
}

fn perturbed(rng: &mut ChaCha8Rng, q: &[f64], base: &[f64], scale: f64) -> Vec<f64> {
    let n = orthogonal_unit(rng, q);
    orthonormalize(q, base.iter().zip(&n).map(|(b, x)| b + scale * x).collect())
}

fn distractor_range(margin: f64) -> (f64, f64) {
    (margin - 0.9, margin - 0.1)
}

/// Frames of a segment that does not hold the evidence: they share a theme
/// direction so their mean cannot align with the query by cancellation.
fn distractor_segment(rng: &mut ChaCha8Rng, q: &[f64], cfg: &SandboxConfig) -> Vec<Vec<f64>> {
    let theme = orthogonal_unit(rng, q);
    (0..cfg.segment_size)
        .map(|_| {
            let u = perturbed(rng, q, &theme, 0.6);
            with_similarity(q, uniform(rng, distractor_range(cfg.margin)), &u)
        })
        .collect()
}

/// Frames of the evidence segment. `anchor` is the evidence (or guide) frame
/// embedding when the evidence lies below segment level; the remaining frames
/// come in antipodal pairs so their orthogonal parts cancel in the mean.
fn evidence_segment(
    rng: &mut ChaCha8Rng,
    q: &[f64],
    cfg: &SandboxConfig,
    anchor: Option<(usize, Vec<f64>, Vec<f64>)>,
) -> Vec<Vec<f64>> {
    let near = (cfg.margin - 0.2, cfg.margin - 0.05);
    let mut others = Vec::new();
    let mut needed = cfg.segment_size - usize::from(anchor.is_some());
    if let Some((_, _, anchor_dir)) = &anchor {
        if needed % 2 == 1 {
            let u: Vec<f64> = anchor_dir.iter().map(|x| -x).collect();
            let u = perturbed(rng, q, &u, 0.05);
            others.push(with_similarity(q, uniform(rng, near), &u));
            needed -= 1;
        }
    }
    while needed >= 2 {
        let v = orthogonal_unit(rng, q);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let c = uniform(rng, near);
        let a = perturbed(rng, q, &v, 0.05);
        let b = perturbed(rng, q, &neg, 0.05);
        others.push(with_similarity(q, c, &a));
        others.push(with_similarity(q, c, &b));
        needed -= 2;
    }
    if needed == 1 {
        let u = orthogonal_unit(rng, q);
        others.push(with_similarity(q, uniform(rng, near), &u));
    }
    others.shuffle(rng);
    match anchor {
        Some((offset, emb, _)) => {
            others.insert(offset, emb);
            others
        }
        None => others,
    }
}

fn build_video(
    rng: &mut ChaCha8Rng,
    seed: u64,
    cfg: &SandboxConfig,
    granularity: EvidenceGranularity,
    id: &str,
) -> (SyntheticVideo, Vec<f64>) {
    let q = normalize(gaussian(rng, cfg.dim));
    let segments = cfg.segments();
    let evidence_segment_idx = rng.random_range(0..segments);
    let offset = rng.random_range(0..cfg.segment_size);
    let region = rng.random_range(0..cfg.regions);
    let correct_choice = rng.random_range(0..cfg.choices);

    let evidence = match granularity {
        EvidenceGranularity::Global => EvidenceSpec {
            granularity,
            segment: None,
            frame: None,
            region: None,
            correct_choice,
        },
        EvidenceGranularity::Segment => EvidenceSpec {
            granularity,
            segment: Some(evidence_segment_idx),
            frame: None,
            region: None,
            correct_choice,
        },
        EvidenceGranularity::Frame => EvidenceSpec {
            granularity,
            segment: Some(evidence_segment_idx),
            frame: Some(evidence_segment_idx * cfg.segment_size + offset),
            region: None,
            correct_choice,
        },
        EvidenceGranularity::Region => EvidenceSpec {
            granularity,
            segment: Some(evidence_segment_idx),
            frame: Some(evidence_segment_idx * cfg.segment_size + offset),
            region: Some(region),
            correct_choice,
        },
    };

    let mut frames = Vec::with_capacity(cfg.frames);
    for s in 0..segments {
        let block = if evidence.segment == Some(s) {
            let anchor = match granularity {
                EvidenceGranularity::Frame | EvidenceGranularity::Region => {
                    let range = if granularity == EvidenceGranularity::Frame {
                        EVIDENCE_SIM
                    } else {
                        GUIDE_SIM
                    };
                    let dir = orthogonal_unit(rng, &q);
                    let emb = with_similarity(&q, uniform(rng, range), &dir);
                    Some((offset, emb, dir))
                }
                _ => None,
            };
            evidence_segment(rng, &q, cfg, anchor)
        } else {
            distractor_segment(rng, &q, cfg)
        };
        frames.extend(block);
    }

    let mut regions = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let mut rs = Vec::with_capacity(cfg.regions);
        for r in 0..cfg.regions {
            let sim = if evidence.granularity == EvidenceGranularity::Region
                && evidence.frame == Some(f)
                && evidence.region == Some(r)
            {
                uniform(rng, EVIDENCE_SIM)
            } else {
                uniform(rng, distractor_range(cfg.margin))
            };
            let u = orthogonal_unit(rng, &q);
            rs.push(with_similarity(&q, sim, &u));
        }
        regions.push(rs);
    }

    let video = SyntheticVideo {
        id: format!("v-{id}"),
        seed,
        segment_size: cfg.segment_size,
        margin: cfg.margin,
        frame_embeddings: frames,
        region_embeddings: regions,
        evidence,
    };
    (video, q)
}
