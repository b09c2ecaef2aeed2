//! Synthetic ontologies and trace corpora.
//!
//! Traces are generated so that the next activity depends on which activity
//! types were already performed — through the dominant visited type and the
//! ring dispersion of the visited multiset — rather than on their exact
//! order. That is the regime where structural knowledge of the ontology
//! should help and pure sequence order should not.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::event_log::Trace;
use crate::ontology::{NodeKind, OntologyGraph, OntologyNode};
use crate::rng::{self, stream};

/// Extra pre-softmax weight on staying in the current dominant type; keeps
/// consecutive activities type-local without locking traces into one type.
const SELF_AFFINITY: f64 = 0.15;

/// Extra pre-softmax weight on the dominant type's ring neighbors (stronger
/// forward), so traces drift between adjacent types — the structure the
/// spectral embeddings encode. The drift keeps the dominant type distinct
/// from the latest type, which is what makes counting the visited types
/// worth more than a last-activity shortcut.
const FORWARD_AFFINITY: f64 = 0.6;
const BACKWARD_AFFINITY: f64 = 0.2;

/// Scale of the per-row logit noise relative to the shared ring structure.
/// Small noise keeps the successor rule mostly position-invariant on the
/// ring, so it transfers from frequent types to rare ones.
const ROW_NOISE: f64 = 0.35;

/// Zipf-like exponent for the initial-type distribution. Skewed starts make
/// some ring regions common and others rare, mirroring the long-tailed
/// activity frequencies of real logs.
const START_SKEW: f64 = 1.2;

/// Dispersion gate: histories whose visited types spread around the ring
/// beyond this threshold consult a shifted transition row. The gate is a
/// functional of the ring geometry of the whole multiset — an accumulated
/// property of the history, not any fixed token pattern.
const GATE_THRESHOLD: f64 = 0.35;

/// Ring shift applied to the conditioning index for dispersed histories.
const GATE_SHIFT: usize = 6;

/// Per-step probability of a disruption: the next activity comes from the
/// ring region opposite the dominant type. Disruptions are what drive a
/// history's dispersion up; once the gate trips, the shifted row keeps
/// feeding the far side, so dispersed phases persist.
const JUMP_PROB: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub n_types: usize,
    pub activities_per_type: usize,
    pub n_traces: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub len_mean: f64,
    pub len_std: f64,
    /// Softmax temperature of the type-transition matrix; lower is more
    /// deterministic.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_types: 22,
            activities_per_type: 4,
            n_traces: 5000,
            len_min: 2,
            len_max: 25,
            len_mean: 15.0,
            len_std: 3.0,
            temperature: 0.1,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_types < 2 {
            return Err(Error::Param("need at least 2 activity types".into()));
        }
        if self.activities_per_type == 0 {
            return Err(Error::Param("need ≥ 1 activity per type".into()));
        }
        if self.len_min == 0 || self.len_max < self.len_min {
            return Err(Error::Param(format!(
                "bad length range [{}, {}]",
                self.len_min, self.len_max
            )));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Param("temperature must be > 0".into()));
        }
        if self.n_traces == 0 {
            return Err(Error::Param("need ≥ 1 trace".into()));
        }
        Ok(())
    }
}

pub fn type_name(t: usize) -> String {
    format!("t{t:02}")
}

pub fn activity_name(t: usize, j: usize) -> String {
    format!("a{t:02}_{j}")
}

/// Parse the type index back out of a generated activity name.
pub fn activity_type(name: &str) -> Option<usize> {
    name.strip_prefix('a')?
        .split('_')
        .next()?
        .parse::<usize>()
        .ok()
}

/// Type nodes in a ring (a single edge for two types), each with its
/// activities attached as leaves. Always connected by construction.
pub fn gen_ontology(config: &SynthConfig) -> Result<OntologyGraph> {
    config.validate()?;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for t in 0..config.n_types {
        nodes.push(OntologyNode {
            name: type_name(t),
            kind: NodeKind::Type,
        });
        let next = (t + 1) % config.n_types;
        if next != t && (t < next || config.n_types > 2) {
            edges.push((type_name(t), type_name(next)));
        }
        for j in 0..config.activities_per_type {
            nodes.push(OntologyNode {
                name: activity_name(t, j),
                kind: NodeKind::Activity,
            });
            edges.push((activity_name(t, j), type_name(t)));
        }
    }
    OntologyGraph::new(nodes, edges)
}

/// The fixed type-transition matrix: row `t` is the distribution of the next
/// type when `t` is the most frequent visited type. Softmax of the shared
/// ring affinities plus small seeded row noise, at the configured
/// temperature.
pub fn transition_matrix(config: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = rng::seeded(rng::derive(config.seed, stream::SYNTH_TRANSITIONS));
    let n = config.n_types;
    let mut matrix = Vec::with_capacity(n);
    for t in 0..n {
        let mut logits: Vec<f64> = (0..n).map(|_| ROW_NOISE * rng.random::<f64>()).collect();
        logits[t] += SELF_AFFINITY;
        logits[(t + 1) % n] += FORWARD_AFFINITY;
        logits[(t + n - 1) % n] += BACKWARD_AFFINITY;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut row: Vec<f64> = logits
            .iter()
            .map(|l| ((l - max) / config.temperature).exp())
            .collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        matrix.push(row);
    }
    matrix
}

fn sample_categorical(probs: &[f64], rng: &mut rng::SeededRng) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Zipf-like initial-type weights: p(t) ∝ (t+1)^{−START_SKEW}.
fn start_distribution(n_types: usize) -> Vec<f64> {
    let mut weights: Vec<f64> = (0..n_types)
        .map(|t| ((t + 1) as f64).powf(-START_SKEW))
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    weights
}

/// Most frequent visited type; ties go to the smallest type index.
pub fn most_frequent(counts: &[usize]) -> usize {
    let mut best = 0;
    for (t, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = t;
        }
    }
    best
}

/// Circular dispersion of a visited-type histogram: 0 when all visits sit on
/// one type, approaching 1 as they spread evenly around the ring.
pub fn circular_dispersion(counts: &[usize]) -> f64 {
    let n = counts.len() as f64;
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut re = 0.0;
    let mut im = 0.0;
    for (t, &c) in counts.iter().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * t as f64 / n;
        re += c as f64 * theta.cos();
        im += c as f64 * theta.sin();
    }
    1.0 - (re * re + im * im).sqrt() / total as f64
}

/// Row of the transition matrix used for the next step: the most frequent
/// visited type, shifted around the ring when the visited multiset is
/// dispersed beyond the gate threshold.
pub fn conditioning_index(counts: &[usize]) -> usize {
    let n = counts.len();
    let shift = if circular_dispersion(counts) > GATE_THRESHOLD {
        GATE_SHIFT
    } else {
        0
    };
    (most_frequent(counts) + shift) % n
}

/// Sample the trace corpus. Lengths follow a truncated normal over the
/// configured range; the activity process is as documented on the module.
pub fn gen_traces(config: &SynthConfig, graph: &OntologyGraph) -> Result<Vec<Trace>> {
    config.validate()?;
    debug_assert!(graph.node_index(&type_name(0)).is_some());

    let matrix = transition_matrix(config);
    let start_probs = start_distribution(config.n_types);
    let mut rng = rng::seeded(rng::derive(config.seed, stream::SYNTH_TRACES));
    let normal = Normal::new(config.len_mean, config.len_std)
        .map_err(|e| Error::Param(format!("bad length distribution: {e}")))?;

    let mut traces = Vec::with_capacity(config.n_traces);
    let n = config.n_types;
    for case in 0..config.n_traces {
        let length = sample_length(config, &normal, &mut rng);
        let mut type_counts = vec![0usize; n];
        let mut activities = Vec::with_capacity(length);

        let push = |t: usize,
                    counts: &mut Vec<usize>,
                    acts: &mut Vec<String>,
                    rng: &mut rng::SeededRng| {
            let j = rng.random_range(0..config.activities_per_type);
            counts[t] += 1;
            acts.push(activity_name(t, j));
        };

        let first_type = sample_categorical(&start_probs, &mut rng);
        push(first_type, &mut type_counts, &mut activities, &mut rng);

        while activities.len() < length {
            let next_type = if rng.random::<f64>() < JUMP_PROB {
                // disruption: land somewhere in the opposite ring region
                let offset = n / 2 + rng.random_range(0..5) - 2;
                (most_frequent(&type_counts) + n + offset) % n
            } else {
                let row = conditioning_index(&type_counts);
                sample_categorical(&matrix[row], &mut rng)
            };
            push(next_type, &mut type_counts, &mut activities, &mut rng);
        }

        traces.push(Trace {
            case_id: format!("case{case:05}"),
            activities,
        });
    }
    Ok(traces)
}

/// Fraction of lengths drawn uniformly over the whole range. The truncated
/// normal alone leaves the far endpoints practically unreachable (min 2 is
/// more than 4σ from mean 15 at std 3); the uniform component keeps the
/// full range populated while barely moving the mean.
const UNIFORM_LENGTH_FRACTION: f64 = 0.08;

fn sample_length(config: &SynthConfig, normal: &Normal<f64>, rng: &mut rng::SeededRng) -> usize {
    if rng.random::<f64>() < UNIFORM_LENGTH_FRACTION {
        return rng.random_range(config.len_min..=config.len_max);
    }
    for _ in 0..1000 {
        let draw = normal.sample(rng).round();
        if draw >= config.len_min as f64 && draw <= config.len_max as f64 {
            return draw as usize;
        }
    }
    // degenerate configuration (range far from the mean): clamp instead
    (config.len_mean.round() as usize).clamp(config.len_min, config.len_max)
}
