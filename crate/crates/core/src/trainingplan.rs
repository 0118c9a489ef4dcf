//! Seedable training schedules for synthetic-to-real domain adaptation.
//!
//! Two strategies are covered: a two-phase fine-tune (synthetic, then real,
//! all weights trainable in both) and mixed batches with a fixed
//! synthetic:real ratio, 2:1 by default. Plans are data for an external
//! trainer to consume.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SYNTHETIC_STREAM: u64 = 0;
const REAL_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("invalid plan configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "syn")]
    Synthetic,
    #[serde(rename = "real")]
    Real,
}

/// One sample slot: which dataset, which index. Serialized as `["syn", 3]`.
pub type BatchEntry = (Domain, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixRatio {
    pub synthetic_parts: u32,
    pub real_parts: u32,
}

impl Default for MixRatio {
    fn default() -> Self {
        Self {
            synthetic_parts: 2,
            real_parts: 1,
        }
    }
}

impl MixRatio {
    pub fn total(&self) -> u32 {
        self.synthetic_parts + self.real_parts
    }
}

impl std::str::FromStr for MixRatio {
    type Err = String;

    /// Parses `2:1` (also accepts `2,1`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .or_else(|| s.split_once(','))
            .ok_or_else(|| format!("ratio must look like `2:1`, got `{s}`"))?;
        let parse = |p: &str| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| format!("bad ratio part `{p}`"))
        };
        Ok(Self {
            synthetic_parts: parse(a)?,
            real_parts: parse(b)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixConfig {
    pub n_synthetic: usize,
    pub n_real: usize,
    pub batch_size: usize,
    pub ratio: MixRatio,
    pub seed: u64,
    pub epochs: usize,
}

impl MixConfig {
    /// Synthetic and real slots per batch.
    pub fn slots(&self) -> (usize, usize) {
        let total = self.ratio.total() as usize;
        if total == 0 {
            return (0, 0);
        }
        let syn = self.batch_size * self.ratio.synthetic_parts as usize / total;
        (syn, self.batch_size - syn)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::InvalidConfig(m));
        let parts = self.ratio.total() as usize;
        if parts == 0 {
            return bad("ratio needs at least one positive part".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !self.batch_size.is_multiple_of(parts) {
            return bad(format!(
                "batch_size {} is not divisible by ratio parts {parts}",
                self.batch_size
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        let (syn, real) = self.slots();
        if syn > 0 && self.n_synthetic < syn {
            return bad(format!(
                "{} synthetic samples cannot fill {syn} synthetic slots",
                self.n_synthetic
            ));
        }
        if real > 0 && self.n_real == 0 {
            return bad("real dataset is empty but the ratio has real parts".into());
        }
        if syn == 0 && self.n_real < real {
            return bad(format!(
                "{} real samples cannot fill {real} real slots",
                self.n_real
            ));
        }
        Ok(())
    }
}

/// Epochs of batches of `(domain, index)` entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub config: MixConfig,
    pub epochs: Vec<Vec<Vec<BatchEntry>>>,
}

/// Endless stream of indices in `[0, n)`: a seeded permutation, reshuffled
/// each time it is exhausted.
struct Reshuffler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Reshuffler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            order: (0..n).collect(),
            pos: n,
        }
    }

    /// Starts a fresh permutation so counts within an epoch stay balanced.
    fn restart(&mut self) {
        self.pos = self.order.len();
    }

    fn next_index(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds the mixed-batch schedule.
///
/// Each epoch walks one seeded permutation of the synthetic set; a trailing
/// remainder too small for a full batch is dropped. Real slots draw from an
/// independent permutation restarted at every epoch and reshuffled on
/// wraparound, so a small real set is oversampled evenly. Each batch lists
/// its synthetic entries first. With no synthetic parts, the epoch is one
/// pass over the real permutation instead.
pub fn plan_mixed_batches(config: &MixConfig) -> Result<BatchPlan, PlanError> {
    config.validate()?;
    let (syn_slots, real_slots) = config.slots();

    let mut syn_rng = stream_rng(config.seed, SYNTHETIC_STREAM);
    let mut syn_order: Vec<usize> = (0..config.n_synthetic).collect();
    let mut real = Reshuffler::new(config.n_real, stream_rng(config.seed, REAL_STREAM));

    let mut epochs = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        real.restart();
        let n_batches = match config.n_synthetic.checked_div(syn_slots) {
            Some(n) => {
                syn_order.shuffle(&mut syn_rng);
                n
            }
            None => config.n_real / real_slots,
        };
        let batches = (0..n_batches)
            .map(|b| {
                let mut batch = Vec::with_capacity(config.batch_size);
                batch.extend(
                    syn_order[b * syn_slots..(b + 1) * syn_slots]
                        .iter()
                        .map(|&i| (Domain::Synthetic, i)),
                );
                batch.extend((0..real_slots).map(|_| (Domain::Real, real.next_index())));
                batch
            })
            .collect();
        epochs.push(batches);
    }
    Ok(BatchPlan {
        config: *config,
        epochs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTunePhase {
    pub dataset: Domain,
    pub epochs: usize,
    pub all_weights_unfrozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
}

/// Train on synthetic data, then continue on real data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTunePlan {
    pub config: FineTuneConfig,
    pub phases: [FineTunePhase; 2],
}

impl FineTunePlan {
    pub fn phase1(&self) -> &FineTunePhase {
        &self.phases[0]
    }

    pub fn phase2(&self) -> &FineTunePhase {
        &self.phases[1]
    }
}

pub fn plan_finetune(
    phase1_epochs: usize,
    phase2_epochs: usize,
) -> Result<FineTunePlan, PlanError> {
    if phase1_epochs == 0 || phase2_epochs == 0 {
        return Err(PlanError::InvalidConfig(format!(
            "both phases need at least one epoch, got {phase1_epochs} and {phase2_epochs}"
        )));
    }
    let phase = |dataset, epochs| FineTunePhase {
        dataset,
        epochs,
        all_weights_unfrozen: true,
    };
    Ok(FineTunePlan {
        config: FineTuneConfig {
            phase1_epochs,
            phase2_epochs,
        },
        phases: [
            phase(Domain::Synthetic, phase1_epochs),
            phase(Domain::Real, phase2_epochs),
        ],
    })
}

/// Serialized plan document, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Plan {
    Mixed(BatchPlan),
    Finetune(FineTunePlan),
}

impl From<BatchPlan> for Plan {
    fn from(p: BatchPlan) -> Self {
        Plan::Mixed(p)
    }
}

impl From<FineTunePlan> for Plan {
    fn from(p: FineTunePlan) -> Self {
        Plan::Finetune(p)
    }
}

pub fn serialize_plan(plan: &Plan) -> String {
    let mut s = serde_json::to_string(plan).expect("plan serializes");
    s.push('\n');
    s
}

pub fn parse_plan(text: &str) -> Result<Plan, serde_json::Error> {
    serde_json::from_str(text)
}
