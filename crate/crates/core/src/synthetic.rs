//! Threshold-mastery interaction generator.
//!
//! Each step picks a concept uniformly and one of its questions uniformly. The
//! answer is correct with probability `p_mastered` once the student has
//! already answered that concept correctly `threshold` times, and with
//! probability `p_novice` before that.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Interaction, InteractionLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub students: usize,
    pub concepts: usize,
    pub questions_per_concept: usize,
    /// Inclusive range of sequence lengths.
    pub min_len: usize,
    pub max_len: usize,
    pub threshold: u32,
    pub p_mastered: f64,
    pub p_novice: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            students: 500,
            concepts: 3,
            questions_per_concept: 4,
            min_len: 40,
            max_len: 60,
            threshold: 3,
            p_mastered: 0.9,
            p_novice: 0.2,
            seed: 0,
        }
    }
}

pub fn generate(config: &SyntheticConfig) -> InteractionLog {
    assert!(config.concepts > 0 && config.questions_per_concept > 0);
    assert!(config.min_len >= 1 && config.min_len <= config.max_len);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut items = Vec::new();
    for s in 0..config.students {
        let len = rng.gen_range(config.min_len..=config.max_len);
        let mut successes = vec![0u32; config.concepts];
        for t in 0..len {
            let k = rng.gen_range(0..config.concepts);
            let j = rng.gen_range(0..config.questions_per_concept);
            let p = if successes[k] >= config.threshold {
                config.p_mastered
            } else {
                config.p_novice
            };
            let correct = rng.gen_bool(p);
            successes[k] += u32::from(correct);
            items.push(Interaction {
                student_id: format!("s{s}"),
                question_id: format!("q{k}_{j}"),
                concept_ids: vec![format!("c{k}")],
                response: u8::from(correct),
                order_key: t as i64,
            });
        }
    }
    InteractionLog::from_interactions(items)
}

/// Writes a log in the ingestion CSV format.
pub fn write_csv<W: Write>(log: &InteractionLog, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["student_id", "question_id", "concept_ids", "correct", "order"])?;
    for it in log.iter() {
        w.write_record([
            it.student_id.as_str(),
            it.question_id.as_str(),
            &it.concept_ids.join(";"),
            &it.response.to_string(),
            &it.order_key.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
