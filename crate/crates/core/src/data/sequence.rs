use serde::{Deserialize, Serialize};

use super::ingest::StudentLog;
use super::vocab::Vocab;

/// One encoded interaction: vocabulary indices plus the binary response.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub question: usize,
    /// Non-empty and duplicate-free.
    pub concepts: Vec<usize>,
    pub response: u8,
}

/// A student's chronologically ordered steps; position `i` is global step `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentSequence {
    pub student: usize,
    pub steps: Vec<Step>,
}

impl StudentSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Maps a student's raw log through the vocabulary. Unseen keys become the
/// UNKNOWN index; several unseen concepts on one question collapse into one.
pub fn encode_sequence(log: &StudentLog, vocab: &Vocab) -> StudentSequence {
    let steps = log
        .interactions
        .iter()
        .map(|it| {
            let mut concepts: Vec<usize> = Vec::with_capacity(it.concept_ids.len());
            for c in &it.concept_ids {
                let k = vocab.concepts.lookup(c);
                if !concepts.contains(&k) {
                    concepts.push(k);
                }
            }
            Step {
                question: vocab.questions.lookup(&it.question_id),
                concepts,
                response: it.response,
            }
        })
        .collect();
    StudentSequence {
        student: vocab.students.lookup(&log.student_id),
        steps,
    }
}
