use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::{compute_target_counts, TargetCounts};
use super::ingest::InteractionLog;
use super::sequence::{encode_sequence, Step, StudentSequence};
use super::split::{chronological_split, Split, SplitSizes};
use super::vocab::{build_vocabularies, Vocab};
use super::window::{window_spans, WindowSpan};
use crate::error::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub train_frac: f64,
    pub val_frac: f64,
    /// Maximum window length `L` seen by the long-term encoder.
    pub max_len: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.1,
            max_len: 200,
        }
    }
}

/// A student's full encoded sequence with its split sizes, window tiling and
/// global-prefix counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedStudent {
    pub key: String,
    pub sequence: StudentSequence,
    pub sizes: SplitSizes,
    pub windows: Vec<WindowSpan>,
    pub counts: Vec<TargetCounts>,
}

impl PreparedStudent {
    pub fn total_len(&self) -> usize {
        self.sequence.len()
    }

    pub fn window_of(&self, pos: usize) -> WindowSpan {
        let width = self.windows[0].len;
        let w = self.windows[pos / width];
        debug_assert!(w.contains(pos));
        w
    }

    /// In-window steps preceding `pos`.
    pub fn history(&self, pos: usize) -> &[Step] {
        let w = self.window_of(pos);
        &self.sequence.steps[w.start..pos]
    }
}

/// Address of a training or evaluation record: a target step of one student.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordRef {
    /// Position in [`Dataset::students`].
    pub student: usize,
    /// 0-based position in that student's sequence.
    pub step: usize,
}

/// Everything the model reads to predict one target step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record<'a> {
    /// Student vocabulary index.
    pub student: usize,
    pub step: usize,
    pub total_len: usize,
    pub question: usize,
    pub concepts: &'a [usize],
    pub label: u8,
    pub counts: &'a TargetCounts,
    /// In-window predecessors, oldest first. The interval of `history[i]` is
    /// `history.len() - i`.
    pub history: &'a [Step],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub vocab: Vocab,
    pub options: DatasetOptions,
    pub students: Vec<PreparedStudent>,
}

fn prepare_student(key: String, sequence: StudentSequence, sizes: SplitSizes, max_len: usize) -> PreparedStudent {
    let counts = compute_target_counts(&sequence);
    let windows = window_spans(sequence.len(), max_len);
    PreparedStudent {
        key,
        sequence,
        sizes,
        windows,
        counts,
    }
}

impl Dataset {
    /// Splits chronologically, builds the vocabulary from the training portion
    /// only, then encodes, counts and windows every full sequence. Counts keep
    /// running across the train/test boundary.
    pub fn prepare(log: &InteractionLog, options: DatasetOptions) -> Result<Self, DataError> {
        if options.max_len == 0 {
            return Err(DataError::Cache("max_len must be at least 1".into()));
        }
        let split = chronological_split(log, options.train_frac, options.val_frac);
        let vocab = build_vocabularies(&split.train)?;
        let students = log
            .students
            .par_iter()
            .zip(split.sizes.par_iter())
            .filter(|(s, _)| !s.interactions.is_empty())
            .map(|(s, sizes)| {
                prepare_student(s.student_id.clone(), encode_sequence(s, &vocab), *sizes, options.max_len)
            })
            .collect();
        Ok(Self {
            vocab,
            options,
            students,
        })
    }

    /// Same data re-tiled with a different window length.
    pub fn with_max_len(&self, max_len: usize) -> Self {
        let mut out = self.clone();
        out.options.max_len = max_len;
        for s in &mut out.students {
            s.windows = window_spans(s.sequence.len(), max_len);
        }
        out
    }

    pub fn num_interactions(&self) -> usize {
        self.students.iter().map(PreparedStudent::total_len).sum()
    }

    /// All target steps of `split`, in student then step order.
    pub fn records(&self, split: Split) -> Vec<RecordRef> {
        self.students
            .iter()
            .enumerate()
            .flat_map(|(si, s)| {
                (0..s.total_len())
                    .filter(move |&t| s.sizes.split_of(t) == split)
                    .map(move |step| RecordRef { student: si, step })
            })
            .collect()
    }

    pub fn record(&self, r: RecordRef) -> Record<'_> {
        let s = &self.students[r.student];
        let step = &s.sequence.steps[r.step];
        Record {
            student: s.sequence.student,
            step: r.step,
            total_len: s.total_len(),
            question: step.question,
            concepts: &step.concepts,
            label: step.response,
            counts: &s.counts[r.step],
            history: s.history(r.step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ingest::Interaction;

    fn log(lens: &[usize]) -> InteractionLog {
        let mut items = Vec::new();
        for (u, &n) in lens.iter().enumerate() {
            for t in 0..n {
                items.push(Interaction {
                    student_id: format!("u{u}"),
                    question_id: format!("q{}", t % 7),
                    concept_ids: vec![format!("c{}", t % 3)],
                    response: (t % 2) as u8,
                    order_key: t as i64,
                });
            }
        }
        InteractionLog::from_interactions(items)
    }

    #[test]
    fn splits_partition_every_student() {
        let ds = Dataset::prepare(&log(&[1, 2, 10, 100, 37]), DatasetOptions::default()).unwrap();
        let total: usize = [Split::Train, Split::Val, Split::Test]
            .iter()
            .map(|&s| ds.records(s).len())
            .sum();
        assert_eq!(total, ds.num_interactions());
        for s in &ds.students {
            assert_eq!(s.sizes.total(), s.total_len());
        }
        let test = ds.records(Split::Test);
        let train = ds.records(Split::Train);
        for r in &test {
            let max_train = train.iter().filter(|x| x.student == r.student).map(|x| x.step).max();
            assert!(max_train.is_none_or(|m| m < r.step));
        }
    }

    #[test]
    fn history_stays_inside_the_window() {
        let ds = Dataset::prepare(&log(&[25]), DatasetOptions { max_len: 10, ..Default::default() }).unwrap();
        let r = ds.record(RecordRef { student: 0, step: 13 });
        assert_eq!(r.history.len(), 3);
        let r = ds.record(RecordRef { student: 0, step: 20 });
        assert!(r.history.is_empty());
        assert_eq!(r.counts.0[0].1.total(), 6);
    }

    #[test]
    fn test_only_keys_are_unknown() {
        let mut items = vec![];
        for t in 0..10 {
            items.push(Interaction {
                student_id: "u".into(),
                question_id: if t < 8 { "seen".into() } else { "late".into() },
                concept_ids: vec!["c".into()],
                response: 1,
                order_key: t,
            });
        }
        let ds = Dataset::prepare(&InteractionLog::from_interactions(items), DatasetOptions::default()).unwrap();
        let last = &ds.students[0].sequence.steps[9];
        assert_eq!(last.question, ds.vocab.questions.unknown());
    }
}
