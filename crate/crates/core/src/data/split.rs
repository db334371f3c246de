use serde::{Deserialize, Serialize};

use super::ingest::{InteractionLog, StudentLog};

/// Per-student partition sizes. Train comes first, then validation, then test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl SplitSizes {
    /// Which split 0-based position `step` of the sequence falls in.
    pub fn split_of(&self, step: usize) -> Split {
        if step < self.train {
            Split::Train
        } else if step < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

fn floor_frac(frac: f64, n: usize) -> usize {
    // The epsilon absorbs products like 0.1 * 30 landing just below an integer.
    (frac * n as f64 + 1e-9).floor() as usize
}

/// First `⌊train_frac·n⌋` records go to train+val, of which the last
/// `⌊val_frac·m⌋` are validation; the rest is test. Sequences shorter than two
/// records go entirely to train.
pub fn split_sizes(n: usize, train_frac: f64, val_frac: f64) -> SplitSizes {
    if n < 2 {
        return SplitSizes {
            train: n,
            val: 0,
            test: 0,
        };
    }
    let m = floor_frac(train_frac, n).min(n);
    let val = floor_frac(val_frac, m).min(m);
    SplitSizes {
        train: m - val,
        val,
        test: n - m,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChronologicalSplit {
    pub train: InteractionLog,
    pub val: InteractionLog,
    pub test: InteractionLog,
    /// Aligned with the students of the input log.
    pub sizes: Vec<SplitSizes>,
}

pub fn chronological_split(log: &InteractionLog, train_frac: f64, val_frac: f64) -> ChronologicalSplit {
    let mut out = ChronologicalSplit {
        train: InteractionLog::default(),
        val: InteractionLog::default(),
        test: InteractionLog::default(),
        sizes: Vec::with_capacity(log.students.len()),
    };
    for s in &log.students {
        let sizes = split_sizes(s.interactions.len(), train_frac, val_frac);
        let (train, rest) = s.interactions.split_at(sizes.train);
        let (val, test) = rest.split_at(sizes.val);
        for (dst, part) in [(&mut out.train, train), (&mut out.val, val), (&mut out.test, test)] {
            if !part.is_empty() {
                dst.students.push(StudentLog {
                    student_id: s.student_id.clone(),
                    interactions: part.to_vec(),
                });
            }
        }
        out.sizes.push(sizes);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Floor arithmetic done with integers only.
    fn oracle(n: usize) -> SplitSizes {
        if n < 2 {
            return SplitSizes { train: n, val: 0, test: 0 };
        }
        let m = 8 * n / 10;
        let val = m / 10;
        SplitSizes { train: m - val, val, test: n - m }
    }

    #[test]
    fn ten_records() {
        assert_eq!(split_sizes(10, 0.8, 0.1), SplitSizes { train: 8, val: 0, test: 2 });
    }

    #[test]
    fn single_record_goes_to_train() {
        assert_eq!(split_sizes(1, 0.8, 0.1), SplitSizes { train: 1, val: 0, test: 0 });
    }

    #[test]
    fn hundred_records() {
        assert_eq!(split_sizes(100, 0.8, 0.1), SplitSizes { train: 72, val: 8, test: 20 });
    }

    #[test]
    fn matches_integer_oracle() {
        for n in 0..5000 {
            assert_eq!(split_sizes(n, 0.8, 0.1), oracle(n), "n = {n}");
        }
    }

    #[test]
    fn split_of_positions() {
        let s = split_sizes(100, 0.8, 0.1);
        assert_eq!(s.split_of(0), Split::Train);
        assert_eq!(s.split_of(71), Split::Train);
        assert_eq!(s.split_of(72), Split::Val);
        assert_eq!(s.split_of(80), Split::Test);
    }
}
