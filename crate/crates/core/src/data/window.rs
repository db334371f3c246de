use serde::{Deserialize, Serialize};

use super::counts::TargetCounts;
use super::sequence::{Step, StudentSequence};

/// A contiguous slice `[start, start + len)` of a sequence (0-based positions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpan {
    pub start: usize,
    pub len: usize,
}

impl WindowSpan {
    /// 1-based global step of the first item.
    pub fn start_step(&self) -> usize {
        self.start + 1
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, pos: usize) -> bool {
        (self.start..self.end()).contains(&pos)
    }
}

/// Tiles `0..len` with consecutive spans of at most `max_len`.
pub fn window_spans(len: usize, max_len: usize) -> Vec<WindowSpan> {
    assert!(max_len >= 1, "window length must be at least 1");
    (0..len)
        .step_by(max_len)
        .map(|start| WindowSpan {
            start,
            len: max_len.min(len - start),
        })
        .collect()
}

/// A window over a sequence. The long-term encoder sees `steps`; `counts` are
/// still computed over the full global prefix of each step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window<'a> {
    pub student: usize,
    pub span: WindowSpan,
    pub steps: &'a [Step],
    pub counts: &'a [TargetCounts],
}

/// Slices `seq` into windows of at most `max_len`. `counts` must be the
/// per-step global-prefix counts of `seq`.
pub fn window_sequences<'a>(seq: &'a StudentSequence, counts: &'a [TargetCounts], max_len: usize) -> Vec<Window<'a>> {
    assert_eq!(seq.len(), counts.len(), "counts must align with the sequence");
    window_spans(seq.len(), max_len)
        .into_iter()
        .map(|span| Window {
            student: seq.student,
            span,
            steps: &seq.steps[span.start..span.end()],
            counts: &counts[span.start..span.end()],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::counts::compute_target_counts;

    /// Tiling via repeated subtraction, independent of `step_by`.
    fn oracle(len: usize, max_len: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut left = len;
        while left > 0 {
            let take = left.min(max_len);
            out.push((start + 1, take));
            start += take;
            left -= take;
        }
        out
    }

    fn spans(len: usize, max_len: usize) -> Vec<(usize, usize)> {
        window_spans(len, max_len)
            .iter()
            .map(|s| (s.start_step(), s.len))
            .collect()
    }

    #[test]
    fn long_sequence_is_tiled() {
        assert_eq!(spans(450, 200), vec![(1, 200), (201, 200), (401, 50)]);
        assert_eq!(spans(450, 200), oracle(450, 200));
    }

    #[test]
    fn short_and_boundary_sequences() {
        assert_eq!(spans(10, 200), vec![(1, 10)]);
        assert_eq!(spans(200, 200), vec![(1, 200)]);
        assert!(spans(0, 200).is_empty());
    }

    #[test]
    fn tiling_matches_oracle() {
        for len in 0..300 {
            for max_len in [1, 2, 7, 50, 200] {
                assert_eq!(spans(len, max_len), oracle(len, max_len));
            }
        }
    }

    #[test]
    fn third_window_sees_all_prior_counts() {
        let steps = (0..450)
            .map(|i| Step {
                question: 0,
                concepts: vec![0],
                response: (i % 2) as u8,
            })
            .collect();
        let seq = StudentSequence { student: 0, steps };
        let counts = compute_target_counts(&seq);
        let windows = window_sequences(&seq, &counts, 200);
        assert_eq!(windows.len(), 3);
        let first = windows[2].counts[0].0[0].1;
        assert_eq!(windows[2].span.start_step(), 401);
        assert_eq!(first.total(), 400);
        assert_eq!(first.success, 200);
    }
}
