//! Per-concept tallies of prior correct and incorrect answers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::sequence::{Step, StudentSequence};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountPair {
    pub success: u32,
    pub failure: u32,
}

impl CountPair {
    pub fn total(&self) -> u32 {
        self.success + self.failure
    }
}

/// Something that can answer "how often was concept `k` answered right and
/// wrong before this step".
pub trait CountLookup {
    fn counts(&self, concept: usize) -> CountPair;
}

/// Sparse snapshot: concepts never practised are absent and read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountFeatures {
    map: BTreeMap<usize, CountPair>,
}

impl CountFeatures {
    pub fn get(&self, concept: usize) -> CountPair {
        self.map.get(&concept).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, CountPair)> + '_ {
        self.map.iter().map(|(k, v)| (*k, *v))
    }

    /// Number of concepts with at least one prior interaction.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Concepts with a nonzero success count.
    pub fn successes(&self) -> BTreeMap<usize, u32> {
        self.iter()
            .filter(|(_, c)| c.success > 0)
            .map(|(k, c)| (k, c.success))
            .collect()
    }

    /// Concepts with a nonzero failure count.
    pub fn failures(&self) -> BTreeMap<usize, u32> {
        self.iter()
            .filter(|(_, c)| c.failure > 0)
            .map(|(k, c)| (k, c.failure))
            .collect()
    }
}

impl CountLookup for CountFeatures {
    fn counts(&self, concept: usize) -> CountPair {
        self.get(concept)
    }
}

/// Running counts, updated one step at a time in `O(|concepts of the step|)`.
#[derive(Debug, Clone, Default)]
pub struct PrefixCounter {
    current: HashMap<usize, CountPair>,
}

impl PrefixCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds a finished step into the counts.
    pub fn observe(&mut self, step: &Step) {
        for &k in &step.concepts {
            let c = self.current.entry(k).or_default();
            if step.response == 1 {
                c.success += 1;
            } else {
                c.failure += 1;
            }
        }
    }

    pub fn snapshot(&self) -> CountFeatures {
        CountFeatures {
            map: self.current.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }
}

impl CountLookup for PrefixCounter {
    fn counts(&self, concept: usize) -> CountPair {
        self.current.get(&concept).copied().unwrap_or_default()
    }
}

/// Counts restricted to one step's own concepts: everything the total-term
/// encoder reads for that step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetCounts(pub Vec<(usize, CountPair)>);

impl CountLookup for TargetCounts {
    fn counts(&self, concept: usize) -> CountPair {
        self.0
            .iter()
            .find(|(k, _)| *k == concept)
            .map(|(_, c)| *c)
            .unwrap_or_default()
    }
}

/// Full snapshot before each step: entry `t - 1` covers steps `1..t-1`.
pub fn compute_prefix_counts(seq: &StudentSequence) -> Vec<CountFeatures> {
    let mut counter = PrefixCounter::new();
    seq.steps
        .iter()
        .map(|step| {
            let snap = counter.snapshot();
            counter.observe(step);
            snap
        })
        .collect()
}

/// Per step, the prior counts of that step's concepts over the whole global
/// prefix.
pub fn compute_target_counts(seq: &StudentSequence) -> Vec<TargetCounts> {
    let mut counter = PrefixCounter::new();
    seq.steps
        .iter()
        .map(|step| {
            let tc = TargetCounts(step.concepts.iter().map(|&k| (k, counter.counts(k))).collect());
            counter.observe(step);
            tc
        })
        .collect()
}
