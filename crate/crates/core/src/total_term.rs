//! Total-term encoder: lifetime practice counts to learning-gain vectors.
//!
//! A count is log-normalized into `[0, 1]`, assigned to one of `B` equal-width
//! buckets, scaled into its bucket embedding, softly clustered over `M`
//! meta-numbers and mapped back to `d` dimensions. Success and failure counts
//! use separate projectors. The feature for a target question sums, over its
//! concepts, the projected counts times per-concept answer embeddings.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId};
use crate::data::{CountLookup, CountPair};

/// Min/max of raw counts over the training data, for one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: u32,
    pub max: u32,
}

impl NormStats {
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// Stats over an iterator of raw counts; `None` if it is empty.
    pub fn from_counts(counts: impl IntoIterator<Item = u32>) -> Option<Self> {
        counts.into_iter().fold(None, |acc, c| match acc {
            None => Some(NormStats { min: c, max: c }),
            Some(s) => Some(NormStats {
                min: s.min.min(c),
                max: s.max.max(c),
            }),
        })
    }
}

/// Normalization statistics for both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountStats {
    pub success: NormStats,
    pub failure: NormStats,
}

impl CountStats {
    /// Scans the target-concept counts that the encoder will actually read.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a CountPair>) -> Self {
        let (s, f): (Vec<u32>, Vec<u32>) = pairs.into_iter().map(|c| (c.success, c.failure)).unzip();
        let fallback = NormStats { min: 0, max: 0 };
        let out = Self {
            success: NormStats::from_counts(s).unwrap_or(fallback),
            failure: NormStats::from_counts(f).unwrap_or(fallback),
        };
        if out.success.is_degenerate() || out.failure.is_degenerate() {
            log::warn!("degenerate count range ({out:?}); normalized counts collapse to 0");
        }
        out
    }

    pub fn side(&self, side: Side) -> NormStats {
        match side {
            Side::Success => self.success,
            Side::Failure => self.failure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Success,
    Failure,
}

/// `(ln(x+1) − ln(min+1)) / (ln(max+1) − ln(min+1))`, clamped to `[0, 1]`.
/// Returns 0 for a degenerate range.
pub fn normalize_count(x: u32, stats: NormStats) -> f64 {
    if stats.is_degenerate() {
        return 0.0;
    }
    let lx = (f64::from(x) + 1.0).ln();
    let lo = (f64::from(stats.min) + 1.0).ln();
    let hi = (f64::from(stats.max) + 1.0).ln();
    ((lx - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// `⌊x̂ · (B − 1)⌋`, so `x̂ = 1` lands in the last bucket.
pub fn bucket_index(x_hat: f64, buckets: usize) -> usize {
    debug_assert!((0.0..=1.0).contains(&x_hat));
    ((x_hat * (buckets - 1) as f64).floor() as usize).min(buckets - 1)
}

/// One side's auto-projector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AutoProjector {
    /// `[B × d]`
    pub buckets: ParamId,
    /// `[M × d]`
    pub w1: ParamId,
    /// `[M]`
    pub b1: ParamId,
    /// `[d × M]`
    pub meta: ParamId,
}

impl AutoProjector {
    pub fn num_buckets(&self, graph: &Graph<'_>) -> usize {
        graph.params().get(self.buckets).rows()
    }

    /// Meta-number membership `σ(W1 (x̂ · b_x) + b1)`.
    pub fn membership(&self, graph: &mut Graph<'_>, x: u32, stats: NormStats) -> NodeId {
        let x_hat = normalize_count(x, stats);
        let bx = graph.gather(self.buckets, bucket_index(x_hat, self.num_buckets(graph)));
        let scaled = graph.scale(bx, x_hat);
        let logits = graph.affine(self.w1, scaled, Some(self.b1));
        graph.sigmoid(logits)
    }

    /// `m_x = E_meta · α_x`.
    pub fn project(&self, graph: &mut Graph<'_>, x: u32, stats: NormStats) -> NodeId {
        let alpha = self.membership(graph, x, stats);
        graph.matvec(self.meta, alpha)
    }
}

/// Per-concept answer-behaviour embeddings and the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConceptResponseTables {
    /// `[N_c × d]`
    pub success: ParamId,
    /// `[N_c × d]`
    pub failure: ParamId,
    /// `[d × 2d]`
    pub w2: ParamId,
    /// `[d]`
    pub b2: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TotalTermParams {
    pub success: AutoProjector,
    pub failure: AutoProjector,
    pub tables: ConceptResponseTables,
}

impl TotalTermParams {
    pub fn projector(&self, side: Side) -> &AutoProjector {
        match side {
            Side::Success => &self.success,
            Side::Failure => &self.failure,
        }
    }
}

/// `v_ttl = W2 [Σ_k m_{s,k} ⊙ e_{s,k} ⊕ Σ_k m_{f,k} ⊙ e_{f,k}] + b2` over the
/// target concepts. The number of recorded operations depends only on the
/// number of target concepts, never on how long the history is.
pub fn total_term_feature(
    graph: &mut Graph<'_>,
    params: &TotalTermParams,
    stats: &CountStats,
    counts: &impl CountLookup,
    target_concepts: &[usize],
) -> NodeId {
    assert!(!target_concepts.is_empty(), "target question has no concepts");
    let mut succ = Vec::with_capacity(target_concepts.len());
    let mut fail = Vec::with_capacity(target_concepts.len());
    for &k in target_concepts {
        let c = counts.counts(k);
        let ms = params.success.project(graph, c.success, stats.success);
        let es = graph.gather(params.tables.success, k);
        succ.push(graph.mul(ms, es));
        let mf = params.failure.project(graph, c.failure, stats.failure);
        let ef = graph.gather(params.tables.failure, k);
        fail.push(graph.mul(mf, ef));
    }
    let s = graph.sum(&succ);
    let f = graph.sum(&fail);
    let joined = graph.concat(&[s, f]);
    graph.affine(params.tables.w2, joined, Some(params.tables.b2))
}
