//! Long-term encoder: single-head attention from the target question over the
//! in-window history, with sinusoidal encodings of the step interval `t − i`
//! added to each history practice before the value projection.

use crate::autodiff::{Graph, NodeId, ParamId};

/// `PE[2j] = sin(Δ / 10000^{2j/d})`, `PE[2j+1] = cos(Δ / 10000^{2j/d})`.
fn sinusoid(interval: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let j = (i / 2) as f64;
            let angle = interval as f64 / 10000f64.powf(2.0 * j / dim as f64);
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Encoding of a history interval. A target never attends to itself, so
/// `interval` must be at least 1.
pub fn positional_encoding(interval: usize, dim: usize) -> Vec<f64> {
    assert!(interval >= 1, "interval must be at least 1");
    sinusoid(interval, dim)
}

/// Encodings for intervals `0..=max_interval`; entry 0 exists but is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalTable {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl PositionalTable {
    pub fn new(max_interval: usize, dim: usize) -> Self {
        Self {
            dim,
            rows: (0..=max_interval).map(|d| sinusoid(d, dim)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_interval(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn entry(&self, interval: usize) -> &[f64] {
        assert!(
            interval < self.rows.len(),
            "interval {interval} beyond table size {}",
            self.max_interval()
        );
        &self.rows[interval]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LongTermParams {
    /// `[d × (d_q + d_c)]`
    pub w_q: ParamId,
    /// `[d × (d_q + d_c)]`
    pub w_k: ParamId,
    /// `[d × d]`
    pub w_v: ParamId,
    /// `[d]`, stands in for the output when nothing precedes the target.
    pub null_history: ParamId,
}

/// One history item as seen by the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryInput {
    /// `q_i ⊕ C_i`, width `d_q + d_c`.
    pub key_input: NodeId,
    /// Practice embedding `p_i`, width `d`.
    pub practice: NodeId,
    /// `t − i ≥ 1`.
    pub interval: usize,
    /// Padding positions are excluded from attention.
    pub masked: bool,
}

/// Keys and values of the unmasked history, reusable across queries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttentionMemory {
    pub keys: Vec<NodeId>,
    pub values: Vec<NodeId>,
}

impl AttentionMemory {
    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttentionOptions {
    /// Divide logits by `√d`.
    pub scale_logits: bool,
}

/// `K_i = W_k (q_i ⊕ C_i)` and `V_i = W_v (p_i + PE_{Δ_i})` for every
/// unmasked history item.
pub fn encode_history(
    graph: &mut Graph<'_>,
    params: &LongTermParams,
    table: &PositionalTable,
    history: &[HistoryInput],
) -> AttentionMemory {
    let mut mem = AttentionMemory::default();
    for h in history.iter().filter(|h| !h.masked) {
        assert!(h.interval >= 1, "interval must be at least 1");
        mem.keys.push(graph.matvec(params.w_k, h.key_input));
        let pe = graph.input(table.entry(h.interval).to_vec());
        let shifted = graph.add(h.practice, pe);
        mem.values.push(graph.matvec(params.w_v, shifted));
    }
    mem
}

/// Attention weights `softmax_i(Q_t · K_i)`; `None` for an empty memory.
pub fn attention_weights(
    graph: &mut Graph<'_>,
    params: &LongTermParams,
    memory: &AttentionMemory,
    query_input: NodeId,
    options: AttentionOptions,
) -> Option<NodeId> {
    if memory.is_empty() {
        return None;
    }
    let q = graph.matvec(params.w_q, query_input);
    let scale = if options.scale_logits {
        1.0 / (graph.value(q).len() as f64).sqrt()
    } else {
        1.0
    };
    let logits: Vec<NodeId> = memory
        .keys
        .iter()
        .map(|&k| {
            let l = graph.dot(q, k);
            if options.scale_logits {
                graph.scale(l, scale)
            } else {
                l
            }
        })
        .collect();
    let logits = graph.concat(&logits);
    Some(graph.softmax(logits))
}

/// `v_lng = Σ_i w_i V_i`, or the learned null-history vector when the memory
/// is empty.
pub fn attend(
    graph: &mut Graph<'_>,
    params: &LongTermParams,
    memory: &AttentionMemory,
    query_input: NodeId,
    options: AttentionOptions,
) -> NodeId {
    match attention_weights(graph, params, memory, query_input, options) {
        Some(w) => graph.weighted_sum(w, &memory.values),
        None => graph.param(params.null_history),
    }
}

/// Encodes the history and attends to it from `query_input = q_t ⊕ C_t`.
pub fn long_term_feature(
    graph: &mut Graph<'_>,
    params: &LongTermParams,
    table: &PositionalTable,
    query_input: NodeId,
    history: &[HistoryInput],
    options: AttentionOptions,
) -> NodeId {
    let mem = encode_history(graph, params, table, history);
    attend(graph, params, &mem, query_input, options)
}
