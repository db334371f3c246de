//! The full model: embeddings, both encoders, the prediction head, the shared
//! contrastive projection and the dropout-perturbed prediction path.

mod checkpoint;
mod losses;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::data::{Record, Step, Vocab};
use crate::error::ModelError;
use crate::long_term::{self, AttentionOptions, HistoryInput, LongTermParams, PositionalTable};
use crate::total_term::{self, AutoProjector, ConceptResponseTables, CountStats, TotalTermParams};
use crate::trainer::xavier_init;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointHeader, TensorMeta};
pub use losses::{contrastive_loss, total_loss, BatchLoss, LossWeights, PROB_EPS};

/// Activation between the two prediction layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadActivation {
    #[default]
    Identity,
    Relu,
}

/// Similarity used inside the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Dot,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Hidden width `d` of practices, encoders and projections.
    pub dim: usize,
    pub student_dim: usize,
    pub question_dim: usize,
    pub concept_dim: usize,
    pub response_dim: usize,
    /// `B`
    pub buckets: usize,
    /// `M`
    pub meta_numbers: usize,
    /// Window length `L`.
    pub max_len: usize,
    pub scale_attention: bool,
    pub head_activation: HeadActivation,
    pub similarity: Similarity,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_dim(64)
    }
}

impl ModelConfig {
    /// All embedding widths equal to `dim`, other settings at their defaults.
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            student_dim: dim,
            question_dim: dim,
            concept_dim: dim,
            response_dim: dim,
            buckets: 100,
            meta_numbers: 100,
            max_len: 200,
            scale_attention: false,
            head_activation: HeadActivation::Identity,
            similarity: Similarity::Dot,
        }
    }

    /// Width of `u ⊕ q ⊕ C ⊕ v_ttl ⊕ v_lng`.
    pub fn head_input_width(&self) -> usize {
        self.student_dim + self.question_dim + self.concept_dim + 2 * self.dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.dim,
            self.student_dim,
            self.question_dim,
            self.concept_dim,
            self.response_dim,
            self.meta_numbers,
            self.max_len,
        ];
        if dims.contains(&0) {
            return Err(ModelError::Config("dimensions, M and L must be positive".into()));
        }
        if self.buckets < 2 {
            return Err(ModelError::Config("at least two buckets are required".into()));
        }
        Ok(())
    }
}

/// Embedding table heights, each including the UNKNOWN row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSizes {
    pub students: usize,
    pub questions: usize,
    pub concepts: usize,
}

impl TableSizes {
    pub fn from_vocab(vocab: &Vocab) -> Self {
        Self {
            students: vocab.students.table_rows(),
            questions: vocab.questions.table_rows(),
            concepts: vocab.concepts.table_rows(),
        }
    }
}

/// Handles of every learnable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SfktParams {
    pub student_table: ParamId,
    pub question_table: ParamId,
    pub concept_table: ParamId,
    pub response_table: ParamId,
    pub w0: ParamId,
    pub b0: ParamId,
    pub w3: ParamId,
    pub b3: ParamId,
    pub w4: ParamId,
    pub b4: ParamId,
    /// Contrastive head, shared by both views.
    pub w5: ParamId,
    pub b5: ParamId,
    pub w6: ParamId,
    pub b6: ParamId,
    pub total_term: TotalTermParams,
    pub long_term: LongTermParams,
}

/// Graph nodes produced for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOutput {
    pub prob: NodeId,
    pub total_term: NodeId,
    pub long_term: NodeId,
    /// Prediction for the dropout-perturbed target, when requested.
    pub perturbed: Option<NodeId>,
}

pub struct SfktModel {
    pub config: ModelConfig,
    pub sizes: TableSizes,
    pub stats: CountStats,
    pub params: ParamStore,
    pub ids: SfktParams,
    positions: PositionalTable,
}

impl Clone for SfktModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            sizes: self.sizes,
            stats: self.stats,
            params: self.params.clone(),
            ids: self.ids,
            positions: self.positions.clone(),
        }
    }
}

impl std::fmt::Debug for SfktModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SfktModel")
            .field("config", &self.config)
            .field("sizes", &self.sizes)
            .field("stats", &self.stats)
            .field("parameters", &self.params.num_scalars())
            .finish()
    }
}

impl SfktModel {
    /// Xavier-initialized model.
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        sizes: TableSizes,
        stats: CountStats,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        Self::build(config, sizes, stats, |shape| xavier_init(shape, rng))
    }

    /// All-zero model, used as the skeleton when loading a checkpoint.
    pub fn zeroed(config: ModelConfig, sizes: TableSizes, stats: CountStats) -> Result<Self, ModelError> {
        Self::build(config, sizes, stats, |shape| vec![0.0; shape.iter().product()])
    }

    fn build(
        config: ModelConfig,
        sizes: TableSizes,
        stats: CountStats,
        mut init: impl FnMut(&[usize]) -> Vec<f64>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let ModelConfig {
            dim: d,
            student_dim: du,
            question_dim: dq,
            concept_dim: dc,
            response_dim: da,
            buckets: b,
            meta_numbers: m,
            ..
        } = config;
        let mut store = ParamStore::new();
        let mut add = |name: &str, shape: Vec<usize>| {
            let data = init(&shape);
            store.add(name, shape, data, true)
        };
        let student_table = add("embed.student", vec![sizes.students, du])?;
        let question_table = add("embed.question", vec![sizes.questions, dq])?;
        let concept_table = add("embed.concept", vec![sizes.concepts, dc])?;
        let response_table = add("embed.response", vec![2, da])?;
        let w0 = add("practice.w0", vec![d, dq + dc + da])?;
        let b0 = add("practice.b0", vec![d])?;
        let mut projector = |side: &str| -> Result<AutoProjector, ModelError> {
            Ok(AutoProjector {
                buckets: add(&format!("{side}.buckets"), vec![b, d])?,
                w1: add(&format!("{side}.w1"), vec![m, d])?,
                b1: add(&format!("{side}.b1"), vec![m])?,
                meta: add(&format!("{side}.meta"), vec![d, m])?,
            })
        };
        let success = projector("total.success")?;
        let failure = projector("total.failure")?;
        let tables = ConceptResponseTables {
            success: add("total.e_s", vec![sizes.concepts, d])?,
            failure: add("total.e_f", vec![sizes.concepts, d])?,
            w2: add("total.w2", vec![d, 2 * d])?,
            b2: add("total.b2", vec![d])?,
        };
        let long_term = LongTermParams {
            w_q: add("long.w_q", vec![d, dq + dc])?,
            w_k: add("long.w_k", vec![d, dq + dc])?,
            w_v: add("long.w_v", vec![d, d])?,
            null_history: add("long.null", vec![d])?,
        };
        let w3 = add("head.w3", vec![2 * d, config.head_input_width()])?;
        let b3 = add("head.b3", vec![2 * d])?;
        let w4 = add("head.w4", vec![1, 2 * d])?;
        let b4 = add("head.b4", vec![1])?;
        let w5 = add("contrast.w5", vec![2 * d, d])?;
        let b5 = add("contrast.b5", vec![2 * d])?;
        let w6 = add("contrast.w6", vec![d, 2 * d])?;
        let b6 = add("contrast.b6", vec![d])?;
        let ids = SfktParams {
            student_table,
            question_table,
            concept_table,
            response_table,
            w0,
            b0,
            w3,
            b3,
            w4,
            b4,
            w5,
            b5,
            w6,
            b6,
            total_term: TotalTermParams {
                success,
                failure,
                tables,
            },
            long_term,
        };
        Ok(Self {
            config,
            sizes,
            stats,
            params: store,
            ids,
            positions: PositionalTable::new(config.max_len, d),
        })
    }

    pub fn attention_options(&self) -> AttentionOptions {
        AttentionOptions {
            scale_logits: self.config.scale_attention,
        }
    }

    pub fn positions(&self) -> &PositionalTable {
        &self.positions
    }

    fn question_and_concepts(&self, g: &mut Graph<'_>, question: usize, concepts: &[usize]) -> (NodeId, NodeId) {
        let q = g.gather(self.ids.question_table, question);
        let c = g.mean_gather(self.ids.concept_table, concepts);
        (q, c)
    }

    /// `p = W0 (q ⊕ C ⊕ a) + b0`.
    pub fn embed_practice(&self, g: &mut Graph<'_>, step: &Step) -> NodeId {
        self.practice_inputs(g, step).1
    }

    /// `(q ⊕ C, p)` for a history step.
    fn practice_inputs(&self, g: &mut Graph<'_>, step: &Step) -> (NodeId, NodeId) {
        let (q, c) = self.question_and_concepts(g, step.question, &step.concepts);
        let a = g.gather(self.ids.response_table, usize::from(step.response));
        let key_input = g.concat(&[q, c]);
        let joined = g.concat(&[q, c, a]);
        let p = g.affine(self.ids.w0, joined, Some(self.ids.b0));
        (key_input, p)
    }

    /// `σ(W4 act(W3 (u ⊕ q ⊕ C ⊕ v_ttl ⊕ v_lng) + b3) + b4)`.
    pub fn predict_head(
        &self,
        g: &mut Graph<'_>,
        u: NodeId,
        q: NodeId,
        c: NodeId,
        v_ttl: NodeId,
        v_lng: NodeId,
    ) -> NodeId {
        let x = g.concat(&[u, q, c, v_ttl, v_lng]);
        let mut h = g.affine(self.ids.w3, x, Some(self.ids.b3));
        if self.config.head_activation == HeadActivation::Relu {
            h = g.relu(h);
        }
        let logit = g.affine(self.ids.w4, h, Some(self.ids.b4));
        g.sigmoid(logit)
    }

    /// `ReLU(W6 ReLU(W5 v + b5) + b6)`.
    pub fn contrastive_project(&self, g: &mut Graph<'_>, v: NodeId) -> NodeId {
        let inner = g.affine(self.ids.w5, v, Some(self.ids.b5));
        let inner = g.relu(inner);
        let outer = g.affine(self.ids.w6, inner, Some(self.ids.b6));
        g.relu(outer)
    }

    /// Forward pass for one record. With `perturb = Some((rate, rng))` the
    /// target question and concept embeddings are additionally passed through
    /// dropout and re-scored; the history and `v_ttl` are left untouched.
    pub fn forward_record<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_>,
        record: &Record<'_>,
        perturb: Option<(f64, &mut R)>,
    ) -> RecordOutput {
        let u = g.gather(self.ids.student_table, record.student);
        let (q, c) = self.question_and_concepts(g, record.question, record.concepts);
        let v_ttl =
            total_term::total_term_feature(g, &self.ids.total_term, &self.stats, record.counts, record.concepts);

        let n = record.history.len();
        let history: Vec<HistoryInput> = record
            .history
            .iter()
            .enumerate()
            .map(|(i, step)| {
                let (key_input, practice) = self.practice_inputs(g, step);
                HistoryInput {
                    key_input,
                    practice,
                    interval: n - i,
                    masked: false,
                }
            })
            .collect();
        let options = self.attention_options();
        let memory = long_term::encode_history(g, &self.ids.long_term, &self.positions, &history);
        let query = g.concat(&[q, c]);
        let v_lng = long_term::attend(g, &self.ids.long_term, &memory, query, options);
        let prob = self.predict_head(g, u, q, c, v_ttl, v_lng);

        let perturbed = perturb.map(|(rate, rng)| {
            let q_t = g.dropout(q, rate, true, rng);
            let c_t = g.dropout(c, rate, true, rng);
            let query_t = g.concat(&[q_t, c_t]);
            let v_lng_t = long_term::attend(g, &self.ids.long_term, &memory, query_t, options);
            self.predict_head(g, u, q_t, c_t, v_ttl, v_lng_t)
        });
        RecordOutput {
            prob,
            total_term: v_ttl,
            long_term: v_lng,
            perturbed,
        }
    }

    /// Evaluation-mode probability for one record.
    pub fn predict(&self, record: &Record<'_>) -> f64 {
        let mut g = Graph::new(&self.params);
        let out = self.forward_record::<rand::rngs::ThreadRng>(&mut g, record, None);
        g.scalar(out.prob)
    }

    /// Integrated objective over a batch: prediction loss plus weighted
    /// contrastive and perturbation terms.
    pub fn batch_objective<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_>,
        records: &[Record<'_>],
        weights: &LossWeights,
        rng: &mut R,
    ) -> BatchLoss {
        assert!(!records.is_empty(), "empty batch");
        let mut probs = Vec::with_capacity(records.len());
        let mut perturbed = Vec::with_capacity(records.len());
        let mut h_ttl = Vec::with_capacity(records.len());
        let mut h_lng = Vec::with_capacity(records.len());
        for r in records {
            let out = self.forward_record(g, r, Some((weights.dropout, &mut *rng)));
            probs.push(out.prob);
            perturbed.push(out.perturbed.expect("perturbed path requested"));
            h_ttl.push(self.contrastive_project(g, out.total_term));
            h_lng.push(self.contrastive_project(g, out.long_term));
        }
        let labels: Vec<f64> = records.iter().map(|r| f64::from(r.label)).collect();
        total_loss(g, &probs, &labels, &h_ttl, &h_lng, &perturbed, weights, self.config.similarity)
    }
}
