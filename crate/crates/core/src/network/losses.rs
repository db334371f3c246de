use serde::{Deserialize, Serialize};

use super::Similarity;
use crate::autodiff::{Graph, NodeId};

/// Probability clamp used by every cross-entropy term.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_cl: f64,
    pub lambda_pert: f64,
    /// Contrastive temperature `τ`.
    pub temperature: f64,
    /// Dropout rate of the perturbation path.
    pub dropout: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cl: 0.5,
            lambda_pert: 1.0,
            temperature: 1.0,
            dropout: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda_cl >= 0.0 && self.lambda_pert >= 0.0) {
            return Err("loss weights must be non-negative".into());
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err("temperature must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout rate must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Loss nodes of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchLoss {
    pub total: NodeId,
    pub prediction: NodeId,
    pub contrastive: NodeId,
    pub perturbation: NodeId,
}

/// Two-view contrastive loss with same-view negatives:
///
/// `E_i[−log e^{s_ii/τ} / (e^{s_ii/τ} + Σ_{j≠i} e^{h_i^ttl·h_j^ttl/τ})]`
/// plus the same with long-term negatives, where `s_ii = h_i^ttl · h_i^lng`.
/// Each term is evaluated as `logsumexp([s_ii, negs]/τ) − s_ii/τ`.
pub fn contrastive_loss(
    g: &mut Graph<'_>,
    h_ttl: &[NodeId],
    h_lng: &[NodeId],
    temperature: f64,
    similarity: Similarity,
) -> NodeId {
    assert!(!h_ttl.is_empty(), "contrastive loss over an empty batch");
    assert_eq!(h_ttl.len(), h_lng.len(), "views must have equal batch sizes");
    let (ttl, lng): (Vec<NodeId>, Vec<NodeId>) = match similarity {
        Similarity::Dot => (h_ttl.to_vec(), h_lng.to_vec()),
        Similarity::Cosine => (
            h_ttl.iter().map(|&h| g.normalize(h)).collect(),
            h_lng.iter().map(|&h| g.normalize(h)).collect(),
        ),
    };
    let inv_t = 1.0 / temperature;
    let n = ttl.len();
    let positives: Vec<NodeId> = (0..n)
        .map(|i| {
            let s = g.dot(ttl[i], lng[i]);
            g.scale(s, inv_t)
        })
        .collect();
    let mut view_terms = Vec::with_capacity(2);
    for view in [&ttl, &lng] {
        let terms: Vec<NodeId> = (0..n)
            .map(|i| {
                let mut logits = vec![positives[i]];
                for j in (0..n).filter(|&j| j != i) {
                    let s = g.dot(view[i], view[j]);
                    logits.push(g.scale(s, inv_t));
                }
                let all = g.concat(&logits);
                let lse = g.log_sum_exp(all);
                g.sub(lse, positives[i])
            })
            .collect();
        view_terms.push(g.mean(&terms));
    }
    g.add(view_terms[0], view_terms[1])
}

/// `L_pred + λ_CL Φ_CL + λ_Pert Φ_Pert`, with both cross-entropies averaged
/// over the batch.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    g: &mut Graph<'_>,
    probs: &[NodeId],
    labels: &[f64],
    h_ttl: &[NodeId],
    h_lng: &[NodeId],
    perturbed: &[NodeId],
    weights: &LossWeights,
    similarity: Similarity,
) -> BatchLoss {
    assert_eq!(probs.len(), labels.len());
    assert_eq!(perturbed.len(), labels.len());
    let bce = |g: &mut Graph<'_>, ps: &[NodeId]| {
        let terms: Vec<NodeId> = ps
            .iter()
            .zip(labels)
            .map(|(&p, &y)| g.binary_cross_entropy(p, y, PROB_EPS))
            .collect();
        g.mean(&terms)
    };
    let prediction = bce(g, probs);
    let perturbation = bce(g, perturbed);
    let contrastive = contrastive_loss(g, h_ttl, h_lng, weights.temperature, similarity);
    let wc = g.scale(contrastive, weights.lambda_cl);
    let wp = g.scale(perturbation, weights.lambda_pert);
    let total = g.sum(&[prediction, wc, wp]);
    BatchLoss {
        total,
        prediction,
        contrastive,
        perturbation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;

    fn cl(vectors_t: &[Vec<f64>], vectors_l: &[Vec<f64>], tau: f64) -> f64 {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let t: Vec<NodeId> = vectors_t.iter().map(|v| g.input(v.clone())).collect();
        let l: Vec<NodeId> = vectors_l.iter().map(|v| g.input(v.clone())).collect();
        let out = contrastive_loss(&mut g, &t, &l, tau, Similarity::Dot);
        g.scalar(out)
    }

    /// Direct evaluation of the printed formula, without log-sum-exp.
    fn naive(t: &[Vec<f64>], l: &[Vec<f64>], tau: f64) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let n = t.len();
        let mut total = 0.0;
        for view in [t, l] {
            let mut acc = 0.0;
            for i in 0..n {
                let pos = (dot(&t[i], &l[i]) / tau).exp();
                let neg: f64 = (0..n).filter(|&j| j != i).map(|j| (dot(&view[i], &view[j]) / tau).exp()).sum();
                acc += -(pos / (pos + neg)).ln();
            }
            total += acc / n as f64;
        }
        total
    }

    #[test]
    fn single_record_has_zero_loss() {
        assert_eq!(cl(&[vec![0.3, 1.2]], &[vec![-0.5, 2.0]], 1.0), 0.0);
    }

    #[test]
    fn identical_unit_vectors() {
        let v = vec![vec![0.6, 0.8]; 4];
        assert!((cl(&v, &v, 1.0) - 2.0 * 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn basis_vectors() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let expect = 2.0 * (1.0 + (-1f64).exp()).ln();
        assert!((cl(&v, &v, 1.0) - expect).abs() < 1e-9);
        assert!((expect - 0.6265).abs() < 1e-4);
    }

    #[test]
    fn matches_naive_formula() {
        let t = vec![vec![0.2, 0.9, -0.3], vec![1.1, 0.0, 0.4], vec![-0.7, 0.5, 0.5]];
        let l = vec![vec![0.1, 0.3, 0.3], vec![0.9, -0.2, 0.8], vec![0.0, 0.6, -0.1]];
        for tau in [0.5, 1.0, 3.0] {
            assert!((cl(&t, &l, tau) - naive(&t, &l, tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn stronger_positives_lower_the_loss() {
        // Raising s_00 by stretching h_0^lng along h_0^ttl; the same-view
        // negatives do not involve h^lng for the ttl view and only h_0^lng·h_j^lng
        // for the other, so use orthogonal long-term partners to keep them fixed.
        let t = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let weak = vec![vec![0.5, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let strong = vec![vec![2.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(cl(&t, &strong, 1.0) < cl(&t, &weak, 1.0));
    }

    #[test]
    fn large_temperature_tends_to_log_batch_size() {
        let t = vec![vec![0.2, 0.9], vec![1.1, 0.0], vec![-0.7, 0.5]];
        let l = vec![vec![0.1, 0.3], vec![0.9, -0.2], vec![0.0, 0.6]];
        assert!((cl(&t, &l, 1e6) - 2.0 * 3f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn total_loss_reductions() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let p = [g.input(vec![0.5]), g.input(vec![0.5])];
        let h = [g.input(vec![1.0, 0.0]), g.input(vec![0.0, 1.0])];
        let w = LossWeights { lambda_cl: 0.0, lambda_pert: 1.0, ..LossWeights::default() };
        let out = total_loss(&mut g, &p, &[1.0, 0.0], &h, &h, &p, &w, Similarity::Dot);
        assert!((g.scalar(out.total) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let w = LossWeights { lambda_cl: 0.0, lambda_pert: 0.0, ..LossWeights::default() };
        let out = total_loss(&mut g, &p, &[1.0, 0.0], &h, &h, &p, &w, Similarity::Dot);
        assert_eq!(g.scalar(out.total), g.scalar(out.prediction));
    }

    #[test]
    fn confident_single_record_leaves_only_perturbation() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let p = [g.input(vec![1.0 - 1e-12])];
        let pert = [g.input(vec![0.7])];
        let h = [g.input(vec![0.3, 0.4])];
        let w = LossWeights::default();
        let out = total_loss(&mut g, &p, &[1.0], &h, &h, &pert, &w, Similarity::Dot);
        assert!((g.scalar(out.total) - w.lambda_pert * -(0.7f64.ln())).abs() < 1e-6);
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { temperature: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { lambda_cl: -1.0, ..Default::default() }.validate().is_err());
    }
}
