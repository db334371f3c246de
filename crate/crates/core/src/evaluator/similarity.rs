use std::io::Write;

use serde::Serialize;

use super::metrics::spearman;
use crate::autodiff::Graph;
use crate::network::SfktModel;
use crate::total_term::Side;

/// Cosine similarities between projected practice counts `0..=max_count`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub side: Side,
    pub max_count: u32,
    /// Row-major `(N+1) × (N+1)`.
    pub values: Vec<f64>,
    /// Counts whose projection has zero norm; their rows and columns are 0.
    pub zero_norm: Vec<u32>,
}

impl SimilarityMatrix {
    pub fn size(&self) -> usize {
        self.max_count as usize + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Largest `|s_ii − 1|` over non-degenerate counts.
    pub fn max_diagonal_error(&self) -> f64 {
        (0..self.size())
            .filter(|&i| !self.zero_norm.contains(&(i as u32)))
            .map(|i| (self.get(i, i) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Spearman correlation of `|i − j|` against similarity over `i < j`.
    /// Negative means nearby counts look more alike.
    pub fn distance_trend(&self) -> Option<f64> {
        let n = self.size();
        let (mut dist, mut sim) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in i + 1..n {
                dist.push((j - i) as f64);
                sim.push(self.get(i, j));
            }
        }
        spearman(&dist, &sim)
    }

    /// CSV with a `count` column followed by one column per count.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.size();
        let mut header = vec!["count".to_string()];
        header.extend((0..n).map(|j| j.to_string()));
        w.write_record(&header)?;
        for i in 0..n {
            let mut row = vec![i.to_string()];
            row.extend((0..n).map(|j| format!("{}", self.get(i, j))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Projects every count in `0..=max_count` through `side`'s auto-projector and
/// compares them pairwise by cosine similarity.
pub fn practice_number_similarity(model: &SfktModel, side: Side, max_count: u32) -> SimilarityMatrix {
    let stats = model.stats.side(side);
    let projector = model.ids.total_term.projector(side);
    let mut g = Graph::new(&model.params);
    let vectors: Vec<Vec<f64>> = (0..=max_count)
        .map(|x| {
            let m = projector.project(&mut g, x, stats);
            g.value(m).to_vec()
        })
        .collect();
    let norms: Vec<f64> = vectors.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let zero_norm: Vec<u32> = (0..=max_count).filter(|&x| norms[x as usize] == 0.0).collect();
    if !zero_norm.is_empty() {
        log::warn!("{} projected counts have zero norm; similarity set to 0", zero_norm.len());
    }
    let n = vectors.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else if i == j {
                1.0
            } else {
                let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
                dot / (norms[i] * norms[j])
            };
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    SimilarityMatrix {
        side,
        max_count,
        values,
        zero_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ModelConfig, TableSizes};
    use crate::total_term::{CountStats, NormStats};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> SfktModel {
        let config = ModelConfig {
            buckets: 5,
            meta_numbers: 4,
            max_len: 4,
            ..ModelConfig::with_dim(6)
        };
        let sizes = TableSizes {
            students: 2,
            questions: 2,
            concepts: 2,
        };
        let stats = CountStats {
            success: NormStats { min: 0, max: 20 },
            failure: NormStats { min: 0, max: 20 },
        };
        SfktModel::new(config, sizes, stats, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    }

    #[test]
    fn symmetric_with_unit_diagonal() {
        let m = practice_number_similarity(&model(), Side::Success, 20);
        assert_eq!(m.size(), 21);
        assert!(m.max_asymmetry() <= 1e-9);
        assert!(m.max_diagonal_error() <= 1e-12);
        assert!(m.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn zero_meta_matrix_is_flagged() {
        let mut model = model();
        let meta = model.ids.total_term.failure.meta;
        model.params.get_mut(meta).data_mut().fill(0.0);
        let m = practice_number_similarity(&model, Side::Failure, 3);
        assert_eq!(m.zero_norm, vec![0, 1, 2, 3]);
        assert!(m.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn csv_has_integer_headers() {
        let m = practice_number_similarity(&model(), Side::Success, 2);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("count,0,1,2"));
        assert!(lines.next().unwrap().starts_with("0,1,"));
        assert_eq!(text.lines().count(), 4);
    }
}
