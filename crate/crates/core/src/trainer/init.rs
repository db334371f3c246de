use rand::Rng;

/// Xavier/Glorot uniform initialization for matrices, zeros for vectors.
///
/// For a `[rows × cols]` matrix, values are drawn from `U(−a, a)` with
/// `a = √(6 / (cols + rows))` (fan-in = columns, fan-out = rows).
pub fn xavier_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Vec<f64> {
    match shape {
        [n] => vec![0.0; *n],
        [rows, cols] => {
            let a = xavier_bound(*rows, *cols);
            (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect()
        }
        _ => panic!("xavier_init supports 1- or 2-dimensional shapes, got {shape:?}"),
    }
}

pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_bound() {
        // √(6/128) = 0.21650635...
        assert!((xavier_bound(64, 64) - 0.216_506_350_946_109_66).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = xavier_init(&[64, 64], &mut rng);
        assert_eq!(w.len(), 4096);
        assert!(w.iter().all(|v| v.abs() <= 0.2166));
    }

    #[test]
    fn sample_mean_is_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = xavier_init(&[100, 1000], &mut rng);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn vectors_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(xavier_init(&[7], &mut rng), vec![0.0; 7]);
    }
}
