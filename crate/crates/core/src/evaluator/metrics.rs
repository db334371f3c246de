/// Rank-based AUC: the fraction of (positive, negative) pairs in which the
/// positive scores higher, ties counting one half. `None` unless both classes
/// are present.
///
/// Scores are sorted once and scanned in tie groups, so no floating-point
/// rank sums are involved.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut wins, mut ties) = (0u128, 0u128);
    let (mut neg_below, mut pos_total) = (0u128, 0u128);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        wins += pos * neg_below;
        ties += pos * neg;
        neg_below += neg;
        pos_total += pos;
        i = j;
    }
    let pairs = pos_total * neg_below;
    if pairs == 0 {
        return None;
    }
    Some((2 * wins + ties) as f64 / (2 * pairs) as f64)
}

/// Fraction of records where `score >= threshold` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    if scores.is_empty() {
        return None;
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, y)| (**s >= threshold) == (**y == 1))
        .count();
    Some(hits as f64 / scores.len() as f64)
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or fewer than two points are given.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]), Some(1.0));
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]), Some(0.0));
    }

    #[test]
    fn mixed_pairs() {
        assert_eq!(auc(&[0.9, 0.6, 0.4], &[1, 0, 1]), Some(0.5));
    }

    #[test]
    fn all_ties() {
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]), Some(0.5));
    }

    #[test]
    fn single_class_is_absent() {
        assert_eq!(auc(&[0.3, 0.4], &[1, 1]), None);
        assert_eq!(auc(&[], &[]), None);
    }

    #[test]
    fn accuracy_rules() {
        assert_eq!(accuracy(&[0.9, 0.1], &[1, 0], 0.5), Some(1.0));
        assert_eq!(accuracy(&[0.5], &[1], 0.5), Some(1.0));
        assert_eq!(accuracy(&[0.4, 0.4], &[1, 1], 0.5), Some(0.0));
        assert_eq!(accuracy(&[], &[], 0.5), None);
    }

    #[test]
    fn spearman_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0, 45.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 4]), None);
    }

    #[test]
    fn spearman_with_ties() {
        // ranks x: 1, 2.5, 2.5, 4; y: 1, 2, 3, 4
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let expect = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((r - expect).abs() < 1e-12);
    }
}
