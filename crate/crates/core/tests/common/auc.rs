/// Pairwise definition: the fraction of (positive, negative) pairs where
/// the positive scores higher, ties counting one half.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Scores on a coarse grid so that ties are common, and labels with both
/// classes present.
pub fn random_instance(rng: &mut impl rand::Rng, max_n: usize) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..=max_n);
    let grid = rng.gen_range(2..=20);
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..grid) as f64 / grid as f64).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    (scores, labels)
}

/// Strictly increasing maps used for the invariance check.
pub fn monotone_maps() -> Vec<(&'static str, fn(f64) -> f64)> {
    vec![
        ("exp", f64::exp),
        ("affine", |x| 3.0 * x - 7.0),
        ("cube", |x| x * x * x),
        ("logistic", |x| 1.0 / (1.0 + (-4.0 * x).exp())),
    ]
}
