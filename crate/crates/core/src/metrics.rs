//! Evaluation metrics: style accuracy, motion distance, style-code
//! distance, sync score, and ranking AUC.
//!
//! All metrics are pure functions of their inputs.

use crate::error::{Error, Result};
use crate::synth::SynthWorld;
use crate::tensor::Tensor;

/// Fraction of motions whose oracle style classification matches the label.
pub fn metric_sa(world: &SynthWorld, motions: &[Tensor<f64>], labels: &[usize]) -> Result<f64> {
    if motions.len() != labels.len() || motions.is_empty() {
        return Err(Error::invalid(
            "metric_sa",
            format!("{} motions vs {} labels", motions.len(), labels.len()),
        ));
    }
    let correct = motions
        .iter()
        .zip(labels.iter())
        .filter(|(m, &y)| world.oracle_style_classify(m) == y)
        .count();
    Ok(correct as f64 / motions.len() as f64)
}

/// Mean per-frame Euclidean distance between paired motion sequences.
pub fn metric_md(generated: &[Tensor<f64>], ground_truth: &[Tensor<f64>]) -> Result<f64> {
    if generated.len() != ground_truth.len() || generated.is_empty() {
        return Err(Error::invalid(
            "metric_md",
            format!("{} generated vs {} ground truth", generated.len(), ground_truth.len()),
        ));
    }
    let mut total = 0.0;
    let mut frames = 0usize;
    for (g, t) in generated.iter().zip(ground_truth.iter()) {
        if g.rows() != t.rows() || g.cols() != t.cols() {
            return Err(Error::shape(
                "metric_md",
                format!("{:?} vs {:?}", g.shape(), t.shape()),
            ));
        }
        let c = g.cols();
        for i in 0..g.rows() {
            let mut sq = 0.0;
            for j in 0..c {
                let d = g.data()[i * c + j] - t.data()[i * c + j];
                sq += d * d;
            }
            total += sq.sqrt();
            frames += 1;
        }
    }
    Ok(total / frames as f64)
}

/// Mean Euclidean distance between paired style codes.
pub fn metric_scd(predicted: &[Tensor<f64>], reference: &[Tensor<f64>]) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.is_empty() {
        return Err(Error::invalid(
            "metric_scd",
            format!("{} predicted vs {} reference", predicted.len(), reference.len()),
        ));
    }
    let mut total = 0.0;
    for (p, r) in predicted.iter().zip(reference.iter()) {
        if p.len() != r.len() {
            return Err(Error::shape(
                "metric_scd",
                format!("{} vs {} dims", p.len(), r.len()),
            ));
        }
        let sq: f64 = p
            .data()
            .iter()
            .zip(r.data().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += sq.sqrt();
    }
    Ok(total / predicted.len() as f64)
}

/// Mean oracle sync score over paired audio/motion sequences.
pub fn metric_sync(
    world: &SynthWorld,
    audios: &[Tensor<f64>],
    motions: &[Tensor<f64>],
) -> Result<f64> {
    if audios.len() != motions.len() || audios.is_empty() {
        return Err(Error::invalid(
            "metric_sync",
            format!("{} audios vs {} motions", audios.len(), motions.len()),
        ));
    }
    let mut total = 0.0;
    for (a, m) in audios.iter().zip(motions.iter()) {
        total += world.oracle_sync_score(a, m)?;
    }
    Ok(total / audios.len() as f64)
}

/// Mann-Whitney AUC: probability a positive score ranks above a negative.
pub fn ranking_auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return 0.5;
    }
    let mut wins = 0.0;
    for &p in positive {
        for &n in negative {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positive.len() * negative.len()) as f64
}

/// Per-class mean vectors.
pub fn class_centroids(codes: &[Tensor<f64>], labels: &[usize], classes: usize) -> Vec<Vec<f64>> {
    assert_eq!(codes.len(), labels.len());
    let dim = codes[0].len();
    let mut sums = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for (code, &y) in codes.iter().zip(labels.iter()) {
        for (j, v) in code.data().iter().enumerate() {
            sums[y][j] += v;
        }
        counts[y] += 1;
    }
    for (s, &c) in sums.iter_mut().zip(counts.iter()) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    sums
}

/// Index of the nearest centroid (Euclidean).
pub fn nearest_centroid(code: &Tensor<f64>, centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d: f64 = code
            .data()
            .iter()
            .zip(c.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Spearman rank correlation of two equal-length samples.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; n];
        for (r, &i) in idx.iter().enumerate() {
            ranks[i] = r as f64;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn md_reference_points() {
        let a = Tensor::<f64>::zeros(3, 64);
        let b = Tensor::<f64>::full(3, 64, 1.0);
        // unit offset per coordinate over 64 dims -> sqrt(64) = 8 per frame
        let md = metric_md(&[b], &[a.clone()]).unwrap();
        assert!((md - 8.0).abs() < 1e-12);
        let zero = metric_md(&[a.clone()], &[a]).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn scd_identical_is_zero() {
        let c = Tensor::<f64>::full(1, 16, 0.5);
        assert_eq!(metric_scd(&[c.clone()], &[c]).unwrap(), 0.0);
    }

    #[test]
    fn sa_ground_truth_and_random() {
        let world = SynthWorld::new(WorldConfig::default());
        let mut motions = Vec::new();
        let mut labels = Vec::new();
        for style in 0..world.cfg.styles {
            let clip = world.generate_clip(0, style, 32, 50 + style as u64).unwrap();
            motions.push(clip.motion);
            labels.push(style);
        }
        assert_eq!(metric_sa(&world, &motions, &labels).unwrap(), 1.0);

        // random motion classifies near chance
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = 0;
        let trials = 64;
        for k in 0..trials {
            let noise = Tensor::<f64>::randn(32, 64, &mut rng);
            if world.oracle_style_classify(&noise) == k % world.cfg.styles {
                hits += 1;
            }
        }
        let acc = hits as f64 / trials as f64;
        assert!(acc < 0.4, "random motion accuracy {acc}");
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(ranking_auc(&[2.0, 3.0], &[0.0, 1.0]), 1.0);
        assert_eq!(ranking_auc(&[0.0], &[1.0]), 0.0);
        assert!((ranking_auc(&[1.0, 2.0], &[1.0, 2.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_monotone() {
        let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
        let ys = [1.0, 2.0, 4.0, 8.0, 16.0];
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
        let flipped = [16.0, 8.0, 4.0, 2.0, 1.0];
        assert!((spearman(&xs, &flipped) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn centroid_classification() {
        let codes = vec![
            Tensor::<f64>::matrix(1, 2, vec![0.0, 0.0]),
            Tensor::<f64>::matrix(1, 2, vec![0.2, 0.0]),
            Tensor::<f64>::matrix(1, 2, vec![5.0, 5.0]),
            Tensor::<f64>::matrix(1, 2, vec![5.2, 4.8]),
        ];
        let labels = vec![0, 0, 1, 1];
        let cents = class_centroids(&codes, &labels, 2);
        assert_eq!(nearest_centroid(&codes[1], &cents), 0);
        assert_eq!(nearest_centroid(&codes[2], &cents), 1);
    }
}
