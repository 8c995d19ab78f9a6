//! Linear classification probe: one-vs-all L2-regularized logistic
//! regression on item embeddings, scored by micro and macro F1.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::sigmoid;

/// Regularization strengths tried by cross-validation.
pub const L2_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2];

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub label_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            label_fraction: 0.5,
            folds: 5,
            seed: 7,
            tolerance: 1e-6,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub l2: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Classes with no training example; they are never predicted.
    pub missing_classes: Vec<u32>,
}

/// Minimizes `mean_i logloss(y_i, w.x_i + b) + l2/2 |w|^2` by damped Newton
/// steps. Returns `(w, b)`.
pub fn fit_binary(x: &[Vec<f64>], y: &[bool], l2: f64, tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let d = x.first().map_or(0, |r| r.len());
    let n = x.len().max(1) as f64;
    let p = d + 1;
    let mut theta = alloc::vec![0.0; p];
    let objective = |theta: &[f64]| -> f64 {
        let mut l = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z = margin(theta, xi);
            l += crate::math::softplus(if yi { -z } else { z });
        }
        l / n + 0.5 * l2 * theta[..d].iter().map(|w| w * w).sum::<f64>()
    };
    let mut grad = alloc::vec![0.0; p];
    let mut hess = alloc::vec![0.0; p * p];
    let mut f = objective(&theta);
    for _ in 0..max_iter {
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        for (xi, &yi) in x.iter().zip(y) {
            let s = sigmoid(margin(&theta, xi));
            let r = s - if yi { 1.0 } else { 0.0 };
            let wgt = s * (1.0 - s);
            for a in 0..p {
                let xa = feat(xi, a);
                grad[a] += r * xa;
                for b in 0..=a {
                    hess[a * p + b] += wgt * xa * feat(xi, b);
                }
            }
        }
        for a in 0..p {
            grad[a] /= n;
            for b in 0..=a {
                hess[a * p + b] /= n;
                hess[b * p + a] = hess[a * p + b];
            }
        }
        for a in 0..d {
            grad[a] += l2 * theta[a];
            hess[a * p + a] += l2;
        }
        // keeps the intercept direction invertible on separable data
        hess[d * p + d] += 1e-10;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>();
        if libm::sqrt(gnorm) < tol {
            break;
        }
        let step = match cholesky_solve(&hess, &grad, p) {
            Some(s) => s,
            None => grad.clone(),
        };
        let slope: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(th, s)| th - t * s).collect();
            let fc = objective(&cand);
            if fc <= f - 1e-4 * t * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let b = theta[d];
    theta.truncate(d);
    (theta, b)
}

#[inline]
fn feat(xi: &[f64], a: usize) -> f64 {
    if a < xi.len() {
        xi[a]
    } else {
        1.0
    }
}

#[inline]
fn margin(theta: &[f64], xi: &[f64]) -> f64 {
    let d = xi.len();
    xi.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d]
}

/// Solves `A s = g` for symmetric positive definite `A` (row-major, `p x p`).
fn cholesky_solve(a: &[f64], g: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * p + i] = libm::sqrt(s);
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut y = alloc::vec![0.0; p];
    for i in 0..p {
        let mut s = g[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = alloc::vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Some(x)
}

/// One-vs-all classifiers, one per class in `0..n_classes`. Classes absent
/// from `y` get `None` and are never predicted.
pub struct OneVsAll {
    models: Vec<Option<(Vec<f64>, f64)>>,
}

impl OneVsAll {
    pub fn fit(x: &[Vec<f64>], y: &[u32], n_classes: usize, l2: f64, cfg: &ProbeConfig) -> Self {
        let models = (0..n_classes as u32)
            .map(|c| {
                if !y.contains(&c) {
                    return None;
                }
                let yc: Vec<bool> = y.iter().map(|&l| l == c).collect();
                Some(fit_binary(x, &yc, l2, cfg.tolerance, cfg.max_iter))
            })
            .collect();
        Self { models }
    }

    /// Highest-margin class; ties go to the lower class index.
    pub fn predict(&self, xi: &[f64]) -> u32 {
        let mut best = (0u32, f64::NEG_INFINITY);
        for (c, m) in self.models.iter().enumerate() {
            if let Some((w, b)) = m {
                let z = xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
                if z > best.1 {
                    best = (c as u32, z);
                }
            }
        }
        best.0
    }
}

/// Micro F1 (accuracy for single-label data) and macro F1 averaged over the
/// classes present in either the truth or the predictions.
pub fn f1_scores(truth: &[u32], pred: &[u32], n_classes: usize) -> (f64, f64) {
    let mut tp = alloc::vec![0usize; n_classes];
    let mut fp = alloc::vec![0usize; n_classes];
    let mut fn_ = alloc::vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }
    let micro = tp.iter().sum::<usize>() as f64 / truth.len().max(1) as f64;
    let mut sum = 0.0;
    let mut classes = 0;
    for c in 0..n_classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        classes += 1;
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        sum += 2.0 * tp[c] as f64 / denom as f64;
    }
    (micro, if classes == 0 { 0.0 } else { sum / classes as f64 })
}

fn accuracy_cv(x: &[Vec<f64>], y: &[u32], n_classes: usize, l2: f64, cfg: &ProbeConfig) -> f64 {
    let folds = cfg.folds.max(2).min(x.len());
    let mut correct = 0usize;
    for f in 0..folds {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..x.len() {
            if i % folds == f {
                vx.push(x[i].clone());
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        let m = OneVsAll::fit(&tx, &ty, n_classes, l2, cfg);
        correct += vx.iter().zip(&vy).filter(|(xi, &yi)| m.predict(xi) == yi).count();
    }
    correct as f64 / x.len() as f64
}

/// Splits items at random into a labelled training part and a test part,
/// picks the L2 strength by k-fold accuracy on the training part, and scores
/// the refit model on the test part.
pub fn classification_probe(features: &[Vec<f64>], labels: &[u32], cfg: &ProbeConfig) -> ProbeReport {
    assert_eq!(features.len(), labels.len());
    let n_classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = libm::round(features.len() as f64 * cfg.label_fraction) as usize;
    let (train_idx, test_idx) = idx.split_at(n_train);
    let tx: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
    let ty: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();

    let mut best = (L2_GRID[0], f64::NEG_INFINITY);
    if tx.len() >= 2 {
        for &l2 in &L2_GRID {
            let acc = accuracy_cv(&tx, &ty, n_classes, l2, cfg);
            if acc > best.1 {
                best = (l2, acc);
            }
        }
    }
    let model = OneVsAll::fit(&tx, &ty, n_classes, best.0, cfg);
    let truth: Vec<u32> = test_idx.iter().map(|&i| labels[i]).collect();
    let pred: Vec<u32> = test_idx.iter().map(|&i| model.predict(&features[i])).collect();
    let (micro, macro_) = f1_scores(&truth, &pred, n_classes);
    let missing_classes = (0..n_classes as u32).filter(|c| !ty.contains(c) && labels.contains(c)).collect();
    ProbeReport {
        micro_f1: micro,
        macro_f1: macro_,
        l2: best.0,
        train_size: tx.len(),
        test_size: truth.len(),
        missing_classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    #[test]
    fn f1_hand_example() {
        // truth 0 0 1 1, pred 0 1 1 1
        let (micro, macro_) = f1_scores(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert_eq!(micro, 0.75);
        let f0 = 2.0 / 3.0;
        let f1 = 0.8;
        assert!((macro_ - (f0 + f1) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn newton_matches_gradient_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * r[1] + rng.gen_range(-0.5..0.5) > 0.0).collect();
        let l2 = 0.1;
        let (w, b) = fit_binary(&x, &y, l2, 1e-10, 100);
        let mut g = [0.0; 3];
        for (xi, &yi) in x.iter().zip(&y) {
            let r = sigmoid(w[0] * xi[0] + w[1] * xi[1] + b) - yi as u8 as f64;
            g[0] += r * xi[0] / 80.0;
            g[1] += r * xi[1] / 80.0;
            g[2] += r / 80.0;
        }
        g[0] += l2 * w[0];
        g[1] += l2 * w[1];
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn separable_classes_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let c = (i % 2) as u32;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            x.push(vec![centre + rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0)]);
            y.push(c);
        }
        let r = classification_probe(&x, &y, &ProbeConfig::default());
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.train_size, 100);
    }

    #[test]
    fn shuffled_labels_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = 4;
        let x: Vec<Vec<f64>> = (0..800).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<u32> = (0..800).map(|i| (i % c) as u32).collect();
        let r = classification_probe(&x, &y, &ProbeConfig::default());
        assert!((r.micro_f1 - 0.25).abs() < 0.06, "{}", r.micro_f1);
    }

    #[test]
    fn missing_class_is_reported_and_never_predicted() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let (cfg, r) = (0..64)
            .map(|seed| {
                let cfg = ProbeConfig { seed, ..Default::default() };
                let r = classification_probe(&x, &y, &cfg);
                (cfg, r)
            })
            .find(|(_, r)| !r.missing_classes.is_empty())
            .expect("some split leaves class 1 out of training");
        assert_eq!(r.missing_classes, vec![1]);
        assert!(r.macro_f1 < 1.0);
        let m = OneVsAll::fit(&x[..5], &y[..5], 2, 1.0, &cfg);
        assert!((0..10).all(|i| m.predict(&x[i]) == 0));
    }
}
