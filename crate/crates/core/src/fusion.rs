//! Late fusion of prediction pairs over a shared class list.

use crate::error::{Error, Result};
use crate::learners::svm::{train_svm_raw, FusionSvmModel, SvmConfig};
use crate::learners::{predict_svm, ClassList, Prediction};

fn check_aligned(p: &Prediction, q: &Prediction) -> Result<()> {
    if p.classes() != q.classes() {
        return Err(Error::ClassMismatch);
    }
    Ok(())
}

/// Ave-p: the arithmetic mean of the two predictions.
pub fn fuse_average(p: &Prediction, q: &Prediction) -> Result<Prediction> {
    check_aligned(p, q)?;
    let scores: Vec<f64> =
        p.scores().iter().zip(q.scores()).map(|(a, b)| (a + b) / 2.0).collect();
    Prediction::new(p.classes().clone(), scores)
}

/// Mul-p: the elementwise product, renormalized. When the product vanishes
/// everywhere the result degenerates to the uniform prediction, flagged by
/// the second return value.
pub fn fuse_multiply_flagged(p: &Prediction, q: &Prediction) -> Result<(Prediction, bool)> {
    check_aligned(p, q)?;
    let scores: Vec<f64> = p.scores().iter().zip(q.scores()).map(|(a, b)| a * b).collect();
    if scores.iter().sum::<f64>() <= 0.0 {
        return Ok((Prediction::uniform(p.classes().clone()), true));
    }
    Ok((Prediction::new(p.classes().clone(), scores)?, false))
}

pub fn fuse_multiply(p: &Prediction, q: &Prediction) -> Result<Prediction> {
    fuse_multiply_flagged(p, q).map(|(pred, _)| pred)
}

/// Sq-p: square the composition-side prediction before multiplying. The
/// squaring sharpens a prediction whose errors are rarely total, so it is
/// applied to the LIBS side only; the rule is deliberately asymmetric.
pub fn fuse_square_multiply_flagged(
    libs_pred: &Prediction,
    other_pred: &Prediction,
) -> Result<(Prediction, bool)> {
    check_aligned(libs_pred, other_pred)?;
    let scores: Vec<f64> = libs_pred
        .scores()
        .iter()
        .zip(other_pred.scores())
        .map(|(l, o)| l * l * o)
        .collect();
    if scores.iter().sum::<f64>() <= 0.0 {
        return Ok((Prediction::uniform(libs_pred.classes().clone()), true));
    }
    Ok((Prediction::new(libs_pred.classes().clone(), scores)?, false))
}

pub fn fuse_square_multiply(libs_pred: &Prediction, other_pred: &Prediction) -> Result<Prediction> {
    fuse_square_multiply_flagged(libs_pred, other_pred).map(|(pred, _)| pred)
}

/// Restrict two predictions over different class lists to their common
/// species (by name) and renormalize both. Class order follows `p`.
pub fn restrict_to_common(p: &Prediction, q: &Prediction) -> Result<(Prediction, Prediction)> {
    if p.classes() == q.classes() {
        return Ok((p.clone(), q.clone()));
    }
    let mut names = Vec::new();
    let mut ps = Vec::new();
    let mut qs = Vec::new();
    for (i, name) in p.classes().names().iter().enumerate() {
        if let Some(j) = q.classes().position(name) {
            names.push(name.clone());
            ps.push(p.score(i));
            qs.push(q.score(j));
        }
    }
    if names.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let classes = ClassList::new(names);
    Ok((Prediction::new(classes.clone(), ps)?, Prediction::new(classes, qs)?))
}

/// Train a linear SVM on concatenated prediction pairs `[p || q]`.
///
/// The training pairs must come from folds held out of the base classifiers'
/// own training data, or the combiner learns from leaked confidence.
pub fn fuse_svm(
    train_pairs: &[(Prediction, Prediction, usize)],
    cfg: &SvmConfig,
) -> Result<FusionSvmModel> {
    let first = train_pairs.first().ok_or(Error::EmptyClass)?;
    let classes = first.0.classes().clone();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(train_pairs.len());
    let mut labels = Vec::with_capacity(train_pairs.len());
    for (p, q, label) in train_pairs {
        if p.classes() != &classes || q.classes() != &classes {
            return Err(Error::ClassMismatch);
        }
        let mut row = Vec::with_capacity(2 * classes.len());
        row.extend_from_slice(p.scores());
        row.extend_from_slice(q.scores());
        rows.push(row);
        labels.push(*label);
    }
    let row_refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let svm = train_svm_raw(&row_refs, &labels, classes, cfg)?;
    Ok(FusionSvmModel { svm })
}

/// Apply a trained fusion SVM to a prediction pair.
pub fn apply_fused_svm(
    model: &FusionSvmModel,
    p: &Prediction,
    q: &Prediction,
) -> Result<Prediction> {
    check_aligned(p, q)?;
    if p.classes() != &model.svm.classes {
        return Err(Error::ClassMismatch);
    }
    let mut row = Vec::with_capacity(2 * p.classes().len());
    row.extend_from_slice(p.scores());
    row.extend_from_slice(q.scores());
    Ok(predict_svm(&model.svm, &row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn classes(n: usize) -> ClassList {
        ClassList::new((0..n).map(|i| format!("c{i}")).collect())
    }

    fn pred(c: &ClassList, scores: &[f64]) -> Prediction {
        Prediction::new(c.clone(), scores.to_vec()).unwrap()
    }

    #[test]
    fn average_basics() {
        let c = classes(2);
        let got = fuse_average(&pred(&c, &[1.0, 0.0]), &pred(&c, &[0.0, 1.0])).unwrap();
        assert_eq!(got.scores(), &[0.5, 0.5]);
        let got = fuse_average(&pred(&c, &[0.6, 0.4]), &pred(&c, &[0.2, 0.8])).unwrap();
        assert!((got.score(0) - 0.4).abs() < 1e-12);
        assert!((got.score(1) - 0.6).abs() < 1e-12);
        // Idempotence.
        let p = pred(&c, &[0.3, 0.7]);
        let same = fuse_average(&p, &p).unwrap();
        assert_eq!(same.scores(), p.scores());
    }

    #[test]
    fn multiply_uniform_is_identity() {
        let c = classes(4);
        let p = pred(&c, &[0.1, 0.2, 0.3, 0.4]);
        let u = Prediction::uniform(c.clone());
        let got = fuse_multiply(&p, &u).unwrap();
        for (a, b) in got.scores().iter().zip(p.scores()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multiply_hand_case() {
        let c = classes(2);
        let got = fuse_multiply(&pred(&c, &[0.6, 0.4]), &pred(&c, &[0.2, 0.8])).unwrap();
        // [0.12, 0.32] -> [3/11, 8/11]
        assert!((got.score(0) - 3.0 / 11.0).abs() < 1e-12);
        assert!((got.score(1) - 8.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn multiply_degenerate_returns_uniform_with_flag() {
        let c = classes(2);
        let (got, degenerate) =
            fuse_multiply_flagged(&pred(&c, &[1.0, 0.0]), &pred(&c, &[0.0, 1.0])).unwrap();
        assert!(degenerate);
        assert_eq!(got.scores(), &[0.5, 0.5]);
    }

    #[test]
    fn square_multiply_hand_case_and_asymmetry() {
        let c = classes(2);
        let libs = pred(&c, &[0.8, 0.2]);
        let other = pred(&c, &[0.5, 0.5]);
        let got = fuse_square_multiply(&libs, &other).unwrap();
        // [0.32, 0.02] -> [16/17, 1/17]
        assert!((got.score(0) - 16.0 / 17.0).abs() < 1e-12);
        assert!((got.score(1) - 1.0 / 17.0).abs() < 1e-12);
        // Asymmetric: swapping the arguments changes the answer.
        let swapped = fuse_square_multiply(&other, &libs).unwrap();
        assert!((got.score(0) - swapped.score(0)).abs() > 1e-6);
    }

    #[test]
    fn square_multiply_uniform_libs_reduces_to_other() {
        let c = classes(3);
        let other = pred(&c, &[0.5, 0.3, 0.2]);
        let got = fuse_square_multiply(&Prediction::uniform(c.clone()), &other).unwrap();
        for (a, b) in got.scores().iter().zip(other.scores()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn entropy(p: &Prediction) -> f64 {
        p.scores().iter().filter(|&&s| s > 0.0).map(|s| -s * s.ln()).sum()
    }

    #[test]
    fn squaring_sharpens_against_uniform_partner() {
        let c = classes(4);
        let libs = pred(&c, &[0.4, 0.3, 0.2, 0.1]);
        let fused = fuse_square_multiply(&libs, &Prediction::uniform(c.clone())).unwrap();
        assert!(entropy(&fused) <= entropy(&libs) + 1e-12);
    }

    #[test]
    fn fusion_rules_match_direct_arithmetic_on_random_pairs() {
        let mut rng = rng_from_seed(31);
        for _ in 0..1000 {
            let n = rng.gen_range(2..8);
            let c = classes(n);
            let draw = |rng: &mut crate::rng::ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(1e-6..1.0)).collect()
            };
            let pv = draw(&mut rng);
            let qv = draw(&mut rng);
            let p = pred(&c, &pv);
            let q = pred(&c, &qv);

            let ave = fuse_average(&p, &q).unwrap();
            let mul = fuse_multiply(&p, &q).unwrap();
            let sq = fuse_square_multiply(&p, &q).unwrap();

            // Oracle arithmetic straight from the definitions.
            let sum_p: f64 = pv.iter().sum();
            let sum_q: f64 = qv.iter().sum();
            let np: Vec<f64> = pv.iter().map(|v| v / sum_p).collect();
            let nq: Vec<f64> = qv.iter().map(|v| v / sum_q).collect();
            let mean: Vec<f64> = np.iter().zip(&nq).map(|(a, b)| (a + b) / 2.0).collect();
            let mean_sum: f64 = mean.iter().sum();
            let prod: Vec<f64> = np.iter().zip(&nq).map(|(a, b)| a * b).collect();
            let prod_sum: f64 = prod.iter().sum();
            let sqv: Vec<f64> = np.iter().zip(&nq).map(|(a, b)| a * a * b).collect();
            let sq_sum: f64 = sqv.iter().sum();
            for i in 0..n {
                assert!((ave.score(i) - mean[i] / mean_sum).abs() < 1e-12);
                assert!((mul.score(i) - prod[i] / prod_sum).abs() < 1e-12);
                assert!((sq.score(i) - sqv[i] / sq_sum).abs() < 1e-12);
            }

            // Commutativity of ave/mul.
            let mul_rev = fuse_multiply(&q, &p).unwrap();
            let ave_rev = fuse_average(&q, &p).unwrap();
            for i in 0..n {
                assert!((mul.score(i) - mul_rev.score(i)).abs() < 1e-12);
                assert!((ave.score(i) - ave_rev.score(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multiply_argmax_scale_invariant() {
        let mut rng = rng_from_seed(77);
        for _ in 0..200 {
            let n = rng.gen_range(2..6);
            let c = classes(n);
            let pv: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let qv: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let lambda = rng.gen_range(0.1..10.0);
            let scaled: Vec<f64> = pv.iter().map(|v| v * lambda).collect();
            let a = fuse_multiply(&pred(&c, &pv), &pred(&c, &qv)).unwrap();
            let b = fuse_multiply(&pred(&c, &scaled), &pred(&c, &qv)).unwrap();
            assert_eq!(a.argmax(), b.argmax());
        }
    }

    #[test]
    fn class_mismatch_rejected_and_restriction_works() {
        let ca = ClassList::new(vec!["x".into(), "y".into(), "z".into()]);
        let cb = ClassList::new(vec!["y".into(), "w".into(), "x".into()]);
        let p = Prediction::new(ca, vec![0.5, 0.3, 0.2]).unwrap();
        let q = Prediction::new(cb, vec![0.6, 0.3, 0.1]).unwrap();
        assert!(matches!(fuse_average(&p, &q), Err(Error::ClassMismatch)));
        let (rp, rq) = restrict_to_common(&p, &q).unwrap();
        assert_eq!(rp.classes().names(), &["x".to_string(), "y".to_string()]);
        // p: x=0.5, y=0.3 -> renormalized [5/8, 3/8]; q: x=0.1, y=0.6 -> [1/7, 6/7].
        assert!((rp.score(0) - 0.625).abs() < 1e-12);
        assert!((rq.score(0) - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(rp.classes(), rq.classes());
    }

    #[test]
    fn fusion_svm_learns_a_linear_relationship() {
        // p alone encodes the label; the combiner must reach at least p's
        // training accuracy.
        let c = classes(3);
        let mut rng = rng_from_seed(5);
        let mut pairs = Vec::new();
        for label in 0..3usize {
            for _ in 0..12 {
                let mut pvec = vec![0.15; 3];
                pvec[label] = 0.7 + rng.gen_range(0.0..0.2);
                let qvec: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
                pairs.push((pred(&c, &pvec), pred(&c, &qvec), label));
            }
        }
        let model = fuse_svm(&pairs, &SvmConfig::default()).unwrap();
        let base_correct = pairs.iter().filter(|(p, _, y)| p.argmax() == *y).count();
        let fused_correct = pairs
            .iter()
            .filter(|(p, q, y)| apply_fused_svm(&model, p, q).unwrap().argmax() == *y)
            .count();
        assert!(fused_correct >= base_correct, "{fused_correct} < {base_correct}");
        // Output is a valid prediction.
        let out = apply_fused_svm(&model, &pairs[0].0, &pairs[0].1).unwrap();
        assert!((out.scores().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // Deterministic.
        let model2 = fuse_svm(&pairs, &SvmConfig::default()).unwrap();
        assert_eq!(model.svm.weights, model2.svm.weights);
    }
}
