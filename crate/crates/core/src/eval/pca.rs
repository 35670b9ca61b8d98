//! Principal component analysis for the spectral case studies.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Project mean-centered samples onto the top principal components.
///
/// Returns per-sample projections and the explained variance (covariance
/// eigenvalue, sample `n-1` denominator) per component, sorted descending.
/// Sign convention: the largest-magnitude loading of each component is
/// positive. Rank-deficient directions come back as zero projections with
/// zero explained variance.
pub fn pca_project(data: &[Vec<f64>], n_components: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Config("pca needs at least 2 samples".into()));
    }
    let d = data[0].len();
    if data.iter().any(|row| row.len() != d) {
        return Err(Error::Config("pca rows have unequal lengths".into()));
    }
    let k = n_components.min(d);

    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);

    // Eigen-decompose whichever symmetric matrix is smaller: the d x d
    // covariance, or the n x n Gram matrix (same nonzero spectrum).
    let denom = (n - 1) as f64;
    let mut components: Vec<(f64, Vec<f64>)> = Vec::new();
    if d <= n {
        let cov = centered.transpose() * &centered / denom;
        let eig = SymmetricEigen::new(cov);
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            components.push((lambda.max(0.0), eig.eigenvectors.column(i).iter().copied().collect()));
        }
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            let lambda = lambda.max(0.0);
            let u = eig.eigenvectors.column(i);
            // Map the Gram eigenvector into feature space and normalize.
            let v = centered.transpose() * u;
            let norm = v.norm();
            let vec = if norm > 1e-12 {
                v.iter().map(|x| x / norm).collect()
            } else {
                vec![0.0; d]
            };
            components.push((lambda, vec));
        }
    }
    components.sort_by(|a, b| b.0.total_cmp(&a.0));
    components.truncate(k);
    // Pad if the caller asked for more components than exist.
    while components.len() < n_components {
        components.push((0.0, vec![0.0; d]));
    }

    for (_, v) in &mut components {
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[lead] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }

    let explained: Vec<f64> = components.iter().map(|(l, _)| *l).collect();
    let projections: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|(lambda, v)| {
                    if *lambda <= 0.0 && v.iter().all(|x| *x == 0.0) {
                        0.0
                    } else {
                        (0..d).map(|j| centered[(i, j)] * v[j]).sum()
                    }
                })
                .collect()
        })
        .collect();
    Ok((projections, explained))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    /// Brute-force oracle: full covariance, Jacobi eigensolve.
    fn jacobi_eigenvalues(data: &[Vec<f64>]) -> Vec<f64> {
        let n = data.len();
        let d = data[0].len();
        let mut mean = vec![0.0; d];
        for row in data {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for row in data {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n as f64 - 1.0);
                }
            }
        }
        // Cyclic Jacobi rotations.
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..d {
                for j in i + 1..d {
                    off += cov[i][j] * cov[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..d {
                for q in p + 1..d {
                    if cov[p][q].abs() < 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (cov[q][q] - cov[p][p]) / cov[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = cov[k][p];
                        let akq = cov[k][q];
                        cov[k][p] = c * akp - s * akq;
                        cov[k][q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = cov[p][k];
                        let aqk = cov[q][k];
                        cov[p][k] = c * apk - s * aqk;
                        cov[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eigs: Vec<f64> = (0..d).map(|i| cov[i][i]).collect();
        eigs.sort_by(|a, b| b.total_cmp(a));
        eigs
    }

    #[test]
    fn collinear_points_have_zero_second_variance() {
        let data: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let (proj, explained) = pca_project(&data, 2).unwrap();
        assert!(explained[0] > 0.0);
        assert!(explained[1].abs() < 1e-9);
        assert_eq!(proj.len(), 6);
        assert_eq!(proj[0].len(), 2);
    }

    #[test]
    fn projections_have_zero_mean() {
        let mut rng = rng_from_seed(8);
        let data: Vec<Vec<f64>> =
            (0..12).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let (proj, _) = pca_project(&data, 3).unwrap();
        for c in 0..3 {
            let mean: f64 = proj.iter().map(|p| p[c]).sum::<f64>() / proj.len() as f64;
            assert!(mean.abs() < 1e-9, "component {c} mean {mean}");
        }
    }

    #[test]
    fn explained_variance_matches_jacobi_oracle() {
        let mut rng = rng_from_seed(42);
        for _ in 0..10 {
            let n = rng.gen_range(6..20);
            let data: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let (_, explained) = pca_project(&data, 5).unwrap();
            let oracle = jacobi_eigenvalues(&data);
            for (a, b) in explained.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gram_path_agrees_with_covariance_path() {
        // More features than samples exercises the Gram branch; embed the
        // same 3 points in a higher dimension and compare eigenvalues.
        let mut rng = rng_from_seed(4);
        let base: Vec<Vec<f64>> =
            (0..4).map(|_| (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let (_, explained) = pca_project(&base, 3).unwrap();
        let oracle = jacobi_eigenvalues(&base);
        for (a, b) in explained.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn sign_convention_largest_loading_positive() {
        let data = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.1],
            vec![2.0, 0.2],
            vec![3.0, 0.1],
        ];
        let (proj, _) = pca_project(&data, 1).unwrap();
        // The dominant direction is +x; later samples must project higher.
        assert!(proj[3][0] > proj[0][0]);
    }

    #[test]
    fn single_sample_is_an_error() {
        assert!(pca_project(&[vec![1.0, 2.0]], 2).is_err());
    }
}
