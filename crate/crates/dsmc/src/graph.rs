//! Gaussian affinity graphs, normalized Laplacians, and spectral embeddings.
//!
//! One view's feature matrix becomes a dense affinity graph
//! `w_ij = exp(-||x_i - x_j||^2 / (2 sigma^2))`, then the normalized
//! Laplacian `L = I - D^{-1/2} W D^{-1/2}`, then a p x k embedding from the
//! k smallest eigenvectors.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Bandwidth selection for the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    /// Median of the p(p-1)/2 pairwise Euclidean distances.
    Median,
    /// Caller-supplied bandwidth, must be positive and finite.
    Fixed(f64),
}

/// Dense Gaussian-kernel affinity matrix. Symmetric, entries in (0, 1],
/// unit diagonal.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    pub weights: DMatrix<f64>,
    /// Bandwidth actually used (resolved from the policy).
    pub sigma: f64,
}

/// Degree vector (diagonal of D) together with the normalized Laplacian
/// `L = I - D^{-1/2} W D^{-1/2}`. L is symmetric with eigenvalues in [0, 2];
/// its smallest eigenvalue is 0 with eigenvector D^{1/2} 1.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub degrees: DVector<f64>,
    pub laplacian: DMatrix<f64>,
}

/// The k smallest eigenpairs of a normalized Laplacian. Columns of `f` are
/// orthonormal; `eigenvalues` is nondecreasing.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub f: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Build the Gaussian affinity graph of one view. Each unordered pair's
/// distance is computed once and mirrored, so the result is symmetric
/// bit-for-bit.
pub fn build_affinity(x: &DMatrix<f64>, policy: SigmaPolicy) -> Result<AffinityGraph> {
    let p = x.nrows();
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "affinity graph needs at least 2 instances, got {p}"
        )));
    }

    let mut dist2 = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let d2 = (x.row(i) - x.row(j)).norm_squared();
            dist2[(i, j)] = d2;
        }
    }

    let sigma = match policy {
        SigmaPolicy::Fixed(s) => {
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "fixed sigma must be positive and finite, got {s}"
                )));
            }
            s
        }
        SigmaPolicy::Median => {
            let mut dists: Vec<f64> = Vec::with_capacity(p * (p - 1) / 2);
            for i in 0..p {
                for j in (i + 1)..p {
                    dists.push(dist2[(i, j)].sqrt());
                }
            }
            dists.sort_by(|a, b| a.total_cmp(b));
            let mid = dists.len() / 2;
            let median = if dists.len() % 2 == 1 {
                dists[mid]
            } else {
                0.5 * (dists[mid - 1] + dists[mid])
            };
            if median == 0.0 {
                return Err(Error::InvalidInput(
                    "median pairwise distance is 0 (at least half the instances coincide); \
                     pass a fixed sigma instead"
                        .into(),
                ));
            }
            median
        }
    };

    let denom = 2.0 * sigma * sigma;
    let mut weights = DMatrix::zeros(p, p);
    for i in 0..p {
        weights[(i, i)] = 1.0;
        for j in (i + 1)..p {
            let w = (-dist2[(i, j)] / denom).exp();
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Ok(AffinityGraph { weights, sigma })
}

/// Degree vector and normalized Laplacian of an affinity graph. Off-diagonal
/// entries are computed once per unordered pair, so L is symmetric
/// bit-for-bit.
pub fn build_laplacian(g: &AffinityGraph) -> LaplacianPair {
    let p = g.weights.nrows();
    let mut degrees = DVector::zeros(p);
    for i in 0..p {
        degrees[i] = g.weights.row(i).sum();
        assert!(degrees[i] > 0.0, "graph degree {i} is not positive");
    }
    let mut laplacian = DMatrix::zeros(p, p);
    for i in 0..p {
        laplacian[(i, i)] = 1.0 - g.weights[(i, i)] / degrees[i];
        for j in (i + 1)..p {
            let s = -g.weights[(i, j)] / (degrees[i] * degrees[j]).sqrt();
            laplacian[(i, j)] = s;
            laplacian[(j, i)] = s;
        }
    }
    LaplacianPair { degrees, laplacian }
}

/// Eigenvectors of the k algebraically smallest eigenvalues, eigenvalues in
/// nondecreasing order. Sign convention: each column's largest-magnitude
/// entry is made positive, ties broken by lowest row index, so the embedding
/// is a deterministic function of (L, k) whenever the spectrum is simple.
pub fn spectral_embedding(lp: &LaplacianPair, k: usize) -> Result<SpectralEmbedding> {
    let p = lp.laplacian.nrows();
    if k == 0 || k > p {
        return Err(Error::InvalidInput(format!(
            "embedding dimension must satisfy 1 <= k <= p, got k={k} with p={p}"
        )));
    }
    let eigen = nalgebra::SymmetricEigen::try_new(lp.laplacian.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|a, b| {
        eigen.eigenvalues[*a]
            .total_cmp(&eigen.eigenvalues[*b])
            .then(a.cmp(b))
    });

    let mut f = DMatrix::zeros(p, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        eigenvalues.push(eigen.eigenvalues[src]);
        let mut best = 0;
        for i in 1..p {
            if eigen.eigenvectors[(i, src)].abs() > eigen.eigenvectors[(best, src)].abs() {
                best = i;
            }
        }
        let flip = if eigen.eigenvectors[(best, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            f[(i, col)] = flip * eigen.eigenvectors[(i, src)];
        }
    }
    Ok(SpectralEmbedding { f, eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn identical_rows_have_unit_affinity() {
        let x = matrix(3, 2, &[1.0, 2.0, 1.0, 2.0, 4.0, 6.0]);
        let g = build_affinity(&x, SigmaPolicy::Fixed(1.0)).unwrap();
        assert_eq!(g.weights[(0, 1)], 1.0);
        assert_eq!(g.weights[(0, 0)], 1.0);
    }

    #[test]
    fn distance_sigma_sqrt2_gives_exp_minus_one() {
        let sigma = 0.7;
        let d = sigma * 2.0_f64.sqrt();
        let x = matrix(2, 1, &[0.0, d]);
        let g = build_affinity(&x, SigmaPolicy::Fixed(sigma)).unwrap();
        assert_abs_diff_eq!(g.weights[(0, 1)], (-1.0_f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.weights[(0, 1)], 0.367_879_441_171_442_33, epsilon = 1e-12);
    }

    #[test]
    fn median_bandwidth_odd_and_even_counts() {
        let x = matrix(3, 1, &[0.0, 1.0, 3.0]);
        let g = build_affinity(&x, SigmaPolicy::Median).unwrap();
        assert_eq!(g.sigma, 2.0);
        assert_abs_diff_eq!(g.weights[(0, 1)], (-1.0 / 8.0_f64).exp(), epsilon = 1e-15);

        let x = matrix(4, 1, &[0.0, 1.0, 2.0, 4.0]);
        let g = build_affinity(&x, SigmaPolicy::Median).unwrap();
        assert_eq!(g.sigma, 2.0);
    }

    #[test]
    fn median_of_identical_instances_is_an_error() {
        let x = matrix(3, 2, &[5.0, 5.0, 5.0, 5.0, 5.0, 5.0]);
        let err = build_affinity(&x, SigmaPolicy::Median).unwrap_err().to_string();
        assert!(err.contains("fixed sigma"), "{err}");
    }

    #[test]
    fn nonpositive_fixed_sigma_is_rejected() {
        let x = matrix(2, 1, &[0.0, 1.0]);
        assert!(build_affinity(&x, SigmaPolicy::Fixed(0.0)).is_err());
        assert!(build_affinity(&x, SigmaPolicy::Fixed(-1.0)).is_err());
        assert!(build_affinity(&x, SigmaPolicy::Fixed(f64::NAN)).is_err());
    }

    #[test]
    fn two_point_laplacian_hand_case() {
        let g = AffinityGraph {
            weights: matrix(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            sigma: 1.0,
        };
        let lp = build_laplacian(&g);
        assert_eq!(lp.degrees, DVector::from_vec(vec![2.0, 2.0]));
        let expected = matrix(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_abs_diff_eq!(lp.laplacian, expected, epsilon = 1e-15);
    }

    #[test]
    fn laplacian_annihilates_sqrt_degree_vector() {
        let x = matrix(4, 2, &[0.0, 0.0, 1.0, 0.5, 2.0, 2.0, -1.0, 3.0]);
        let g = build_affinity(&x, SigmaPolicy::Median).unwrap();
        let lp = build_laplacian(&g);
        let null = lp.degrees.map(f64::sqrt);
        assert!((&lp.laplacian * &null).norm() <= 1e-10);
    }

    #[test]
    fn embedding_of_disconnected_cliques_is_blockwise_constant() {
        // Two 3-node cliques with no cross edges: the Laplacian has a 0
        // eigenvalue per component and the 2d embedding separates the blocks.
        let mut w = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                if (i < 3) == (j < 3) {
                    w[(i, j)] = 1.0;
                }
            }
        }
        // Positive degrees need no epsilon here; zero cross-block weights are
        // fine for the Laplacian itself.
        let lp = build_laplacian(&AffinityGraph { weights: w, sigma: 1.0 });
        let emb = spectral_embedding(&lp, 2).unwrap();
        assert!(emb.eigenvalues[0].abs() <= 1e-8);
        assert!(emb.eigenvalues[1].abs() <= 1e-8);
        for block in [0..3, 3..6] {
            let first = emb.f.row(block.start).clone_owned();
            for i in block {
                assert_abs_diff_eq!(emb.f.row(i).clone_owned(), first, epsilon = 1e-8);
            }
        }
        let cross = (emb.f.row(0) - emb.f.row(3)).norm();
        assert!(cross > 0.1, "blocks should embed at distinct points, got {cross}");
    }

    #[test]
    fn full_embedding_is_an_orthonormal_basis() {
        let x = matrix(5, 2, &[0.0, 0.1, 1.0, 0.4, 2.0, 1.7, 3.0, 0.9, 4.0, 2.2]);
        let g = build_affinity(&x, SigmaPolicy::Median).unwrap();
        let lp = build_laplacian(&g);
        let emb = spectral_embedding(&lp, 5).unwrap();
        let gram = emb.f.transpose() * &emb.f;
        assert_abs_diff_eq!(gram, DMatrix::identity(5, 5), epsilon = 1e-8);
    }

    #[test]
    fn embedding_rejects_out_of_range_k() {
        let g = AffinityGraph {
            weights: matrix(2, 2, &[1.0, 0.5, 0.5, 1.0]),
            sigma: 1.0,
        };
        let lp = build_laplacian(&g);
        assert!(spectral_embedding(&lp, 0).is_err());
        assert!(spectral_embedding(&lp, 3).is_err());
    }

    #[test]
    fn eigenpairs_satisfy_the_residual_bound() {
        let x = matrix(6, 3, &[
            0.0, 0.3, 1.0, 0.9, 2.0, -0.4, 3.1, 0.5, 0.2, -1.0, 1.5, 2.0, 0.7, -0.8, 1.1, 2.2,
            0.0, -1.3,
        ]);
        let g = build_affinity(&x, SigmaPolicy::Median).unwrap();
        let lp = build_laplacian(&g);
        let emb = spectral_embedding(&lp, 6).unwrap();
        for (i, lambda) in emb.eigenvalues.iter().enumerate() {
            let v = emb.f.column(i);
            let residual = (&lp.laplacian * v - v * *lambda).norm();
            assert!(residual <= 1e-6, "eigenpair {i} residual {residual}");
        }
        for pair in emb.eigenvalues.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn planted_clusters_are_recoverable_from_one_view() {
        let spec = SynthSpec {
            p: 90,
            n: 1,
            k: 3,
            d: 6,
            separation: 10.0,
            noise_sigma: vec![0.1],
            seed: 11,
        };
        let ds = generate_synthetic(&spec).unwrap();
        let g = build_affinity(&ds.views[0], SigmaPolicy::Median).unwrap();
        let lp = build_laplacian(&g);
        let emb = spectral_embedding(&lp, 3).unwrap();
        let assignment = crate::labeling::kmeans(
            &emb.f,
            3,
            11,
            crate::labeling::DEFAULT_RESTARTS,
            crate::labeling::DEFAULT_MAX_ITER,
        )
        .unwrap();
        let acc = crate::metrics::accuracy(&assignment.labels, ds.labels.as_ref().unwrap()).unwrap();
        assert!(acc >= 0.95, "single-view spectral clustering ACC {acc}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn affinity_is_symmetric_with_unit_diagonal(
            rows in 2usize..7,
            cols in 1usize..4,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-5.0..5.0));
            let g = match build_affinity(&x, SigmaPolicy::Median) {
                Ok(g) => g,
                Err(_) => return Ok(()),
            };
            for i in 0..rows {
                prop_assert_eq!(g.weights[(i, i)], 1.0);
                for j in 0..rows {
                    prop_assert_eq!(g.weights[(i, j)].to_bits(), g.weights[(j, i)].to_bits());
                    prop_assert!(g.weights[(i, j)] > 0.0 && g.weights[(i, j)] <= 1.0);
                }
            }
        }

        #[test]
        fn laplacian_spectrum_is_bounded_and_orthonormal(
            rows in 2usize..8,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(rows, 2, |_, _| rng.random_range(-3.0..3.0));
            let g = match build_affinity(&x, SigmaPolicy::Median) {
                Ok(g) => g,
                Err(_) => return Ok(()),
            };
            let lp = build_laplacian(&g);
            let emb = spectral_embedding(&lp, rows).unwrap();
            for lambda in &emb.eigenvalues {
                prop_assert!(*lambda >= -1e-10 && *lambda <= 2.0 + 1e-10);
            }
            let gram = emb.f.transpose() * &emb.f;
            let err = (gram - DMatrix::identity(rows, rows)).amax();
            prop_assert!(err <= 1e-8);
            for (i, lambda) in emb.eigenvalues.iter().enumerate() {
                let v = emb.f.column(i);
                prop_assert!((&lp.laplacian * v - v * *lambda).norm() <= 1e-6);
            }
        }
    }
}
