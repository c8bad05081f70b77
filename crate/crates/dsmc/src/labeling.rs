//! Turn the relaxed consensus matrix into hard cluster labels.
//!
//! Default path: k-means on the rows (k-means++ seeding, several restarts,
//! best within-cluster sum of squares wins). Alternative: row argmax, which
//! reads the matrix directly as a relaxed one-hot indicator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMethod {
    Kmeans,
    Argmax,
}

/// Hard cluster assignment: one label in [0, k) per instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    pub labels: Vec<usize>,
    pub method: LabelMethod,
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs by
/// within-cluster sum of squares (ties keep the earliest restart). Empty
/// clusters are repaired by donating the point farthest from its centroid
/// among clusters that can spare one. Deterministic for a fixed seed.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<LabelAssignment> {
    let p = points.nrows();
    if k == 0 || k > p {
        return Err(Error::InvalidInput(format!(
            "k-means needs 1 <= k <= p, got k={k} with p={p}"
        )));
    }
    if restarts == 0 || max_iter == 0 {
        return Err(Error::InvalidInput(
            "k-means needs at least one restart and one iteration".into(),
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "k-means input contains a non-finite value".into(),
        ));
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed, restart));
        let (labels, wcss, _) = lloyd(points, k, &mut rng, max_iter);
        if best.as_ref().is_none_or(|(_, w)| wcss < *w) {
            best = Some((labels, wcss));
        }
    }
    let (labels, _) = best.expect("restarts >= 1");
    Ok(LabelAssignment {
        labels,
        method: LabelMethod::Kmeans,
    })
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed ^ (restart as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One seeded k-means run. Returns the labels, the final within-cluster sum
/// of squares, and the objective after each Lloyd iteration.
fn lloyd(
    points: &DMatrix<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> (Vec<usize>, f64, Vec<f64>) {
    let p = points.nrows();
    let dim = points.ncols();

    let mut centroids = DMatrix::zeros(k, dim);
    for (c, idx) in plus_plus_seeds(points, k, rng).into_iter().enumerate() {
        centroids.row_mut(c).copy_from(&points.row(idx));
    }

    let mut labels = vec![0usize; p];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut nearest = 0;
            let mut nearest_d2 = f64::INFINITY;
            for c in 0..k {
                let d2 = (points.row(i) - centroids.row(c)).norm_squared();
                if d2 < nearest_d2 {
                    nearest_d2 = d2;
                    nearest = c;
                }
            }
            if *label != nearest {
                *label = nearest;
                changed = true;
            }
        }

        let mut sizes = vec![0usize; k];
        for l in &labels {
            sizes[*l] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            // Donate the point farthest from its centroid, among clusters
            // that keep at least one member after the donation.
            let mut donor: Option<(usize, f64)> = None;
            for i in 0..p {
                if sizes[labels[i]] < 2 {
                    continue;
                }
                let d2 = (points.row(i) - centroids.row(labels[i])).norm_squared();
                if donor.is_none_or(|(_, best)| d2 > best) {
                    donor = Some((i, d2));
                }
            }
            let (i, _) = donor.expect("k <= p guarantees a donor for every empty cluster");
            sizes[labels[i]] -= 1;
            labels[i] = c;
            sizes[c] = 1;
            changed = true;
        }

        for c in 0..k {
            let members: Vec<usize> = (0..p).filter(|i| labels[*i] == c).collect();
            let mut mean = nalgebra::RowDVector::zeros(dim);
            for i in &members {
                mean += points.row(*i);
            }
            mean /= members.len() as f64;
            centroids.row_mut(c).copy_from(&mean);
        }

        history.push(wcss(points, &labels, &centroids));
        if !changed {
            break;
        }
    }

    let final_wcss = *history.last().expect("max_iter >= 1");
    (labels, final_wcss, history)
}

fn wcss(points: &DMatrix<f64>, labels: &[usize], centroids: &DMatrix<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, c)| (points.row(i) - centroids.row(*c)).norm_squared())
        .sum()
}

/// k-means++ seeding: the first center uniform, each further center drawn
/// with probability proportional to squared distance from the chosen set.
fn plus_plus_seeds(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let p = points.nrows();
    let mut chosen = vec![rng.random_range(0..p)];
    let mut dist2: Vec<f64> = (0..p)
        .map(|i| (points.row(i) - points.row(chosen[0])).norm_squared())
        .collect();
    while chosen.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = p - 1;
            for (i, d2) in dist2.iter().enumerate() {
                target -= d2;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..p)
        };
        chosen.push(next);
        for (i, best) in dist2.iter_mut().enumerate() {
            let d2 = (points.row(i) - points.row(next)).norm_squared();
            if d2 < *best {
                *best = d2;
            }
        }
    }
    chosen
}

/// Label each row by its maximum entry, ties to the lowest column index.
pub fn argmax_labels(y: &DMatrix<f64>) -> LabelAssignment {
    let labels = (0..y.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..y.ncols() {
                if y[(i, j)] > y[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect();
    LabelAssignment {
        labels,
        method: LabelMethod::Argmax,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn separated_groups_are_recovered_exactly() {
        let x = matrix(6, 1, &[0.0, 0.1, -0.1, 10.0, 10.1, 9.9]);
        let got = kmeans(&x, 2, 42, DEFAULT_RESTARTS, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(got.labels[0], got.labels[1]);
        assert_eq!(got.labels[0], got.labels[2]);
        assert_eq!(got.labels[3], got.labels[4]);
        assert_eq!(got.labels[3], got.labels[5]);
        assert_ne!(got.labels[0], got.labels[3]);
        assert_eq!(got.method, LabelMethod::Kmeans);
    }

    #[test]
    fn identical_points_terminate_with_no_empty_cluster() {
        let x = matrix(5, 2, &[3.0, 4.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0]);
        let got = kmeans(&x, 2, 0, DEFAULT_RESTARTS, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(got.labels.len(), 5);
        assert!(got.labels.iter().all(|l| *l < 2));
        for c in 0..2 {
            assert!(got.labels.contains(&c), "cluster {c} left empty");
        }
    }

    #[test]
    fn six_points_match_the_exhaustive_optimum() {
        let x = matrix(6, 2, &[
            0.0, 0.0, 1.0, 0.2, 0.4, 1.1, 4.0, 3.8, 5.0, 4.2, 4.4, 5.0,
        ]);
        let brute = {
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << 6) {
                let labels: Vec<usize> = (0..6).map(|i| ((mask >> i) & 1) as usize).collect();
                if !labels.contains(&0) || !labels.contains(&1) {
                    continue;
                }
                let mut total = 0.0;
                for c in 0..2 {
                    let members: Vec<usize> = (0..6).filter(|i| labels[*i] == c).collect();
                    let mut mean = nalgebra::RowDVector::zeros(2);
                    for i in &members {
                        mean += x.row(*i);
                    }
                    mean /= members.len() as f64;
                    total += members
                        .iter()
                        .map(|i| (x.row(*i) - &mean).norm_squared())
                        .sum::<f64>();
                }
                if total < best {
                    best = total;
                }
            }
            best
        };
        let got = kmeans(&x, 2, 7, DEFAULT_RESTARTS, DEFAULT_MAX_ITER).unwrap();
        let mut centroids = DMatrix::zeros(2, 2);
        for c in 0..2 {
            let members: Vec<usize> = (0..6).filter(|i| got.labels[*i] == c).collect();
            let mut mean = nalgebra::RowDVector::zeros(2);
            for i in &members {
                mean += x.row(*i);
            }
            mean /= members.len() as f64;
            centroids.row_mut(c).copy_from(&mean);
        }
        let got_wcss = wcss(&x, &got.labels, &centroids);
        assert!(
            (got_wcss - brute).abs() <= 1e-9,
            "k-means WCSS {got_wcss} vs exhaustive optimum {brute}"
        );
    }

    #[test]
    fn permuting_rows_permutes_the_partition() {
        let x = matrix(6, 1, &[0.0, 0.2, -0.2, 8.0, 8.2, 7.8]);
        let perm = [4usize, 2, 0, 5, 1, 3];
        let mut permuted = DMatrix::zeros(6, 1);
        for (dst, src) in perm.iter().enumerate() {
            permuted.row_mut(dst).copy_from(&x.row(*src));
        }
        let base = kmeans(&x, 2, 3, DEFAULT_RESTARTS, DEFAULT_MAX_ITER).unwrap();
        let moved = kmeans(&permuted, 2, 3, DEFAULT_RESTARTS, DEFAULT_MAX_ITER).unwrap();
        let mapped_back: Vec<usize> = {
            let mut v = vec![0usize; 6];
            for (dst, src) in perm.iter().enumerate() {
                v[*src] = moved.labels[dst];
            }
            v
        };
        let acc = crate::metrics::accuracy(&mapped_back, &base.labels).unwrap();
        assert_eq!(acc, 1.0, "partitions differ: {mapped_back:?} vs {:?}", base.labels);
    }

    #[test]
    fn lloyd_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.random_range(-2.0..2.0));
        for seed in 0..5 {
            let mut run_rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, _, history) = lloyd(&x, 4, &mut run_rng, DEFAULT_MAX_ITER);
            for pair in history.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-9,
                    "objective rose from {} to {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-1.0..1.0));
        let a = kmeans(&x, 3, 17, DEFAULT_RESTARTS, DEFAULT_MAX_ITER).unwrap();
        let b = kmeans(&x, 3, 17, DEFAULT_RESTARTS, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn kmeans_rejects_bad_arguments() {
        let x = matrix(2, 1, &[0.0, 1.0]);
        assert!(kmeans(&x, 3, 0, 1, 1).is_err());
        assert!(kmeans(&x, 0, 0, 1, 1).is_err());
        assert!(kmeans(&x, 2, 0, 0, 1).is_err());
        let bad = matrix(2, 1, &[0.0, f64::NAN]);
        assert!(kmeans(&bad, 1, 0, 1, 1).is_err());
    }

    #[test]
    fn argmax_reads_one_hot_rows() {
        let y = matrix(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let got = argmax_labels(&y);
        assert_eq!(got.labels, vec![1, 0, 2]);
        assert_eq!(got.method, LabelMethod::Argmax);
    }

    #[test]
    fn argmax_breaks_ties_to_the_lowest_column() {
        let y = matrix(1, 2, &[0.5, 0.5]);
        assert_eq!(argmax_labels(&y).labels, vec![0]);
        let y = matrix(1, 3, &[0.2, 0.7, 0.7]);
        assert_eq!(argmax_labels(&y).labels, vec![1]);
    }

    #[test]
    fn argmax_ignores_per_row_constants() {
        let y = matrix(2, 3, &[0.1, 0.9, 0.3, 0.8, 0.2, 0.4]);
        let shifted = y.map(|v| v + 100.0);
        assert_eq!(argmax_labels(&y).labels, argmax_labels(&shifted).labels);
    }

    #[test]
    fn argmax_labels_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = DMatrix::from_fn(25, 4, |_, _| rng.random_range(-1.0..1.0));
        let got = argmax_labels(&y);
        assert!(got.labels.iter().all(|l| *l < 4));
    }
}
