//! Two-phase workload clustering.
//!
//! Offline phase: level-based initialization (per-feature equal-frequency
//! intervals whose midpoints span a grid of `l^5` seed cells) followed by
//! Lloyd's k-means. Online phase: new batches are classified to the nearest
//! centroid when their silhouette under the induced assignment stays above a
//! threshold; far-off points nudge their centroid by an incremental-mean
//! step, and low-silhouette batches trigger a full re-clustering of the
//! history plus the batch.

use crate::domain::{FeatureNormalizer, NormalizedPoint, DIM};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fitted cluster model: centroids in normalized space plus the frozen
/// normalizer that produced that space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// Cluster centroids in normalized feature space.
    pub centroids: Vec<NormalizedPoint>,
    /// Fit-time assignment: index into `centroids` for each point of the
    /// fitted batch, in batch order.
    pub assignments: Vec<usize>,
    /// The frozen min-max normalizer the model was fitted under.
    pub normalizer: FeatureNormalizer,
    /// Silhouette score of the fitted batch under `assignments` (0.0 when
    /// fewer than two clusters are present, where the score is undefined).
    pub silhouette: f64,
    /// Number of Lloyd iterations the fit used.
    pub iterations_used: usize,
    /// Running count of points ever assigned to each cluster; seeds the
    /// incremental-mean updates on the online path and resets at re-fit.
    pub assign_counts: Vec<usize>,
}

impl ClusterModel {
    /// Number of clusters.
    pub fn cluster_count(&self) -> usize {
        self.centroids.len()
    }

    /// Label of the nearest centroid (ties resolve to the lowest index).
    pub fn classify(&self, p: &NormalizedPoint) -> usize {
        nearest_centroid(p, &self.centroids).0
    }
}

/// Index and distance of the nearest centroid; equidistant points resolve to
/// the lowest cluster index.
pub fn nearest_centroid(p: &NormalizedPoint, centroids: &[NormalizedPoint]) -> (usize, f64) {
    debug_assert!(!centroids.is_empty());
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = p.dist_sq(c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d.sqrt())
}

/// Linear-interpolation quantile (the common "type 7" estimator) over an
/// ascending-sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

/// Per-feature equal-frequency interval bounds: `levels + 1` cut points per
/// feature, from the batch minimum to the batch maximum.
pub fn level_cuts(batch: &[NormalizedPoint], levels: usize) -> [Vec<f64>; DIM] {
    let mut cuts: [Vec<f64>; DIM] = Default::default();
    for (k, cuts_k) in cuts.iter_mut().enumerate() {
        let mut vals: Vec<f64> = batch.iter().map(|p| p.0[k]).collect();
        vals.sort_by(f64::total_cmp);
        *cuts_k = (0..=levels)
            .map(|j| quantile_sorted(&vals, j as f64 / levels as f64))
            .collect();
    }
    cuts
}

/// Level-based initialization: split every feature into `levels`
/// equal-frequency intervals, form the `levels^5` grid of interval-midpoint
/// combinations (feature 0 varies slowest), and seed each cell with the batch
/// point nearest its midpoint vector. A point already claimed by an earlier
/// cell is skipped in favor of the next-nearest unused point, so the returned
/// centroids are pairwise distinct batch points.
pub fn level_init(batch: &[NormalizedPoint], levels: usize) -> Result<Vec<NormalizedPoint>> {
    if levels == 0 {
        return Err(Error::InvalidConfig("levels must be >= 1".into()));
    }
    let cells = levels.pow(DIM as u32);
    if batch.len() < cells {
        return Err(Error::InsufficientData {
            needed: cells,
            got: batch.len(),
            context: "level_init needs at least levels^5 points",
        });
    }
    let cuts = level_cuts(batch, levels);
    let mut midpoints: [Vec<f64>; DIM] = Default::default();
    for k in 0..DIM {
        midpoints[k] = (0..levels)
            .map(|c| 0.5 * (cuts[k][c] + cuts[k][c + 1]))
            .collect();
    }

    let mut used = vec![false; batch.len()];
    let mut centroids = Vec::with_capacity(cells);
    for cell in 0..cells {
        let mut m = [0.0; DIM];
        let mut rem = cell;
        for k in (0..DIM).rev() {
            m[k] = midpoints[k][rem % levels];
            rem /= levels;
        }
        let target = NormalizedPoint(m);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (i, p) in batch.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = p.dist_sq(&target);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        used[best] = true;
        centroids.push(batch[best]);
    }
    Ok(centroids)
}

/// Derive the per-feature level count from a requested cluster count:
/// `levels = round(clusters^(1/5))`, at least 1.
pub fn levels_for_cluster_count(clusters: usize) -> usize {
    ((clusters as f64).powf(1.0 / DIM as f64).round() as usize).max(1)
}

/// Random (Forgy) initialization: `k` distinct batch points drawn without
/// replacement.
pub fn random_init<R: Rng>(
    batch: &[NormalizedPoint],
    k: usize,
    rng: &mut R,
) -> Result<Vec<NormalizedPoint>> {
    if batch.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: batch.len(),
            context: "random_init needs at least k points",
        });
    }
    let idx = rand::seq::index::sample(rng, batch.len(), k);
    Ok(idx.iter().map(|i| batch[i]).collect())
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn lloyd_objective(points: &[NormalizedPoint], centroids: &[NormalizedPoint]) -> f64 {
    points
        .iter()
        .map(|p| {
            let (_, d) = nearest_centroid(p, centroids);
            d * d
        })
        .sum()
}

/// Lloyd's k-means from the given initial centroids.
///
/// Iterates assignment and mean updates until the largest centroid
/// displacement drops below `tol` or `max_iters` is reached. A cluster left
/// empty by an update is re-seeded at the batch point currently farthest from
/// its own centroid (each re-seed consumes a distinct point), which keeps
/// every final cluster non-empty. The returned model's `assignments` are a
/// final nearest-centroid pass over the converged centroids.
pub fn kmeans_offline(
    batch: &[NormalizedPoint],
    init: &[NormalizedPoint],
    max_iters: usize,
    tol: f64,
    normalizer: &FeatureNormalizer,
) -> Result<ClusterModel> {
    let k = init.len();
    if k == 0 || k > batch.len() {
        return Err(Error::InsufficientData {
            needed: k.max(1),
            got: batch.len(),
            context: "kmeans_offline needs 1 <= clusters <= points",
        });
    }
    let mut centroids: Vec<NormalizedPoint> = init.to_vec();
    let mut assign = vec![0usize; batch.len()];
    let mut iterations_used = 0usize;

    for iter in 1..=max_iters.max(1) {
        iterations_used = iter;
        for (pi, p) in batch.iter().enumerate() {
            assign[pi] = nearest_centroid(p, &centroids).0;
        }
        let mut sums = vec![[0.0f64; DIM]; k];
        let mut counts = vec![0usize; k];
        for (pi, p) in batch.iter().enumerate() {
            let a = assign[pi];
            counts[a] += 1;
            for d in 0..DIM {
                sums[a][d] += p.0[d];
            }
        }
        let mut new_centroids = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let mut m = [0.0; DIM];
                for d in 0..DIM {
                    m[d] = sums[c][d] / counts[c] as f64;
                }
                new_centroids[c] = NormalizedPoint(m);
            }
        }
        // Re-seed empty clusters at the points farthest from their own
        // centroid; each re-seed takes a distinct point.
        let mut reseeded: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                let mut far_i = usize::MAX;
                let mut far_d = f64::NEG_INFINITY;
                for (pi, p) in batch.iter().enumerate() {
                    if reseeded.contains(&pi) {
                        continue;
                    }
                    let d = p.dist_sq(&new_centroids[assign[pi]]);
                    if d > far_d {
                        far_d = d;
                        far_i = pi;
                    }
                }
                new_centroids[c] = batch[far_i];
                reseeded.push(far_i);
            }
        }
        let mut max_disp = 0.0f64;
        for c in 0..k {
            max_disp = max_disp.max(new_centroids[c].dist(&centroids[c]));
        }
        centroids = new_centroids;
        if max_disp < tol {
            break;
        }
    }

    for (pi, p) in batch.iter().enumerate() {
        assign[pi] = nearest_centroid(p, &centroids).0;
    }
    let mut assign_counts = vec![0usize; k];
    for &a in &assign {
        assign_counts[a] += 1;
    }
    let silhouette = silhouette_or_zero(batch, &assign);
    Ok(ClusterModel {
        centroids,
        assignments: assign,
        normalizer: normalizer.clone(),
        silhouette,
        iterations_used,
        assign_counts,
    })
}

/// Silhouette score, or 0.0 where it is undefined (fewer than two distinct
/// labels or fewer than two points).
fn silhouette_or_zero(points: &[NormalizedPoint], assignments: &[usize]) -> f64 {
    silhouette_score(points, assignments).unwrap_or(0.0)
}

/// Mean silhouette score of `points` under `assignments`.
///
/// Per point: `a` is the mean distance to the other members of its own
/// cluster (a singleton cluster contributes 0 for its lone point), `b` is the
/// smallest mean distance to any other cluster, and the contribution is
/// `(b - a) / max(a, b)` (0 when both are 0). Labels need not be contiguous;
/// at least two distinct labels must be present.
pub fn silhouette_score(points: &[NormalizedPoint], assignments: &[usize]) -> Result<f64> {
    if points.len() != assignments.len() {
        return Err(Error::InvalidConfig(format!(
            "silhouette: {} points vs {} assignments",
            points.len(),
            assignments.len()
        )));
    }
    if points.len() < 2 {
        return Err(Error::UndefinedScore(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let max_label = *assignments.iter().max().unwrap();
    let mut sizes = vec![0usize; max_label + 1];
    for &a in assignments {
        sizes[a] += 1;
    }
    let present: Vec<usize> = (0..=max_label).filter(|&l| sizes[l] > 0).collect();
    if present.len() < 2 {
        return Err(Error::UndefinedScore(
            "only one cluster present".to_string(),
        ));
    }

    let n = points.len();
    let mut total = 0.0f64;
    // dist_sums[l] accumulates, for the current point, the summed distance to
    // every point of label l.
    let mut dist_sums = vec![0.0f64; max_label + 1];
    for i in 0..n {
        for s in dist_sums.iter_mut() {
            *s = 0.0;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            dist_sums[assignments[j]] += points[i].dist(&points[j]);
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            continue; // singleton: contributes 0
        }
        let a = dist_sums[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for &l in &present {
            if l != own {
                b = b.min(dist_sums[l] / sizes[l] as f64);
            }
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Which path `classify_online` took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifyPath {
    /// Empty batch: nothing to do.
    Empty,
    /// Batch silhouette cleared the threshold; nearest-centroid labels with
    /// incremental centroid updates for far-off points.
    Online,
    /// Batch silhouette fell below the threshold; history plus batch were
    /// re-clustered from scratch.
    Recluster,
}

/// Thresholds and re-fit settings for the online phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    /// Silhouette floor for accepting the batch on the online path.
    pub silhouette_threshold: f64,
    /// Distance at or above which an assigned point nudges its centroid.
    pub drift_threshold: f64,
    /// Per-feature level count used when re-clustering.
    pub levels: usize,
    /// Lloyd iteration cap for re-clustering.
    pub max_iters: usize,
    /// Lloyd convergence tolerance for re-clustering.
    pub tol: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            silhouette_threshold: 0.9,
            drift_threshold: 0.1,
            levels: 3,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Result of the online phase for one batch.
#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    /// The model after the batch (updated centroids or a full re-fit).
    pub model: ClusterModel,
    /// Cluster label per batch point. On the online path these are the
    /// induced nearest-centroid labels; on the re-cluster path they come from
    /// the re-fitted model.
    pub labels: Vec<usize>,
    pub path: ClassifyPath,
    /// Silhouette of the batch under the induced assignment (1.0 when the
    /// batch is too small or lands in a single cluster, which counts as
    /// consistent with the current scheme).
    pub batch_score: f64,
}

/// Classify one online batch against the current model.
///
/// The batch is assigned to nearest centroids and its silhouette under that
/// induced assignment is compared to the threshold. Above the threshold the
/// labels stand and each point at distance >= `drift_threshold` from its
/// centroid pulls it by an incremental-mean step (the running assignment
/// counts grow by every assigned point). Below the threshold, history plus
/// batch are re-clustered from a fresh level-based initialization; if that
/// candidate scores worse than the old centroids re-based on the combined
/// data, the re-base wins, so re-clustering never lowers the score of the
/// data that triggered it.
pub fn classify_online(
    model: &ClusterModel,
    new_batch: &[NormalizedPoint],
    cfg: &OnlineConfig,
    history: &[NormalizedPoint],
) -> Result<OnlineOutcome> {
    if new_batch.is_empty() {
        return Ok(OnlineOutcome {
            model: model.clone(),
            labels: Vec::new(),
            path: ClassifyPath::Empty,
            batch_score: 1.0,
        });
    }

    let induced: Vec<usize> = new_batch.iter().map(|p| model.classify(p)).collect();
    let distinct = {
        let mut labels: Vec<usize> = induced.clone();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    };
    let batch_score = if new_batch.len() < 2 || distinct < 2 {
        1.0
    } else {
        silhouette_score(new_batch, &induced)?
    };

    if batch_score >= cfg.silhouette_threshold {
        let mut updated = model.clone();
        for (p, &label) in new_batch.iter().zip(&induced) {
            let n = updated.assign_counts[label];
            let c = updated.centroids[label];
            if p.dist(&c) >= cfg.drift_threshold {
                let step = p.sub(&c).scale(1.0 / (n as f64 + 1.0));
                updated.centroids[label] = c.add(&step);
            }
            updated.assign_counts[label] = n + 1;
        }
        return Ok(OnlineOutcome {
            model: updated,
            labels: induced,
            path: ClassifyPath::Online,
            batch_score,
        });
    }

    // Re-cluster history plus batch.
    let mut combined: Vec<NormalizedPoint> = Vec::with_capacity(history.len() + new_batch.len());
    combined.extend_from_slice(history);
    combined.extend_from_slice(new_batch);

    // Candidate A: fresh level-based fit.
    let fresh = level_init(&combined, cfg.levels).and_then(|init| {
        kmeans_offline(&combined, &init, cfg.max_iters, cfg.tol, &model.normalizer)
    });

    // Candidate B: the old centroids re-based on the combined data. Its
    // silhouette equals the pre-re-clustering score of the same data, which
    // makes the "never hurts" guarantee unconditional.
    let rebase_assign: Vec<usize> = combined.iter().map(|p| model.classify(p)).collect();
    let mut rebase_counts = vec![0usize; model.cluster_count()];
    for &a in &rebase_assign {
        rebase_counts[a] += 1;
    }
    let rebase_silhouette = silhouette_or_zero(&combined, &rebase_assign);
    let rebase = ClusterModel {
        centroids: model.centroids.clone(),
        assignments: rebase_assign,
        normalizer: model.normalizer.clone(),
        silhouette: rebase_silhouette,
        iterations_used: 0,
        assign_counts: rebase_counts,
    };

    let chosen = match fresh {
        Ok(f) if f.silhouette >= rebase.silhouette => f,
        Ok(_) => rebase,
        Err(_) => rebase,
    };
    let labels = chosen.assignments[history.len()..].to_vec();
    Ok(OnlineOutcome {
        model: chosen,
        labels,
        path: ClassifyPath::Recluster,
        batch_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{fit_normalizer, generate_workloads, FeatureRanges};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_normalizer() -> FeatureNormalizer {
        FeatureNormalizer {
            min: [0.0; DIM],
            max: [1.0; DIM],
        }
    }

    fn uniform_points(n: usize, seed: u64) -> Vec<NormalizedPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut p = [0.0; DIM];
                for v in p.iter_mut() {
                    *v = rng.random_range(0.0..=1.0);
                }
                NormalizedPoint(p)
            })
            .collect()
    }

    fn blob(center: f64, n: usize, radius: f64, seed: u64) -> Vec<NormalizedPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut p = [0.0; DIM];
                for v in p.iter_mut() {
                    *v = center + rng.random_range(-radius..=radius);
                }
                NormalizedPoint(p)
            })
            .collect()
    }

    // ---------------------------------------------------------------- level_init

    #[test]
    fn level_init_produces_l_pow_5_distinct_centroids() {
        let batch = uniform_points(300, 1);
        let c2 = level_init(&batch, 2).unwrap();
        assert_eq!(c2.len(), 32);
        let c3 = level_init(&batch, 3).unwrap();
        assert_eq!(c3.len(), 243);
        for i in 0..c3.len() {
            for j in (i + 1)..c3.len() {
                assert!(c3[i].dist(&c3[j]) > 0.0, "duplicate centroids {i},{j}");
            }
        }
    }

    #[test]
    fn level_init_on_exact_midpoint_batch_returns_the_batch() {
        // 32 points at every combination of {0.25, 0.75} per feature. The
        // l=2 interval midpoints are {0.375, 0.625} per feature, and the
        // nearest batch point to each midpoint combination is the matching
        // vertex, so the returned centroids are exactly the batch points.
        let mut batch = Vec::new();
        for cell in 0..32 {
            let mut p = [0.0; DIM];
            for k in 0..DIM {
                p[k] = if (cell >> (DIM - 1 - k)) & 1 == 0 { 0.25 } else { 0.75 };
            }
            batch.push(NormalizedPoint(p));
        }
        let centroids = level_init(&batch, 2).unwrap();
        assert_eq!(centroids.len(), 32);
        for (cell, c) in centroids.iter().enumerate() {
            assert_eq!(c, &batch[cell], "cell {cell}");
        }
    }

    #[test]
    fn level_init_chosen_points_mostly_inside_their_cell() {
        // Brute-force oracle: recompute the equal-frequency cuts and check
        // the chosen point of each cell lies within the cell's own interval
        // in every feature, for at least 90% of cells; also replay the
        // nearest-unused-point scan.
        let batch = uniform_points(1000, 2);
        let levels = 2;
        let centroids = level_init(&batch, levels).unwrap();

        let cuts = level_cuts(&batch, levels);
        let mut in_cell = 0;
        for (cell, c) in centroids.iter().enumerate() {
            let mut rem = cell;
            let mut digits = [0usize; DIM];
            for k in (0..DIM).rev() {
                digits[k] = rem % levels;
                rem /= levels;
            }
            let inside = (0..DIM).all(|k| {
                c.0[k] >= cuts[k][digits[k]] - 1e-12 && c.0[k] <= cuts[k][digits[k] + 1] + 1e-12
            });
            if inside {
                in_cell += 1;
            }
        }
        assert!(in_cell >= 29, "only {in_cell}/32 centroids inside their cell");

        // Replay: greedy nearest-unused scan must reproduce the output.
        let mut used = vec![false; batch.len()];
        for (cell, expected) in centroids.iter().enumerate() {
            let mut rem = cell;
            let mut m = [0.0; DIM];
            for k in (0..DIM).rev() {
                m[k] = 0.5 * (cuts[k][rem % levels] + cuts[k][rem % levels + 1]);
                rem /= levels;
            }
            let target = NormalizedPoint(m);
            let (mut bi, mut bd) = (usize::MAX, f64::INFINITY);
            for (i, p) in batch.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let d = p.dist_sq(&target);
                if d < bd {
                    bd = d;
                    bi = i;
                }
            }
            used[bi] = true;
            assert_eq!(expected, &batch[bi], "cell {cell}");
        }
    }

    #[test]
    fn level_init_rejects_small_batches() {
        let batch = uniform_points(31, 3);
        assert!(matches!(
            level_init(&batch, 2),
            Err(Error::InsufficientData { needed: 32, .. })
        ));
    }

    #[test]
    fn levels_from_cluster_count_inverts_fifth_power() {
        assert_eq!(levels_for_cluster_count(32), 2);
        assert_eq!(levels_for_cluster_count(243), 3);
        assert_eq!(levels_for_cluster_count(1024), 4);
        assert_eq!(levels_for_cluster_count(1), 1);
    }

    // ------------------------------------------------------------------- kmeans

    #[test]
    fn kmeans_fixed_point_converges_in_one_iteration() {
        let masses = [0.1, 0.5, 0.9];
        let mut batch = Vec::new();
        for &m in &masses {
            for _ in 0..10 {
                batch.push(NormalizedPoint([m; DIM]));
            }
        }
        let init: Vec<NormalizedPoint> = masses.iter().map(|&m| NormalizedPoint([m; DIM])).collect();
        let model = kmeans_offline(&batch, &init, 100, 1e-6, &unit_normalizer()).unwrap();
        assert_eq!(model.iterations_used, 1);
        for (c, &m) in model.centroids.iter().zip(&masses) {
            assert_eq!(c, &NormalizedPoint([m; DIM]));
        }
    }

    #[test]
    fn kmeans_two_masses_recovers_mass_means() {
        let delta = 0.02;
        let mut batch = blob(0.15, 40, delta, 4);
        batch.extend(blob(0.85, 40, delta, 5));
        // Brute-force oracle: the true mass means.
        let mean = |pts: &[NormalizedPoint]| {
            let mut m = [0.0; DIM];
            for p in pts {
                for k in 0..DIM {
                    m[k] += p.0[k];
                }
            }
            for v in m.iter_mut() {
                *v /= pts.len() as f64;
            }
            NormalizedPoint(m)
        };
        let lo_mean = mean(&batch[..40]);
        let hi_mean = mean(&batch[40..]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = random_init(&batch, 2, &mut rng).unwrap();
        let model = kmeans_offline(&batch, &init, 100, 1e-9, &unit_normalizer()).unwrap();
        // Match each final centroid to its nearest mass mean.
        for target in [lo_mean, hi_mean] {
            let closest = model
                .centroids
                .iter()
                .map(|c| c.dist(&target))
                .fold(f64::INFINITY, f64::min);
            assert!(closest <= delta, "centroid {closest} away from a mass mean");
        }
        assert!(model.silhouette > 0.9);
    }

    #[test]
    fn kmeans_objective_never_increases() {
        let batch = uniform_points(300, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let init = random_init(&batch, 8, &mut rng).unwrap();
        let mut prev = f64::INFINITY;
        for iters in 1..=15 {
            let model = kmeans_offline(&batch, &init, iters, 0.0, &unit_normalizer()).unwrap();
            let obj = lloyd_objective(&batch, &model.centroids);
            assert!(
                obj <= prev + 1e-9,
                "objective rose from {prev} to {obj} at iteration {iters}"
            );
            prev = obj;
        }
    }

    #[test]
    fn kmeans_reseeds_empty_clusters() {
        let mut batch = blob(0.1, 10, 0.02, 8);
        batch.extend(blob(0.9, 10, 0.02, 9));
        // The middle centroid captures nothing on the first assignment.
        let init = vec![
            NormalizedPoint([0.1; DIM]),
            NormalizedPoint([0.5; DIM]),
            NormalizedPoint([0.9; DIM]),
        ];
        let model = kmeans_offline(&batch, &init, 100, 1e-9, &unit_normalizer()).unwrap();
        for (c, &n) in model.assign_counts.iter().enumerate() {
            assert!(n > 0, "cluster {c} ended empty");
        }
        assert_eq!(model.assignments.len(), 20);
    }

    #[test]
    fn nearest_centroid_ties_break_to_lowest_index() {
        let centroids = vec![NormalizedPoint([0.2; DIM]), NormalizedPoint([0.8; DIM])];
        let (label, _) = nearest_centroid(&NormalizedPoint([0.5; DIM]), &centroids);
        assert_eq!(label, 0);
    }

    #[test]
    fn kmeans_assignments_match_final_centroids() {
        let batch = uniform_points(200, 10);
        let init = level_init(&batch, 2).unwrap();
        let model = kmeans_offline(&batch, &init, 100, 1e-6, &unit_normalizer()).unwrap();
        for (pi, p) in batch.iter().enumerate() {
            assert_eq!(model.assignments[pi], nearest_centroid(p, &model.centroids).0);
        }
        let total: usize = model.assign_counts.iter().sum();
        assert_eq!(total, batch.len());
    }

    // --------------------------------------------------------------- silhouette

    /// Independent brute-force silhouette used as the test oracle.
    fn brute_silhouette(points: &[NormalizedPoint], labels: &[usize]) -> f64 {
        let n = points.len();
        let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
        let mut total = 0.0;
        for i in 0..n {
            let own = labels[i];
            let own_size = labels.iter().filter(|&&l| l == own).count();
            if own_size == 1 {
                continue;
            }
            let a = (0..n)
                .filter(|&j| j != i && labels[j] == own)
                .map(|j| points[i].dist(&points[j]))
                .sum::<f64>()
                / (own_size - 1) as f64;
            let mut b = f64::INFINITY;
            for &l in &distinct {
                if l == own {
                    continue;
                }
                let size = labels.iter().filter(|&&x| x == l).count();
                let mean = (0..n)
                    .filter(|&j| labels[j] == l)
                    .map(|j| points[i].dist(&points[j]))
                    .sum::<f64>()
                    / size as f64;
                b = b.min(mean);
            }
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
        total / n as f64
    }

    fn line_point(x: f64) -> NormalizedPoint {
        let mut p = [0.0; DIM];
        p[0] = x;
        NormalizedPoint(p)
    }

    #[test]
    fn silhouette_two_tight_pairs_is_high() {
        let pts = vec![line_point(0.0), line_point(0.01), line_point(0.99), line_point(1.0)];
        let labels = vec![0, 0, 1, 1];
        let s = silhouette_score(&pts, &labels).unwrap();
        assert!(s >= 0.97, "score {s}");
        let oracle = brute_silhouette(&pts, &labels);
        assert!((s - oracle).abs() <= 1e-12);
        // Hand value for the first point: a = 0.01, b = (0.99 + 1.0)/2.
        let expect = {
            let s0 = (0.995 - 0.01) / 0.995;
            let s1 = (0.985 - 0.01) / 0.985;
            (2.0 * s0 + 2.0 * s1) / 4.0
        };
        assert!((s - expect).abs() <= 1e-12);
    }

    #[test]
    fn silhouette_identical_points_per_cluster_is_one() {
        let pts = vec![line_point(0.2), line_point(0.2), line_point(0.7), line_point(0.7)];
        let labels = vec![0, 0, 1, 1];
        assert_eq!(silhouette_score(&pts, &labels).unwrap(), 1.0);
    }

    #[test]
    fn silhouette_interleaved_clusters_not_positive() {
        let pts: Vec<NormalizedPoint> = (0..8).map(|i| line_point(i as f64 * 0.1)).collect();
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let s = silhouette_score(&pts, &labels).unwrap();
        assert!(s <= 0.0, "score {s}");
    }

    #[test]
    fn silhouette_singleton_contributes_zero() {
        let pts = vec![line_point(0.0), line_point(0.9), line_point(1.0)];
        let labels = vec![0, 1, 1];
        let s = silhouette_score(&pts, &labels).unwrap();
        let oracle = brute_silhouette(&pts, &labels);
        assert!((s - oracle).abs() <= 1e-12);
        // Point 0 is a singleton (contributes 0); the pair is tight and far
        // from it, so the mean is 2/3 of nearly 1.
        assert!(s > 0.5 && s < 0.67);
    }

    #[test]
    fn silhouette_single_cluster_is_error() {
        let pts = vec![line_point(0.1), line_point(0.2)];
        assert!(matches!(
            silhouette_score(&pts, &[3, 3]),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn silhouette_matches_bruteforce_on_random_instances() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = rng.random_range(5..=50);
            let k = rng.random_range(2..=5usize);
            let pts = uniform_points(n, 200 + seed);
            // Force at least two distinct labels.
            let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let s = silhouette_score(&pts, &labels).unwrap();
            let oracle = brute_silhouette(&pts, &labels);
            assert!(
                (s - oracle).abs() <= 1e-12,
                "seed {seed}: {s} vs oracle {oracle}"
            );
        }
    }

    // ----------------------------------------------------------- classify_online

    fn two_blob_model() -> (ClusterModel, Vec<NormalizedPoint>) {
        let mut batch = blob(0.2, 40, 0.03, 20);
        batch.extend(blob(0.8, 40, 0.03, 21));
        let init = vec![NormalizedPoint([0.2; DIM]), NormalizedPoint([0.8; DIM])];
        let model = kmeans_offline(&batch, &init, 100, 1e-9, &unit_normalizer()).unwrap();
        (model, batch)
    }

    #[test]
    fn online_path_taken_for_tight_batches() {
        let (model, history) = two_blob_model();
        let mut newb = blob(0.2, 10, 0.03, 22);
        newb.extend(blob(0.8, 10, 0.03, 23));
        let cfg = OnlineConfig::default();
        let out = classify_online(&model, &newb, &cfg, &history).unwrap();
        assert_eq!(out.path, ClassifyPath::Online);
        assert!(out.batch_score >= 0.9, "score {}", out.batch_score);
        assert_eq!(out.model.cluster_count(), model.cluster_count());
        for (i, &l) in out.labels.iter().enumerate() {
            assert_eq!(l, if i < 10 { 0 } else { 1 });
        }
    }

    #[test]
    fn point_at_centroid_leaves_centroids_unchanged() {
        let (model, history) = two_blob_model();
        let newb = vec![model.centroids[0]];
        let cfg = OnlineConfig::default();
        let out = classify_online(&model, &newb, &cfg, &history).unwrap();
        assert_eq!(out.path, ClassifyPath::Online);
        assert_eq!(out.model.centroids, model.centroids);
        assert_eq!(out.model.assign_counts[0], model.assign_counts[0] + 1);
    }

    #[test]
    fn far_point_nudges_only_its_centroid() {
        let (model, history) = two_blob_model();
        let c0 = model.centroids[0];
        let mut far = c0;
        far.0[0] += 0.5; // distance 0.5 >= drift threshold, still nearer c0
        let far = NormalizedPoint(far.0);
        let cfg = OnlineConfig::default();
        let out = classify_online(&model, &[far], &cfg, &history).unwrap();
        assert_eq!(out.path, ClassifyPath::Online);
        assert_eq!(out.labels, vec![0]);
        let n = model.assign_counts[0] as f64;
        let expected = c0.add(&far.sub(&c0).scale(1.0 / (n + 1.0)));
        assert_eq!(out.model.centroids[0], expected);
        assert_eq!(out.model.centroids[1], model.centroids[1]);
    }

    #[test]
    fn empty_batch_is_a_noop() {
        let (model, history) = two_blob_model();
        let cfg = OnlineConfig::default();
        let out = classify_online(&model, &[], &cfg, &history).unwrap();
        assert_eq!(out.path, ClassifyPath::Empty);
        assert!(out.labels.is_empty());
        assert_eq!(out.model, model);
    }

    #[test]
    fn scattered_batch_triggers_reclustering_and_never_hurts() {
        let (model, history) = two_blob_model();
        let newb = uniform_points(60, 24);
        let cfg = OnlineConfig {
            levels: 2,
            ..OnlineConfig::default()
        };
        let out = classify_online(&model, &newb, &cfg, &history).unwrap();
        assert_eq!(out.path, ClassifyPath::Recluster);
        assert!(out.batch_score < cfg.silhouette_threshold);
        assert_eq!(out.labels.len(), newb.len());

        // The chosen model's silhouette on history + batch must not be below
        // the old model's induced score on the same data.
        let mut combined = history.clone();
        combined.extend_from_slice(&newb);
        let induced: Vec<usize> = combined.iter().map(|p| model.classify(p)).collect();
        let old_score = silhouette_score(&combined, &induced).unwrap();
        assert!(
            out.model.silhouette >= old_score - 1e-9,
            "recluster hurt the score: {} < {}",
            out.model.silhouette,
            old_score
        );
    }

    #[test]
    fn model_json_round_trip() {
        let ranges = FeatureRanges {
            cpu_flop: (2.0e8, 4.0e9),
            io_iop: (1.0e3, 2.0e4),
            e2e_s: (0.5, 2.0),
            size_bytes: (1.0e5, 4.0e6),
            per: (1.0e-3, 1.0e-1),
        };
        let batch = generate_workloads(100, &ranges, 33).unwrap();
        let norm = fit_normalizer(&batch).unwrap();
        let pts = norm.normalize_batch(&batch);
        let init = level_init(&pts, 2).unwrap();
        let model = kmeans_offline(&pts, &init, 100, 1e-6, &norm).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ClusterModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }
}
