//! Population-level statistics: bifurcation depth `Q`, histograms and
//! convergence detection. Everything here is deterministic.

use crate::belief::{BeliefVector, BALL_TOL};
use crate::error::{Result, SimError};

/// Metrics recorded after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Time index of the state the metrics describe.
    pub t: u64,
    pub q: f64,
    pub mean_extremity: f64,
    pub mean_coverage: f64,
    pub max_delta: f64,
    pub centroids: (BeliefVector, BeliefVector),
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1000;
const LLOYD_MAX_ITER: usize = 1000;
/// An alternative fixpoint must beat the sign-seeded SSE by this much.
const SSE_MARGIN: f64 = 1e-12;

fn covariance(positions: &[BeliefVector]) -> Vec<Vec<f64>> {
    let k = positions[0].dims();
    let n = positions.len() as f64;
    let mut mean = vec![0.0; k];
    for p in positions {
        for (m, c) in mean.iter_mut().zip(p.components()) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![vec![0.0; k]; k];
    for p in positions {
        let c = p.components();
        for i in 0..k {
            let di = c[i] - mean[i];
            for j in 0..k {
                cov[i][j] += di * (c[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= n - 1.0;
        }
    }
    cov
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

/// Dominant eigenvector of the sample covariance, found by power iteration.
///
/// The sign is chosen so the first nonzero component is positive. Returns
/// `e1` for K = 1, fewer than two points, or a zero covariance.
pub fn principal_axis(positions: &[BeliefVector]) -> BeliefVector {
    let dims = positions.first().map_or(1, |p| p.dims());
    if dims == 1 || positions.len() < 2 {
        return BeliefVector::basis(dims, 0);
    }
    let cov = covariance(positions);
    // Start from the covariance column with the largest norm: it lies in the
    // range of the matrix, so it has a component along the top eigenvector
    // unless the spectrum is degenerate.
    let col_norm = |j: usize| cov.iter().map(|row| row[j] * row[j]).sum::<f64>();
    let start = (0..dims)
        .max_by(|&a, &b| col_norm(a).total_cmp(&col_norm(b)).then(b.cmp(&a)))
        .unwrap();
    if col_norm(start) == 0.0 {
        return BeliefVector::basis(dims, 0);
    }
    let mut v: Vec<f64> = cov.iter().map(|row| row[start]).collect();
    normalize(&mut v);
    for _ in 0..POWER_MAX_ITER {
        let mut next: Vec<f64> = cov
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        if normalize(&mut next) == 0.0 {
            break;
        }
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta < POWER_TOL {
            break;
        }
    }
    fix_sign(&mut v);
    BeliefVector::from_trusted(v)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
    }
    n
}

fn centroid(points: &[&[f64]], dims: usize) -> Vec<f64> {
    let mut m = vec![0.0; dims];
    for p in points {
        for (a, b) in m.iter_mut().zip(p.iter()) {
            *a += b;
        }
    }
    let n = points.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_vector(positions: &[BeliefVector]) -> BeliefVector {
    let dims = positions[0].dims();
    let pts: Vec<&[f64]> = positions.iter().map(|p| p.components()).collect();
    BeliefVector::from_trusted(centroid(&pts, dims))
}

/// Lloyd refinement from `assign` to an assignment fixpoint. Returns the
/// centroids and within-cluster SSE, or `None` if a cluster empties.
fn lloyd(pts: &[&[f64]], dims: usize, mut assign: Vec<usize>) -> Option<([Vec<f64>; 2], f64)> {
    let mut centers: [Vec<f64>; 2] = [vec![0.0; dims], vec![0.0; dims]];
    for _ in 0..LLOYD_MAX_ITER {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = pts
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| *p)
                .collect();
            if members.is_empty() {
                return None;
            }
            *center = centroid(&members, dims);
        }
        let next: Vec<usize> = pts
            .iter()
            .map(|p| usize::from(sq_dist(p, &centers[1]) < sq_dist(p, &centers[0])))
            .collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let sse = pts
        .iter()
        .zip(&assign)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum();
    Some((centers, sse))
}

/// Split of the points sorted by projection that minimizes the full-space
/// SSE, as a cluster assignment. `None` when all projections are equal.
fn best_threshold_split(pts: &[&[f64]], proj: &[f64], dims: usize) -> Option<Vec<usize>> {
    let n = pts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    let mut total = vec![0.0; dims];
    for p in pts {
        for (t, c) in total.iter_mut().zip(p.iter()) {
            *t += c;
        }
    }
    let norm_sq = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>();
    let mut prefix = vec![0.0; dims];
    let mut best: Option<(f64, usize)> = None;
    for i in 1..n {
        for (s, c) in prefix.iter_mut().zip(pts[order[i - 1]].iter()) {
            *s += c;
        }
        if proj[order[i - 1]] == proj[order[i]] {
            continue;
        }
        let rest: Vec<f64> = total.iter().zip(&prefix).map(|(t, s)| t - s).collect();
        // Sum of squared norms is common to every split, so it is dropped.
        let cost = -norm_sq(&prefix) / i as f64 - norm_sq(&rest) / (n - i) as f64;
        if best.is_none_or(|(b, _)| cost < b) {
            best = Some((cost, i));
        }
    }
    let (_, cut) = best?;
    let mut assign = vec![0usize; n];
    for &idx in &order[cut..] {
        assign[idx] = 1;
    }
    Some(assign)
}

/// Bifurcation depth: half the distance between 2-means centroids.
///
/// Clusters are seeded by the sign of each point's projection on the
/// principal axis, measured from the mean projection (falling back to a
/// median split when all signs agree), then refined with Lloyd's algorithm
/// in the full space until assignments stop changing. A second run starts
/// from the best split of the points ordered along the axis, and the
/// fixpoint with the lower SSE is kept (the sign-seeded one on ties). Ties in
/// assignment go to the first cluster. Returns `Q = 0` with both centroids at
/// the mean when the points cannot be split.
pub fn polarization_q(positions: &[BeliefVector]) -> (f64, (BeliefVector, BeliefVector)) {
    if positions.is_empty() {
        let o = BeliefVector::origin(1);
        return (0.0, (o.clone(), o));
    }
    let dims = positions[0].dims();
    let degenerate = || {
        let m = mean_vector(positions);
        (0.0, (m.clone(), m))
    };
    if positions.len() < 2 {
        return degenerate();
    }
    let axis = principal_axis(positions);
    let proj: Vec<f64> = positions.iter().map(|p| p.dot(&axis)).collect();
    let mean_proj = proj.iter().sum::<f64>() / proj.len() as f64;
    let centered: Vec<f64> = proj.iter().map(|p| p - mean_proj).collect();
    let sign_split: Vec<usize> = if centered.iter().all(|&c| c >= 0.0) || centered.iter().all(|&c| c <= 0.0) {
        // Only reachable when (up to rounding) all projections coincide.
        let mut sorted = proj.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        proj.iter().map(|&p| usize::from(p > median)).collect()
    } else {
        centered.iter().map(|&c| usize::from(c > 0.0)).collect()
    };

    let pts: Vec<&[f64]> = positions.iter().map(|p| p.components()).collect();
    let from_sign = lloyd(&pts, dims, sign_split);
    let from_threshold = best_threshold_split(&pts, &proj, dims).and_then(|a| lloyd(&pts, dims, a));
    let chosen = match (from_sign, from_threshold) {
        (Some(s), Some(t)) => Some(if t.1 < s.1 - SSE_MARGIN { t } else { s }),
        (s, t) => s.or(t),
    };
    let Some(([a, b], _)) = chosen else {
        return degenerate();
    };
    let q = (sq_dist(&a, &b).sqrt() / 2.0).min(1.0);
    (
        q,
        (BeliefVector::from_trusted(a), BeliefVector::from_trusted(b)),
    )
}

/// Counts projections onto `axis` in `bins` equal-width intervals of [-1, 1].
///
/// Intervals are left-closed except the last, which is closed on both ends;
/// a value on an interior edge goes to the bin on its right.
pub fn belief_histogram(
    positions: &[BeliefVector],
    axis: &BeliefVector,
    bins: usize,
) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(SimError::InvalidField {
            key: "bins",
            message: "must be positive".into(),
        });
    }
    let mut counts = vec![0usize; bins];
    for p in positions {
        if p.dims() != axis.dims() {
            return Err(SimError::DimensionMismatch {
                left: p.dims(),
                right: axis.dims(),
            });
        }
        let x = p.dot(axis);
        if !(-1.0 - BALL_TOL..=1.0 + BALL_TOL).contains(&x) {
            return Err(SimError::ProjectionOutOfRange { value: x });
        }
        let idx = ((x + 1.0) * bins as f64 / 2.0).floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

/// True iff the last `window` traces all moved less than `tol`.
/// `tol = None` disables detection.
pub fn has_converged(traces: &[StepTrace], tol: Option<f64>, window: usize) -> bool {
    let Some(tol) = tol else {
        return false;
    };
    if window == 0 || traces.len() < window {
        return false;
    }
    traces[traces.len() - window..]
        .iter()
        .all(|t| t.max_delta < tol)
}

/// Mean norm of the given positions (0 for an empty set).
pub fn mean_extremity(positions: &[BeliefVector]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    positions.iter().map(|p| p.norm()).sum::<f64>() / positions.len() as f64
}
