use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seeding, Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 300;

/// One-dimensional k-means over returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// Ascending, so label 0 is the lowest-return cluster.
    pub centroids: Vec<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub silhouette: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn predict(&self, value: f64) -> usize {
        nearest(&self.centroids, value)
    }

    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (j, c) in centroids.iter().enumerate() {
        if (v - c).abs() < (v - centroids[best]).abs() {
            best = j;
        }
    }
    best
}

fn inertia_of(points: &[f64], centroids: &[f64], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| (p - centroids[l]).powi(2))
        .sum()
}

fn plus_plus<R: Rng>(points: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|&p| {
                centroids
                    .iter()
                    .map(|c| (p - c).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // fewer distinct values than k
            centroids.push(points[rng.random_range(0..points.len())]);
            continue;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(points[pick]);
    }
    centroids
}

struct Run {
    centroids: Vec<f64>,
    labels: Vec<usize>,
    inertia: f64,
    history: Vec<f64>,
}

fn lloyd(points: &[f64], mut centroids: Vec<f64>) -> Run {
    let k = centroids.len();
    let mut labels: Vec<usize> = points.iter().map(|&p| nearest(&centroids, p)).collect();
    let mut history = vec![inertia_of(points, &centroids, &labels)];
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p;
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j] / counts[j] as f64;
            }
        }
        let next: Vec<usize> = points
            .iter()
            .zip(&labels)
            .map(|(&p, &l)| {
                let j = nearest(&centroids, p);
                // keep the current label on exact ties so assignments settle
                if (p - centroids[j]).abs() < (p - centroids[l]).abs() {
                    j
                } else {
                    l
                }
            })
            .collect();
        history.push(inertia_of(points, &centroids, &next));
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = inertia_of(points, &centroids, &labels);
    Run {
        centroids,
        labels,
        inertia,
        history,
    }
}

/// Mean silhouette. Singleton clusters score 0.
pub fn silhouette(points: &[f64], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n < 2 || k < 2 {
        return 0.0;
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            sums[labels[j]] += (points[i] - points[j]).abs();
        }
        let own = labels[i];
        if counts[own] <= 1 {
            continue;
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / n as f64
}

/// Best of `restarts` k-means++ seeded Lloyd runs.
pub fn kmeans_with(points: &[f64], k: usize, restarts: usize, seed: u64) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::Empty("clustering input"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("non-finite return value".into()));
    }
    let mut best: Option<Run> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seeding::rng_at(seed, &[r as u64]);
        let run = lloyd(points, plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| run.centroids[a].total_cmp(&run.centroids[b]));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let labels: Vec<usize> = run.labels.iter().map(|&l| rank[l]).collect();
    let centroids: Vec<f64> = order.iter().map(|&o| run.centroids[o]).collect();
    Ok(ClusterModel {
        k,
        silhouette: silhouette(points, &labels, k),
        centroids,
        labels,
        inertia: run.inertia,
        inertia_history: run.history,
    })
}

pub fn kmeans(points: &[f64], k: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_with(points, k, DEFAULT_RESTARTS, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    /// Knee of the inertia curve over the candidate range.
    Elbow,
    /// Highest mean silhouette.
    Silhouette,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub rule: KRule,
    pub elbow_k: usize,
    pub silhouette_k: usize,
    /// (k, silhouette) for every candidate.
    pub silhouettes: Vec<(usize, f64)>,
    /// (k, inertia), the elbow curve.
    pub inertias: Vec<(usize, f64)>,
    pub model: ClusterModel,
}

/// Candidate farthest below the straight line joining the normalised ends of
/// the inertia curve. A flat curve has no knee and yields `None`.
pub fn elbow(inertias: &[(usize, f64)]) -> Option<usize> {
    let (first, last) = (inertias.first()?, inertias.last()?);
    let (lo, hi) = inertias
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    if inertias.len() < 3 || hi - lo <= 0.0 {
        return None;
    }
    let span = (last.0 - first.0) as f64;
    let mut best = (first.0, f64::NEG_INFINITY);
    for &(k, v) in inertias {
        let x = (k - first.0) as f64 / span;
        let gap = (1.0 - x) - (v - lo) / (hi - lo);
        if gap > best.1 {
            best = (k, gap);
        }
    }
    Some(best.0)
}

/// Picks k in `[2, k_max]` from the elbow of the inertia curve, falling back
/// to the silhouette when the curve has no knee.
pub fn choose_k(points: &[f64], k_max: usize, seed: u64) -> Result<KSelection> {
    choose_k_by(points, k_max, KRule::Elbow, seed)
}

pub fn choose_k_by(points: &[f64], k_max: usize, rule: KRule, seed: u64) -> Result<KSelection> {
    if k_max < 2 {
        return Err(Error::InvalidArgument(format!("k_max = {k_max} must be at least 2")));
    }
    if points.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    let mut silhouettes = Vec::new();
    let mut inertias = Vec::new();
    let mut models = Vec::new();
    for k in 2..=k_max.min(points.len()) {
        let model = kmeans(points, k, seeding::derive(seed, &[k as u64]))?;
        silhouettes.push((k, model.silhouette));
        inertias.push((k, model.inertia));
        models.push(model);
    }
    // ties go to the smaller k
    let silhouette_k = silhouettes
        .iter()
        .fold((0, f64::NEG_INFINITY), |best, &(k, s)| if s > best.1 { (k, s) } else { best })
        .0;
    let elbow_k = elbow(&inertias).unwrap_or(silhouette_k);
    let k = match rule {
        KRule::Elbow => elbow_k,
        KRule::Silhouette => silhouette_k,
    };
    let model = models.swap_remove(k - 2);
    Ok(KSelection {
        k,
        rule,
        elbow_k,
        silhouette_k,
        silhouettes,
        inertias,
        model,
    })
}
