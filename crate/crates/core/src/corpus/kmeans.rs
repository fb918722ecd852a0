//! Lloyd's k-means with farthest-point seeding.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::squared_distance;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each iteration; the last entry is the
    /// final distortion.
    pub distortion_history: Vec<f64>,
    pub converged: bool,
}

impl KMeans {
    pub fn distortion(&self) -> f64 {
        *self.distortion_history.last().unwrap_or(&0.0)
    }
}

fn check(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in [1, {}]",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument("points of differing dimension".into()));
    }
    Ok(dim)
}

/// First center uniform from `seed`, then repeatedly the point farthest from
/// all chosen centers (lowest index on ties).
pub fn farthest_point_init(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..points.len());
    let mut centers = vec![points[first].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| squared_distance(p, &points[first])).collect();
    while centers.len() < k {
        let (idx, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        let c = points[idx].clone();
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(squared_distance(p, &c));
        }
        centers.push(c);
    }
    Ok(centers)
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(j, c)| (j, squared_distance(p, c)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            total += d;
            best
        })
        .collect();
    (labels, total)
}

/// Lloyd iterations from the given centroids. Stops when assignments stop
/// changing or after `max_iterations` update steps. Empty clusters keep their
/// previous centroid.
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iterations: usize) -> Result<KMeans> {
    let dim = check(points, init.len())?;
    if max_iterations == 0 {
        return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
    }
    if init.iter().any(|c| c.len() != dim) {
        return Err(Error::InvalidArgument("centroid dimension mismatch".into()));
    }
    let mut centroids = init;
    let (mut assignments, _) = assign(points, &centroids);
    let mut history = Vec::new();
    let mut converged = false;

    for _ in 0..max_iterations {
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
        let distortion: f64 = points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| squared_distance(p, &centroids[a]))
            .sum();
        history.push(distortion);

        let (next, _) = assign(points, &centroids);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    Ok(KMeans {
        centroids,
        assignments,
        distortion_history: history,
        converged,
    })
}

pub fn kmeans(points: &[Vec<f64>], k: usize, max_iterations: usize, seed: u64) -> Result<KMeans> {
    let init = farthest_point_init(points, k, seed)?;
    lloyd(points, init, max_iterations)
}
