use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::corpus::{Corpus, Domain, Split};
use crate::error::{Error, Result};
use crate::mixup::batch_domain_distance;
use crate::model::{Modality, ModelParams};

/// Top-2 principal components of a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// `2 x dim`, unit rows. Each is signed so its largest-magnitude entry
    /// is positive.
    pub components: Tensor,
    /// Eigenvalues of the sample covariance, descending.
    pub explained_variance: [f64; 2],
    pub mean: Vec<f64>,
    /// `n x 2` projections of the centered points.
    pub coordinates: Tensor,
}

impl Pca {
    /// Rank-2 approximation of the input rows.
    pub fn reconstruct(&self) -> Tensor {
        let (n, dim) = (self.coordinates.rows(), self.mean.len());
        let mut data = Vec::with_capacity(n * dim);
        for row in self.coordinates.iter_rows() {
            for d in 0..dim {
                data.push(self.mean[d] + row[0] * self.components.get(0, d) + row[1] * self.components.get(1, d));
            }
        }
        Tensor::new(vec![n, dim], data).expect("pca shape")
    }
}

/// PCA through the eigendecomposition of the sample covariance
/// (`n - 1` normalization).
pub fn pca_2d(points: &Tensor) -> Result<Pca> {
    if points.rank() != 2 || points.rows() < 2 || points.cols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pca needs at least 2 points of dimension >= 2, got shape {:?}",
            points.shape()
        )));
    }
    let (n, dim) = (points.rows(), points.cols());
    let x = DMatrix::from_row_slice(n, dim, points.data());
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, dim, |r, c| x[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(2 * dim);
    for &k in &order[..2] {
        let v = eig.eigenvectors.column(k);
        let pivot = v.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|e| sign * e));
    }
    let components = Tensor::new(vec![2, dim], components)?;
    let mut coords = Vec::with_capacity(2 * n);
    for r in 0..n {
        for k in 0..2 {
            coords.push((0..dim).map(|c| centered[(r, c)] * components.get(k, c)).sum());
        }
    }
    Ok(Pca {
        components,
        explained_variance: [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]],
        mean: mean.iter().copied().collect(),
        coordinates: Tensor::new(vec![n, 2], coords)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub domain: Domain,
    pub modality: Modality,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    /// Batch-mean distance between source and target recipe embeddings.
    pub recipe_distance: f64,
    /// Batch-mean distance between target recipe and image embeddings.
    pub modality_distance: f64,
    pub samples: usize,
    pub explained_variance: [f64; 2],
    /// Source recipes, then target recipes, then target images.
    pub points: Vec<ProjectedPoint>,
}

impl DiagnosticsReport {
    pub fn summary_csv(&self) -> String {
        format!(
            "samples,recipe_distance,modality_distance,explained_variance_1,explained_variance_2\n{},{},{},{},{}\n",
            self.samples,
            self.recipe_distance,
            self.modality_distance,
            self.explained_variance[0],
            self.explained_variance[1]
        )
    }

    pub fn projection_csv(&self) -> String {
        let mut out = String::from("x,y,domain,modality\n");
        for p in &self.points {
            let domain = match p.domain {
                Domain::Source => "source",
                Domain::Target => "target",
            };
            let modality = match p.modality {
                Modality::Recipe => "recipe",
                Modality::Image => "image",
            };
            let _ = writeln!(out, "{},{},{domain},{modality}", p.x, p.y);
        }
        out
    }
}

fn stack(parts: &[&Tensor]) -> Result<Tensor> {
    let rows: Vec<&[f64]> = parts.iter().flat_map(|t| t.iter_rows()).collect();
    Tensor::from_rows(&rows)
}

/// Domain-gap diagnostics on `n` samples per set: source recipes, target
/// recipes (training and test), and target test image/recipe pairs.
pub fn diagnose(params: &ModelParams, corpus: &Corpus, n: usize, seed: u64) -> Result<DiagnosticsReport> {
    let source = corpus.source_pairs();
    let target: Vec<_> = corpus.records().iter().filter(|r| r.domain() == Domain::Target).collect();
    let test = corpus.target_test();
    let available = source.len().min(target.len()).min(test.len());
    if n == 0 || n > available {
        return Err(Error::InvalidArgument(format!(
            "sample count {n} must lie in 1..={available}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |len: usize| index::sample(&mut rng, len, n).into_vec();
    let (si, ti, pi) = (pick(source.len()), pick(target.len()), pick(test.len()));

    let source_emb = params.embed_recipes(si.iter().map(|&i| source[i].model_features()), Domain::Source)?;
    let target_emb = params.embed_recipes(ti.iter().map(|&i| target[i].model_features()), Domain::Target)?;
    let pair_recipes = params.embed_recipes(pi.iter().map(|&i| test[i].model_features()), Domain::Target)?;
    let pair_images = params.embed_images(
        pi.iter().map(|&i| test[i].image().expect("test pairs carry images")),
        Domain::Target,
    )?;
    debug_assert!(pi.iter().all(|&i| test[i].split == Split::TargetTest));

    let recipe_distance = batch_domain_distance(&source_emb.matrix, &target_emb.matrix)?;
    let modality_distance = batch_domain_distance(&pair_recipes.matrix, &pair_images.matrix)?;

    let all = stack(&[&source_emb.matrix, &target_emb.matrix, &pair_images.matrix])?;
    let pca = pca_2d(&all)?;
    let tags = [
        (Domain::Source, Modality::Recipe),
        (Domain::Target, Modality::Recipe),
        (Domain::Target, Modality::Image),
    ];
    let points = pca
        .coordinates
        .iter_rows()
        .enumerate()
        .map(|(i, c)| {
            let (domain, modality) = tags[i / n];
            ProjectedPoint {
                x: c[0],
                y: c[1],
                domain,
                modality,
            }
        })
        .collect();
    Ok(DiagnosticsReport {
        recipe_distance,
        modality_distance,
        samples: n,
        explained_variance: pca.explained_variance,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_points_reconstruct_exactly() {
        let (u, v) = ([1.0, 2.0, 0.0, -1.0], [0.0, 1.0, 1.0, 3.0]);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let (a, b) = ((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos());
                (0..4).map(|d| 0.5 + a * u[d] + b * v[d]).collect()
            })
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let pca = pca_2d(&x).unwrap();
        let back = pca.reconstruct();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(pca.explained_variance[0] >= pca.explained_variance[1]);
    }

    #[test]
    fn pca_rejects_degenerate_input() {
        assert!(pca_2d(&Tensor::zeros(&[1, 3])).is_err());
    }
}
