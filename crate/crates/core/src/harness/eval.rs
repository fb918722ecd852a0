use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::corpus::{Corpus, Domain};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Recall depths reported by [`evaluate`].
pub const RECALL_DEPTHS: [usize; 4] = [1, 5, 10, 50];

/// Metrics of one query subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub medr: f64,
    /// Percentages at [`RECALL_DEPTHS`].
    pub recall: [f64; 4],
}

impl RetrievalMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let mut recall = [0.0; 4];
        for (r, &k) in recall.iter_mut().zip(&RECALL_DEPTHS) {
            *r = recall_at_k(ranks, k)?;
        }
        Ok(RetrievalMetrics {
            medr: median_rank(ranks)?,
            recall,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over repeats.
    pub mean: RetrievalMetrics,
    pub q: usize,
    pub t: usize,
    pub seed: u64,
    pub repeats: Vec<RetrievalMetrics>,
}

impl EvalReport {
    pub fn medr(&self) -> f64 {
        self.mean.medr
    }

    /// Mean recall at depth `k`, one of [`RECALL_DEPTHS`].
    pub fn recall(&self, k: usize) -> Option<f64> {
        RECALL_DEPTHS.iter().position(|&d| d == k).map(|i| self.mean.recall[i])
    }

    /// One row per repeat followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("repeat,q,medr,r1,r5,r10,r50\n");
        let mut row = |label: &str, m: &RetrievalMetrics| {
            let _ = writeln!(
                out,
                "{label},{},{},{},{},{},{}",
                self.q, m.medr, m.recall[0], m.recall[1], m.recall[2], m.recall[3]
            );
        };
        for (i, m) in self.repeats.iter().enumerate() {
            row(&(i + 1).to_string(), m);
        }
        row("mean", &self.mean);
        out
    }
}

/// Median of the ranks; the mean of the two middle values for even counts.
pub fn median_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("median of no ranks".into()));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    })
}

/// Percentage of ranks at most `k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("recall of no ranks".into()));
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(100.0 * hits as f64 / ranks.len() as f64)
}

/// Rank of gallery item `i` for query `i`, by descending similarity. Ties
/// go to the lower gallery index.
pub fn ground_truth_ranks(similarity: &Tensor) -> Result<Vec<usize>> {
    if similarity.rank() != 2 || similarity.rows() != similarity.cols() {
        return Err(Error::shape("ground_truth_ranks", similarity.shape(), similarity.shape()));
    }
    Ok(similarity
        .iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let gt = row[i];
            1 + row
                .iter()
                .enumerate()
                .filter(|&(j, &s)| s > gt || (s == gt && j < i))
                .count()
        })
        .collect())
}

/// Cosine similarities between the rows of `queries` and of `gallery`.
pub fn cosine_similarity(queries: &Tensor, gallery: &Tensor) -> Result<Tensor> {
    if queries.rank() != 2 || gallery.rank() != 2 || queries.cols() != gallery.cols() {
        return Err(Error::shape("cosine_similarity", queries.shape(), gallery.shape()));
    }
    let unit = |t: &Tensor| -> Vec<Vec<f64>> {
        t.iter_rows()
            .map(|r| {
                let n = crate::autodiff::norm(r);
                r.iter().map(|v| if n > 0.0 { v / n } else { 0.0 }).collect()
            })
            .collect()
    };
    let (q, g) = (unit(queries), unit(gallery));
    let data = q
        .iter()
        .flat_map(|a| g.iter().map(move |b| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()))
        .collect();
    Tensor::new(vec![q.len(), g.len()], data)
}

/// Image-to-recipe retrieval on the target test pairs. Each repeat draws `q`
/// pairs without replacement; image queries rank the recipes of the same
/// subset.
pub fn evaluate(params: &ModelParams, corpus: &Corpus, q: usize, t: usize, seed: u64) -> Result<EvalReport> {
    let test = corpus.target_test();
    if q == 0 || q > test.len() {
        return Err(Error::InvalidArgument(format!(
            "subset size {q} must lie in 1..={}",
            test.len()
        )));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("repeat count must be >= 1".into()));
    }
    let images: Vec<&[f64]> = test
        .iter()
        .map(|r| r.image().ok_or_else(|| Error::InvalidArgument(format!("test recipe {} has no image", r.id))))
        .collect::<Result<_>>()?;
    let image_emb = params.embed_images(images, Domain::Target)?.matrix;
    let recipe_emb = params.embed_recipes(test.iter().map(|r| r.model_features()), Domain::Target)?.matrix;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut repeats = Vec::with_capacity(t);
    for _ in 0..t {
        let subset = index::sample(&mut rng, test.len(), q).into_vec();
        let sim = cosine_similarity(&image_emb.select_rows(&subset)?, &recipe_emb.select_rows(&subset)?)?;
        repeats.push(RetrievalMetrics::from_ranks(&ground_truth_ranks(&sim)?)?);
    }
    let n = t as f64;
    let mut mean = RetrievalMetrics {
        medr: repeats.iter().map(|m| m.medr).sum::<f64>() / n,
        recall: [0.0; 4],
    };
    for (k, r) in mean.recall.iter_mut().enumerate() {
        *r = repeats.iter().map(|m| m.recall[k]).sum::<f64>() / n;
    }
    Ok(EvalReport {
        mean,
        q,
        t,
        seed,
        repeats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_recall_definitions() {
        assert_eq!(median_rank(&[1, 3, 7]).unwrap(), 3.0);
        assert_eq!(median_rank(&[4, 1]).unwrap(), 2.5);
        assert_eq!(median_rank(&[5]).unwrap(), 5.0);
        assert!(median_rank(&[]).is_err());
        assert!((recall_at_k(&[1, 3, 7], 5).unwrap() - 66.666_666).abs() < 1e-3);
        assert!((recall_at_k(&[1, 3, 7], 1).unwrap() - 33.333_333).abs() < 1e-3);
        assert_eq!(recall_at_k(&[2, 9, 4], 9).unwrap(), 100.0);
        assert!(recall_at_k(&[], 1).is_err());
    }

    #[test]
    fn perfect_retrieval() {
        let sim = cosine_similarity(&Tensor::identity(4), &Tensor::identity(4)).unwrap();
        let ranks = ground_truth_ranks(&sim).unwrap();
        assert_eq!(ranks, vec![1; 4]);
        let m = RetrievalMetrics::from_ranks(&ranks).unwrap();
        assert_eq!(m.medr, 1.0);
        assert_eq!(m.recall[0], 100.0);
    }

    #[test]
    fn ties_break_by_gallery_index() {
        let sim = Tensor::from_rows(&[[0.5, 0.5, 0.1], [0.5, 0.5, 0.1], [0.2, 0.9, 0.2]]).unwrap();
        assert_eq!(ground_truth_ranks(&sim).unwrap(), vec![1, 2, 3]);
    }
}
