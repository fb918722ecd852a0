//! Training objective: bidirectional triplet ranking, adversarial domain
//! loss through gradient reversal, semantic and generation losses, and their
//! weighted combination.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{discriminate, BoundParams, Modality};

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROBABILITY_EPSILON: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the mixup loss.
    pub mixup: f64,
    /// Weight of the adversarial domain loss.
    pub adversarial: f64,
    /// Weight of the semantic plus generation losses.
    pub semantic: f64,
    /// Triplet margin.
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mixup: 0.1,
            adversarial: 0.01,
            semantic: 0.002,
            margin: 0.3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("weights.mixup", self.mixup),
            ("weights.adversarial", self.adversarial),
            ("weights.semantic", self.semantic),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.margin > 0.0 && self.margin <= 2.0) {
            return Err(Error::config("weights.margin", format!("must lie in (0, 2], got {}", self.margin)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePolicy {
    /// Uniform over the other pairs of the batch.
    #[default]
    Random,
    /// The most similar non-matching item.
    Hardest,
}

impl FromStr for NegativePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(NegativePolicy::Random),
            "hardest" => Ok(NegativePolicy::Hardest),
            _ => Err(Error::config("policy", format!("unknown token `{s}` (expected random or hardest)"))),
        }
    }
}

impl fmt::Display for NegativePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativePolicy::Random => "random",
            NegativePolicy::Hardest => "hardest",
        })
    }
}

/// Anchor `i` is paired with candidate `i`; `negatives[i]` is another
/// candidate row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletIndexSet {
    pub anchor_modality: Modality,
    pub negatives: Vec<usize>,
}

impl TripletIndexSet {
    pub fn len(&self) -> usize {
        self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.negatives.is_empty()
    }

    /// `(anchor, positive, negative)` triples.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.negatives.iter().enumerate().map(|(i, &n)| (i, i, n))
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = crate::autodiff::norm(a);
    let nb = crate::autodiff::norm(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Picks one negative per anchor among the candidates of the other pairs.
pub fn sample_triplets(
    anchors: &Tensor,
    candidates: &Tensor,
    anchor_modality: Modality,
    policy: NegativePolicy,
    seed: u64,
) -> Result<TripletIndexSet> {
    if anchors.rank() != 2 || candidates.shape() != anchors.shape() {
        return Err(Error::shape("sample_triplets", anchors.shape(), candidates.shape()));
    }
    let n = anchors.rows();
    if n < 2 {
        return Err(Error::InvalidArgument("triplet sampling needs at least 2 pairs".into()));
    }
    let negatives = match policy {
        NegativePolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|i| {
                    let j = rng.gen_range(0..n - 1);
                    if j >= i {
                        j + 1
                    } else {
                        j
                    }
                })
                .collect()
        }
        NegativePolicy::Hardest => (0..n)
            .map(|i| {
                let a = anchors.row_slice(i);
                let mut best = (usize::MAX, f64::NEG_INFINITY);
                for j in (0..n).filter(|&j| j != i) {
                    let s = cosine(a, candidates.row_slice(j));
                    if s > best.1 || best.0 == usize::MAX {
                        best = (j, s);
                    }
                }
                best.0
            })
            .collect(),
    };
    Ok(TripletIndexSet {
        anchor_modality,
        negatives,
    })
}

/// Mean hinge `max(0, d(a, p) - d(a, n) + margin)` with `d = 1 - cos`.
pub fn triplet_loss(g: &mut Graph, anchors: Var, positives: Var, negatives: Var, margin: f64) -> Result<Var> {
    let a = g.normalize_rows(anchors)?;
    let p = g.normalize_rows(positives)?;
    let n = g.normalize_rows(negatives)?;
    let cos_ap = g.row_dot(a, p)?;
    let cos_an = g.row_dot(a, n)?;
    // d(a,p) - d(a,n) = cos(a,n) - cos(a,p)
    let gap = g.sub(cos_an, cos_ap)?;
    let shifted = g.add_scalar(gap, margin);
    let hinge = g.clamp_min(shifted, 0.0);
    Ok(g.mean(hinge))
}

/// Triplet loss with image anchors against recipes and recipe anchors
/// against images, averaged. Row `i` of both batches is a matching pair.
pub fn bidirectional_triplet_loss(
    g: &mut Graph,
    images: Var,
    recipes: Var,
    margin: f64,
    policy: NegativePolicy,
    seed: u64,
) -> Result<Var> {
    let (iv, rv) = (g.value(images).clone(), g.value(recipes).clone());
    let from_images = sample_triplets(&iv, &rv, Modality::Image, policy, seed)?;
    let from_recipes = sample_triplets(&rv, &iv, Modality::Recipe, policy, seed ^ 0x5851_f42d_4c95_7f2d)?;
    triplet_loss_with(g, images, recipes, &from_images, &from_recipes, margin)
}

/// Bidirectional triplet loss with fixed negatives.
pub fn triplet_loss_with(
    g: &mut Graph,
    images: Var,
    recipes: Var,
    from_images: &TripletIndexSet,
    from_recipes: &TripletIndexSet,
    margin: f64,
) -> Result<Var> {
    let neg_recipes = g.gather_rows(recipes, &from_images.negatives)?;
    let l_img = triplet_loss(g, images, recipes, neg_recipes, margin)?;
    let neg_images = g.gather_rows(images, &from_recipes.negatives)?;
    let l_rec = triplet_loss(g, recipes, images, neg_images, margin)?;
    let sum = g.add(l_img, l_rec)?;
    Ok(g.scale(sum, 0.5))
}

fn clamped_probability(g: &mut Graph, p: Var) -> Var {
    g.clamp(p, PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON)
}

fn one_minus(g: &mut Graph, p: Var) -> Var {
    let neg = g.scale(p, -1.0);
    g.add_scalar(neg, 1.0)
}

/// Both signs of the adversarial domain term.
#[derive(Clone, Copy, Debug)]
pub struct AdversarialTerms {
    /// `E[log D(source)] + E[log(1 - D(target))]`, at most 0.
    pub value: Var,
    /// Domain cross-entropy `-value`, minimized by the discriminator.
    pub domain_loss: Var,
}

/// Domain discrimination of source against target recipe embeddings.
///
/// With `reversal = Some(c)`, the embeddings pass through a gradient
/// reversal layer: the discriminator minimizes `domain_loss` while the
/// encoder receives `-c` times its gradient.
pub fn adversarial_loss(
    g: &mut Graph,
    p: &BoundParams,
    source: Var,
    target: Var,
    reversal: Option<f64>,
) -> Result<AdversarialTerms> {
    let (source, target) = match reversal {
        Some(c) => (g.reverse_gradient(source, c), g.reverse_gradient(target, c)),
        None => (source, target),
    };
    let ds = discriminate(g, p, source)?;
    let dt = discriminate(g, p, target)?;
    let ds = clamped_probability(g, ds);
    let dt = clamped_probability(g, dt);
    let log_ds = g.ln(ds);
    let not_dt = one_minus(g, dt);
    let log_not_dt = g.ln(not_dt);
    let es = g.mean(log_ds);
    let et = g.mean(log_not_dt);
    let value = g.add(es, et)?;
    let domain_loss = g.scale(value, -1.0);
    Ok(AdversarialTerms { value, domain_loss })
}

/// `rows x labels` indicator matrix of label sets.
pub fn multi_hot(labels: &[Vec<usize>], k: usize) -> Result<Tensor> {
    if labels.is_empty() || k == 0 {
        return Err(Error::InvalidArgument("multi_hot needs rows and labels".into()));
    }
    let mut t = Tensor::zeros(&[labels.len(), k]);
    for (r, set) in labels.iter().enumerate() {
        for &l in set {
            if l >= k {
                return Err(Error::InvalidArgument(format!("label {l} out of range for {k} labels")));
            }
            t.data_mut()[r * k + l] = 1.0;
        }
    }
    Ok(t)
}

/// Mean binary cross-entropy over all labels and rows.
pub fn semantic_loss(g: &mut Graph, probabilities: Var, targets: &Tensor) -> Result<Var> {
    if g.shape(probabilities) != targets.shape() {
        return Err(Error::shape("semantic_loss", g.shape(probabilities), targets.shape()));
    }
    let p = clamped_probability(g, probabilities);
    let y = g.constant(targets.clone());
    let not_y = g.constant(targets.map(|v| 1.0 - v));
    let log_p = g.ln(p);
    let not_p = one_minus(g, p);
    let log_not_p = g.ln(not_p);
    let pos = g.mul(y, log_p)?;
    let neg = g.mul(not_y, log_not_p)?;
    let ll = g.add(pos, neg)?;
    let mean = g.mean(ll);
    Ok(g.scale(mean, -1.0))
}

/// Mean over rows of the squared L2 error.
pub fn generation_loss(g: &mut Graph, generated: Var, real: Var) -> Result<Var> {
    let diff = g.sub(generated, real)?;
    if g.shape(diff) != g.shape(real) {
        return Err(Error::shape("generation_loss", g.shape(generated), g.shape(real)));
    }
    let sq = g.mul(diff, diff)?;
    let per_row = g.sum_axis(sq, Axis::Cols)?;
    Ok(g.mean(per_row))
}

/// Loss terms of one step. Terms whose weight is zero are left out.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents<T> {
    pub triplet: T,
    pub mixup: Option<T>,
    pub adversarial: Option<T>,
    pub semantic: Option<T>,
    pub generation: Option<T>,
}

/// `triplet + λ1 mixup + λ2 adversarial + λ3 (semantic + generation)`,
/// accumulated left to right.
pub fn combine(c: &LossComponents<f64>, w: &LossWeights) -> f64 {
    let mut total = c.triplet;
    if let (Some(v), true) = (c.mixup, w.mixup != 0.0) {
        total += w.mixup * v;
    }
    if let (Some(v), true) = (c.adversarial, w.adversarial != 0.0) {
        total += w.adversarial * v;
    }
    if w.semantic != 0.0 && (c.semantic.is_some() || c.generation.is_some()) {
        let aux = c.semantic.unwrap_or(0.0) + c.generation.unwrap_or(0.0);
        total += w.semantic * aux;
    }
    total
}

/// [`combine`] on the graph.
pub fn total_loss(g: &mut Graph, c: &LossComponents<Var>, w: &LossWeights) -> Result<Var> {
    let mut total = c.triplet;
    if let (Some(v), true) = (c.mixup, w.mixup != 0.0) {
        let term = g.scale(v, w.mixup);
        total = g.add(total, term)?;
    }
    if let (Some(v), true) = (c.adversarial, w.adversarial != 0.0) {
        let term = g.scale(v, w.adversarial);
        total = g.add(total, term)?;
    }
    if w.semantic != 0.0 {
        let aux = match (c.semantic, c.generation) {
            (Some(s), Some(gen)) => Some(g.add(s, gen)?),
            (s, gen) => s.or(gen),
        };
        if let Some(aux) = aux {
            let term = g.scale(aux, w.semantic);
            total = g.add(total, term)?;
        }
    }
    Ok(total)
}
