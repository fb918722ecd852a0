use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{grad_check, Tensor};
use crate::error::{Error, Result};
use crate::mixup::{batch_domain_distance, mixup_loss_s, mixup_loss_st, mixup_loss_t, DistanceMode};
use crate::model::{Layer, ModelDims, ModelParams};
use crate::objective::{
    adversarial_loss, generation_loss, multi_hot, sample_triplets, semantic_loss, triplet_loss_with, NegativePolicy,
    PROBABILITY_EPSILON,
};

/// Every differentiable training loss, in report order.
pub const LOSS_NAMES: [&str; 7] = ["triplet", "adversarial", "semantic", "generation", "rm_s", "rm_t", "rm_st"];

/// Points closer than this to a hinge, ReLU or clamp kink are redrawn.
pub const KINK_DISTANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct LossGradCheck {
    pub loss: &'static str,
    /// Worst relative error over all accepted points.
    pub max_relative_error: f64,
    pub points: usize,
    /// Draws discarded for lying near a kink.
    pub rejected: usize,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive shape")
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (crate::autodiff::norm(a) * crate::autodiff::norm(b))
}

const ROWS: usize = 4;
const DIM: usize = 5;
const MARGIN: f64 = 0.3;

fn small_dims() -> ModelDims {
    ModelDims {
        feature_dim: 3,
        image_dim: 2,
        hidden: 6,
        embedding: DIM,
        labels: 6,
    }
}

/// Draws one point for `loss` and checks it, or returns `None` when the
/// point lies near a kink.
fn check_point(loss: &str, rng: &mut ChaCha8Rng, params: &ModelParams, epsilon: f64) -> Result<Option<f64>> {
    let check = match loss {
        "triplet" => {
            let (images, recipes) = (gaussian(rng, ROWS, DIM), gaussian(rng, ROWS, DIM));
            let seed = rng.gen();
            let from_images = sample_triplets(&images, &recipes, crate::model::Modality::Image, NegativePolicy::Random, seed)?;
            let from_recipes =
                sample_triplets(&recipes, &images, crate::model::Modality::Recipe, NegativePolicy::Random, seed ^ 1)?;
            let near_kink = |a: &Tensor, c: &Tensor, negs: &[usize]| {
                negs.iter().enumerate().any(|(i, &n)| {
                    let arg = cosine(a.row_slice(i), c.row_slice(n)) - cosine(a.row_slice(i), c.row_slice(i)) + MARGIN;
                    arg.abs() < KINK_DISTANCE
                })
            };
            if near_kink(&images, &recipes, &from_images.negatives)
                || near_kink(&recipes, &images, &from_recipes.negatives)
            {
                return Ok(None);
            }
            grad_check(
                |g, v| triplet_loss_with(g, v[0], v[1], &from_images, &from_recipes, MARGIN),
                &[images, recipes],
                epsilon,
            )?
        }
        "adversarial" => {
            let (s, t) = (gaussian(rng, ROWS, DIM), gaussian(rng, ROWS - 1, DIM));
            let hidden = &params[Layer::DiscriminatorHidden];
            for x in [&s, &t] {
                for row in x.iter_rows() {
                    for j in 0..hidden.weight.cols() {
                        let pre: f64 =
                            row.iter().enumerate().map(|(k, v)| v * hidden.weight.get(k, j)).sum::<f64>() + hidden.bias.get(0, j);
                        if pre.abs() < KINK_DISTANCE {
                            return Ok(None);
                        }
                    }
                }
            }
            grad_check(
                |g, v| {
                    let p = params.bind_frozen(g);
                    Ok(adversarial_loss(g, &p, v[0], v[1], None)?.domain_loss)
                },
                &[s, t],
                epsilon,
            )?
        }
        "semantic" => {
            let lo = PROBABILITY_EPSILON + KINK_DISTANCE;
            let data = (0..ROWS * 6).map(|_| rng.gen_range(lo..1.0 - lo)).collect();
            let probs = Tensor::new(vec![ROWS, 6], data)?;
            let labels: Vec<Vec<usize>> = (0..ROWS).map(|_| (0..6).filter(|_| rng.gen_bool(0.4)).collect()).collect();
            let y = multi_hot(&labels, 6)?;
            grad_check(|g, v| semantic_loss(g, v[0], &y), &[probs], epsilon)?
        }
        "generation" => {
            let (a, b) = (gaussian(rng, ROWS, DIM), gaussian(rng, ROWS, DIM));
            grad_check(|g, v| generation_loss(g, v[0], v[1]), &[a, b], epsilon)?
        }
        "rm_s" | "rm_t" | "rm_st" => {
            let batches: Vec<Tensor> = (0..4).map(|_| gaussian(rng, ROWS, DIM)).collect();
            for i in 0..4 {
                for j in i + 1..4 {
                    if batch_domain_distance(&batches[i], &batches[j])? < KINK_DISTANCE {
                        return Ok(None);
                    }
                }
            }
            let mode = DistanceMode::BatchMean;
            match loss {
                "rm_s" => grad_check(|g, v| mixup_loss_s(g, v[0], v[1], v[2], mode), &batches[..3], epsilon)?,
                "rm_t" => grad_check(|g, v| mixup_loss_t(g, v[0], v[1], v[3], mode), &batches, epsilon)?,
                _ => grad_check(|g, v| mixup_loss_st(g, v[0], v[1], v[2], v[3], mode), &batches, epsilon)?,
            }
        }
        other => return Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
    };
    Ok(Some(check.max_relative_error))
}

/// Gradient checks of every loss at `points` seeded random inputs each.
pub fn loss_gradient_checks(points: usize, seed: u64, epsilon: f64) -> Result<Vec<LossGradCheck>> {
    let params = ModelParams::init(small_dims(), seed)?;
    LOSS_NAMES
        .iter()
        .enumerate()
        .map(|(k, &loss)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut out = LossGradCheck {
                loss,
                max_relative_error: 0.0,
                points: 0,
                rejected: 0,
            };
            while out.points < points {
                if out.rejected > 100 * points.max(1) {
                    return Err(Error::InvalidArgument(format!("{loss}: too many points near kinks")));
                }
                match check_point(loss, &mut rng, &params, epsilon)? {
                    Some(e) => {
                        out.points += 1;
                        out.max_relative_error = out.max_relative_error.max(e);
                    }
                    None => out.rejected += 1,
                }
            }
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_losses_pass_at_a_few_points() {
        let checks = loss_gradient_checks(2, 11, 1e-5).unwrap();
        assert_eq!(checks.len(), 7);
        for c in checks {
            assert_eq!(c.points, 2);
            assert!(c.max_relative_error < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn unknown_loss_rejected() {
        let params = ModelParams::init(small_dims(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(check_point("nope", &mut rng, &params, 1e-5).is_err());
    }
}
