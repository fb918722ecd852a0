use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Graph, Tensor};
use crate::corpus::{Corpus, RecipeRecord};
use crate::error::{Error, Result};
use crate::mixup::{mix_sections, mixup_loss, DistanceMode, MixupStrategy, MixupVariant};
use crate::model::{
    decode_ingredients, encode_image, encode_recipe, generate_image_feature, Checkpoint, ModelDims, ModelParams,
    SectionBatch,
};
use crate::objective::{
    adversarial_loss, bidirectional_triplet_loss, generation_loss, multi_hot, semantic_loss, total_loss,
    LossComponents, LossWeights, NegativePolicy,
};

/// Coefficient of the gradient reversal layer in front of the discriminator.
pub const GRADIENT_REVERSAL: f64 = 1.0;

/// Which recipe-image pairs drive the supervised losses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Source pairs, the adaptation setting.
    #[default]
    Source,
    /// Target training recipes with their hidden images revealed. Upper bound.
    TargetOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub mixup_strategy: MixupStrategy,
    pub mixup_variant: MixupVariant,
    pub distance: DistanceMode,
    pub policy: NegativePolicy,
    pub supervision: Supervision,
    pub seed: u64,
    pub hidden: usize,
    pub embedding: usize,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-4,
            weights: LossWeights::default(),
            mixup_strategy: MixupStrategy::Rm4,
            mixup_variant: MixupVariant::Source,
            distance: DistanceMode::BatchMean,
            policy: NegativePolicy::Random,
            supervision: Supervision::Source,
            seed: 7,
            hidden: 128,
            embedding: 32,
            corpus: None,
            checkpoint: None,
            log: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "must be >= 2"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be finite and > 0"));
        }
        if self.hidden == 0 || self.embedding == 0 {
            return Err(Error::config("hidden/embedding", "must be >= 1"));
        }
        self.weights.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn dims(&self, corpus: &Corpus) -> ModelDims {
        ModelDims {
            feature_dim: corpus.config.feature_dim,
            image_dim: corpus.config.image_dim,
            hidden: self.hidden,
            embedding: self.embedding,
            labels: corpus.vocabulary.clusters,
        }
    }
}

/// How often each optional branch of the objective was built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TrainCounters {
    pub steps: u64,
    pub target_encodings: u64,
    pub mixup_evaluations: u64,
    pub adversarial_evaluations: u64,
    pub semantic_evaluations: u64,
    pub generation_evaluations: u64,
}

/// Epoch means of every loss component. Skipped components are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub components: LossComponents<f64>,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub counters: TrainCounters,
}

impl TrainOutcome {
    /// CSV with a header row, one line per epoch.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,triplet,mixup,adversarial,semantic,generation,total\n");
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.log {
            let c = &e.components;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.epoch,
                c.triplet,
                cell(c.mixup),
                cell(c.adversarial),
                cell(c.semantic),
                cell(c.generation),
                e.total
            );
        }
        out
    }

    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.log_csv().as_bytes())?;
        Ok(())
    }
}

struct Supervised {
    sections: SectionBatch,
    images: Tensor,
    labels: Vec<Vec<usize>>,
}

fn supervised_set(corpus: &Corpus, supervision: Supervision) -> Result<Supervised> {
    let (records, images): (Vec<&RecipeRecord>, Vec<Vec<f64>>) = match supervision {
        Supervision::Source => {
            let recs = corpus.source_pairs();
            let imgs = recs
                .iter()
                .map(|r| r.image().map(<[f64]>::to_vec).ok_or_else(|| missing_image(r)))
                .collect::<Result<_>>()?;
            (recs, imgs)
        }
        Supervision::TargetOracle => (corpus.target_train(), corpus.reveal_target_train_images()),
    };
    Ok(Supervised {
        sections: SectionBatch::from_features(records.iter().map(|r| r.model_features()))?,
        images: Tensor::from_rows(&images)?,
        labels: records.iter().map(|r| r.labels.clone()).collect(),
    })
}

fn missing_image(r: &RecipeRecord) -> Error {
    Error::InvalidArgument(format!("recipe {} has no image", r.id))
}

/// Trains a fresh model on `corpus`.
pub fn train(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    config.validate()?;
    let w = config.weights;
    let use_mixup = w.mixup != 0.0;
    let use_adversarial = w.adversarial != 0.0;
    let use_auxiliary = w.semantic != 0.0;

    let pairs = supervised_set(corpus, config.supervision)?;
    let n_pairs = pairs.sections.len();
    let target_records = corpus.target_train();
    let targets = SectionBatch::from_features(target_records.iter().map(|r| r.model_features()))?;
    let n_targets = targets.len();
    let bs = config.batch_size;
    if n_pairs < bs {
        return Err(Error::config(
            "batch_size",
            format!("{bs} exceeds the {n_pairs} supervised pairs"),
        ));
    }
    if (use_mixup || use_adversarial) && n_targets < bs {
        return Err(Error::config(
            "batch_size",
            format!("{bs} exceeds the {n_targets} target training recipes"),
        ));
    }

    let dims = config.dims(corpus);
    let mut params = ModelParams::init(dims, config.seed)?;
    let shapes: Vec<Vec<usize>> = params.named_tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let mut adam = AdamState::new(config.adam(), shapes.iter().map(Vec::as_slice));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counters = TrainCounters::default();
    let mut log = Vec::with_capacity(config.epochs);

    let mut pair_order: Vec<usize> = (0..n_pairs).collect();
    let mut target_order: Vec<usize> = (0..n_targets).collect();
    let mut target_cursor = n_targets;

    for epoch in 1..=config.epochs {
        pair_order.shuffle(&mut rng);
        let mut sums = LossComponents::<f64>::default();
        let mut total_sum = 0.0;
        let batches = n_pairs / bs;
        for b in 0..batches {
            let idx = &pair_order[b * bs..(b + 1) * bs];
            let step_seed = rng.next_u64();

            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let sections = pairs.sections.select_rows(idx)?;
            let images_t = pairs.images.select_rows(idx)?;
            let recipe_emb = encode_recipe(&mut g, &p, &sections)?;
            let image_emb = encode_image(&mut g, &p, &images_t)?;
            let triplet = bidirectional_triplet_loss(&mut g, image_emb, recipe_emb, w.margin, config.policy, step_seed)?;
            let mut c = LossComponents {
                triplet,
                mixup: None,
                adversarial: None,
                semantic: None,
                generation: None,
            };

            if use_mixup || use_adversarial {
                if target_cursor + bs > n_targets {
                    target_order.shuffle(&mut rng);
                    target_cursor = 0;
                }
                let tidx = &target_order[target_cursor..target_cursor + bs];
                target_cursor += bs;
                let target_sections = targets.select_rows(tidx)?;
                let target_emb = encode_recipe(&mut g, &p, &target_sections)?;
                counters.target_encodings += 1;

                if use_mixup {
                    let (sm, tm) = mix_sections(&sections, &target_sections, config.mixup_strategy)?;
                    let sm = match config.mixup_variant {
                        MixupVariant::Source | MixupVariant::Both => Some(encode_recipe(&mut g, &p, &sm)?),
                        MixupVariant::Target => None,
                    };
                    let tm = match config.mixup_variant {
                        MixupVariant::Target | MixupVariant::Both => Some(encode_recipe(&mut g, &p, &tm)?),
                        MixupVariant::Source => None,
                    };
                    c.mixup = Some(mixup_loss(
                        &mut g,
                        config.mixup_variant,
                        recipe_emb,
                        target_emb,
                        sm,
                        tm,
                        config.distance,
                    )?);
                    counters.mixup_evaluations += 1;
                }
                if use_adversarial {
                    let adv = adversarial_loss(&mut g, &p, recipe_emb, target_emb, Some(GRADIENT_REVERSAL))?;
                    c.adversarial = Some(adv.domain_loss);
                    counters.adversarial_evaluations += 1;
                }
            }

            if use_auxiliary {
                let labels: Vec<Vec<usize>> = idx.iter().map(|&i| pairs.labels[i].clone()).collect();
                let y = multi_hot(&labels, dims.labels)?;
                let probs = decode_ingredients(&mut g, &p, image_emb)?;
                c.semantic = Some(semantic_loss(&mut g, probs, &y)?);
                counters.semantic_evaluations += 1;
                let generated = generate_image_feature(&mut g, &p, recipe_emb)?;
                let real = g.constant(images_t);
                c.generation = Some(generation_loss(&mut g, generated, real)?);
                counters.generation_evaluations += 1;
            }

            let total = total_loss(&mut g, &c, &w)?;
            let value = |v| g.value(v).item();
            let values = LossComponents {
                triplet: value(c.triplet),
                mixup: c.mixup.map(value),
                adversarial: c.adversarial.map(value),
                semantic: c.semantic.map(value),
                generation: c.generation.map(value),
            };
            let total_value = value(total);
            if !total_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: counters.steps as usize,
                    components: format!("{values:?}"),
                });
            }

            let grads = g.backward(total)?;
            let grad_list: Vec<Tensor> = p.vars().into_iter().map(|v| grads.wrt(&g, v)).collect();
            adam.step(params.named_tensors_mut(), &grad_list)?;
            counters.steps += 1;

            accumulate(&mut sums, &values);
            total_sum += total_value;
        }
        let n = batches as f64;
        log.push(EpochLog {
            epoch,
            components: scale(&sums, 1.0 / n),
            total: total_sum / n,
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            step: counters.steps,
        },
        log,
        counters,
    })
}

fn accumulate(sum: &mut LossComponents<f64>, v: &LossComponents<f64>) {
    let add = |s: &mut Option<f64>, x: Option<f64>| {
        if let Some(x) = x {
            *s = Some(s.unwrap_or(0.0) + x);
        }
    };
    sum.triplet += v.triplet;
    add(&mut sum.mixup, v.mixup);
    add(&mut sum.adversarial, v.adversarial);
    add(&mut sum.semantic, v.semantic);
    add(&mut sum.generation, v.generation);
}

fn scale(c: &LossComponents<f64>, f: f64) -> LossComponents<f64> {
    LossComponents {
        triplet: c.triplet * f,
        mixup: c.mixup.map(|v| v * f),
        adversarial: c.adversarial.map(|v| v * f),
        semantic: c.semantic.map(|v| v * f),
        generation: c.generation.map(|v| v * f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusConfig;

    fn tiny_corpus() -> Corpus {
        Corpus::generate(&CorpusConfig {
            source_pairs: 64,
            target_recipes: 48,
            target_test_pairs: 16,
            common_ingredients: 30,
            source_unique_ingredients: 10,
            target_unique_ingredients: 5,
            feature_dim: 8,
            image_dim: 6,
            unified_clusters: 12,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick(weights: LossWeights) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 8,
            hidden: 16,
            embedding: 8,
            weights,
            ..Default::default()
        }
    }

    #[test]
    fn ablation_skips_optional_branches() {
        let corpus = tiny_corpus();
        let off = LossWeights {
            mixup: 0.0,
            adversarial: 0.0,
            semantic: 0.0,
            ..Default::default()
        };
        let out = train(&quick(off), &corpus).unwrap();
        let c = out.counters;
        assert_eq!(c.steps, 16);
        assert_eq!(
            (c.target_encodings, c.mixup_evaluations, c.adversarial_evaluations, c.semantic_evaluations),
            (0, 0, 0, 0)
        );
        assert!(out.log.iter().all(|e| e.total == e.components.triplet));

        let full = train(&quick(LossWeights::default()), &corpus).unwrap();
        assert_eq!(full.counters.mixup_evaluations, 16);
        assert_eq!(full.counters.generation_evaluations, 16);
        assert!(full.log_csv().starts_with("epoch,triplet,mixup"));
        assert_eq!(full.log_csv().lines().count(), 3);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = tiny_corpus();
        let cfg = TrainConfig {
            mixup_variant: MixupVariant::Both,
            ..quick(LossWeights::default())
        };
        let a = train(&cfg, &corpus).unwrap();
        let b = train(&cfg, &corpus).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn invalid_config_rejected() {
        let corpus = tiny_corpus();
        let cfg = TrainConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(train(&cfg, &corpus).unwrap_err().to_string().contains("batch_size"));
        let cfg = TrainConfig {
            batch_size: 100,
            ..Default::default()
        };
        assert!(train(&cfg, &corpus).is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"mixup_strategy":"rm2","mixup_variant":"rm_st"}"#).unwrap();
        assert_eq!(parsed.mixup_strategy, MixupStrategy::Rm2);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch":3}"#).is_err());
    }

    #[test]
    fn nan_aborts_with_step() {
        let mut corpus = tiny_corpus();
        corpus.image_map.matrix.data_mut().fill(f64::NAN);
        let cfg = TrainConfig {
            supervision: Supervision::TargetOracle,
            ..quick(LossWeights::default())
        };
        let err = train(&cfg, &corpus).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 0, .. }), "{err}");
    }
}
