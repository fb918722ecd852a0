use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the synthetic bilingual corpus.
///
/// The ingredient universe is laid out as `[common | source-unique |
/// target-unique]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    /// Source recipe-image pairs.
    pub source_pairs: usize,
    /// Target recipes available for training (no images).
    pub target_recipes: usize,
    /// Target recipe-image pairs held out for evaluation.
    pub target_test_pairs: usize,
    pub common_ingredients: usize,
    pub source_unique_ingredients: usize,
    pub target_unique_ingredients: usize,
    pub feature_dim: usize,
    pub image_dim: usize,
    pub title_noise: f64,
    pub ingredient_noise: f64,
    pub instruction_noise: f64,
    pub translation_noise: f64,
    pub image_noise: f64,
    pub source_zipf: f64,
    pub target_zipf: f64,
    pub min_ingredients: usize,
    pub max_ingredients: usize,
    /// Mean of the target style scalar; the source mean is zero.
    pub target_style_shift: f64,
    pub style_spread: f64,
    /// Size of the unified ingredient label set.
    pub unified_clusters: usize,
    pub kmeans_iterations: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 7,
            source_pairs: 2000,
            target_recipes: 1000,
            target_test_pairs: 500,
            common_ingredients: 150,
            source_unique_ingredients: 100,
            target_unique_ingredients: 30,
            feature_dim: 64,
            image_dim: 32,
            title_noise: 0.02,
            ingredient_noise: 0.02,
            instruction_noise: 0.04,
            translation_noise: 0.03,
            image_noise: 0.02,
            source_zipf: 1.0,
            target_zipf: 1.3,
            min_ingredients: 3,
            max_ingredients: 8,
            target_style_shift: 0.3,
            style_spread: 0.3,
            unified_clusters: 100,
            kmeans_iterations: 50,
        }
    }
}

impl CorpusConfig {
    pub fn universe_size(&self) -> usize {
        self.common_ingredients + self.source_unique_ingredients + self.target_unique_ingredients
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("source_pairs", self.source_pairs),
            ("target_recipes", self.target_recipes),
            ("target_test_pairs", self.target_test_pairs),
            ("feature_dim", self.feature_dim),
            ("image_dim", self.image_dim),
            ("min_ingredients", self.min_ingredients),
            ("unified_clusters", self.unified_clusters),
            ("kmeans_iterations", self.kmeans_iterations),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        let non_negative = [
            ("title_noise", self.title_noise),
            ("ingredient_noise", self.ingredient_noise),
            ("instruction_noise", self.instruction_noise),
            ("translation_noise", self.translation_noise),
            ("image_noise", self.image_noise),
            ("source_zipf", self.source_zipf),
            ("target_zipf", self.target_zipf),
            ("style_spread", self.style_spread),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.target_style_shift.is_finite() {
            return Err(Error::config("target_style_shift", "must be finite"));
        }
        if self.min_ingredients > self.max_ingredients {
            return Err(Error::config(
                "max_ingredients",
                format!("{} < min_ingredients {}", self.max_ingredients, self.min_ingredients),
            ));
        }
        let smallest_vocab = self.common_ingredients
            + self
                .source_unique_ingredients
                .min(self.target_unique_ingredients);
        if self.max_ingredients > smallest_vocab {
            return Err(Error::config(
                "max_ingredients",
                format!("{} exceeds the smaller domain vocabulary ({smallest_vocab})", self.max_ingredients),
            ));
        }
        let vocab_vectors = 2 * self.common_ingredients
            + self.source_unique_ingredients
            + self.target_unique_ingredients;
        if self.unified_clusters > vocab_vectors {
            return Err(Error::config(
                "unified_clusters",
                format!("{} exceeds the {vocab_vectors} vocabulary vectors", self.unified_clusters),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        CorpusConfig::default().validate().unwrap();
    }

    #[test]
    fn violations_name_the_field() {
        let cases: Vec<(CorpusConfig, &str)> = vec![
            (CorpusConfig { source_pairs: 0, ..Default::default() }, "source_pairs"),
            (CorpusConfig { title_noise: -0.1, ..Default::default() }, "title_noise"),
            (
                CorpusConfig {
                    common_ingredients: 4,
                    target_unique_ingredients: 2,
                    max_ingredients: 7,
                    unified_clusters: 5,
                    ..Default::default()
                },
                "max_ingredients",
            ),
            (CorpusConfig { unified_clusters: 10_000, ..Default::default() }, "unified_clusters"),
        ];
        for (cfg, field) in cases {
            let err = cfg.validate().unwrap_err().to_string();
            assert!(err.contains(field), "{err}");
        }
    }

    #[test]
    fn full_scale_universe() {
        let cfg = CorpusConfig {
            common_ingredients: 543,
            source_unique_ingredients: 384,
            target_unique_ingredients: 73,
            ..Default::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.universe_size(), 1000);
    }
}
