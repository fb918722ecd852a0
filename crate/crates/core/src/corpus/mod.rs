//! Synthetic bilingual recipe/image corpus.
//!
//! Source recipes come with paired image features; target recipes are written
//! in another "language" (a separate codebook) and only their held-out test
//! split has images. Target recipes reach the model through a translation stub.

mod config;
mod features;
mod io;
pub mod kmeans;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use config::CorpusConfig;
pub use features::{extract_features, SectionNoise, Translator, INSTRUCTION_INGREDIENT_MIX};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use features::{add_noise, stream_rng, IMAGE_STREAM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Source,
    Target,
    Translated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Source recipe-image pairs.
    SourcePair,
    /// Target recipes used for training; never carry images.
    TargetTrain,
    /// Target recipe-image pairs used only as evaluation queries.
    TargetTest,
}

impl Split {
    pub fn domain(self) -> Domain {
        match self {
            Split::SourcePair => Domain::Source,
            Split::TargetTrain | Split::TargetTest => Domain::Target,
        }
    }

    pub fn has_image(self) -> bool {
        !matches!(self, Split::TargetTrain)
    }
}

/// The three recipe sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Title,
    Ingredients,
    Instructions,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Title, Section::Ingredients, Section::Instructions];
}

/// Ground truth behind one recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeLatent {
    pub domain: Domain,
    /// Sorted universe indices.
    pub ingredients: Vec<usize>,
    /// Subset of `ingredients` the title is derived from.
    pub main_ingredients: Vec<usize>,
    pub style: f64,
    /// Seeds the section, translation and image noise streams.
    pub noise_seed: u64,
}

/// Frozen per-section feature vectors of one recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeFeatures {
    pub language: Language,
    pub title: Vec<f64>,
    pub ingredients: Vec<f64>,
    pub instructions: Vec<f64>,
}

impl RecipeFeatures {
    pub fn section(&self, s: Section) -> &[f64] {
        match s {
            Section::Title => &self.title,
            Section::Ingredients => &self.ingredients,
            Section::Instructions => &self.instructions,
        }
    }

    pub fn section_mut(&mut self, s: Section) -> &mut Vec<f64> {
        match s {
            Section::Title => &mut self.title,
            Section::Ingredients => &mut self.ingredients,
            Section::Instructions => &mut self.instructions,
        }
    }

    pub fn dim(&self) -> usize {
        self.title.len()
    }

    fn is_well_formed(&self, dim: usize) -> bool {
        Section::ALL
            .iter()
            .all(|&s| self.section(s).len() == dim && self.section(s).iter().all(|v| v.is_finite()))
    }
}

/// Per-language ingredient vectors, standing in for a frozen text encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub language: Language,
    /// Sorted universe indices covered by this codebook.
    pub ids: Vec<usize>,
    pub vectors: Vec<Vec<f64>>,
    /// Direction along which the style scalar enters the instruction section.
    pub style_direction: Vec<f64>,
}

impl Codebook {
    pub fn vector(&self, id: usize) -> Option<&[f64]> {
        self.ids.binary_search(&id).ok().map(|k| self.vectors[k].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.ids.iter().copied().zip(self.vectors.iter().map(Vec::as_slice))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Cluster ids shared by both languages' ingredient vocabularies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnifiedVocabulary {
    pub clusters: usize,
    /// Indexed by universe id; `None` for ingredients absent from the source vocabulary.
    pub source_labels: Vec<Option<usize>>,
    pub target_labels: Vec<Option<usize>>,
    pub centroids: Vec<Vec<f64>>,
}

impl UnifiedVocabulary {
    pub fn label(&self, domain: Domain, id: usize) -> Option<usize> {
        let table = match domain {
            Domain::Source => &self.source_labels,
            Domain::Target => &self.target_labels,
        };
        table.get(id).copied().flatten()
    }

    /// Sorted, deduplicated label set of a recipe.
    pub fn labels_of(&self, latent: &RecipeLatent) -> Result<Vec<usize>> {
        let mut labels = latent
            .ingredients
            .iter()
            .map(|&i| {
                self.label(latent.domain, i).ok_or_else(|| {
                    Error::InvalidArgument(format!("ingredient {i} has no unified label"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        labels.sort_unstable();
        labels.dedup();
        Ok(labels)
    }
}

/// Clusters the source vocabulary together with the translated target
/// vocabulary into `k` unified ingredients.
pub fn unify_ingredients(
    source: &Codebook,
    translated_target: &Codebook,
    universe: usize,
    k: usize,
    max_iterations: usize,
    seed: u64,
) -> Result<UnifiedVocabulary> {
    let points: Vec<Vec<f64>> = source
        .vectors
        .iter()
        .chain(&translated_target.vectors)
        .cloned()
        .collect();
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "{k} clusters requested for {} vectors",
            points.len()
        )));
    }
    let km = kmeans::kmeans(&points, k, max_iterations, seed)?;
    let mut source_labels = vec![None; universe];
    let mut target_labels = vec![None; universe];
    for (n, &id) in source.ids.iter().enumerate() {
        source_labels[id] = Some(km.assignments[n]);
    }
    for (n, &id) in translated_target.ids.iter().enumerate() {
        target_labels[id] = Some(km.assignments[source.len() + n]);
    }
    Ok(UnifiedVocabulary {
        clusters: k,
        source_labels,
        target_labels,
        centroids: km.centroids,
    })
}

/// One recipe of the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct RecipeRecord {
    pub id: usize,
    pub split: Split,
    pub latent: RecipeLatent,
    /// Features in the recipe's own language.
    pub features: RecipeFeatures,
    /// Translated features; present exactly for target recipes.
    pub translated: Option<RecipeFeatures>,
    image: Option<Vec<f64>>,
    /// Unified ingredient labels.
    pub labels: Vec<usize>,
}

impl RecipeRecord {
    /// Features the model consumes: translated for target recipes.
    pub fn model_features(&self) -> &RecipeFeatures {
        self.translated.as_ref().unwrap_or(&self.features)
    }

    pub fn image(&self) -> Option<&[f64]> {
        self.image.as_deref()
    }

    pub fn domain(&self) -> Domain {
        self.split.domain()
    }
}

/// Linear map from the bag-of-ingredients vector to image features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMap {
    /// `image_dim x universe`.
    pub matrix: Tensor,
}

impl ImageMap {
    /// Image feature of a recipe: the map applied to the normalized bag of
    /// ingredients, plus Gaussian noise from the recipe's image stream.
    pub fn render(&self, latent: &RecipeLatent, noise: f64) -> Vec<f64> {
        let (rows, cols) = (self.matrix.rows(), self.matrix.cols());
        let w = 1.0 / latent.ingredients.len() as f64;
        let mut out = vec![0.0; rows];
        for &i in &latent.ingredients {
            for (r, o) in out.iter_mut().enumerate() {
                *o += w * self.matrix.data()[r * cols + i];
            }
        }
        let mut rng = stream_rng(latent.noise_seed, IMAGE_STREAM);
        add_noise(&mut out, noise, &mut rng);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub source_codebook: Codebook,
    pub target_codebook: Codebook,
    pub translated_vocabulary: Codebook,
    pub vocabulary: UnifiedVocabulary,
    pub image_map: ImageMap,
    pub ingredient_ranks: IngredientRanks,
    records: Vec<RecipeRecord>,
}

/// Ingredient ids of each domain ordered by Zipf rank, most frequent first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngredientRanks {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl IngredientRanks {
    pub fn of(&self, domain: Domain) -> &[usize] {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }
}

/// Everything in a corpus except its config and records.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusParts {
    pub source_codebook: Codebook,
    pub target_codebook: Codebook,
    pub translated_vocabulary: Codebook,
    pub vocabulary: UnifiedVocabulary,
    pub image_map: ImageMap,
    pub ingredient_ranks: IngredientRanks,
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, scale).expect("valid scale");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Zipf weights over a domain vocabulary with independently permuted ranks.
fn zipf_weights(vocab: &[usize], exponent: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    let mut ranked = vocab.to_vec();
    ranked.shuffle(rng);
    ranked
        .into_iter()
        .enumerate()
        .map(|(r, id)| (id, 1.0 / ((r + 1) as f64).powf(exponent)))
        .collect()
}

impl Corpus {
    /// Generates a corpus; fully determined by `config`.
    pub fn generate(config: &CorpusConfig) -> Result<Corpus> {
        config.validate()?;
        let c = config;
        let dim = c.feature_dim;
        let common = c.common_ingredients;
        let src_end = common + c.source_unique_ingredients;
        let universe = c.universe_size();
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);

        // Language-independent ingredient semantics. Target-unique items are
        // regional variants of a random common (or, failing that, source) item.
        let unit = 1.0 / (dim as f64).sqrt();
        let mut semantic: Vec<Vec<f64>> = (0..src_end).map(|_| gaussian_vector(&mut rng, dim, unit)).collect();
        for _ in src_end..universe {
            let base = rng.gen_range(0..common.max(1).min(src_end));
            let offset = gaussian_vector(&mut rng, dim, 0.7 * unit);
            semantic.push(semantic[base].iter().zip(offset).map(|(a, b)| a + b).collect());
        }

        let source_ids: Vec<usize> = (0..src_end).collect();
        let target_ids: Vec<usize> = (0..common).chain(src_end..universe).collect();
        let source_codebook = Codebook {
            language: Language::Source,
            ids: source_ids.clone(),
            vectors: source_ids.iter().map(|&i| semantic[i].clone()).collect(),
            style_direction: gaussian_vector(&mut rng, dim, unit),
        };

        // The target language is a signed coordinate permutation plus offset:
        // distances are preserved but vectors share nothing with the source.
        let mut perm: Vec<usize> = (0..dim).collect();
        perm.shuffle(&mut rng);
        let signs: Vec<f64> = (0..dim).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let shift = gaussian_vector(&mut rng, dim, 0.5 * unit);
        let to_target = |v: &[f64]| -> Vec<f64> { (0..dim).map(|j| signs[j] * v[perm[j]] + shift[j]).collect() };
        let target_codebook = Codebook {
            language: Language::Target,
            ids: target_ids.clone(),
            vectors: target_ids.iter().map(|&i| to_target(&semantic[i])).collect(),
            style_direction: gaussian_vector(&mut rng, dim, unit),
        };

        let projection = gaussian_vector(&mut rng, c.image_dim * dim, 1.0);
        let mut map = vec![0.0; c.image_dim * universe];
        for r in 0..c.image_dim {
            for (i, z) in semantic.iter().enumerate() {
                map[r * universe + i] = (0..dim).map(|j| projection[r * dim + j] * z[j]).sum();
            }
        }
        let image_map = ImageMap {
            matrix: Tensor::new(vec![c.image_dim, universe], map)?,
        };

        let source_weights = zipf_weights(&source_ids, c.source_zipf, &mut rng);
        let target_weights = zipf_weights(&target_ids, c.target_zipf, &mut rng);

        let translator = Translator::new(&source_codebook, &target_codebook, common)?;
        let vocab_seed = rng.gen();
        let translated_vocabulary = translator.translate_vocabulary(&target_codebook, c.translation_noise, vocab_seed)?;
        let vocabulary = unify_ingredients(
            &source_codebook,
            &translated_vocabulary,
            universe,
            c.unified_clusters,
            c.kmeans_iterations,
            rng.gen(),
        )?;

        let noise = SectionNoise {
            title: c.title_noise,
            ingredients: c.ingredient_noise,
            instructions: c.instruction_noise,
        };
        let style_normal = |mean: f64| Normal::new(mean, c.style_spread).expect("valid spread");
        let plan = [
            (Split::SourcePair, c.source_pairs),
            (Split::TargetTrain, c.target_recipes),
            (Split::TargetTest, c.target_test_pairs),
        ];
        let mut records = Vec::with_capacity(c.source_pairs + c.target_recipes + c.target_test_pairs);
        for (split, count) in plan {
            let domain = split.domain();
            let (weights, style_mean) = match domain {
                Domain::Source => (&source_weights, 0.0),
                Domain::Target => (&target_weights, c.target_style_shift),
            };
            for _ in 0..count {
                let k = rng.gen_range(c.min_ingredients..=c.max_ingredients);
                let mut ingredients: Vec<usize> = weights
                    .choose_multiple_weighted(&mut rng, k, |w| w.1)
                    .expect("positive finite weights")
                    .map(|w| w.0)
                    .collect();
                ingredients.sort_unstable();
                let mut main_ingredients: Vec<usize> = ingredients
                    .choose_multiple(&mut rng, k.min(2))
                    .copied()
                    .collect();
                main_ingredients.sort_unstable();
                let latent = RecipeLatent {
                    domain,
                    ingredients,
                    main_ingredients,
                    style: style_normal(style_mean).sample(&mut rng),
                    noise_seed: rng.gen(),
                };
                let (features, translated) = match domain {
                    Domain::Source => (extract_features(&latent, &source_codebook, &noise, latent.noise_seed)?, None),
                    Domain::Target => (
                        extract_features(&latent, &target_codebook, &noise, latent.noise_seed)?,
                        Some(translator.translate_features(&latent, c.translation_noise, &noise, latent.noise_seed)?),
                    ),
                };
                let image = split.has_image().then(|| image_map.render(&latent, c.image_noise));
                let labels = vocabulary.labels_of(&latent)?;
                records.push(RecipeRecord {
                    id: records.len(),
                    split,
                    latent,
                    features,
                    translated,
                    image,
                    labels,
                });
            }
        }

        Ok(Corpus {
            config: config.clone(),
            source_codebook,
            target_codebook,
            translated_vocabulary,
            vocabulary,
            image_map,
            ingredient_ranks: IngredientRanks {
                source: source_weights.iter().map(|w| w.0).collect(),
                target: target_weights.iter().map(|w| w.0).collect(),
            },
            records,
        })
    }

    /// Assembles a corpus from parts, checking every record against the config.
    pub fn from_parts(config: CorpusConfig, parts: CorpusParts, records: Vec<RecipeRecord>) -> Result<Corpus> {
        config.validate()?;
        let CorpusParts {
            source_codebook,
            target_codebook,
            translated_vocabulary,
            vocabulary,
            image_map,
            ingredient_ranks,
        } = parts;
        let corpus = Corpus {
            config,
            source_codebook,
            target_codebook,
            translated_vocabulary,
            vocabulary,
            image_map,
            ingredient_ranks,
            records,
        };
        for (n, r) in corpus.records.iter().enumerate() {
            corpus.check_record(r).map_err(|message| Error::Parse { line: n + 2, message })?;
        }
        let counts = corpus.split_counts();
        let expected = [
            ("source_pairs", corpus.config.source_pairs, counts[0]),
            ("target_recipes", corpus.config.target_recipes, counts[1]),
            ("target_test_pairs", corpus.config.target_test_pairs, counts[2]),
        ];
        for (field, want, got) in expected {
            if want != got {
                return Err(Error::config(field, format!("header declares {want} records, found {got}")));
            }
        }
        Ok(corpus)
    }

    pub(crate) fn check_record(&self, r: &RecipeRecord) -> std::result::Result<(), String> {
        let c = &self.config;
        let dim = c.feature_dim;
        if r.latent.domain != r.split.domain() {
            return Err(format!("record {}: latent domain disagrees with split", r.id));
        }
        let vocab = match r.domain() {
            Domain::Source => &self.source_codebook,
            Domain::Target => &self.target_codebook,
        };
        let n = r.latent.ingredients.len();
        if n < c.min_ingredients || n > c.max_ingredients {
            return Err(format!("record {}: {n} ingredients outside [{}, {}]", r.id, c.min_ingredients, c.max_ingredients));
        }
        if let Some(bad) = r.latent.ingredients.iter().find(|&&i| vocab.vector(i).is_none()) {
            return Err(format!("record {}: ingredient {bad} not in the {:?} vocabulary", r.id, r.domain()));
        }
        if !r.latent.main_ingredients.iter().all(|i| r.latent.ingredients.contains(i)) {
            return Err(format!("record {}: main_ingredients not a subset of ingredients", r.id));
        }
        if !r.features.is_well_formed(dim) {
            return Err(format!("record {}: features must be finite with dimension {dim}", r.id));
        }
        match (r.domain(), &r.translated) {
            (Domain::Target, Some(t)) if t.is_well_formed(dim) => {}
            (Domain::Source, None) => {}
            _ => return Err(format!("record {}: translated features required exactly for target recipes", r.id)),
        }
        match (r.split.has_image(), &r.image) {
            (true, Some(img)) if img.len() == c.image_dim && img.iter().all(|v| v.is_finite()) => {}
            (false, None) => {}
            (true, _) => return Err(format!("record {}: image with dimension {} required", r.id, c.image_dim)),
            (false, Some(_)) => return Err(format!("record {}: target training recipes cannot carry images", r.id)),
        }
        if r.labels.iter().any(|&l| l >= self.vocabulary.clusters) {
            return Err(format!("record {}: label outside [0, {})", r.id, self.vocabulary.clusters));
        }
        Ok(())
    }

    fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in &self.records {
            counts[r.split as usize] += 1;
        }
        counts
    }

    pub fn parts(&self) -> CorpusParts {
        CorpusParts {
            source_codebook: self.source_codebook.clone(),
            target_codebook: self.target_codebook.clone(),
            translated_vocabulary: self.translated_vocabulary.clone(),
            vocabulary: self.vocabulary.clone(),
            image_map: self.image_map.clone(),
            ingredient_ranks: self.ingredient_ranks.clone(),
        }
    }

    pub fn records(&self) -> &[RecipeRecord] {
        &self.records
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &RecipeRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn source_pairs(&self) -> Vec<&RecipeRecord> {
        self.split(Split::SourcePair).collect()
    }

    pub fn target_train(&self) -> Vec<&RecipeRecord> {
        self.split(Split::TargetTrain).collect()
    }

    pub fn target_test(&self) -> Vec<&RecipeRecord> {
        self.split(Split::TargetTest).collect()
    }

    /// Image features of the target training recipes, rendered from their
    /// latents. Only the oracle upper-bound model may use these; they are not
    /// part of the stored corpus.
    pub fn reveal_target_train_images(&self) -> Vec<Vec<f64>> {
        self.split(Split::TargetTrain)
            .map(|r| self.image_map.render(&r.latent, self.config.image_noise))
            .collect()
    }

    pub fn translator(&self) -> Result<Translator<'_>> {
        Translator::new(&self.source_codebook, &self.target_codebook, self.config.common_ingredients)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            source_pairs: 60,
            target_recipes: 40,
            target_test_pairs: 20,
            common_ingredients: 30,
            source_unique_ingredients: 12,
            target_unique_ingredients: 6,
            feature_dim: 8,
            image_dim: 4,
            unified_clusters: 20,
            ..Default::default()
        }
    }

    #[test]
    fn splits_and_images() {
        let c = Corpus::generate(&small()).unwrap();
        assert_eq!(c.source_pairs().len(), 60);
        assert_eq!(c.target_train().len(), 40);
        assert_eq!(c.target_test().len(), 20);
        assert!(c.target_train().iter().all(|r| r.image().is_none()));
        assert!(c.source_pairs().iter().all(|r| r.image().is_some() && r.translated.is_none()));
        assert!(c.target_test().iter().all(|r| r.image().is_some() && r.translated.is_some()));
        for r in c.records() {
            c.check_record(r).unwrap();
            assert!(!r.labels.is_empty());
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = Corpus::generate(&small()).unwrap();
        let b = Corpus::generate(&small()).unwrap();
        assert_eq!(a, b);
        let d = Corpus::generate(&CorpusConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn invalid_config_rejected() {
        let err = Corpus::generate(&CorpusConfig { target_recipes: 0, ..small() }).unwrap_err();
        assert!(err.to_string().contains("target_recipes"));
    }

    #[test]
    fn revealed_images_follow_the_shared_map() {
        let c = Corpus::generate(&small()).unwrap();
        let imgs = c.reveal_target_train_images();
        assert_eq!(imgs.len(), 40);
        // test-pair images are produced by the same renderer
        let t = c.target_test()[0];
        assert_eq!(c.image_map.render(&t.latent, c.config.image_noise), t.image().unwrap());
    }

    #[test]
    fn vocabulary_covers_both_languages() {
        let c = Corpus::generate(&small()).unwrap();
        let v = &c.vocabulary;
        for id in &c.source_codebook.ids {
            assert!(v.label(Domain::Source, *id).unwrap() < v.clusters);
        }
        for id in &c.target_codebook.ids {
            assert!(v.label(Domain::Target, *id).unwrap() < v.clusters);
        }
    }
}
