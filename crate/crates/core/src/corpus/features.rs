//! Section features from latent recipes: the frozen text-encoder stand-in and
//! the translation stub.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Codebook, Domain, Language, RecipeFeatures, RecipeLatent};
use crate::error::{Error, Result};

/// Weight of the ingredient mean inside the instruction section.
pub const INSTRUCTION_INGREDIENT_MIX: f64 = 0.7;

// Independent ChaCha streams derived from one per-recipe noise seed.
pub(crate) const SECTION_STREAM: u64 = 0;
pub(crate) const TRANSLATION_STREAM: u64 = 1;
pub(crate) const IMAGE_STREAM: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-section Gaussian noise scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionNoise {
    pub title: f64,
    pub ingredients: f64,
    pub instructions: f64,
}

impl SectionNoise {
    pub const ZERO: SectionNoise = SectionNoise {
        title: 0.0,
        ingredients: 0.0,
        instructions: 0.0,
    };
}

pub(crate) fn add_noise(v: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    // Draw even when sigma is zero so that streams stay aligned across configs.
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for x in v.iter_mut() {
        *x += sigma * normal.sample(rng);
    }
}

fn mean_of<'a>(vectors: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

/// Builds the three sections from per-ingredient vectors.
fn compose(
    latent: &RecipeLatent,
    vector_of: impl Fn(usize) -> Result<Vec<f64>>,
    style_direction: &[f64],
    noise: &SectionNoise,
    noise_seed: u64,
    language: Language,
) -> Result<RecipeFeatures> {
    if latent.ingredients.is_empty() {
        return Err(Error::InvalidArgument("recipe has no ingredients".into()));
    }
    if latent.main_ingredients.is_empty() {
        return Err(Error::InvalidArgument("recipe has no main ingredients".into()));
    }
    let dim = style_direction.len();
    let lookup = |ids: &[usize]| -> Result<Vec<Vec<f64>>> { ids.iter().map(|&i| vector_of(i)).collect() };
    let ing_vectors = lookup(&latent.ingredients)?;
    let main_vectors = lookup(&latent.main_ingredients)?;

    let mut rng = stream_rng(noise_seed, SECTION_STREAM);
    let clean_ing = mean_of(ing_vectors.iter().map(Vec::as_slice), dim);

    let mut title = mean_of(main_vectors.iter().map(Vec::as_slice), dim);
    add_noise(&mut title, noise.title, &mut rng);

    let mut ingredients = clean_ing.clone();
    add_noise(&mut ingredients, noise.ingredients, &mut rng);

    let mut instructions: Vec<f64> = clean_ing
        .iter()
        .zip(style_direction)
        .map(|(e, s)| INSTRUCTION_INGREDIENT_MIX * e + latent.style * s)
        .collect();
    add_noise(&mut instructions, noise.instructions, &mut rng);

    Ok(RecipeFeatures {
        title,
        ingredients,
        instructions,
        language,
    })
}

/// Features of `latent` in the codebook's own language.
pub fn extract_features(
    latent: &RecipeLatent,
    codebook: &Codebook,
    noise: &SectionNoise,
    noise_seed: u64,
) -> Result<RecipeFeatures> {
    compose(
        latent,
        |i| {
            codebook
                .vector(i)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::InvalidArgument(format!("ingredient {i} not in {:?} codebook", codebook.language)))
        },
        &codebook.style_direction,
        noise,
        noise_seed,
        codebook.language,
    )
}

/// Maps target-language recipes onto source-language features.
///
/// Common ingredients translate to their source-codebook vector. Each
/// target-unique ingredient is replaced by its nearest common ingredient in
/// target-codebook space and carries doubled translation noise.
#[derive(Clone, Debug)]
pub struct Translator<'a> {
    source: &'a Codebook,
    common: usize,
    /// `(target-unique id, substitute common id)`, sorted by id.
    substitutes: Vec<(usize, usize)>,
}

impl<'a> Translator<'a> {
    pub fn new(source: &'a Codebook, target: &Codebook, common_ingredients: usize) -> Result<Self> {
        if common_ingredients == 0 {
            return Err(Error::InvalidArgument("translation needs at least one common ingredient".into()));
        }
        let common: Vec<(usize, &[f64])> = target
            .iter()
            .filter(|(id, _)| *id < common_ingredients)
            .collect();
        let substitutes = target
            .iter()
            .filter(|(id, _)| *id >= common_ingredients)
            .map(|(id, v)| {
                let best = common
                    .iter()
                    .map(|(c, w)| (*c, squared_distance(v, w)))
                    .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                (id, best.0)
            })
            .collect();
        Ok(Translator {
            source,
            common: common_ingredients,
            substitutes,
        })
    }

    /// Common ingredient standing in for `id` after translation.
    pub fn substitute(&self, id: usize) -> Option<usize> {
        if id < self.common {
            return Some(id);
        }
        self.substitutes
            .binary_search_by_key(&id, |&(u, _)| u)
            .ok()
            .map(|k| self.substitutes[k].1)
    }

    fn translated_vector(&self, id: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let sub = self
            .substitute(id)
            .ok_or_else(|| Error::InvalidArgument(format!("ingredient {id} is not a target ingredient")))?;
        let mut v = self
            .source
            .vector(sub)
            .ok_or_else(|| Error::InvalidArgument(format!("common ingredient {sub} missing from source codebook")))?
            .to_vec();
        let scale = if id < self.common { sigma } else { 2.0 * sigma };
        add_noise(&mut v, scale, rng);
        Ok(v)
    }

    /// Section features of a target recipe after translation.
    pub fn translate_features(
        &self,
        latent: &RecipeLatent,
        translation_noise: f64,
        noise: &SectionNoise,
        noise_seed: u64,
    ) -> Result<RecipeFeatures> {
        if latent.domain != Domain::Target {
            return Err(Error::InvalidArgument("only target recipes are translated".into()));
        }
        let mut rng = stream_rng(noise_seed, TRANSLATION_STREAM);
        let mut table: Vec<(usize, Vec<f64>)> = Vec::with_capacity(latent.ingredients.len());
        for &id in &latent.ingredients {
            table.push((id, self.translated_vector(id, translation_noise, &mut rng)?));
        }
        compose(
            latent,
            |i| {
                table
                    .iter()
                    .find(|(id, _)| *id == i)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| Error::InvalidArgument(format!("main ingredient {i} not among the recipe's ingredients")))
            },
            &self.source.style_direction,
            noise,
            noise_seed,
            Language::Translated,
        )
    }

    /// Translated vectors for every target ingredient.
    pub fn translate_vocabulary(&self, target: &Codebook, translation_noise: f64, seed: u64) -> Result<Codebook> {
        let mut rng = stream_rng(seed, TRANSLATION_STREAM);
        let mut ids = Vec::with_capacity(target.len());
        let mut vectors = Vec::with_capacity(target.len());
        for (id, _) in target.iter() {
            ids.push(id);
            vectors.push(self.translated_vector(id, translation_noise, &mut rng)?);
        }
        Ok(Codebook {
            language: Language::Translated,
            ids,
            vectors,
            style_direction: self.source.style_direction.clone(),
        })
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codebook(language: Language, ids: &[usize], vectors: &[[f64; 2]]) -> Codebook {
        Codebook {
            language,
            ids: ids.to_vec(),
            vectors: vectors.iter().map(|v| v.to_vec()).collect(),
            style_direction: vec![0.0, 1.0],
        }
    }

    fn latent(domain: Domain, ingredients: &[usize]) -> RecipeLatent {
        RecipeLatent {
            domain,
            ingredients: ingredients.to_vec(),
            main_ingredients: ingredients[..1].to_vec(),
            style: 0.5,
            noise_seed: 11,
        }
    }

    #[test]
    fn single_ingredient_mean_is_its_vector() {
        let cb = codebook(Language::Source, &[0, 1], &[[1.0, 2.0], [3.0, 4.0]]);
        let f = extract_features(&latent(Domain::Source, &[1]), &cb, &SectionNoise::ZERO, 3).unwrap();
        assert_eq!(f.ingredients, vec![3.0, 4.0]);
        assert_eq!(f.title, vec![3.0, 4.0]);
        assert_eq!(f.instructions, vec![0.7 * 3.0, 0.7 * 4.0 + 0.5]);
    }

    #[test]
    fn identical_latents_identical_features() {
        let cb = codebook(Language::Source, &[0, 1], &[[1.0, 2.0], [3.0, 4.0]]);
        let l = latent(Domain::Source, &[0, 1]);
        let a = extract_features(&l, &cb, &SectionNoise::ZERO, 1).unwrap();
        let b = extract_features(&l, &cb, &SectionNoise::ZERO, 2).unwrap();
        assert_eq!(a, b);
        let noisy = SectionNoise { title: 0.1, ingredients: 0.1, instructions: 0.2 };
        assert_eq!(
            extract_features(&l, &cb, &noisy, 9).unwrap(),
            extract_features(&l, &cb, &noisy, 9).unwrap()
        );
        assert_ne!(
            extract_features(&l, &cb, &noisy, 9).unwrap(),
            extract_features(&l, &cb, &noisy, 10).unwrap()
        );
    }

    #[test]
    fn empty_recipe_rejected() {
        let cb = codebook(Language::Source, &[0], &[[1.0, 2.0]]);
        let mut l = latent(Domain::Source, &[0]);
        l.ingredients.clear();
        assert!(extract_features(&l, &cb, &SectionNoise::ZERO, 0).is_err());
    }

    #[test]
    fn exact_translation_of_common_recipe() {
        let src = codebook(Language::Source, &[0, 1, 2], &[[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]]);
        let tgt = codebook(Language::Target, &[0, 1, 3], &[[-1.0, 0.0], [0.0, -1.0], [0.1, -0.9]]);
        let tr = Translator::new(&src, &tgt, 2).unwrap();
        let mut l = latent(Domain::Target, &[0, 1]);
        let t = tr.translate_features(&l, 0.0, &SectionNoise::ZERO, 4).unwrap();
        l.domain = Domain::Source;
        let s = extract_features(&l, &src, &SectionNoise::ZERO, 4).unwrap();
        assert_eq!(t.ingredients, s.ingredients);
        assert_eq!(t.title, s.title);
        assert_eq!(t.instructions, s.instructions);
        assert_eq!(t.language, Language::Translated);
    }

    #[test]
    fn unique_ingredient_uses_nearest_common() {
        let src = codebook(Language::Source, &[0, 1], &[[1.0, 0.0], [0.0, 1.0]]);
        let tgt = codebook(Language::Target, &[0, 1, 2], &[[-1.0, 0.0], [0.0, -1.0], [0.1, -0.9]]);
        let tr = Translator::new(&src, &tgt, 2).unwrap();
        assert_eq!(tr.substitute(2), Some(1));
        assert_eq!(tr.substitute(0), Some(0));
        assert_eq!(tr.substitute(7), None);
    }
}
