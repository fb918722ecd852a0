//! JSON-Lines corpus files: one header line, then one line per recipe.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Codebook, Corpus, CorpusConfig, CorpusParts, Domain, ImageMap, IngredientRanks, RecipeFeatures, RecipeLatent, RecipeRecord,
    Split, UnifiedVocabulary,
};
use crate::error::{Error, Result};

const FORMAT: &str = "recmix-corpus/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    config: CorpusConfig,
    source_codebook: Codebook,
    target_codebook: Codebook,
    translated_vocabulary: Codebook,
    vocabulary: UnifiedVocabulary,
    image_map: ImageMap,
    ingredient_ranks: IngredientRanks,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: usize,
    domain: Domain,
    split: Split,
    ingredients: Vec<usize>,
    main_ingredients: Vec<usize>,
    style: f64,
    noise_seed: u64,
    features: RecipeFeatures,
    translated: Option<RecipeFeatures>,
    image: Option<Vec<f64>>,
    labels: Vec<usize>,
}

impl Corpus {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            format: FORMAT.to_string(),
            config: self.config.clone(),
            source_codebook: self.source_codebook.clone(),
            target_codebook: self.target_codebook.clone(),
            translated_vocabulary: self.translated_vocabulary.clone(),
            vocabulary: self.vocabulary.clone(),
            image_map: self.image_map.clone(),
            ingredient_ranks: self.ingredient_ranks.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            let line = Line {
                id: r.id,
                domain: r.domain(),
                split: r.split,
                ingredients: r.latent.ingredients.clone(),
                main_ingredients: r.latent.main_ingredients.clone(),
                style: r.latent.style,
                noise_seed: r.latent.noise_seed,
                features: r.features.clone(),
                translated: r.translated.clone(),
                image: r.image.clone(),
                labels: r.labels.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Corpus> {
        let mut lines = input.lines();
        let first = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty corpus file".into(),
        })??;
        let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse {
            line: 1,
            message: format!("header: {e}"),
        })?;
        if header.format != FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported format `{}`", header.format),
            });
        }

        let mut records = Vec::new();
        for (n, text) in lines.enumerate() {
            let line_no = n + 2;
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if l.split.domain() != l.domain {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("domain {:?} does not match split {:?}", l.domain, l.split),
                });
            }
            records.push(RecipeRecord {
                id: l.id,
                split: l.split,
                latent: RecipeLatent {
                    domain: l.domain,
                    ingredients: l.ingredients,
                    main_ingredients: l.main_ingredients,
                    style: l.style,
                    noise_seed: l.noise_seed,
                },
                features: l.features,
                translated: l.translated,
                image: l.image,
                labels: l.labels,
            });
        }
        let parts = CorpusParts {
            source_codebook: header.source_codebook,
            target_codebook: header.target_codebook,
            translated_vocabulary: header.translated_vocabulary,
            vocabulary: header.vocabulary,
            image_map: header.image_map,
            ingredient_ranks: header.ingredient_ranks,
        };
        Corpus::from_parts(header.config, parts, records)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Corpus> {
        Corpus::read_jsonl(BufReader::new(File::open(path)?))
    }
}
