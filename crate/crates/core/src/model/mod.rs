//! Recipe and image encoders into a shared unit-sphere embedding space, plus
//! the auxiliary heads: domain discriminator, ingredient decoder and image
//! feature generator.

mod checkpoint;
mod params;

pub use checkpoint::Checkpoint;
pub use params::{glorot_bound, BoundDense, BoundParams, Dense, Layer, ModelDims, ModelParams};

use crate::autodiff::{Graph, Tensor, Var};
use crate::corpus::{Domain, RecipeFeatures, Section};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Recipe,
    Image,
}

/// Unit-norm embeddings, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    pub matrix: Tensor,
    pub domain: Domain,
    pub modality: Modality,
    pub mixed: bool,
}

impl EmbeddingBatch {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Section features of a batch, one `batch x feature_dim` matrix per section.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionBatch {
    pub title: Tensor,
    pub ingredients: Tensor,
    pub instructions: Tensor,
}

impl SectionBatch {
    pub fn from_features<'a>(rows: impl IntoIterator<Item = &'a RecipeFeatures>) -> Result<Self> {
        let rows: Vec<&RecipeFeatures> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty recipe batch".into()));
        }
        let stack = |s: Section| Tensor::from_rows(&rows.iter().map(|f| f.section(s)).collect::<Vec<_>>());
        Ok(SectionBatch {
            title: stack(Section::Title)?,
            ingredients: stack(Section::Ingredients)?,
            instructions: stack(Section::Instructions)?,
        })
    }

    pub fn section(&self, s: Section) -> &Tensor {
        match s {
            Section::Title => &self.title,
            Section::Ingredients => &self.ingredients,
            Section::Instructions => &self.instructions,
        }
    }

    pub fn section_mut(&mut self, s: Section) -> &mut Tensor {
        match s {
            Section::Title => &mut self.title,
            Section::Ingredients => &mut self.ingredients,
            Section::Instructions => &mut self.instructions,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Ok(SectionBatch {
            title: self.title.select_rows(indices)?,
            ingredients: self.ingredients.select_rows(indices)?,
            instructions: self.instructions.select_rows(indices)?,
        })
    }

    pub fn len(&self) -> usize {
        self.title.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_width(what: &'static str, t: &Tensor, width: usize) -> Result<()> {
    if t.rank() != 2 || t.cols() != width {
        return Err(Error::shape(what, t.shape(), &[t.shape()[0], width]));
    }
    Ok(())
}

/// Fused recipe representation before normalization. Exposed so the
/// per-section contributions can be inspected.
pub fn recipe_pre_embedding(g: &mut Graph, p: &BoundParams, sections: &SectionBatch) -> Result<Var> {
    let rows = sections.len();
    let projections = [
        (Section::Title, Layer::TitleProjection),
        (Section::Ingredients, Layer::IngredientProjection),
        (Section::Instructions, Layer::InstructionProjection),
    ];
    let mut hidden = Vec::with_capacity(3);
    for (s, layer) in projections {
        let x = sections.section(s);
        let width = g.shape(p[layer].weight)[0];
        check_width("encode_recipe", x, width)?;
        if x.rows() != rows {
            return Err(Error::shape("encode_recipe", sections.title.shape(), x.shape()));
        }
        let x = g.constant(x.clone());
        let h = p[layer].apply(g, x)?;
        hidden.push(g.tanh(h));
    }
    let joint = g.concat_cols(&hidden)?;
    p[Layer::Fusion].apply(g, joint)
}

pub fn encode_recipe(g: &mut Graph, p: &BoundParams, sections: &SectionBatch) -> Result<Var> {
    let fused = recipe_pre_embedding(g, p, sections)?;
    g.normalize_rows(fused)
}

/// `images` is `batch x image_dim`.
pub fn encode_image(g: &mut Graph, p: &BoundParams, images: &Tensor) -> Result<Var> {
    check_width("encode_image", images, g.shape(p[Layer::ImageHidden].weight)[0])?;
    let x = g.constant(images.clone());
    let h = p[Layer::ImageHidden].apply(g, x)?;
    let h = g.relu(h);
    let e = p[Layer::ImageOutput].apply(g, h)?;
    g.normalize_rows(e)
}

/// Probability that each recipe embedding comes from the source domain,
/// `batch x 1`.
pub fn discriminate(g: &mut Graph, p: &BoundParams, embeddings: Var) -> Result<Var> {
    let h = p[Layer::DiscriminatorHidden].apply(g, embeddings)?;
    let h = g.relu(h);
    let logit = p[Layer::DiscriminatorOutput].apply(g, h)?;
    Ok(g.sigmoid(logit))
}

/// Independent per-label probabilities, `batch x labels`.
pub fn decode_ingredients(g: &mut Graph, p: &BoundParams, image_embeddings: Var) -> Result<Var> {
    let logits = p[Layer::IngredientDecoder].apply(g, image_embeddings)?;
    Ok(g.sigmoid(logits))
}

/// Reconstructed image features from recipe embeddings, `batch x image_dim`.
pub fn generate_image_feature(g: &mut Graph, p: &BoundParams, recipe_embeddings: Var) -> Result<Var> {
    let h = p[Layer::GeneratorHidden].apply(g, recipe_embeddings)?;
    let h = g.relu(h);
    p[Layer::GeneratorOutput].apply(g, h)
}

impl ModelParams {
    /// Embeds recipes outside of training.
    pub fn embed_recipes<'a>(
        &self,
        features: impl IntoIterator<Item = &'a RecipeFeatures>,
        domain: Domain,
    ) -> Result<EmbeddingBatch> {
        let batch = SectionBatch::from_features(features)?;
        let mut g = Graph::new();
        let p = self.bind_frozen(&mut g);
        let e = encode_recipe(&mut g, &p, &batch)?;
        Ok(EmbeddingBatch {
            matrix: g.value(e).clone(),
            domain,
            modality: Modality::Recipe,
            mixed: false,
        })
    }

    pub fn embed_images<'a>(
        &self,
        images: impl IntoIterator<Item = &'a [f64]>,
        domain: Domain,
    ) -> Result<EmbeddingBatch> {
        let rows: Vec<&[f64]> = images.into_iter().collect();
        let images = Tensor::from_rows(&rows)?;
        let mut g = Graph::new();
        let p = self.bind_frozen(&mut g);
        let e = encode_image(&mut g, &p, &images)?;
        Ok(EmbeddingBatch {
            matrix: g.value(e).clone(),
            domain,
            modality: Modality::Image,
            mixed: false,
        })
    }
}
