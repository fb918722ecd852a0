use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    /// Section feature dimension.
    pub feature_dim: usize,
    pub image_dim: usize,
    pub hidden: usize,
    pub embedding: usize,
    /// Number of unified ingredient labels.
    pub labels: usize,
}

impl ModelDims {
    pub fn new(feature_dim: usize, image_dim: usize, labels: usize) -> Self {
        ModelDims {
            feature_dim,
            image_dim,
            hidden: 128,
            embedding: 32,
            labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("feature_dim", self.feature_dim),
            ("image_dim", self.image_dim),
            ("hidden", self.hidden),
            ("embedding", self.embedding),
            ("labels", self.labels),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        Ok(())
    }
}

/// Every dense layer of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    TitleProjection,
    IngredientProjection,
    InstructionProjection,
    Fusion,
    ImageHidden,
    ImageOutput,
    DiscriminatorHidden,
    DiscriminatorOutput,
    IngredientDecoder,
    GeneratorHidden,
    GeneratorOutput,
}

impl Layer {
    pub const ALL: [Layer; 11] = [
        Layer::TitleProjection,
        Layer::IngredientProjection,
        Layer::InstructionProjection,
        Layer::Fusion,
        Layer::ImageHidden,
        Layer::ImageOutput,
        Layer::DiscriminatorHidden,
        Layer::DiscriminatorOutput,
        Layer::IngredientDecoder,
        Layer::GeneratorHidden,
        Layer::GeneratorOutput,
    ];

    /// `(weight name, bias name)`.
    pub fn names(self) -> (&'static str, &'static str) {
        match self {
            Layer::TitleProjection => ("title_projection.weight", "title_projection.bias"),
            Layer::IngredientProjection => ("ingredient_projection.weight", "ingredient_projection.bias"),
            Layer::InstructionProjection => ("instruction_projection.weight", "instruction_projection.bias"),
            Layer::Fusion => ("fusion.weight", "fusion.bias"),
            Layer::ImageHidden => ("image_hidden.weight", "image_hidden.bias"),
            Layer::ImageOutput => ("image_output.weight", "image_output.bias"),
            Layer::DiscriminatorHidden => ("discriminator_hidden.weight", "discriminator_hidden.bias"),
            Layer::DiscriminatorOutput => ("discriminator_output.weight", "discriminator_output.bias"),
            Layer::IngredientDecoder => ("ingredient_decoder.weight", "ingredient_decoder.bias"),
            Layer::GeneratorHidden => ("generator_hidden.weight", "generator_hidden.bias"),
            Layer::GeneratorOutput => ("generator_output.weight", "generator_output.bias"),
        }
    }

    /// `(fan_in, fan_out)`.
    pub fn shape(self, d: &ModelDims) -> (usize, usize) {
        match self {
            Layer::TitleProjection | Layer::IngredientProjection | Layer::InstructionProjection => {
                (d.feature_dim, d.hidden)
            }
            Layer::Fusion => (3 * d.hidden, d.embedding),
            Layer::ImageHidden => (d.image_dim, d.hidden),
            Layer::ImageOutput => (d.hidden, d.embedding),
            Layer::DiscriminatorHidden => (d.embedding, d.hidden),
            Layer::DiscriminatorOutput => (d.hidden, 1),
            Layer::IngredientDecoder => (d.embedding, d.labels),
            Layer::GeneratorHidden => (d.embedding, d.hidden),
            Layer::GeneratorOutput => (d.hidden, d.image_dim),
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn is_discriminator(self) -> bool {
        matches!(self, Layer::DiscriminatorHidden | Layer::DiscriminatorOutput)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weight: Tensor,
    /// `1 x fan_out`.
    pub bias: Tensor,
}

/// All trainable weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub seed: u64,
    layers: Vec<Dense>,
}

impl Index<Layer> for ModelParams {
    type Output = Dense;

    fn index(&self, l: Layer) -> &Dense {
        &self.layers[l.index()]
    }
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Layer::ALL
            .iter()
            .map(|&l| {
                let (fan_in, fan_out) = l.shape(&dims);
                let bound = glorot_bound(fan_in, fan_out);
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
                Dense {
                    weight: Tensor::new(vec![fan_in, fan_out], data).expect("layer shape"),
                    bias: Tensor::zeros(&[1, fan_out]),
                }
            })
            .collect();
        Ok(ModelParams { dims, seed, layers })
    }

    pub fn layer_mut(&mut self, l: Layer) -> &mut Dense {
        &mut self.layers[l.index()]
    }

    /// `(name, tensor)` in canonical order: each layer's weight, then bias.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        Layer::ALL
            .iter()
            .flat_map(|&l| {
                let (w, b) = l.names();
                let d = &self[l];
                [(w, &d.weight), (b, &d.bias)]
            })
            .collect()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        Layer::ALL
            .iter()
            .zip(self.layers.iter_mut())
            .flat_map(|(&l, d)| {
                let (w, b) = l.names();
                [(w, &mut d.weight), (b, &mut d.bias)]
            })
            .collect()
    }

    /// Rebuilds parameters from tensors in [`named_tensors`](Self::named_tensors) order.
    pub fn from_named(dims: ModelDims, seed: u64, mut tensors: Vec<(String, Tensor)>) -> Result<Self> {
        dims.validate()?;
        let mut layers = Vec::with_capacity(Layer::ALL.len());
        tensors.reverse();
        for l in Layer::ALL {
            let (wn, bn) = l.names();
            let (fan_in, fan_out) = l.shape(&dims);
            let mut take = |name: &str, shape: [usize; 2]| -> Result<Tensor> {
                let (got, t) = tensors
                    .pop()
                    .ok_or_else(|| Error::InvalidArgument(format!("missing weight `{name}`")))?;
                if got != name {
                    return Err(Error::InvalidArgument(format!("expected weight `{name}`, found `{got}`")));
                }
                if t.shape() != shape {
                    return Err(Error::shape("checkpoint", &shape, t.shape()));
                }
                Ok(t)
            };
            let weight = take(wn, [fan_in, fan_out])?;
            let bias = take(bn, [1, fan_out])?;
            layers.push(Dense { weight, bias });
        }
        if let Some((name, _)) = tensors.pop() {
            return Err(Error::InvalidArgument(format!("unexpected weight `{name}`")));
        }
        Ok(ModelParams { dims, seed, layers })
    }

    /// Copies every weight into `graph` as a trainable leaf.
    pub fn bind(&self, graph: &mut Graph) -> BoundParams {
        self.bind_with(graph, true)
    }

    /// Copies every weight into `graph` as a constant.
    pub fn bind_frozen(&self, graph: &mut Graph) -> BoundParams {
        self.bind_with(graph, false)
    }

    fn bind_with(&self, graph: &mut Graph, trainable: bool) -> BoundParams {
        let mut leaf = |t: &Tensor| {
            if trainable {
                graph.param(t.clone())
            } else {
                graph.constant(t.clone())
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|d| BoundDense {
                weight: leaf(&d.weight),
                bias: leaf(&d.bias),
            })
            .collect();
        BoundParams { layers }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
}

impl BoundDense {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.affine(x, self.weight, self.bias)
    }
}

/// Graph handles of every weight, for one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    layers: Vec<BoundDense>,
}

impl Index<Layer> for BoundParams {
    type Output = BoundDense;

    fn index(&self, l: Layer) -> &BoundDense {
        &self.layers[l.index()]
    }
}

impl BoundParams {
    /// Handles in [`ModelParams::named_tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|d| [d.weight, d.bias]).collect()
    }
}
