//! Checkpoints: a JSON header line followed by one line per named weight.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelDims, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const FORMAT: &str = "recmix-checkpoint/1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Optimizer steps taken.
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    dims: ModelDims,
    seed: u64,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Blob<T> {
    name: String,
    shape: Vec<usize>,
    data: T,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            format: FORMAT.into(),
            dims: self.params.dims,
            seed: self.params.seed,
            step: self.step,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (name, t) in self.params.named_tensors() {
            let blob = Blob {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data(),
            };
            serde_json::to_writer(&mut out, &blob)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty checkpoint".into(),
        })??;
        let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported format `{}`", header.format),
            });
        }
        let mut tensors = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: n + 2, message };
            let blob: Blob<Vec<f64>> = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let t = Tensor::new(blob.shape, blob.data).map_err(|e| parse_err(e.to_string()))?;
            tensors.push((blob.name, t));
        }
        let params = ModelParams::from_named(header.dims, header.seed, tensors)?;
        Ok(Checkpoint {
            params,
            step: header.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let dims = ModelDims {
            feature_dim: 3,
            image_dim: 2,
            hidden: 4,
            embedding: 3,
            labels: 5,
        };
        Checkpoint {
            params: ModelParams::init(dims, 42).unwrap(),
            step: 17,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        let err = Checkpoint::read_from(truncated.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing weight"), "{err}");
    }
}
