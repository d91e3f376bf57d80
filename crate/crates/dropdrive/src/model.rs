//! Model files: one JSON header line, then every parameter as a
//! little-endian `f32`, layer by layer, kernel before bias.

use std::fs;
use std::io::Write;
use std::path::Path;

use dropdrive_core::nn::{LayerParams, Network, NetworkSpec};
use dropdrive_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};
use crate::json::ensure_parent;

pub const MODEL_FORMAT: &str = "dropdrive-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub param_count: usize,
    /// Training-set size after augmentation, when known.
    pub n_train: Option<usize>,
}

/// A network with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub net: Network,
    pub n_train: Option<usize>,
}

fn header_for(net: &Network, n_train: Option<usize>) -> ModelHeader {
    ModelHeader {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        spec: net.spec().clone(),
        param_count: net.param_count(),
        n_train,
    }
}

/// Serialized bytes of a model.
pub fn encode_model(net: &Network, n_train: Option<usize>) -> Vec<u8> {
    let mut out = serde_json::to_vec(&header_for(net, n_train)).expect("header serializes");
    out.push(b'\n');
    for p in net.params().iter().flatten() {
        for &v in p.kernel.data().iter().chain(p.bias.data()) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Short content hash used as model id.
pub fn model_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_model(path: &Path, net: &Network, n_train: Option<usize>) -> Result<String> {
    let bytes = encode_model(net, n_train);
    ensure_parent(path)?;
    let mut f = fs::File::create(path).at(path)?;
    f.write_all(&bytes).at(path)?;
    Ok(model_id(&bytes))
}

pub fn decode_model(path: &Path, bytes: &[u8]) -> Result<ModelFile> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[..nl]).at(path)?;
    if header.format != MODEL_FORMAT || header.version != MODEL_VERSION {
        return Err(Error::format(
            path,
            format!(
                "unsupported model format {} version {} (expected {MODEL_FORMAT} version {MODEL_VERSION})",
                header.format, header.version
            ),
        ));
    }
    let body = &bytes[nl + 1..];
    let expected = header.param_count * 4;
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!("weights hold {} bytes, expected {expected}", body.len()),
        ));
    }
    let template = Network::new(header.spec.clone(), 0)?;
    if template.param_count() != header.param_count {
        return Err(Error::format(
            path,
            format!(
                "header declares {} parameters but its layers hold {}",
                header.param_count,
                template.param_count()
            ),
        ));
    }
    let mut values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut take = |t: &Tensor| -> Result<Tensor> {
        let data: Vec<f64> = values.by_ref().take(t.len()).collect();
        Ok(Tensor::new(t.shape().to_vec(), data)?)
    };
    let mut params = Vec::with_capacity(template.params().len());
    for p in template.params() {
        params.push(match p {
            Some(p) => Some(LayerParams {
                kernel: take(&p.kernel)?,
                bias: take(&p.bias)?,
            }),
            None => None,
        });
    }
    Ok(ModelFile {
        net: Network::from_params(header.spec, params)?,
        n_train: header.n_train,
    })
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = fs::read(path).at(path)?;
    decode_model(path, &bytes)
}

/// The network as it reads back from a model file.
pub fn round_to_f32(net: &Network) -> Result<Network> {
    let params = net
        .params()
        .iter()
        .map(|p| {
            p.as_ref().map(|p| {
                let mut p = p.clone();
                p.kernel.round_to_f32();
                p.bias.round_to_f32();
                p
            })
        })
        .collect();
    Ok(Network::from_params(net.spec().clone(), params)?)
}
