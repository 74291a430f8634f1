//! Network checkpoints: JSON layer shapes plus base64 of little-endian `f64` parameters.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Activation, Dense, ProjectionNet};
use crate::{Error, Result};

const FORMAT: &str = "relfeed-projection-net";

#[derive(Serialize, Deserialize)]
struct LayerShape {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    layers: Vec<LayerShape>,
    /// Per layer: weights (row-major, out x in) then biases.
    params_f64le: String,
}

pub fn to_checkpoint_json(net: &ProjectionNet) -> String {
    let bytes: Vec<u8> = net.params().iter().flat_map(|p| p.to_le_bytes()).collect();
    let ck = Checkpoint {
        format: FORMAT.into(),
        version: 1,
        layers: net
            .layers()
            .iter()
            .map(|l| LayerShape {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                activation: l.activation,
            })
            .collect(),
        params_f64le: STANDARD.encode(bytes),
    };
    serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
}

pub fn from_checkpoint_json(s: &str) -> Result<ProjectionNet> {
    let ck: Checkpoint = serde_json::from_str(s)?;
    if ck.format != FORMAT || ck.version != 1 {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    let bytes = STANDARD
        .decode(ck.params_f64le.as_bytes())
        .map_err(|e| Error::InvalidConfig(format!("checkpoint params: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidConfig("checkpoint params not a multiple of 8 bytes".into()));
    }
    let mut params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut layers = Vec::with_capacity(ck.layers.len());
    for shape in &ck.layers {
        let weights: Vec<f64> = params.by_ref().take(shape.in_dim * shape.out_dim).collect();
        let bias: Vec<f64> = params.by_ref().take(shape.out_dim).collect();
        layers.push(Dense {
            in_dim: shape.in_dim,
            out_dim: shape.out_dim,
            weights,
            bias,
            activation: shape.activation,
        });
    }
    if params.next().is_some() {
        return Err(Error::InvalidConfig("trailing checkpoint params".into()));
    }
    ProjectionNet::from_layers(layers)
}
