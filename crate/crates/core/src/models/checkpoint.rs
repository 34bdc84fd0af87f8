//! Checkpoints: parameters in an ST4D container (one entry per parameter
//! path) and a JSON header next to it (`<name>.json`) recording the model
//! configuration and build seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{build, Network};
use super::params::ModelParams;
use crate::data::st4d::{read_tensor_file, write_tensor_file, StoredTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FORMAT: &str = "volstm-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ModelConfig,
}

pub fn header_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, network: &Network<T>, seed: u64) -> Result<()> {
    let path = path.as_ref();
    let entries: Vec<(String, StoredTensor)> = network
        .params
        .iter()
        .map(|(k, v)| (k.to_string(), StoredTensor::from_tensor(v)))
        .collect();
    write_tensor_file(path, &entries)?;
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: 1,
        seed,
        config: network.config.clone(),
    };
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    let hp = header_path(path);
    std::fs::write(&hp, json + "\n").map_err(|e| Error::io(hp, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(Network<T>, CheckpointHeader)> {
    let path = path.as_ref();
    let hp = header_path(path);
    let text = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", hp.display())))?;
    if header.format != FORMAT || header.version != 1 {
        return Err(Error::Data(format!(
            "{} is not a version-1 {FORMAT} header",
            hp.display()
        )));
    }
    let template: ModelParams<T> = build(&header.config, 0)?;
    let params: ModelParams<T> = read_tensor_file(path)?
        .into_iter()
        .map(|(k, v)| (k, v.to_tensor()))
        .collect();
    let expected: Vec<_> = template.iter().map(|(k, v)| (k, v.dims())).collect();
    let found: Vec<_> = params.iter().map(|(k, v)| (k, v.dims())).collect();
    if expected != found {
        return Err(Error::Data(format!(
            "{} does not hold the parameters its header's configuration requires",
            path.display()
        )));
    }
    Ok((
        Network {
            config: header.config.clone(),
            params,
        },
        header,
    ))
}
