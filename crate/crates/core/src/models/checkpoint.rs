//! Model checkpoints: an `HRNN` tensor file plus a JSON manifest next to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelKind, Networks, TrainConfig, TrainedModel};
use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Autoencoder, AutoencoderSpec, DenseMatrix, Layer};

const FORMAT: &str = "hashrec-model";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    kind: ModelKind,
    config: TrainConfig,
    loss_history: Vec<f64>,
    warnings: Vec<String>,
    user_network: Option<AutoencoderSpec>,
    item_network: Option<AutoencoderSpec>,
    tensors: usize,
    train_entries: Option<usize>,
    train_fingerprint: Option<String>,
    /// Caller-supplied provenance (split seed, similarity threshold, ...).
    provenance: serde_json::Value,
}

pub fn manifest_path(tensor_path: &Path) -> PathBuf {
    tensor_path.with_extension("json")
}

/// Writes `path` (tensors) and `path` with a `.json` extension (manifest).
pub fn save_checkpoint(
    model: &TrainedModel,
    path: &Path,
    provenance: serde_json::Value,
) -> Result<()> {
    let mut tensors: Vec<DenseMatrix> = Vec::new();
    if let Some(nets) = &model.networks {
        for net in [&nets.user, &nets.item] {
            for layer in net.encoder().iter().chain(net.decoder()) {
                tensors.push(layer.weight.clone());
                tensors.push(DenseMatrix::new(1, layer.bias.len(), layer.bias.clone())?);
            }
        }
    }
    tensors.push(model.user_embeddings.clone());
    tensors.push(model.item_embeddings.clone());
    let refs: Vec<&DenseMatrix> = tensors.iter().collect();
    checkpoint::save(path, &refs)?;
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        kind: model.kind,
        config: model.config.clone(),
        loss_history: model.loss_history.clone(),
        warnings: model.warnings.clone(),
        user_network: model.networks.as_ref().map(|n| n.user.spec().clone()),
        item_network: model.networks.as_ref().map(|n| n.item.spec().clone()),
        tensors: tensors.len(),
        train_entries: model.inputs.as_ref().map(RatingMatrix::len),
        train_fingerprint: model.inputs.as_ref().map(RatingMatrix::fingerprint),
        provenance,
    };
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))
}

/// Reads a checkpoint. Autoencoder models get `inputs` attached after its
/// fingerprint is checked against the manifest.
pub fn load_checkpoint(path: &Path, inputs: Option<&RatingMatrix>) -> Result<TrainedModel> {
    let mpath = manifest_path(path);
    if !mpath.exists() || !path.exists() {
        return Err(Error::MissingArtifact {
            path: if path.exists() {
                mpath
            } else {
                path.to_path_buf()
            },
            producer: "train",
        });
    }
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if m.format != FORMAT || m.version != 1 {
        return Err(Error::format(&mpath, "not a model manifest"));
    }
    let tensors = checkpoint::load(path)?;
    if tensors.len() != m.tensors || tensors.len() < 2 {
        return Err(Error::format(
            path,
            format!("expected {} tensors, found {}", m.tensors, tensors.len()),
        ));
    }
    let mut it = tensors.into_iter();
    let networks = match (m.user_network, m.item_network) {
        (Some(us), Some(is)) => Some(Networks {
            user: rebuild(us, &mut it).map_err(|e| Error::format(path, e.to_string()))?,
            item: rebuild(is, &mut it).map_err(|e| Error::format(path, e.to_string()))?,
        }),
        (None, None) => None,
        _ => return Err(Error::format(&mpath, "manifest lists only one network")),
    };
    let user_embeddings = it
        .next()
        .ok_or_else(|| Error::format(path, "missing user embeddings"))?;
    let item_embeddings = it
        .next()
        .ok_or_else(|| Error::format(path, "missing item embeddings"))?;
    if it.next().is_some() {
        return Err(Error::format(path, "unexpected trailing tensors"));
    }
    let inputs = match (inputs, &m.train_fingerprint) {
        (Some(r), Some(fp)) if &r.fingerprint() != fp => {
            return Err(Error::Contract(format!(
                "{}: supplied ratings do not match the training data",
                path.display()
            )))
        }
        (Some(r), _) if networks.is_some() => Some(r.clone()),
        _ => None,
    };
    Ok(TrainedModel {
        kind: m.kind,
        config: m.config,
        user_embeddings,
        item_embeddings,
        networks,
        loss_history: m.loss_history,
        warnings: m.warnings,
        inputs,
    })
}

fn rebuild(
    spec: AutoencoderSpec,
    tensors: &mut impl Iterator<Item = DenseMatrix>,
) -> Result<Autoencoder> {
    let enc = spec.encoder_widths().len() - 1;
    let dec = spec.decoder_widths().len() - 1;
    let mut take = |count: usize, inner, last| -> Result<Vec<Layer>> {
        (0..count)
            .map(|i| {
                let weight = tensors
                    .next()
                    .ok_or_else(|| Error::Shape("missing weight".into()))?;
                let bias = tensors
                    .next()
                    .ok_or_else(|| Error::Shape("missing bias".into()))?;
                Ok(Layer {
                    weight,
                    bias: bias.into_data(),
                    activation: if i + 1 == count { last } else { inner },
                })
            })
            .collect()
    };
    let encoder = take(enc, spec.hidden_activation, spec.code_activation)?;
    let decoder = take(dec, spec.hidden_activation, spec.output_activation)?;
    Autoencoder::from_layers(spec, encoder, decoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{derive_similarity, Rating};
    use crate::models::{encode, train_ccsr, train_cf, Side};

    fn data() -> RatingMatrix {
        let entries = (0..6u32)
            .flat_map(|u| {
                (0..5u32)
                    .filter(move |i| (u + i) % 2 == 0)
                    .map(move |i| Rating {
                        user: u,
                        item: i,
                        value: (1 + (u + i) % 5) as u8,
                        timestamp: None,
                    })
            })
            .collect();
        RatingMatrix::new(6, 5, entries).unwrap()
    }

    #[test]
    fn round_trips_both_model_families() {
        let dir = tempfile::tempdir().unwrap();
        let r = data();
        let cfg = TrainConfig {
            epochs: 3,
            hidden: vec![4],
            code_dim: 3,
            ..TrainConfig::default()
        };
        let ccsr = train_ccsr(&r, &derive_similarity(&r, 2), &cfg).unwrap();
        let p = dir.path().join("ccsr.hrnn");
        save_checkpoint(&ccsr, &p, serde_json::json!({"split_seed": 1})).unwrap();
        let back = load_checkpoint(&p, Some(&r)).unwrap();
        assert_eq!(back.networks, ccsr.networks);
        assert_eq!(back.loss_history, ccsr.loss_history);
        assert_eq!(encode(&back, Side::Items).unwrap(), ccsr.item_embeddings);

        let cf = train_cf(&r, &cfg).unwrap();
        let p = dir.path().join("cf.hrnn");
        save_checkpoint(&cf, &p, serde_json::Value::Null).unwrap();
        let back = load_checkpoint(&p, None).unwrap();
        assert_eq!(back.user_embeddings, cf.user_embeddings);
        assert_eq!(back.config, cf.config);
    }

    #[test]
    fn wrong_inputs_and_missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let r = data();
        let cfg = TrainConfig {
            epochs: 1,
            hidden: vec![4],
            code_dim: 2,
            ..TrainConfig::default()
        };
        let m = train_ccsr(&r, &derive_similarity(&r, 2), &cfg).unwrap();
        let p = dir.path().join("m.hrnn");
        save_checkpoint(&m, &p, serde_json::Value::Null).unwrap();
        let other = RatingMatrix::new(
            6,
            5,
            vec![Rating {
                user: 0,
                item: 0,
                value: 3,
                timestamp: None,
            }],
        )
        .unwrap();
        assert!(matches!(
            load_checkpoint(&p, Some(&other)),
            Err(Error::Contract(_))
        ));
        let missing = load_checkpoint(&dir.path().join("none.hrnn"), None);
        assert!(matches!(
            missing,
            Err(Error::MissingArtifact {
                producer: "train",
                ..
            })
        ));
    }
}
