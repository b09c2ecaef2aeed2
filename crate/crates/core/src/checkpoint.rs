//! Checkpoint bundles: one directory holding the parameters, the model
//! config, the vocabulary, and (for structural PE) the node-embedding CSV.
//! Files are byte-stable across runs given identical training.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::Vocabulary;
use crate::model::{init_params, ModelConfig, ModelParams};
use crate::ontology::NodeEmbeddingTable;
use crate::pos_encoding::{resolve_spe_inputs, PeMode};
use crate::tensor::Tensor;

pub const PARAMS_FILE: &str = "params.json";
pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const SPE_FILE: &str = "spe_embeddings.csv";

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    params: Vec<ParamEntry>,
}

pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub vocab: Vocabulary,
    pub spe_table: Option<NodeEmbeddingTable>,
}

pub fn save_checkpoint(
    dir: &Path,
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    spe_table: Option<&NodeEmbeddingTable>,
) -> Result<PathBuf> {
    if params.config.pe.mode == PeMode::Structural && spe_table.is_none() {
        return Err(Error::Param(
            "structural-PE checkpoint needs the embedding table".into(),
        ));
    }
    if !params.all_finite() {
        return Err(Error::Param(
            "refusing to save non-finite parameters".into(),
        ));
    }
    fs::create_dir_all(dir)?;

    let entries: Vec<ParamEntry> = params
        .named_params()
        .into_iter()
        .map(|(name, p)| ParamEntry {
            name,
            shape: p.value.shape().to_vec(),
            values: p.value.values().to_vec(),
        })
        .collect();
    fs::write(
        dir.join(PARAMS_FILE),
        serde_json::to_string(&ParamsFile { params: entries })?,
    )?;
    fs::write(
        dir.join(CONFIG_FILE),
        serde_json::to_string_pretty(&params.config)?,
    )?;
    fs::write(
        dir.join(VOCAB_FILE),
        serde_json::to_string(&vocab.to_json())?,
    )?;
    if let Some(table) = spe_table {
        let mut buf = Vec::new();
        table.to_csv_writer(&mut buf)?;
        fs::write(dir.join(SPE_FILE), buf)?;
    }
    Ok(dir.to_path_buf())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let config: ModelConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let vocab = Vocabulary::from_json(&serde_json::from_str::<serde_json::Value>(
        &fs::read_to_string(dir.join(VOCAB_FILE))?,
    )?)?;
    if vocab.size() != config.vocab_size {
        return Err(Error::Incompatible(format!(
            "vocabulary has {} tokens, config expects {}",
            vocab.size(),
            config.vocab_size
        )));
    }

    let spe_table = if config.pe.mode == PeMode::Structural {
        let file = fs::File::open(dir.join(SPE_FILE))?;
        Some(NodeEmbeddingTable::from_csv_reader(
            std::io::BufReader::new(file),
        )?)
    } else {
        None
    };
    let spe_inputs = spe_table
        .as_ref()
        .map(|table| resolve_spe_inputs::<f32>(table, &vocab));

    let mut params = init_params::<f32>(&config, 0, spe_inputs)?;
    let file: ParamsFile = serde_json::from_str(&fs::read_to_string(dir.join(PARAMS_FILE))?)?;
    let mut stored = file.params.into_iter();
    for (name, p) in params.named_params_mut() {
        let entry = stored.next().ok_or_else(|| {
            Error::Incompatible(format!("checkpoint is missing parameter '{name}'"))
        })?;
        if entry.name != name {
            return Err(Error::Incompatible(format!(
                "parameter order mismatch: expected '{name}', found '{}'",
                entry.name
            )));
        }
        if entry.shape != p.value.shape() {
            return Err(Error::Incompatible(format!(
                "parameter '{name}' has shape {:?}, expected {:?}",
                entry.shape,
                p.value.shape()
            )));
        }
        let tensor = Tensor::from_vec(&entry.shape, entry.values);
        if !tensor.all_finite() {
            return Err(Error::Incompatible(format!(
                "parameter '{name}' contains non-finite values"
            )));
        }
        p.value = tensor;
    }
    if stored.next().is_some() {
        return Err(Error::Incompatible(
            "checkpoint has extra parameters".into(),
        ));
    }

    Ok(Checkpoint {
        params,
        vocab,
        spe_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{Trace, SOS};
    use crate::model::forward;
    use crate::ontology::{build_laplacian, node_embeddings};
    use crate::pos_encoding::PeConfig;
    use crate::synthgen::{gen_ontology, SynthConfig};

    fn fixture(mode: PeMode) -> (ModelParams<f32>, Vocabulary, Option<NodeEmbeddingTable>) {
        let synth = SynthConfig {
            n_types: 3,
            activities_per_type: 2,
            ..SynthConfig::default()
        };
        let graph = gen_ontology(&synth).unwrap();
        let activities: Vec<String> = graph
            .nodes()
            .iter()
            .filter(|n| n.kind == crate::ontology::NodeKind::Activity)
            .map(|n| n.name.clone())
            .collect();
        let vocab = Vocabulary::build(&[Trace {
            case_id: "c".into(),
            activities,
        }]);
        let table = (mode == PeMode::Structural)
            .then(|| node_embeddings(&build_laplacian(&graph).unwrap(), &graph, 4).unwrap());
        let config = ModelConfig {
            d_model: 8,
            hidden: 6,
            heads: 2,
            layers: 1,
            dropout: 0.1,
            vocab_size: vocab.size(),
            pe: PeConfig { mode, spe_k: 4 },
            ffn_in_blocks: false,
        };
        let inputs = table.as_ref().map(|t| resolve_spe_inputs::<f32>(t, &vocab));
        let params = init_params::<f32>(&config, 99, inputs).unwrap();
        (params, vocab, table)
    }

    #[test]
    fn round_trip_preserves_forward_exactly() {
        for mode in [PeMode::None, PeMode::Sinusoidal, PeMode::Structural] {
            let (params, vocab, table) = fixture(mode);
            let dir = tempfile::tempdir().unwrap();
            save_checkpoint(dir.path(), &params, &vocab, table.as_ref()).unwrap();
            let restored = load_checkpoint(dir.path()).unwrap();

            let ids = [SOS, 3, 4, 5];
            let before = forward(&params, &ids).unwrap();
            let after = forward(&restored.params, &ids).unwrap();
            assert_eq!(before.values(), after.values(), "mode {mode:?}");
            assert_eq!(restored.vocab, vocab);
        }
    }

    #[test]
    fn save_is_byte_stable() {
        let (params, vocab, _) = fixture(PeMode::Sinusoidal);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        save_checkpoint(d1.path(), &params, &vocab, None).unwrap();
        save_checkpoint(d2.path(), &params, &vocab, None).unwrap();
        for file in [PARAMS_FILE, CONFIG_FILE, VOCAB_FILE] {
            let a = fs::read(d1.path().join(file)).unwrap();
            let b = fs::read(d2.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs");
        }
    }

    #[test]
    fn tampered_checkpoint_is_rejected() {
        let (params, vocab, _) = fixture(PeMode::None);
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &params, &vocab, None).unwrap();

        let path = dir.path().join(PARAMS_FILE);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("token_embedding", "token_embeddinX");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn missing_checkpoint_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_checkpoint(&dir.path().join("nope")),
            Err(Error::Io(_))
        ));
    }
}
