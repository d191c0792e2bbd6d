use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MismatchError, MismatchModel, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "sea-mismatch-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    embed_dim: usize,
    proj_dim: usize,
    w: f64,
    b: f64,
    w_q: Vec<f64>,
    w_k: Vec<f64>,
}

/// `model.json` → `model.json.config.txt`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".config.txt");
    PathBuf::from(name)
}

fn err(path: &Path, message: impl ToString) -> MismatchError {
    MismatchError::Checkpoint {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Writes the model as JSON (matrices row-major) and the training config as
/// a `key = value` sidecar.
pub fn save_checkpoint(path: &Path, model: &MismatchModel, config: &TrainConfig) -> Result<(), MismatchError> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        embed_dim: model.embed_dim,
        proj_dim: model.proj_dim,
        w: model.w,
        b: model.b,
        w_q: model.w_q.clone(),
        w_k: model.w_k.clone(),
    };
    let mut json = serde_json::to_string(&file).map_err(|e| err(path, e))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| err(path, e))?;
    let sidecar = format!(
        "learning_rate = {}\nsteps = {}\nproj_dim = {}\nseed = {}\ninit_scale = {}\n",
        config.learning_rate, config.steps, config.proj_dim, config.seed, config.init_scale
    );
    let side = sidecar_path(path);
    fs::write(&side, sidecar).map_err(|e| err(&side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MismatchModel, MismatchError> {
    let text = fs::read_to_string(path).map_err(|e| err(path, e))?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| err(path, e))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(err(path, format!("unknown format `{}`", file.format)));
    }
    MismatchModel::new(file.embed_dim, file.proj_dim, file.w_q, file.w_k, file.w, file.b).map_err(|e| err(path, e))
}
