//! Checkpoint directories: weight blob, config echo and class table.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dataset::ClassTable;
use crate::error::{Error, Result};
use crate::nn::{load_weights, save_weights, Module};

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CONFIG_FILE: &str = "config.json";
pub const CLASSES_FILE: &str = "classes.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_checkpoint<C: Serialize>(dir: &Path, model: &mut dyn Module, config: &C) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_weights(model, &dir.join(WEIGHTS_FILE))?;
    write_json(&dir.join(CONFIG_FILE), config)?;
    write_json(&dir.join(CLASSES_FILE), &ClassTable::default())
}

/// Reads the config echo of a checkpoint directory.
pub fn read_checkpoint_config<C: DeserializeOwned>(dir: &Path) -> Result<C> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let classes: ClassTable = read_json(&dir.join(CLASSES_FILE))?;
    if classes != ClassTable::default() {
        return Err(Error::Checkpoint(format!(
            "{} was trained with a different class table",
            dir.display()
        )));
    }
    read_json(&dir.join(CONFIG_FILE))
}

pub fn load_checkpoint_weights(dir: &Path, model: &mut dyn Module) -> Result<()> {
    load_weights(model, &dir.join(WEIGHTS_FILE))
}
