//! Output destinations and reproduction metadata.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// Environment variable that replaces the directory of every output file.
pub const OUT_DIR_VAR: &str = "WISHART_OUT_DIR";

/// Where to write: `--out` with its directory replaced by `WISHART_OUT_DIR`
/// when that is set, `default_name` inside `WISHART_OUT_DIR` when `--out` is
/// absent, and standard output otherwise.
pub fn destination(out: Option<&Path>, default_name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(OUT_DIR_VAR)
        .filter(|d| !d.is_empty())
        .map(PathBuf::from);
    match (dir, out) {
        (Some(dir), Some(p)) => Some(dir.join(p.file_name().unwrap_or(default_name.as_ref()))),
        (Some(dir), None) => Some(dir.join(default_name)),
        (None, Some(p)) => Some(p.to_path_buf()),
        (None, None) => None,
    }
}

pub fn emit(text: &str, dest: Option<&Path>) -> anyhow::Result<()> {
    match dest {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Metadata carried by every output. `config` holds the resolved flag
/// values; passing the file back through `--config` reruns the command.
pub fn metadata<C: Serialize, R: Serialize>(command: &str, config: &C, result: &R) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "result": result,
    })
}
