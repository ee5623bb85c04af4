//! Output directories and run manifests.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dkglab::report::Manifest;

use crate::params::Params;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("DKGLAB_GIT_REV"));

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates `<out>/<command>/<label or UTC timestamp>/`.
    pub fn create(out: &Path, command: &str, label: Option<&str>) -> Result<Self> {
        let leaf = match label {
            Some(l) => l.to_string(),
            None => chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string(),
        };
        let path = out.join(command).join(leaf);
        std::fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path })
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path.join(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_manifest(&self, command: &str, params: &Params, seed: u64, grid: Option<serde_json::Value>) -> Result<()> {
        let m = Manifest {
            command: command.to_string(),
            params: params.resolved(),
            seed,
            grid,
            code_version: CODE_VERSION.to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
        };
        self.write("manifest.json", m.to_json())?;
        Ok(())
    }
}
