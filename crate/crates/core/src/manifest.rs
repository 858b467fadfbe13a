//! Corpus manifests written by `simulate` and read by `separate`/`evaluate`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room::{ArrayGeometry, SceneSpec};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub sample_rate: u32,
    pub config_fingerprint: String,
    pub geometry: ArrayGeometry,
    pub utterances: Vec<UtteranceEntry>,
    /// Directory that relative paths resolve against; set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceEntry {
    pub id: String,
    pub scene: SceneSpec,
    pub paths: UtterancePaths,
    /// Target direction of arrival, degrees.
    pub doa_deg: f64,
    pub samples: usize,
    /// Start samples of the dry target and interferer in the mixture.
    pub target_offset: usize,
    pub interferer_offset: usize,
    /// Half-open sample span where both talkers are active.
    pub overlap: [usize; 2],
    pub interferer_gain: f64,
}

/// Paths relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtterancePaths {
    pub mixture: PathBuf,
    pub target: PathBuf,
    pub interferer: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported manifest schema version {}",
                path.display(),
                m.schema_version
            )));
        }
        m.geometry.validate()?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.base_dir.join(relative)
    }
}
