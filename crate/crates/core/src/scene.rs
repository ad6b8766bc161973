//! JSON scene files: disks, horizon parameters and buffer width.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Disk, HorizonSpec};
use crate::vec2::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskSpec {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub marker_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default)]
    pub label: Option<String>,
    pub disks: Vec<DiskSpec>,
    pub horizon: HorizonSpec,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub config: Configuration,
    pub horizon: HorizonSpec,
    pub beta: f64,
}

impl Scene {
    pub fn from_json(text: &str, default_label: &str) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_scene(default_label)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
        Self::from_json(&text, stem)
    }
}

impl SceneFile {
    pub fn into_scene(self, default_label: &str) -> Result<Scene> {
        let horizon = HorizonSpec::new(self.horizon.t, self.horizon.phi)?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Parse(format!("beta = {} must be > 0", self.beta)));
        }
        let disks = self
            .disks
            .iter()
            .map(|d| Disk::new(Vec2::new(d.center[0], d.center[1]), d.radius, d.marker_angle))
            .collect();
        let label = self.label.unwrap_or_else(|| default_label.to_string());
        Ok(Scene {
            config: Configuration::new(disks, label)?,
            horizon,
            beta: self.beta,
        })
    }
}
