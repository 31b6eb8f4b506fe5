//! TOML run configuration.
//!
//! A single run names its input files and carries the refit settings:
//!
//! ```toml
//! garment = "garment.json"
//! body = "body.obj"
//! target = "target.obj"
//! target_areas = "target_areas.json"   # optional
//!
//! [refit]
//! max_iterations = 200
//! [refit.sim]
//! iterations = 50
//! [[refit.pinned]]
//! panel = "front"
//! vertex = 272
//! ```
//!
//! A batch file instead holds `[[runs]]` tables, each a full run with a
//! `name`. Relative paths resolve against the directory of the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refit::RefitConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output subdirectory name inside a batch.
    #[serde(default)]
    pub name: Option<String>,
    pub garment: PathBuf,
    /// Collision body; omitted means a free drape.
    #[serde(default)]
    pub body: Option<PathBuf>,
    #[serde(default = "default_body_margin")]
    pub body_margin: f64,
    pub target: PathBuf,
    /// JSON object of per-panel target areas; missing panels are measured
    /// on the target mesh.
    #[serde(default)]
    pub target_areas: Option<PathBuf>,
    /// Output directory, overridden by `--out`.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub refit: RefitConfig,
}

fn default_body_margin() -> f64 {
    3e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchFile {
    runs: Vec<RunConfig>,
}

/// One or more runs loaded from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub path: PathBuf,
    pub runs: Vec<RunConfig>,
    pub batch: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Make every relative path absolute with respect to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.garment);
        fix(&mut self.target);
        for p in [&mut self.body, &mut self.target_areas, &mut self.out]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Every input file the run reads.
    pub fn inputs(&self) -> Vec<&Path> {
        let mut v = vec![self.garment.as_path()];
        v.extend(self.body.as_deref());
        v.push(&self.target);
        v.extend(self.target_areas.as_deref());
        v
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.body_margin >= 0.0) {
            return Err(Error::Validation("body_margin must be non-negative".into()));
        }
        self.refit.validate()
    }
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: toml::Table = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let batch = value.contains_key("runs");
        let mut runs = if batch {
            let b: BatchFile = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
            b.runs
        } else {
            vec![RunConfig::from_toml(&text).map_err(|e| Error::parse(path, e))?]
        };
        if runs.is_empty() {
            return Err(Error::Validation(format!("{}: batch has no runs", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for r in &mut runs {
            r.resolve(base);
        }
        if batch {
            let mut names = std::collections::BTreeSet::new();
            for (i, r) in runs.iter().enumerate() {
                let n = r.name.clone().unwrap_or_else(|| format!("run{i}"));
                if !names.insert(n.clone()) {
                    return Err(Error::Validation(format!(
                        "{}: duplicate run name '{n}'",
                        path.display()
                    )));
                }
            }
        }
        Ok(ConfigFile {
            path: path.to_path_buf(),
            runs,
            batch,
        })
    }
}
