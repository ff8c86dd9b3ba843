use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_path: String,
    pub label: String,
    pub split: Split,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub scene_ref: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|s| !s.is_empty()))
}

/// CSV manifest `clip_path,label,split,scene_ref`. Relative paths resolve
/// against the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, rows: Vec<ManifestRow>) -> Self {
        Self { root: root.into(), rows }
    }

    /// Reads and validates a manifest; `classes` may be empty to skip the
    /// label check.
    pub fn load(path: impl AsRef<Path>, classes: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_reader(File::open(path)?);
        let rows = reader.deserialize().collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self { root, rows };
        m.validate(classes)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn validate(&self, classes: &[String]) -> Result<()> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for row in &self.rows {
            if !classes.is_empty() && !classes.contains(&row.label) {
                return Err(Error::Manifest(format!("label `{}` is not a configured class", row.label)));
            }
            if !self.resolve(&row.clip_path).exists() {
                return Err(Error::Manifest(format!("clip `{}` does not exist", row.clip_path)));
            }
            if let Some(prev) = seen.insert(&row.clip_path, row.split) {
                if prev != row.split {
                    return Err(Error::Manifest(format!(
                        "clip `{}` appears in both {} and {}",
                        row.clip_path,
                        prev.as_str(),
                        row.split.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = self.rows.iter().map(|r| r.label.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}
