use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use super::{decode_image, ImageRaster};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub camera: String,
    pub burst: u32,
}

/// List of `(path, camera, burst id)` rows, stored as UTF-8
/// `path<TAB>camera<TAB>burst_id` lines. Relative paths resolve against the
/// manifest's own directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!(
                    "manifest line {}: expected 3 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let burst = fields[2].trim().parse::<u32>().map_err(|e| {
                Error::Format(format!("manifest line {}: burst id: {e}", lineno + 1))
            })?;
            entries.push(ManifestEntry {
                path: PathBuf::from(fields[0]),
                camera: fields[1].to_string(),
                burst,
            });
        }
        let manifest = Self { entries };
        manifest.check_bursts()?;
        Ok(manifest)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.path.display(), e.camera, e.burst))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for e in &mut manifest.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(manifest)
    }

    pub fn cameras(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.camera.clone()).collect()
    }

    /// A burst id may only ever belong to one camera.
    fn check_bursts(&self) -> Result<()> {
        let mut owner: HashMap<u32, &str> = HashMap::new();
        for e in &self.entries {
            match owner.get(&e.burst) {
                Some(cam) if *cam != e.camera => {
                    return Err(Error::Validation(format!(
                        "burst {} shared by cameras {} and {}",
                        e.burst, cam, e.camera
                    )))
                }
                _ => {
                    owner.insert(e.burst, &e.camera);
                }
            }
        }
        Ok(())
    }

    /// Decodes every referenced image, tagging it with its camera and burst.
    pub fn load_images(&self) -> Result<Vec<ImageRaster>> {
        self.entries
            .iter()
            .map(|e| {
                let bytes = std::fs::read(&e.path)?;
                Ok(decode_image(&bytes)?.with_camera(e.camera.clone(), Some(e.burst)))
            })
            .collect()
    }
}
