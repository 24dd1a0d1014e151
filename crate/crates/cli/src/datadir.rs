//! Labeled image directories: image files plus a `labels.csv` index.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use moire_core::classifier::{Dataset, Sample, TEXTURE_CLASSES};

use crate::imageio::{read_image, write_image};

pub const INDEX: &str = "labels.csv";

pub fn write_dataset(dir: &Path, data: &Dataset, extension: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut index = String::from("file,label\n");
    for (k, s) in data.samples.iter().enumerate() {
        let name = format!("{k:04}_{}.{extension}", TEXTURE_CLASSES.get(s.label).copied().unwrap_or("class"));
        write_image(&dir.join(&name), &s.image)?;
        index.push_str(&format!("{name},{}\n", s.label));
    }
    let path = dir.join(INDEX);
    fs::write(&path, index).with_context(|| format!("cannot write {}", path.display()))
}

/// Reads up to `limit` samples in index order.
pub fn read_dataset(dir: &Path, limit: Option<usize>) -> Result<Vec<Sample>> {
    let path = dir.join(INDEX);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut samples = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() || limit.is_some_and(|l| samples.len() >= l) {
            continue;
        }
        let Some((file, label)) = line.split_once(',') else {
            bail!("{}:{}: expected `file,label`", path.display(), n + 1);
        };
        let label = label.trim().parse().with_context(|| format!("{}:{}: bad label", path.display(), n + 1))?;
        samples.push(Sample {
            image: read_image(&dir.join(file.trim()))?,
            label,
        });
    }
    Ok(samples)
}
