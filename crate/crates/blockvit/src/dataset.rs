//! Labeled image directories: `<root>/<class_index>/<name>.ppm`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blockvit_core::eval::LabeledDataset;

use crate::ppm::{read_ppm, write_ppm};

/// Loads every `.ppm` under numeric class directories, classes ascending and
/// files by name. Other entries are ignored.
pub fn load_dataset(root: &Path) -> Result<LabeledDataset> {
    let mut classes: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("reading dataset directory {}", root.display()))? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Some(label) = entry.file_name().to_str().and_then(|s| s.parse::<usize>().ok()) {
            classes.push((label, entry.path()));
        }
    }
    classes.sort();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (label, dir) in &classes {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
            .collect();
        files.sort();
        for f in files {
            let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
            images.push(read_ppm(&bytes).with_context(|| format!("decoding {}", f.display()))?);
            labels.push(*label);
        }
    }
    if images.is_empty() {
        bail!("no <class>/<name>.ppm images under {}", root.display());
    }
    let n_classes = classes.last().map(|(c, _)| c + 1).unwrap_or(0);
    let first = (images[0].width(), images[0].height());
    if let Some(bad) = images.iter().find(|i| (i.width(), i.height()) != first) {
        bail!(
            "dataset images differ in size: {}x{} and {}x{}",
            first.0,
            first.1,
            bad.width(),
            bad.height()
        );
    }
    Ok(LabeledDataset::new(images, labels, n_classes)?)
}

/// Writes `dataset` in the layout [`load_dataset`] reads.
pub fn save_dataset(dataset: &LabeledDataset, root: &Path) -> Result<()> {
    for (i, (img, label)) in dataset.images.iter().zip(&dataset.labels).enumerate() {
        let dir = root.join(label.to_string());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(format!("{i:05}.ppm")), write_ppm(img)?)?;
    }
    Ok(())
}
