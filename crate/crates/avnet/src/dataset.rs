//! On-disk datasets (`<id>_oct.png`, `<id>_octa.png`, `<id>_av.png`), weight
//! archives and config files.

use std::fs;
use std::path::{Path, PathBuf};

use avnet_core::archive::WeightArchive;
use avnet_core::config::RunConfig;
use avnet_core::data::{assemble_input, decode_label_rgb, Sample};

use crate::error::{AppError, AppResult};
use crate::image_io::{read_gray, read_rgb, write_gray, write_rgb};

pub const OCT_SUFFIX: &str = "_oct.png";
pub const OCTA_SUFFIX: &str = "_octa.png";
pub const LABEL_SUFFIX: &str = "_av.png";

pub fn sample_paths(dir: &Path, id: &str) -> [PathBuf; 3] {
    [OCT_SUFFIX, OCTA_SUFFIX, LABEL_SUFFIX].map(|s| dir.join(format!("{id}{s}")))
}

/// Ids of every `*_oct.png` in `dir`, sorted.
pub fn dataset_ids(dir: &Path) -> AppResult<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| AppError::io(dir, e))? {
        let entry = entry.map_err(|e| AppError::io(dir, e))?;
        if let Some(id) = entry.file_name().to_str().and_then(|n| n.strip_suffix(OCT_SUFFIX)) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn load_input(oct: &Path, octa: &Path) -> AppResult<avnet_core::Tensor<f32>> {
    let (a, b) = (read_gray(oct)?, read_gray(octa)?);
    if (a.width, a.height) != (b.width, b.height) {
        return Err(AppError::Data(format!(
            "{} is {}x{} but {} is {}x{}",
            oct.display(),
            a.width,
            a.height,
            octa.display(),
            b.width,
            b.height
        )));
    }
    Ok(assemble_input(&a, &b)?)
}

pub fn load_sample(dir: &Path, id: &str) -> AppResult<Sample> {
    let [oct, octa, av] = sample_paths(dir, id);
    let input = load_input(&oct, &octa)?;
    let label_img = read_rgb(&av)?;
    if [label_img.height, label_img.width] != input.shape()[1..] {
        return Err(AppError::Data(format!("{}: label size differs from the input images", av.display())));
    }
    Ok(Sample::new(id, input, decode_label_rgb(&label_img))?)
}

pub fn load_dataset(dir: &Path) -> AppResult<Vec<Sample>> {
    let ids = dataset_ids(dir)?;
    if ids.is_empty() {
        return Err(AppError::Data(format!("{}: no *{OCT_SUFFIX} files", dir.display())));
    }
    ids.iter().map(|id| load_sample(dir, id)).collect()
}

pub fn save_sample(dir: &Path, sample: &Sample) -> AppResult<()> {
    let [oct, octa, av] = sample_paths(dir, &sample.id);
    write_gray(&oct, &sample.oct_image())?;
    write_gray(&octa, &sample.octa_image())?;
    write_rgb(&av, &sample.label_image())
}

pub fn write_archive(path: &Path, archive: &WeightArchive) -> AppResult<()> {
    fs::write(path, archive.encode()?).map_err(|e| AppError::io(path, e))
}

pub fn read_archive(path: &Path) -> AppResult<WeightArchive> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(WeightArchive::decode(&bytes)?)
}

/// Defaults overlaid with `path`, unvalidated so that flags can still
/// override before validation.
pub fn read_config(path: Option<&Path>) -> AppResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        cfg.apply(&text)
            .map_err(|e| AppError::Config(format!("{}: {}", path.display(), config_message(e))))?;
    }
    Ok(cfg)
}

fn config_message(e: avnet_core::Error) -> String {
    match e {
        avnet_core::Error::Config(m) => m,
        other => other.to_string(),
    }
}
