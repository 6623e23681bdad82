//! Oracle construction from a resolved configuration.

use anyhow::{bail, Context};
use foveate_core::attacks::FrameTransform;
use foveate_core::datasets::{generate_suite, scene_labels};
use foveate_core::oracle::{toy_fit, Classifier, DescriptorMode, LabelSet};
use rayon::prelude::*;

use crate::bridge::BridgeClient;
use crate::config::{OracleKind, RunConfig};
use crate::manifest::load_manifest;
use crate::raster::load_image;

/// Keeps toy training scenes apart from suites drawn with the run seed.
pub const TRAIN_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn build_oracle(cfg: &RunConfig) -> anyhow::Result<Box<dyn Classifier>> {
    let mode = match cfg.oracle {
        OracleKind::Bridge => {
            let cmd = cfg.bridge_cmd.as_deref().context("no bridge command configured")?;
            return Ok(Box::new(BridgeClient::spawn(cmd, cfg.input_size())?));
        }
        OracleKind::ToyCartesian => DescriptorMode::CartesianQuadrant,
        OracleKind::ToyRetinotopic => DescriptorMode::RetinotopicRadial,
    };
    let transform = cfg.transform()?;
    let (images, labels, names) = match &cfg.toy.train_manifest {
        Some(path) => manifest_examples(path)?,
        None => {
            let layout = cfg.toy.train_layout.layout(cfg.synth.size);
            let count = cfg.toy.train_per_class * foveate_core::datasets::SCENE_CLASS_COUNT;
            let scenes = generate_suite(cfg.seed ^ TRAIN_SEED_SALT, count, &layout)?;
            let labels = scenes.iter().map(|s| s.label()).collect();
            (scenes.into_iter().map(|s| s.image).collect(), labels, scene_labels())
        }
    };
    let prepared = prepare_all(&images, &transform, cfg.input_size())?;
    let toy = toy_fit(prepared.iter().zip(labels), names, mode, cfg.toy.temperature)?;
    Ok(Box::new(toy))
}

type Examples = (Vec<foveate_core::ImageBuffer>, Vec<usize>, LabelSet);

fn manifest_examples(path: &std::path::Path) -> anyhow::Result<Examples> {
    let records = load_manifest(path)?;
    let mut names: Vec<String> = Vec::new();
    for r in &records {
        if !names.contains(&r.label) {
            names.push(r.label.clone());
        }
    }
    if names.len() < 2 {
        bail!("{}: toy training needs at least two labels", path.display());
    }
    let labels = records.iter().map(|r| names.iter().position(|n| *n == r.label).expect("collected")).collect();
    let images = records
        .par_iter()
        .map(|r| load_image(r.image_path.as_ref()).map_err(anyhow::Error::from))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((images, labels, LabelSet::new(names)?))
}

fn prepare_all(
    images: &[foveate_core::ImageBuffer],
    transform: &FrameTransform,
    size: (usize, usize),
) -> foveate_core::Result<Vec<foveate_core::ImageBuffer>> {
    images.par_iter().map(|img| transform.apply(img, size)).collect()
}
