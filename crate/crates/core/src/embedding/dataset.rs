//! On-disk image datasets: one directory per episode holding PNG frames named
//! by zero-padded step index, plus an `index.json` manifest.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{Image, ImageShape};
use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.json";
pub const DATASET_VERSION: u32 = 1;

/// Episode-ordered frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageDataset {
    pub episodes: Vec<Vec<Image>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Manifest {
    pub format_version: u32,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub episodes: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ManifestEntry {
    pub dir: String,
    pub length: usize,
}

pub(crate) fn episode_dir_name(i: usize) -> String {
    format!("episode_{i:04}")
}

fn frame_name(t: usize) -> String {
    format!("{t:06}.png")
}

impl ImageDataset {
    pub fn num_frames(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    /// Common shape of all frames.
    pub fn shape(&self) -> Result<ImageShape> {
        let mut frames = self.episodes.iter().flatten();
        let first = frames
            .next()
            .ok_or_else(|| Error::EmptyDataset("dataset has no frames".into()))?
            .shape();
        if frames.any(|f| f.shape() != first) {
            return Err(Error::config("dataset frames differ in shape"));
        }
        Ok(first)
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save_png(image: &Image, path: &Path) -> Result<()> {
    let s = image.shape();
    let (w, h) = (s.width as u32, s.height as u32);
    let bytes: Vec<u8> = image.pixels().iter().map(|&v| to_u8(v)).collect();
    let res = match s.channels {
        1 => GrayImage::from_raw(w, h, bytes).map(|im| im.save(path)),
        3 => RgbImage::from_raw(w, h, bytes).map(|im| im.save(path)),
        c => return Err(Error::config(format!("cannot store {c}-channel frames as PNG"))),
    };
    res.expect("buffer length matches shape").map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

fn load_png(path: &Path, shape: ImageShape) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })?;
    if img.width() as usize != shape.width || img.height() as usize != shape.height {
        return Err(Error::config(format!("{} has unexpected size", path.display())));
    }
    let bytes = match shape.channels {
        1 => {
            let g: ImageBuffer<Luma<u8>, Vec<u8>> = img.to_luma8();
            g.into_raw()
        }
        3 => {
            let c: ImageBuffer<Rgb<u8>, Vec<u8>> = img.to_rgb8();
            c.into_raw()
        }
        c => return Err(Error::config(format!("unsupported channel count {c}"))),
    };
    Image::new(shape, bytes.into_iter().map(|b| b as f32 / 255.0).collect())
}

pub fn write_dataset(dir: &Path, dataset: &ImageDataset) -> Result<()> {
    let shape = dataset.shape()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(dataset.episodes.len());
    for (i, ep) in dataset.episodes.iter().enumerate() {
        let name = episode_dir_name(i);
        let ep_dir = dir.join(&name);
        std::fs::create_dir_all(&ep_dir).map_err(|e| Error::io(&ep_dir, e))?;
        for (t, frame) in ep.iter().enumerate() {
            save_png(frame, &ep_dir.join(frame_name(t)))?;
        }
        entries.push(ManifestEntry {
            dir: name,
            length: ep.len(),
        });
    }
    let manifest = Manifest {
        format_version: DATASET_VERSION,
        height: shape.height,
        width: shape.width,
        channels: shape.channels,
        episodes: entries,
    };
    let path = dir.join(INDEX_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path) -> Result<ImageDataset> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    if manifest.format_version != DATASET_VERSION {
        return Err(Error::config(format!(
            "unsupported dataset version {}",
            manifest.format_version
        )));
    }
    let shape = ImageShape {
        height: manifest.height,
        width: manifest.width,
        channels: manifest.channels,
    };
    let episodes = manifest
        .episodes
        .iter()
        .map(|entry| {
            (0..entry.length)
                .map(|t| load_png(&dir.join(&entry.dir).join(frame_name(t)), shape))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageDataset { episodes })
}
