// SPDX-License-Identifier: MIT OR Apache-2.0

//! Output directory bookkeeping. Every file written through [`RunDir`] is
//! hashed, and [`RunDir::finish`] records the hashes next to the config in
//! `run.json`. Nothing time- or path-dependent is written, so identical
//! configs give byte-identical directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use goalscope_core::maze::GRID;
use goalscope_core::metrics::Heatmap;
use goalscope_core::render::PALETTE;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const RUN_RECORD: &str = "run.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub weights: String,
    /// File name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

pub struct RunDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), outputs: BTreeMap::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.path(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_png(&mut self, name: &str, width: u32, height: u32, rgb: &[u8]) -> Result<(), CliError> {
        let bytes = encode_png(width, height, rgb)?;
        self.write_bytes(name, &bytes)
    }

    /// Write `run.json` and return its record.
    pub fn finish<C: Serialize>(mut self, command: &str, config: &C, weights: &str) -> Result<RunRecord, CliError> {
        let config = serde_json::to_value(config)?;
        let record = RunRecord {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(&serde_json::to_vec(&config)?),
            config,
            weights: weights.into(),
            outputs: std::mem::take(&mut self.outputs),
        };
        let mut bytes = serde_json::to_vec_pretty(&record)?;
        bytes.push(b'\n');
        std::fs::write(self.path(RUN_RECORD), bytes)?;
        Ok(record)
    }
}

pub fn encode_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header()?.write_image_data(rgb)?;
    }
    Ok(out)
}

/// Pixels per grid square in heatmap images.
pub const HEATMAP_SCALE: usize = 8;

/// Heatmap as RGB bytes: walls in the wall color, values from dark blue at 0
/// to yellow at 1, top row first.
pub fn heatmap_rgb(h: &Heatmap) -> (u32, u32, Vec<u8>) {
    let side = GRID * HEATMAP_SCALE;
    let to8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let wall = PALETTE.wall.map(to8);
    let mut rgb = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        let row = GRID - 1 - y / HEATMAP_SCALE;
        for x in 0..side {
            let col = x / HEATMAP_SCALE;
            let px = match h.values[row][col] {
                None => wall,
                Some(v) => ramp(v),
            };
            rgb.extend_from_slice(&px);
        }
    }
    (side as u32, side as u32, rgb)
}

fn ramp(v: f64) -> [u8; 3] {
    const LO: [f64; 3] = [40.0, 20.0, 110.0];
    const HI: [f64; 3] = [250.0, 230.0, 40.0];
    let t = v.clamp(0.0, 1.0);
    [0, 1, 2].map(|i| (LO[i] + t * (HI[i] - LO[i])).round() as u8)
}
