//! Dataset directories: `meta.json`, `frames.bin` and, for simulator
//! collections, `states.json` with the track and the state behind each frame.
//!
//! `frames.bin` holds `count` records, each `H * W * C` little-endian `f32`
//! pixels (row-major, channel-last) followed by one `f32` angle in degrees.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use dropdrive_core::data::{Dataset, DatasetMeta, Origin, Sample, FORMAT_VERSION};
use dropdrive_core::sim::Track;
use dropdrive_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::json::{read_json, write_json};

pub const META_FILE: &str = "meta.json";
pub const FRAMES_FILE: &str = "frames.bin";
pub const STATES_FILE: &str = "states.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct States {
    tracks: Vec<Track>,
    origins: Vec<Origin>,
}

pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    write_json(&dir.join(META_FILE), &d.meta())?;
    let frames = dir.join(FRAMES_FILE);
    let mut w = BufWriter::new(fs::File::create(&frames).at(&frames)?);
    for s in d.samples() {
        for &v in s.image.data() {
            w.write_all(&(v as f32).to_le_bytes()).at(&frames)?;
        }
        w.write_all(&(s.angle as f32).to_le_bytes()).at(&frames)?;
    }
    w.flush().at(&frames)?;
    let states = dir.join(STATES_FILE);
    if d.has_origins() && !d.is_empty() {
        write_json(
            &states,
            &States {
                tracks: d.tracks().to_vec(),
                origins: d.samples().iter().map(|s| s.origin.expect("checked")).collect(),
            },
        )?;
    } else if states.exists() {
        fs::remove_file(&states).at(&states)?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(META_FILE);
    let meta: DatasetMeta = read_json(&meta_path)?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::format(
            &meta_path,
            format!("dataset version {} is not supported (expected {FORMAT_VERSION})", meta.version),
        ));
    }
    if meta.angle_unit != "degrees" {
        return Err(Error::format(&meta_path, format!("angle unit {:?}", meta.angle_unit)));
    }
    let shape = [meta.height, meta.width, meta.channels];
    let pixels = meta.height * meta.width * meta.channels;
    let frames = dir.join(FRAMES_FILE);
    let bytes = fs::read(&frames).at(&frames)?;
    let record = (pixels + 1) * 4;
    let expected = record * meta.count;
    if bytes.len() != expected {
        return Err(Error::format(
            &frames,
            format!(
                "expected {expected} bytes for {} frames of {}x{}x{}, found {}",
                meta.count,
                meta.height,
                meta.width,
                meta.channels,
                bytes.len()
            ),
        ));
    }
    let states_path = dir.join(STATES_FILE);
    let states: Option<States> = if states_path.exists() {
        Some(read_json(&states_path)?)
    } else {
        None
    };
    if let Some(s) = &states {
        if s.origins.len() != meta.count {
            return Err(Error::format(
                &states_path,
                format!("{} states for {} frames", s.origins.len(), meta.count),
            ));
        }
    }
    let mut samples = Vec::with_capacity(meta.count);
    for (i, rec) in bytes.chunks_exact(record.max(4)).enumerate().take(meta.count) {
        let mut vals = rec.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let data: Vec<f64> = vals.by_ref().take(pixels).collect();
        let angle = vals.next().expect("record length checked");
        samples.push(Sample {
            image: Tensor::new(shape.to_vec(), data)?,
            angle,
            origin: states.as_ref().map(|s| s.origins[i]),
        });
    }
    Ok(Dataset::new(
        shape,
        meta.seed,
        meta.source,
        samples,
        states.map(|s| s.tracks).unwrap_or_default(),
    )?)
}
