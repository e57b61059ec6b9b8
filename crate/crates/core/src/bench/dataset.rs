//! Training datasets and their binary file format.
//!
//! Layout (little-endian): magic `CEDATA01`, `u32` version, `u64` record
//! count, four `u32` dims (pilot rows, pilot cols, grid rows, grid cols),
//! then per record: `f64` snr, `f64` doppler, `u64` seed, `u32` profile
//! name length and UTF-8 bytes, pilot LS values and true channel values as
//! column-major `(re, im)` `f64` pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::link::simulate_frame;
use crate::channel::ChannelProfile;
use crate::classical::{ls_estimate, PilotEstimate};
use crate::grid::{ComplexGrid, PhyConfig};
use crate::{seeds, Complex64, Error, Result};

const MAGIC: &[u8; 8] = b"CEDATA01";
const VERSION: u32 = 1;

/// SNR values drawn for mixed-SNR training sets.
pub const TRAINING_SNRS_DB: [f64; 6] = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub pilot_ls: PilotEstimate,
    pub true_h: ComplexGrid,
    pub snr_db: f64,
    pub doppler_hz: f64,
    pub profile: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SnrPolicy {
    Fixed(f64),
    /// Each frame picks one of the values uniformly at random.
    Uniform(Vec<f64>),
    Noiseless,
}

impl Default for SnrPolicy {
    fn default() -> Self {
        SnrPolicy::Uniform(TRAINING_SNRS_DB.to_vec())
    }
}

/// Frame `i` uses seed `mix(seed, i)`; generation is parallel but the record
/// order and contents do not depend on scheduling.
pub fn gen_dataset(
    profile: &ChannelProfile,
    doppler_hz: f64,
    n_frames: usize,
    policy: SnrPolicy,
    seed: u64,
    cfg: &PhyConfig,
) -> Result<Dataset> {
    if n_frames == 0 {
        return Err(Error::InvalidConfig("dataset needs at least one frame".into()));
    }
    if let SnrPolicy::Uniform(v) = &policy {
        if v.is_empty() {
            return Err(Error::InvalidConfig("empty SNR set".into()));
        }
    }
    let records = (0..n_frames as u64)
        .into_par_iter()
        .map(|i| {
            let frame_seed = seeds::mix(seed, i);
            let snr_db = match &policy {
                SnrPolicy::Fixed(s) => *s,
                SnrPolicy::Uniform(v) => *v.choose(&mut seeds::rng(seeds::mix(frame_seed, 4))).unwrap(),
                SnrPolicy::Noiseless => f64::INFINITY,
            };
            let obs = simulate_frame(profile, doppler_hz, snr_db, frame_seed, cfg)?;
            Ok(DatasetRecord {
                pilot_ls: ls_estimate(&obs.y_pilots, &obs.x_pilots)?,
                true_h: obs.truth.h,
                snr_db,
                doppler_hz,
                profile: profile.name.clone(),
                seed: frame_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { records })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First `n` records.
    pub fn prefix(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.records.len() {
            return Err(Error::InvalidConfig(format!(
                "subset size {n} outside 1..={}",
                self.records.len()
            )));
        }
        Ok(Dataset {
            records: self.records[..n].to_vec(),
        })
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let first = self.records.first().ok_or(Error::EmptyInput("dataset"))?;
        let (pr, pc) = first.pilot_ls.dims();
        let (gr, gc) = first.true_h.dims();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for d in [pr, pc, gr, gc] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for r in &self.records {
            r.pilot_ls.ensure_dims(pr, pc)?;
            r.true_h.ensure_dims(gr, gc)?;
            w.write_all(&r.snr_db.to_le_bytes())?;
            w.write_all(&r.doppler_hz.to_le_bytes())?;
            w.write_all(&r.seed.to_le_bytes())?;
            w.write_all(&(r.profile.len() as u32).to_le_bytes())?;
            w.write_all(r.profile.as_bytes())?;
            for v in r.pilot_ls.as_slice().iter().chain(r.true_h.as_slice()) {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Dataset> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a CEDATA01 dataset".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let count = read_u64(r)?;
        let dims: Vec<usize> = (0..4).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<_>>()?;
        if dims.iter().any(|&d| d == 0 || d > 4096) {
            return Err(Error::Format(format!("implausible dataset dims {dims:?}")));
        }
        let mut records = Vec::with_capacity(count.min(1 << 16) as usize);
        for _ in 0..count {
            let snr_db = read_f64(r)?;
            let doppler_hz = read_f64(r)?;
            let seed = read_u64(r)?;
            let name_len = read_u32(r)? as usize;
            if name_len > 4096 {
                return Err(Error::Format("profile name too long".into()));
            }
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let profile = String::from_utf8(name).map_err(|_| Error::Format("profile name is not UTF-8".into()))?;
            let pilot_ls = read_grid(r, dims[0], dims[1])?;
            let true_h = read_grid(r, dims[2], dims[3])?;
            records.push(DatasetRecord {
                pilot_ls,
                true_h,
                snr_db,
                doppler_hz,
                profile,
                seed,
            });
        }
        Ok(Dataset { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        Dataset::read(&mut BufReader::new(File::open(path)?))
    }

    /// SHA-256 of the serialized dataset, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(hex::encode(Sha256::digest(&buf)))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_grid(r: &mut impl Read, rows: usize, cols: usize) -> Result<ComplexGrid> {
    let data = (0..rows * cols)
        .map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?)))
        .collect::<Result<Vec<_>>>()?;
    ComplexGrid::from_vec(rows, cols, data)
}
