//! CSV output, LMMSE statistics files, key=value configs and sidecars.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::link::MetricsRecord;
use super::sweeps::WordlengthSweep;
use crate::classical::LmmseStatistics;
use crate::linalg::CMatrix;
use crate::{Complex64, Error, Result};

const STATS_MAGIC: &[u8; 8] = b"CESTATS1";

/// Header `estimator,profile,doppler_hz,snr_db,n_frames,nmse,mse,ber`.
pub fn write_metrics_csv(w: impl Write, records: &[MetricsRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if records.is_empty() {
        out.write_record(["estimator", "profile", "doppler_hz", "snr_db", "n_frames", "nmse", "mse", "ber"])?;
    }
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Header `estimator,w,i,mse`; reference rows use `DPFL` and `SPFL` with
/// empty widths.
pub fn write_wordlength_csv(w: impl Write, estimator: &str, sweep: &WordlengthSweep) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["estimator", "w", "i", "mse"])?;
    out.write_record([estimator, "DPFL", "", &sweep.dpfl_mse.to_string()])?;
    out.write_record([estimator, "SPFL", "", &sweep.spfl_mse.to_string()])?;
    for r in &sweep.rows {
        out.write_record([
            estimator,
            &r.format.total_bits().to_string(),
            &r.format.integer_bits().to_string(),
            &r.mse.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn put_matrix(w: &mut impl Write, m: &CMatrix) -> Result<()> {
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn get_matrix(r: &mut impl Read) -> Result<CMatrix> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rows = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let cols = u32::from_le_bytes(b4) as usize;
    if rows > 4096 || cols > 4096 {
        return Err(Error::Format(format!("implausible matrix {rows}x{cols}")));
    }
    let mut b8 = [0u8; 8];
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        data.push(Complex64::new(re, f64::from_le_bytes(b8)));
    }
    CMatrix::from_rows(rows, cols, data)
}

/// Magic `CESTATS1`, `u64` sample count, then `R_HHp` and `R_HpHp`, each as
/// `u32` rows, `u32` cols and row-major `(re, im)` `f64` pairs.
pub fn write_stats(w: &mut impl Write, s: &LmmseStatistics) -> Result<()> {
    w.write_all(STATS_MAGIC)?;
    w.write_all(&s.n_samples.to_le_bytes())?;
    put_matrix(w, &s.r_hhp)?;
    put_matrix(w, &s.r_hphp)
}

pub fn read_stats(r: &mut impl Read) -> Result<LmmseStatistics> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != STATS_MAGIC {
        return Err(Error::Format("not a CESTATS1 statistics file".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n_samples = u64::from_le_bytes(b8);
    let r_hhp = get_matrix(r)?;
    let r_hphp = get_matrix(r)?;
    if r_hphp.rows() != r_hphp.cols() || r_hhp.cols() != r_hphp.rows() {
        return Err(Error::Format("statistics matrices do not match".into()));
    }
    Ok(LmmseStatistics {
        r_hhp,
        r_hphp,
        n_samples,
    })
}

pub fn save_stats(path: impl AsRef<Path>, s: &LmmseStatistics) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stats(&mut w, s)?;
    w.flush()?;
    Ok(())
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<LmmseStatistics> {
    read_stats(&mut BufReader::new(File::open(path)?))
}

/// `key = value` lines; `#` starts a comment. Later keys override earlier ones.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::InvalidConfig(format!("line {}: empty key", n + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Plain `key=value` metadata next to a model file.
pub fn write_sidecar(path: impl AsRef<Path>, entries: &[(&str, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}
