use rand::Rng;
use rayon::prelude::*;

use super::metrics::{bit_errors, equalize_and_demap, mse, nmse};
use crate::channel::{apply_freq, realize_channel, true_channel, ChannelProfile, TrueChannel};
use crate::classical::{bilinear_interpolate_with, lmmse_apply, lmmse_weights, ls_estimate_with, LmmseStatistics};
use crate::dlmodels::{iresnet_estimate, lsidnn_estimate};
use crate::fxp::Precision;
use crate::grid::{build_frame, pilot_values, ComplexGrid, PhyConfig};
use crate::neural::NetModel;
use crate::{seeds, Error, Result};

/// Everything a receiver sees for one frame, plus the ground truth.
#[derive(Debug, Clone)]
pub struct Observation {
    pub snr_db: f64,
    pub bits: Vec<u8>,
    pub received: ComplexGrid,
    pub y_pilots: ComplexGrid,
    pub x_pilots: ComplexGrid,
    pub truth: TrueChannel,
}

/// Received values at the pilot cells, `n_pilot_subcarriers x n_pilot_symbols`.
pub fn extract_pilots(grid: &ComplexGrid, cfg: &PhyConfig) -> ComplexGrid {
    let subcarriers = cfg.pilot_subcarriers();
    ComplexGrid::from_fn(subcarriers.len(), cfg.n_pilot_symbols(), |p, j| {
        grid[(subcarriers[p], cfg.pilot_symbol_indices[j])]
    })
}

/// One frame through the frequency-domain channel. The channel, payload and
/// noise draws depend only on `frame_seed`, so the same seed at different SNRs
/// gives the same channel and bits with rescaled noise.
pub fn simulate_frame(
    profile: &ChannelProfile,
    doppler_hz: f64,
    snr_db: f64,
    frame_seed: u64,
    cfg: &PhyConfig,
) -> Result<Observation> {
    let realization = realize_channel(profile, doppler_hz, seeds::mix(frame_seed, 1), cfg)?;
    let truth = true_channel(&realization, cfg);
    let mut rng = seeds::rng(seeds::mix(frame_seed, 2));
    let bits: Vec<u8> = (0..cfg.n_data_bits()).map(|_| rng.random::<bool>() as u8).collect();
    let frame = build_frame(&bits, cfg)?;
    let received = apply_freq(&frame.cells, &truth, snr_db, seeds::mix(frame_seed, 3))?;
    Ok(Observation {
        snr_db,
        bits,
        y_pilots: extract_pilots(&received, cfg),
        x_pilots: pilot_values(cfg),
        received,
        truth,
    })
}

pub trait Estimator: Sync {
    fn name(&self) -> String;
    fn estimate(&self, obs: &Observation, cfg: &PhyConfig) -> Result<ComplexGrid>;
}

/// Genie estimator returning the true channel.
pub struct PerfectCsi;

impl Estimator for PerfectCsi {
    fn name(&self) -> String {
        "Perfect".into()
    }

    fn estimate(&self, obs: &Observation, _cfg: &PhyConfig) -> Result<ComplexGrid> {
        Ok(obs.truth.h.clone())
    }
}

/// LS at the pilots followed by bilinear interpolation.
pub struct LsBilinear {
    pub precision: Precision,
}

impl Estimator for LsBilinear {
    fn name(&self) -> String {
        match self.precision {
            Precision::Double => "LS".into(),
            p => format!("LS{p}"),
        }
    }

    fn estimate(&self, obs: &Observation, cfg: &PhyConfig) -> Result<ComplexGrid> {
        let p = ls_estimate_with(&obs.y_pilots, &obs.x_pilots, self.precision)?;
        bilinear_interpolate_with(&p, cfg, self.precision)
    }
}

/// LMMSE with the frame's SNR supplied as side information.
pub struct Lmmse {
    pub stats: LmmseStatistics,
}

impl Estimator for Lmmse {
    fn name(&self) -> String {
        "LMMSE".into()
    }

    fn estimate(&self, obs: &Observation, cfg: &PhyConfig) -> Result<ComplexGrid> {
        let p = ls_estimate_with(&obs.y_pilots, &obs.x_pilots, Precision::Double)?;
        lmmse_apply(&p, &lmmse_weights(&self.stats, obs.snr_db)?, cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlKind {
    Lsidnn,
    Iresnet,
}

/// A trained network fed with LS pilot estimates.
pub struct DlEstimator {
    pub kind: DlKind,
    pub model: NetModel,
    pub label: Option<String>,
}

impl DlEstimator {
    pub fn new(kind: DlKind, model: NetModel) -> Self {
        Self { kind, model, label: None }
    }
}

impl Estimator for DlEstimator {
    fn name(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let base = match self.kind {
            DlKind::Lsidnn => "LSiDNN",
            DlKind::Iresnet => "iResNet",
        };
        match self.model.precision {
            Precision::Double => base.into(),
            p => format!("{base}{p}"),
        }
    }

    fn estimate(&self, obs: &Observation, cfg: &PhyConfig) -> Result<ComplexGrid> {
        let p = ls_estimate_with(&obs.y_pilots, &obs.x_pilots, self.model.precision)?;
        match self.kind {
            DlKind::Lsidnn => lsidnn_estimate(&self.model, &p, cfg),
            DlKind::Iresnet => iresnet_estimate(&self.model, &p, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: ChannelProfile,
    pub doppler_hz: f64,
    pub snr_grid: Vec<f64>,
    pub n_frames: usize,
    pub seed: u64,
    pub phy: PhyConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid.is_empty() {
            return Err(Error::InvalidConfig("SNR grid is empty".into()));
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidConfig("need at least one frame per SNR point".into()));
        }
        self.profile.validate()?;
        self.phy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsRecord {
    pub estimator: String,
    pub profile: String,
    pub doppler_hz: f64,
    pub snr_db: f64,
    pub n_frames: usize,
    pub nmse: f64,
    pub mse: f64,
    pub ber: f64,
    #[serde(skip)]
    pub zf_floor_hits: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    nmse: f64,
    mse: f64,
    bit_errors: usize,
    bits: usize,
    floored: usize,
}

/// Per SNR point and estimator: NMSE and MSE averaged over frames, BER over
/// all data bits. Records are ordered SNR-major, estimators in input order.
pub fn run_link(cfg: &RunConfig, estimators: &[&dyn Estimator]) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if estimators.is_empty() {
        return Err(Error::InvalidConfig("no estimators selected".into()));
    }
    let mut records = Vec::with_capacity(cfg.snr_grid.len() * estimators.len());
    for &snr_db in &cfg.snr_grid {
        let per_frame: Vec<Result<Vec<Tally>>> = (0..cfg.n_frames)
            .into_par_iter()
            .map(|i| {
                let obs = simulate_frame(
                    &cfg.profile,
                    cfg.doppler_hz,
                    snr_db,
                    seeds::mix(cfg.seed, i as u64),
                    &cfg.phy,
                )?;
                estimators
                    .iter()
                    .map(|e| {
                        let h = e.estimate(&obs, &cfg.phy)?;
                        let eq = equalize_and_demap(&obs.received, &h, &cfg.phy)?;
                        Ok(Tally {
                            nmse: nmse(&h, &obs.truth.h)?,
                            mse: mse(&h, &obs.truth.h)?,
                            bit_errors: bit_errors(&obs.bits, &eq.bits)?,
                            bits: obs.bits.len(),
                            floored: eq.floored,
                        })
                    })
                    .collect()
            })
            .collect();
        let mut totals = vec![Tally::default(); estimators.len()];
        for frame in per_frame {
            for (t, f) in totals.iter_mut().zip(frame?) {
                t.nmse += f.nmse;
                t.mse += f.mse;
                t.bit_errors += f.bit_errors;
                t.bits += f.bits;
                t.floored += f.floored;
            }
        }
        let n = cfg.n_frames as f64;
        for (e, t) in estimators.iter().zip(totals) {
            records.push(MetricsRecord {
                estimator: e.name(),
                profile: cfg.profile.name.clone(),
                doppler_hz: cfg.doppler_hz,
                snr_db,
                n_frames: cfg.n_frames,
                nmse: t.nmse / n,
                mse: t.mse / n,
                ber: t.bit_errors as f64 / t.bits as f64,
                zf_floor_hits: t.floored,
            });
        }
    }
    Ok(records)
}

/// Frames of an evaluation set, `frames_per_snr` for each SNR value, using
/// the same frame seeds at every SNR.
pub fn eval_frames(cfg: &RunConfig) -> Result<Vec<Observation>> {
    cfg.validate()?;
    cfg.snr_grid
        .iter()
        .flat_map(|&snr| (0..cfg.n_frames).map(move |i| (snr, i)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(snr, i)| simulate_frame(&cfg.profile, cfg.doppler_hz, snr, seeds::mix(cfg.seed, i as u64), &cfg.phy))
        .collect()
}

/// Mean per-cell MSE of `estimator` over a fixed set of frames.
pub fn mean_mse(estimator: &dyn Estimator, frames: &[Observation], cfg: &PhyConfig) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("evaluation frames"));
    }
    let errs: Vec<Result<f64>> = frames
        .par_iter()
        .map(|obs| mse(&estimator.estimate(obs, cfg)?, &obs.truth.h))
        .collect();
    let mut total = 0.0;
    for e in errs {
        total += e?;
    }
    Ok(total / frames.len() as f64)
}
