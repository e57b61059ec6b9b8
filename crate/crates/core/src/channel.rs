//! Tapped-delay-line Rayleigh fading with Jakes Doppler spectrum.
//!
//! Each tap is a sum of `N_SINUSOIDS` unit sinusoids with equally spaced
//! arrival angles and independent uniform phases. Gains are held constant
//! over one OFDM symbol (block fading), so the channel seen by the frame is
//! exactly `H[k][s] = sum_l g_l[s] exp(-j 2 pi bin(k) d_l / N)`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::{ComplexGrid, PhyConfig, TimeSignal};
use crate::seeds;
use crate::{Error, Result};

pub const N_SINUSOIDS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub name: String,
    pub path_delays_ns: Vec<f64>,
    pub path_gains_db: Vec<f64>,
}

impl ChannelProfile {
    pub fn epa() -> Self {
        Self {
            name: "EPA".into(),
            path_delays_ns: vec![0.0, 30.0, 70.0, 90.0, 110.0, 190.0, 410.0],
            path_gains_db: vec![0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8],
        }
    }

    pub fn eva() -> Self {
        Self {
            name: "EVA".into(),
            path_delays_ns: vec![0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0],
            path_gains_db: vec![0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9],
        }
    }

    pub fn etu() -> Self {
        Self {
            name: "ETU".into(),
            path_delays_ns: vec![0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0],
            path_gains_db: vec![-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0],
        }
    }

    /// Built-in profile by case-insensitive name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epa" => Some(Self::epa()),
            "eva" => Some(Self::eva()),
            "etu" => Some(Self::etu()),
            _ => None,
        }
    }

    /// Parse a profile file:
    ///
    /// ```text
    /// name = custom
    /// delays_ns = 0, 100, 300
    /// gains_db = 0, -3, -6
    /// ```
    ///
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut delays = None;
        let mut gains = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("expected key = value, got `{line}`")))?;
            match key.trim() {
                "name" => name = Some(value.trim().to_string()),
                "delays_ns" => delays = Some(parse_list(value)?),
                "gains_db" => gains = Some(parse_list(value)?),
                other => return Err(Error::Format(format!("unknown profile key `{other}`"))),
            }
        }
        let profile = Self {
            name: name.ok_or_else(|| Error::Format("profile is missing `name`".into()))?,
            path_delays_ns: delays.ok_or_else(|| Error::Format("profile is missing `delays_ns`".into()))?,
            path_gains_db: gains.ok_or_else(|| Error::Format("profile is missing `gains_db`".into()))?,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Built-in name or path to a profile file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match Self::builtin(spec) {
            Some(p) => Ok(p),
            None if Path::new(spec).is_file() => Self::load(Path::new(spec)),
            None => Err(Error::InvalidConfig(format!(
                "unknown profile `{spec}`; expected epa, eva, etu or a profile file"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.path_delays_ns.is_empty() {
            return Err(Error::EmptyProfile);
        }
        if self.path_delays_ns.len() != self.path_gains_db.len() {
            return Err(Error::InvalidConfig(format!(
                "profile {} has {} delays but {} gains",
                self.name,
                self.path_delays_ns.len(),
                self.path_gains_db.len()
            )));
        }
        if self
            .path_delays_ns
            .iter()
            .chain(&self.path_gains_db)
            .any(|v| !v.is_finite())
            || self.path_delays_ns.iter().any(|&d| d < 0.0)
        {
            return Err(Error::InvalidConfig(format!("profile {} has invalid paths", self.name)));
        }
        Ok(())
    }

    /// Linear path powers scaled to sum to one.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.path_gains_db.iter().map(|g| 10f64.powf(g / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }
}

impl fmt::Display for ChannelProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "delays_ns = {}", join(&self.path_delays_ns))?;
        writeln!(f, "gains_db = {}", join(&self.path_gains_db))
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad number `{}`: {e}", v.trim())))
        })
        .collect()
}

/// Per-symbol tap gains of one fading realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub tap_sample_delays: Vec<usize>,
    /// `n_taps x n_symbols`
    pub tap_gains: ComplexGrid,
    pub doppler_hz: f64,
    pub seed: u64,
}

impl ChannelRealization {
    /// Single static tap, mostly useful for tests and AWGN-only runs.
    pub fn single_tap(delay: usize, gain: Complex64, n_symbols: usize) -> Self {
        Self {
            tap_sample_delays: vec![delay],
            tap_gains: ComplexGrid::filled(1, n_symbols, gain),
            doppler_hz: 0.0,
            seed: 0,
        }
    }

    pub fn n_taps(&self) -> usize {
        self.tap_sample_delays.len()
    }
}

/// Frequency response of a realization on the used subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueChannel {
    /// `n_subcarriers x n_symbols`
    pub h: ComplexGrid,
}

pub fn realize_channel(
    profile: &ChannelProfile,
    doppler_hz: f64,
    seed: u64,
    cfg: &PhyConfig,
) -> Result<ChannelRealization> {
    profile.validate()?;
    if !(doppler_hz >= 0.0) || !doppler_hz.is_finite() {
        return Err(Error::InvalidConfig(format!("doppler must be >= 0, got {doppler_hz}")));
    }
    let fs = cfg.sample_rate();
    let tap_sample_delays: Vec<usize> = profile
        .path_delays_ns
        .iter()
        .map(|d| (d * 1e-9 * fs).round() as usize)
        .collect();
    let powers = profile.normalized_powers();
    let t_sym = cfg.symbol_period();

    // cos of the equally spaced arrival angles; shared by all taps
    let doppler_shifts: Vec<f64> = (0..N_SINUSOIDS)
        .map(|n| {
            let alpha = 2.0 * PI * (n as f64 + 0.5) / N_SINUSOIDS as f64;
            2.0 * PI * doppler_hz * alpha.cos()
        })
        .collect();

    let mut rng = seeds::rng(seed);
    let mut tap_gains = ComplexGrid::zeros(powers.len(), cfg.n_symbols);
    let mut phases = [0.0f64; N_SINUSOIDS];
    for (l, p) in powers.iter().enumerate() {
        for ph in phases.iter_mut() {
            *ph = rng.random::<f64>() * 2.0 * PI;
        }
        let amp = (p / N_SINUSOIDS as f64).sqrt();
        for s in 0..cfg.n_symbols {
            let t = s as f64 * t_sym;
            let g: Complex64 = doppler_shifts
                .iter()
                .zip(&phases)
                .map(|(w, ph)| Complex64::from_polar(1.0, w * t + ph))
                .sum();
            tap_gains[(l, s)] = g * amp;
        }
    }
    Ok(ChannelRealization {
        tap_sample_delays,
        tap_gains,
        doppler_hz,
        seed,
    })
}

pub fn true_channel(r: &ChannelRealization, cfg: &PhyConfig) -> TrueChannel {
    let n = cfg.fft_size as f64;
    // per-tap phase ramp over subcarriers, reused for every symbol
    let ramps: Vec<Vec<Complex64>> = r
        .tap_sample_delays
        .iter()
        .map(|&d| {
            (0..cfg.n_subcarriers)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * cfg.bin(k) as f64 * d as f64 / n))
                .collect()
        })
        .collect();
    let h = ComplexGrid::from_fn(cfg.n_subcarriers, cfg.n_symbols, |k, s| {
        ramps
            .iter()
            .enumerate()
            .map(|(l, ramp)| r.tap_gains[(l, s)] * ramp[k])
            .sum()
    });
    TrueChannel { h }
}

fn noise_std(snr_db: f64) -> Option<f64> {
    if snr_db == f64::INFINITY {
        None
    } else {
        Some((10f64.powf(-snr_db / 10.0) / 2.0).sqrt())
    }
}

fn complex_noise(rng: &mut impl Rng, std: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std, im * std)
}

/// `Y = H o X + Z` with per-cell noise variance `10^(-snr_db/10)`.
/// `snr_db = +inf` disables the noise.
pub fn apply_freq(x: &ComplexGrid, h: &TrueChannel, snr_db: f64, noise_seed: u64) -> Result<ComplexGrid> {
    h.h.ensure_dims(x.rows(), x.cols())?;
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidConfig(format!("snr must be finite, got {snr_db}")));
    }
    let mut y = ComplexGrid::from_vec(
        x.rows(),
        x.cols(),
        x.as_slice().iter().zip(h.h.as_slice()).map(|(a, b)| a * b).collect(),
    )?;
    if let Some(std) = noise_std(snr_db) {
        let mut rng = seeds::rng(noise_seed);
        for v in y.as_mut_slice() {
            *v += complex_noise(&mut rng, std);
        }
    }
    Ok(y)
}

/// Time-domain channel: per-symbol linear convolution with the tap filter,
/// then AWGN with the same per-sample variance as [`apply_freq`].
pub fn apply_time(
    sig: &TimeSignal,
    r: &ChannelRealization,
    cfg: &PhyConfig,
    snr_db: f64,
    noise_seed: u64,
) -> Result<TimeSignal> {
    let sym_len = cfg.samples_per_symbol();
    if sig.samples.len() != sym_len * cfg.n_symbols {
        return Err(Error::shape(sym_len * cfg.n_symbols, sig.samples.len()));
    }
    r.tap_gains.ensure_dims(r.n_taps(), cfg.n_symbols)?;
    if let Some(&delay) = r.tap_sample_delays.iter().find(|&&d| d >= cfg.cp_length) {
        return Err(Error::DelayExceedsCp {
            delay,
            cp: cfg.cp_length,
        });
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidConfig(format!("snr must be finite, got {snr_db}")));
    }
    let x = &sig.samples;
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for s in 0..cfg.n_symbols {
        let start = s * sym_len;
        for n in start..start + sym_len {
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, &d) in r.tap_sample_delays.iter().enumerate() {
                if n >= d {
                    acc += r.tap_gains[(l, s)] * x[n - d];
                }
            }
            out[n] = acc;
        }
    }
    if let Some(std) = noise_std(snr_db) {
        let mut rng = seeds::rng(noise_seed);
        for v in out.iter_mut() {
            *v += complex_noise(&mut rng, std);
        }
    }
    Ok(TimeSignal {
        samples: out,
        sample_rate: sig.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_frame, ofdm_demodulate, ofdm_modulate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builtin_profiles_match_tables() {
        for p in [ChannelProfile::epa(), ChannelProfile::eva(), ChannelProfile::etu()] {
            p.validate().unwrap();
            let total: f64 = p.normalized_powers().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(ChannelProfile::builtin("Eva").unwrap().path_delays_ns.len(), 9);
        assert!(ChannelProfile::builtin("tdl-a").is_none());
    }

    #[test]
    fn profile_text_round_trip() {
        let p = ChannelProfile::etu();
        assert_eq!(ChannelProfile::parse(&p.to_string()).unwrap(), p);
        let err = ChannelProfile::parse("name = x\ndelays_ns = \ngains_db = 0").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let err = ChannelProfile::parse("name = x\ndelays_ns = 0, 10\ngains_db = 0").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn empty_profile_is_an_error() {
        let p = ChannelProfile {
            name: "none".into(),
            path_delays_ns: vec![],
            path_gains_db: vec![],
        };
        assert!(matches!(
            realize_channel(&p, 0.0, 1, &PhyConfig::default()),
            Err(Error::EmptyProfile)
        ));
    }

    #[test]
    fn tap_delays_round_to_samples() {
        let cfg = PhyConfig::default();
        let r = realize_channel(&ChannelProfile::epa(), 97.0, 1, &cfg).unwrap();
        assert_eq!(r.tap_sample_delays, vec![0, 0, 0, 0, 0, 0, 1]);
        let r = realize_channel(&ChannelProfile::etu(), 97.0, 1, &cfg).unwrap();
        assert_eq!(*r.tap_sample_delays.last().unwrap(), 10);
        let r = realize_channel(&ChannelProfile::eva(), 97.0, 1, &cfg).unwrap();
        assert_eq!(*r.tap_sample_delays.last().unwrap(), 5);
    }

    #[test]
    fn zero_doppler_is_static() {
        let cfg = PhyConfig::default();
        let r = realize_channel(&ChannelProfile::eva(), 0.0, 3, &cfg).unwrap();
        for l in 0..r.n_taps() {
            for s in 1..14 {
                assert_eq!(r.tap_gains[(l, s)], r.tap_gains[(l, 0)]);
            }
        }
    }

    #[test]
    fn negative_doppler_is_rejected() {
        let cfg = PhyConfig::default();
        assert!(realize_channel(&ChannelProfile::epa(), -1.0, 3, &cfg).is_err());
    }

    #[test]
    fn true_channel_simple_cases() {
        let cfg = PhyConfig::default();
        let r = ChannelRealization::single_tap(0, Complex64::new(1.0, 0.0), 14);
        let h = true_channel(&r, &cfg);
        assert!(h.h.as_slice().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let r = ChannelRealization::single_tap(1, Complex64::new(1.0, 0.0), 14);
        let h = true_channel(&r, &cfg);
        assert!(h.h.as_slice().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn true_channel_two_taps_matches_direct_sum() {
        let cfg = PhyConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gains = ComplexGrid::from_fn(2, 14, |_, _| Complex64::new(rng.random(), rng.random()));
        let r = ChannelRealization {
            tap_sample_delays: vec![2, 7],
            tap_gains: gains.clone(),
            doppler_hz: 0.0,
            seed: 0,
        };
        let h = true_channel(&r, &cfg);
        for s in 0..14 {
            for k in 0..72 {
                // direct evaluation through the FFT-buffer index
                let idx = cfg.fft_index(k) as f64;
                let direct = gains[(0, s)] * Complex64::from_polar(1.0, -2.0 * PI * idx * 2.0 / 128.0)
                    + gains[(1, s)] * Complex64::from_polar(1.0, -2.0 * PI * idx * 7.0 / 128.0);
                assert!((h.h[(k, s)] - direct).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_frequency_channel_is_exact() {
        let cfg = PhyConfig::default();
        let frame = build_frame(&vec![1; 1728], &cfg).unwrap();
        let r = realize_channel(&ChannelProfile::epa(), 97.0, 5, &cfg).unwrap();
        let h = true_channel(&r, &cfg);
        let y = apply_freq(&frame.cells, &h, f64::INFINITY, 0).unwrap();
        for (i, v) in y.as_slice().iter().enumerate() {
            assert_eq!(*v, frame.cells.as_slice()[i] * h.h.as_slice()[i]);
        }
    }

    #[test]
    fn frequency_noise_variance() {
        let cfg = PhyConfig::default();
        let x = ComplexGrid::zeros(72, 14);
        let h = TrueChannel {
            h: ComplexGrid::filled(72, 14, Complex64::new(1.0, 0.0)),
        };
        let snr_db = 7.0;
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        let mut acc = 0.0;
        let mut n = 0usize;
        for seed in 0..100u64 {
            let y = apply_freq(&x, &h, snr_db, seed).unwrap();
            acc += y.norm_sqr();
            n += y.as_slice().len();
        }
        assert!(n >= 100_000);
        let var = acc / n as f64;
        assert!((var / sigma2 - 1.0).abs() < 0.05, "variance {var} vs {sigma2}");
        let _ = cfg;
    }

    #[test]
    fn frequency_channel_is_deterministic() {
        let cfg = PhyConfig::default();
        let frame = build_frame(&vec![0; 1728], &cfg).unwrap();
        let r = realize_channel(&ChannelProfile::etu(), 300.0, 11, &cfg).unwrap();
        let h = true_channel(&r, &cfg);
        let a = apply_freq(&frame.cells, &h, 5.0, 42).unwrap();
        let b = apply_freq(&frame.cells, &h, 5.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(apply_freq(&frame.cells, &h, f64::NAN, 42).is_err());
    }

    #[test]
    fn identity_time_channel() {
        let cfg = PhyConfig::default();
        let frame = build_frame(&vec![0; 1728], &cfg).unwrap();
        let sig = ofdm_modulate(&frame.cells, &cfg).unwrap();
        let r = ChannelRealization::single_tap(0, Complex64::new(1.0, 0.0), 14);
        let out = apply_time(&sig, &r, &cfg, f64::INFINITY, 0).unwrap();
        assert_eq!(out, sig);
    }

    #[test]
    fn time_channel_rejects_long_delay() {
        let cfg = PhyConfig::default();
        let sig = TimeSignal {
            samples: vec![Complex64::new(0.0, 0.0); 2016],
            sample_rate: cfg.sample_rate(),
        };
        let r = ChannelRealization::single_tap(16, Complex64::new(1.0, 0.0), 14);
        assert!(matches!(
            apply_time(&sig, &r, &cfg, f64::INFINITY, 0),
            Err(Error::DelayExceedsCp { delay: 16, cp: 16 })
        ));
    }

    #[test]
    fn time_noise_on_zero_input() {
        let cfg = PhyConfig::default();
        let sig = TimeSignal {
            samples: vec![Complex64::new(0.0, 0.0); 2016],
            sample_rate: cfg.sample_rate(),
        };
        let r = ChannelRealization::single_tap(0, Complex64::new(1.0, 0.0), 14);
        let mut acc = 0.0;
        for seed in 0..50 {
            let out = apply_time(&sig, &r, &cfg, 3.0, seed).unwrap();
            acc += out.samples.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        let var = acc / (50.0 * 2016.0);
        assert!((var / 10f64.powf(-0.3) - 1.0).abs() < 0.05);
    }

    #[test]
    fn time_and_frequency_application_agree() {
        let cfg = PhyConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bits: Vec<u8> = (0..1728).map(|_| rng.random_range(0..2)).collect();
        let frame = build_frame(&bits, &cfg).unwrap();
        for (profile, doppler) in [
            (ChannelProfile::epa(), 0.0),
            (ChannelProfile::eva(), 97.0),
            (ChannelProfile::etu(), 500.0),
        ] {
            let r = realize_channel(&profile, doppler, 21, &cfg).unwrap();
            let h = true_channel(&r, &cfg);
            let by_freq = apply_freq(&frame.cells, &h, f64::INFINITY, 0).unwrap();
            let sig = apply_time(&ofdm_modulate(&frame.cells, &cfg).unwrap(), &r, &cfg, f64::INFINITY, 0).unwrap();
            let by_time = ofdm_demodulate(&sig, &cfg).unwrap();
            for (a, b) in by_freq.as_slice().iter().zip(by_time.as_slice()) {
                assert!((a - b).norm() < 1e-8, "{} mismatch", profile.name);
            }
        }
    }
}
