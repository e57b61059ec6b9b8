use std::cell::RefCell;
use std::collections::HashMap;

use super::dataset::Dataset;
use super::link::{mean_mse, run_link, DlEstimator, DlKind, Estimator, LsBilinear, MetricsRecord, Observation, RunConfig};
use crate::dlmodels::{build_lsidnn, train, LsidnnConfig, TrainSpec};
use crate::fxp::{quantize_model, select_I, select_W, FixedFormat, Precision};
use crate::grid::PhyConfig;
use crate::neural::NetModel;
use crate::{Error, Result};

pub fn sweep_snr(cfg: &RunConfig, estimators: &[&dyn Estimator]) -> Result<Vec<MetricsRecord>> {
    run_link(cfg, estimators)
}

/// `run_link` at each Doppler value with the same estimators, which are
/// typically trained at a single nominal Doppler.
pub fn sweep_doppler(cfg: &RunConfig, estimators: &[&dyn Estimator], dopplers_hz: &[f64]) -> Result<Vec<MetricsRecord>> {
    if dopplers_hz.is_empty() {
        return Err(Error::InvalidConfig("Doppler list is empty".into()));
    }
    let mut out = Vec::new();
    for &d in dopplers_hz {
        let c = RunConfig {
            doppler_hz: d,
            ..cfg.clone()
        };
        out.extend(run_link(&c, estimators)?);
    }
    Ok(out)
}

/// One LSiDNN per size, each trained on the first `size` records of `pool`
/// and evaluated on `eval`. Estimator names carry the size, e.g. `LSiDNN-n50`.
pub fn sweep_dataset_size(
    sizes: &[usize],
    spec: &TrainSpec,
    arch: &LsidnnConfig,
    pool: &Dataset,
    eval: &RunConfig,
) -> Result<Vec<MetricsRecord>> {
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("no dataset sizes given".into()));
    }
    let mut out = Vec::new();
    for &size in sizes {
        let subset = pool.prefix(size)?;
        let init = build_lsidnn(arch, spec.seed)?;
        let (model, _) = train(&init, &subset, spec)?;
        let est = DlEstimator {
            label: Some(format!("LSiDNN-n{size}")),
            ..DlEstimator::new(DlKind::Lsidnn, model)
        };
        out.extend(run_link(eval, &[&est])?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WordlengthRow {
    pub format: FixedFormat,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordlengthSweep {
    pub dpfl_mse: f64,
    pub spfl_mse: f64,
    /// Every probed format, in probe order, without repeats.
    pub rows: Vec<WordlengthRow>,
    pub selected: Option<FixedFormat>,
}

/// Word-length analysis of one estimator. With explicit `formats`, each is
/// evaluated and the cheapest one within `tol` of single precision is
/// selected. Otherwise `I` is chosen at width `w_probe`, then `W` for that
/// `I`, and the MSE-versus-`W` curve is extended up to `w_probe`.
pub fn sweep_wordlength(
    evaluate: &dyn Fn(Precision) -> Result<f64>,
    formats: Option<&[FixedFormat]>,
    w_probe: u32,
    tol: f64,
) -> Result<WordlengthSweep> {
    let dpfl_mse = evaluate(Precision::Double)?;
    let spfl_mse = evaluate(Precision::Single)?;
    let seen: RefCell<(Vec<WordlengthRow>, HashMap<FixedFormat, f64>)> = RefCell::default();
    let probe = |f: FixedFormat| -> Result<f64> {
        if let Some(&m) = seen.borrow().1.get(&f) {
            return Ok(m);
        }
        let m = evaluate(Precision::Fixed(f))?;
        let mut s = seen.borrow_mut();
        s.0.push(WordlengthRow { format: f, mse: m });
        s.1.insert(f, m);
        Ok(m)
    };
    let passes = |m: f64| m.is_finite() && m <= spfl_mse * (1.0 + tol);
    let selected = match formats {
        Some(list) => {
            let mut best: Option<FixedFormat> = None;
            for &f in list {
                if passes(probe(f)?) {
                    let key = |g: FixedFormat| (g.total_bits(), g.integer_bits());
                    if best.is_none_or(|b| key(f) < key(b)) {
                        best = Some(f);
                    }
                }
            }
            best
        }
        None => {
            let i = select_I(probe, w_probe, spfl_mse, tol)?;
            let w = select_W(probe, i, spfl_mse, tol)?;
            for w_curve in i + 1..=w_probe {
                probe(FixedFormat::new(w_curve, i)?)?;
            }
            Some(FixedFormat::new(w, i)?)
        }
    };
    Ok(WordlengthSweep {
        dpfl_mse,
        spfl_mse,
        rows: seen.into_inner().0,
        selected,
    })
}

/// Copy of `model` running at `precision`; parameters are rounded to match.
pub fn model_at(model: &NetModel, precision: Precision) -> NetModel {
    match precision {
        Precision::Double => NetModel {
            precision,
            ..model.clone()
        },
        Precision::Single => {
            let mut m = model.clone();
            for p in m.param_slices_mut() {
                for v in p.iter_mut() {
                    *v = *v as f32 as f64;
                }
            }
            m.precision = precision;
            m
        }
        Precision::Fixed(f) => quantize_model(model, f),
    }
}

/// Mean MSE of LS + bilinear interpolation over `frames` at a given precision.
pub fn ls_mse_at<'a>(frames: &'a [Observation], phy: &'a PhyConfig) -> impl Fn(Precision) -> Result<f64> + 'a {
    move |precision| mean_mse(&LsBilinear { precision }, frames, phy)
}

/// Mean MSE of a network estimator over `frames` at a given precision.
pub fn dl_mse_at<'a>(
    kind: DlKind,
    model: &'a NetModel,
    frames: &'a [Observation],
    phy: &'a PhyConfig,
) -> impl Fn(Precision) -> Result<f64> + 'a {
    move |precision| mean_mse(&DlEstimator::new(kind, model_at(model, precision)), frames, phy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::link::eval_frames;
    use crate::channel::ChannelProfile;

    #[test]
    fn flat_evaluator_selects_minimum_format() {
        let s = sweep_wordlength(&|_| Ok(0.2), None, 16, 0.01).unwrap();
        assert_eq!(s.selected, Some(FixedFormat::new(2, 1).unwrap()));
        // (16,1) for I, (2,1) for W, then the curve (3,1)..(16,1) reusing (16,1)
        assert_eq!(s.rows.len(), 15);
        let unique: std::collections::HashSet<_> = s.rows.iter().map(|r| r.format).collect();
        assert_eq!(unique.len(), s.rows.len());
    }

    #[test]
    fn explicit_formats_are_all_emitted() {
        let formats: Vec<FixedFormat> = ["12,3", "12,4", "16,4", "10,4"].iter().map(|s| s.parse().unwrap()).collect();
        let eval = |p: Precision| {
            Ok(match p {
                Precision::Fixed(f) if f.integer_bits() < 4 || f.total_bits() < 12 => 1.0,
                _ => 0.5,
            })
        };
        let s = sweep_wordlength(&eval, Some(&formats), 32, 0.01).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.selected, Some(FixedFormat::new(12, 4).unwrap()));
    }

    #[test]
    fn ls_wordlength_curve_plateaus() {
        let phy = PhyConfig::default();
        let cfg = RunConfig {
            profile: ChannelProfile::epa(),
            doppler_hz: 97.0,
            snr_grid: vec![10.0],
            n_frames: 60,
            seed: 3,
            phy: phy.clone(),
        };
        let frames = eval_frames(&cfg).unwrap();
        let eval = ls_mse_at(&frames, &phy);
        let s = sweep_wordlength(&eval, None, 24, 0.01).unwrap();
        let sel = s.selected.unwrap();
        let curve: Vec<&WordlengthRow> = s
            .rows
            .iter()
            .filter(|r| r.format.integer_bits() == sel.integer_bits())
            .collect();
        // coarse widths wobble by a few percent; from 12 bits on the curve is flat
        for r in curve.iter().filter(|r| r.format.total_bits() >= 12) {
            assert!((r.mse - s.dpfl_mse).abs() <= 0.01 * s.dpfl_mse, "{:?}", r);
        }
        let narrowest = curve.iter().min_by_key(|r| r.format.total_bits()).unwrap();
        assert!(narrowest.mse > 1.5 * s.dpfl_mse);
        assert!((s.dpfl_mse - s.spfl_mse).abs() <= 1e-3 * s.dpfl_mse);
    }
}
