//! Objective measures: log-spectral distortion between all-pole envelopes and
//! band-energy distortion between excitation signals.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::excitation::{band_energies, FilterBank};
use crate::phone::{Attribute, Phone};
use crate::signal::{frame_signal, AnalysisConfig, Dft, LpcModel, SampleBuffer};

pub const LSD_GRID: usize = 512;

fn envelope_power(model: &LpcModel, omega: f64) -> f64 {
    model.residual_gain.max(f64::MIN_POSITIVE) / model.inverse_power_response(omega)
}

/// RMS dB difference of the envelopes `g / |A(e^jw)|^2` over a midpoint grid
/// of `grid` points on `[0, pi)`.
pub fn lsd_frame(a: &LpcModel, b: &LpcModel, grid: usize) -> Result<f64> {
    if !a.is_stable() || !b.is_stable() {
        return Err(Error::UnstableFilter);
    }
    if grid == 0 {
        return Err(Error::EmptyInput);
    }
    let step = PI / grid as f64;
    let sum: f64 = (0..grid)
        .map(|k| {
            let w = (k as f64 + 0.5) * step;
            // Difference of logs so that swapping a and b only flips the sign.
            let d = 10.0 * (envelope_power(a, w).log10() - envelope_power(b, w).log10());
            d * d
        })
        .sum();
    Ok((sum / grid as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LsdReport {
    pub per_frame: Vec<f64>,
    /// Mean over speech frames; over all frames if there are none.
    pub mean_db: f64,
    pub per_attribute: BTreeMap<Attribute, f64>,
    pub frames_per_attribute: BTreeMap<Attribute, usize>,
    pub silence_db: Option<f64>,
    pub silence_frames: usize,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl LsdReport {
    /// Groups already computed frame distortions by the phone of each frame.
    /// Unlabelled frames count as speech without an attribute.
    pub fn from_frames(frames: &[(f64, Option<Phone>)]) -> Self {
        let mut groups: BTreeMap<Attribute, Vec<f64>> = BTreeMap::new();
        let mut speech = Vec::new();
        let mut silence = Vec::new();
        for &(d, phone) in frames {
            match phone {
                Some(p) if p.is_silence() => silence.push(d),
                Some(p) => {
                    speech.push(d);
                    if let Some(a) = p.attribute() {
                        groups.entry(a).or_default().push(d);
                    }
                }
                None => speech.push(d),
            }
        }
        let per_frame: Vec<f64> = frames.iter().map(|f| f.0).collect();
        LsdReport {
            mean_db: mean(&speech).or_else(|| mean(&per_frame)).unwrap_or(0.0),
            per_attribute: groups.iter().map(|(a, v)| (*a, mean(v).unwrap_or(0.0))).collect(),
            frames_per_attribute: groups.iter().map(|(a, v)| (*a, v.len())).collect(),
            silence_db: mean(&silence),
            silence_frames: silence.len(),
            per_frame,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>8} {:>10}", "attribute", "frames", "LSD (dB)");
        for a in Attribute::ALL {
            let n = self.frames_per_attribute.get(&a).copied().unwrap_or(0);
            match self.per_attribute.get(&a) {
                Some(v) => {
                    let _ = writeln!(s, "{:<14} {:>8} {:>10.3}", a.name(), n, v);
                }
                None => {
                    let _ = writeln!(s, "{:<14} {:>8} {:>10}", a.name(), n, "-");
                }
            }
        }
        match self.silence_db {
            Some(v) => {
                let _ = writeln!(s, "{:<14} {:>8} {:>10.3}", "Silence", self.silence_frames, v);
            }
            None => {
                let _ = writeln!(s, "{:<14} {:>8} {:>10}", "Silence", 0, "-");
            }
        }
        let _ = writeln!(s, "{:<14} {:>8} {:>10.3}", "Mean", self.per_frame.len(), self.mean_db);
        s
    }

    /// `lsd.<key> = value` lines; attributes without frames are reported as `nan`.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lsd.mean = {}", self.mean_db);
        let _ = writeln!(s, "lsd.frames = {}", self.per_frame.len());
        for a in Attribute::ALL {
            let v = self.per_attribute.get(&a).copied().unwrap_or(f64::NAN);
            let _ = writeln!(s, "lsd.{} = {}", a.key(), v);
        }
        let _ = writeln!(s, "lsd.silence = {}", self.silence_db.unwrap_or(f64::NAN));
        s
    }
}

/// Frame LSDs between reference and estimated envelopes, grouped by phone.
/// Envelopes are compared as given, gains included.
pub fn lsd_corpus(frames: &[(LpcModel, LpcModel, Option<Phone>)]) -> Result<LsdReport> {
    let scored = frames
        .iter()
        .map(|(r, e, p)| Ok((lsd_frame(r, e, LSD_GRID)?, *p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LsdReport::from_frames(&scored))
}

/// Sum of per-frame mean absolute band-energy differences and the frame count,
/// so utterances can be pooled.
pub fn band_energy_distortion_sum(
    reference: &SampleBuffer,
    test: &SampleBuffer,
    cfg: &AnalysisConfig,
    bank: &FilterBank,
) -> Result<(f64, usize)> {
    if reference.len() != test.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: test.len(),
        });
    }
    if reference.is_empty() {
        return Ok((0.0, 0));
    }
    let dft = Dft::new(cfg.dft_size);
    let fr = frame_signal(reference, cfg)?;
    let ft = frame_signal(test, cfg)?;
    let mut total = 0.0;
    for (k, (a, b)) in fr.iter().zip(&ft).enumerate() {
        let ea = band_energies(&dft.spectrum(a, k)?, bank)?;
        let eb = band_energies(&dft.spectrum(b, k)?, bank)?;
        total += ea.0.iter().zip(&eb.0).map(|(x, y)| (x - y).abs()).sum::<f64>() / ea.0.len() as f64;
    }
    Ok((total, fr.len()))
}

/// Mean over frames and bands of `|E_ref(b) - E_test(b)|` in log10 units.
pub fn band_energy_distortion(
    reference: &SampleBuffer,
    test: &SampleBuffer,
    cfg: &AnalysisConfig,
    bank: &FilterBank,
) -> Result<f64> {
    let (sum, n) = band_energy_distortion_sum(reference, test, cfg, bank)?;
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitation::{build_filterbank, Spacing};
    use crate::signal::lpc_from_reflection;

    #[test]
    fn lsd_trivial_cases() {
        let a = lpc_from_reflection(&[0.5, -0.3, 0.2], 1.0);
        assert_eq!(lsd_frame(&a, &a, LSD_GRID).unwrap(), 0.0);
        let b = a.with_gain(10.0);
        assert!((lsd_frame(&a, &b, LSD_GRID).unwrap() - 10.0).abs() < 1e-12);
        let bad = LpcModel { coeffs: vec![1.5], residual_gain: 1.0 };
        assert!(matches!(lsd_frame(&a, &bad, LSD_GRID), Err(Error::UnstableFilter)));
    }

    #[test]
    fn report_groups_by_attribute() {
        let aa: Phone = "AA".parse().unwrap();
        let m: Phone = "M".parse().unwrap();
        let r = LsdReport::from_frames(&[(1.0, Some(aa)), (3.0, Some(aa)), (5.0, Some(m)), (9.0, Some(Phone::SIL))]);
        assert_eq!(r.per_attribute[&Attribute::BackVowels], 2.0);
        assert_eq!(r.per_attribute[&Attribute::Nasals], 5.0);
        assert_eq!(r.silence_db, Some(9.0));
        assert_eq!(r.mean_db, 3.0);
        let kv = r.to_key_values();
        assert!(kv.contains("lsd.back_vowels = 2"));
        assert_eq!(r.to_text().lines().count(), 11);
    }

    #[test]
    fn band_distortion_of_scaled_signal() {
        let cfg = AnalysisConfig::default();
        let bank = build_filterbank(8, 1024, Spacing::Linear, 16_000).unwrap();
        let x: Vec<f64> = (0..1600).map(|n| (n as f64 * 0.37).sin() + 0.3 * (n as f64 * 1.9).cos()).collect();
        let a = SampleBuffer::new(x.clone(), 16_000);
        let b = SampleBuffer::new(x.iter().map(|v| 10.0 * v).collect(), 16_000);
        assert_eq!(band_energy_distortion(&a, &a, &cfg, &bank).unwrap(), 0.0);
        assert!((band_energy_distortion(&a, &b, &cfg, &bank).unwrap() - 2.0).abs() < 1e-9);
        let short = SampleBuffer::new(vec![0.0; 10], 16_000);
        assert!(matches!(band_energy_distortion(&a, &short, &cfg, &bank), Err(Error::LengthMismatch { .. })));
    }
}
