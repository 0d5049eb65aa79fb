//! Excitation enhancement by per-band spectral tilt.
//!
//! The residual spectrum is summarised by log band energies under a bank of
//! overlapping triangular filters. The difference between acoustic and throat
//! band energies (the tilt) is mapped from throat observables and applied back
//! as a smooth per-bin gain.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lsf::LsfVector;
use crate::mapping::{MappingModel, PhoneContext};
use crate::signal::{overlap_add, AnalysisConfig, Dft, SampleBuffer, SpectrumFrame};

pub const POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Spacing {
    #[default]
    Linear,
    Mel,
}

impl FromStr for Spacing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Spacing::Linear),
            "mel" => Ok(Spacing::Mel),
            _ => Err(Error::Config(format!("unknown band spacing {s:?}"))),
        }
    }
}

impl fmt::Display for Spacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spacing::Linear => "linear",
            Spacing::Mel => "mel",
        })
    }
}

/// How a log10 tilt becomes an amplitude gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiltMode {
    /// `10^(d/2)` per node, refined so the realised band-power change matches
    /// the requested tilt.
    #[default]
    PowerConsistent,
    /// `10^d` on the amplitude spectrum, exactly as printed.
    Literal,
}

impl FromStr for TiltMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" | "powerconsistent" | "power_consistent" => Ok(TiltMode::PowerConsistent),
            "literal" => Ok(TiltMode::Literal),
            _ => Err(Error::Config(format!("unknown tilt mode {s:?}"))),
        }
    }
}

impl fmt::Display for TiltMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiltMode::PowerConsistent => "power",
            TiltMode::Literal => "literal",
        })
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters centred on bins `f_0 = 0 < f_1 < .. < f_{B+1} = N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    bands: usize,
    half_size: usize,
    spacing: Spacing,
    centers: Vec<usize>,
    // weights[b][n] for b in 0..=B+1, n in 0..=N
    weights: Vec<Vec<f64>>,
}

/// Builds a bank of `bands` interior filters over bins `0..=half_size`. The
/// sample rate only matters for mel spacing.
pub fn build_filterbank(bands: usize, half_size: usize, spacing: Spacing, rate_hz: u32) -> Result<FilterBank> {
    if bands == 0 || half_size <= bands + 1 {
        return Err(Error::BadGeometry(format!(
            "{bands} bands need more than {} bins, got {half_size}",
            bands + 1
        )));
    }
    let n = half_size as f64;
    let last = (bands + 1) as f64;
    let centers: Vec<usize> = match spacing {
        Spacing::Linear => (0..=bands + 1).map(|b| (b as f64 * n / last).round() as usize).collect(),
        Spacing::Mel => {
            let nyquist = rate_hz as f64 / 2.0;
            let top = hz_to_mel(nyquist);
            (0..=bands + 1)
                .map(|b| (mel_to_hz(b as f64 * top / last) / nyquist * n).round() as usize)
                .collect()
        }
    };
    if centers.windows(2).any(|w| w[0] >= w[1]) || centers[0] != 0 || centers[bands + 1] != half_size {
        return Err(Error::BadGeometry(format!("band centres {centers:?} are not strictly increasing")));
    }
    let weights = (0..=bands + 1)
        .map(|b| {
            (0..=half_size)
                .map(|i| {
                    let c = centers[b];
                    if i <= c {
                        if b == 0 {
                            f64::from(i == 0)
                        } else if i >= centers[b - 1] {
                            (i - centers[b - 1]) as f64 / (c - centers[b - 1]) as f64
                        } else {
                            0.0
                        }
                    } else if b <= bands && i <= centers[b + 1] {
                        (centers[b + 1] - i) as f64 / (centers[b + 1] - c) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(FilterBank {
        bands,
        half_size,
        spacing,
        centers,
        weights,
    })
}

impl FilterBank {
    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn half_size(&self) -> usize {
        self.half_size
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Centre bins `f_0 ..= f_{B+1}`.
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    /// `w_b(n)` for `b` in `0..=B+1`.
    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        self.weights[band][bin]
    }

    fn check(&self, spec: &SpectrumFrame) -> Result<()> {
        if spec.bins.len() != self.half_size + 1 {
            return Err(Error::DimMismatch {
                expected: self.half_size + 1,
                actual: spec.bins.len(),
            });
        }
        Ok(())
    }

    /// Weighted power of interior bands `1..=B` for per-bin powers `power`.
    fn band_powers(&self, power: &[f64]) -> Vec<f64> {
        (1..=self.bands)
            .map(|b| {
                let w = &self.weights[b];
                (1..self.half_size).map(|i| w[i] * power[i]).sum()
            })
            .collect()
    }

    /// Weight of interior node `j` (1-based) once the boundary nodes are tied
    /// to their neighbours.
    fn node_weight(&self, j: usize, bin: usize) -> f64 {
        let mut w = self.weights[j][bin];
        if j == 1 {
            w += self.weights[0][bin];
        }
        if j == self.bands {
            w += self.weights[self.bands + 1][bin];
        }
        w
    }
}

/// Log10 band energies `E(1..=B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergies(pub Vec<f64>);

/// Per-band log10 energy difference, target minus source.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltVector(pub Vec<f64>);

/// DCT of band energies, coefficients `1..B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstralVector(pub Vec<f64>);

pub fn band_energies(spec: &SpectrumFrame, bank: &FilterBank) -> Result<BandEnergies> {
    bank.check(spec)?;
    let power: Vec<f64> = spec.bins.iter().map(|c| c.norm_sqr()).collect();
    Ok(BandEnergies(
        bank.band_powers(&power)
            .into_iter()
            .map(|p| p.max(POWER_FLOOR).log10())
            .collect(),
    ))
}

pub fn spectral_tilt(target: &BandEnergies, source: &BandEnergies) -> Result<TiltVector> {
    if target.0.len() != source.0.len() {
        return Err(Error::DimMismatch {
            expected: source.0.len(),
            actual: target.0.len(),
        });
    }
    Ok(TiltVector(target.0.iter().zip(&source.0).map(|(t, s)| t - s).collect()))
}

pub fn excitation_cepstrum(e: &BandEnergies) -> Result<CepstralVector> {
    let b = e.0.len();
    if b < 2 {
        return Err(Error::BadGeometry(format!("cepstrum needs at least 2 bands, got {b}")));
    }
    let bf = b as f64;
    Ok(CepstralVector(
        (1..b)
            .map(|n| {
                e.0.iter()
                    .enumerate()
                    .map(|(i, v)| v * (std::f64::consts::PI * n as f64 * (i as f64 + 0.5) / bf).cos())
                    .sum()
            })
            .collect(),
    ))
}

/// Maps the tilt from the concatenated observable `[x_s; c_T]`.
pub fn map_tilt(model: &MappingModel, x_s: &LsfVector, c_t: &CepstralVector, ctx: PhoneContext) -> Result<TiltVector> {
    let mut x = x_s.values().to_vec();
    x.extend_from_slice(&c_t.0);
    Ok(TiltVector(model.context_estimate(&x, ctx)?.values))
}

/// Per-bin amplitude gains from node values `d_1..d_B` (boundary nodes tied).
fn gain_profile(bank: &FilterBank, nodes: &[f64], exponent: f64) -> Vec<f64> {
    let b = bank.bands;
    let node_gain: Vec<f64> = (0..=b + 1)
        .map(|j| 10f64.powf(exponent * nodes[j.clamp(1, b) - 1]))
        .collect();
    (0..=bank.half_size)
        .map(|i| (0..=b + 1).map(|j| bank.weights[j][i] * node_gain[j]).sum())
        .collect()
}

const NEWTON_ITERS: usize = 30;
const NEWTON_TOL: f64 = 1e-12;

/// Node values whose realised band-power change equals `target` on every band
/// carrying power above the floor. Starts from the target itself, which is
/// already exact for constant tilts.
fn refine_nodes(bank: &FilterBank, power: &[f64], target: &[f64]) -> Vec<f64> {
    let base = bank.band_powers(power);
    let active: Vec<usize> = (0..bank.bands).filter(|&j| base[j] > POWER_FLOOR).collect();
    let mut nodes = target.to_vec();
    if active.is_empty() {
        return nodes;
    }
    let residual = |nodes: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let gains = gain_profile(bank, nodes, 0.5);
        let tilted: Vec<f64> = power.iter().zip(&gains).map(|(p, g)| p * g * g).collect();
        let bp = bank.band_powers(&tilted);
        let r = active
            .iter()
            .map(|&j| (bp[j] / base[j]).log10() - target[j])
            .collect();
        (r, gains, bp)
    };
    let max_abs = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut r, mut gains, mut bp) = residual(&nodes);
    for _ in 0..NEWTON_ITERS {
        let err = max_abs(&r);
        if err < NEWTON_TOL || !err.is_finite() {
            break;
        }
        // d log10 P_b / d d_j = sum_n w_b p g w~_j G_j / P_b  (the ln 10 cancels)
        let m = active.len();
        let mut jac = DMatrix::zeros(m, m);
        for (col, &j) in active.iter().enumerate() {
            let gj = 10f64.powf(0.5 * nodes[j]);
            for (row, &b) in active.iter().enumerate() {
                let wb = &bank.weights[b + 1];
                let s: f64 = (1..bank.half_size)
                    .map(|i| wb[i] * power[i] * gains[i] * bank.node_weight(j + 1, i))
                    .sum();
                jac[(row, col)] = s * gj / bp[b];
            }
        }
        let Some(step) = jac.lu().solve(&(-DVector::from_column_slice(&r))) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let mut trial = nodes.clone();
            for (k, &j) in active.iter().enumerate() {
                trial[j] += scale * step[k];
            }
            let (tr, tg, tb) = residual(&trial);
            if max_abs(&tr) < err {
                nodes = trial;
                (r, gains, bp) = (tr, tg, tb);
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    nodes
}

/// Scales every bin of `spec` by the interpolated band gain; phase is kept.
pub fn apply_tilt(spec: &SpectrumFrame, dhat: &TiltVector, bank: &FilterBank, mode: TiltMode) -> Result<SpectrumFrame> {
    bank.check(spec)?;
    if dhat.0.len() != bank.bands {
        return Err(Error::DimMismatch {
            expected: bank.bands,
            actual: dhat.0.len(),
        });
    }
    let gains = match mode {
        TiltMode::Literal => gain_profile(bank, &dhat.0, 1.0),
        TiltMode::PowerConsistent => {
            let power: Vec<f64> = spec.bins.iter().map(|c| c.norm_sqr()).collect();
            let nodes = refine_nodes(bank, &power, &dhat.0);
            gain_profile(bank, &nodes, 0.5)
        }
    };
    Ok(SpectrumFrame {
        bins: spec.bins.iter().zip(&gains).map(|(c, g)| c * *g).collect(),
        frame_index: spec.frame_index,
    })
}

/// Inverse DFT of every frame, truncated to the window and overlap-added.
pub fn reconstruct_excitation(
    frames: &[SpectrumFrame],
    dft: &Dft,
    cfg: &AnalysisConfig,
    rate_hz: u32,
    len: usize,
) -> Result<SampleBuffer> {
    let win = cfg.window_len(rate_hz);
    let time: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let mut t = dft.inverse(f)?;
            t.truncate(win);
            Ok(t)
        })
        .collect::<Result<_>>()?;
    Ok(overlap_add(&time, cfg, rate_hz, len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;

    fn flat(n: usize) -> SpectrumFrame {
        SpectrumFrame {
            bins: vec![Complex64::new(1.0, 0.0); n + 1],
            frame_index: 0,
        }
    }

    #[test]
    fn linear_bank_geometry() {
        let bank = build_filterbank(8, 1024, Spacing::Linear, 16_000).unwrap();
        assert_eq!(bank.centers()[0], 0);
        assert_eq!(bank.centers()[9], 1024);
        for b in 1..=8 {
            assert_eq!(bank.weight(b, bank.centers()[b]), 1.0);
            assert_eq!(bank.weight(b, bank.centers()[b - 1]), 0.0);
            assert_eq!(bank.weight(b, bank.centers()[b + 1]), 0.0);
        }
        for i in 0..=1024 {
            let s: f64 = (0..=9).map(|b| bank.weight(b, i)).sum();
            assert!((s - 1.0).abs() < 1e-12, "bin {i} sums to {s}");
        }
        assert!(build_filterbank(8, 9, Spacing::Linear, 16_000).is_err());
        assert!(build_filterbank(0, 1024, Spacing::Linear, 16_000).is_err());
        let mel = build_filterbank(8, 1024, Spacing::Mel, 16_000).unwrap();
        assert!(mel.centers()[1] < bank.centers()[1]);
    }

    #[test]
    fn flat_and_zero_spectra() {
        let bank = build_filterbank(8, 1024, Spacing::Linear, 16_000).unwrap();
        let e = band_energies(&flat(1024), &bank).unwrap();
        for b in 1..=8 {
            let c = bank.centers();
            let area: f64 = (c[b - 1] + 1..c[b + 1]).map(|i| bank.weight(b, i)).sum();
            assert!((e.0[b - 1] - area.log10()).abs() < 1e-12);
        }
        let zero = SpectrumFrame { bins: vec![Complex64::new(0.0, 0.0); 1025], frame_index: 0 };
        assert!(band_energies(&zero, &bank).unwrap().0.iter().all(|&v| v == -12.0));
    }

    #[test]
    fn cepstrum_of_first_cosine() {
        let b = 8;
        let e = BandEnergies((1..=b).map(|i| (std::f64::consts::PI * (i as f64 - 0.5) / b as f64).cos()).collect());
        let c = excitation_cepstrum(&e).unwrap();
        assert!((c.0[0] - 4.0).abs() < 1e-12);
        assert!(c.0[1..].iter().all(|v| v.abs() < 1e-12));
        let constant = excitation_cepstrum(&BandEnergies(vec![3.0; 8])).unwrap();
        assert!(constant.0.iter().all(|v| v.abs() < 1e-12));
        assert!(excitation_cepstrum(&BandEnergies(vec![1.0])).is_err());
    }

    #[test]
    fn tilt_modes_on_constant_tilt() {
        let bank = build_filterbank(8, 1024, Spacing::Linear, 16_000).unwrap();
        let spec = SpectrumFrame {
            bins: (0..=1024).map(|i| Complex64::from_polar(1.0 + (i as f64 * 0.01).sin().abs(), i as f64)).collect(),
            frame_index: 0,
        };
        let before = band_energies(&spec, &bank).unwrap();
        let d = TiltVector(vec![0.3; 8]);
        let power = apply_tilt(&spec, &d, &bank, TiltMode::PowerConsistent).unwrap();
        let literal = apply_tilt(&spec, &d, &bank, TiltMode::Literal).unwrap();
        let dp = spectral_tilt(&band_energies(&power, &bank).unwrap(), &before).unwrap();
        let dl = spectral_tilt(&band_energies(&literal, &bank).unwrap(), &before).unwrap();
        for b in 0..8 {
            assert!((dp.0[b] - 0.3).abs() < 1e-6);
            assert!((dl.0[b] - 0.6).abs() < 1e-6);
        }
        let same = apply_tilt(&spec, &TiltVector(vec![0.0; 8]), &bank, TiltMode::PowerConsistent).unwrap();
        for i in 1..1024 {
            assert!((same.bins[i] - spec.bins[i]).norm() < 1e-12);
        }
    }
}
