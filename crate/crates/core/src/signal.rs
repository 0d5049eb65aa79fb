//! Frame-based waveform analysis and synthesis.
//!
//! Everything here works on a single shared frame geometry (window length and
//! hop taken from [`AnalysisConfig`]), so LPC frames and excitation DFT frames
//! line up one-to-one.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Frames whose zero-lag autocorrelation falls below this are treated as silent.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// Canonical corpus sampling rate.
pub const CORPUS_RATE_HZ: u32 = 16_000;

#[derive(Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<f64>,
    pub rate_hz: u32,
}

impl fmt::Debug for SampleBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampleBuffer")
            .field("len", &self.samples.len())
            .field("rate_hz", &self.rate_hz)
            .finish()
    }
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, rate_hz: u32) -> Self {
        SampleBuffer { samples, rate_hz }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()))
    }

    /// Scales the buffer so that its peak sits at `peak_db` dBFS. Silent
    /// buffers are left untouched.
    pub fn normalize_peak(&mut self, peak_db: f64) {
        let peak = self.peak();
        if peak > 0.0 {
            let gain = 10f64.powf(peak_db / 20.0) / peak;
            self.samples.iter_mut().for_each(|s| *s *= gain);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub lpc_order: usize,
    pub frame_shift_ms: f64,
    pub window_ms: f64,
    /// Full DFT length 2N; spectra keep the N + 1 non-negative bins.
    pub dft_size: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            lpc_order: 16,
            frame_shift_ms: 10.0,
            window_ms: 20.0,
            dft_size: 2048,
        }
    }
}

impl AnalysisConfig {
    pub fn window_len(&self, rate_hz: u32) -> usize {
        (self.window_ms * rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self, rate_hz: u32) -> usize {
        (self.frame_shift_ms * rate_hz as f64 / 1000.0).round() as usize
    }

    /// Half the DFT size, the index of the Nyquist bin.
    pub fn half_size(&self) -> usize {
        self.dft_size / 2
    }

    pub fn frame_count(&self, len: usize, rate_hz: u32) -> usize {
        len.div_ceil(self.hop_len(rate_hz))
    }

    pub fn validate(&self, rate_hz: u32) -> Result<()> {
        let win = self.window_len(rate_hz);
        let hop = self.hop_len(rate_hz);
        if self.lpc_order == 0 {
            return Err(Error::Config("lpc_order must be positive".into()));
        }
        if hop == 0 || win == 0 {
            return Err(Error::Config("window and shift must span at least one sample".into()));
        }
        if self.window_ms < self.frame_shift_ms {
            return Err(Error::Config("window_ms must be at least frame_shift_ms".into()));
        }
        if !self.dft_size.is_power_of_two() || self.dft_size < win {
            return Err(Error::Config(format!(
                "dft_size {} must be a power of two no smaller than the {win}-sample window",
                self.dft_size
            )));
        }
        if self.lpc_order >= win {
            return Err(Error::OrderTooHigh {
                order: self.lpc_order,
                len: win,
            });
        }
        Ok(())
    }
}

/// All-pole envelope `1 / A(z)` with `A(z) = 1 - sum_k coeffs[k-1] z^-k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel {
    pub coeffs: Vec<f64>,
    pub residual_gain: f64,
}

impl LpcModel {
    pub fn zero(order: usize) -> Self {
        LpcModel {
            coeffs: vec![0.0; order],
            residual_gain: 0.0,
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficients of `A(z)` in powers of `z^-1`, leading 1 included.
    pub fn polynomial(&self) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.coeffs.iter().map(|a| -a))
            .collect()
    }

    pub fn with_gain(&self, residual_gain: f64) -> Self {
        LpcModel {
            coeffs: self.coeffs.clone(),
            residual_gain,
        }
    }

    /// Reflection coefficients from the step-down recursion, or `None` when a
    /// stage hits `|k| >= 1`.
    pub fn reflection_coefficients(&self) -> Option<Vec<f64>> {
        let p = self.order();
        let mut alpha = self.coeffs.clone();
        let mut refl = vec![0.0; p];
        for m in (1..=p).rev() {
            let k = alpha[m - 1];
            if !k.is_finite() || k.abs() >= 1.0 {
                return None;
            }
            refl[m - 1] = k;
            let denom = 1.0 - k * k;
            let prev: Vec<f64> = (1..m)
                .map(|i| (alpha[i - 1] + k * alpha[m - i - 1]) / denom)
                .collect();
            alpha[..m - 1].copy_from_slice(&prev);
        }
        Some(refl)
    }

    pub fn is_stable(&self) -> bool {
        self.reflection_coefficients().is_some()
    }

    /// `|A(e^{jw})|^2`.
    pub fn inverse_power_response(&self, omega: f64) -> f64 {
        let (mut re, mut im) = (1.0, 0.0);
        for (k, a) in self.coeffs.iter().enumerate() {
            let phase = omega * (k + 1) as f64;
            re -= a * phase.cos();
            im += a * phase.sin();
        }
        re * re + im * im
    }
}

/// Levinson-Durbin step-up from reflection coefficients.
pub fn lpc_from_reflection(refl: &[f64], residual_gain: f64) -> LpcModel {
    let mut alpha: Vec<f64> = Vec::with_capacity(refl.len());
    for (m, &k) in refl.iter().enumerate() {
        let next: Vec<f64> = (0..m).map(|i| alpha[i] - k * alpha[m - 1 - i]).collect();
        alpha = next;
        alpha.push(k);
    }
    LpcModel {
        coeffs: alpha,
        residual_gain,
    }
}

/// Non-negative-frequency half of a `2N`-point DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFrame {
    pub bins: Vec<Complex64>,
    pub frame_index: usize,
}

impl SpectrumFrame {
    pub fn half_size(&self) -> usize {
        self.bins.len() - 1
    }
}

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

/// Splits `buf` into Hamming-weighted frames; frame `k` starts at `k * hop`
/// and the tail is zero-padded.
pub fn frame_signal(buf: &SampleBuffer, cfg: &AnalysisConfig) -> Result<Vec<Vec<f64>>> {
    if buf.is_empty() {
        return Err(Error::EmptyInput);
    }
    let win = cfg.window_len(buf.rate_hz);
    let hop = cfg.hop_len(buf.rate_hz);
    let window = hamming(win);
    let count = cfg.frame_count(buf.len(), buf.rate_hz);
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            window
                .iter()
                .enumerate()
                .map(|(i, w)| buf.samples.get(start + i).map_or(0.0, |s| s * w))
                .collect()
        })
        .collect())
}

pub fn autocorrelate(frame: &[f64], order: usize) -> Result<Vec<f64>> {
    if order >= frame.len() {
        return Err(Error::OrderTooHigh {
            order,
            len: frame.len(),
        });
    }
    Ok((0..=order)
        .map(|lag| {
            frame[..frame.len() - lag]
                .iter()
                .zip(&frame[lag..])
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect())
}

/// Levinson-Durbin solution of the normal equations.
///
/// Returns the predictor together with its reflection coefficients. The
/// recursion stops early (remaining coefficients zero) if the prediction error
/// vanishes or a reflection coefficient would reach unit magnitude, which keeps
/// the result stable on numerically singular input.
pub fn levinson_with_reflection(r: &[f64], order: usize) -> Result<(LpcModel, Vec<f64>)> {
    if r.len() <= order {
        return Err(Error::LengthMismatch {
            expected: order + 1,
            actual: r.len(),
        });
    }
    if !(r[0] > 0.0) {
        return Err(Error::DegenerateFrame);
    }
    if r[0] < ENERGY_FLOOR {
        return Ok((
            LpcModel {
                coeffs: vec![0.0; order],
                residual_gain: r[0],
            },
            vec![0.0; order],
        ));
    }
    let mut alpha = vec![0.0; order];
    let mut refl = vec![0.0; order];
    let mut err = r[0];
    for m in 1..=order {
        let acc = r[m] - (1..m).map(|i| alpha[i - 1] * r[m - i]).sum::<f64>();
        let k = acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            break;
        }
        let prev = alpha.clone();
        for i in 1..m {
            alpha[i - 1] = prev[i - 1] - k * prev[m - i - 1];
        }
        alpha[m - 1] = k;
        refl[m - 1] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    Ok((
        LpcModel {
            coeffs: alpha,
            residual_gain: err.max(0.0),
        },
        refl,
    ))
}

pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcModel> {
    levinson_with_reflection(r, order).map(|(model, _)| model)
}

/// Per-frame LPC analysis result.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLpc {
    pub model: LpcModel,
    /// Near-silent frame replaced by the all-zero predictor.
    pub degenerate: bool,
}

/// Autocorrelation-method LPC over every analysis frame.
pub fn lpc_analysis(buf: &SampleBuffer, cfg: &AnalysisConfig) -> Result<Vec<FrameLpc>> {
    let frames = frame_signal(buf, cfg)?;
    frames
        .iter()
        .map(|frame| {
            let r = autocorrelate(frame, cfg.lpc_order)?;
            if r[0] < ENERGY_FLOOR {
                return Ok(FrameLpc {
                    model: LpcModel::zero(cfg.lpc_order),
                    degenerate: true,
                });
            }
            Ok(FrameLpc {
                model: levinson_durbin(&r, cfg.lpc_order)?,
                degenerate: false,
            })
        })
        .collect()
}

/// Index of the analysis frame whose centre is nearest to sample `n`.
fn frame_for_sample(n: usize, win: usize, hop: usize, count: usize) -> usize {
    let pos = (n as f64 - (win as f64 - 1.0) / 2.0) / hop as f64;
    (pos.round().max(0.0) as usize).min(count - 1)
}

fn check_model_count(buf: &SampleBuffer, models: &[LpcModel], cfg: &AnalysisConfig) -> Result<()> {
    let expected = cfg.frame_count(buf.len(), buf.rate_hz);
    if models.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: models.len(),
        });
    }
    Ok(())
}

/// Prediction-error filter `A(z)` with coefficients switched per frame.
///
/// Each sample uses the predictor of the frame whose centre is closest; the
/// filter history runs continuously across switches.
pub fn inverse_filter(
    buf: &SampleBuffer,
    models: &[LpcModel],
    cfg: &AnalysisConfig,
) -> Result<SampleBuffer> {
    if buf.is_empty() {
        return Ok(buf.clone());
    }
    check_model_count(buf, models, cfg)?;
    let win = cfg.window_len(buf.rate_hz);
    let hop = cfg.hop_len(buf.rate_hz);
    let s = &buf.samples;
    let residual = (0..s.len())
        .map(|n| {
            let model = &models[frame_for_sample(n, win, hop, models.len())];
            let pred: f64 = model
                .coeffs
                .iter()
                .enumerate()
                .take_while(|(k, _)| *k < n)
                .map(|(k, a)| a * s[n - k - 1])
                .sum();
            s[n] - pred
        })
        .collect();
    Ok(SampleBuffer::new(residual, buf.rate_hz))
}

/// All-pole synthesis `1 / A(z)`, the exact inverse of [`inverse_filter`] under
/// the same frame schedule.
pub fn synthesis_filter(
    residual: &SampleBuffer,
    models: &[LpcModel],
    cfg: &AnalysisConfig,
) -> Result<SampleBuffer> {
    if residual.is_empty() {
        return Ok(residual.clone());
    }
    check_model_count(residual, models, cfg)?;
    if models.iter().any(|m| !m.is_stable()) {
        return Err(Error::UnstableFilter);
    }
    let win = cfg.window_len(residual.rate_hz);
    let hop = cfg.hop_len(residual.rate_hz);
    let mut out: Vec<f64> = Vec::with_capacity(residual.len());
    for (n, d) in residual.samples.iter().enumerate() {
        let model = &models[frame_for_sample(n, win, hop, models.len())];
        let pred: f64 = model
            .coeffs
            .iter()
            .enumerate()
            .take_while(|(k, _)| *k < n)
            .map(|(k, a)| a * out[n - k - 1])
            .sum();
        out.push(pred + d);
    }
    Ok(SampleBuffer::new(out, residual.rate_hz))
}

/// Cached forward and inverse plans for one DFT size.
#[derive(Clone)]
pub struct Dft {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("size", &self.size).finish()
    }
}

impl Dft {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dft {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Zero-padded forward transform keeping bins `0..=size/2`.
    pub fn spectrum(&self, frame: &[f64], frame_index: usize) -> Result<SpectrumFrame> {
        if frame.len() > self.size {
            return Err(Error::FrameTooLong {
                len: frame.len(),
                size: self.size,
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.forward.process(&mut buf);
        buf.truncate(self.size / 2 + 1);
        // Conjugate symmetry makes these exactly real.
        buf[0].im = 0.0;
        buf[self.size / 2].im = 0.0;
        Ok(SpectrumFrame {
            bins: buf,
            frame_index,
        })
    }

    /// Inverse transform of a half spectrum; the negative-frequency half is
    /// regenerated by conjugate symmetry and the imaginary residue dropped.
    pub fn inverse(&self, spec: &SpectrumFrame) -> Result<Vec<f64>> {
        let half = self.size / 2;
        if spec.bins.len() != half + 1 {
            return Err(Error::LengthMismatch {
                expected: half + 1,
                actual: spec.bins.len(),
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        buf[..=half].copy_from_slice(&spec.bins);
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        for k in 1..half {
            buf[self.size - k] = spec.bins[k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }
}

/// Forward DFT of one frame with a fresh plan. Prefer [`Dft`] in loops.
pub fn dft_spectrum(frame: &[f64], dft_size: usize, frame_index: usize) -> Result<SpectrumFrame> {
    Dft::new(dft_size).spectrum(frame, frame_index)
}

pub fn inverse_dft(spec: &SpectrumFrame) -> Result<Vec<f64>> {
    Dft::new(spec.half_size() * 2).inverse(spec)
}

/// Overlap-add with window-sum compensation.
///
/// Frames are placed at multiples of the hop, truncated to the window length,
/// summed, and divided by the summed Hamming windows of the same frames.
pub fn overlap_add(
    frames: &[Vec<f64>],
    cfg: &AnalysisConfig,
    rate_hz: u32,
    len: usize,
) -> SampleBuffer {
    let win = cfg.window_len(rate_hz);
    let hop = cfg.hop_len(rate_hz);
    let window = hamming(win);
    let mut out = vec![0.0; len];
    let mut wsum = vec![0.0; len];
    for (k, frame) in frames.iter().enumerate() {
        let start = k * hop;
        for (i, (&x, &w)) in frame.iter().zip(&window).enumerate() {
            let Some(slot) = out.get_mut(start + i) else {
                break;
            };
            *slot += x;
            wsum[start + i] += w;
        }
    }
    for (o, w) in out.iter_mut().zip(&wsum) {
        *o /= w.max(1e-8);
    }
    SampleBuffer::new(out, rate_hz)
}
