//! Per-utterance analysis shared by training, enhancement and evaluation.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::excitation::{band_energies, build_filterbank, excitation_cepstrum, BandEnergies, CepstralVector, FilterBank};
use crate::lsf::{lpc_to_lsf, LsfVector};
use crate::signal::{frame_signal, inverse_filter, lpc_analysis, AnalysisConfig, Dft, FrameLpc, SampleBuffer, SpectrumFrame};

/// Analysis geometry with its DFT plan and filter bank prepared once.
#[derive(Debug, Clone)]
pub struct Analyzer {
    cfg: AnalysisConfig,
    rate_hz: u32,
    dft: Dft,
    bank: FilterBank,
}

#[derive(Debug, Clone)]
pub struct UtteranceFeatures {
    pub frames: Vec<FrameLpc>,
    /// `None` for silent frames and frames whose LSFs could not be found.
    pub lsf: Vec<Option<LsfVector>>,
    pub residual: SampleBuffer,
    /// Residual spectra; empty unless requested.
    pub spectra: Vec<SpectrumFrame>,
    pub energies: Vec<BandEnergies>,
    pub cepstra: Vec<CepstralVector>,
}

impl UtteranceFeatures {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl Analyzer {
    pub fn new(run: &RunConfig) -> Result<Self> {
        run.validate()?;
        Ok(Analyzer {
            cfg: run.analysis.clone(),
            rate_hz: run.rate_hz,
            dft: Dft::new(run.analysis.dft_size),
            bank: build_filterbank(run.bands, run.analysis.half_size(), run.spacing, run.rate_hz)?,
        })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.cfg
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    /// Time of the centre of frame `k` in seconds.
    pub fn frame_center_s(&self, k: usize) -> f64 {
        let hop = self.cfg.hop_len(self.rate_hz);
        let win = self.cfg.window_len(self.rate_hz);
        (k * hop) as f64 / self.rate_hz as f64 + win as f64 / (2.0 * self.rate_hz as f64)
    }

    /// LPC envelopes, LSFs, residual and residual band features of `buf`.
    pub fn analyze(&self, buf: &SampleBuffer, keep_spectra: bool) -> Result<UtteranceFeatures> {
        if buf.rate_hz != self.rate_hz {
            return Err(Error::Config(format!(
                "audio at {} Hz, configuration expects {} Hz",
                buf.rate_hz, self.rate_hz
            )));
        }
        let frames = lpc_analysis(buf, &self.cfg)?;
        let lsf = frames
            .iter()
            .map(|f| if f.degenerate { None } else { lpc_to_lsf(&f.model).ok() })
            .collect();
        let models: Vec<_> = frames.iter().map(|f| f.model.clone()).collect();
        let residual = inverse_filter(buf, &models, &self.cfg)?;
        let mut spectra = Vec::new();
        let mut energies = Vec::with_capacity(frames.len());
        let mut cepstra = Vec::with_capacity(frames.len());
        for (k, frame) in frame_signal(&residual, &self.cfg)?.iter().enumerate() {
            let spec = self.dft.spectrum(frame, k)?;
            let e = band_energies(&spec, &self.bank)?;
            cepstra.push(excitation_cepstrum(&e)?);
            energies.push(e);
            if keep_spectra {
                spectra.push(spec);
            }
        }
        Ok(UtteranceFeatures {
            frames,
            lsf,
            residual,
            spectra,
            energies,
            cepstra,
        })
    }
}
