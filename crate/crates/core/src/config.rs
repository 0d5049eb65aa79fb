//! Run configuration and its `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::excitation::{Spacing, TiltMode};
use crate::gmm::EmConfig;
use crate::mapping::{ContextSource, Scheme};
use crate::signal::{AnalysisConfig, CORPUS_RATE_HZ};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub analysis: AnalysisConfig,
    pub rate_hz: u32,
    pub mixtures_global: usize,
    pub mixtures_per_phone: usize,
    pub bands: usize,
    pub spacing: Spacing,
    pub tilt_mode: TiltMode,
    pub scheme: Scheme,
    pub context_source: ContextSource,
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            analysis: AnalysisConfig::default(),
            rate_hz: CORPUS_RATE_HZ,
            mixtures_global: 256,
            mixtures_per_phone: 16,
            bands: 8,
            spacing: Spacing::Linear,
            tilt_mode: TiltMode::PowerConsistent,
            scheme: Scheme::Sm,
            context_source: ContextSource::GmmClassifier,
            seed: 0,
            em: EmConfig::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lpc_order" => self.analysis.lpc_order = parse_value(key, value)?,
            "frame_shift_ms" => self.analysis.frame_shift_ms = parse_value(key, value)?,
            "window_ms" => self.analysis.window_ms = parse_value(key, value)?,
            "dft_size" => self.analysis.dft_size = parse_value(key, value)?,
            "rate_hz" => self.rate_hz = parse_value(key, value)?,
            "mixtures_global" => self.mixtures_global = parse_value(key, value)?,
            "mixtures_per_phone" => self.mixtures_per_phone = parse_value(key, value)?,
            "bands" => self.bands = parse_value(key, value)?,
            "spacing" => self.spacing = value.parse()?,
            "tilt_mode" => self.tilt_mode = value.parse()?,
            "scheme" => self.scheme = value.parse()?,
            "context_source" => self.context_source = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "em_max_iter" => self.em.max_iter = parse_value(key, value)?,
            "em_tol" => self.em.tol = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Overlays the settings of a config file on `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`".into()))?;
            self.set(key.trim(), value.trim()).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.analysis.validate(self.rate_hz)?;
        if self.mixtures_global == 0 || self.mixtures_per_phone == 0 {
            return Err(Error::Config("mixture counts must be positive".into()));
        }
        if self.bands < 2 {
            return Err(Error::Config("at least 2 bands are required".into()));
        }
        Ok(())
    }

    /// Settings that change the meaning of the features a model is trained on.
    pub fn feature_description(&self) -> String {
        let a = &self.analysis;
        format!(
            "lpc_order={};frame_shift_ms={};window_ms={};dft_size={};rate_hz={};bands={};spacing={}",
            a.lpc_order, a.frame_shift_ms, a.window_ms, a.dft_size, self.rate_hz, self.bands, self.spacing
        )
    }

    /// Short hash of [`feature_description`](Self::feature_description).
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.feature_description().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Serialises every field in the config-file format.
    pub fn to_text(&self) -> String {
        let a = &self.analysis;
        format!(
            "lpc_order = {}\nframe_shift_ms = {}\nwindow_ms = {}\ndft_size = {}\nrate_hz = {}\n\
             mixtures_global = {}\nmixtures_per_phone = {}\nbands = {}\nspacing = {}\ntilt_mode = {}\n\
             scheme = {}\ncontext_source = {}\nseed = {}\nem_max_iter = {}\nem_tol = {:e}\n",
            a.lpc_order,
            a.frame_shift_ms,
            a.window_ms,
            a.dft_size,
            self.rate_hz,
            self.mixtures_global,
            self.mixtures_per_phone,
            self.bands,
            self.spacing,
            self.tilt_mode,
            self.scheme,
            self.context_source,
            self.seed,
            self.em.max_iter,
            self.em.tol
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_parsing() {
        let d = RunConfig::default();
        assert_eq!((d.mixtures_global, d.mixtures_per_phone, d.bands), (256, 16, 8));
        let mut c = RunConfig::default();
        c.apply_text("# comment\n\nmixtures_global = 8\nscheme = pdhm\nspacing=mel\n", Path::new("x")).unwrap();
        assert_eq!(c.mixtures_global, 8);
        assert_eq!(c.scheme, Scheme::Pdhm);
        assert_eq!(c.spacing, Spacing::Mel);
        let err = c.apply_text("bogus = 1", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.seed = 42;
        c.tilt_mode = TiltMode::Literal;
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn fingerprint_tracks_feature_settings_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed = 7;
        b.scheme = Scheme::Hm;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.bands = 6;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
