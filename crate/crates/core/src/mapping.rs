//! MMSE envelope mapping from throat-microphone LSFs to acoustic-microphone
//! LSFs, context independent (soft/hard) or phone dependent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gmm::{classify, JointGmm};
use crate::lsf::{lpc_to_lsf, lsf_to_lpc, stabilize_lsf, LsfVector};
use crate::phone::Phone;
use crate::signal::{FrameLpc, LpcModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Sm,
    Hm,
    Pdsm,
    Pdhm,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sm" => Ok(Scheme::Sm),
            "hm" => Ok(Scheme::Hm),
            "pdsm" => Ok(Scheme::Pdsm),
            "pdhm" => Ok(Scheme::Pdhm),
            _ => Err(Error::Config(format!("unknown mapping scheme {s:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Sm => "sm",
            Scheme::Hm => "hm",
            Scheme::Pdsm => "pdsm",
            Scheme::Pdhm => "pdhm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextSource {
    TrueLabel,
    #[default]
    GmmClassifier,
    ExternalFile,
}

impl ContextSource {
    pub fn needs_labels(self) -> bool {
        !matches!(self, ContextSource::GmmClassifier)
    }
}

impl FromStr for ContextSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "true" | "true_label" | "truelabel" => Ok(ContextSource::TrueLabel),
            "gmm" | "gmm_classifier" | "gmmclassifier" => Ok(ContextSource::GmmClassifier),
            "file" | "external_file" | "externalfile" => Ok(ContextSource::ExternalFile),
            _ => Err(Error::Config(format!("unknown context source {s:?}"))),
        }
    }
}

impl fmt::Display for ContextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextSource::TrueLabel => "true",
            ContextSource::GmmClassifier => "gmm",
            ContextSource::ExternalFile => "file",
        })
    }
}

/// Where the phone of a frame comes from. Labelled variants carry the phone;
/// the classifier variant resolves it from the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhoneContext {
    TrueLabel(Phone),
    ExternalFile(Phone),
    GmmClassifier,
}

impl PhoneContext {
    pub fn new(source: ContextSource, label: Option<Phone>) -> Result<Self> {
        match (source, label) {
            (ContextSource::GmmClassifier, _) => Ok(PhoneContext::GmmClassifier),
            (ContextSource::TrueLabel, Some(p)) => Ok(PhoneContext::TrueLabel(p)),
            (ContextSource::ExternalFile, Some(p)) => Ok(PhoneContext::ExternalFile(p)),
            (_, None) => Err(Error::MissingLabels(Vec::new())),
        }
    }

    pub fn source(self) -> ContextSource {
        match self {
            PhoneContext::TrueLabel(_) => ContextSource::TrueLabel,
            PhoneContext::ExternalFile(_) => ContextSource::ExternalFile,
            PhoneContext::GmmClassifier => ContextSource::GmmClassifier,
        }
    }

    pub fn label(self) -> Option<Phone> {
        match self {
            PhoneContext::TrueLabel(p) | PhoneContext::ExternalFile(p) => Some(p),
            PhoneContext::GmmClassifier => None,
        }
    }
}

/// A bank of joint GMMs: one context-independent model plus one per phone.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingModel {
    pub global: JointGmm,
    pub per_phone: BTreeMap<Phone, JointGmm>,
    /// Phones seen in training without enough frames for their own model.
    pub fallback: BTreeSet<Phone>,
    pub fingerprint: String,
}

/// Raw regression output together with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEstimate {
    pub values: Vec<f64>,
    /// Phone model used, `None` when the global model answered.
    pub phone: Option<Phone>,
    pub fell_back: bool,
}

impl MappingModel {
    pub fn dim_x(&self) -> usize {
        self.global.dim_x()
    }

    pub fn dim_y(&self) -> usize {
        self.global.dim_y()
    }

    pub fn check_fingerprint(&self, current: &str) -> Result<()> {
        if self.fingerprint != current {
            return Err(Error::ConfigMismatch {
                model: self.fingerprint.clone(),
                current: current.to_string(),
            });
        }
        Ok(())
    }

    /// Most likely phone class for `x` among the per-phone models.
    pub fn classify(&self, x: &[f64]) -> Result<Option<Phone>> {
        if self.per_phone.is_empty() {
            return Ok(None);
        }
        let (phones, bank): (Vec<Phone>, Vec<&JointGmm>) = self.per_phone.iter().map(|(p, m)| (*p, m)).unzip();
        Ok(Some(phones[classify(&bank, x)?]))
    }

    /// Soft estimate averaged with equal weight over every phone model.
    pub fn phone_average_estimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.per_phone.is_empty() {
            return Err(Error::InsufficientData("no phone-dependent models".into()));
        }
        let n = self.per_phone.len() as f64;
        let mut out = vec![0.0; self.dim_y()];
        for model in self.per_phone.values() {
            for (o, v) in out.iter_mut().zip(model.soft_estimate(x)?) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }

    /// Soft estimate under the model of the resolved phone, or the global model
    /// when the phone has none.
    pub fn context_estimate(&self, x: &[f64], ctx: PhoneContext) -> Result<ContextEstimate> {
        let phone = match ctx {
            PhoneContext::GmmClassifier => self.classify(x)?,
            other => other.label(),
        };
        match phone.and_then(|p| self.per_phone.get(&p).map(|m| (p, m))) {
            Some((p, model)) => Ok(ContextEstimate {
                values: model.soft_estimate(x)?,
                phone: Some(p),
                fell_back: false,
            }),
            None => {
                log::debug!("no model for phone {phone:?}; using the global model");
                Ok(ContextEstimate {
                    values: self.global.soft_estimate(x)?,
                    phone: None,
                    fell_back: true,
                })
            }
        }
    }

    /// Raw estimate for any scheme; `ctx` only matters for PDHM.
    pub fn estimate(&self, x: &[f64], scheme: Scheme, ctx: PhoneContext) -> Result<ContextEstimate> {
        let global = |values| ContextEstimate {
            values,
            phone: None,
            fell_back: false,
        };
        match scheme {
            Scheme::Sm => Ok(global(self.global.soft_estimate(x)?)),
            Scheme::Hm => Ok(global(self.global.hard_estimate(x)?)),
            Scheme::Pdsm => Ok(global(self.phone_average_estimate(x)?)),
            Scheme::Pdhm => self.context_estimate(x, ctx),
        }
    }
}

pub fn map_soft(model: &JointGmm, x: &LsfVector) -> Result<LsfVector> {
    Ok(stabilize_lsf(&model.soft_estimate(x.values())?))
}

pub fn map_hard(model: &JointGmm, x: &LsfVector) -> Result<LsfVector> {
    Ok(stabilize_lsf(&model.hard_estimate(x.values())?))
}

pub fn map_pdsm(model: &MappingModel, x: &LsfVector) -> Result<LsfVector> {
    Ok(stabilize_lsf(&model.phone_average_estimate(x.values())?))
}

pub fn map_pdhm(model: &MappingModel, x: &LsfVector, ctx: PhoneContext) -> Result<LsfVector> {
    Ok(stabilize_lsf(&model.context_estimate(x.values(), ctx)?.values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeEstimate {
    pub models: Vec<LpcModel>,
    /// Frames answered by the global model because their phone had none.
    pub fallbacks: usize,
    /// Frames passed through unmapped (silent or LSF conversion failed).
    pub passthrough: usize,
}

/// Maps every TM frame envelope: LPC -> LSF -> estimate -> stabilise -> LPC.
/// The TM residual gain is carried over unchanged.
pub fn estimate_envelope(
    frames: &[FrameLpc],
    model: &MappingModel,
    fingerprint: &str,
    scheme: Scheme,
    contexts: &[PhoneContext],
) -> Result<EnvelopeEstimate> {
    model.check_fingerprint(fingerprint)?;
    if scheme == Scheme::Pdhm && contexts.len() != frames.len() {
        return Err(Error::LengthMismatch {
            expected: frames.len(),
            actual: contexts.len(),
        });
    }
    let mut out = EnvelopeEstimate {
        models: Vec::with_capacity(frames.len()),
        fallbacks: 0,
        passthrough: 0,
    };
    for (k, frame) in frames.iter().enumerate() {
        let lsf = if frame.degenerate {
            None
        } else {
            lpc_to_lsf(&frame.model).ok()
        };
        let Some(lsf) = lsf else {
            out.passthrough += 1;
            out.models.push(frame.model.clone());
            continue;
        };
        let ctx = contexts.get(k).copied().unwrap_or(PhoneContext::GmmClassifier);
        let est = model.estimate(lsf.values(), scheme, ctx)?;
        out.fallbacks += usize::from(est.fell_back);
        let mapped = stabilize_lsf(&est.values);
        out.models.push(lsf_to_lpc(&mapped, frame.model.residual_gain)?);
    }
    Ok(out)
}
