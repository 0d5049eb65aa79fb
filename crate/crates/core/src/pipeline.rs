//! End-to-end operations: training, enhancement, evaluation and corpus
//! simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::{
    align_features, frame_phones, load_labels, read_wav, simulate_tm, write_manifest, write_wav, CleanEntry,
    FeatureTable, Manifest, PhoneSegment, TmProfile, Utterance,
};
use crate::error::{Error, Result};
use crate::excitation::{apply_tilt, reconstruct_excitation, TiltMode, TiltVector};
use crate::features::{Analyzer, UtteranceFeatures};
use crate::gmm::{em_train, vq_initialize, JointGmm};
use crate::mapping::{estimate_envelope, ContextSource, MappingModel, PhoneContext, Scheme};
use crate::metrics::{band_energy_distortion_sum, lsd_frame, LsdReport, LSD_GRID};
use crate::model::ModelFile;
use crate::phone::Phone;
use crate::signal::{synthesis_filter, LpcModel, SampleBuffer};

/// Output level of enhanced audio in dBFS.
pub const OUTPUT_PEAK_DB: f64 = -1.0;

/// Decorrelated seed for stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn utterance_labels(u: &Utterance, duration_s: f64) -> Result<Option<Vec<PhoneSegment>>> {
    u.label_path.as_deref().map(|p| load_labels(p, duration_s)).transpose()
}

/// Analyses and aligns the training utterances of `manifest`.
pub fn feature_tables(manifest: &Manifest, analyzer: &Analyzer) -> Result<Vec<FeatureTable>> {
    manifest
        .train()
        .par_iter()
        .map(|u| {
            let am = read_wav(&u.am_path)?;
            let tm = read_wav(&u.tm_path)?;
            let labels = utterance_labels(u, am.duration_s())?;
            let fa = analyzer.analyze(&am, false)?;
            let ft = analyzer.analyze(&tm, false)?;
            align_features(&ft, &fa, labels.as_deref(), analyzer)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub domain: &'static str,
    /// `None` for the global model.
    pub phone: Option<Phone>,
    pub frames: usize,
    pub mixtures: usize,
    pub iterations: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub models: Vec<ModelSummary>,
    /// Phones seen in training with too few frames for their own models.
    pub fallback: Vec<Phone>,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<11} {:<6} {:>7} {:>4} {:>5} {:>14}", "domain", "model", "frames", "L", "iters", "log-lik/frame")?;
        for m in &self.models {
            let name = m.phone.map_or("global".to_string(), |p| p.to_string());
            writeln!(
                f,
                "{:<11} {:<6} {:>7} {:>4} {:>5} {:>14.4}",
                m.domain, name, m.frames, m.mixtures, m.iterations, m.log_likelihood
            )?;
        }
        if !self.fallback.is_empty() {
            let names: Vec<String> = self.fallback.iter().map(|p| p.to_string()).collect();
            writeln!(f, "global fallback for: {}", names.join(" "))?;
        }
        Ok(())
    }
}

struct Job {
    domain: &'static str,
    phone: Option<Phone>,
    dim_x: usize,
    mixtures: usize,
    seed: u64,
    rows: Vec<Vec<f64>>,
}

fn fit(job: &Job, run: &RunConfig) -> Result<(JointGmm, ModelSummary)> {
    let init = vq_initialize(&job.rows, job.dim_x, job.mixtures, job.seed)?;
    let out = em_train(&init, &job.rows, &run.em)?;
    let summary = ModelSummary {
        domain: job.domain,
        phone: job.phone,
        frames: job.rows.len(),
        mixtures: job.mixtures,
        iterations: out.iterations,
        log_likelihood: out.final_log_likelihood(),
    };
    Ok((out.model, summary))
}

/// Trains the envelope and excitation mapping banks from aligned features.
pub fn train_from_tables(tables: &[FeatureTable], run: &RunConfig) -> Result<(ModelFile, TrainReport)> {
    run.validate()?;
    let p = run.analysis.lpc_order;
    let mut env_global = Vec::new();
    let mut exc_global = Vec::new();
    let mut by_phone: BTreeMap<Phone, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
    for row in tables.iter().flat_map(|t| &t.rows) {
        let (Some(env), Some(exc)) = (row.envelope_vector(), row.excitation_vector()) else {
            continue;
        };
        let slot = by_phone.entry(row.phone).or_default();
        slot.0.push(env.clone());
        slot.1.push(exc.clone());
        env_global.push(env);
        exc_global.push(exc);
    }
    let needed = 2 * run.mixtures_global;
    if env_global.len() < needed {
        return Err(Error::InsufficientData(format!(
            "global models: {} usable frames for {} mixtures (need {needed})",
            env_global.len(),
            run.mixtures_global
        )));
    }
    let dims = [("envelope", p), ("excitation", p + run.bands - 1)];
    let mut jobs = vec![
        Job { domain: dims[0].0, phone: None, dim_x: dims[0].1, mixtures: run.mixtures_global, seed: derive_seed(run.seed, 0), rows: env_global },
        Job { domain: dims[1].0, phone: None, dim_x: dims[1].1, mixtures: run.mixtures_global, seed: derive_seed(run.seed, 1), rows: exc_global },
    ];
    let mut fallback = Vec::new();
    for (phone, (env, exc)) in by_phone {
        if env.len() < 2 * run.mixtures_per_phone {
            log::warn!("phone {phone}: {} frames, using the global model", env.len());
            fallback.push(phone);
            continue;
        }
        let stream = 2 + 2 * phone.index() as u64;
        for (k, rows) in [env, exc].into_iter().enumerate() {
            jobs.push(Job {
                domain: dims[k].0,
                phone: Some(phone),
                dim_x: dims[k].1,
                mixtures: run.mixtures_per_phone,
                seed: derive_seed(run.seed, stream + k as u64),
                rows,
            });
        }
    }
    let fitted = jobs.par_iter().map(|j| fit(j, run)).collect::<Result<Vec<_>>>()?;
    let fingerprint = run.fingerprint();
    let mut banks: [(Option<JointGmm>, BTreeMap<Phone, JointGmm>); 2] = Default::default();
    let mut report = TrainReport { models: Vec::new(), fallback: fallback.clone() };
    for (job, (gmm, summary)) in jobs.iter().zip(fitted) {
        log::info!("{} {:?}: log-likelihood {:.4}", job.domain, job.phone, summary.log_likelihood);
        let bank = &mut banks[usize::from(job.domain == dims[1].0)];
        match job.phone {
            None => bank.0 = Some(gmm),
            Some(p) => {
                bank.1.insert(p, gmm);
            }
        }
        report.models.push(summary);
    }
    let [env, exc] = banks.map(|(global, per_phone)| MappingModel {
        global: global.expect("global model is always trained"),
        per_phone,
        fallback: fallback.iter().copied().collect::<BTreeSet<_>>(),
        fingerprint: fingerprint.clone(),
    });
    Ok((
        ModelFile {
            config: run.clone(),
            envelope: env,
            excitation: exc,
        },
        report,
    ))
}

/// Trains on the training split of `manifest`.
pub fn train(manifest: &Manifest, run: &RunConfig) -> Result<(ModelFile, TrainReport)> {
    let analyzer = Analyzer::new(run)?;
    let tables = feature_tables(manifest, &analyzer)?;
    train_from_tables(&tables, run)
}

/// Which parts of the throat signal are replaced by mapped estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthesisMode {
    /// Mapped envelope and mapped excitation.
    #[default]
    Aa,
    /// Mapped envelope, throat excitation.
    At,
    /// Throat envelope, mapped excitation.
    Ta,
    /// Throat envelope and excitation (analysis-resynthesis).
    Tt,
}

impl SynthesisMode {
    pub fn maps_envelope(self) -> bool {
        matches!(self, SynthesisMode::Aa | SynthesisMode::At)
    }

    pub fn maps_excitation(self) -> bool {
        matches!(self, SynthesisMode::Aa | SynthesisMode::Ta)
    }
}

impl FromStr for SynthesisMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aa" => Ok(SynthesisMode::Aa),
            "at" => Ok(SynthesisMode::At),
            "ta" => Ok(SynthesisMode::Ta),
            "tt" => Ok(SynthesisMode::Tt),
            _ => Err(Error::Config(format!("unknown synthesis mode {s:?}"))),
        }
    }
}

impl fmt::Display for SynthesisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthesisMode::Aa => "aa",
            SynthesisMode::At => "at",
            SynthesisMode::Ta => "ta",
            SynthesisMode::Tt => "tt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnhanceOptions {
    pub mode: SynthesisMode,
    pub scheme: Scheme,
    pub context: ContextSource,
    pub tilt_mode: TiltMode,
}

impl EnhanceOptions {
    pub fn from_config(run: &RunConfig, mode: SynthesisMode) -> Self {
        EnhanceOptions {
            mode,
            scheme: run.scheme,
            context: run.context_source,
            tilt_mode: run.tilt_mode,
        }
    }

    /// Whether per-frame phone labels must be supplied.
    pub fn needs_labels(&self) -> bool {
        self.context.needs_labels()
            && ((self.scheme == Scheme::Pdhm && self.mode.maps_envelope()) || self.mode.maps_excitation())
    }
}

#[derive(Debug, Clone)]
pub struct Enhancement {
    /// Output peak-normalised to [`OUTPUT_PEAK_DB`].
    pub audio: SampleBuffer,
    /// Excitation fed to the synthesis filter.
    pub excitation: SampleBuffer,
    /// Synthesis envelope of every frame.
    pub envelopes: Vec<LpcModel>,
    pub tm: UtteranceFeatures,
    pub envelope_fallbacks: usize,
    pub tilt_fallbacks: usize,
}

/// A trained model bound to the configuration it is used under.
#[derive(Debug, Clone)]
pub struct Enhancer {
    model: ModelFile,
    analyzer: Analyzer,
    fingerprint: String,
}

impl Enhancer {
    /// Fails with `ConfigMismatch` when the model was trained on different
    /// features than `run` describes.
    pub fn new(model: ModelFile, run: &RunConfig) -> Result<Self> {
        let fingerprint = run.fingerprint();
        model.envelope.check_fingerprint(&fingerprint)?;
        model.excitation.check_fingerprint(&fingerprint)?;
        Ok(Enhancer {
            model,
            analyzer: Analyzer::new(run)?,
            fingerprint,
        })
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn model(&self) -> &ModelFile {
        &self.model
    }

    /// Enhances one throat recording. `labels` gives the phone of every frame
    /// and is required when the options need context labels.
    pub fn enhance(&self, tm: &SampleBuffer, labels: Option<&[Phone]>, opts: &EnhanceOptions) -> Result<Enhancement> {
        if opts.needs_labels() && labels.is_none() {
            return Err(Error::MissingLabels(Vec::new()));
        }
        let a = &self.analyzer;
        let feats = a.analyze(tm, opts.mode.maps_excitation())?;
        let n = feats.len();
        let contexts = (0..n)
            .map(|k| {
                let label = labels.map(|l| l.get(k).copied().unwrap_or(Phone::SIL));
                PhoneContext::new(opts.context, label)
            })
            .collect::<Result<Vec<_>>>()?;

        let (envelopes, envelope_fallbacks) = if opts.mode.maps_envelope() {
            let est = estimate_envelope(&feats.frames, &self.model.envelope, &self.fingerprint, opts.scheme, &contexts)?;
            (est.models, est.fallbacks)
        } else {
            (feats.frames.iter().map(|f| f.model.clone()).collect(), 0)
        };

        let mut tilt_fallbacks = 0;
        let excitation = if opts.mode.maps_excitation() {
            let bank = a.bank();
            let tilted = feats
                .spectra
                .iter()
                .enumerate()
                .map(|(k, spec)| {
                    let Some(lsf) = feats.lsf[k].as_ref().filter(|_| !feats.frames[k].degenerate) else {
                        return Ok(spec.clone());
                    };
                    // Same observable as the tilt mapping: [x_s; c_T].
                    let mut x = lsf.values().to_vec();
                    x.extend_from_slice(&feats.cepstra[k].0);
                    let est = self.model.excitation.context_estimate(&x, contexts[k])?;
                    tilt_fallbacks += usize::from(est.fell_back);
                    apply_tilt(spec, &TiltVector(est.values), bank, opts.tilt_mode)
                })
                .collect::<Result<Vec<_>>>()?;
            reconstruct_excitation(&tilted, a.dft(), a.config(), a.rate_hz(), tm.len())?
        } else {
            feats.residual.clone()
        };

        let mut audio = synthesis_filter(&excitation, &envelopes, a.config())?;
        audio.normalize_peak(OUTPUT_PEAK_DB);
        Ok(Enhancement {
            audio,
            excitation,
            envelopes,
            tm: feats,
            envelope_fallbacks,
            tilt_fallbacks,
        })
    }

    /// Scores one utterance against its acoustic reference. `truth` groups the
    /// frames by phone; `context` feeds label-driven mapping.
    pub fn score(
        &self,
        am: &SampleBuffer,
        tm: &SampleBuffer,
        truth: Option<&[Phone]>,
        context: Option<&[Phone]>,
        opts: &EnhanceOptions,
    ) -> Result<UtteranceScore> {
        let enh = self.enhance(tm, context, opts)?;
        let ref_feats = self.analyzer.analyze(am, false)?;
        let n = ref_feats.len().min(enh.envelopes.len());
        let mut lsd = Vec::with_capacity(n);
        for k in 0..n {
            if ref_feats.frames[k].degenerate || enh.tm.frames[k].degenerate {
                continue;
            }
            let reference = ref_feats.frames[k].model.with_gain(1.0);
            let estimate = enh.envelopes[k].with_gain(1.0);
            let phone = truth.map(|t| t.get(k).copied().unwrap_or(Phone::SIL));
            lsd.push((lsd_frame(&reference, &estimate, LSD_GRID)?, phone));
        }
        let len = ref_feats.residual.len().min(enh.excitation.len());
        let cut = |b: &SampleBuffer| SampleBuffer::new(b.samples[..len].to_vec(), b.rate_hz);
        let band = band_energy_distortion_sum(&cut(&ref_feats.residual), &cut(&enh.excitation), self.analyzer.config(), self.analyzer.bank())?;
        Ok(UtteranceScore {
            lsd,
            band,
            envelope_fallbacks: enh.envelope_fallbacks,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScore {
    pub lsd: Vec<(f64, Option<Phone>)>,
    /// Summed per-frame band distortion and frame count.
    pub band: (f64, usize),
    pub envelope_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub lsd: LsdReport,
    /// Mean absolute log10 band-energy difference between AM and output excitation.
    pub band_distortion: f64,
    pub utterances: usize,
    pub envelope_fallbacks: usize,
}

impl EvaluationReport {
    pub fn from_scores(scores: &[UtteranceScore]) -> Self {
        let frames: Vec<_> = scores.iter().flat_map(|s| s.lsd.iter().copied()).collect();
        let (sum, count) = scores.iter().fold((0.0, 0), |(s, c), u| (s + u.band.0, c + u.band.1));
        EvaluationReport {
            lsd: LsdReport::from_frames(&frames),
            band_distortion: if count == 0 { 0.0 } else { sum / count as f64 },
            utterances: scores.len(),
            envelope_fallbacks: scores.iter().map(|s| s.envelope_fallbacks).sum(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("utterances: {}\n\n", self.utterances);
        s.push_str(&self.lsd.to_text());
        let _ = writeln!(s, "\nband-energy distortion: {:.4} (log10)", self.band_distortion);
        if self.envelope_fallbacks > 0 {
            let _ = writeln!(s, "frames mapped by the global fallback: {}", self.envelope_fallbacks);
        }
        s
    }

    pub fn to_key_values(&self) -> String {
        let mut s = self.lsd.to_key_values();
        let _ = writeln!(s, "band_distortion.mean = {}", self.band_distortion);
        let _ = writeln!(s, "utterances.count = {}", self.utterances);
        let _ = writeln!(s, "fallback.frames = {}", self.envelope_fallbacks);
        s
    }
}

/// Enhances and scores every test utterance of `manifest`. With an
/// external-file context, labels are read from `<context_dir>/<id>.lab` when a
/// directory is given and from the manifest otherwise.
pub fn evaluate(
    enhancer: &Enhancer,
    manifest: &Manifest,
    opts: &EnhanceOptions,
    context_dir: Option<&Path>,
) -> Result<EvaluationReport> {
    let test = manifest.test();
    if test.is_empty() {
        return Err(Error::NoTestData);
    }
    let context_path = |u: &Utterance| -> Option<PathBuf> {
        match (opts.context, context_dir) {
            (ContextSource::ExternalFile, Some(dir)) => Some(dir.join(format!("{}.lab", u.id))),
            _ => u.label_path.clone(),
        }
    };
    if opts.needs_labels() {
        let missing: Vec<String> = test
            .iter()
            .filter(|u| !context_path(u).is_some_and(|p| p.is_file()))
            .map(|u| u.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
    }
    let analyzer = enhancer.analyzer();
    let scores = test
        .par_iter()
        .map(|u| {
            let am = read_wav(&u.am_path)?;
            let tm = read_wav(&u.tm_path)?;
            let n = analyzer.config().frame_count(tm.len(), tm.rate_hz);
            let phones = |path: Option<PathBuf>| -> Result<Option<Vec<Phone>>> {
                path.map(|p| Ok(frame_phones(&load_labels(&p, tm.duration_s())?, n, analyzer)))
                    .transpose()
            };
            let truth = phones(u.label_path.clone())?;
            let context = if opts.needs_labels() { phones(context_path(u))? } else { None };
            enhancer.score(&am, &tm, truth.as_deref(), context.as_deref(), opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::from_scores(&scores))
}

/// Passes every clean recording through the simulated channel, writing
/// `<out_dir>/<id>_tm.wav` and `<out_dir>/manifest.tsv`. Returns the manifest
/// path.
pub fn simulate_corpus(clean: &[CleanEntry], profile: &TmProfile, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let absolute = |p: &Path| std::path::absolute(p).map_err(|e| Error::io(p, e));
    let entries = clean
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let am = read_wav(&c.wav)?;
            let channel = TmProfile { seed: derive_seed(profile.seed, i as u64), ..profile.clone() };
            let tm = simulate_tm(&am, &channel);
            let tm_path = out_dir.join(format!("{}_tm.wav", c.id));
            write_wav(&tm_path, &tm)?;
            Ok(Utterance {
                id: c.id.clone(),
                am_path: absolute(&c.wav)?,
                tm_path: PathBuf::from(format!("{}_tm.wav", c.id)),
                label_path: c.label_path.as_deref().map(absolute).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = out_dir.join("manifest.tsv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
