//! Parallel corpus input and output: WAV files, phone labels, manifests,
//! frame alignment and a throat-microphone channel simulator.

use std::collections::BTreeSet;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::excitation::spectral_tilt;
use crate::features::{Analyzer, UtteranceFeatures};
use crate::model::write_atomic;
use crate::phone::Phone;
use crate::signal::{SampleBuffer, CORPUS_RATE_HZ};

const FULL_SCALE: f64 = 32768.0;

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn check_spec(path: &Path, spec: &hound::WavSpec) -> Result<()> {
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(path, "expected 16-bit integer PCM"));
    }
    if spec.channels != 1 {
        return Err(unsupported(path, format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_rate != CORPUS_RATE_HZ {
        return Err(unsupported(
            path,
            format!("expected a sample rate of {CORPUS_RATE_HZ} Hz, found {} Hz", spec.sample_rate),
        ));
    }
    Ok(())
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => unsupported(path, other.to_string()),
    }
}

/// Reads 16 kHz, 16-bit mono PCM scaled by `1/32768`.
pub fn read_wav(path: &Path) -> Result<SampleBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    check_spec(path, &spec)?;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Ok(SampleBuffer::new(samples, spec.sample_rate))
}

/// Sample count of a WAV file after checking its format.
pub fn wav_length(path: &Path) -> Result<usize> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    check_spec(path, &reader.spec())?;
    Ok(reader.duration() as usize)
}

/// Writes 16-bit mono PCM, saturating out-of-range samples.
pub fn write_wav(path: &Path, buf: &SampleBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut bytes = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut bytes, spec).map_err(|e| wav_error(path, e))?;
        for &s in &buf.samples {
            let v = (s * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            writer.write_sample(v).map_err(|e| wav_error(path, e))?;
        }
        writer.finalize().map_err(|e| wav_error(path, e))?;
    }
    write_atomic(path, &bytes.into_inner())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhoneSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub phone: Phone,
}

/// Parses `<start> <end> <PHONE>` lines and fills gaps (and the tail up to
/// `duration_s`) with silence.
pub fn parse_labels(text: &str, duration_s: f64, origin: &Path) -> Result<Vec<PhoneSegment>> {
    let mut out: Vec<PhoneSegment> = Vec::new();
    let mut cursor = 0.0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [start, end, sym] = fields[..] else {
            return Err(err(format!("expected `<start> <end> <PHONE>`, found {line:?}")));
        };
        let start: f64 = start.parse().map_err(|_| err(format!("bad start time {start:?}")))?;
        let end: f64 = end.parse().map_err(|_| err(format!("bad end time {end:?}")))?;
        if !(start >= 0.0 && start < end && end.is_finite()) {
            return Err(err(format!("segment {start}..{end} is empty or negative")));
        }
        if start < cursor - 1e-9 {
            return Err(err(format!("segment starting at {start} overlaps the previous one ending at {cursor}")));
        }
        let phone: Phone = sym.parse().map_err(|_| Error::UnknownPhone(sym.to_string()))?;
        if start > cursor + 1e-9 {
            out.push(PhoneSegment {
                start_s: cursor,
                end_s: start,
                phone: Phone::SIL,
            });
        }
        out.push(PhoneSegment {
            start_s: start,
            end_s: end,
            phone,
        });
        cursor = end;
    }
    if duration_s > cursor + 1e-9 {
        out.push(PhoneSegment {
            start_s: cursor,
            end_s: duration_s,
            phone: Phone::SIL,
        });
    }
    Ok(out)
}

pub fn load_labels(path: &Path, duration_s: f64) -> Result<Vec<PhoneSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, duration_s, path)
}

/// Phone active at time `t`; silence outside every segment.
pub fn phone_at(segments: &[PhoneSegment], t: f64) -> Phone {
    let i = segments.partition_point(|s| s.end_s <= t);
    segments
        .get(i)
        .filter(|s| s.start_s <= t)
        .map_or(Phone::SIL, |s| s.phone)
}

/// Phone at the centre of each of `n_frames` analysis frames.
pub fn frame_phones(segments: &[PhoneSegment], n_frames: usize, analyzer: &Analyzer) -> Vec<Phone> {
    (0..n_frames)
        .map(|k| phone_at(segments, analyzer.frame_center_s(k)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub am_path: PathBuf,
    pub tm_path: PathBuf,
    pub label_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<Utterance>,
    pub split: Vec<Split>,
}

impl Manifest {
    /// First `ceil(0.9 n)` ids in sorted order train, the rest test.
    pub fn with_default_split(entries: Vec<Utterance>) -> Self {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by(|&a, &b| entries[a].id.cmp(&entries[b].id));
        let n_train = (entries.len() * 9).div_ceil(10);
        let mut split = vec![Split::Test; entries.len()];
        for &i in &order[..n_train] {
            split[i] = Split::Train;
        }
        Manifest { entries, split }
    }

    pub fn subset(&self, which: Split) -> impl Iterator<Item = &Utterance> {
        self.entries
            .iter()
            .zip(&self.split)
            .filter(move |(_, s)| **s == which)
            .map(|(u, _)| u)
    }

    pub fn train(&self) -> Vec<&Utterance> {
        self.subset(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&Utterance> {
        self.subset(Split::Test).collect()
    }

    /// Same entries with every utterance tagged `which`.
    pub fn all_as(mut self, which: Split) -> Self {
        self.split.iter_mut().for_each(|s| *s = which);
        self
    }
}

fn resolve(base: &Path, field: &str) -> PathBuf {
    let p = Path::new(field);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses manifest text; relative paths resolve against `base`. Audio files
/// are opened to check format and length agreement.
pub fn parse_manifest(text: &str, base: &Path, origin: &Path) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [id, am, tm, label] = fields[..] else {
            return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        if id.is_empty() {
            return Err(err("empty utterance id".into()));
        }
        if !ids.insert(id.to_string()) {
            return Err(err(format!("duplicate utterance id {id:?}")));
        }
        let am_path = resolve(base, am);
        let tm_path = resolve(base, tm);
        let mut lengths = [0usize; 2];
        for (slot, path) in lengths.iter_mut().zip([&am_path, &tm_path]) {
            if !path.is_file() {
                return Err(err(format!("audio file {} does not exist", path.display())));
            }
            *slot = wav_length(path).map_err(|e| err(e.to_string()))?;
        }
        let hop = (CORPUS_RATE_HZ / 100) as usize;
        if lengths[0].abs_diff(lengths[1]) > hop {
            return Err(err(format!(
                "AM and TM lengths differ by more than one frame ({} vs {} samples)",
                lengths[0], lengths[1]
            )));
        }
        let label_path = match label {
            "-" | "" => None,
            l => {
                let p = resolve(base, l);
                if !p.is_file() {
                    return Err(err(format!("label file {} does not exist", p.display())));
                }
                Some(p)
            }
        };
        entries.push(Utterance {
            id: id.to_string(),
            am_path,
            tm_path,
            label_path,
        });
    }
    Ok(Manifest::with_default_split(entries))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")), path)
}

pub fn write_manifest(path: &Path, entries: &[Utterance]) -> Result<()> {
    let mut text = String::from("# id\tam\ttm\tlabels\n");
    for u in entries {
        let label = u.label_path.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        text.push_str(&format!("{}\t{}\t{}\t{}\n", u.id, u.am_path.display(), u.tm_path.display(), label));
    }
    write_atomic(path, text.as_bytes())
}

/// One clean recording to be passed through the simulated channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanEntry {
    pub id: String,
    pub wav: PathBuf,
    pub label_path: Option<PathBuf>,
}

/// Reads `<id>\t<wav>\t<labels|->` lines (the label column is optional).
pub fn load_clean_list(path: &Path) -> Result<Vec<CleanEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut ids = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let (id, wav, label) = match fields[..] {
            [id, wav] => (id, wav, "-"),
            [id, wav, label] => (id, wav, label),
            _ => return Err(err("expected `<id>\\t<wav>[\\t<labels>]`".into())),
        };
        if !ids.insert(id.to_string()) {
            return Err(err(format!("duplicate utterance id {id:?}")));
        }
        out.push(CleanEntry {
            id: id.to_string(),
            wav: resolve(base, wav),
            label_path: (label != "-" && !label.is_empty()).then(|| resolve(base, label)),
        });
    }
    Ok(out)
}

/// One frame of aligned training features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub frame: usize,
    pub phone: Phone,
    /// TM and AM LSFs; absent when either frame is silent or unconvertible.
    pub lsf_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub cepstrum: Vec<f64>,
    /// AM minus TM residual band energies.
    pub tilt: Vec<f64>,
}

impl FeatureRow {
    /// `[x_s; y_s]`.
    pub fn envelope_vector(&self) -> Option<Vec<f64>> {
        self.lsf_pair.as_ref().map(|(x, y)| x.iter().chain(y).copied().collect())
    }

    /// `[x_s; c_T; D]`.
    pub fn excitation_vector(&self) -> Option<Vec<f64>> {
        self.lsf_pair
            .as_ref()
            .map(|(x, _)| x.iter().chain(&self.cepstrum).chain(&self.tilt).copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

const MAX_FRAME_SKEW: usize = 10;

/// Index-aligns TM and AM frames, truncating to the shorter, and tags each
/// frame with the phone at its centre (silence when unlabelled).
pub fn align_features(
    tm: &UtteranceFeatures,
    am: &UtteranceFeatures,
    labels: Option<&[PhoneSegment]>,
    analyzer: &Analyzer,
) -> Result<FeatureTable> {
    if tm.len().abs_diff(am.len()) > MAX_FRAME_SKEW {
        return Err(Error::AlignmentError {
            tm: tm.len(),
            am: am.len(),
        });
    }
    let n = tm.len().min(am.len());
    let rows = (0..n)
        .map(|k| {
            let phone = labels.map_or(Phone::SIL, |l| phone_at(l, analyzer.frame_center_s(k)));
            let lsf_pair = match (&tm.lsf[k], &am.lsf[k]) {
                (Some(x), Some(y)) => Some((x.values().to_vec(), y.values().to_vec())),
                _ => None,
            };
            let tilt = if tm.frames[k].degenerate {
                vec![0.0; tm.energies[k].0.len()]
            } else {
                spectral_tilt(&am.energies[k], &tm.energies[k])?.0
            };
            Ok(FeatureRow {
                frame: k,
                phone,
                lsf_pair,
                cepstrum: tm.cepstra[k].0.clone(),
                tilt,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FeatureTable { rows })
}

/// Simulated throat-microphone channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TmProfile {
    pub cutoff_hz: f64,
    /// Extra attenuation per octave above `slope_start_hz`, in dB (negative).
    pub slope_db_per_octave: f64,
    pub slope_start_hz: f64,
    /// RMS level of the added white noise in dBFS.
    pub noise_floor_db: f64,
    pub seed: u64,
}

impl Default for TmProfile {
    fn default() -> Self {
        TmProfile {
            cutoff_hz: 3000.0,
            slope_db_per_octave: -6.0,
            slope_start_hz: 1000.0,
            noise_floor_db: -50.0,
            seed: 0,
        }
    }
}

impl TmProfile {
    /// Amplitude response at `f_hz`: 8th-order Butterworth magnitude times the
    /// spectral slope.
    pub fn gain(&self, f_hz: f64) -> f64 {
        let lowpass = 1.0 / (1.0 + (f_hz / self.cutoff_hz).powi(16)).sqrt();
        let slope = if f_hz > self.slope_start_hz {
            10f64.powf(self.slope_db_per_octave / 20.0 * (f_hz / self.slope_start_hz).log2())
        } else {
            1.0
        };
        lowpass * slope
    }
}

/// Zero-phase filtering by the profile response plus seeded white noise.
pub fn simulate_tm(am: &SampleBuffer, profile: &TmProfile) -> SampleBuffer {
    let len = am.len();
    let mut out = vec![0.0; len];
    if len > 0 {
        // Enough padding that the circular wrap of the filter tail is negligible.
        let n = (len + 8192).next_power_of_two();
        let mut planner = FftPlanner::new();
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(am.samples.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        planner.plan_fft_forward(n).process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            let bin = k.min(n - k);
            *b *= profile.gain(bin as f64 * am.rate_hz as f64 / n as f64);
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re / n as f64;
        }
    }
    let sigma = 10f64.powf(profile.noise_floor_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    for o in &mut out {
        let z: f64 = StandardNormal.sample(&mut rng);
        *o += sigma * z;
    }
    SampleBuffer::new(out, am.rate_hz)
}
