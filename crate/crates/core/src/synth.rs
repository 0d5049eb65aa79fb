//! Synthetic parallel corpus with known phone-dependent channel behaviour.
//!
//! Each phone has a formant template for the acoustic channel. The throat
//! channel filters the same excitation through a coarser template shared by
//! pairs of phones, shifted slightly per phone, then through the band-limiting
//! [`simulate_tm`] channel. Paired phones are therefore hard to tell apart from
//! the throat signal alone while their acoustic targets differ.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{simulate_tm, write_manifest, write_wav, PhoneSegment, TmProfile, Utterance};
use crate::error::{Error, Result};
use crate::phone::Phone;
use crate::pipeline::derive_seed;
use crate::signal::{SampleBuffer, CORPUS_RATE_HZ};

struct Template {
    symbol: &'static str,
    formants: [f64; 4],
    bandwidths: [f64; 4],
    /// Index into `TM_TEMPLATES`.
    pair: usize,
    /// Formant scale applied to the shared throat template.
    tm_shift: f64,
    /// Fraction of the excitation that is noise.
    noise: f64,
}

const TEMPLATES: [Template; 8] = [
    Template { symbol: "AA", formants: [750.0, 1150.0, 2600.0, 3600.0], bandwidths: [80.0, 100.0, 150.0, 200.0], pair: 0, tm_shift: 0.9, noise: 0.05 },
    Template { symbol: "E", formants: [500.0, 1900.0, 2500.0, 3500.0], bandwidths: [70.0, 110.0, 150.0, 200.0], pair: 0, tm_shift: 1.1, noise: 0.05 },
    Template { symbol: "M", formants: [280.0, 1000.0, 2200.0, 3300.0], bandwidths: [60.0, 150.0, 200.0, 250.0], pair: 1, tm_shift: 0.9, noise: 0.05 },
    Template { symbol: "N", formants: [300.0, 1700.0, 2700.0, 3700.0], bandwidths: [60.0, 150.0, 200.0, 250.0], pair: 1, tm_shift: 1.1, noise: 0.05 },
    Template { symbol: "L", formants: [400.0, 1100.0, 2600.0, 3400.0], bandwidths: [80.0, 120.0, 160.0, 220.0], pair: 2, tm_shift: 0.9, noise: 0.1 },
    Template { symbol: "R", formants: [450.0, 1400.0, 1750.0, 3300.0], bandwidths: [80.0, 120.0, 160.0, 220.0], pair: 2, tm_shift: 1.1, noise: 0.1 },
    Template { symbol: "S", formants: [1800.0, 4000.0, 5500.0, 6800.0], bandwidths: [300.0, 400.0, 500.0, 600.0], pair: 3, tm_shift: 0.9, noise: 1.0 },
    Template { symbol: "SH", formants: [1600.0, 2600.0, 4200.0, 6000.0], bandwidths: [300.0, 400.0, 500.0, 600.0], pair: 3, tm_shift: 1.1, noise: 1.0 },
];

const TM_TEMPLATES: [([f64; 2], [f64; 2]); 4] = [
    ([600.0, 1500.0], [200.0, 300.0]),
    ([300.0, 1100.0], [150.0, 300.0]),
    ([450.0, 900.0], [150.0, 250.0]),
    ([1000.0, 2200.0], [300.0, 400.0]),
];

/// Phones used by the generator, in template order.
pub fn phones() -> Vec<Phone> {
    TEMPLATES.iter().map(|t| t.symbol.parse().expect("valid symbol")).collect()
}

/// Phones sharing `phone`'s throat template (itself included).
pub fn throat_twins(phone: Phone) -> Vec<Phone> {
    let Some(t) = TEMPLATES.iter().find(|t| t.symbol == phone.symbol()) else {
        return vec![phone];
    };
    TEMPLATES
        .iter()
        .filter(|o| o.pair == t.pair)
        .map(|o| o.symbol.parse().expect("valid symbol"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub utterances: usize,
    pub segments_per_utterance: usize,
    pub seed: u64,
    pub channel: TmProfile,
    /// Relative per-segment formant jitter (standard deviation).
    pub jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            utterances: 20,
            segments_per_utterance: 10,
            seed: 0,
            channel: TmProfile::default(),
            jitter: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub id: String,
    pub am: SampleBuffer,
    pub tm: SampleBuffer,
    pub labels: Vec<PhoneSegment>,
}

fn resonator_poly(formants: &[f64], bandwidths: &[f64], scale: f64) -> Vec<f64> {
    let fs = CORPUS_RATE_HZ as f64;
    let mut poly = vec![1.0];
    for (&f, &bw) in formants.iter().zip(bandwidths) {
        let f = (f * scale).min(0.95 * fs / 2.0);
        let r = (-PI * bw / fs).exp();
        let c = [1.0, -2.0 * r * (2.0 * PI * f / fs).cos(), r * r];
        let mut next = vec![0.0; poly.len() + 2];
        for (i, p) in poly.iter().enumerate() {
            for (j, q) in c.iter().enumerate() {
                next[i + j] += p * q;
            }
        }
        poly = next;
    }
    poly
}

/// All-pole filter with persistent state `y` (most recent sample last).
fn all_pole(x: &[f64], poly: &[f64], y: &mut Vec<f64>) {
    for &v in x {
        let n = y.len();
        let mut out = v;
        for (k, a) in poly.iter().enumerate().skip(1) {
            if k <= n {
                out -= a * y[n - k];
            }
        }
        y.push(out);
    }
}

fn peak_normalize(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

fn utterance(index: usize, cfg: &SynthConfig) -> SynthUtterance {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let fs = CORPUS_RATE_HZ as f64;
    let mut labels = Vec::new();
    let mut am = Vec::new();
    let mut tm = Vec::new();
    let lead = (0.1 * fs) as usize;
    am.extend(std::iter::repeat_n(0.0, lead));
    tm.extend(std::iter::repeat_n(0.0, lead));
    let mut t = lead;
    let mut phase = 0.0;
    let mut last = (vec![1.0], vec![1.0]);
    for _ in 0..cfg.segments_per_utterance {
        let ti = rng.random_range(0..TEMPLATES.len());
        let tpl = &TEMPLATES[ti];
        let len = rng.random_range((0.10 * fs) as usize..(0.18 * fs) as usize);
        let jitter: f64 = StandardNormal.sample(&mut rng);
        let scale = 1.0 + cfg.jitter * jitter.clamp(-2.5, 2.5);
        let f0 = rng.random_range(100.0..140.0);
        let level = rng.random_range(0.6..1.0);
        let excitation: Vec<f64> = (0..len)
            .map(|_| {
                phase += f0 / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                let z: f64 = StandardNormal.sample(&mut rng);
                level * ((1.0 - tpl.noise) * pulse + tpl.noise * 0.3 * z)
            })
            .collect();
        let (tf, tb) = TM_TEMPLATES[tpl.pair];
        last = (
            resonator_poly(&tpl.formants, &tpl.bandwidths, scale),
            resonator_poly(&tf, &tb, scale * tpl.tm_shift),
        );
        all_pole(&excitation, &last.0, &mut am);
        all_pole(&excitation, &last.1, &mut tm);
        labels.push(PhoneSegment {
            start_s: t as f64 / fs,
            end_s: (t + len) as f64 / fs,
            phone: tpl.symbol.parse().expect("valid symbol"),
        });
        t += len;
    }
    // Let the last resonators ring down into the trailing silence.
    let silence = vec![0.0; lead];
    all_pole(&silence, &last.0, &mut am);
    all_pole(&silence, &last.1, &mut tm);
    let total = am.len();
    labels.push(PhoneSegment {
        start_s: t as f64 / fs,
        end_s: total as f64 / fs,
        phone: Phone::SIL,
    });
    labels.insert(
        0,
        PhoneSegment {
            start_s: 0.0,
            end_s: lead as f64 / fs,
            phone: Phone::SIL,
        },
    );
    peak_normalize(&mut am, 0.5);
    peak_normalize(&mut tm, 0.5);
    for v in &mut am {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += 1e-3 * z;
    }
    let channel = TmProfile {
        seed: derive_seed(cfg.channel.seed ^ cfg.seed, index as u64),
        ..cfg.channel.clone()
    };
    let tm = simulate_tm(&SampleBuffer::new(tm, CORPUS_RATE_HZ), &channel);
    SynthUtterance {
        id: format!("syn{index:04}"),
        am: SampleBuffer::new(am, CORPUS_RATE_HZ),
        tm,
        labels,
    }
}

/// Generates `cfg.utterances` parallel recordings, deterministic in `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Vec<SynthUtterance> {
    (0..cfg.utterances).map(|i| utterance(i, cfg)).collect()
}

/// Writes AM/TM WAVs, label files and `manifest.tsv` into `dir`; returns the
/// manifest path.
pub fn write_corpus(dir: &Path, utterances: &[SynthUtterance]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(utterances.len());
    for u in utterances {
        let am = PathBuf::from(format!("{}_am.wav", u.id));
        let tm = PathBuf::from(format!("{}_tm.wav", u.id));
        let lab = PathBuf::from(format!("{}.lab", u.id));
        write_wav(&dir.join(&am), &u.am)?;
        write_wav(&dir.join(&tm), &u.tm)?;
        let text: String = u
            .labels
            .iter()
            .filter(|s| !s.phone.is_silence())
            .map(|s| format!("{:.6} {:.6} {}\n", s.start_s, s.end_s, s.phone))
            .collect();
        std::fs::write(dir.join(&lab), text).map_err(|e| Error::io(dir.join(&lab), e))?;
        entries.push(Utterance {
            id: u.id.clone(),
            am_path: am,
            tm_path: tm,
            label_path: Some(lab),
        });
    }
    let manifest = dir.join("manifest.tsv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig { utterances: 2, segments_per_utterance: 3, ..SynthConfig::default() };
        let a = generate(&cfg);
        assert_eq!(a, generate(&cfg));
        assert_eq!(a[0].am.len(), a[0].tm.len());
        assert!(a[0].am.peak() < 1.0);
        assert_eq!(a[0].labels.first().unwrap().phone, Phone::SIL);
        assert_eq!(throat_twins("M".parse().unwrap()).len(), 2);
    }
}
