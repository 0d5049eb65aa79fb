use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmenhance::excitation::{build_filterbank, Spacing};
use tmenhance::metrics::{band_energy_distortion, lsd_corpus, lsd_frame, LsdReport, LSD_GRID};
use tmenhance::phone::{Attribute, Phone};
use tmenhance::signal::{AnalysisConfig, LpcModel, SampleBuffer};

/// Predictor with conjugate pole pairs at the given radii and angles.
fn from_poles(poles: &[(f64, f64)], gain: f64) -> LpcModel {
    let mut poly = vec![1.0];
    for &(r, w) in poles {
        let section = [1.0, -2.0 * r * w.cos(), r * r];
        let mut next = vec![0.0; poly.len() + 2];
        for (i, p) in poly.iter().enumerate() {
            for (j, s) in section.iter().enumerate() {
                next[i + j] += p * s;
            }
        }
        poly = next;
    }
    LpcModel {
        coeffs: poly[1..].iter().map(|c| -c).collect(),
        residual_gain: gain,
    }
}

fn arb_envelope(max_radius: f64) -> impl Strategy<Value = LpcModel> {
    (prop::collection::vec((0.0..max_radius, 0.05f64..3.1), 8), 0.1f64..10.0).prop_map(|(poles, g)| from_poles(&poles, g))
}

#[test]
fn known_gain_offset() {
    // Flat envelopes differing only in gain: LSD is the constant dB offset.
    let a = LpcModel::zero(4).with_gain(10.0);
    let b = LpcModel::zero(4).with_gain(1.0);
    assert!((lsd_frame(&a, &b, LSD_GRID).unwrap() - 10.0).abs() < 1e-12);
}

#[test]
fn single_pole_pair_against_closed_form() {
    // For minimum-phase A, the mean of 20 log10 |A| over the circle is zero,
    // and the mean square follows from the cepstrum: c_n = -(r^n / n) 2 cos(n w0).
    let (r, w0) = (0.6, 1.0);
    let a = from_poles(&[(r, w0)], 1.0);
    let flat = LpcModel::zero(2).with_gain(1.0);
    let scale = 10.0 / std::f64::consts::LN_10;
    let sum: f64 = (1..400).map(|n| (2.0 * r.powi(n) * (n as f64 * w0).cos() / n as f64).powi(2)).sum();
    let expected = scale * (2.0 * sum).sqrt();
    let got = lsd_frame(&a, &flat, LSD_GRID).unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn report_groups_by_attribute_and_excludes_silence() {
    let aa: Phone = "AA".parse().unwrap();
    let s: Phone = "S".parse().unwrap();
    let report = LsdReport::from_frames(&[(2.0, Some(aa)), (4.0, Some(aa)), (6.0, Some(s)), (100.0, Some(Phone::SIL))]);
    assert!((report.mean_db - 4.0).abs() < 1e-12);
    assert_eq!(report.silence_frames, 1);
    assert_eq!(report.silence_db, Some(100.0));
    let vowel = aa.attribute().unwrap();
    assert_eq!(report.per_attribute[&vowel], 3.0);
    assert_eq!(report.frames_per_attribute[&vowel], 2);
    assert!(report.to_text().contains(vowel.name()));
    assert!(report.to_key_values().contains(&format!("lsd.{} = 3", vowel.key())));
    assert_eq!(Attribute::ALL.len(), 8);
}

#[test]
fn corpus_lsd_of_identical_envelopes_is_zero() {
    let e = from_poles(&[(0.9, 0.5), (0.8, 2.0)], 2.0);
    let report = lsd_corpus(&[(e.clone(), e, Some("M".parse().unwrap()))]).unwrap();
    assert_eq!(report.mean_db, 0.0);
}

#[test]
fn band_distortion_of_identical_signals_is_zero() {
    let cfg = AnalysisConfig::default();
    let bank = build_filterbank(8, 1024, Spacing::Linear, 16_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = SampleBuffer::new((0..4000).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000);
    assert_eq!(band_energy_distortion(&a, &a, &cfg, &bank).unwrap(), 0.0);
    // Scaling by 10 raises every band by 2 in log10 power.
    let b = SampleBuffer::new(a.samples.iter().map(|x| 10.0 * x).collect(), 16_000);
    assert!((band_energy_distortion(&a, &b, &cfg, &bank).unwrap() - 2.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lsd_is_symmetric_and_zero_on_the_diagonal(a in arb_envelope(0.99), b in arb_envelope(0.99)) {
        prop_assert_eq!(lsd_frame(&a, &b, LSD_GRID).unwrap(), lsd_frame(&b, &a, LSD_GRID).unwrap());
        prop_assert_eq!(lsd_frame(&a, &a, LSD_GRID).unwrap(), 0.0);
        prop_assert!(lsd_frame(&a, &b, LSD_GRID).unwrap() >= 0.0);
    }

    #[test]
    fn grid_converges_for_envelopes_with_bounded_pole_radius(a in arb_envelope(0.95), b in arb_envelope(0.95)) {
        let coarse = lsd_frame(&a, &b, LSD_GRID).unwrap();
        let fine = lsd_frame(&a, &b, 4096).unwrap();
        prop_assert!((coarse - fine).abs() < 5e-3, "{} vs {}", coarse, fine);
    }

    #[test]
    fn lsd_obeys_the_triangle_inequality(a in arb_envelope(0.9), b in arb_envelope(0.9), c in arb_envelope(0.9)) {
        let ab = lsd_frame(&a, &b, LSD_GRID).unwrap();
        let bc = lsd_frame(&b, &c, LSD_GRID).unwrap();
        let ac = lsd_frame(&a, &c, LSD_GRID).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }
}

#[test]
fn pole_angles_span_the_band() {
    // Sanity check of the test generator itself.
    let m = from_poles(&[(0.5, PI / 2.0)], 1.0);
    assert!((m.coeffs[0]).abs() < 1e-12 && (m.coeffs[1] + 0.25).abs() < 1e-12);
}
