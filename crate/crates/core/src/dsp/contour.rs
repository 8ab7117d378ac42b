//! Stress-anchored f0 windows and their DCT parameterisation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::pitch::F0Track;
use super::{DspError, Result};
use crate::corpus::{LexiconEntry, WordToken};

/// Half-width of the window around the stressed syllable's midpoint.
pub const STRESS_HALF_WINDOW_S: f64 = 0.25;
/// Number of points contours are resampled to before the DCT.
pub const RESAMPLE_POINTS: usize = 100;

/// Domain the contour is parameterised in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F0Scale {
    #[default]
    Log2,
    Hz,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourSegment {
    pub times_s: Vec<f64>,
    pub f0_hz: Vec<f64>,
}

fn is_arpabet_vowel(phone: &str) -> bool {
    phone.chars().last().is_some_and(|c| matches!(c, '0' | '1' | '2'))
}

/// Midpoint of the stressed syllable. With phone alignments this is the
/// primary-stressed vowel (ARPAbet `1`), else the vowel at the lexicon's
/// stress index; without phones the word span is divided evenly among its
/// syllables.
pub fn stressed_midpoint(token: &WordToken, entry: &LexiconEntry) -> f64 {
    let vowels: Vec<_> = token.phones.iter().filter(|p| is_arpabet_vowel(&p.text)).collect();
    let chosen = vowels
        .iter()
        .find(|p| p.text.ends_with('1'))
        .or_else(|| vowels.get(entry.stress_syllable_index as usize));
    if let Some(p) = chosen {
        return 0.5 * (p.start_s + p.end_s);
    }
    let syllable = token.duration() / entry.syllable_count as f64;
    token.start_s + (entry.stress_syllable_index as f64 + 0.5) * syllable
}

/// The cleaned track restricted to ±250 ms around the stressed syllable,
/// clipped to the word. The window edges are included by interpolation so
/// that every non-degenerate window has at least two samples.
pub fn stress_window(track: &F0Track, token: &WordToken, entry: &LexiconEntry) -> Result<ContourSegment> {
    if track.is_empty() {
        return Err(DspError::Range("empty f0 track".into()));
    }
    let mid = stressed_midpoint(token, entry);
    let lo = token.start_s.max(mid - STRESS_HALF_WINDOW_S);
    let hi = token.end_s.min(mid + STRESS_HALF_WINDOW_S);
    if hi <= lo {
        return Err(DspError::Range(format!(
            "{}: empty stress window [{lo}, {hi}]",
            token.id
        )));
    }
    let mut times = vec![lo];
    times.extend(track.times_s.iter().copied().filter(|&t| t > lo && t < hi));
    times.push(hi);
    let f0_hz = times.iter().map(|&t| track.value_at(t)).collect();
    Ok(ContourSegment { times_s: times, f0_hz })
}

/// Orthonormal DCT-II.
pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos())
                .sum();
            scale * s
        })
        .collect()
}

/// Orthonormal DCT-III, the inverse of [`dct_ii`].
pub fn dct_iii(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    scale * c * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
                })
                .sum()
        })
        .collect()
}

/// Resamples a contour to [`RESAMPLE_POINTS`] equally spaced points in the
/// chosen domain (linear interpolation over the segment's time axis).
pub fn resample_contour(segment: &ContourSegment, scale: F0Scale) -> Result<Vec<f64>> {
    let n = segment.times_s.len();
    if n < 2 || segment.f0_hz.len() != n {
        return Err(DspError::Parameter(format!(
            "contour needs at least 2 samples, got {n}"
        )));
    }
    if segment.f0_hz.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
        return Err(DspError::Parameter("contour has non-positive f0".into()));
    }
    let values: Vec<f64> = match scale {
        F0Scale::Log2 => segment.f0_hz.iter().map(|f| f.log2()).collect(),
        F0Scale::Hz => segment.f0_hz.clone(),
    };
    let (t0, t1) = (segment.times_s[0], segment.times_s[n - 1]);
    let mut out = Vec::with_capacity(RESAMPLE_POINTS);
    let mut seg = 0;
    for j in 0..RESAMPLE_POINTS {
        let t = if j == RESAMPLE_POINTS - 1 {
            t1
        } else {
            t0 + (t1 - t0) * j as f64 / (RESAMPLE_POINTS - 1) as f64
        };
        while seg + 2 < n && segment.times_s[seg + 1] <= t {
            seg += 1;
        }
        let (ta, tb) = (segment.times_s[seg], segment.times_s[seg + 1]);
        let frac = if tb > ta {
            ((t - ta) / (tb - ta)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(values[seg] + frac * (values[seg + 1] - values[seg]));
    }
    Ok(out)
}

/// First `k` orthonormal DCT-II coefficients of the resampled contour.
pub fn dct_parameterize(segment: &ContourSegment, k: usize, scale: F0Scale) -> Result<Vec<f64>> {
    if k == 0 || k > RESAMPLE_POINTS {
        return Err(DspError::Parameter(format!(
            "dct k must be in 1..={RESAMPLE_POINTS}, got {k}"
        )));
    }
    let resampled = resample_contour(segment, scale)?;
    let mut coeffs = dct_ii(&resampled);
    coeffs.truncate(k);
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Phone, SyllableSource, TokenId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn token(start: f64, end: f64) -> WordToken {
        WordToken {
            id: TokenId::new("u", 0),
            text: "w".into(),
            start_s: start,
            end_s: end,
            speaker_id: String::new(),
            phones: vec![],
        }
    }

    fn entry(count: u32, stress: u32) -> LexiconEntry {
        LexiconEntry {
            word: "w".into(),
            syllable_count: count,
            stress_syllable_index: stress,
            source: SyllableSource::Lexicon,
        }
    }

    fn flat_track(secs: f64, f0: f64) -> F0Track {
        let n = (secs / 0.01) as usize;
        F0Track {
            times_s: (0..n).map(|i| i as f64 * 0.01 + 0.005).collect(),
            f0_hz: vec![f0; n],
            voiced: vec![true; n],
            frame_hop_s: 0.01,
        }
    }

    #[test]
    fn short_word_window_is_whole_word() {
        let seg = stress_window(&flat_track(2.0, 120.0), &token(1.0, 1.3), &entry(1, 0)).unwrap();
        assert_eq!(seg.times_s[0], 1.0);
        assert_eq!(*seg.times_s.last().unwrap(), 1.3);
    }

    #[test]
    fn three_syllable_window() {
        let tok = token(1.0, 1.9);
        let seg = stress_window(&flat_track(3.0, 120.0), &tok, &entry(3, 1)).unwrap();
        let (lo, hi) = (seg.times_s[0] - tok.start_s, seg.times_s.last().unwrap() - tok.start_s);
        assert!((lo - 0.20).abs() < 1e-12 && (hi - 0.70).abs() < 1e-12, "[{lo}, {hi}]");
    }

    #[test]
    fn phones_override_uniform_midpoint() {
        let mut tok = token(0.0, 0.9);
        tok.phones = vec![
            Phone {
                text: "B".into(),
                start_s: 0.0,
                end_s: 0.1,
            },
            Phone {
                text: "AH0".into(),
                start_s: 0.1,
                end_s: 0.3,
            },
            Phone {
                text: "N".into(),
                start_s: 0.3,
                end_s: 0.4,
            },
            Phone {
                text: "AE1".into(),
                start_s: 0.4,
                end_s: 0.6,
            },
        ];
        assert!((stressed_midpoint(&tok, &entry(3, 0)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_contour_dct() {
        let c = 7.0f64;
        let seg = ContourSegment {
            times_s: vec![0.0, 0.1, 0.2],
            f0_hz: vec![c.exp2(); 3],
        };
        let coeffs = dct_parameterize(&seg, 8, F0Scale::Log2).unwrap();
        assert!((coeffs[0] - 10.0 * c).abs() < 1e-9);
        assert!(coeffs[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn basis_vector_dct() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let curve: Vec<f64> = (0..100).map(|i| (PI * (2 * i + 1) as f64 / 200.0).cos()).collect();
        let seg = ContourSegment {
            times_s: times,
            f0_hz: curve.iter().map(|v| v.exp2()).collect(),
        };
        let coeffs = dct_parameterize(&seg, 8, F0Scale::Log2).unwrap();
        assert!(coeffs[1].abs() > 1.0);
        for (k, v) in coeffs.iter().enumerate() {
            if k != 1 {
                assert!(v.abs() < 1e-9, "coefficient {k} = {v}");
            }
        }
    }

    #[test]
    fn round_trip_k100() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let times: Vec<f64> = (0..37).map(|i| i as f64 * 0.01).collect();
        let f0: Vec<f64> = (0..37).map(|_| rng.random_range(80.0..300.0)).collect();
        let seg = ContourSegment {
            times_s: times,
            f0_hz: f0,
        };
        let resampled = resample_contour(&seg, F0Scale::Log2).unwrap();
        let coeffs = dct_parameterize(&seg, 100, F0Scale::Log2).unwrap();
        let back = dct_iii(&coeffs);
        for (a, b) in resampled.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dct_parameter_errors() {
        let seg = ContourSegment {
            times_s: vec![0.0, 1.0],
            f0_hz: vec![100.0, 100.0],
        };
        assert!(dct_parameterize(&seg, 101, F0Scale::Log2).is_err());
        assert!(dct_parameterize(&seg, 0, F0Scale::Log2).is_err());
        let short = ContourSegment {
            times_s: vec![0.0],
            f0_hz: vec![100.0],
        };
        assert!(dct_parameterize(&short, 8, F0Scale::Log2).is_err());
    }

    #[test]
    fn hz_scale_is_linear_domain() {
        let seg = ContourSegment {
            times_s: vec![0.0, 1.0],
            f0_hz: vec![100.0, 100.0],
        };
        let c = dct_parameterize(&seg, 1, F0Scale::Hz).unwrap();
        assert!((c[0] - 1000.0).abs() < 1e-9);
    }
}
