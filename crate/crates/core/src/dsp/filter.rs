//! Zero-phase Butterworth band-pass filtering.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{DspError, Result};

/// Default band edges for energy extraction.
pub const DEFAULT_LOW_HZ: f64 = 300.0;
pub const DEFAULT_HIGH_HZ: f64 = 5000.0;
/// Order of the low-pass prototype (the band-pass has twice as many poles).
pub const DEFAULT_ORDER: usize = 4;

/// One second-order section, `a[0] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (self.a[0] + self.a[1] * z1 + self.a[2] * z2)
    }

    /// Transposed direct form II, zero initial state.
    fn run(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[1] * y + s2;
            s2 = self.b[2] * input - self.a[2] * y;
            *v = y;
        }
    }
}

/// Digital Butterworth band-pass as cascaded biquads: analog prototype,
/// low-pass to band-pass transform at prewarped edges, bilinear transform,
/// unity gain at the band centre.
pub fn butterworth_bandpass(order: usize, low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<Vec<Biquad>> {
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(DspError::Parameter(format!(
            "band edges must satisfy 0 < low ({low_hz}) < high ({high_hz}) < nyquist ({nyquist})"
        )));
    }
    if order == 0 {
        return Err(DspError::Parameter("filter order must be positive".into()));
    }
    let fs2 = 2.0 * sample_rate_hz;
    let warped_low = fs2 * (PI * low_hz / sample_rate_hz).tan();
    let warped_high = fs2 * (PI * high_hz / sample_rate_hz).tan();
    let bw = warped_high - warped_low;
    let w0 = (warped_low * warped_high).sqrt();

    let n = order as f64;
    let mut upper = Vec::with_capacity(order);
    for k in 0..order {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let proto = Complex64::from_polar(1.0, theta);
        let a = proto * (bw / 2.0);
        let d = (a * a - w0 * w0).sqrt();
        for s in [a + d, a - d] {
            let z = (fs2 + s) / (fs2 - s);
            if z.im > 0.0 {
                upper.push(z);
            }
        }
    }
    if upper.len() != order {
        return Err(DspError::Parameter(format!(
            "band {low_hz}-{high_hz} Hz yields real poles; cannot pair into biquads"
        )));
    }
    upper.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    let mut sections: Vec<Biquad> = upper
        .iter()
        .map(|p| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        })
        .collect();
    let centre = 2.0 * (w0 / fs2).atan();
    let gain: f64 = sections
        .iter()
        .map(|s| s.response(centre))
        .product::<Complex64>()
        .norm();
    for c in sections[0].b.iter_mut() {
        *c /= gain;
    }
    Ok(sections)
}

fn run_cascade(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        s.run(x);
    }
}

/// Forward-backward filtering with odd-reflection padding; the output has
/// the input's length and no phase shift.
pub fn filtfilt(sections: &[Biquad], signal: &[f64], pad: usize) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (signal[0], signal[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));
    run_cascade(sections, &mut ext);
    ext.reverse();
    run_cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase band-pass between `low_hz` and `high_hz`.
pub fn bandpass(signal: &[f64], sample_rate_hz: u32, low_hz: f64, high_hz: f64) -> Result<Vec<f64>> {
    let sr = sample_rate_hz as f64;
    let sections = butterworth_bandpass(DEFAULT_ORDER, low_hz, high_hz, sr)?;
    // three periods of the low edge
    let pad = (3.0 * sr / low_hz).ceil() as usize;
    Ok(filtfilt(&sections, signal, pad))
}
