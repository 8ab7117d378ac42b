//! Frame-wise f0 tracking (YIN) and track cleaning.
//!
//! For each frame the squared difference function
//! `d(τ) = Σ_j (x_j − x_{j+τ})²` is normalised by its cumulative mean,
//! `d'(τ) = d(τ)·τ / Σ_{i≤τ} d(i)`. The first lag in the search range whose
//! `d'` falls under the threshold is followed down to its local minimum and
//! refined by a parabola through the neighbouring lags.

use serde::{Deserialize, Serialize};

use super::{DspError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YinParams {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub frame_hop_s: f64,
    pub frame_len_s: f64,
    pub threshold: f64,
}

impl Default for YinParams {
    fn default() -> Self {
        Self {
            f0_min_hz: 60.0,
            f0_max_hz: 400.0,
            frame_hop_s: 0.010,
            frame_len_s: 0.040,
            threshold: 0.15,
        }
    }
}

impl YinParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz) {
            return Err(DspError::Parameter(format!(
                "f0 range must satisfy 0 < f0_min ({}) < f0_max ({})",
                self.f0_min_hz, self.f0_max_hz
            )));
        }
        if !(self.frame_hop_s > 0.0 && self.frame_len_s > 0.0) {
            return Err(DspError::Parameter("frame hop and length must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(DspError::Parameter(format!(
                "YIN threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Per-frame f0 estimates. `f0_hz == 0` and `voiced == false` mark unvoiced
/// frames before cleaning.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Track {
    /// Frame centre times.
    pub times_s: Vec<f64>,
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
    pub frame_hop_s: f64,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.len() as f64
    }

    /// Linear interpolation in log2(f0) between frame centres, constant
    /// beyond the first and last frame. Expects a cleaned track.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.len();
        if t <= self.times_s[0] {
            return self.f0_hz[0];
        }
        if t >= self.times_s[n - 1] {
            return self.f0_hz[n - 1];
        }
        let hi = self.times_s.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let frac = (t - self.times_s[lo]) / (self.times_s[hi] - self.times_s[lo]);
        let (a, b) = (self.f0_hz[lo].log2(), self.f0_hz[hi].log2());
        (a + frac * (b - a)).exp2()
    }
}

pub fn track_f0(signal: &[f64], sample_rate_hz: u32, params: &YinParams) -> Result<F0Track> {
    params.validate()?;
    let sr = sample_rate_hz as f64;
    let frame_len = (params.frame_len_s * sr).round() as usize;
    let hop = (params.frame_hop_s * sr).round() as usize;
    let tau_min = ((sr / params.f0_max_hz).floor() as usize).max(2);
    let tau_max = (sr / params.f0_min_hz).ceil() as usize;
    if hop == 0 || tau_max + 2 > frame_len {
        return Err(DspError::Parameter(format!(
            "frame of {frame_len} samples cannot hold lags up to {tau_max} (f0_min {} Hz)",
            params.f0_min_hz
        )));
    }
    if signal.len() < frame_len {
        return Err(DspError::Parameter(format!(
            "signal of {} samples is shorter than one frame ({frame_len})",
            signal.len()
        )));
    }
    let window = frame_len - tau_max - 1;
    let n_frames = 1 + (signal.len() - frame_len) / hop;
    let mut diff = vec![0.0; tau_max + 2];
    let mut track = F0Track {
        times_s: Vec::with_capacity(n_frames),
        f0_hz: Vec::with_capacity(n_frames),
        voiced: Vec::with_capacity(n_frames),
        frame_hop_s: hop as f64 / sr,
    };
    for f in 0..n_frames {
        let start = f * hop;
        let frame = &signal[start..start + frame_len];
        track.times_s.push((start as f64 + frame_len as f64 / 2.0) / sr);
        let estimate = yin_frame(frame, window, tau_min, tau_max, params.threshold, &mut diff)
            .map(|tau| sr / tau)
            .filter(|f0| *f0 >= params.f0_min_hz * 0.95 && *f0 <= params.f0_max_hz * 1.05);
        track.f0_hz.push(estimate.unwrap_or(0.0));
        track.voiced.push(estimate.is_some());
    }
    Ok(track)
}

/// Returns the refined period in samples, or `None` for an unvoiced frame.
fn yin_frame(
    frame: &[f64],
    window: usize,
    tau_min: usize,
    tau_max: usize,
    threshold: f64,
    diff: &mut [f64],
) -> Option<f64> {
    if frame.iter().all(|&v| v == 0.0) {
        return None;
    }
    diff[0] = 0.0;
    for tau in 1..=tau_max + 1 {
        let mut acc = 0.0;
        for j in 0..window {
            let d = frame[j] - frame[j + tau];
            acc += d * d;
        }
        diff[tau] = acc;
    }
    // cumulative mean normalisation, in place
    let mut running = 0.0;
    diff[0] = 1.0;
    for tau in 1..=tau_max + 1 {
        running += diff[tau];
        diff[tau] = if running > 0.0 {
            diff[tau] * tau as f64 / running
        } else {
            1.0
        };
    }
    let mut tau = (tau_min..=tau_max).find(|&t| diff[t] < threshold)?;
    while tau < tau_max && diff[tau + 1] < diff[tau] {
        tau += 1;
    }
    let (l, c, r) = (diff[tau - 1], diff[tau], diff[tau + 1]);
    let denom = l - 2.0 * c + r;
    let shift = if denom.abs() > f64::EPSILON {
        0.5 * (l - r) / denom
    } else {
        0.0
    };
    Some(tau as f64 + shift.clamp(-1.0, 1.0))
}

/// Removes octave outliers and fills unvoiced gaps.
///
/// Voiced frames more than one octave from the median log2(f0) become
/// unvoiced; gaps are then interpolated linearly in log2(f0) and leading or
/// trailing gaps take the nearest voiced value. Every output frame is voiced.
pub fn clean_f0(track: &F0Track) -> Result<F0Track> {
    let mut logs: Vec<f64> = track
        .f0_hz
        .iter()
        .zip(&track.voiced)
        .filter(|(f, v)| **v && **f > 0.0)
        .map(|(f, _)| f.log2())
        .collect();
    if logs.is_empty() {
        return Err(DspError::EmptyVoicing);
    }
    logs.sort_by(f64::total_cmp);
    let m = logs.len();
    let median = if m % 2 == 1 {
        logs[m / 2]
    } else {
        0.5 * (logs[m / 2 - 1] + logs[m / 2])
    };
    let kept: Vec<Option<f64>> = track
        .f0_hz
        .iter()
        .zip(&track.voiced)
        .map(|(&f, &v)| (v && f > 0.0).then(|| f.log2()).filter(|l| (l - median).abs() <= 1.0))
        .collect();
    let anchors: Vec<usize> = (0..kept.len()).filter(|&i| kept[i].is_some()).collect();
    if anchors.is_empty() {
        return Err(DspError::EmptyVoicing);
    }
    let mut out = vec![0.0; kept.len()];
    let first = anchors[0];
    let last = *anchors.last().expect("non-empty");
    // Kept frames and edge extensions copy the original Hz value so that
    // clean tracks pass through bit for bit.
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = if kept[i].is_some() {
            track.f0_hz[i]
        } else if i < first {
            track.f0_hz[first]
        } else if i > last {
            track.f0_hz[last]
        } else {
            let pos = anchors.partition_point(|&a| a < i);
            let (lo, hi) = (anchors[pos - 1], anchors[pos]);
            let (a, b) = (kept[lo].expect("anchor"), kept[hi].expect("anchor"));
            let frac = (track.times_s[i] - track.times_s[lo]) / (track.times_s[hi] - track.times_s[lo]);
            (a + frac * (b - a)).exp2()
        };
    }
    Ok(F0Track {
        times_s: track.times_s.clone(),
        f0_hz: out,
        voiced: vec![true; kept.len()],
        frame_hop_s: track.frame_hop_s,
    })
}
