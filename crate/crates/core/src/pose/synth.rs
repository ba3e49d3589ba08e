//! Seeded synthetic motion.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::sequence::{PoseSequence, Representation};
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, Tensor};

/// Per-coordinate sinusoids with a shared integer period.
#[derive(Clone, Debug)]
pub struct PeriodicSpec {
    pub joints: usize,
    pub period: usize,
    /// One amplitude per coordinate (`3 * joints`).
    pub amplitudes: Vec<f64>,
    /// One phase per coordinate, in frames.
    pub phases: Vec<f64>,
    pub frames: usize,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    pub fps: f64,
    pub seed: u64,
}

impl PeriodicSpec {
    /// Amplitudes drawn from `[0.5, 1] * amplitude`, phases from `[0, period)`.
    pub fn random(joints: usize, period: usize, frames: usize, amplitude: f64, noise: f64, seed: u64) -> Self {
        let mut rng = seeded_rng(seed ^ 0x5eed_0001);
        let k = 3 * joints;
        let amplitudes = (0..k).map(|_| amplitude * rng.gen_range(0.5..1.0)).collect();
        let phases = (0..k).map(|_| rng.gen_range(0.0..period as f64)).collect();
        Self {
            joints,
            period,
            amplitudes,
            phases,
            frames,
            noise,
            fps: 25.0,
            seed,
        }
    }
}

/// `x[t][c] = a_c sin(2π (t + φ_c) / period) + noise`. With zero noise, frame
/// `t` and frame `t + period` are bitwise equal.
pub fn synth_periodic(spec: &PeriodicSpec) -> Result<PoseSequence> {
    if spec.period < 2 {
        return Err(Error::InvalidArgument("period must be at least 2".into()));
    }
    let k = 3 * spec.joints;
    if spec.amplitudes.len() != k || spec.phases.len() != k {
        return Err(Error::InvalidArgument(format!("expected {k} amplitudes and phases")));
    }
    let mut rng = seeded_rng(spec.seed);
    let normal = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut data = Vec::with_capacity(spec.frames * k);
    for t in 0..spec.frames {
        let tp = (t % spec.period) as f64;
        for c in 0..k {
            let arg = 2.0 * std::f64::consts::PI * (tp + spec.phases[c]) / spec.period as f64;
            let mut v = spec.amplitudes[c] * arg.sin();
            if spec.noise > 0.0 {
                v += normal.sample(&mut rng);
            }
            data.push(v);
        }
    }
    PoseSequence::new(
        Representation::Xyz,
        spec.joints,
        3,
        spec.fps,
        Tensor::new(vec![spec.frames, k], data)?,
    )
}

/// Triangle-wave motion with one phase shared by all coordinates: the pose
/// travels back and forth along a segment, so every pose is visited both
/// on the way out and on the way back.
#[derive(Clone, Debug)]
pub struct TriangleSpec {
    pub joints: usize,
    /// Period is drawn uniformly from this inclusive range.
    pub period_range: (usize, usize),
    pub amplitude: f64,
    pub frames: usize,
    pub noise: f64,
    pub seed: u64,
}

pub fn synth_triangle(spec: &TriangleSpec) -> Result<PoseSequence> {
    let (lo, hi) = spec.period_range;
    if lo < 2 || hi < lo {
        return Err(Error::InvalidArgument(format!("bad period range {lo}..={hi}")));
    }
    let mut rng = seeded_rng(spec.seed);
    let k = 3 * spec.joints;
    let period = rng.gen_range(lo..=hi) as f64;
    let phase = rng.gen_range(0.0..period);
    let amps: Vec<f64> = (0..k)
        .map(|_| spec.amplitude * rng.gen_range(0.3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let offsets: Vec<f64> = (0..k).map(|_| spec.amplitude * rng.gen_range(-0.2..0.2)).collect();
    let normal = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut data = Vec::with_capacity(spec.frames * k);
    for t in 0..spec.frames {
        let u = ((t as f64 + phase) / period).fract();
        let tri = 1.0 - 4.0 * (u - 0.5).abs();
        for c in 0..k {
            let mut v = offsets[c] + amps[c] * tri;
            if spec.noise > 0.0 {
                v += normal.sample(&mut rng);
            }
            data.push(v);
        }
    }
    PoseSequence::new(Representation::Xyz, spec.joints, 3, 25.0, Tensor::new(vec![spec.frames, k], data)?)
}

/// Layout of a sequence built by [`synth_repeat_after_gap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepeatLayout {
    pub first_start: usize,
    pub second_start: usize,
    pub motif_len: usize,
}

/// `[lead filler][motif][gap filler][motif][tail filler]`, truncated to
/// `frames`. Motif and fillers are independent smooth random curves.
#[derive(Clone, Debug)]
pub struct RepeatSpec {
    pub joints: usize,
    pub motif_len: usize,
    pub gap_len: usize,
    pub lead_len: usize,
    pub frames: usize,
    pub amplitude: f64,
    /// Spacing of random control points; smaller is rougher.
    pub knot_spacing: usize,
    pub seed: u64,
}

impl RepeatSpec {
    pub fn new(joints: usize, motif_len: usize, gap_len: usize, frames: usize, seed: u64) -> Self {
        Self {
            joints,
            motif_len,
            gap_len,
            lead_len: 0,
            frames,
            amplitude: 100.0,
            knot_spacing: 4,
            seed,
        }
    }
}

/// Cosine-interpolated random control points, `len` frames per coordinate.
fn smooth_curves<R: Rng>(rng: &mut R, k: usize, len: usize, knot: usize, amplitude: f64) -> Vec<Vec<f64>> {
    let knot = knot.max(1);
    let knots = len / knot + 2;
    (0..k)
        .map(|_| {
            let ctrl: Vec<f64> = (0..knots).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
            (0..len)
                .map(|t| {
                    let i = t / knot;
                    let f = (t % knot) as f64 / knot as f64;
                    let w = 0.5 - 0.5 * (std::f64::consts::PI * f).cos();
                    ctrl[i] * (1.0 - w) + ctrl[i + 1] * w
                })
                .collect()
        })
        .collect()
}

pub fn synth_repeat_after_gap(spec: &RepeatSpec) -> Result<(PoseSequence, RepeatLayout)> {
    if spec.motif_len == 0 || spec.lead_len + spec.motif_len + spec.gap_len > spec.frames {
        return Err(Error::InvalidArgument(format!(
            "lead {} + motif {} + gap {} exceeds {} frames",
            spec.lead_len, spec.motif_len, spec.gap_len, spec.frames
        )));
    }
    let mut rng = seeded_rng(spec.seed);
    let k = 3 * spec.joints;
    let motif = smooth_curves(&mut rng, k, spec.motif_len, spec.knot_spacing, spec.amplitude);
    let filler = smooth_curves(&mut rng, k, spec.frames, spec.knot_spacing, spec.amplitude);
    let first = spec.lead_len;
    let second = first + spec.motif_len + spec.gap_len;
    let mut data = Vec::with_capacity(spec.frames * k);
    for t in 0..spec.frames {
        for c in 0..k {
            let v = if (first..first + spec.motif_len).contains(&t) {
                motif[c][t - first]
            } else if (second..second + spec.motif_len).contains(&t) {
                motif[c][t - second]
            } else {
                filler[c][t]
            };
            data.push(v);
        }
    }
    let seq = PoseSequence::new(Representation::Xyz, spec.joints, 3, 25.0, Tensor::new(vec![spec.frames, k], data)?)?;
    Ok((
        seq,
        RepeatLayout {
            first_start: first,
            second_start: second,
            motif_len: spec.motif_len,
        },
    ))
}

/// Adds i.i.d. `N(0, sigma²)` noise to every value.
pub fn add_noise(seq: &PoseSequence, sigma: f64, seed: u64) -> Result<PoseSequence> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(seq.clone());
    }
    Ok(seq.with_data(noisy(seq.data(), sigma, seed))?)
}

/// Tensor-level counterpart of [`add_noise`].
pub fn noisy(t: &Tensor, sigma: f64, seed: u64) -> Tensor {
    if sigma == 0.0 {
        return t.clone();
    }
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    let mut out = t.clone();
    for v in out.data_mut() {
        *v += normal.sample(&mut rng);
    }
    out
}
