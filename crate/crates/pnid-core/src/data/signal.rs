//! Excitation signals: random-phase multisines, sine sweeps and measurement
//! noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Random-phase multisine: `n_lines` cosines uniformly spaced over
/// `[f_min, f_max]`, scaled so the peak after the start-up ramp hits
/// `amplitude`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultisineSpec {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_lines: usize,
    pub amplitude: f64,
    /// Share of the duration over which the amplitude ramps up linearly.
    pub ramp_fraction: f64,
}

impl MultisineSpec {
    fn validate(&self, rate_hz: f64) -> Result<(), DataError> {
        if self.n_lines == 0 {
            return Err(DataError::BadSignalSpec("n_lines must be positive".into()));
        }
        if !(self.f_min_hz > 0.0) || self.f_max_hz < self.f_min_hz {
            return Err(DataError::BadSignalSpec(
                "need 0 < f_min <= f_max for the line grid".into(),
            ));
        }
        if self.f_max_hz >= rate_hz / 2.0 {
            return Err(DataError::BadSignalSpec(format!(
                "f_max {} Hz violates the Nyquist limit of {} Hz",
                self.f_max_hz,
                rate_hz / 2.0
            )));
        }
        if !(0.0..1.0).contains(&self.ramp_fraction) {
            return Err(DataError::BadSignalSpec("ramp_fraction must lie in [0, 1)".into()));
        }
        if !(self.amplitude > 0.0) {
            return Err(DataError::BadSignalSpec("amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// Generate the multisine at `rate_hz` for `duration_s` seconds. Phases are
/// i.i.d. uniform draws from `rng`.
pub fn gen_multisine<R: Rng + ?Sized>(
    spec: &MultisineSpec,
    duration_s: f64,
    rate_hz: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DataError> {
    spec.validate(rate_hz)?;
    let n = (duration_s * rate_hz).round() as usize;
    if n == 0 {
        return Ok(Vec::new());
    }

    let lines = line_grid(spec);
    let phases: Vec<f64> = (0..lines.len())
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut raw = raw_line_sum(&lines, &phases, n, 1.0 / rate_hz);

    let n_ramp = (spec.ramp_fraction * n as f64).floor() as usize;
    let post_peak = raw[n_ramp..]
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let scale = if post_peak > 0.0 { spec.amplitude / post_peak } else { 1.0 };

    for (k, v) in raw.iter_mut().enumerate() {
        let ramp = if k < n_ramp { k as f64 / n_ramp as f64 } else { 1.0 };
        *v *= ramp * scale;
    }
    Ok(raw)
}

fn line_grid(spec: &MultisineSpec) -> Vec<f64> {
    if spec.n_lines == 1 {
        return vec![spec.f_min_hz];
    }
    let df = (spec.f_max_hz - spec.f_min_hz) / (spec.n_lines - 1) as f64;
    (0..spec.n_lines).map(|i| spec.f_min_hz + i as f64 * df).collect()
}

/// Unscaled sum of cosines. Its RMS is phase-independent up to line
/// non-orthogonality over the window; the peak (crest factor) is not.
fn raw_line_sum(lines: &[f64], phases: &[f64], n: usize, dt: f64) -> Vec<f64> {
    let mut raw = vec![0.0; n];
    for (f, phi) in lines.iter().zip(phases) {
        let w = std::f64::consts::TAU * f;
        for (k, out) in raw.iter_mut().enumerate() {
            *out += (w * (k as f64 * dt) + phi).cos();
        }
    }
    raw
}

/// Linear sine sweep starting at `f_start_hz` and sweeping at
/// `sweep_rate_hz_per_s`; instantaneous frequency must stay below Nyquist
/// for the whole duration.
pub fn gen_sine_sweep(
    f_start_hz: f64,
    sweep_rate_hz_per_s: f64,
    amplitude: f64,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Vec<f64>, DataError> {
    let f_end = f_start_hz + sweep_rate_hz_per_s * duration_s;
    if !(f_start_hz > 0.0) || f_end >= rate_hz / 2.0 || f_end <= 0.0 {
        return Err(DataError::BadSignalSpec(format!(
            "sweep {f_start_hz}..{f_end} Hz incompatible with rate {rate_hz} Hz"
        )));
    }
    let n = (duration_s * rate_hz).round() as usize;
    let dt = 1.0 / rate_hz;
    Ok((0..n)
        .map(|k| {
            let t = k as f64 * dt;
            amplitude
                * (std::f64::consts::TAU * (f_start_hz * t + 0.5 * sweep_rate_hz_per_s * t * t))
                    .sin()
        })
        .collect())
}

pub fn rms(signal: &[f64]) -> f64 {
    if signal.is_empty() {
        return 0.0;
    }
    (signal.iter().map(|v| v * v).sum::<f64>() / signal.len() as f64).sqrt()
}

/// Add i.i.d. zero-mean Gaussian noise with standard deviation
/// `fraction * RMS(signal)`. Returns the noisy copy and the sigma used.
pub fn add_noise<R: Rng + ?Sized>(
    signal: &[f64],
    noise_std_fraction_of_rms: f64,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    assert!(noise_std_fraction_of_rms >= 0.0, "noise fraction must be nonnegative");
    let sigma = noise_std_fraction_of_rms * rms(signal);
    if sigma == 0.0 {
        return (signal.to_vec(), 0.0);
    }
    let noisy = signal
        .iter()
        .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (noisy, sigma)
}
