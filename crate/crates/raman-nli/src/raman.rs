//! The complex Raman response of silica fiber and the nonlinear transfer
//! function built from it.
//!
//! The delayed part of the Kerr nonlinearity is described by a complex
//! spectrum whose imaginary part is the co-polarized Raman gain g̃_r(f) (odd
//! in f) and whose real part ñ_r(f) (even in f) follows from causality as
//! the Hilbert transform of the gain. Below ~15 THz the gain is close to
//! triangular; superimposing a sine on the triangle captures the measured
//! shape well, and that choice admits a closed form for the real part.
//!
//! Normalizing the real part to ñ_r(0) splits the nonlinearity into an
//! instantaneous electronic fraction (1 − f_r) and a delayed Raman fraction
//! f_r, with f_r = λ0·ñ_r(0)/(4π·n2). The frequency-domain weight applied to
//! the nonlinear term is then
//!
//! H(f) = (8/9)·(1 − f_r) + f_r·(n_r(f) + j·g_r(f))
//!
//! for polarization-multiplexed signals under the Manakov average (the 8/9
//! becomes 1 in single-polarization scalar propagation). H(0) is real and the
//! response stays Hermitian, H(−f) = conj(H(f)), as any real impulse response
//! must.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from spectrum construction and evaluation.
#[derive(Debug, Error)]
pub enum RamanError {
    #[error("invalid gain table: {0}")]
    InvalidGrid(String),
    #[error("fractional Raman contribution {0} outside the open interval (0, 1)")]
    FractionalContribution(f64),
    #[error("invalid fit parameter {name} = {value}")]
    InvalidFitParameter { name: &'static str, value: f64 },
}

/// Polarization treatment of the propagation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    /// Scalar single-polarization field.
    Single,
    /// Polarization-multiplexed field under the Manakov 8/9 average.
    Dual,
}

/// Parameters of the triangle-plus-sine gain fit and its matching real part.
///
/// The gain model is g̃_r(f) = [C_r·f + A·sin(ω·f)] inside |f| ≤ B/2 and zero
/// outside; the real part implied by causality is
/// ñ_r(f) = (C_r/π)·[f·ln|(2f−B)/(2f+B)| + B] + A·cos(ω·f) + D,
/// where the constant D absorbs the truncation of the sine term to the finite
/// support when matching the exact transform.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RamanFitParams {
    /// Gain slope C_r near f = 0 (m/W/Hz).
    pub slope_m_per_w_hz: f64,
    /// Full support width B of the gain fit (Hz); gain is zero for |f| > B/2.
    pub support_hz: f64,
    /// Amplitude A of the superimposed sine (m/W).
    pub sine_amplitude_m_per_w: f64,
    /// Angular rate ω of the superimposed sine (rad/Hz).
    pub sine_rate_rad_per_hz: f64,
    /// Constant offset D of the real part (m/W).
    pub real_offset_m_per_w: f64,
}

impl Default for RamanFitParams {
    /// Fit to measured co-polarized Raman gain of low-loss silica fiber.
    fn default() -> Self {
        Self {
            slope_m_per_w_hz: 3.87e-27,
            support_hz: 30e12,
            sine_amplitude_m_per_w: 4.2e-15,
            sine_rate_rad_per_hz: 7.20e-13,
            real_offset_m_per_w: -2.12e-15,
        }
    }
}

impl RamanFitParams {
    pub fn validate(&self) -> Result<(), RamanError> {
        if !(self.support_hz > 0.0) {
            return Err(RamanError::InvalidFitParameter {
                name: "support_hz",
                value: self.support_hz,
            });
        }
        if !(self.slope_m_per_w_hz > 0.0) {
            return Err(RamanError::InvalidFitParameter {
                name: "slope_m_per_w_hz",
                value: self.slope_m_per_w_hz,
            });
        }
        Ok(())
    }
}

/// Co-polarized Raman gain g̃_r(f) of the analytic fit (m/W).
///
/// Odd in f by construction; compactly supported on |f| ≤ `support_hz`/2.
pub fn analytic_gain_spectrum(params: &RamanFitParams, f: f64) -> f64 {
    let a = f.abs();
    if a > 0.5 * params.support_hz {
        return 0.0;
    }
    let g = params.slope_m_per_w_hz * a
        + params.sine_amplitude_m_per_w * (params.sine_rate_rad_per_hz * a).sin();
    if f < 0.0 {
        -g
    } else {
        g
    }
}

/// Real part ñ_r(f) of the Raman spectrum for the analytic fit (m/W).
///
/// Even in f. The closed form has a logarithmic singularity where |2f| equals
/// the support width; evaluation within a small relative epsilon of that point
/// is nudged toward zero frequency so a finite directional value is returned.
pub fn analytic_real_spectrum(params: &RamanFitParams, f: f64) -> f64 {
    let b = params.support_hz;
    let mut a = f.abs();
    let eps = 1e-9 * b;
    if (2.0 * a - b).abs() < eps {
        a = 0.5 * (b - eps);
    }
    let log_term = if a == 0.0 {
        b
    } else {
        a * (((2.0 * a - b) / (2.0 * a + b)).abs()).ln() + b
    };
    params.slope_m_per_w_hz / std::f64::consts::PI * log_term
        + params.sine_amplitude_m_per_w * (params.sine_rate_rad_per_hz * a).cos()
        + params.real_offset_m_per_w
}

/// Fractional Raman contribution f_r = λ0·ñ_r(0)/(4π·n2).
///
/// Errors unless the result lies strictly inside (0, 1).
pub fn fractional_contribution(
    n_real_zero_m_per_w: f64,
    lambda0_m: f64,
    n2_m2_per_w: f64,
) -> Result<f64, RamanError> {
    let f_r = lambda0_m * n_real_zero_m_per_w / (4.0 * std::f64::consts::PI * n2_m2_per_w);
    if f_r > 0.0 && f_r < 1.0 {
        Ok(f_r)
    } else {
        Err(RamanError::FractionalContribution(f_r))
    }
}

/// First-order Raman time constant T_r = λ0·C_r/(8π²·n2), the slope of the
/// imaginary response at f = 0 expressed as a delay (s).
pub fn raman_time_constant(params: &RamanFitParams, lambda0_m: f64, n2_m2_per_w: f64) -> f64 {
    lambda0_m * params.slope_m_per_w_hz
        / (8.0 * std::f64::consts::PI * std::f64::consts::PI * n2_m2_per_w)
}

/// Principal-value Hilbert transform of a sampled gain table,
/// (1/π)·p.v.∫ g(f′)/(f′ − f) df′, returning the real-part samples on the
/// same grid.
///
/// The grid must be uniform and symmetric about zero (odd extension already
/// applied). The transform runs as a discrete spectral multiplier with the
/// table zero-padded to at least four times its length; a raised-cosine taper
/// on the outer 5% of the support suppresses truncation ripple from tables
/// that do not decay to zero at the edges. For the identity to hold in the
/// advertised direction, sin(ω·f) maps to +cos(ω·f).
pub fn hilbert_real_from_gain(freqs_hz: &[f64], gain_m_per_w: &[f64]) -> Result<Vec<f64>, RamanError> {
    let n = freqs_hz.len();
    if n != gain_m_per_w.len() {
        return Err(RamanError::InvalidGrid(format!(
            "frequency and gain lengths differ: {n} vs {}",
            gain_m_per_w.len()
        )));
    }
    if n < 8 {
        return Err(RamanError::InvalidGrid(format!("table too short: {n} points")));
    }
    let df = (freqs_hz[n - 1] - freqs_hz[0]) / (n - 1) as f64;
    if !(df > 0.0) {
        return Err(RamanError::InvalidGrid("grid is not increasing".into()));
    }
    for w in freqs_hz.windows(2) {
        if ((w[1] - w[0]) - df).abs() > 1e-6 * df {
            return Err(RamanError::InvalidGrid(format!(
                "non-uniform spacing near {} Hz",
                w[0]
            )));
        }
    }
    if (freqs_hz[0] + freqs_hz[n - 1]).abs() > 1e-3 * df {
        return Err(RamanError::InvalidGrid(
            "grid is not symmetric about zero".into(),
        ));
    }

    let support = freqs_hz[n - 1];
    let taper_start = 0.95 * support;
    let taper_width = 0.05 * support;
    let padded = (4 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    for i in 0..n {
        let a = freqs_hz[i].abs();
        let w = if a <= taper_start {
            1.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (a - taper_start) / taper_width).cos())
        };
        buf[i] = Complex64::new(gain_m_per_w[i] * w, 0.0);
    }

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(padded).process(&mut buf);
    // Spectral multiplier of the principal-value kernel −1/(π·v): +j on
    // positive frequencies, −j on negative, zero at DC and Nyquist.
    buf[0] = Complex64::new(0.0, 0.0);
    buf[padded / 2] = Complex64::new(0.0, 0.0);
    let j = Complex64::new(0.0, 1.0);
    for k in 1..padded / 2 {
        buf[k] *= j;
        buf[padded - k] *= -j;
    }
    planner.plan_fft_inverse(padded).process(&mut buf);
    let scale = 1.0 / padded as f64;
    Ok(buf[..n].iter().map(|c| c.re * scale).collect())
}

/// Monotone cubic (Fritsch–Carlson) interpolation of (x, y) onto `xq`.
///
/// Shape-preserving: never overshoots between data points, which keeps
/// interpolated gain tables free of spurious oscillation before the Hilbert
/// transform. Queries outside the data range return zero.
fn monotone_cubic_resample(x: &[f64], y: &[f64], xq: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2, "need at least two points to interpolate");
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    // One-sided three-point endpoint slopes, clamped to preserve monotonicity.
    let end_slope = |h0: f64, h1: f64, d0: f64, d1: f64| -> f64 {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    if n == 2 {
        m[0] = d[0];
        m[1] = d[0];
    } else {
        m[0] = end_slope(h[0], h[1], d[0], d[1]);
        m[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    }
    xq.iter()
        .map(|&q| {
            if q < x[0] || q > x[n - 1] {
                return 0.0;
            }
            let i = match x.binary_search_by(|v| v.partial_cmp(&q).unwrap()) {
                Ok(i) => return y[i],
                Err(i) => i.saturating_sub(1).min(n - 2),
            };
            let t = (q - x[i]) / h[i];
            let t2 = t * t;
            let t3 = t2 * t;
            y[i] * (2.0 * t3 - 3.0 * t2 + 1.0)
                + m[i] * h[i] * (t3 - 2.0 * t2 + t)
                + y[i + 1] * (3.0 * t2 - 2.0 * t3)
                + m[i + 1] * h[i] * (t3 - t2)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum SpectrumMode {
    AnalyticFit(RamanFitParams),
    TabulatedMeasured,
}

/// The sampled complex Raman spectrum with its normalization.
///
/// Stores the dimensional parts g̃_r (odd) and ñ_r (even) on a symmetric
/// uniform grid, together with the fractional contribution f_r and the
/// dimensionless normalized parts n_r = ñ_r/ñ_r(0) and g_r = g̃_r/ñ_r(0).
/// Symmetry on the stored grid is exact because values are computed for
/// f ≥ 0 and mirrored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RamanSpectrum {
    mode: SpectrumMode,
    /// Symmetric uniform frequency grid (Hz), ascending, odd point count.
    pub freqs_hz: Vec<f64>,
    /// Co-polarized gain g̃_r on the grid (m/W).
    pub gain_m_per_w: Vec<f64>,
    /// Real part ñ_r on the grid (m/W).
    pub real_m_per_w: Vec<f64>,
    /// Normalized real part n_r = ñ_r/ñ_r(0); n_r(0) = 1 exactly.
    pub n_norm: Vec<f64>,
    /// Normalized gain g_r = g̃_r/ñ_r(0).
    pub g_norm: Vec<f64>,
    /// Fractional Raman contribution f_r = λ0·ñ_r(0)/(4π·n2).
    pub fractional_raman: f64,
    /// Normalization constant λ0/(4π·f_r·n2) = 1/ñ_r(0) (W/m).
    pub normalization_w_per_m: f64,
    /// Reference wavelength used for the normalization (m).
    pub lambda0_m: f64,
    /// Nonlinear refractive index used for the normalization (m²/W).
    pub n2_m2_per_w: f64,
}

impl RamanSpectrum {
    /// Builds the spectrum from the analytic fit on a ±40 THz grid.
    pub fn from_analytic_fit(
        params: &RamanFitParams,
        lambda0_m: f64,
        n2_m2_per_w: f64,
    ) -> Result<Self, RamanError> {
        Self::from_analytic_fit_with_grid(params, lambda0_m, n2_m2_per_w, 40e12, 10e9)
    }

    /// Analytic-fit spectrum on a caller-chosen symmetric grid.
    pub fn from_analytic_fit_with_grid(
        params: &RamanFitParams,
        lambda0_m: f64,
        n2_m2_per_w: f64,
        f_max_hz: f64,
        df_hz: f64,
    ) -> Result<Self, RamanError> {
        params.validate()?;
        let half = (f_max_hz / df_hz).round() as usize;
        let mut freqs = Vec::with_capacity(2 * half + 1);
        let mut gain = Vec::with_capacity(2 * half + 1);
        let mut real = Vec::with_capacity(2 * half + 1);
        for i in 0..=half {
            let f = i as f64 * df_hz;
            freqs.push(f);
            gain.push(analytic_gain_spectrum(params, f));
            real.push(analytic_real_spectrum(params, f));
        }
        Self::assemble(
            SpectrumMode::AnalyticFit(*params),
            freqs,
            gain,
            real,
            lambda0_m,
            n2_m2_per_w,
        )
    }

    /// Builds the spectrum from a measured gain table.
    ///
    /// `freqs_hz`/`gain_m_per_w` give the co-polarized gain for f ≥ 0 (the
    /// negative side is the odd extension; an implicit zero at f = 0 is added
    /// when missing). The table is resampled with monotone cubic interpolation
    /// onto a uniform 10-GHz grid padded to at least ±30 THz, the real part is
    /// recovered with [`hilbert_real_from_gain`], and `real_offset_m_per_w` is
    /// added to compensate the truncated measurement support.
    pub fn from_gain_table(
        freqs_hz: &[f64],
        gain_m_per_w: &[f64],
        real_offset_m_per_w: f64,
        lambda0_m: f64,
        n2_m2_per_w: f64,
    ) -> Result<Self, RamanError> {
        if freqs_hz.len() != gain_m_per_w.len() || freqs_hz.len() < 4 {
            return Err(RamanError::InvalidGrid(format!(
                "gain table needs matching lengths of at least 4 points, got {} and {}",
                freqs_hz.len(),
                gain_m_per_w.len()
            )));
        }
        let mut pairs: Vec<(f64, f64)> = freqs_hz
            .iter()
            .zip(gain_m_per_w)
            .map(|(&f, &g)| (f, g))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if pairs[0].0 < 0.0 {
            return Err(RamanError::InvalidGrid(
                "provide the f ≥ 0 half of the gain table; the negative side is the odd extension"
                    .into(),
            ));
        }
        for w in pairs.windows(2) {
            if w[1].0 - w[0].0 <= 0.0 {
                return Err(RamanError::InvalidGrid(format!(
                    "duplicate frequency {} Hz in gain table",
                    w[0].0
                )));
            }
        }
        if pairs[0].0 > 0.0 {
            pairs.insert(0, (0.0, 0.0));
        } else if pairs[0].1 != 0.0 {
            return Err(RamanError::InvalidGrid(
                "gain at f = 0 must vanish for an odd spectrum".into(),
            ));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();

        let df = 10e9;
        let f_max = (xs[xs.len() - 1].max(30e12) / df).ceil() * df;
        let half = (f_max / df).round() as usize;
        let query: Vec<f64> = (0..=half).map(|i| i as f64 * df).collect();
        let gain_pos = monotone_cubic_resample(&xs, &ys, &query);

        // Odd extension, Hilbert transform, then keep the f ≥ 0 half.
        let total = 2 * half + 1;
        let mut full_freqs = Vec::with_capacity(total);
        let mut full_gain = Vec::with_capacity(total);
        for i in 0..total {
            let k = i as isize - half as isize;
            full_freqs.push(k as f64 * df);
            full_gain.push(if k >= 0 {
                gain_pos[k as usize]
            } else {
                -gain_pos[(-k) as usize]
            });
        }
        let full_real = hilbert_real_from_gain(&full_freqs, &full_gain)?;
        // Numerical asymmetry in the transform output is averaged away so the
        // stored table is even to the bit.
        let real_pos: Vec<f64> = (0..=half)
            .map(|i| 0.5 * (full_real[half + i] + full_real[half - i]) + real_offset_m_per_w)
            .collect();
        Self::assemble(
            SpectrumMode::TabulatedMeasured,
            query,
            gain_pos,
            real_pos,
            lambda0_m,
            n2_m2_per_w,
        )
    }

    /// Mirrors f ≥ 0 samples onto the full symmetric grid and normalizes.
    fn assemble(
        mode: SpectrumMode,
        freqs_pos: Vec<f64>,
        gain_pos: Vec<f64>,
        real_pos: Vec<f64>,
        lambda0_m: f64,
        n2_m2_per_w: f64,
    ) -> Result<Self, RamanError> {
        let half = freqs_pos.len() - 1;
        let total = 2 * half + 1;
        let mut freqs = vec![0.0; total];
        let mut gain = vec![0.0; total];
        let mut real = vec![0.0; total];
        for i in 0..=half {
            freqs[half + i] = freqs_pos[i];
            freqs[half - i] = -freqs_pos[i];
            gain[half + i] = gain_pos[i];
            gain[half - i] = -gain_pos[i];
            real[half + i] = real_pos[i];
            real[half - i] = real_pos[i];
        }
        gain[half] = 0.0;
        let n0 = real[half];
        let f_r = fractional_contribution(n0, lambda0_m, n2_m2_per_w)?;
        let n_norm: Vec<f64> = real.iter().map(|&v| v / n0).collect();
        let g_norm: Vec<f64> = gain.iter().map(|&v| v / n0).collect();
        Ok(Self {
            mode,
            freqs_hz: freqs,
            gain_m_per_w: gain,
            real_m_per_w: real,
            n_norm,
            g_norm,
            fractional_raman: f_r,
            normalization_w_per_m: lambda0_m
                / (4.0 * std::f64::consts::PI * f_r * n2_m2_per_w),
            lambda0_m,
            n2_m2_per_w,
        })
    }

    /// ñ_r(0) (m/W).
    pub fn real_zero(&self) -> f64 {
        self.real_m_per_w[(self.real_m_per_w.len() - 1) / 2]
    }

    fn grid_step(&self) -> f64 {
        self.freqs_hz[1] - self.freqs_hz[0]
    }

    /// Linear interpolation of a sampled even/odd half onto |f|, with the
    /// given out-of-range value.
    fn interp_abs(&self, table: &[f64], f_abs: f64, beyond: f64) -> f64 {
        let half = (table.len() - 1) / 2;
        let x = f_abs / self.grid_step();
        if x >= half as f64 {
            return beyond;
        }
        let i = x.floor() as usize;
        let t = x - i as f64;
        let a = table[half + i];
        let b = table[half + i + 1];
        a + t * (b - a)
    }

    /// Co-polarized gain g̃_r at any frequency (m/W), odd in f.
    pub fn gain_at(&self, f: f64) -> f64 {
        let v = match &self.mode {
            SpectrumMode::AnalyticFit(p) => analytic_gain_spectrum(p, f.abs()),
            SpectrumMode::TabulatedMeasured => self.interp_abs(&self.gain_m_per_w, f.abs(), 0.0),
        };
        if f < 0.0 {
            -v
        } else {
            v
        }
    }

    /// Real part ñ_r at any frequency (m/W), even in f.
    pub fn real_at(&self, f: f64) -> f64 {
        match &self.mode {
            SpectrumMode::AnalyticFit(p) => analytic_real_spectrum(p, f.abs()),
            SpectrumMode::TabulatedMeasured => {
                let last = *self.real_m_per_w.last().unwrap();
                self.interp_abs(&self.real_m_per_w, f.abs(), last)
            }
        }
    }

    /// Normalized real part n_r(f) = ñ_r(f)/ñ_r(0); n_r(0) = 1 exactly.
    pub fn n_r_at(&self, f: f64) -> f64 {
        self.real_at(f) / self.real_zero()
    }

    /// Normalized gain g_r(f) = g̃_r(f)/ñ_r(0).
    pub fn g_r_at(&self, f: f64) -> f64 {
        self.gain_at(f) / self.real_zero()
    }
}

/// How the real part of the response enters the transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum RealPartMode {
    /// Full complex response: (8/9)(1−f_r) + f_r·(n_r + j·g_r).
    Full,
    /// Real part forced to the instantaneous Kerr value while the imaginary
    /// (gain) part is kept: 8/9 + j·f_r·g_r. Isolates the effect of the real
    /// Raman spectrum when differencing against the full response.
    InstantaneousReal,
}

/// The frequency-domain weight H(f) applied to the nonlinear interaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonlinearTransfer {
    pub polarization: Polarization,
    /// Fractional Raman contribution; zero for a pure instantaneous Kerr model.
    pub fractional_raman: f64,
    real_mode: RealPartMode,
    spectrum: Option<RamanSpectrum>,
    /// Frequency grid the sampled transfer below lives on (Hz).
    pub freqs_hz: Vec<f64>,
    /// Sampled H(f) on `freqs_hz`.
    pub h: Vec<Complex64>,
}

impl NonlinearTransfer {
    /// Polarization-dependent instantaneous Kerr factor: 8/9 dual, 1 single.
    fn kerr_factor(polarization: Polarization) -> f64 {
        match polarization {
            Polarization::Dual => 8.0 / 9.0,
            Polarization::Single => 1.0,
        }
    }

    /// Builds H(f) from a normalized spectrum.
    pub fn from_spectrum(spectrum: &RamanSpectrum, polarization: Polarization) -> Self {
        Self::build(spectrum, polarization, RealPartMode::Full)
    }

    /// Same spectrum but with the real part pinned to the instantaneous Kerr
    /// value, keeping only the gain (imaginary) part of the delayed response.
    pub fn from_spectrum_instantaneous_real(
        spectrum: &RamanSpectrum,
        polarization: Polarization,
    ) -> Self {
        Self::build(spectrum, polarization, RealPartMode::InstantaneousReal)
    }

    fn build(spectrum: &RamanSpectrum, polarization: Polarization, real_mode: RealPartMode) -> Self {
        let mut out = Self {
            polarization,
            fractional_raman: spectrum.fractional_raman,
            real_mode,
            spectrum: Some(spectrum.clone()),
            freqs_hz: spectrum.freqs_hz.clone(),
            h: Vec::new(),
        };
        out.h = out.freqs_hz.iter().map(|&f| out.h_at(f)).collect();
        out
    }

    /// The f_r → 0 limit: a constant, purely instantaneous response.
    pub fn pure_kerr(polarization: Polarization) -> Self {
        let kerr = Self::kerr_factor(polarization);
        let freqs = vec![-1e12, 0.0, 1e12];
        Self {
            polarization,
            fractional_raman: 0.0,
            real_mode: RealPartMode::Full,
            spectrum: None,
            h: vec![Complex64::new(kerr, 0.0); freqs.len()],
            freqs_hz: freqs,
        }
    }

    /// H at an arbitrary frequency. Exactly Hermitian: the value at −f is the
    /// conjugate of the value at f because both are derived from |f|.
    pub fn h_at(&self, f: f64) -> Complex64 {
        let kerr = Self::kerr_factor(self.polarization);
        let Some(spec) = &self.spectrum else {
            return Complex64::new(kerr, 0.0);
        };
        let f_r = self.fractional_raman;
        let a = f.abs();
        let g = f_r * spec.g_r_at(a) * if f < 0.0 { -1.0 } else { 1.0 };
        let re = match self.real_mode {
            RealPartMode::Full => kerr * (1.0 - f_r) + f_r * spec.n_r_at(a),
            RealPartMode::InstantaneousReal => kerr,
        };
        Complex64::new(re, g)
    }

    /// H(0), always real: (8 + f_r)/9 dual, 1 single (full mode).
    pub fn h_zero(&self) -> f64 {
        self.h_at(0.0).re
    }

    /// Re{H(f)}, the part that weights parametric mixing.
    pub fn re_h_at(&self, f: f64) -> f64 {
        self.h_at(f).re
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        let denom = b.abs().max(1e-300);
        assert!(
            ((a - b) / denom).abs() < tol,
            "{what}: {a} vs {b} (rel err {})",
            ((a - b) / denom).abs()
        );
    }

    const LAMBDA0: f64 = 1550e-9;
    const N2: f64 = 2.1e-20;

    #[test]
    fn gain_fit_reference_points() {
        let p = RamanFitParams::default();
        assert_close(
            analytic_gain_spectrum(&p, 14e12),
            5.162079167253304e-14,
            1e-12,
            "gain at 14 THz",
        );
        assert_eq!(analytic_gain_spectrum(&p, 0.0), 0.0, "odd at origin");
        assert_eq!(
            analytic_gain_spectrum(&p, 16e12),
            0.0,
            "outside 15 THz support"
        );
        // The triangular slope over twice the 81.8 µm² effective area puts the
        // per-length gain coefficient at 14 THz near 0.33 1/W/km.
        let a_eff = 81.8e-12;
        assert_close(
            p.slope_m_per_w_hz * 14e12 / (2.0 * a_eff),
            0.33e-3,
            5e-3,
            "gain coefficient at 14 THz",
        );
    }

    #[test]
    fn gain_fit_is_odd() {
        let p = RamanFitParams::default();
        for i in 0..100 {
            let f = (i as f64 + 0.37) * 0.17e12;
            assert_eq!(
                analytic_gain_spectrum(&p, -f),
                -analytic_gain_spectrum(&p, f),
                "odd symmetry at {f}"
            );
        }
    }

    #[test]
    fn real_fit_reference_points() {
        let p = RamanFitParams::default();
        let n0 = p.slope_m_per_w_hz * p.support_hz / std::f64::consts::PI
            + p.sine_amplitude_m_per_w
            + p.real_offset_m_per_w;
        assert_close(analytic_real_spectrum(&p, 0.0), n0, 1e-14, "closed form at 0");
        assert_close(
            analytic_real_spectrum(&p, 0.0),
            3.9035777785938094e-14,
            1e-12,
            "real part at 0",
        );
        for i in 0..100 {
            let f = (i as f64 + 0.11) * 0.23e12;
            assert_eq!(
                analytic_real_spectrum(&p, -f),
                analytic_real_spectrum(&p, f),
                "even symmetry at {f}"
            );
        }
        let at_edge = analytic_real_spectrum(&p, 15e12);
        assert!(at_edge.is_finite(), "singular point is nudged, got {at_edge}");
    }

    #[test]
    fn fractional_contribution_reference_values() {
        let n0 = 3.9035777785938094e-14;
        let f_r = fractional_contribution(n0, LAMBDA0, N2).unwrap();
        assert_close(f_r, 0.229280, 1e-5, "f_r for n2 = 2.1e-20");
        let f_r_hi = fractional_contribution(n0, LAMBDA0, 2.6e-20).unwrap();
        assert_close(f_r_hi, 0.185187, 1e-5, "f_r for n2 = 2.6e-20");
        assert!(fractional_contribution(0.0, LAMBDA0, N2).is_err());
        assert!(fractional_contribution(1e-3, LAMBDA0, N2).is_err());
    }

    #[test]
    fn time_constant_reference_values() {
        let p = RamanFitParams::default();
        assert_close(
            raman_time_constant(&p, LAMBDA0, N2),
            3.6177e-15,
            1e-4,
            "T_r for n2 = 2.1e-20",
        );
        assert_close(
            raman_time_constant(&p, LAMBDA0, 2.6e-20),
            2.9220e-15,
            1e-4,
            "T_r for n2 = 2.6e-20",
        );
        let mut zero_slope = p;
        zero_slope.slope_m_per_w_hz = 0.0;
        assert_eq!(raman_time_constant(&zero_slope, LAMBDA0, N2), 0.0);
    }

    #[test]
    fn hilbert_maps_sine_to_cosine() {
        // Wide support keeps the truncated tail of the slowly decaying kernel
        // below the discretization tolerance.
        let p = RamanFitParams::default();
        let df = 50e9;
        let half = (2000e12 / df) as usize;
        let freqs: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|i| i as f64 * df)
            .collect();
        let gain: Vec<f64> = freqs
            .iter()
            .map(|&f| p.sine_amplitude_m_per_w * (p.sine_rate_rad_per_hz * f).sin())
            .collect();
        let real = hilbert_real_from_gain(&freqs, &gain).unwrap();
        let mut worst = 0.0f64;
        for (i, &f) in freqs.iter().enumerate() {
            if f.abs() <= 10e12 {
                let expect = p.sine_amplitude_m_per_w * (p.sine_rate_rad_per_hz * f).cos();
                worst = worst.max((real[i] - expect).abs() / p.sine_amplitude_m_per_w);
            }
        }
        assert!(worst < 1e-3, "sine→cosine identity, worst rel err {worst}");
    }

    #[test]
    fn hilbert_zero_input_and_bad_grids() {
        let df = 10e9;
        let half = (30e12 / df) as usize;
        let freqs: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|i| i as f64 * df)
            .collect();
        let out = hilbert_real_from_gain(&freqs, &vec![0.0; freqs.len()]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0), "zero in, zero out");

        let mut warped = freqs.clone();
        warped[10] += 1e9;
        assert!(hilbert_real_from_gain(&warped, &vec![0.0; warped.len()]).is_err());

        let shifted: Vec<f64> = freqs.iter().map(|f| f + 5e12).collect();
        assert!(hilbert_real_from_gain(&shifted, &vec![0.0; shifted.len()]).is_err());
    }

    #[test]
    fn hilbert_of_gain_fit_matches_real_fit() {
        // The compactly supported gain makes the ±30 THz table exact up to
        // discretization; the closed-form real part differs by its constant
        // offset plus the small error the offset was introduced to absorb.
        let p = RamanFitParams::default();
        let df = 10e9;
        let half = (30e12 / df) as usize;
        let freqs: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|i| i as f64 * df)
            .collect();
        let gain: Vec<f64> = freqs
            .iter()
            .map(|&f| analytic_gain_spectrum(&p, f))
            .collect();
        let real = hilbert_real_from_gain(&freqs, &gain).unwrap();
        let mut worst = 0.0f64;
        for (i, &f) in freqs.iter().enumerate() {
            if f.abs() <= 10e12 {
                let expect = analytic_real_spectrum(&p, f) - p.real_offset_m_per_w;
                worst = worst.max(((real[i] - expect) / expect).abs());
            }
        }
        assert!(
            worst < 2e-2,
            "causality consistency of the fit pair, worst rel err {worst}"
        );
    }

    #[test]
    fn spectrum_symmetry_and_normalization() {
        let spec =
            RamanSpectrum::from_analytic_fit(&RamanFitParams::default(), LAMBDA0, N2).unwrap();
        let n = spec.freqs_hz.len();
        for i in 0..n {
            let m = n - 1 - i;
            assert_eq!(spec.gain_m_per_w[i], -spec.gain_m_per_w[m], "gain odd");
            assert_eq!(spec.real_m_per_w[i], spec.real_m_per_w[m], "real even");
        }
        let center = (n - 1) / 2;
        assert_eq!(spec.n_norm[center], 1.0, "n_r(0) is exactly one");
        assert_eq!(spec.g_norm[center], 0.0, "g_r(0) vanishes");
        let f_r_back = fractional_contribution(spec.real_zero(), LAMBDA0, N2).unwrap();
        assert_close(f_r_back, spec.fractional_raman, 1e-12, "f_r round trip");
        assert_close(
            spec.normalization_w_per_m,
            1.0 / spec.real_zero(),
            1e-12,
            "normalization constant is 1/ñ_r(0)",
        );
    }

    #[test]
    fn transfer_reference_values() {
        let spec =
            RamanSpectrum::from_analytic_fit(&RamanFitParams::default(), LAMBDA0, N2).unwrap();
        let dual = NonlinearTransfer::from_spectrum(&spec, Polarization::Dual);
        let single = NonlinearTransfer::from_spectrum(&spec, Polarization::Single);
        let f_r = spec.fractional_raman;
        assert_close(dual.h_zero(), (8.0 + f_r) / 9.0, 1e-15, "dual H(0)");
        assert_close(single.h_zero(), 1.0, 1e-15, "single H(0)");
        assert_eq!(dual.h_at(0.0).im, 0.0, "H(0) real");
        for i in 0..50 {
            let f = (i as f64 + 0.3) * 0.31e12;
            let plus = dual.h_at(f);
            let minus = dual.h_at(-f);
            assert_eq!(plus.re, minus.re, "Hermitian real part at {f}");
            assert_eq!(plus.im, -minus.im, "Hermitian imaginary part at {f}");
        }
    }

    #[test]
    fn transfer_special_modes() {
        let kerr = NonlinearTransfer::pure_kerr(Polarization::Dual);
        for f in [-7e12, 0.0, 3e12, 14e12] {
            assert_eq!(kerr.h_at(f), Complex64::new(8.0 / 9.0, 0.0));
        }
        let kerr1 = NonlinearTransfer::pure_kerr(Polarization::Single);
        assert_eq!(kerr1.h_at(5e12), Complex64::new(1.0, 0.0));

        let spec =
            RamanSpectrum::from_analytic_fit(&RamanFitParams::default(), LAMBDA0, N2).unwrap();
        let full = NonlinearTransfer::from_spectrum(&spec, Polarization::Dual);
        let inst =
            NonlinearTransfer::from_spectrum_instantaneous_real(&spec, Polarization::Dual);
        let f = 6e12;
        assert_eq!(inst.h_at(f).im, full.h_at(f).im, "gain part preserved");
        assert_eq!(inst.h_at(f).re, 8.0 / 9.0, "real part pinned to Kerr value");
    }

    #[test]
    fn measured_table_round_trip() {
        // A synthetic "measurement" sampled from the analytic fit on a
        // deliberately non-uniform grid must reproduce the fit's normalized
        // spectrum after interpolation and the causality transform.
        let p = RamanFitParams::default();
        let mut freqs = Vec::new();
        let mut gain = Vec::new();
        let mut f = 0.0;
        let mut k = 0usize;
        while f <= 30e12 {
            freqs.push(f);
            gain.push(analytic_gain_spectrum(&p, f));
            f += 37e9 + 11e9 * ((k % 3) as f64);
            k += 1;
        }
        let measured = RamanSpectrum::from_gain_table(
            &freqs,
            &gain,
            p.real_offset_m_per_w,
            LAMBDA0,
            N2,
        )
        .unwrap();
        let analytic = RamanSpectrum::from_analytic_fit(&p, LAMBDA0, N2).unwrap();
        assert_close(
            measured.fractional_raman,
            analytic.fractional_raman,
            2e-2,
            "f_r from synthetic measurement",
        );
        let mut worst = 0.0f64;
        for i in 0..=100 {
            let f = i as f64 * 0.1e12;
            worst = worst.max((measured.n_r_at(f) - analytic.n_r_at(f)).abs());
            worst = worst.max((measured.g_r_at(f) - analytic.g_r_at(f)).abs());
        }
        assert!(
            worst < 2e-2,
            "normalized spectra agree on |f| ≤ 10 THz, worst abs err {worst}"
        );
    }

    #[test]
    fn measured_table_rejects_bad_input() {
        assert!(RamanSpectrum::from_gain_table(
            &[-1e12, 0.0, 1e12, 2e12],
            &[0.0; 4],
            0.0,
            LAMBDA0,
            N2
        )
        .is_err());
        assert!(RamanSpectrum::from_gain_table(
            &[0.0, 1e12, 1e12, 2e12],
            &[0.0, 1e-14, 1e-14, 2e-14],
            0.0,
            LAMBDA0,
            N2
        )
        .is_err());
        assert!(RamanSpectrum::from_gain_table(
            &[0.0, 1e12, 2e12, 3e12],
            &[1e-15, 1e-14, 1e-14, 2e-14],
            0.0,
            LAMBDA0,
            N2
        )
        .is_err());
    }

    #[test]
    fn monotone_interpolation_does_not_overshoot() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 1.0, 1.0, 1.0];
        let q: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let v = monotone_cubic_resample(&x, &y, &q);
        for (qi, vi) in q.iter().zip(&v) {
            assert!(
                (-1e-12..=1.0 + 1e-12).contains(vi),
                "overshoot at {qi}: {vi}"
            );
        }
        assert_eq!(v[100], 0.0, "knot reproduced");
        assert_eq!(v[300], 1.0, "knot reproduced");
    }
}
