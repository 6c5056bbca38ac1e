//! Fiber parameters, channel plans, and transmit-side power spectral densities.
//!
//! All quantities are strict SI. Frequencies are offsets from the reference
//! carrier c/λ0, so a channel "at 2 THz" sits 2 THz above the reference. The
//! transmit PSD is modelled as one rectangle per occupied channel, wide enough
//! to cover the root-raised-cosine excess bandwidth and normalized so the
//! trapezoidal integral over the grid reproduces the launch power exactly.

use crate::units::SPEED_OF_LIGHT;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from plan construction and PSD assembly.
#[derive(Debug, Error)]
pub enum FiberError {
    #[error("invalid parameter {name} = {value}: {detail}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        detail: &'static str,
    },
    #[error("channels {first} and {second} overlap spectrally")]
    OverlappingChannels { first: usize, second: usize },
    #[error("grid resolution {resolution_hz} Hz exceeds min symbol rate / 8 = {limit_hz} Hz")]
    InvalidResolution { resolution_hz: f64, limit_hz: f64 },
    #[error("occupancy fraction {0} outside [0, 1]")]
    InvalidOccupancy(f64),
}

/// Physical description of one fiber span.
///
/// `gamma` and `n2` are carried independently: γ scales the Kerr interaction
/// while n2 normalizes the Raman spectrum. They describe the same nonlinearity
/// only when γ = 2π·n2/(λ0·A_eff); [`FiberSpec::consistent_gamma`] returns that
/// value so callers can check or enforce consistency.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FiberSpec {
    /// Power attenuation coefficient α (1/m).
    pub attenuation: f64,
    /// Group-velocity dispersion β2 (s²/m).
    pub beta2: f64,
    /// Dispersion slope β3 (s³/m).
    pub beta3: f64,
    /// Nonlinear coefficient γ (1/W/m).
    pub gamma: f64,
    /// Effective mode area A_eff (m²).
    pub effective_area: f64,
    /// Reference wavelength λ0 (m); channel frequencies are offsets from c/λ0.
    pub reference_wavelength: f64,
    /// Nonlinear refractive index n2 (m²/W).
    pub n2: f64,
    /// Raman gain slope C_r (1/W/m/Hz), the normalized gain-spectrum slope
    /// g̃_r'(0)/(2·A_eff) used by the triangular power-profile approximation.
    pub raman_gain_slope: f64,
    /// Span length (m).
    pub span_length: f64,
}

impl FiberSpec {
    /// Validates physical sanity of the parameters.
    pub fn validate(&self) -> Result<(), FiberError> {
        let check = |ok: bool, name: &'static str, value: f64, detail: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(FiberError::InvalidParameter {
                    name,
                    value,
                    detail,
                })
            }
        };
        check(
            self.reference_wavelength > 1.2e-6 && self.reference_wavelength < 1.7e-6,
            "reference_wavelength",
            self.reference_wavelength,
            "expected within (1.2 µm, 1.7 µm)",
        )?;
        check(
            self.attenuation >= 0.0,
            "attenuation",
            self.attenuation,
            "must be non-negative",
        )?;
        check(self.gamma >= 0.0, "gamma", self.gamma, "must be non-negative")?;
        check(
            self.effective_area > 0.0,
            "effective_area",
            self.effective_area,
            "must be positive",
        )?;
        check(self.n2 > 0.0, "n2", self.n2, "must be positive")?;
        check(
            self.span_length > 0.0,
            "span_length",
            self.span_length,
            "must be positive",
        )?;
        check(
            self.beta2.is_finite() && self.beta3.is_finite(),
            "beta2",
            self.beta2,
            "dispersion must be finite",
        )?;
        Ok(())
    }

    /// Reference carrier frequency c/λ0 (Hz).
    pub fn reference_frequency(&self) -> f64 {
        SPEED_OF_LIGHT / self.reference_wavelength
    }

    /// The γ implied by n2 and A_eff: 2π·n2/(λ0·A_eff).
    pub fn consistent_gamma(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.n2 / (self.reference_wavelength * self.effective_area)
    }

    /// Effective length (1 − e^{−αz})/α, with the lossless limit handled.
    pub fn effective_length(&self, z: f64) -> f64 {
        effective_length(self.attenuation, z)
    }
}

/// (1 − e^{−αz})/α, continuous at α = 0.
pub fn effective_length(alpha: f64, z: f64) -> f64 {
    if alpha.abs() * z < 1e-12 {
        z * (1.0 - 0.5 * alpha * z)
    } else {
        (1.0 - (-alpha * z).exp()) / alpha
    }
}

/// Converts the dispersion parameter D (s/m²) and slope S (s/m³) at λ0 into
/// (β2, β3) in s²/m and s³/m.
///
/// β2 = −D·λ0²/(2πc), β3 = (λ0²/(2πc))²·(S + 2D/λ0).
pub fn dispersion_coefficients(d: f64, s: f64, lambda0: f64) -> Result<(f64, f64), FiberError> {
    if !(lambda0 > 0.0) {
        return Err(FiberError::InvalidParameter {
            name: "lambda0",
            value: lambda0,
            detail: "must be positive",
        });
    }
    let k = lambda0 * lambda0 / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT);
    let beta2 = -d * k;
    let beta3 = k * k * (s + 2.0 * d / lambda0);
    Ok((beta2, beta3))
}

/// Inverse of [`dispersion_coefficients`]: recovers (D, S) from (β2, β3).
pub fn dispersion_parameters(beta2: f64, beta3: f64, lambda0: f64) -> Result<(f64, f64), FiberError> {
    if !(lambda0 > 0.0) {
        return Err(FiberError::InvalidParameter {
            name: "lambda0",
            value: lambda0,
            detail: "must be positive",
        });
    }
    let k = lambda0 * lambda0 / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT);
    let d = -beta2 / k;
    let s = beta3 / (k * k) - 2.0 * d / lambda0;
    Ok((d, s))
}

/// One WDM channel. `center_hz` is the offset from the reference carrier.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Channel {
    pub center_hz: f64,
    pub symbol_rate_hz: f64,
    pub power_w: f64,
    pub roll_off: f64,
    pub occupied: bool,
}

impl Channel {
    /// Occupied spectral width B·(1 + roll-off).
    pub fn bandwidth_hz(&self) -> f64 {
        self.symbol_rate_hz * (1.0 + self.roll_off)
    }
}

/// An ordered set of channels; only occupied entries carry power.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub channels: Vec<Channel>,
}

impl ChannelPlan {
    /// Builds a plan and checks that no two occupied channels overlap.
    pub fn new(channels: Vec<Channel>) -> Result<Self, FiberError> {
        let plan = Self { channels };
        plan.validate()?;
        Ok(plan)
    }

    /// Rejects occupied channel pairs closer than the sum of their half-widths.
    pub fn validate(&self) -> Result<(), FiberError> {
        for ch in &self.channels {
            if !(ch.symbol_rate_hz > 0.0) || ch.power_w < 0.0 || ch.roll_off < 0.0 {
                return Err(FiberError::InvalidParameter {
                    name: "channel",
                    value: ch.symbol_rate_hz,
                    detail: "symbol rate must be positive, power and roll-off non-negative",
                });
            }
        }
        let occ = self.occupied_indices();
        for (a, &i) in occ.iter().enumerate() {
            for &k in &occ[a + 1..] {
                let ci = &self.channels[i];
                let ck = &self.channels[k];
                let min_sep = 0.5 * (ci.bandwidth_hz() + ck.bandwidth_hz());
                if (ci.center_hz - ck.center_hz).abs() < min_sep * (1.0 - 1e-12) {
                    return Err(FiberError::OverlappingChannels { first: i, second: k });
                }
            }
        }
        Ok(())
    }

    /// Indices of occupied channels, in plan order.
    pub fn occupied_indices(&self) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.occupied)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sum of occupied launch powers (W).
    pub fn total_power(&self) -> f64 {
        self.channels
            .iter()
            .filter(|c| c.occupied)
            .map(|c| c.power_w)
            .sum()
    }

    /// Lower and upper edge of the occupied spectrum, or None if empty.
    pub fn occupied_bounds(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in self.channels.iter().filter(|c| c.occupied) {
            lo = lo.min(c.center_hz - 0.5 * c.bandwidth_hz());
            hi = hi.max(c.center_hz + 0.5 * c.bandwidth_hz());
        }
        if lo.is_finite() {
            Some((lo, hi))
        } else {
            None
        }
    }

    /// Smallest occupied symbol rate, or None if the plan is empty.
    pub fn min_symbol_rate(&self) -> Option<f64> {
        self.channels
            .iter()
            .filter(|c| c.occupied)
            .map(|c| c.symbol_rate_hz)
            .fold(None, |acc, b| Some(acc.map_or(b, |a: f64| a.min(b))))
    }
}

/// A uniform WDM slot grid used to generate channel plans.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WdmGrid {
    pub slots: usize,
    pub spacing_hz: f64,
    pub symbol_rate_hz: f64,
    pub roll_off: f64,
    pub power_w: f64,
}

impl WdmGrid {
    /// Center frequency of slot `i`, with the grid centered on the reference.
    pub fn slot_center(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.slots as f64 - 1.0)) * self.spacing_hz
    }

    /// Plan with every slot occupied.
    pub fn fully_packed(&self) -> Result<ChannelPlan, FiberError> {
        self.plan_from_flags(&vec![true; self.slots])
    }

    /// Plan with the given per-slot occupation flags.
    pub fn plan_from_flags(&self, occupied: &[bool]) -> Result<ChannelPlan, FiberError> {
        let channels = occupied
            .iter()
            .enumerate()
            .map(|(i, &occ)| Channel {
                center_hz: self.slot_center(i),
                symbol_rate_hz: self.symbol_rate_hz,
                power_w: self.power_w,
                roll_off: self.roll_off,
                occupied: occ,
            })
            .collect();
        ChannelPlan::new(channels)
    }
}

/// Draws a partially filled plan whose occupied slots lean toward the
/// high-frequency end of the grid, mimicking first-fit spectral assignment
/// that fills from the top of the band.
///
/// Exactly `round(slots × occupancy)` distinct slots are occupied, drawn
/// without replacement with exponentially decaying weights: the lowest slot
/// has one tenth the selection weight of the highest. Deterministic in `seed`.
pub fn sample_network_occupancy(
    grid: &WdmGrid,
    occupancy: f64,
    seed: u64,
) -> Result<ChannelPlan, FiberError> {
    if !(0.0..=1.0).contains(&occupancy) {
        return Err(FiberError::InvalidOccupancy(occupancy));
    }
    let n = grid.slots;
    let target = (n as f64 * occupancy).round() as usize;
    let mut weights: Vec<f64> = (0..n)
        .map(|s| {
            if n == 1 {
                1.0
            } else {
                let x = (n - 1 - s) as f64 / (n - 1) as f64;
                (-x * 10f64.ln()).exp()
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flags = vec![false; n];
    for _ in 0..target {
        let total: f64 = weights.iter().sum();
        let mut u = rand::Rng::gen::<f64>(&mut rng) * total;
        let mut pick = n - 1;
        for (s, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if u < w {
                pick = s;
                break;
            }
            u -= w;
        }
        flags[pick] = true;
        weights[pick] = 0.0;
    }
    grid.plan_from_flags(&flags)
}

/// Transmit-side power spectral density sampled on a uniform frequency grid.
#[derive(Debug, Clone)]
pub struct SignalPsd {
    /// Frequency of the first grid point (Hz, offset from reference).
    pub f_start: f64,
    /// Grid spacing (Hz).
    pub df: f64,
    /// PSD samples (W/Hz).
    pub values: Vec<f64>,
    /// Total launch power (W); the trapezoidal integral of `values`.
    pub total_power: f64,
}

impl SignalPsd {
    /// Frequency of grid point `i`.
    pub fn freq(&self, i: usize) -> f64 {
        self.f_start + i as f64 * self.df
    }

    /// Nearest-cell PSD lookup; zero outside the grid.
    ///
    /// A query exactly on a cell boundary returns the midpoint of the jump
    /// (mean of the two adjacent cells, with cells past the grid edge
    /// counting as zero). Rounding the tie to either side would make the
    /// lookup asymmetric under frequency negation, and quadrature nodes of
    /// a mirrored scenario land exactly on mirrored boundaries.
    pub fn value_at(&self, f: f64) -> f64 {
        let idx = (f - self.f_start) / self.df;
        let n = self.values.len();
        if idx < -0.5 || idx > n as f64 - 0.5 {
            return 0.0;
        }
        let rounded = idx.round();
        if (idx - rounded).abs() == 0.5 {
            let hi = (idx + 0.5) as usize;
            let upper = if hi < n { self.values[hi] } else { 0.0 };
            let lower = if hi > 0 { self.values[hi - 1] } else { 0.0 };
            return 0.5 * (lower + upper);
        }
        self.values[(rounded as usize).min(n - 1)]
    }

    /// Trapezoidal integral of the sampled PSD (W).
    pub fn integral(&self) -> f64 {
        if self.values.len() < 2 {
            return 0.0;
        }
        let inner: f64 = self.values[1..self.values.len() - 1].iter().sum();
        self.df * (inner + 0.5 * (self.values[0] + self.values[self.values.len() - 1]))
    }
}

/// Builds the rectangular transmit PSD for a plan.
///
/// Each occupied channel contributes an ideal rectangle of width
/// W = B·(1+roll-off) and height P/W centered on the channel. Grid samples
/// take the cell-averaged value of that rectangle, so fully covered cells sit
/// at exactly P/W while the two edge cells carry the fractional overlap; the
/// trapezoidal integral over the grid then telescopes to the launch power
/// regardless of how the band aligns with the grid. `resolution` must not
/// exceed one eighth of the smallest symbol rate.
pub fn build_psd(plan: &ChannelPlan, resolution: f64) -> Result<SignalPsd, FiberError> {
    plan.validate()?;
    if !(resolution > 0.0) {
        return Err(FiberError::InvalidParameter {
            name: "resolution",
            value: resolution,
            detail: "must be positive",
        });
    }
    if let Some(min_rate) = plan.min_symbol_rate() {
        let limit = min_rate / 8.0;
        if resolution > limit * (1.0 + 1e-12) {
            return Err(FiberError::InvalidResolution {
                resolution_hz: resolution,
                limit_hz: limit,
            });
        }
    }
    let Some((lo, hi)) = plan.occupied_bounds() else {
        return Ok(SignalPsd {
            f_start: -resolution,
            df: resolution,
            values: vec![0.0; 3],
            total_power: 0.0,
        });
    };
    let pad = 4.0 * resolution;
    let f_start = ((lo - pad) / resolution).floor() * resolution;
    let f_end = ((hi + pad) / resolution).ceil() * resolution;
    let n = ((f_end - f_start) / resolution).round() as usize + 1;
    let mut values = vec![0.0; n];
    for ch in plan.channels.iter().filter(|c| c.occupied) {
        let half = 0.5 * ch.bandwidth_hz();
        let band_lo = ch.center_hz - half;
        let band_hi = ch.center_hz + half;
        let height = ch.power_w / (2.0 * half);
        // Cells whose [f − df/2, f + df/2] interval touches the band.
        let j0 = ((band_lo - f_start) / resolution - 0.5).ceil().max(0.0) as usize;
        let j1 = ((((band_hi - f_start) / resolution + 0.5).floor()) as usize).min(n - 1);
        for j in j0..=j1 {
            let cell_lo = f_start + (j as f64 - 0.5) * resolution;
            let cell_hi = cell_lo + resolution;
            let overlap = band_hi.min(cell_hi) - band_lo.max(cell_lo);
            if overlap > 0.0 {
                values[j] += height * overlap / resolution;
            }
        }
    }
    let total_power = plan.total_power();
    Ok(SignalPsd {
        f_start,
        df: resolution,
        values,
        total_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{dbm_to_watts, ps_nm2_km_to_s_m3, ps_nm_km_to_s_m2};
    use rand::Rng;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        let denom = b.abs().max(1e-300);
        assert!(
            ((a - b) / denom).abs() < tol,
            "{what}: {a} vs {b} (rel err {})",
            ((a - b) / denom).abs()
        );
    }

    fn table_fiber() -> FiberSpec {
        let (beta2, beta3) =
            dispersion_coefficients(ps_nm_km_to_s_m2(16.4), ps_nm2_km_to_s_m3(0.067), 1550e-9)
                .unwrap();
        FiberSpec {
            attenuation: crate::units::db_per_km_to_inv_m(0.16),
            beta2,
            beta3,
            gamma: 1.0407e-3,
            effective_area: 81.8e-12,
            reference_wavelength: 1550e-9,
            n2: 2.1e-20,
            raman_gain_slope: 2.3655e-17,
            span_length: 100e3,
        }
    }

    #[test]
    fn dispersion_coefficients_match_expected_values() {
        let (beta2, beta3) =
            dispersion_coefficients(ps_nm_km_to_s_m2(16.4), ps_nm2_km_to_s_m3(0.067), 1550e-9)
                .unwrap();
        assert_close(beta2, -2.0917e-26, 1e-4, "beta2");
        assert_close(beta3, 1.4342e-40, 1e-4, "beta3");
    }

    #[test]
    fn dispersion_round_trip_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let d = ps_nm_km_to_s_m2(rng.gen_range(-30.0..30.0));
            let s = ps_nm2_km_to_s_m3(rng.gen_range(-0.2..0.2));
            let lam = rng.gen_range(1.2e-6..1.7e-6);
            let (b2, b3) = dispersion_coefficients(d, s, lam).unwrap();
            let (d2, s2) = dispersion_parameters(b2, b3, lam).unwrap();
            assert_close(d2, d, 1e-12, "D round trip");
            if s.abs() > 1e-12 {
                assert_close(s2, s, 1e-9, "S round trip");
            }
        }
    }

    #[test]
    fn dispersion_rejects_bad_wavelength() {
        assert!(dispersion_coefficients(1e-6, 0.0, 0.0).is_err());
        assert!(dispersion_coefficients(1e-6, 0.0, -1.0).is_err());
    }

    #[test]
    fn fiber_validation_bounds() {
        let mut f = table_fiber();
        f.validate().unwrap();
        f.reference_wavelength = 0.8e-6;
        assert!(f.validate().is_err());
        let mut f = table_fiber();
        f.gamma = -1.0;
        assert!(f.validate().is_err());
        assert_close(table_fiber().consistent_gamma(), 1.0407e-3, 1e-4, "gamma from n2");
    }

    #[test]
    fn plan_rejects_overlap() {
        let mk = |f: f64| Channel {
            center_hz: f,
            symbol_rate_hz: 40e9,
            power_w: 1e-3,
            roll_off: 1e-4,
            occupied: true,
        };
        assert!(ChannelPlan::new(vec![mk(0.0), mk(40.005e9)]).is_ok());
        assert!(ChannelPlan::new(vec![mk(0.0), mk(39.9e9)]).is_err());
        // Unoccupied channels may sit anywhere.
        let mut idle = mk(1e9);
        idle.occupied = false;
        assert!(ChannelPlan::new(vec![mk(0.0), idle]).is_ok());
    }

    #[test]
    fn psd_peak_and_integral() {
        let plan = ChannelPlan::new(vec![Channel {
            center_hz: 0.0,
            symbol_rate_hz: 40e9,
            power_w: 1e-3,
            roll_off: 0.0,
            occupied: true,
        }])
        .unwrap();
        let psd = build_psd(&plan, 40e9 / 32.0).unwrap();
        let peak = psd.values.iter().cloned().fold(0.0, f64::max);
        assert_close(peak, 2.5e-14, 1e-12, "peak PSD of 1 mW / 40 GBd");
        assert_close(psd.integral(), 1e-3, 1e-9, "PSD integral = launch power");
        assert_close(psd.value_at(0.0), peak, 1e-12, "center lookup");
        assert_eq!(psd.value_at(100e9), 0.0, "far lookup is zero");
    }

    #[test]
    fn psd_integral_exact_for_misaligned_bands() {
        // Band edges deliberately land mid-cell; the cell-averaged edges must
        // still make the trapezoidal integral reproduce the launch power.
        let plan = ChannelPlan::new(vec![
            Channel {
                center_hz: 1.234e9,
                symbol_rate_hz: 10e9,
                power_w: 2.5e-3,
                roll_off: 0.07,
                occupied: true,
            },
            Channel {
                center_hz: 17.77e9,
                symbol_rate_hz: 12e9,
                power_w: 0.4e-3,
                roll_off: 1e-4,
                occupied: true,
            },
        ])
        .unwrap();
        let psd = build_psd(&plan, 10e9 / 8.0).unwrap();
        assert_close(psd.integral(), 2.9e-3, 1e-9, "misaligned integral");
    }

    #[test]
    fn psd_multi_channel_total_power() {
        let grid = WdmGrid {
            slots: 7,
            spacing_hz: 40.005e9,
            symbol_rate_hz: 40e9,
            roll_off: 1e-4,
            power_w: dbm_to_watts(1.0),
        };
        let plan = grid.fully_packed().unwrap();
        let psd = build_psd(&plan, 40e9 / 16.0).unwrap();
        assert_close(
            psd.integral(),
            7.0 * dbm_to_watts(1.0),
            1e-9,
            "total power of packed grid",
        );
    }

    #[test]
    fn psd_empty_plan_is_zero() {
        let plan = ChannelPlan::new(vec![]).unwrap();
        let psd = build_psd(&plan, 1e9).unwrap();
        assert_eq!(psd.total_power, 0.0);
        assert!(psd.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psd_rejects_coarse_resolution() {
        let plan = ChannelPlan::new(vec![Channel {
            center_hz: 0.0,
            symbol_rate_hz: 8e9,
            power_w: 1e-3,
            roll_off: 1e-4,
            occupied: true,
        }])
        .unwrap();
        assert!(build_psd(&plan, 2e9).is_err());
        assert!(build_psd(&plan, 1e9).is_ok());
    }

    #[test]
    fn occupancy_fraction_and_bias() {
        let grid = WdmGrid {
            slots: 100,
            spacing_hz: 5.005e9,
            symbol_rate_hz: 5e9,
            roll_off: 1e-4,
            power_w: dbm_to_watts(-8.0),
        };
        let mut mean_count = 0.0;
        let mut mean_freq = 0.0;
        for seed in 0..100 {
            let plan = sample_network_occupancy(&grid, 0.25, seed).unwrap();
            let occ = plan.occupied_indices();
            mean_count += occ.len() as f64;
            mean_freq += occ
                .iter()
                .map(|&i| plan.channels[i].center_hz)
                .sum::<f64>()
                / occ.len() as f64;
        }
        mean_count /= 100.0;
        mean_freq /= 100.0;
        assert!((mean_count - 25.0).abs() <= 1.0, "occupancy within one slot");
        assert!(
            mean_freq > 0.0,
            "exponential bias pulls occupied slots above the grid midpoint, got {mean_freq}"
        );
    }

    #[test]
    fn occupancy_is_deterministic_and_validated() {
        let grid = WdmGrid {
            slots: 40,
            spacing_hz: 5.005e9,
            symbol_rate_hz: 5e9,
            roll_off: 1e-4,
            power_w: 1e-4,
        };
        let a = sample_network_occupancy(&grid, 0.3, 42).unwrap();
        let b = sample_network_occupancy(&grid, 0.3, 42).unwrap();
        let fa: Vec<usize> = a.occupied_indices();
        assert_eq!(fa, b.occupied_indices(), "same seed, same plan");
        assert!(sample_network_occupancy(&grid, 1.2, 0).is_err());
        let full = sample_network_occupancy(&grid, 1.0, 3).unwrap();
        assert_eq!(full.occupied_indices().len(), 40);
    }

    #[test]
    fn effective_length_limits() {
        assert_close(effective_length(0.0, 1e5), 1e5, 1e-12, "lossless limit");
        let alpha = crate::units::db_per_km_to_inv_m(0.16);
        assert_close(effective_length(alpha, 1e5), 26461.6, 1e-4, "100 km span");
    }
}
