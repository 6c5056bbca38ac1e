//! Unit conversions between engineering notation and strict SI.
//!
//! Everything inside the library is SI: Hz, W, m, s, 1/m, W/Hz. These helpers
//! convert the usual link-budget units (dB, dBm, dB/km, ps/nm/km) at the
//! boundaries so the core never mixes conventions.

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Power ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Decibels to power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Absolute power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

/// Absolute power in watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w / 1e-3)
}

/// Fiber attenuation in dB/km to the field-equation power coefficient in 1/m.
///
/// 0.16 dB/km maps to 3.684e-5 1/m.
pub fn db_per_km_to_inv_m(db_per_km: f64) -> f64 {
    db_per_km / (10.0 * std::f64::consts::E.log10()) / 1e3
}

/// Power attenuation coefficient in 1/m to dB/km.
pub fn inv_m_to_db_per_km(alpha: f64) -> f64 {
    alpha * 10.0 * std::f64::consts::E.log10() * 1e3
}

/// Dispersion parameter D in ps/(nm km) to s/m^2.
pub fn ps_nm_km_to_s_m2(d: f64) -> f64 {
    d * 1e-6
}

/// Dispersion slope S in ps/(nm^2 km) to s/m^3.
pub fn ps_nm2_km_to_s_m3(s: f64) -> f64 {
    s * 1e3
}
