//! Nonlinear-interference and SNR estimation for ultra-wideband coherent
//! optical links, with the complete delayed Raman response.
//!
//! The crate models the nonlinear Kerr interaction through a frequency-domain
//! transfer function that keeps both the real and imaginary parts of the
//! Raman susceptibility, so inter-channel stimulated Raman scattering and the
//! Raman-induced reshaping of the nonlinear-interference spectrum fall out of
//! one description. Three engines share that description:
//!
//! * a frequency-domain perturbative estimator ([`gn`]) that integrates the
//!   four-wave-mixing efficiency over the transmit spectrum,
//! * per-channel closed forms built from self- and cross-channel scaling
//!   factors (also in [`gn`]), and
//! * a split-step time-domain simulator ([`ssfm`]) used as the validation
//!   oracle for the other two.
//!
//! Power evolution along the fiber (attenuation plus inter-channel Raman
//! transfer) lives in [`profile`], the Raman spectrum itself in [`raman`],
//! and channel plans / transmit spectra in [`fiber`].

pub mod fiber;
pub mod gn;
pub mod ode;
pub mod profile;
pub mod raman;
pub mod scenario;
pub mod ssfm;
pub mod units;
