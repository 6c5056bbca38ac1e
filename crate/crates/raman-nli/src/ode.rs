//! Adaptive explicit Runge-Kutta integration for the power-coupling systems.
//!
//! Classic fourth-order stepping with step-doubling error control: every
//! accepted step is computed once at h and once as two steps of h/2, the
//! difference estimates the local error, and the step size adapts to hold it
//! below the requested tolerance. The two-half-step result is kept, so a
//! linear invariant whose derivative vanishes identically (total power under
//! a lossless antisymmetric coupling) is conserved to rounding.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(
        "step size underflow at z = {z_m} m (h = {step_m} m): the system is too stiff for the \
         requested tolerance"
    )]
    StepUnderflow { z_m: f64, step_m: f64 },
}

/// Tolerances and step-size limits for [`integrate_path`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    /// Relative local-error tolerance per step.
    pub rel_tol: f64,
    /// Absolute local-error floor, in the units of the state.
    pub abs_tol: f64,
    /// First trial step (m). Adapts from there.
    pub initial_step: f64,
    /// Below this step size the integration aborts as stiff.
    pub min_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 0.0,
            initial_step: 100.0,
            min_step: 1e-6,
        }
    }
}

fn rk4_step<F>(rhs: &F, z: f64, y: &[f64], h: f64, out: &mut [f64], scratch: &mut [Vec<f64>])
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let (k1, rest) = scratch.split_at_mut(1);
    let (k2, rest) = rest.split_at_mut(1);
    let (k3, rest) = rest.split_at_mut(1);
    let (k4, rest) = rest.split_at_mut(1);
    let tmp = &mut rest[0];
    let (k1, k2, k3, k4) = (&mut k1[0], &mut k2[0], &mut k3[0], &mut k4[0]);

    rhs(z, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(z + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(z + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(z + h, tmp, k4);
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates dy/dz = rhs(z, y) from `z_points[0]`, returning the state at
/// every point of the ascending `z_points` (the first entry returns `y0`
/// itself).
pub fn integrate_path<F>(
    rhs: F,
    y0: &[f64],
    z_points: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>, OdeError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut scratch = vec![vec![0.0; n]; 5];
    let mut big = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut full = vec![0.0; n];

    let mut y = y0.to_vec();
    let mut z = z_points[0];
    let mut h = opts.initial_step;
    let mut out = Vec::with_capacity(z_points.len());
    out.push(y.clone());

    for &z_target in &z_points[1..] {
        while z < z_target {
            let step = h.min(z_target - z);
            rk4_step(&rhs, z, &y, step, &mut big, &mut scratch);
            rk4_step(&rhs, z, &y, 0.5 * step, &mut half, &mut scratch);
            rk4_step(&rhs, z + 0.5 * step, &half, 0.5 * step, &mut full, &mut scratch);
            let mut err = 0.0f64;
            for i in 0..n {
                let scale = opts.abs_tol + opts.rel_tol * full[i].abs().max(y[i].abs());
                if scale > 0.0 {
                    err = err.max((big[i] - full[i]).abs() / scale);
                }
            }
            if err <= 1.0 {
                z += step;
                y.copy_from_slice(&full);
                // Local error scales as h^5; grow cautiously.
                let grow = if err > 0.0 {
                    0.9 * err.powf(-0.2)
                } else {
                    4.0
                };
                h = (step * grow.clamp(0.5, 4.0)).max(opts.min_step);
            } else {
                h = 0.5 * step;
                if h < opts.min_step {
                    return Err(OdeError::StepUnderflow { z_m: z, step_m: h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
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

    #[test]
    fn exponential_decay_matches_closed_form() {
        let alpha = 2.3e-4;
        let rhs = |_z: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -alpha * y[0];
        };
        let zs = [0.0, 1e3, 1e4, 5e4];
        let path = integrate_path(rhs, &[1.0], &zs, &OdeOptions::default()).unwrap();
        for (i, &z) in zs.iter().enumerate() {
            assert_close(path[i][0], (-alpha * z).exp(), 1e-5, "decay at z");
        }
    }

    #[test]
    fn logistic_coupling_matches_closed_form() {
        // dP0 = c P0 Pk, dPk = −c P0 Pk is the lossless two-tone transfer;
        // the fraction P0/(P0+Pk) follows a logistic curve in z.
        let c = 3.0e-4;
        let rhs = move |_z: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = c * y[0] * y[1];
            dy[1] = -c * y[0] * y[1];
        };
        let p0 = 0.004;
        let pk = 0.016;
        let total = p0 + pk;
        let zs = [0.0, 2e4, 1e5];
        let path = integrate_path(rhs, &[p0, pk], &zs, &OdeOptions::default()).unwrap();
        for (i, &z) in zs.iter().enumerate() {
            let logit0 = (p0 / pk).ln();
            let r = 1.0 / (1.0 + (-(logit0 + c * total * z)).exp());
            assert_close(path[i][0], r * total, 1e-6, "logistic fraction");
            assert_close(path[i][0] + path[i][1], total, 1e-12, "conservation");
        }
    }

    #[test]
    fn stiffness_reports_underflow() {
        // An ODE that blows up in finite z forces the step below min_step.
        let rhs = |_z: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0] * y[0];
        };
        let zs = [0.0, 2.0];
        let err = integrate_path(
            rhs,
            &[1.0],
            &zs,
            &OdeOptions {
                min_step: 1e-12,
                initial_step: 0.1,
                ..OdeOptions::default()
            },
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("underflow"), "diagnostic message: {msg}");
    }
}
