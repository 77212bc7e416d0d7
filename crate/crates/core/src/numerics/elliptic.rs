//! Incomplete elliptic integral of the first kind via Carlson's symmetric form.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{CoreError, Result};

/// Carlson's `R_F(x, y, z)` by the duplication theorem; at most one argument may vanish.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> Result<f64> {
    if x < 0.0 || y < 0.0 || z < 0.0 || !(x + y).min(x + z).min(y + z).gt(&0.0) {
        return Err(CoreError::Domain(format!(
            "R_F requires non-negative arguments with at most one zero, got ({x}, {y}, {z})"
        )));
    }
    let (mut x, mut y, mut z) = (x, y, z);
    let mut mean = (x + y + z) / 3.0;
    // Stopping rule from Carlson (1995); truncation error is below the tolerance 1e-16.
    let q = (3.0 * 1e-16f64).powf(-1.0 / 6.0)
        * (mean - x).abs().max((mean - y).abs()).max((mean - z).abs());
    let mut scale = 1.0;
    for _ in 0..64 {
        if q * scale < mean.abs() {
            break;
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * sy + sx * sz + sy * sz;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
        mean = 0.25 * (mean + lambda);
        scale *= 0.25;
    }
    let dx = 1.0 - x / mean;
    let dy = 1.0 - y / mean;
    let dz = -(dx + dy);
    let e2 = dx * dy - dz * dz;
    let e3 = dx * dy * dz;
    let series = 1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0;
    Ok(series / mean.sqrt())
}

/// Complete integral `K(k) = F(π/2 | k)`.
pub fn complete_k(k: f64) -> Result<f64> {
    check_modulus(k)?;
    carlson_rf(0.0, 1.0 - k * k, 1.0)
}

fn check_modulus(k: f64) -> Result<()> {
    if !(k.is_finite() && k * k < 1.0) {
        return Err(CoreError::Domain(format!(
            "elliptic modulus must satisfy k^2 < 1, got k = {k}"
        )));
    }
    Ok(())
}

/// `F(φ | k) = ∫₀^φ dθ / √(1 − k² sin²θ)` for `|φ| ≤ π/2`.
pub fn elliptic_f(phi: f64, k: f64) -> Result<f64> {
    check_modulus(k)?;
    if !(phi.abs() <= FRAC_PI_2 * (1.0 + 1e-15)) {
        return Err(CoreError::Domain(format!(
            "principal branch requires |phi| <= pi/2, got {phi}"
        )));
    }
    if phi == 0.0 {
        return Ok(0.0);
    }
    let (s, c) = phi.sin_cos();
    Ok(s * carlson_rf(c * c, 1.0 - k * k * s * s, 1.0)?)
}

/// `F(φ | k)` continued to all real `φ` by `F(φ + π | k) = F(φ | k) + 2K(k)`.
pub fn elliptic_f_extended(phi: f64, k: f64) -> Result<f64> {
    check_modulus(k)?;
    if !phi.is_finite() {
        return Err(CoreError::Domain(format!(
            "amplitude must be finite, got {phi}"
        )));
    }
    let turns = (phi / PI).round();
    let reduced = (phi - turns * PI).clamp(-FRAC_PI_2, FRAC_PI_2);
    let base = elliptic_f(reduced, k)?;
    if turns == 0.0 {
        Ok(base)
    } else {
        Ok(base + 2.0 * turns * complete_k(k)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        assert_eq!(elliptic_f(0.0, 0.7).unwrap(), 0.0);
        assert!((elliptic_f(FRAC_PI_2, 0.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((elliptic_f(0.3, 0.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rf_symmetric_point() {
        // R_F(x, x, x) = 1/sqrt(x)
        assert!((carlson_rf(4.0, 4.0, 4.0).unwrap() - 0.5).abs() < 1e-15);
        // R_F(0, 1, 1) = π/2
        assert!((carlson_rf(0.0, 1.0, 1.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn odd_in_amplitude() {
        let a = elliptic_f(0.9, 0.8).unwrap();
        let b = elliptic_f(-0.9, 0.8).unwrap();
        assert!((a + b).abs() < 1e-15);
    }

    #[test]
    fn quasi_periodic_extension_is_continuous() {
        let k = 0.6;
        for &phi in &[FRAC_PI_2, 3.0 * FRAC_PI_2, -FRAC_PI_2] {
            let lo = elliptic_f_extended(phi - 1e-9, k).unwrap();
            let hi = elliptic_f_extended(phi + 1e-9, k).unwrap();
            assert!((hi - lo).abs() < 1e-8, "jump at {phi}: {lo} vs {hi}");
        }
        let shift =
            elliptic_f_extended(1.0 + PI, k).unwrap() - elliptic_f_extended(1.0, k).unwrap();
        assert!((shift - 2.0 * complete_k(k).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn modulus_out_of_range() {
        assert!(matches!(elliptic_f(0.2, 1.0), Err(CoreError::Domain(_))));
        assert!(matches!(elliptic_f(0.2, 1.5), Err(CoreError::Domain(_))));
    }
}
