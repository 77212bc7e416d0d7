//! Limit estimation for sequences sampled on a geometric grid of radii.

/// Result of fitting `value(r) = limit + a·r^(-rate)` through three points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub limit: f64,
    /// Empirical decay exponent; `None` when the last differences do not
    /// shrink geometrically (already converged, or not yet in the asymptotic regime).
    pub rate: Option<f64>,
}

/// Fits `L + a·r^(-β)` exactly through the last three samples.
///
/// The radii must be geometric (`r[i+1]/r[i]` constant over the last three);
/// with fewer than three samples the last value is returned unchanged.
pub fn power_law_limit(radii: &[f64], values: &[f64]) -> PowerLawFit {
    let n = values.len().min(radii.len());
    if n == 0 {
        return PowerLawFit {
            limit: f64::NAN,
            rate: None,
        };
    }
    if n < 3 {
        return PowerLawFit {
            limit: values[n - 1],
            rate: None,
        };
    }
    let (v1, v2, v3) = (values[n - 3], values[n - 2], values[n - 1]);
    let ratio = radii[n - 1] / radii[n - 2];
    let d1 = v2 - v1;
    let d2 = v3 - v2;
    let scale = v3.abs().max(1.0);
    // Differences at round-off level carry no rate information.
    if d1.abs() <= 1e-14 * scale || d2.abs() <= 1e-14 * scale {
        return PowerLawFit {
            limit: v3,
            rate: None,
        };
    }
    let s = d2 / d1;
    if !(s > 0.0 && s < 1.0) || !(ratio > 1.0) {
        return PowerLawFit {
            limit: v3,
            rate: None,
        };
    }
    PowerLawFit {
        limit: v3 + d2 * s / (1.0 - s),
        rate: Some(-s.ln() / ratio.ln()),
    }
}

/// Least-squares slope of `ln(err)` against `ln(r)`, negated, over the last
/// three strictly positive errors.
pub fn log_log_rate(radii: &[f64], errors: &[f64]) -> Option<f64> {
    let n = errors.len().min(radii.len());
    if n < 3 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (n - 3..n)
        .map(|i| (radii[i], errors[i]))
        .filter(|&(r, e)| r > 0.0 && e > 0.0 && e.is_finite())
        .map(|(r, e)| (r.ln(), e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// True when the last three errors do not grow, allowing `floor` of noise.
pub fn errors_non_increasing(errors: &[f64], floor: f64) -> bool {
    let n = errors.len();
    if n < 3 {
        return false;
    }
    errors[n - 3..].windows(2).all(|w| w[1] <= w[0] + floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let radii = [10.0, 20.0, 40.0, 80.0];
        let values: Vec<f64> = radii
            .iter()
            .map(|r: &f64| 0.5 + 3.0 * r.powf(-1.5))
            .collect();
        let fit = power_law_limit(&radii, &values);
        assert!((fit.limit - 0.5).abs() < 1e-13);
        assert!((fit.rate.unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn converged_sequence_has_no_rate() {
        let radii = [10.0, 20.0, 40.0];
        let fit = power_law_limit(&radii, &[0.25, 0.25, 0.25]);
        assert_eq!(fit.limit, 0.25);
        assert_eq!(fit.rate, None);
    }

    #[test]
    fn log_log_slope() {
        let radii = [1.0, 2.0, 4.0, 8.0];
        let errs: Vec<f64> = radii.iter().map(|r: &f64| 2.0 / (r * r)).collect();
        assert!((log_log_rate(&radii, &errs).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(log_log_rate(&radii, &[1.0, 0.0, 0.0, 0.0]), None);
    }

    #[test]
    fn monotone_with_floor() {
        assert!(errors_non_increasing(&[1.0, 0.5, 0.2, 0.1], 0.0));
        assert!(errors_non_increasing(&[0.0, 0.0, 1e-16], 1e-14));
        assert!(!errors_non_increasing(&[0.1, 0.2, 0.3], 1e-14));
    }
}
