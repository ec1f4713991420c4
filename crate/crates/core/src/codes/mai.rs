use crate::error::{Error, Result};

/// Bit error rate of on-off keyed OCDMA under chip-synchronous multiple
/// access interference.
///
/// Each of the `active_users - 1` interferers hits the desired code with
/// probability `q = w^2 / (2n)`; an error occurs on a transmitted zero when
/// `threshold` or more hits accumulate.
pub fn mai_ber(n: u32, w: u32, active_users: u32, threshold: u32) -> Result<f64> {
    if active_users == 0 {
        return Err(Error::UnsupportedParameters(
            "active_users must be >= 1".into(),
        ));
    }
    if w == 0 || threshold == 0 {
        return Err(Error::UnsupportedParameters(format!(
            "weight and threshold must be >= 1, got w={w}, threshold={threshold}"
        )));
    }
    if u64::from(n) < 2 * u64::from(w) {
        return Err(Error::UnsupportedParameters(format!(
            "hit model requires n >= 2w, got n={n}, w={w}"
        )));
    }
    let q = f64::from(w) * f64::from(w) / (2.0 * f64::from(n));
    if q > 1.0 {
        return Err(Error::UnsupportedParameters(format!(
            "hit probability w^2/(2n) = {q} exceeds 1"
        )));
    }

    let interferers = active_users - 1;
    if interferers < threshold {
        return Ok(0.0);
    }
    let term = |i: u32| {
        binomial(interferers, i) * q.powi(i as i32) * (1.0 - q).powi((interferers - i) as i32)
    };
    // Sum the lighter tail. Summing an upper tail close to 1 accumulates
    // enough rounding to break monotonicity in the user count.
    let tail = if f64::from(interferers) * q < f64::from(threshold) {
        (threshold..=interferers).rev().map(term).sum::<f64>()
    } else {
        1.0 - (0..threshold).map(term).sum::<f64>()
    };
    Ok((0.5 * tail).clamp(0.0, 0.5))
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_interferers_is_error_free() {
        assert_eq!(mai_ber(32, 4, 1, 4).unwrap(), 0.0);
        assert_eq!(mai_ber(100, 3, 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn single_term_point() {
        let ber = mai_ber(32, 4, 5, 4).unwrap();
        assert!((ber - 1.953125e-3).abs() < 1e-12, "{ber}");
    }

    #[test]
    fn below_threshold_is_zero() {
        assert_eq!(mai_ber(32, 4, 4, 4).unwrap(), 0.0);
    }

    #[test]
    fn guard_rejects_short_codes() {
        assert!(matches!(
            mai_ber(7, 4, 3, 4),
            Err(Error::UnsupportedParameters(_))
        ));
        assert!(matches!(
            mai_ber(32, 4, 0, 4),
            Err(Error::UnsupportedParameters(_))
        ));
    }

    #[test]
    fn saturated_tail_stays_monotone() {
        let a = mai_ber(19, 6, 59, 6).unwrap();
        let b = mai_ber(19, 6, 60, 6).unwrap();
        assert!(a <= b, "{a} > {b}");
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(10, 0), 1.0);
        assert_eq!(binomial(10, 10), 1.0);
    }
}
