//! Fixed-order slice arithmetic shared by the data generators and the ring engine.
//!
//! Inner products and squared distances accumulate strictly left to right, so a
//! reference implementation written against plain slices reproduces the engine
//! bit for bit.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

pub(crate) fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_hand_sum() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn squared_distance_is_nonnegative() {
        assert_eq!(squared_distance(&[1.0, 1.0], &[1.0, 1.0]), 0.0);
        assert_eq!(squared_distance(&[3.0, 0.0], &[0.0, 4.0]), 25.0);
    }

    #[test]
    fn all_finite_rejects_nan_and_inf() {
        assert!(all_finite(&[0.0, -1.5]));
        assert!(!all_finite(&[0.0, f64::NAN]));
        assert!(!all_finite(&[f64::INFINITY]));
    }
}
