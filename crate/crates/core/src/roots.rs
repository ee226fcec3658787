use crate::scalar::Scalar;

/// Real roots of `a·x² + b·x + c = 0`, ascending.
///
/// Uses `q = −½(b + sign(b)·√disc)` with roots `q/a` and `c/q`, so neither root
/// is formed by subtracting nearly equal numbers. `a = 0` degrades to the
/// linear equation.
pub fn quadratic_roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    if a == T::zero() {
        if b == T::zero() {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - T::four() * a * c;
    if disc < T::zero() {
        return Vec::new();
    }
    let sqrt_disc = disc.sqrt();
    let sgn = if b < T::zero() { -T::one() } else { T::one() };
    let q = -(b + sgn * sqrt_disc) / T::two();
    if q == T::zero() {
        // b = 0 and c = 0.
        return vec![T::zero(), T::zero()];
    }
    let (r1, r2) = (q / a, c / q);
    if r1 <= r2 {
        vec![r1, r2]
    } else {
        vec![r2, r1]
    }
}

/// Smallest strictly positive real root, if any.
pub fn smallest_positive_root<T: Scalar>(a: T, b: T, c: T) -> Option<T> {
    quadratic_roots(a, b, c).into_iter().find(|&r| r > T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_cases() {
        assert_eq!(quadratic_roots(1.0, -3.0, 2.0), vec![1.0, 2.0]);
        assert_eq!(quadratic_roots(1.0, 0.0, 1.0), Vec::<f64>::new());
        assert_eq!(quadratic_roots(0.0, 2.0, -1.0), vec![0.5]);
        assert_eq!(quadratic_roots(0.0, 0.0, 1.0), Vec::<f64>::new());
        assert_eq!(smallest_positive_root(-1.0, 0.0, 4.0), Some(2.0));
        assert_eq!(smallest_positive_root(1.0, 3.0, 2.0), None);
    }

    #[test]
    fn small_leading_coefficient_keeps_precision() {
        // x² coefficient tiny: the small root is ≈ c/|b| and must not cancel.
        let a: f64 = 1e-12;
        let r = smallest_positive_root(a, -5.0, 1.0).unwrap();
        let resid = a * r * r - 5.0 * r + 1.0;
        assert!(resid.abs() < 1e-15, "residual {resid}");
        assert!((r - 0.2).abs() < 1e-12);
    }
}
