//! Floating-point helpers that work without `std`.

/// Neumaier-compensated sum.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut total = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = total + v;
        if abs(total) >= abs(v) {
            carry += (total - t) + v;
        } else {
            carry += (v - t) + total;
        }
        total = t;
    }
    total + carry
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Equality within [`crate::EXACT_TOL`].
#[inline]
pub fn approx_eq(a: f64, b: f64) -> bool {
    abs(a - b) <= crate::EXACT_TOL
}

/// Uniform grid `0, 1/(n-1), ..., 1` with `n` points.
pub fn unit_grid(n: usize) -> impl Iterator<Item = f64> + Clone {
    let steps = (n.max(2) - 1) as f64;
    (0..n).map(move |k| k as f64 / steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(v), 2.0);
    }

    #[test]
    fn grid_endpoints() {
        let g: alloc::vec::Vec<f64> = unit_grid(11).collect();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert!((g[3] - 0.3).abs() < 1e-15);
    }
}
