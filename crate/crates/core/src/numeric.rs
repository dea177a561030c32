//! Order-independent floating point summation and rounding helpers.

/// Exactly rounded running sum (Shewchuk's algorithm, as in Python's
/// `math.fsum`).
///
/// The result is the correctly rounded value of the exact sum of all inputs,
/// so it does not depend on the order in which values were added. Inputs must
/// be finite.
#[derive(Debug, Clone, Default)]
pub struct Fsum {
    partials: Vec<f64>,
}

impl Fsum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        debug_assert!(value.is_finite());
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            let y = p[n - 1];
            n -= 1;
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // half-way case: the dropped partials decide the rounding direction
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for Fsum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

impl FromIterator<f64> for Fsum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Fsum::new();
        s.extend(iter);
        s
    }
}

/// Correctly rounded sum of `values`.
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<Fsum>().value()
}

/// Round to `decimals` decimal places (half away from zero).
pub fn round_to(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancellation_is_exact() {
        assert_eq!(fsum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(fsum([0.1; 10]), 1.0);
        assert_eq!(fsum(std::iter::empty()), 0.0);
    }

    #[test]
    fn half_way_rounding() {
        // 1 + 2^-53 + 2^-105: exact sum is just above the half-way point
        let v = fsum([1.0, 2f64.powi(-53), 2f64.powi(-105)]);
        assert_eq!(v, 1.0 + f64::EPSILON);
    }

    proptest! {
        #[test]
        fn order_independent(mut xs in prop::collection::vec(-1e6f64..1e6, 0..200)) {
            let a = fsum(xs.iter().copied());
            xs.reverse();
            let b = fsum(xs.iter().copied());
            xs.sort_by(f64::total_cmp);
            let c = fsum(xs.iter().copied());
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert_eq!(a.to_bits(), c.to_bits());
        }
    }
}
