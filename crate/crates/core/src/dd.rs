//! Double-double arithmetic for ill-conditioned regression sums.
//!
//! Near the explosive boundary the least-squares signal alpha_hat - alpha_n
//! can be smaller than one ulp of alpha_n, so the normal-equation sums (and
//! the final quotient) are carried as unevaluated hi + lo pairs with ~32
//! significant digits. Only the handful of operations the fitting kernel
//! needs are implemented.

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free sum: returns (fl(a+b), rounding error). Knuth's TwoSum.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// TwoSum specialization valid when |a| >= |b|.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

/// Error-free product via fused multiply-add.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = f64::mul_add(a, b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s1, e1) = two_sum(self.hi, other.hi);
        let (s2, e2) = two_sum(self.lo, other.lo);
        let (s1, t) = quick_two_sum(s1, e1 + s2);
        let (hi, lo) = quick_two_sum(s1, t + e2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn add_f64(self, x: f64) -> Dd {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, other: Dd) -> Dd {
        self.add(other.neg())
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, x: f64) -> Dd {
        let (p, e) = two_prod(self.hi, x);
        let (hi, lo) = quick_two_sum(p, e + self.lo * x);
        Dd { hi, lo }
    }

    /// Quotient accurate to roughly 1 part in 1e30.
    #[inline]
    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r2 = r.sub(other.mul_f64(q2));
        let q3 = r2.hi / other.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        let (hi, lo2) = quick_two_sum(hi, lo + q3);
        Dd { hi, lo: lo2 }
    }
}

/// Compensated accumulator: exact running sum of f64 products.
#[derive(Debug, Clone, Copy)]
pub struct DdSum(Dd);

impl DdSum {
    #[inline]
    pub fn new() -> DdSum {
        DdSum(Dd::ZERO)
    }

    /// Add a plain value.
    #[inline]
    pub fn add(&mut self, x: f64) {
        self.0 = self.0.add_f64(x);
    }

    /// Add the exact product a*b (both rounding halves).
    #[inline]
    pub fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.0 = self.0.add_f64(p).add_f64(e);
    }

    /// Add the exact triple product a*b*c.
    #[inline]
    pub fn add_prod3(&mut self, a: f64, b: f64, c: f64) {
        let (p, e) = two_prod(a, b);
        let (p2, e2) = two_prod(p, c);
        self.0 = self.0.add_f64(p2).add_f64(e2 + e * c);
    }

    #[inline]
    pub fn total(&self) -> Dd {
        self.0
    }
}

impl Default for DdSum {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_tracks_cancellation() {
        // 1e20 + 1 - 1e20 is 0.0 in f64 but recoverable in double-double.
        let s = Dd::from(1e20).add_f64(1.0).add_f64(-1e20);
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn prod_accumulation_matches_integer_arithmetic() {
        // Products of large odd integers overflow the 53-bit mantissa; the
        // compensated accumulator must keep every bit.
        let a = 67_108_865.0; // 2^26 + 1
        let b = 134_217_729.0; // 2^27 + 1
        let mut s = DdSum::new();
        s.add_prod(a, b);
        s.add_prod(-a, b);
        s.add_prod(a, b);
        // exact: a*b = 2^53 + 2^27 + 2^26 + 1, not representable in f64
        let exact_hi = a * b;
        let exact_lo = f64::mul_add(a, b, -exact_hi);
        assert_eq!(s.total().hi, exact_hi);
        assert_eq!(s.total().lo, exact_lo);
    }

    #[test]
    fn division_recovers_tiny_offsets() {
        // alpha = 1 + 2^-60 constructed as a quotient whose parts only differ
        // below f64 resolution of the quotient itself.
        let eps = (2.0f64).powi(-60);
        let denom = Dd::from(3.0);
        let num = Dd::from(3.0).add(Dd::from(3.0).mul_f64(eps));
        let q = num.div(denom);
        let offset = q.sub(Dd::from(1.0)).value();
        let rel = (offset - eps).abs() / eps;
        assert!(rel < 1e-12, "relative error {rel}");
    }

    #[test]
    fn triple_product_is_exact() {
        let mut s = DdSum::new();
        s.add_prod3(1e8 + 1.0, 1e8 + 3.0, 7.0);
        // exact integer value; hi and lo are both integral f64s here
        let exact: i128 = 100_000_001i128 * 100_000_003i128 * 7i128;
        let total = s.total();
        let reconstructed = total.hi as i128 + total.lo as i128;
        assert_eq!(reconstructed, exact);
    }
}
