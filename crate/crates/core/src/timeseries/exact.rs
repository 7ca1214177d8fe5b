//! Exact window sums over `f64` samples.
//!
//! Every finite `f64` is a dyadic rational `m * 2^e`. Scaling all values of a
//! series (and any threshold compared against it) to the smallest exponent
//! present turns them into integers, so prefix sums and mean-vs-threshold
//! comparisons carry no rounding error at all. Ties such as
//! `mean(0.06 x 9, 0 x 9) > 0.03` come out exactly as the arithmetic says.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{float::FloatCore, ToPrimitive, Zero};

/// `(mantissa, exponent)` such that `value = mantissa * 2^exponent`.
fn decompose(value: f64) -> (BigInt, i32) {
    let (mantissa, exponent, sign) = FloatCore::integer_decode(value);
    let m = BigInt::from(mantissa) * sign;
    (m, i32::from(exponent))
}

fn min_exponent<I: IntoIterator<Item = f64>>(values: I) -> i32 {
    values
        .into_iter()
        .filter(|v| *v != 0.0)
        .map(|v| decompose(v).1)
        .min()
        .unwrap_or(0)
}

fn scale(value: f64, base: i32) -> BigInt {
    if value == 0.0 {
        return BigInt::zero();
    }
    let (m, e) = decompose(value);
    debug_assert!(e >= base);
    m << ((e - base) as usize)
}

/// Converts the exact rational `sum * 2^base / count` to the nearest `f64`.
fn to_f64(sum: &BigInt, base: i32, count: usize) -> f64 {
    let mut numer = sum.clone();
    let mut denom = BigInt::from(count);
    if base >= 0 {
        numer <<= base as usize;
    } else {
        denom <<= (-base) as usize;
    }
    BigRational::new(numer, denom).to_f64().unwrap_or(f64::NAN)
}

/// Exact arithmetic mean of a slice of finite values, correctly rounded.
pub fn exact_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let base = min_exponent(values.iter().copied());
    let sum: BigInt = values.iter().map(|v| scale(*v, base)).sum();
    Some(to_f64(&sum, base, values.len()))
}

/// Prefix sums of a series' values in a shared integer scale.
#[derive(Debug, Clone)]
pub struct ExactPrefix {
    base: i32,
    prefix: Vec<BigInt>,
}

impl ExactPrefix {
    /// Builds prefix sums for `values`, using a scale fine enough to also
    /// represent every entry of `thresholds` exactly.
    pub fn new(values: &[f64], thresholds: &[f64]) -> Self {
        let base = min_exponent(values.iter().chain(thresholds).copied());
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut acc = BigInt::zero();
        prefix.push(acc.clone());
        for v in values {
            acc += scale(*v, base);
            prefix.push(acc.clone());
        }
        Self { base, prefix }
    }

    fn range_sum(&self, lo: usize, hi: usize) -> BigInt {
        &self.prefix[hi] - &self.prefix[lo]
    }

    /// Mean of samples `lo..hi`, correctly rounded to `f64`.
    pub fn mean(&self, lo: usize, hi: usize) -> Option<f64> {
        (hi > lo).then(|| to_f64(&self.range_sum(lo, hi), self.base, hi - lo))
    }

    /// Exact ordering of `mean(lo..hi)` relative to `threshold`.
    ///
    /// `threshold` must be one of the values passed at construction (or share
    /// their scale); otherwise the comparison falls back to a rational one.
    pub fn compare_mean(&self, lo: usize, hi: usize, threshold: f64) -> Option<Ordering> {
        if hi <= lo {
            return None;
        }
        let sum = self.range_sum(lo, hi);
        let count = BigInt::from(hi - lo);
        if threshold == 0.0 || decompose(threshold).1 >= self.base {
            let scaled = scale(threshold, self.base) * count;
            return Some(sum.cmp(&scaled));
        }
        let (m, e) = decompose(threshold);
        // sum * 2^base cmp m * 2^e * count, with e < base
        let lhs = sum << ((self.base - e) as usize);
        Some(lhs.cmp(&(m * count)))
    }
}
