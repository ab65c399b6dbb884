use std::f64::consts::TAU;

use crate::{Error, Result};

/// Modified Bessel function of the first kind, order 0, by its power series
/// `Σ (κ/2)^{2j} / (j!)²`, stopped once a term drops below `1e-16` of the
/// partial sum.
pub fn bessel_i0(kappa: f64) -> f64 {
    assert!(kappa >= 0.0, "kappa must be nonnegative");
    let q = 0.25 * kappa * kappa;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut j = 0.0;
    loop {
        j += 1.0;
        term *= q / (j * j);
        sum += term;
        if term < 1e-16 * sum {
            return sum;
        }
    }
}

/// Continuous von Mises distribution on the circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VonMises {
    pub mu: f64,
    pub kappa: f64,
}

impl VonMises {
    pub fn new(mu: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "von Mises needs finite mu and kappa >= 0, got ({mu}, {kappa})"
            )));
        }
        Ok(VonMises { mu, kappa })
    }

    /// `exp(κ cos(θ - μ)) / (2π I0(κ))`
    pub fn pdf(&self, theta: f64) -> f64 {
        (self.kappa * (theta - self.mu).cos()).exp() / (TAU * bessel_i0(self.kappa))
    }
}

/// The von Mises density restricted to the `p` angles `2πn/p`,
/// `n ∈ [-(p-1)/2, (p-1)/2]`, and rescaled by a constant `c` so the
/// support sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteVonMises {
    base: VonMises,
    p: u64,
    c: f64,
}

impl DiscreteVonMises {
    /// `p` must be odd so the support is symmetric.
    pub fn new(base: VonMises, p: u64) -> Result<Self> {
        if p < 3 || p.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "discrete support needs odd p >= 3, got {p}"
            )));
        }
        let half = ((p - 1) / 2) as i64;
        let total: f64 = (-half..=half).map(|n| base.pdf(TAU * n as f64 / p as f64)).sum();
        Ok(DiscreteVonMises {
            base,
            p,
            c: 1.0 / total,
        })
    }

    pub fn normalizer(&self) -> f64 {
        self.c
    }

    pub fn support(&self) -> std::ops::RangeInclusive<i64> {
        let half = ((self.p - 1) / 2) as i64;
        -half..=half
    }

    pub fn pmf(&self, n: i64) -> Result<f64> {
        let range = self.support();
        if !range.contains(&n) {
            return Err(Error::OutsideSupport {
                index: n,
                lo: *range.start(),
                hi: *range.end(),
            });
        }
        Ok(self.c * self.base.pdf(TAU * n as f64 / self.p as f64))
    }
}
