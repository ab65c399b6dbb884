//! Circular regression for one-dimensional LWE.
//!
//! Samples `(a, b)` are mapped onto the unit circle as `y = 2πb/p`, and the
//! secret is estimated by minimising
//!
//! ```text
//! loss(s) = -Σ cos(y_i - (2π/p)·a_i·s)
//! ```
//!
//! over real `s`. The loss is the negative von Mises log-likelihood up to
//! affine terms, has period `p` in `s` and reaches `-m` at the secret for
//! noiseless data.

use std::f64::consts::TAU;

use crate::modnum::{LweSamples, Modulus};
use crate::{Error, Result};

mod curve;
mod solver;
mod vonmises;

pub use curve::{sample_curve, write_curve, CurveKind, CurvePoint, CurveValue};
pub use solver::{
    round_half_up, solve, verify_candidate, write_trace, HaltMode, Init, RegressionConfig, RegressionResult,
    TraceEntry, Variant, VerifyPolicy, DEFAULT_GRAD_FLOOR,
};
pub use vonmises::{bessel_i0, DiscreteVonMises, VonMises};

/// Angle `2πb/p` of a residue on the unit circle, in `[0, 2π)` for `b < p`.
#[inline]
pub fn angle_of(b: u64, p: u64) -> f64 {
    TAU * b as f64 / p as f64
}

/// Samples rescaled to the circle: `(a_i, y_i = 2π·b_i/p)`, order preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleDataset {
    modulus: Modulus,
    a: Vec<f64>,
    y: Vec<f64>,
    raw: Vec<(u64, u64)>,
}

pub fn to_angles(data: &LweSamples) -> AngleDataset {
    let p = data.modulus();
    let raw: Vec<(u64, u64)> = data.samples().iter().map(|s| (s.a, s.b)).collect();
    let (a, y) = raw.iter().map(|&(a, b)| (a as f64, angle_of(b, p.get()))).unzip();
    AngleDataset { modulus: p, a, y, raw }
}

impl AngleDataset {
    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn pair(&self, i: usize) -> (f64, f64) {
        (self.a[i], self.y[i])
    }

    /// `2π/p`.
    #[inline]
    fn scale(&self) -> f64 {
        TAU / self.modulus.get() as f64
    }

    fn check(&self, sel: Selection<'_>) -> Result<usize> {
        match sel {
            Selection::All if self.is_empty() => Err(Error::EmptySubset),
            Selection::All => Ok(self.len()),
            Selection::Indices([]) => Err(Error::EmptySubset),
            Selection::Indices(idx) => {
                if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
                    return Err(Error::IndexOutOfRange {
                        index: bad,
                        len: self.len(),
                    });
                }
                Ok(idx.len())
            }
        }
    }

    /// Sum of `f(a_i, residual_i)` over the selection, where
    /// `residual_i = y_i - (2π/p)·a_i·s` up to a multiple of 2π.
    ///
    /// The integer part of `s` is reduced exactly, so the angle stays small
    /// and keeps its precision however large `a_i·s` gets.
    fn fold(&self, s: f64, sel: Selection<'_>, f: impl Fn(f64, f64) -> f64) -> f64 {
        let w = self.scale();
        let p = self.modulus.get() as i128;
        let whole = s.floor();
        let frac = s - whole;
        let n = (whole as i128).rem_euclid(p);
        let term = |i: usize| {
            let (a, b) = self.raw[i];
            let offset = (b as i128 - a as i128 * n).rem_euclid(p);
            f(self.a[i], w * (offset as f64 - self.a[i] * frac))
        };
        match sel {
            Selection::All => (0..self.len()).map(term).sum(),
            Selection::Indices(idx) => idx.iter().map(|&i| term(i)).sum(),
        }
    }
}

/// Which samples a loss or gradient is evaluated on.
#[derive(Clone, Copy, Debug)]
pub enum Selection<'a> {
    All,
    Indices(&'a [usize]),
}

/// `-Σ cos(y_i - (2π/p)·a_i·s)` over the selection.
pub fn loss(s: f64, data: &AngleDataset, sel: Selection<'_>) -> Result<f64> {
    data.check(sel)?;
    Ok(-data.fold(s, sel, |_, r| r.cos()))
}

/// Derivative of [`loss`] in `s`: `-(2π/p)·Σ a_i·sin(y_i - (2π/p)·a_i·s)`.
pub fn gradient(s: f64, data: &AngleDataset, sel: Selection<'_>) -> Result<f64> {
    data.check(sel)?;
    Ok(-data.scale() * data.fold(s, sel, |a, r| a * r.sin()))
}

/// [`gradient`] divided by the number of selected samples.
pub fn mean_gradient(s: f64, data: &AngleDataset, sel: Selection<'_>) -> Result<f64> {
    let k = data.check(sel)?;
    Ok(gradient(s, data, sel)? / k as f64)
}

/// One update `s_t -> s_{t+1}` on the given batch.
///
/// With `d = -mean_gradient`, the plain variant moves by `η·d` and the
/// reciprocal variant by `η/d`, where `|d|` is first raised to at least
/// `grad_floor` keeping its sign (an exact zero counts as positive).
pub fn step(s: f64, data: &AngleDataset, batch: Selection<'_>, cfg: &RegressionConfig) -> Result<f64> {
    let d = -mean_gradient(s, data, batch)?;
    Ok(match cfg.variant {
        Variant::Plain => s + cfg.eta * d,
        Variant::Reciprocal => s + cfg.eta / clamp_away_from_zero(d, cfg.grad_floor),
    })
}

fn clamp_away_from_zero(x: f64, floor: f64) -> f64 {
    if x.abs() >= floor {
        x
    } else if x < 0.0 {
        -floor
    } else {
        floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modnum::gen_dataset;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noiseless(p: u64, s: u64) -> AngleDataset {
        let d = gen_dataset(Modulus::new(p).unwrap(), s, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        to_angles(d.public())
    }

    fn noisy(p: u64, s: u64, seed: u64) -> AngleDataset {
        let d = gen_dataset(Modulus::new(p).unwrap(), s, 3.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        to_angles(d.public())
    }

    /// Straight summation from the raw (a, b) pairs, independent of the
    /// angle rescaling above.
    fn oracle_loss(p: u64, secret: u64, s: f64) -> f64 {
        (1..p)
            .map(|a| {
                let b = (a * secret) % p;
                -(2.0 * PI * (b as f64 - a as f64 * s) / p as f64).cos()
            })
            .sum()
    }

    #[test]
    fn angles_of_known_residues() {
        assert!((angle_of(2, 4) - PI).abs() < 1e-15);
        assert_eq!(angle_of(0, 41), 0.0);
        assert!((angle_of(146, 251) - 292.0 * PI / 251.0).abs() < 1e-12);
        let data = noiseless(251, 3);
        let (a, y) = data.pair(215);
        assert_eq!(a, 216.0);
        assert!((y - 292.0 * PI / 251.0).abs() < 1e-12);
    }

    #[test]
    fn loss_at_secret_is_minus_m() {
        let data = noiseless(41, 3);
        assert!((loss(3.0, &data, Selection::All).unwrap() + 40.0).abs() < 1e-9 * 40.0);
        let shifted = loss(3.0 + 41.0, &data, Selection::All).unwrap();
        assert!((shifted - loss(3.0, &data, Selection::All).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn loss_matches_direct_summation() {
        let data = noiseless(41, 3);
        for s in [10.0, 0.0, 7.25, 40.99] {
            let got = loss(s, &data, Selection::All).unwrap();
            assert!((got - oracle_loss(41, 3, s)).abs() < 1e-9, "s = {s}");
        }
    }

    #[test]
    fn empty_and_invalid_selections_are_errors() {
        let data = noiseless(41, 3);
        assert!(matches!(
            loss(1.0, &data, Selection::Indices(&[])),
            Err(Error::EmptySubset)
        ));
        assert!(matches!(
            gradient(1.0, &data, Selection::Indices(&[])),
            Err(Error::EmptySubset)
        ));
        assert!(matches!(
            mean_gradient(1.0, &data, Selection::Indices(&[])),
            Err(Error::EmptySubset)
        ));
        assert!(matches!(
            loss(1.0, &data, Selection::Indices(&[0, 40])),
            Err(Error::IndexOutOfRange { index: 40, len: 40 })
        ));
    }

    #[test]
    fn gradient_vanishes_at_secret() {
        let data = noiseless(251, 77);
        assert!(gradient(77.0, &data, Selection::All).unwrap().abs() < 1e-9 * 250.0);
    }

    #[test]
    fn gradient_at_integer_points_has_sign_of_shorter_path_to_secret() {
        // The gradient itself (not its negative) is positive when the secret
        // lies ahead on the shorter arc.
        let data = noiseless(41, 3);
        let g4 = gradient(4.0, &data, Selection::All).unwrap();
        let g2 = gradient(2.0, &data, Selection::All).unwrap();
        assert!(g4 < 0.0 && g2 > 0.0, "{g4} {g2}");
    }

    #[test]
    fn mean_gradient_scales_by_batch_size() {
        let data = noisy(251, 100, 3);
        let idx: Vec<usize> = (0..250).step_by(3).collect();
        let g = gradient(17.3, &data, Selection::Indices(&idx)).unwrap();
        let mg = mean_gradient(17.3, &data, Selection::Indices(&idx)).unwrap();
        assert!((mg * idx.len() as f64 - g).abs() < 1e-12 * g.abs().max(1.0));
    }

    #[test]
    fn plain_step_is_fixed_at_secret() {
        let data = noiseless(41, 3);
        let cfg = RegressionConfig::new(1.0, 40).with_variant(Variant::Plain);
        let next = step(3.0, &data, Selection::All, &cfg).unwrap();
        assert!((next - 3.0).abs() < 1e-9);
    }

    #[test]
    fn reciprocal_step_at_zero_gradient_uses_positive_floor() {
        // b = 0 evaluated at s = 0 leaves a residual of exactly zero
        let p = Modulus::new(41).unwrap();
        let raw = LweSamples::new(p, 0.0, vec![crate::modnum::Sample::new(5, 0, p).unwrap()]).unwrap();
        let data = to_angles(&raw);
        let cfg = RegressionConfig::new(2.0, 1);
        assert_eq!(gradient(0.0, &data, Selection::All).unwrap(), 0.0);
        let next = step(0.0, &data, Selection::All, &cfg).unwrap();
        assert_eq!(next, 2.0 / DEFAULT_GRAD_FLOOR);
        assert_eq!(clamp_away_from_zero(0.0, 1e-8), 1e-8);
        assert_eq!(clamp_away_from_zero(-1e-12, 1e-8), -1e-8);
        assert_eq!(clamp_away_from_zero(0.5, 1e-8), 0.5);
    }

    #[test]
    fn reciprocal_step_from_two_and_a_half_moves_up() {
        let data = noiseless(41, 3);
        // residuals π·a/41 all lie in (0, π), so every sine term is positive
        let direct: f64 = (1..41u64).map(|a| a as f64 * (PI * a as f64 / 41.0).sin()).sum();
        assert!(direct > 0.0);
        let cfg = RegressionConfig::new(1.0, 40);
        let next = step(2.5, &data, Selection::All, &cfg).unwrap();
        assert!(next > 2.5);
    }

    proptest! {
        #[test]
        fn loss_and_gradient_have_period_p(s in -500.0f64..500.0, secret in 1u64..251, seed in any::<u64>()) {
            let data = noisy(251, secret, seed);
            let l0 = loss(s, &data, Selection::All).unwrap();
            let l1 = loss(s + 251.0, &data, Selection::All).unwrap();
            prop_assert!((l0 - l1).abs() <= 1e-9 * l0.abs().max(1.0));
            let g0 = gradient(s, &data, Selection::All).unwrap();
            let g1 = gradient(s + 251.0, &data, Selection::All).unwrap();
            prop_assert!((g0 - g1).abs() <= 1e-9 * g0.abs().max(1.0));
        }

        #[test]
        fn loss_is_bounded_by_subset_size(s in -100.0f64..100.0, len in 1usize..40, seed in any::<u64>()) {
            let data = noisy(41, 5, seed);
            let idx: Vec<usize> = (0..len).collect();
            let l = loss(s, &data, Selection::Indices(&idx)).unwrap();
            prop_assert!(l >= -(len as f64) - 1e-12 && l <= len as f64 + 1e-12);
        }
    }

    #[test]
    fn loss_reaches_minus_m_only_at_secret() {
        for p in [23u64, 41, 71, 113, 251] {
            for secret in [1, 2, p / 2, p - 1] {
                let data = noiseless(p, secret);
                let m = (p - 1) as f64;
                for n in 0..p {
                    let l = loss(n as f64, &data, Selection::All).unwrap();
                    let at_floor = (l + m).abs() < 1e-9 * m;
                    assert_eq!(at_floor, n == secret, "p={p} secret={secret} n={n} loss={l}");
                }
            }
        }
    }
}
