//! A differentiable loss for predicting Diffie–Hellman exponents.
//!
//! Samples are `(a, y = g^(a·s) mod p)`. A model that outputs the exponent
//! `b = a·s mod (p-1)` as base-B digits `[d_k, ..., d_0]` can be scored
//! against `y` without knowing `b`:
//!
//! ```text
//! g^b mod p = (Π_i g_i^{d_i}) mod p,   g_i = g^(B^i) mod p
//! ```
//!
//! Replacing each reduction by [`smooth_mod`] and each power by
//! `exp(d_i·ln g_i)` turns this into a function of real digits that is
//! differentiable away from the reduction wrap points.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::modnum::{mod_pow, prime_factors, JsonLines, Modulus};
use crate::seqrep::{encode, width_for};
use crate::{Error, ParseError, Result};

/// Products beyond this lose integer resolution in `f64`.
const EXACT_F64_LIMIT: f64 = 9_007_199_254_740_992.0;

/// Minimum distance, as a fraction of `p`, between any reduced quantity and
/// a wrap point before the analytic gradient is trusted.
pub const WRAP_MARGIN: f64 = 1e-6;

/// Fails with the first prime factor `q` of `p - 1` for which
/// `g^((p-1)/q) ≡ 1`.
pub fn check_primitive_root(g: u64, p: Modulus) -> Result<()> {
    if g.is_multiple_of(p.get()) {
        return Err(Error::InvalidConfig(format!("generator {g} is divisible by {p}")));
    }
    let order = p.get() - 1;
    for q in prime_factors(order) {
        if mod_pow(g as i64, order / q, p) == 1 {
            return Err(Error::NotPrimitive {
                g,
                p: p.get(),
                factor: q,
            });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhSample {
    pub a: u64,
    pub y: u64,
}

/// A verified instance: primitive `g`, consistent samples and the
/// power table `g_i = g^(B^i) mod p` for `i = 0..width`.
#[derive(Clone, Debug, PartialEq)]
pub struct DhInstance {
    p: Modulus,
    g: u64,
    secret: u64,
    base: u32,
    power_table: Vec<u64>,
    samples: Vec<DhSample>,
}

impl DhInstance {
    pub fn new(p: Modulus, g: u64, secret: u64, base: u32, samples: Vec<DhSample>) -> Result<Self> {
        check_primitive_root(g, p)?;
        if secret == 0 || secret > p.get() - 2 {
            return Err(Error::SecretOutOfRange {
                secret,
                max: p.get() - 2,
            });
        }
        let width = width_for(p.get() - 1, base)?;
        let mut power_table = Vec::with_capacity(width);
        let mut gi = g % p.get();
        for _ in 0..width {
            power_table.push(gi);
            gi = mod_pow(gi as i64, base as u64, p);
        }
        let inst = DhInstance {
            p,
            g,
            secret,
            base,
            power_table,
            samples,
        };
        for (i, s) in inst.samples.iter().enumerate() {
            if s.y != inst.expected_y(s.a) {
                return Err(Error::InvalidConfig(format!(
                    "sample {i}: y = {} but g^(a·s) mod p = {}",
                    s.y,
                    inst.expected_y(s.a)
                )));
            }
        }
        Ok(inst)
    }

    pub fn modulus(&self) -> Modulus {
        self.p
    }

    pub fn generator(&self) -> u64 {
        self.g
    }

    pub fn secret(&self) -> u64 {
        self.secret
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    /// Number of exponent digits, `k + 1`.
    pub fn width(&self) -> usize {
        self.power_table.len()
    }

    /// `power_table()[i] = g^(B^i) mod p`, least significant first.
    pub fn power_table(&self) -> &[u64] {
        &self.power_table
    }

    pub fn samples(&self) -> &[DhSample] {
        &self.samples
    }

    /// `a·s mod (p-1)`, the exponent a model would predict.
    pub fn exponent(&self, a: u64) -> u64 {
        let order = self.p.get() - 1;
        (a % order) * (self.secret % order) % order
    }

    fn expected_y(&self, a: u64) -> u64 {
        mod_pow(self.g as i64, self.exponent(a), self.p)
    }

    /// Ground-truth exponent digits for `a`, most significant first.
    pub fn exponent_digits(&self, a: u64) -> Vec<u32> {
        encode(self.exponent(a), self.base, self.width())
            .expect("exponent below p-1 fits the instance width")
            .digits()
            .to_vec()
    }

    /// Table entry matching digit position `j` of an MSB-first vector.
    fn table_for_position(&self, j: usize) -> u64 {
        self.power_table[self.width() - 1 - j]
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.width() {
            return Err(Error::DigitCount {
                expected: self.width(),
                got,
            });
        }
        Ok(())
    }
}

/// Draws `count` distinct `a ∈ [1, p-2]` and records `y = g^(a·s) mod p`.
pub fn gen_dh_dataset<R: Rng + ?Sized>(
    p: Modulus,
    g: u64,
    secret: u64,
    base: u32,
    count: usize,
    rng: &mut R,
) -> Result<DhInstance> {
    let pool = (p.get() - 2) as usize;
    if count == 0 || count > pool {
        return Err(Error::InvalidConfig(format!(
            "sample count {count} outside [1, {pool}]"
        )));
    }
    let mut inst = DhInstance::new(p, g, secret, base, Vec::new())?;
    inst.samples = index::sample(rng, pool, count)
        .iter()
        .map(|i| {
            let a = i as u64 + 1;
            DhSample {
                a,
                y: inst.expected_y(a),
            }
        })
        .collect();
    Ok(inst)
}

/// Reduction modulo `p` through the angle of the point
/// `(cos 2πx/p, sin 2πx/p)`, mapped into `[0, p)`.
///
/// Exactly periodic with period `p`, the identity on `[0, p)` and of unit
/// slope everywhere except at multiples of `p`. The argument is brought
/// into one period first so large inputs keep full angular precision.
pub fn smooth_mod(x: f64, p: f64) -> f64 {
    let theta = TAU * (x.rem_euclid(p) / p);
    let mut phi = theta.sin().atan2(theta.cos());
    if phi < 0.0 {
        phi += TAU;
    }
    let m = p * phi / TAU;
    if m >= p {
        0.0
    } else {
        m
    }
}

/// Distance from `x` to the nearest multiple of `p`.
fn wrap_distance(x: f64, p: f64) -> f64 {
    let r = x.rem_euclid(p);
    r.min(p - r)
}

struct Forward {
    /// `exp(d_j·ln g_j)` per position.
    powers: Vec<f64>,
    /// `smooth_mod` of each power.
    factors: Vec<f64>,
    product: f64,
    reduced: f64,
}

fn forward(digits: &[f64], inst: &DhInstance) -> Result<Forward> {
    inst.check_len(digits.len())?;
    let p = inst.p.get() as f64;
    let mut powers = Vec::with_capacity(digits.len());
    let mut factors = Vec::with_capacity(digits.len());
    let mut product = 1.0;
    for (j, &d) in digits.iter().enumerate() {
        let power = (d * (inst.table_for_position(j) as f64).ln()).exp();
        if power.is_nan() || power >= EXACT_F64_LIMIT {
            return Err(Error::PrecisionExhausted(power));
        }
        let f = smooth_mod(power, p);
        product *= f;
        powers.push(power);
        factors.push(f);
    }
    if product >= EXACT_F64_LIMIT {
        return Err(Error::PrecisionExhausted(product));
    }
    Ok(Forward {
        powers,
        factors,
        product,
        reduced: smooth_mod(product, p),
    })
}

/// `(mod_p(Π_i mod_p(g_i^{d_i})) - y)²` for real digits given most
/// significant first.
pub fn dh_loss(digits: &[f64], sample: &DhSample, inst: &DhInstance) -> Result<f64> {
    let fw = forward(digits, inst)?;
    Ok((fw.reduced - sample.y as f64).powi(2))
}

/// Exact counterpart of [`dh_loss`] for integer digits: the signed
/// difference `(Π_i g_i^{d_i} mod p) - y`.
pub fn exact_dh_residual(digits: &[u32], sample: &DhSample, inst: &DhInstance) -> Result<i64> {
    inst.check_len(digits.len())?;
    if let Some((position, &digit)) = digits.iter().enumerate().find(|(_, &d)| d >= inst.base) {
        return Err(Error::DigitOutOfRange {
            digit,
            position,
            base: inst.base,
        });
    }
    let p = inst.p;
    let value = digits.iter().enumerate().fold(1u64, |acc, (j, &d)| {
        acc * mod_pow(inst.table_for_position(j) as i64, d as u64, p) % p.get()
    });
    Ok(value as i64 - sample.y as i64)
}

/// Analytic gradient of [`dh_loss`] in each digit.
///
/// Every power and the final product must sit at least
/// `WRAP_MARGIN·p` away from a multiple of `p`; the offending position is
/// reported otherwise (`width` stands for the outer product).
pub fn dh_loss_gradient(digits: &[f64], sample: &DhSample, inst: &DhInstance) -> Result<Vec<f64>> {
    let fw = forward(digits, inst)?;
    let p = inst.p.get() as f64;
    let margin = WRAP_MARGIN * p;
    for (j, &power) in fw.powers.iter().enumerate() {
        let distance = wrap_distance(power, p);
        if distance < margin {
            return Err(Error::NearWrap { index: j, distance });
        }
    }
    let distance = wrap_distance(fw.product, p);
    if distance < margin {
        return Err(Error::NearWrap {
            index: digits.len(),
            distance,
        });
    }
    let outer = 2.0 * (fw.reduced - sample.y as f64);
    Ok((0..digits.len())
        .map(|j| {
            let others: f64 = fw
                .factors
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, f)| f)
                .product();
            let ln_g = (inst.table_for_position(j) as f64).ln();
            outer * others * fw.powers[j] * ln_g
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DhMeta {
    p: u64,
    g: u64,
    base: u32,
    width: usize,
    secret: u64,
}

/// A DH dataset as read from disk, before any semantic checks.
#[derive(Clone, Debug, PartialEq)]
pub struct DhRecord {
    pub p: u64,
    pub g: u64,
    pub base: u32,
    pub width: usize,
    pub secret: u64,
    pub samples: Vec<DhSample>,
}

impl DhRecord {
    pub fn from_instance(inst: &DhInstance) -> Self {
        DhRecord {
            p: inst.p.get(),
            g: inst.g,
            base: inst.base,
            width: inst.width(),
            secret: inst.secret,
            samples: inst.samples.clone(),
        }
    }

    pub fn into_instance(self) -> Result<DhInstance> {
        let p = Modulus::new(self.p)?;
        let expected = width_for(self.p - 1, self.base)?;
        if self.width != expected {
            return Err(Error::InvalidConfig(format!(
                "width {} does not match {expected} base-{} digits for p = {}",
                self.width, self.base, self.p
            )));
        }
        DhInstance::new(p, self.g, self.secret, self.base, self.samples)
    }
}

pub fn write_dh_dataset<W: Write>(rec: &DhRecord, mut out: W) -> Result<()> {
    let meta = DhMeta {
        p: rec.p,
        g: rec.g,
        base: rec.base,
        width: rec.width,
        secret: rec.secret,
    };
    serde_json::to_writer(&mut out, &meta).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for s in &rec.samples {
        serde_json::to_writer(&mut out, s).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses the DH JSON Lines layout. Only shape and ranges are checked here;
/// see [`DhRecord::into_instance`] and [`run_checks`] for the rest.
pub fn read_dh_dataset<R: BufRead>(input: R) -> Result<DhRecord> {
    let mut lines = JsonLines::new(input);
    let (meta_line, meta): (usize, DhMeta) = lines
        .next_record()?
        .ok_or_else(|| ParseError::new(1, "missing meta line"))?;
    if meta.p < 3 || meta.p >= crate::modnum::MAX_MODULUS {
        return Err(ParseError::new(meta_line, format!("p = {} outside [3, 2^32)", meta.p)).into());
    }
    if meta.base < 2 || meta.width == 0 || meta.width > 64 {
        return Err(ParseError::new(meta_line, "need base >= 2 and 1 <= width <= 64").into());
    }
    let mut samples = Vec::new();
    while let Some((n, s)) = lines.next_record::<DhSample>()? {
        if s.a == 0 || s.a > meta.p - 2 || s.y == 0 || s.y >= meta.p {
            return Err(ParseError::new(n, format!("sample (a={}, y={}) out of range", s.a, s.y)).into());
        }
        samples.push(s);
    }
    Ok(DhRecord {
        p: meta.p,
        g: meta.g,
        base: meta.base,
        width: meta.width,
        secret: meta.secret,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Number of random interior points used by the gradient check.
pub const GRADIENT_CHECK_POINTS: usize = 50;
/// Central difference step for the gradient check.
pub const FD_STEP: f64 = 1e-6;
/// Accepted relative error between analytic and numeric gradients.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Central finite-difference gradient of [`dh_loss`].
pub fn numeric_gradient(digits: &[f64], sample: &DhSample, inst: &DhInstance, h: f64) -> Result<Vec<f64>> {
    let mut x = digits.to_vec();
    (0..digits.len())
        .map(|j| {
            x[j] = digits[j] + h;
            let up = dh_loss(&x, sample, inst)?;
            x[j] = digits[j] - h;
            let down = dh_loss(&x, sample, inst)?;
            x[j] = digits[j];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Draws real digits in `[0, B-1]` whose powers and product all stay at
/// least `clearance·p` from a wrap point.
pub fn interior_point<R: Rng + ?Sized>(inst: &DhInstance, clearance: f64, rng: &mut R) -> Option<Vec<f64>> {
    let p = inst.p.get() as f64;
    let hi = (inst.base - 1) as f64;
    for _ in 0..10_000 {
        let digits: Vec<f64> = (0..inst.width()).map(|_| rng.random_range(0.0..=hi)).collect();
        let Ok(fw) = forward(&digits, inst) else { continue };
        let clear = fw
            .powers
            .iter()
            .chain(std::iter::once(&fw.product))
            .all(|&v| wrap_distance(v, p) >= clearance * p);
        if clear {
            return Some(digits);
        }
    }
    None
}

/// The `dh-check` battery: primitivity, exact residuals at the ground-truth
/// digits, and analytic-vs-numeric gradients at random interior points.
pub fn run_checks<R: Rng + ?Sized>(rec: &DhRecord, rng: &mut R) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let primitive = Modulus::new(rec.p).and_then(|p| check_primitive_root(rec.g, p));
    out.push(CheckOutcome {
        name: "primitive-root",
        passed: primitive.is_ok(),
        detail: match &primitive {
            Ok(()) => format!("{} generates (Z/{}Z)*", rec.g, rec.p),
            Err(e) => e.to_string(),
        },
    });
    let inst = match rec.clone().into_instance() {
        Ok(inst) => inst,
        Err(e) => {
            out.push(CheckOutcome {
                name: "instance",
                passed: false,
                detail: e.to_string(),
            });
            return out;
        }
    };

    let bad: Vec<u64> = inst
        .samples
        .iter()
        .filter(|s| !matches!(exact_dh_residual(&inst.exponent_digits(s.a), s, &inst), Ok(0)))
        .map(|s| s.a)
        .collect();
    out.push(CheckOutcome {
        name: "exact-residual",
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{} samples vanish at their ground-truth digits", inst.samples.len())
        } else {
            format!("nonzero residual for a in {bad:?}")
        },
    });

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut failure = None;
    for sample in inst.samples.iter().cycle().take(GRADIENT_CHECK_POINTS) {
        let Some(x) = interior_point(&inst, 1e-2, rng) else {
            continue;
        };
        let grads =
            dh_loss_gradient(&x, sample, &inst).and_then(|g| Ok((g, numeric_gradient(&x, sample, &inst, FD_STEP)?)));
        match grads {
            Ok((analytic, numeric)) => {
                worst = worst.max(relative_error(&analytic, &numeric));
                checked += 1;
            }
            Err(e) => failure = Some(e.to_string()),
        }
    }
    let passed = failure.is_none() && checked > 0 && worst <= GRADIENT_TOLERANCE;
    out.push(CheckOutcome {
        name: "gradient",
        passed,
        detail: match failure {
            Some(e) => e,
            None => format!("{checked} points, worst relative error {worst:.3e}"),
        },
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p23() -> Modulus {
        Modulus::new(23).unwrap()
    }

    /// Order of `g` by walking its powers.
    fn order_by_enumeration(g: u64, p: u64) -> u64 {
        let mut x = g % p;
        let mut k = 1;
        while x != 1 {
            x = x * g % p;
            k += 1;
        }
        k
    }

    #[test]
    fn primitive_root_detection_matches_enumeration() {
        assert!(check_primitive_root(5, p23()).is_ok());
        assert!(matches!(
            check_primitive_root(2, p23()),
            Err(Error::NotPrimitive { factor: 2, .. })
        ));
        for g in 1..23 {
            let primitive = order_by_enumeration(g, 23) == 22;
            assert_eq!(check_primitive_root(g, p23()).is_ok(), primitive, "g={g}");
        }
    }

    #[test]
    fn generated_samples_match_mod_pow() {
        let inst = gen_dh_dataset(p23(), 5, 3, 2, 10, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut seen = std::collections::HashSet::new();
        for s in inst.samples() {
            assert!((1..=21).contains(&s.a));
            assert!(seen.insert(s.a), "duplicate a");
            assert_eq!(s.y, mod_pow(5, (s.a * 3) % 22, p23()));
        }
        assert_eq!(inst.width(), 5);
        for (i, &gi) in inst.power_table().iter().enumerate() {
            assert_eq!(gi, mod_pow(5, 2u64.pow(i as u32), p23()));
        }
        assert!(gen_dh_dataset(p23(), 2, 3, 2, 10, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
        assert!(gen_dh_dataset(p23(), 5, 22, 2, 10, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
        assert!(gen_dh_dataset(p23(), 5, 3, 2, 22, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn worked_instance_residual() {
        let sample = DhSample { a: 4, y: 18 };
        let inst = DhInstance::new(p23(), 5, 3, 2, vec![sample]).unwrap();
        assert_eq!(inst.exponent(4), 12);
        assert_eq!(inst.exponent_digits(4), vec![0, 1, 1, 0, 0]);
        assert_eq!(exact_dh_residual(&[0, 1, 1, 0, 0], &sample, &inst).unwrap(), 0);
        assert_ne!(exact_dh_residual(&[0, 1, 1, 0, 1], &sample, &inst).unwrap(), 0);
        assert!(matches!(
            exact_dh_residual(&[1, 1, 0, 0], &sample, &inst),
            Err(Error::DigitCount { expected: 5, got: 4 })
        ));
        assert!(DhInstance::new(p23(), 5, 3, 2, vec![DhSample { a: 4, y: 17 }]).is_err());
    }

    #[test]
    fn smooth_mod_examples() {
        let p = 251.0;
        assert!((smooth_mod(p + 1.0, p) - 1.0).abs() < 1e-9 * p);
        assert!((smooth_mod(3.0 * p + 42.5, p) - 42.5).abs() < 1e-9 * p);
        // float remainder as the reference: 3.7p + 42.5 lands at 218.2
        let x = 3.7 * p + 42.5;
        assert!((smooth_mod(x, p) - x % p).abs() < 1e-6 * p);
        assert!((x % p - 218.2).abs() < 1e-9);
        assert!((smooth_mod(100.25, p) - 100.25).abs() < 1e-9 * p);
        assert!((0.0..p).contains(&smooth_mod(-1e-13, p)));
    }

    proptest! {
        #[test]
        fn smooth_mod_is_periodic_and_in_range(x in -1e6f64..1e6) {
            let p = 251.0;
            let m = smooth_mod(x, p);
            prop_assert!((0.0..p).contains(&m));
            let shifted = smooth_mod(x + p, p);
            // compare on the circle so values straddling 0/p agree
            let gap = (m - shifted).abs();
            prop_assert!(gap.min(p - gap) <= 1e-9 * p);
        }
    }

    #[test]
    fn smooth_loss_vanishes_at_ground_truth() {
        let inst = gen_dh_dataset(p23(), 5, 3, 2, 21, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let p = 23.0;
        for s in inst.samples() {
            let digits: Vec<f64> = inst.exponent_digits(s.a).iter().map(|&d| d as f64).collect();
            let loss = dh_loss(&digits, s, &inst).unwrap();
            assert!(loss / (p * p) <= 1e-6, "a={} loss={loss}", s.a);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = gen_dh_dataset(p23(), 5, 3, 2, 21, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for sample in inst.samples().iter().cycle().take(50) {
            let x = interior_point(&inst, 1e-2, &mut rng).unwrap();
            let a = dh_loss_gradient(&x, sample, &inst).unwrap();
            let n = numeric_gradient(&x, sample, &inst, 1e-6).unwrap();
            assert!(relative_error(&a, &n) <= 1e-4, "{a:?} vs {n:?}");
        }
    }

    #[test]
    fn gradient_vanishes_at_grid_minimum() {
        let inst = gen_dh_dataset(p23(), 5, 7, 2, 5, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        let width = inst.width();
        for s in inst.samples() {
            // exhaustive grid over every integer digit vector
            let best = (0..1u32 << width)
                .map(|code| (0..width).map(|j| (code >> (width - 1 - j)) & 1).collect::<Vec<u32>>())
                .find(|d| matches!(exact_dh_residual(d, s, &inst), Ok(0)))
                .unwrap();
            let x: Vec<f64> = best.iter().map(|&d| d as f64).collect();
            let g = dh_loss_gradient(&x, s, &inst).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-6), "{g:?}");
        }
    }

    #[test]
    fn first_order_taylor_error_shrinks_quadratically() {
        let inst = gen_dh_dataset(p23(), 5, 3, 2, 4, &mut ChaCha8Rng::seed_from_u64(15)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let s = &inst.samples()[0];
        let x = interior_point(&inst, 0.05, &mut rng).unwrap();
        let g = dh_loss_gradient(&x, s, &inst).unwrap();
        let base = dh_loss(&x, s, &inst).unwrap();
        let taylor_error = |h: f64| {
            let mut y = x.clone();
            y[0] += h;
            (dh_loss(&y, s, &inst).unwrap() - base - g[0] * h).abs()
        };
        let (e1, e2) = (taylor_error(0.01), taylor_error(0.005));
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "errors {e1} {e2}");
    }

    #[test]
    fn near_wrap_points_are_refused() {
        let sample = DhSample { a: 4, y: 18 };
        let inst = DhInstance::new(p23(), 5, 3, 2, vec![sample]).unwrap();
        // choose d_0 so that g_4^d hits 23 exactly
        let g4 = inst.power_table()[4] as f64;
        let d = 23f64.ln() / g4.ln();
        let err = dh_loss_gradient(&[d, 0.0, 0.0, 0.0, 0.0], &sample, &inst).unwrap_err();
        assert!(matches!(err, Error::NearWrap { index: 0, .. }), "{err}");
    }

    #[test]
    fn exhaustive_search_recovers_exponent() {
        let inst = gen_dh_dataset(p23(), 5, 3, 2, 21, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        let width = inst.width();
        for s in inst.samples() {
            let hits: Vec<u64> = (0..1u64 << width)
                .filter(|&code| {
                    let d: Vec<u32> = (0..width).map(|j| ((code >> (width - 1 - j)) & 1) as u32).collect();
                    matches!(exact_dh_residual(&d, s, &inst), Ok(0))
                })
                .collect();
            assert!(hits.contains(&inst.exponent(s.a)));
            assert!(hits.iter().all(|h| h % 22 == inst.exponent(s.a)));
        }
    }

    #[test]
    fn file_roundtrip_and_checks() {
        let inst = gen_dh_dataset(p23(), 5, 3, 2, 8, &mut ChaCha8Rng::seed_from_u64(18)).unwrap();
        let rec = DhRecord::from_instance(&inst);
        let mut buf = Vec::new();
        write_dh_dataset(&rec, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("{\"p\":23,\"g\":5,\"base\":2,\"width\":5,\"secret\":3}\n"));
        let back = read_dh_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, rec);
        let checks = run_checks(&back, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");

        let mut broken = rec.clone();
        broken.g = 2;
        let checks = run_checks(&broken, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(!checks[0].passed);
        assert!(checks[0].detail.contains("23"), "{}", checks[0].detail);
    }

    #[test]
    fn residual_is_zero_for_larger_moduli() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for (p, g) in [(101u64, 2u64), (997, 7), (499, 7)] {
            let p = Modulus::new(p).unwrap();
            assert!(check_primitive_root(g, p).is_ok(), "{g} mod {p}");
            for base in [2u32, 3, 7] {
                let s = rng.random_range(1..p.get() - 1);
                let inst = gen_dh_dataset(p, g, s, base, 40, &mut rng).unwrap();
                for smp in inst.samples() {
                    assert_eq!(exact_dh_residual(&inst.exponent_digits(smp.a), smp, &inst).unwrap(), 0);
                }
            }
        }
    }
}
