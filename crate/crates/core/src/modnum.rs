//! Prime moduli, exact modular arithmetic, discrete Gaussian noise and
//! one-dimensional LWE datasets `b = a·s + e (mod p)`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, ParseError, Result};

/// Largest modulus accepted; primality is decided by trial division.
pub const MAX_MODULUS: u64 = 1 << 32;

/// An odd prime `p` with `3 <= p < 2^32`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Modulus(u64);

impl Modulus {
    pub fn new(p: u64) -> Result<Self> {
        if (3..MAX_MODULUS).contains(&p) && is_prime(p) {
            Ok(Modulus(p))
        } else {
            Err(Error::InvalidModulus(p))
        }
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    /// Representative of `x` in `[0, p)`.
    #[inline]
    pub fn reduce(self, x: i64) -> u64 {
        x.rem_euclid(self.0 as i64) as u64
    }
}

impl std::fmt::Display for Modulus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Deterministic trial division up to `sqrt(n)`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Distinct prime factors of `n` in ascending order, by trial division.
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// `base^exp mod p` by square-and-multiply. Negative bases are reduced first.
pub fn mod_pow(base: i64, mut exp: u64, p: Modulus) -> u64 {
    let m = p.get();
    let mut acc = 1 % m;
    let mut sq = p.reduce(base);
    // p < 2^32 keeps every product below 2^64.
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * sq % m;
        }
        sq = sq * sq % m;
        exp >>= 1;
    }
    acc
}

/// The representative of `x mod p` in `(-p/2, p/2]`.
pub fn centered_residue(x: i64, p: Modulus) -> i64 {
    let m = p.get() as i64;
    let r = x.rem_euclid(m);
    if 2 * r > m {
        r - m
    } else {
        r
    }
}

/// Integer noise obtained by rounding a centered normal draw with standard
/// deviation `sigma`. `sigma == 0` always yields 0 and consumes no randomness.
pub fn sample_discrete_gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> i64 {
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be finite and >= 0");
    if sigma == 0.0 {
        return 0;
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    normal.sample(rng).round() as i64
}

/// One observation `(a, b)` with `a` in `[1, p-1]` and `b` in `[0, p-1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub a: u64,
    pub b: u64,
}

impl Sample {
    pub fn new(a: u64, b: u64, p: Modulus) -> Result<Self> {
        if a == 0 || a >= p.get() || b >= p.get() {
            return Err(Error::InvalidConfig(format!(
                "sample ({a}, {b}) not reduced modulo {p} with a != 0"
            )));
        }
        Ok(Sample { a, b })
    }
}

/// The information available to an attacker: modulus, noise width and the
/// samples. Solvers only ever see this view.
#[derive(Clone, Debug, PartialEq)]
pub struct LweSamples {
    modulus: Modulus,
    sigma: f64,
    samples: Vec<Sample>,
}

impl LweSamples {
    pub fn new(modulus: Modulus, sigma: f64, samples: Vec<Sample>) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma {sigma} must be finite and >= 0")));
        }
        if samples.is_empty() {
            return Err(Error::InvalidConfig("a dataset needs at least one sample".into()));
        }
        for s in &samples {
            Sample::new(s.a, s.b, modulus)?;
        }
        Ok(LweSamples {
            modulus,
            sigma,
            samples,
        })
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Number of samples `m`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// An LWE dataset together with evaluation-only metadata.
///
/// The true secret is kept apart from the public samples; pass
/// [`Dataset::public`] to solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    public: LweSamples,
    secret: Option<u64>,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(public: LweSamples, secret: Option<u64>, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = secret {
            check_secret(s, public.modulus)?;
        }
        Ok(Dataset { public, secret, seed })
    }

    pub fn public(&self) -> &LweSamples {
        &self.public
    }

    pub fn into_public(self) -> LweSamples {
        self.public
    }

    /// Held-aside secret, for evaluation only.
    pub fn secret(&self) -> Option<u64> {
        self.secret
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn set_seed(&mut self, seed: Option<u64>) {
        self.seed = seed;
    }

    pub fn modulus(&self) -> Modulus {
        self.public.modulus
    }

    pub fn sigma(&self) -> f64 {
        self.public.sigma
    }

    pub fn samples(&self) -> &[Sample] {
        &self.public.samples
    }

    pub fn len(&self) -> usize {
        self.public.len()
    }

    pub fn is_empty(&self) -> bool {
        self.public.is_empty()
    }
}

fn check_secret(s: u64, p: Modulus) -> Result<()> {
    if s == 0 || s >= p.get() {
        return Err(Error::SecretOutOfRange {
            secret: s,
            max: p.get() - 1,
        });
    }
    Ok(())
}

/// One sample for every `a` in `1..p`, with `b = a·s + e mod p` and fresh
/// noise `e` per sample. The noise values are not retained.
pub fn gen_dataset<R: Rng + ?Sized>(p: Modulus, s: u64, sigma: f64, rng: &mut R) -> Result<Dataset> {
    check_secret(s, p)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma {sigma} must be finite and >= 0")));
    }
    let m = p.get();
    let samples = (1..m)
        .map(|a| {
            let e = sample_discrete_gaussian(sigma, rng);
            let b = p.reduce((a * s % m) as i64 + e);
            Sample { a, b }
        })
        .collect();
    Ok(Dataset {
        public: LweSamples {
            modulus: p,
            sigma,
            samples,
        },
        secret: Some(s),
        seed: None,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    p: u64,
    sigma: f64,
    m: usize,
    secret: Option<u64>,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    a: u64,
    b: u64,
}

/// Writes the JSON Lines dataset format: one meta object, then one
/// `{"a":..,"b":..}` object per sample.
pub fn write_dataset<W: Write>(d: &Dataset, mut out: W) -> Result<()> {
    let meta = MetaLine {
        p: d.modulus().get(),
        sigma: d.sigma(),
        m: d.len(),
        secret: d.secret,
        seed: d.seed,
    };
    serde_json::to_writer(&mut out, &meta).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for s in d.samples() {
        serde_json::to_writer(&mut out, &SampleLine { a: s.a, b: s.b }).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses the format produced by [`write_dataset`]. Every error carries the
/// 1-based line number it was detected on.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = JsonLines::new(input);
    let (line_no, meta): (usize, MetaLine) = lines
        .next_record()?
        .ok_or_else(|| ParseError::new(1, "missing meta line"))?;
    let p = Modulus::new(meta.p).map_err(|e| ParseError::new(line_no, e.to_string()))?;
    if !(meta.sigma >= 0.0 && meta.sigma.is_finite()) {
        return Err(ParseError::new(line_no, format!("sigma {} must be finite and >= 0", meta.sigma)).into());
    }
    if meta.m == 0 {
        return Err(ParseError::new(line_no, "m must be positive").into());
    }
    if let Some(s) = meta.secret {
        check_secret(s, p).map_err(|e| ParseError::new(line_no, e.to_string()))?;
    }
    let mut samples = Vec::with_capacity(meta.m.min(1 << 20));
    while let Some((n, line)) = lines.next_record::<SampleLine>()? {
        if samples.len() == meta.m {
            return Err(ParseError::new(n, format!("more than m = {} samples", meta.m)).into());
        }
        let s = Sample::new(line.a, line.b, p).map_err(|e| ParseError::new(n, e.to_string()))?;
        samples.push(s);
    }
    if samples.len() != meta.m {
        return Err(ParseError::new(
            lines.line_no() + 1,
            format!("expected m = {} samples, found {}", meta.m, samples.len()),
        )
        .into());
    }
    Ok(Dataset {
        public: LweSamples {
            modulus: p,
            sigma: meta.sigma,
            samples,
        },
        secret: meta.secret,
        seed: meta.seed,
    })
}

/// Line-numbered JSON Lines reader shared by the crate's file formats.
/// A single trailing empty line is tolerated; blank lines elsewhere are not.
pub(crate) struct JsonLines<R> {
    input: R,
    line_no: usize,
    buf: String,
    pending_blank: Option<usize>,
}

impl<R: BufRead> JsonLines<R> {
    pub(crate) fn new(input: R) -> Self {
        JsonLines {
            input,
            line_no: 0,
            buf: String::new(),
            pending_blank: None,
        }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.line_no
    }

    pub(crate) fn next_record<T: serde::de::DeserializeOwned>(&mut self) -> Result<Option<(usize, T)>> {
        loop {
            self.buf.clear();
            let read = self
                .input
                .read_line(&mut self.buf)
                .map_err(|e| ParseError::new(self.line_no + 1, e.to_string()))?;
            if read == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let text = self.buf.strip_suffix('\n').unwrap_or(&self.buf);
            if text.is_empty() {
                if self.pending_blank.is_none() {
                    self.pending_blank = Some(self.line_no);
                }
                continue;
            }
            if let Some(blank) = self.pending_blank {
                return Err(ParseError::new(blank, "blank line inside data").into());
            }
            let value = serde_json::from_str(text).map_err(|e| ParseError::new(self.line_no, e.to_string()))?;
            return Ok(Some((self.line_no, value)));
        }
    }
}
