//! Fixed-width base-B digit sequences and the metrics used to score
//! predicted sequences against ground truth.
//!
//! Digits are stored most significant first and zero-padded to the width
//! `t = width_for(p, B)` shared by inputs and outputs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::modnum::JsonLines;
use crate::{Error, ParseError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    base: u32,
    digits: Vec<u32>,
}

/// Smallest `t` with `B^t > p - 1`, i.e. enough digits for every residue.
pub fn width_for(p: u64, base: u32) -> Result<usize> {
    if p < 2 || base < 2 {
        return Err(Error::InvalidConfig(format!(
            "width_for needs p >= 2 and base >= 2, got ({p}, {base})"
        )));
    }
    let mut t = 0;
    let mut reach: u128 = 1;
    while reach <= (p - 1) as u128 {
        reach *= base as u128;
        t += 1;
    }
    Ok(t.max(1))
}

/// Positional expansion of `x`, most significant digit first.
pub fn encode(x: u64, base: u32, width: usize) -> Result<TokenSequence> {
    if base < 2 || width == 0 {
        return Err(Error::InvalidConfig(format!("base {base} width {width}")));
    }
    let mut digits = vec![0u32; width];
    let mut rest = x;
    for slot in digits.iter_mut().rev() {
        *slot = (rest % base as u64) as u32;
        rest /= base as u64;
    }
    if rest != 0 {
        return Err(Error::ValueOutOfRange { value: x, base, width });
    }
    Ok(TokenSequence { base, digits })
}

impl TokenSequence {
    /// Validates every digit against `base`.
    pub fn new(base: u32, digits: Vec<u32>) -> Result<Self> {
        if base < 2 || digits.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "base {base} with {} digits",
                digits.len()
            )));
        }
        if let Some((position, &digit)) = digits.iter().enumerate().find(|(_, &d)| d >= base) {
            return Err(Error::DigitOutOfRange { digit, position, base });
        }
        Ok(TokenSequence { base, digits })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn width(&self) -> usize {
        self.digits.len()
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    /// `Σ digits[j]·B^(t-1-j)`. Widths whose value could exceed `u64` are
    /// rejected.
    pub fn decode(&self) -> Result<u64> {
        self.digits.iter().try_fold(0u64, |acc, &d| {
            acc.checked_mul(self.base as u64)
                .and_then(|v| v.checked_add(d as u64))
                .ok_or_else(|| Error::InvalidConfig(format!("{} base-{} digits overflow u64", self.width(), self.base)))
        })
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.base != other.base || self.width() != other.width() {
            return Err(Error::ShapeMismatch(self.base, self.width(), other.base, other.width()));
        }
        Ok(())
    }
}

/// Free-function form of [`TokenSequence::decode`].
pub fn decode(seq: &TokenSequence) -> Result<u64> {
    seq.decode()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArithmeticDifference {
    pub raw: u64,
    /// `raw / p`, when a modulus was supplied.
    pub normalized: Option<f64>,
}

/// Absolute difference of the decoded values.
pub fn arithmetic_difference(
    pred: &TokenSequence,
    truth: &TokenSequence,
    p: Option<u64>,
) -> Result<ArithmeticDifference> {
    pred.same_shape(truth)?;
    let raw = pred.decode()?.abs_diff(truth.decode()?);
    Ok(ArithmeticDifference {
        raw,
        normalized: p.map(|p| raw as f64 / p as f64),
    })
}

/// Fraction of pairs whose sequences agree on every token.
pub fn exact_match_accuracy<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a TokenSequence, &'a TokenSequence)>,
{
    let (mut hits, mut total) = (0usize, 0usize);
    for (pred, truth) in pairs {
        pred.same_shape(truth)?;
        hits += (pred == truth) as usize;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptySubset);
    }
    Ok(hits as f64 / total as f64)
}

/// One scored prediction from a pair file.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionPair {
    pub a: u64,
    pub pred: TokenSequence,
    pub truth: TokenSequence,
}

/// Contents of a prediction-pair file.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFile {
    pub p: u64,
    pub base: u32,
    pub width: usize,
    pub pairs: Vec<PredictionPair>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairMeta {
    p: u64,
    base: u32,
    width: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    a: u64,
    pred_digits: Vec<u32>,
    true_digits: Vec<u32>,
}

pub fn read_pairs<R: BufRead>(input: R) -> Result<PairFile> {
    let mut lines = JsonLines::new(input);
    let (meta_line, meta): (usize, PairMeta) = lines
        .next_record()?
        .ok_or_else(|| ParseError::new(1, "missing meta line"))?;
    if meta.p < 2 || meta.base < 2 || meta.width == 0 || meta.width > 64 {
        return Err(ParseError::new(meta_line, "meta needs p >= 2, base >= 2 and 1 <= width <= 64").into());
    }
    let mut pairs = Vec::new();
    while let Some((n, line)) = lines.next_record::<PairLine>()? {
        let seq = |digits: Vec<u32>, what: &str| -> Result<TokenSequence> {
            if digits.len() != meta.width {
                return Err(ParseError::new(
                    n,
                    format!("{what} has {} digits, expected {}", digits.len(), meta.width),
                )
                .into());
            }
            TokenSequence::new(meta.base, digits).map_err(|e| ParseError::new(n, format!("{what}: {e}")).into())
        };
        pairs.push(PredictionPair {
            a: line.a,
            pred: seq(line.pred_digits, "pred_digits")?,
            truth: seq(line.true_digits, "true_digits")?,
        });
    }
    Ok(PairFile {
        p: meta.p,
        base: meta.base,
        width: meta.width,
        pairs,
    })
}

pub fn write_pairs<W: Write>(file: &PairFile, mut out: W) -> Result<()> {
    let meta = PairMeta {
        p: file.p,
        base: file.base,
        width: file.width,
    };
    serde_json::to_writer(&mut out, &meta).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for pair in &file.pairs {
        let line = PairLine {
            a: pair.a,
            pred_digits: pair.pred.digits.clone(),
            true_digits: pair.truth.digits.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Aggregate scores over a pair file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairMetrics {
    pub count: usize,
    pub exact_match: f64,
    pub mean_difference: f64,
    pub mean_normalized_difference: f64,
    pub max_difference: u64,
}

pub fn score_pairs(file: &PairFile) -> Result<PairMetrics> {
    let exact_match = exact_match_accuracy(file.pairs.iter().map(|p| (&p.pred, &p.truth)))?;
    let mut sum = 0u128;
    let mut max = 0u64;
    for pair in &file.pairs {
        let d = arithmetic_difference(&pair.pred, &pair.truth, None)?.raw;
        sum += d as u128;
        max = max.max(d);
    }
    let n = file.pairs.len() as f64;
    let mean = sum as f64 / n;
    Ok(PairMetrics {
        count: file.pairs.len(),
        exact_match,
        mean_difference: mean,
        mean_normalized_difference: mean / file.p as f64,
        max_difference: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(base: u32, digits: &[u32]) -> TokenSequence {
        TokenSequence::new(base, digits.to_vec()).unwrap()
    }

    #[test]
    fn widths() {
        assert_eq!(width_for(251, 7).unwrap(), 3);
        assert_eq!(width_for(97, 9).unwrap(), 3);
        assert_eq!(width_for(8, 8).unwrap(), 1);
        assert_eq!(width_for(2, 2).unwrap(), 1);
        assert_eq!(width_for(23, 2).unwrap(), 5);
        assert!(width_for(1, 7).is_err());
        assert!(width_for(41, 1).is_err());
    }

    #[test]
    fn worked_instance_digits() {
        assert_eq!(encode(216, 7, 3).unwrap().digits(), &[4, 2, 6]);
        assert_eq!(encode(146, 7, 3).unwrap().digits(), &[2, 6, 6]);
        assert_eq!(encode(0, 7, 3).unwrap().digits(), &[0, 0, 0]);
        assert_eq!(seq(7, &[2, 6, 6]).decode().unwrap(), 146);
        assert_eq!(seq(7, &[0, 0, 0]).decode().unwrap(), 0);
    }

    #[test]
    fn encode_rejects_values_that_do_not_fit() {
        assert!(matches!(encode(343, 7, 3), Err(Error::ValueOutOfRange { .. })));
        assert!(encode(342, 7, 3).is_ok());
    }

    #[test]
    fn digits_must_be_below_base() {
        assert!(matches!(
            TokenSequence::new(7, vec![1, 7, 0]),
            Err(Error::DigitOutOfRange {
                digit: 7,
                position: 1,
                base: 7
            })
        ));
    }

    #[test]
    fn exhaustive_roundtrip() {
        for base in [7u32, 8, 9, 11] {
            for width in 1..=4usize {
                for x in 0..(base as u64).pow(width as u32) {
                    assert_eq!(encode(x, base, width).unwrap().decode().unwrap(), x);
                }
            }
        }
    }

    #[test]
    fn contrast_predictions() {
        let truth = seq(7, &[2, 6, 6]);
        let near = arithmetic_difference(&seq(7, &[2, 6, 3]), &truth, None).unwrap();
        let far = arithmetic_difference(&seq(7, &[3, 6, 6]), &truth, Some(251)).unwrap();
        assert_eq!(near.raw, 3);
        assert_eq!(far.raw, 49);
        assert!((far.normalized.unwrap() - 49.0 / 251.0).abs() < 1e-15);
        assert_eq!(arithmetic_difference(&truth, &truth, None).unwrap().raw, 0);
        assert!(matches!(
            arithmetic_difference(&seq(7, &[2, 6]), &truth, None),
            Err(Error::ShapeMismatch(..))
        ));
        assert!(arithmetic_difference(&seq(8, &[2, 6, 6]), &truth, None).is_err());
    }

    #[test]
    fn accuracy_fractions() {
        let a = seq(7, &[1, 2, 3]);
        let b = seq(7, &[1, 2, 4]);
        assert_eq!(exact_match_accuracy([(&a, &a), (&b, &b)]).unwrap(), 1.0);
        assert_eq!(exact_match_accuracy([(&a, &b), (&b, &a)]).unwrap(), 0.0);
        assert_eq!(
            exact_match_accuracy([(&a, &a), (&a, &b), (&b, &a), (&a, &b)]).unwrap(),
            0.25
        );
        assert!(matches!(
            exact_match_accuracy(std::iter::empty()),
            Err(Error::EmptySubset)
        ));
    }

    #[test]
    fn pair_file_roundtrip_and_scores() {
        let file = PairFile {
            p: 251,
            base: 7,
            width: 3,
            pairs: vec![
                PredictionPair {
                    a: 216,
                    pred: seq(7, &[2, 6, 3]),
                    truth: seq(7, &[2, 6, 6]),
                },
                PredictionPair {
                    a: 1,
                    pred: seq(7, &[0, 0, 3]),
                    truth: seq(7, &[0, 0, 3]),
                },
            ],
        };
        let mut buf = Vec::new();
        write_pairs(&file, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "{\"p\":251,\"base\":7,\"width\":3}\n{\"a\":216,\"pred_digits\":[2,6,3],\"true_digits\":[2,6,6]}\n"
        ));
        let back = read_pairs(buf.as_slice()).unwrap();
        assert_eq!(back, file);
        let m = score_pairs(&back).unwrap();
        assert_eq!(m.count, 2);
        assert_eq!(m.exact_match, 0.5);
        assert_eq!(m.mean_difference, 1.5);
        assert_eq!(m.max_difference, 3);
    }

    #[test]
    fn pair_file_errors_name_the_line() {
        let cases = [
            ("{\"p\":251,\"base\":7,\"width\":3}\n{\"a\":1,\"pred_digits\":[0,0],\"true_digits\":[0,0,1]}\n", 2),
            ("{\"p\":251,\"base\":7,\"width\":3}\n{\"a\":1,\"pred_digits\":[0,0,1],\"true_digits\":[0,0,1]}\n{\"a\":1,\"pred_digits\":[0,0,9],\"true_digits\":[0,0,1]}\n", 3),
            ("{\"p\":251,\"base\":1,\"width\":3}\n", 1),
        ];
        for (text, line) in cases {
            match read_pairs(text.as_bytes()) {
                Err(Error::Parse(e)) => assert_eq!(e.line, line),
                other => panic!("{other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn difference_is_a_bounded_symmetric_distance(
            base in 2u32..16,
            width in 1usize..5,
            x in any::<u64>(),
            y in any::<u64>(),
        ) {
            let cap = (base as u64).pow(width as u32);
            let (x, y) = (x % cap, y % cap);
            let (ex, ey) = (encode(x, base, width).unwrap(), encode(y, base, width).unwrap());
            let d = arithmetic_difference(&ex, &ey, None).unwrap().raw;
            prop_assert_eq!(d, arithmetic_difference(&ey, &ex, None).unwrap().raw);
            prop_assert_eq!(d == 0, ex == ey);
            prop_assert!(d < cap);
        }

        #[test]
        fn normalized_difference_is_below_one(p in 2u64..5000, base in 2u32..12, x in any::<u64>(), y in any::<u64>()) {
            let t = width_for(p, base).unwrap();
            let (x, y) = (x % p, y % p);
            let d = arithmetic_difference(&encode(x, base, t).unwrap(), &encode(y, base, t).unwrap(), Some(p)).unwrap();
            let n = d.normalized.unwrap();
            prop_assert!((0.0..1.0).contains(&n));
        }
    }
}
