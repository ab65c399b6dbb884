use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not an odd prime below 2^32")]
    InvalidModulus(u64),
    #[error("secret {secret} outside [1, {max}]")]
    SecretOutOfRange { secret: u64, max: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty index set: the objective is undefined")]
    EmptySubset,
    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("support index {index} outside [{lo}, {hi}]")]
    OutsideSupport { index: i64, lo: i64, hi: i64 },
    #[error("value {value} does not fit in {width} base-{base} digits")]
    ValueOutOfRange { value: u64, base: u32, width: usize },
    #[error("digit {digit} at position {position} is not below base {base}")]
    DigitOutOfRange { digit: u32, position: usize, base: u32 },
    #[error("sequences disagree on shape: base {0} width {1} vs base {2} width {3}")]
    ShapeMismatch(u32, usize, u32, usize),
    #[error("{g} is not a primitive root mod {p}: g^(({p}-1)/{factor}) = 1")]
    NotPrimitive { g: u64, p: u64, factor: u64 },
    #[error("expected {expected} digits, got {got}")]
    DigitCount { expected: usize, got: usize },
    #[error("factor {index} lies within {distance:.3e} of a reduction wrap point")]
    NearWrap { index: usize, distance: f64 },
    #[error("intermediate product {0:e} exceeds the exactly representable range")]
    PrecisionExhausted(f64),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A malformed record in one of the JSON Lines formats.
#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
        }
    }
}
