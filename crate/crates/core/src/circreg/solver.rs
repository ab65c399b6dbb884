use std::io::Write;

use rand::seq::index;
use rand::Rng;

use super::{loss, step, to_angles, AngleDataset, Selection};
use crate::modnum::{centered_residue, LweSamples, Modulus};
use crate::{Error, Result};

/// Lower bound applied to `|gradient|` before taking its reciprocal.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// `s += η·d`
    Plain,
    /// `s += η/d`
    Reciprocal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform integer in `[0, p-1]`.
    RandomInteger,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HaltMode {
    /// Round every iterate and check residuals against the data.
    VerifyRounding,
    /// Stop once the full-data loss is within `ε` of `-m`, then verify.
    LossTolerance(f64),
    /// Only round and verify iterates whose full-data loss is `<= -m/2`.
    RelaxedHalfM,
}

/// Acceptance rule for a candidate secret: at least `fraction` of the
/// checked samples must have `|a·s - b mod p| <= threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyPolicy {
    pub threshold: u64,
    pub fraction: f64,
    pub subset_size: usize,
}

impl VerifyPolicy {
    pub const DEFAULT_SUBSET: usize = 1024;

    /// `threshold = ceil(4σ)` and `fraction = 0.95`; noiseless data is
    /// checked exactly.
    pub fn for_sigma(sigma: f64) -> Self {
        if sigma == 0.0 {
            return VerifyPolicy {
                threshold: 0,
                fraction: 1.0,
                subset_size: Self::DEFAULT_SUBSET,
            };
        }
        VerifyPolicy {
            threshold: (4.0 * sigma).ceil() as u64,
            fraction: 0.95,
            subset_size: Self::DEFAULT_SUBSET,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionConfig {
    pub eta: f64,
    pub batch_size: usize,
    /// `None` means `p` steps.
    pub max_steps: Option<usize>,
    pub variant: Variant,
    pub init: Init,
    /// `None` derives the policy from the dataset's sigma.
    pub verify: Option<VerifyPolicy>,
    pub grad_floor: f64,
    pub halt: HaltMode,
    pub record_trace: bool,
}

impl RegressionConfig {
    /// Reciprocal-gradient descent from a random integer, halting on
    /// verification.
    pub fn new(eta: f64, batch_size: usize) -> Self {
        RegressionConfig {
            eta,
            batch_size,
            max_steps: None,
            variant: Variant::Reciprocal,
            init: Init::RandomInteger,
            verify: None,
            grad_floor: DEFAULT_GRAD_FLOOR,
            halt: HaltMode::VerifyRounding,
            record_trace: false,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_steps(mut self, steps: usize) -> Self {
        self.max_steps = Some(steps);
        self
    }

    pub fn with_verify(mut self, policy: VerifyPolicy) -> Self {
        self.verify = Some(policy);
        self
    }

    pub fn with_halt(mut self, halt: HaltMode) -> Self {
        self.halt = halt;
        self
    }

    pub fn with_grad_floor(mut self, floor: f64) -> Self {
        self.grad_floor = floor;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.eta));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive".into());
        }
        if !(self.grad_floor > 0.0 && self.grad_floor.is_finite()) {
            return bad(format!("grad_floor {} must be positive", self.grad_floor));
        }
        if let Init::Fixed(s0) = self.init {
            if !s0.is_finite() {
                return bad("initial guess must be finite".into());
            }
        }
        if let HaltMode::LossTolerance(eps) = self.halt {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad(format!("loss tolerance {eps} must be positive"));
            }
        }
        if let Some(v) = self.verify {
            if !(v.fraction > 0.0 && v.fraction <= 1.0) {
                return bad(format!("verify fraction {} outside (0, 1]", v.fraction));
            }
            if v.subset_size == 0 {
                return bad("verification subset must be nonempty".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub s: f64,
    /// Loss of the batch used at this step, evaluated at `s`. Step 0 uses
    /// the full dataset.
    pub batch_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionResult {
    pub success: bool,
    /// Step at which the run terminated; 0 means the initial guess.
    pub steps_taken: usize,
    pub success_at_init: bool,
    /// Last iterate, reduced into `[0, p)`.
    pub final_s: f64,
    pub recovered_secret: u64,
    pub trace: Option<Vec<TraceEntry>>,
}

/// The unique integer in `(s - 1/2, s + 1/2]`.
pub fn round_half_up(s: f64) -> i64 {
    (s + 0.5).floor() as i64
}

/// Checks a candidate against an evenly strided subset of
/// `min(m, subset_size)` samples.
pub fn verify_candidate(candidate: i64, data: &LweSamples, policy: &VerifyPolicy) -> bool {
    let p = data.modulus();
    let samples = data.samples();
    let m = samples.len();
    let n = m.min(policy.subset_size);
    if n == 0 {
        return false;
    }
    let s = p.reduce(candidate) as i64;
    let close = (0..n)
        .map(|i| &samples[i * m / n])
        .filter(|x| {
            let r = centered_residue(mod_mul(x.a, s as u64, p) as i64 - x.b as i64, p);
            r.unsigned_abs() <= policy.threshold
        })
        .count();
    close as f64 >= policy.fraction * n as f64
}

#[inline]
fn mod_mul(a: u64, b: u64, p: Modulus) -> u64 {
    a * b % p.get()
}

/// Runs circular regression on public samples until a rounded iterate
/// verifies or the step budget runs out.
///
/// The initial guess is checked before any update, so a lucky start
/// succeeds at step 0. Iterates are kept in `[0, p)`; the loss is periodic
/// in `s` with period `p`, so this does not change the trajectory.
pub fn solve<R: Rng + ?Sized>(data: &LweSamples, cfg: &RegressionConfig, rng: &mut R) -> Result<RegressionResult> {
    cfg.validate()?;
    let p = data.modulus();
    let pf = p.get() as f64;
    let m = data.len();
    let k = cfg.batch_size.min(m);
    let max_steps = cfg.max_steps.unwrap_or(p.get() as usize);
    let policy = cfg.verify.unwrap_or_else(|| VerifyPolicy::for_sigma(data.sigma()));
    let angles = to_angles(data);

    let mut s = match cfg.init {
        Init::RandomInteger => rng.random_range(0..p.get()) as f64,
        Init::Fixed(s0) => s0.rem_euclid(pf),
    };
    let mut trace = cfg.record_trace.then(Vec::new);
    if let Some(t) = trace.as_mut() {
        t.push(TraceEntry {
            step: 0,
            s,
            batch_loss: loss(s, &angles, Selection::All)?,
        });
    }

    let finish = |success: bool, step: usize, s: f64, trace: Option<Vec<TraceEntry>>| RegressionResult {
        success,
        steps_taken: step,
        success_at_init: success && step == 0,
        final_s: s,
        recovered_secret: p.reduce(round_half_up(s)),
        trace,
    };

    let mut batch = Vec::with_capacity(k);
    for t in 0..=max_steps {
        if t > 0 {
            let sel = if k >= m {
                Selection::All
            } else {
                batch.clear();
                batch.extend(index::sample(rng, m, k).iter());
                Selection::Indices(&batch)
            };
            s = step(s, &angles, sel, cfg)?.rem_euclid(pf);
            // rem_euclid can round up to exactly p
            if s >= pf {
                s = 0.0;
            }
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceEntry {
                    step: t,
                    s,
                    batch_loss: loss(s, &angles, sel)?,
                });
            }
        }
        match halt_check(s, &angles, data, &policy, cfg.halt)? {
            Halt::Continue => {}
            Halt::Stop(verified) => return Ok(finish(verified, t, s, trace)),
        }
    }
    Ok(finish(false, max_steps, s, trace))
}

enum Halt {
    Continue,
    Stop(bool),
}

fn halt_check(s: f64, angles: &AngleDataset, data: &LweSamples, policy: &VerifyPolicy, mode: HaltMode) -> Result<Halt> {
    let verified = || verify_candidate(round_half_up(s), data, policy);
    let m = data.len() as f64;
    Ok(match mode {
        HaltMode::VerifyRounding => {
            if verified() {
                Halt::Stop(true)
            } else {
                Halt::Continue
            }
        }
        HaltMode::LossTolerance(eps) => {
            if loss(s, angles, Selection::All)? <= -m + eps {
                Halt::Stop(verified())
            } else {
                Halt::Continue
            }
        }
        HaltMode::RelaxedHalfM => {
            if loss(s, angles, Selection::All)? <= -m / 2.0 && verified() {
                Halt::Stop(true)
            } else {
                Halt::Continue
            }
        }
    })
}

/// Writes a trace as CSV with header `step,s_t,batch_loss`.
pub fn write_trace<W: Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "s_t", "batch_loss"])?;
    for e in trace {
        w.write_record([e.step.to_string(), e.s.to_string(), e.batch_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
