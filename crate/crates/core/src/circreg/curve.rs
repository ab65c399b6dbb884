use std::io::Write;

use super::{gradient, loss, AngleDataset, Selection};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Loss,
    Gradient,
    /// `1 / gradient`; points where `|gradient| < grad_floor` are reported
    /// as [`CurveValue::Clamped`].
    ReciprocalGradient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurveValue {
    Finite(f64),
    Clamped,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub s: f64,
    pub value: CurveValue,
}

/// Evaluates a curve on the full dataset at `from, from + step, ...`
/// strictly below `to`.
pub fn sample_curve(
    data: &AngleDataset,
    kind: CurveKind,
    from: f64,
    to: f64,
    step: f64,
    grad_floor: f64,
) -> Result<Vec<CurvePoint>> {
    if !(step > 0.0 && step.is_finite() && from.is_finite() && to.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bad curve range [{from}, {to}) step {step}"
        )));
    }
    let count = if to > from {
        // tolerance so that [0, 41) at 0.01 gives exactly 4100 points
        ((to - from) / step - 1e-9).ceil() as usize
    } else {
        0
    };
    (0..count)
        .map(|i| {
            let s = from + i as f64 * step;
            let value = match kind {
                CurveKind::Loss => CurveValue::Finite(loss(s, data, Selection::All)?),
                CurveKind::Gradient => CurveValue::Finite(gradient(s, data, Selection::All)?),
                CurveKind::ReciprocalGradient => {
                    let g = gradient(s, data, Selection::All)?;
                    if g.abs() < grad_floor {
                        CurveValue::Clamped
                    } else {
                        CurveValue::Finite(1.0 / g)
                    }
                }
            };
            Ok(CurvePoint { s, value })
        })
        .collect()
}

/// CSV with header `s,value`; clamped points carry the literal `inf_clamped`.
pub fn write_curve<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "value"])?;
    for pt in points {
        let value = match pt.value {
            CurveValue::Finite(v) => v.to_string(),
            CurveValue::Clamped => "inf_clamped".to_string(),
        };
        w.write_record([pt.s.to_string(), value])?;
    }
    w.flush()?;
    Ok(())
}
