//! Two-variable mean functions `Λ(s, t)` used to weight gradients by a
//! density: the trivial means, arithmetic, geometric, harmonic and
//! logarithmic means, plus user-supplied ones.
//!
//! Boundary values at `s = 0` or `t = 0` are hard-coded per mean so that no
//! `log 0` or `0/0` is ever evaluated.

use std::fmt;
use std::sync::Arc;

use crate::error::{CurvError, Result};

/// Closeness below which divided differences switch to the partial derivative.
pub const DIVIDED_DIFFERENCE_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    LeftTrivial,
    RightTrivial,
    Arithmetic,
    Geometric,
    Harmonic,
    Logarithmic,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::LeftTrivial,
        Builtin::RightTrivial,
        Builtin::Arithmetic,
        Builtin::Geometric,
        Builtin::Harmonic,
        Builtin::Logarithmic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::LeftTrivial => "left_trivial",
            Builtin::RightTrivial => "right_trivial",
            Builtin::Arithmetic => "arithmetic",
            Builtin::Geometric => "geometric",
            Builtin::Harmonic => "harmonic",
            Builtin::Logarithmic => "logarithmic",
        }
    }
}

type Eval = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Partials = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Builtin(Builtin),
    Custom {
        eval: Eval,
        partials: Option<Partials>,
        symmetric: bool,
    },
}

/// A mean function `Λ`. Cheap to clone.
#[derive(Clone)]
pub struct MeanFunction {
    name: String,
    kind: Kind,
}

impl fmt::Debug for MeanFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MeanFunction({})", self.name)
    }
}

/// Look up a built-in mean by name.
pub fn builtin_mean(name: &str) -> Result<MeanFunction> {
    Builtin::ALL
        .iter()
        .find(|b| b.name() == name)
        .map(|&b| MeanFunction::from(b))
        .ok_or_else(|| CurvError::UnknownMean(name.to_string()))
}

impl From<Builtin> for MeanFunction {
    fn from(b: Builtin) -> Self {
        MeanFunction {
            name: b.name().to_string(),
            kind: Kind::Builtin(b),
        }
    }
}

/// `(x − 1)/ln x` near `x = 1`, as a series in `y = x − 1`.
fn log_ratio_series(y: f64) -> f64 {
    1.0 + y / 2.0 - y * y / 12.0 + y.powi(3) / 24.0 - 19.0 * y.powi(4) / 720.0
}

/// Derivative of `(x − 1)/ln x`, series near `x = 1`.
fn log_ratio_derivative_series(y: f64) -> f64 {
    0.5 - y / 6.0 + y * y / 8.0 - 19.0 * y.powi(3) / 180.0
}

fn log_mean(s: f64, t: f64) -> f64 {
    if s <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let y = s / t - 1.0;
    if y.abs() < 1e-3 {
        t * log_ratio_series(y)
    } else {
        (s - t) / (s.ln() - t.ln())
    }
}

fn log_mean_partials(s: f64, t: f64) -> (f64, f64) {
    let x = s / t;
    let y = x - 1.0;
    let (g, dg) = if y.abs() < 1e-3 {
        (log_ratio_series(y), log_ratio_derivative_series(y))
    } else {
        let l = x.ln();
        (y / l, (l - y / x) / (l * l))
    };
    (dg, g - x * dg)
}

impl MeanFunction {
    /// A user-defined mean. Operator monotonicity is not verified. Without
    /// `partials`, derivatives fall back to central differences.
    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        partials: Option<Partials>,
        symmetric: bool,
    ) -> Self {
        MeanFunction {
            name: name.into(),
            kind: Kind::Custom {
                eval: Arc::new(eval),
                partials,
                symmetric,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn builtin(&self) -> Option<Builtin> {
        match self.kind {
            Kind::Builtin(b) => Some(b),
            Kind::Custom { .. } => None,
        }
    }

    pub fn symmetric(&self) -> bool {
        match &self.kind {
            Kind::Builtin(b) => !matches!(b, Builtin::LeftTrivial | Builtin::RightTrivial),
            Kind::Custom { symmetric, .. } => *symmetric,
        }
    }

    /// `Λ(s, t)` for `s, t ≥ 0`.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(b) => match b {
                Builtin::LeftTrivial => s,
                Builtin::RightTrivial => t,
                Builtin::Arithmetic => 0.5 * (s + t),
                Builtin::Geometric => {
                    if s <= 0.0 || t <= 0.0 {
                        0.0
                    } else {
                        (s * t).sqrt()
                    }
                }
                Builtin::Harmonic => {
                    if s <= 0.0 || t <= 0.0 {
                        0.0
                    } else {
                        2.0 * s * t / (s + t)
                    }
                }
                Builtin::Logarithmic => log_mean(s, t),
            },
            Kind::Custom { eval, .. } => eval(s, t),
        }
    }

    /// `h(t) = Λ(1, t)`.
    pub fn monotone_rep(&self, t: f64) -> f64 {
        self.eval(1.0, t)
    }

    /// `(∂₁Λ, ∂₂Λ)` at `s, t > 0`.
    pub fn partials(&self, s: f64, t: f64) -> Result<(f64, f64)> {
        if !(s > 0.0 && t > 0.0) {
            return Err(CurvError::Invalid(format!(
                "partials need s, t > 0 (got {s}, {t})"
            )));
        }
        Ok(match &self.kind {
            Kind::Builtin(b) => match b {
                Builtin::LeftTrivial => (1.0, 0.0),
                Builtin::RightTrivial => (0.0, 1.0),
                Builtin::Arithmetic => (0.5, 0.5),
                Builtin::Geometric => (0.5 * (t / s).sqrt(), 0.5 * (s / t).sqrt()),
                Builtin::Harmonic => {
                    let d = (s + t) * (s + t);
                    (2.0 * t * t / d, 2.0 * s * s / d)
                }
                Builtin::Logarithmic => log_mean_partials(s, t),
            },
            Kind::Custom {
                partials: Some(p), ..
            } => p(s, t),
            Kind::Custom {
                eval,
                partials: None,
                ..
            } => {
                let hs = 1e-6 * s;
                let ht = 1e-6 * t;
                (
                    (eval(s + hs, t) - eval(s - hs, t)) / (2.0 * hs),
                    (eval(s, t + ht) - eval(s, t - ht)) / (2.0 * ht),
                )
            }
        })
    }
}

/// Which argument of `Λ` varies in a divided difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
}

/// First divided difference of `Λ` in one argument with the other fixed.
/// Falls back to the partial derivative at the midpoint when the two
/// arguments are closer than [`DIVIDED_DIFFERENCE_GAP`].
pub fn divided_difference(mean: &MeanFunction, slot: Slot, a: f64, a2: f64, fixed: f64) -> f64 {
    let f = |x: f64| match slot {
        Slot::First => mean.eval(x, fixed),
        Slot::Second => mean.eval(fixed, x),
    };
    if (a - a2).abs() < DIVIDED_DIFFERENCE_GAP {
        let mid = 0.5 * (a + a2);
        let (p1, p2) = match slot {
            Slot::First => mean.partials(mid, fixed),
            Slot::Second => mean.partials(fixed, mid),
        }
        .unwrap_or((f64::NAN, f64::NAN));
        match slot {
            Slot::First => p1,
            Slot::Second => p2,
        }
    } else {
        (f(a) - f(a2)) / (a - a2)
    }
}

pub fn mean_partials(mean: &MeanFunction, s: f64, t: f64) -> Result<(f64, f64)> {
    mean.partials(s, t)
}
