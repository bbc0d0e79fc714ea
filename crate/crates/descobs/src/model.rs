//! Problem data: descriptor systems, input signals, tolerance policy.

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Vector};

/// Linear time-invariant descriptor system
///
/// ```text
///     E x' = A x + B u,   y = C x,   z = K x
/// ```
///
/// with E, A of equal shape m x n (rectangular allowed, no regularity
/// assumption), B m x l, C p x n, K r x n.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSystem {
    pub name: Option<String>,
    pub e: Matrix,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub k: Matrix,
}

impl DescriptorSystem {
    pub fn new(
        name: Option<String>,
        e: Matrix,
        a: Matrix,
        b: Matrix,
        c: Matrix,
        k: Matrix,
    ) -> Result<Self> {
        let (m, n) = e.shape();
        if m == 0 || n == 0 {
            return Err(Error::DimensionError(format!(
                "E must be nonempty, got {m}x{n}"
            )));
        }
        if a.shape() != (m, n) {
            return Err(Error::DimensionError(format!(
                "A must match E ({m}x{n}), got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != m {
            return Err(Error::DimensionError(format!(
                "B must have {m} rows, got {}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::DimensionError(format!(
                "C must have {n} columns, got {}",
                c.ncols()
            )));
        }
        if k.ncols() != n {
            return Err(Error::DimensionError(format!(
                "K must have {n} columns, got {}",
                k.ncols()
            )));
        }
        for mat in [&e, &a, &b, &c, &k] {
            if !mat.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self {
            name,
            e,
            a,
            b,
            c,
            k,
        })
    }

    /// Equation count.
    pub fn m(&self) -> usize {
        self.e.nrows()
    }

    /// Semistate dimension.
    pub fn n(&self) -> usize {
        self.e.ncols()
    }

    /// Input count.
    pub fn l(&self) -> usize {
        self.b.ncols()
    }

    /// Measured output count.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Target functional count.
    pub fn r(&self) -> usize {
        self.k.nrows()
    }
}

/// One tolerance policy threaded through the whole pipeline.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TolerancePolicy {
    /// Absolute singular-value threshold replacing the default rank rule.
    pub rank_tol_override: Option<f64>,
    /// Bound on normalized certificate residuals.
    pub residual_tol: f64,
    /// Required margin: observer eigenvalues must satisfy Re < -margin.
    pub stability_margin: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            rank_tol_override: None,
            residual_tol: 1e-8,
            stability_margin: 0.0,
        }
    }
}

impl TolerancePolicy {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.rank_tol_override {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::ParseError(format!(
                    "rank tolerance must be >= 0, got {t}"
                )));
            }
        }
        if !(self.residual_tol.is_finite() && self.residual_tol > 0.0) {
            return Err(Error::ParseError(format!(
                "residual tolerance must be > 0, got {}",
                self.residual_tol
            )));
        }
        if !(self.stability_margin.is_finite() && self.stability_margin >= 0.0) {
            return Err(Error::ParseError(format!(
                "stability margin must be >= 0, got {}",
                self.stability_margin
            )));
        }
        Ok(())
    }
}

/// Scalar signal with a closed-form derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarSignal {
    /// sin(omega t)
    Sine {
        omega: f64,
    },
    /// exp(rate t)
    Exponential {
        rate: f64,
    },
    /// c0 + c1 t + c2 t^2 + ...
    Polynomial {
        coeffs: Vec<f64>,
    },
    Constant {
        value: f64,
    },
    Sum(Vec<ScalarSignal>),
    Scaled {
        factor: f64,
        inner: Box<ScalarSignal>,
    },
}

impl ScalarSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Sine { omega } => (omega * t).sin(),
            Self::Exponential { rate } => (rate * t).exp(),
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            Self::Constant { value } => *value,
            Self::Sum(parts) => parts.iter().map(|s| s.eval(t)).sum(),
            Self::Scaled { factor, inner } => factor * inner.eval(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Self::Sine { omega } => omega * (omega * t).cos(),
            Self::Exponential { rate } => rate * (rate * t).exp(),
            Self::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for (i, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * t + i as f64 * c;
                }
                acc
            }
            Self::Constant { .. } => 0.0,
            Self::Sum(parts) => parts.iter().map(|s| s.derivative(t)).sum(),
            Self::Scaled { factor, inner } => factor * inner.derivative(t),
        }
    }
}

/// Vector-valued signal: one scalar component per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    components: Vec<ScalarSignal>,
}

impl Signal {
    pub fn new(components: Vec<ScalarSignal>) -> Self {
        Self { components }
    }

    /// All-zero signal of the given dimension.
    pub fn zero(dimension: usize) -> Self {
        Self {
            components: vec![ScalarSignal::Constant { value: 0.0 }; dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, t: f64) -> Vector {
        Vector::from_iterator(
            self.components.len(),
            self.components.iter().map(|s| s.eval(t)),
        )
    }

    pub fn derivative(&self, t: f64) -> Vector {
        Vector::from_iterator(
            self.components.len(),
            self.components.iter().map(|s| s.derivative(t)),
        )
    }
}

/// Parses the input mini-grammar: comma-joined components, each one of
/// `sin(a*t)`, `exp(a*t)`, `poly(c0,c1,...)`, `const(c)`. `sin(t)` and
/// `exp(t)` abbreviate a = 1.
pub fn parse_signal_spec(spec: &str) -> Result<Signal> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Signal::new(Vec::new()));
    }
    let mut components = Vec::new();
    for part in split_top_level(spec)? {
        components.push(parse_component(part.trim())?);
    }
    Ok(Signal::new(components))
}

fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::ParseError(format!("unbalanced ')' in signal '{s}'")))?;
            }
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::ParseError(format!("unbalanced '(' in signal '{s}'")));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn parse_component(part: &str) -> Result<ScalarSignal> {
    let open = part
        .find('(')
        .ok_or_else(|| Error::ParseError(format!("expected kind(args), got '{part}'")))?;
    if !part.ends_with(')') {
        return Err(Error::ParseError(format!("missing ')' in '{part}'")));
    }
    let kind = part[..open].trim();
    let args = &part[open + 1..part.len() - 1];
    match kind {
        "sin" => Ok(ScalarSignal::Sine {
            omega: parse_rate(args, part)?,
        }),
        "exp" => Ok(ScalarSignal::Exponential {
            rate: parse_rate(args, part)?,
        }),
        "poly" => {
            let coeffs = args
                .split(',')
                .map(|c| parse_number(c.trim(), part))
                .collect::<Result<Vec<f64>>>()?;
            if coeffs.is_empty() {
                return Err(Error::ParseError(format!(
                    "poly needs coefficients in '{part}'"
                )));
            }
            Ok(ScalarSignal::Polynomial { coeffs })
        }
        "const" => Ok(ScalarSignal::Constant {
            value: parse_number(args.trim(), part)?,
        }),
        other => Err(Error::ParseError(format!(
            "unknown signal kind '{other}' (expected sin, exp, poly, const)"
        ))),
    }
}

/// Accepts `t`, `a*t`, or a bare number `a` meaning `a*t`.
fn parse_rate(args: &str, ctx: &str) -> Result<f64> {
    let args = args.trim();
    if args == "t" {
        return Ok(1.0);
    }
    let head = args.strip_suffix("*t").unwrap_or(args).trim();
    parse_number(head, ctx)
}

fn parse_number(s: &str, ctx: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::ParseError(format!("bad number '{s}' in '{ctx}'")))?;
    if !v.is_finite() {
        return Err(Error::ParseError(format!("non-finite number in '{ctx}'")));
    }
    Ok(v)
}
