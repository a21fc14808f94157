//! Dense univariate and sparse multivariate polynomials with `f64`
//! coefficients, used as exact test functions for the smooth calculus.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Degree cap for univariate polynomials.
pub const MAX_DEGREE: usize = 16;
/// Total-degree cap for multivariate polynomials.
pub const MAX_TOTAL_DEGREE: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("polynomial degree {degree} exceeds the cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("expected {expected} variables, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("composite polynomial must vanish at the origin, constant term is {0}")]
    NonzeroConstant(f64),
    #[error("cannot parse polynomial `{input}`: {msg}")]
    Parse { input: String, msg: String },
}

/// Coefficients in ascending degree, trailing zeros trimmed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnivariatePoly {
    coeffs: Vec<f64>,
}

impl UnivariatePoly {
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self, PolyError> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(PolyError::NonFinite);
        }
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        let p = Self { coeffs };
        p.checked()
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::raw(vec![c])
    }

    /// The identity polynomial `x`.
    pub fn x() -> Self {
        Self::raw(vec![0.0, 1.0])
    }

    pub fn monomial(c: f64, k: usize) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        Self::raw(v)
    }

    fn raw(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    /// Rejects results whose degree exceeds [`MAX_DEGREE`].
    pub fn checked(self) -> Result<Self, PolyError> {
        match self.degree() {
            Some(d) if d > MAX_DEGREE => Err(PolyError::DegreeOverflow {
                degree: d,
                cap: MAX_DEGREE,
            }),
            _ => Ok(self),
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::raw(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::raw(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(0.0)
                        + other.coeffs.get(k).copied().unwrap_or(0.0)
                })
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::raw(self.coeffs.iter().map(|v| c * v).collect())
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero());
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::raw(out).checked()
    }

    pub fn pow(&self, k: u32) -> Result<Self, PolyError> {
        let mut acc = Self::constant(1.0);
        for _ in 0..k {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Real roots of the polynomial via companion-matrix eigenvalues.
    pub fn real_roots(&self) -> Vec<f64> {
        let Some(d) = self.degree() else {
            return Vec::new();
        };
        if d == 0 {
            return Vec::new();
        }
        let lead = self.coeffs[d];
        let mut companion = nalgebra::DMatrix::<f64>::zeros(d, d);
        for i in 1..d {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..d {
            companion[(i, d - 1)] = -self.coeffs[i] / lead;
        }
        let mut roots: Vec<f64> = companion
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-8 * (1.0 + z.re.abs()))
            .map(|z| z.re)
            .collect();
        roots.sort_by(f64::total_cmp);
        roots
    }
}

impl fmt::Display for UnivariatePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &raw) in self.coeffs.iter().enumerate() {
            if raw == 0.0 {
                continue;
            }
            let c = if first {
                raw
            } else {
                write!(f, "{}", if raw < 0.0 { " - " } else { " + " })?;
                raw.abs()
            };
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}*x")?,
                _ => write!(f, "{c}*x^{k}")?,
            }
        }
        Ok(())
    }
}

/// One signed product term: coefficient and `(variable, power)` factors.
type Term = (f64, Vec<(String, u32)>);

fn parse_terms(input: &str) -> Result<Vec<Term>, PolyError> {
    let err = |msg: &str| PolyError::Parse {
        input: input.to_string(),
        msg: msg.to_string(),
    };
    let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(err("empty expression"));
    }
    // split on + and - that are not part of an exponent literal such as 1e-3
    let bytes = s.as_bytes();
    let mut pieces = Vec::new();
    let mut start = 0;
    for k in 1..bytes.len() {
        let c = bytes[k];
        let prev = bytes[k - 1];
        if (c == b'+' || c == b'-') && prev != b'e' && prev != b'E' && prev != b'*' && prev != b'^'
        {
            pieces.push(&s[start..k]);
            start = k;
        }
    }
    pieces.push(&s[start..]);
    let mut terms = Vec::new();
    for piece in pieces {
        let (sign, body) = match piece.as_bytes()[0] {
            b'+' => (1.0, &piece[1..]),
            b'-' => (-1.0, &piece[1..]),
            _ => (1.0, piece),
        };
        if body.is_empty() {
            return Err(err("dangling sign"));
        }
        let mut coeff = sign;
        let mut factors = Vec::new();
        for factor in body.split('*') {
            if factor.is_empty() {
                return Err(err("empty factor"));
            }
            let starts_alpha = factor.as_bytes()[0].is_ascii_alphabetic();
            if starts_alpha {
                let (name, power) = match factor.split_once('^') {
                    Some((n, p)) => (n, p.parse::<u32>().map_err(|_| err("bad exponent"))?),
                    None => (factor, 1),
                };
                factors.push((name.to_string(), power));
            } else {
                let v: f64 = factor.parse().map_err(|_| err("bad number"))?;
                coeff *= v;
            }
        }
        terms.push((coeff, factors));
    }
    Ok(terms)
}

impl FromStr for UnivariatePoly {
    type Err = PolyError;

    /// Parses expressions like `1 + 0.5*x^2 - 3*x`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut acc = Self::zero();
        for (c, factors) in parse_terms(s)? {
            let mut k = 0usize;
            for (name, p) in factors {
                if name != "x" {
                    return Err(PolyError::Parse {
                        input: s.to_string(),
                        msg: format!("unknown variable `{name}`"),
                    });
                }
                k += p as usize;
            }
            if k > MAX_DEGREE {
                return Err(PolyError::DegreeOverflow {
                    degree: k,
                    cap: MAX_DEGREE,
                });
            }
            acc = acc.add(&Self::monomial(c, k));
        }
        Ok(acc)
    }
}

/// Sparse polynomial in `n` variables `y1..yn`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariatePoly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl MultivariatePoly {
    pub fn new(
        nvars: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, f64)>,
    ) -> Result<Self, PolyError> {
        let mut map = BTreeMap::new();
        for (exp, c) in terms {
            if exp.len() != nvars {
                return Err(PolyError::Arity {
                    expected: nvars,
                    found: exp.len(),
                });
            }
            if !c.is_finite() {
                return Err(PolyError::NonFinite);
            }
            *map.entry(exp).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        let p = Self { nvars, terms: map };
        let d = p.total_degree();
        if d > MAX_TOTAL_DEGREE {
            return Err(PolyError::DegreeOverflow {
                degree: d as usize,
                cap: MAX_TOTAL_DEGREE as usize,
            });
        }
        Ok(p)
    }

    /// A composite map `Φ` with `Φ(0) = 0`.
    pub fn vanishing_at_origin(
        nvars: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, f64)>,
    ) -> Result<Self, PolyError> {
        let p = Self::new(nvars, terms)?;
        p.require_vanishing_at_origin()?;
        Ok(p)
    }

    pub fn require_vanishing_at_origin(&self) -> Result<(), PolyError> {
        let c = self.constant_term();
        if c != 0.0 {
            return Err(PolyError::NonzeroConstant(c));
        }
        Ok(())
    }

    /// `Σ a_i y_i`.
    pub fn linear(coeffs: &[f64]) -> Result<Self, PolyError> {
        let n = coeffs.len();
        Self::new(
            n,
            coeffs.iter().enumerate().map(|(i, &c)| {
                let mut e = vec![0; n];
                e[i] = 1;
                (e, c)
            }),
        )
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn constant_term(&self) -> f64 {
        self.terms.get(&vec![0; self.nvars]).copied().unwrap_or(0.0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// `∂Φ/∂y_i` (0-based `i`).
    pub fn partial(&self, i: usize) -> Self {
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                *terms.entry(d).or_insert(0.0) += c * e[i] as f64;
            }
        }
        terms.retain(|_, c: &mut f64| *c != 0.0);
        Self {
            nvars: self.nvars,
            terms,
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(y)
                    .map(|(&k, v)| v.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// `Φ(f_1, …, f_n)` as a univariate polynomial.
    pub fn compose(&self, fs: &[UnivariatePoly]) -> Result<UnivariatePoly, PolyError> {
        if fs.len() != self.nvars {
            return Err(PolyError::Arity {
                expected: self.nvars,
                found: fs.len(),
            });
        }
        let mut acc = UnivariatePoly::zero();
        for (e, c) in &self.terms {
            let mut term = UnivariatePoly::constant(*c);
            for (f, &k) in fs.iter().zip(e) {
                term = term.mul(&f.pow(k)?)?;
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }
}

impl FromStr for MultivariatePoly {
    type Err = PolyError;

    /// Parses terms like `2*y1^2*y3 - y2`. The variable count is the largest
    /// index that appears.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let terms = parse_terms(s)?;
        let mut parsed = Vec::new();
        let mut nvars = 0;
        for (c, factors) in terms {
            let mut exps = BTreeMap::new();
            for (name, p) in factors {
                let idx = name
                    .strip_prefix('y')
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| PolyError::Parse {
                        input: s.to_string(),
                        msg: format!("unknown variable `{name}`"),
                    })?;
                nvars = nvars.max(idx);
                *exps.entry(idx - 1).or_insert(0u32) += p;
            }
            parsed.push((c, exps));
        }
        let nvars = nvars.max(1);
        Self::new(
            nvars,
            parsed.into_iter().map(|(c, exps)| {
                let mut e = vec![0u32; nvars];
                for (k, p) in exps {
                    e[k] = p;
                }
                (e, c)
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_univariate() {
        let p: UnivariatePoly = "1 + 0.5*x^2".parse().unwrap();
        assert_eq!(p.coeffs(), &[1.0, 0.0, 0.5]);
        let q: UnivariatePoly = " -x^3+2 *x - 1e-1".parse().unwrap();
        assert_eq!(q.coeffs(), &[-0.1, 2.0, 0.0, -1.0]);
        let r: UnivariatePoly = "x*x^2 - x^3".parse().unwrap();
        assert!(r.is_zero());
        assert!("1 + z".parse::<UnivariatePoly>().is_err());
        assert!("x^17".parse::<UnivariatePoly>().is_err());
        assert!("".parse::<UnivariatePoly>().is_err());
    }

    #[test]
    fn parse_multivariate() {
        let p: MultivariatePoly = "2*y1^2*y3 - y2".parse().unwrap();
        assert_eq!(p.nvars(), 3);
        assert_eq!(p.eval(&[1.0, 5.0, 3.0]), 2.0 * 3.0 - 5.0);
        assert!("y0".parse::<MultivariatePoly>().is_err());
        assert!(MultivariatePoly::vanishing_at_origin(1, [(vec![0], 1.0)]).is_err());
    }

    #[test]
    fn derivative_and_product() {
        let p: UnivariatePoly = "1 + 2*x + 3*x^2".parse().unwrap();
        assert_eq!(p.derivative().coeffs(), &[2.0, 6.0]);
        let q = p.mul(&UnivariatePoly::x()).unwrap();
        assert_eq!(q.coeffs(), &[0.0, 1.0, 2.0, 3.0]);
        let big = UnivariatePoly::monomial(1.0, 9);
        assert!(matches!(
            big.mul(&big),
            Err(PolyError::DegreeOverflow { degree: 18, .. })
        ));
    }

    #[test]
    fn partials_and_composition() {
        // Φ = λ y1 + (y2 - a)(y3 - b) - ab
        let (lambda, a, b) = (0.7, 1.5, -2.0);
        let phi = MultivariatePoly::vanishing_at_origin(
            3,
            [
                (vec![1, 0, 0], lambda),
                (vec![0, 1, 1], 1.0),
                (vec![0, 1, 0], -b),
                (vec![0, 0, 1], -a),
            ],
        )
        .unwrap();
        assert_eq!(phi.partial(1).eval(&[0.0, 0.0, 4.0]), 4.0 - b);
        assert_eq!(phi.partial(1).partial(2).constant_term(), 1.0);
        let fs = [
            UnivariatePoly::x(),
            "x^2".parse().unwrap(),
            "x^3".parse().unwrap(),
        ];
        let composed = phi.compose(&fs).unwrap();
        for x in [-1.3, 0.0, 0.4, 2.2] {
            let direct = phi.eval(&[x, x * x, x * x * x]);
            assert!((composed.eval(x) - direct).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn roots_of_cubic() {
        let p: UnivariatePoly = "x".parse().unwrap();
        assert_eq!(p.real_roots(), vec![0.0]);
        // (x-1)(x+2)(x-3) = x^3 - 2x^2 - 5x + 6
        let q: UnivariatePoly = "x^3 - 2*x^2 - 5*x + 6".parse().unwrap();
        let r = q.real_roots();
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        let no_real: UnivariatePoly = "x^2 + 1".parse().unwrap();
        assert!(no_real.real_roots().is_empty());
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(coeffs in prop::collection::vec(-5.0f64..5.0, 0..8)) {
            let p = UnivariatePoly::new(coeffs).unwrap();
            let back: UnivariatePoly = p.to_string().parse().unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn product_evaluates_pointwise(
            a in prop::collection::vec(-2.0f64..2.0, 1..6),
            b in prop::collection::vec(-2.0f64..2.0, 1..6),
            x in -2.0f64..2.0,
        ) {
            let p = UnivariatePoly::new(a).unwrap();
            let q = UnivariatePoly::new(b).unwrap();
            let pq = p.mul(&q).unwrap();
            let want = p.eval(x) * q.eval(x);
            prop_assert!((pq.eval(x) - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }
}
