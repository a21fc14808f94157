//! Finite state spaces, reference measures, fields and reversible Markov
//! generators, including the reflecting-boundary discretization of a 1D
//! weighted diffusion `Lf = f'' - V'f'`.

use std::fmt::Write as _;
use std::ops::Deref;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::poly::UnivariatePoly;

/// Largest tolerated `|sum_j L_ij|`.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Relative tolerance for `m_i L_ij = m_j L_ji`.
pub const BALANCE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("a state space needs at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("positions must be finite and strictly increasing (violated at index {0})")]
    UnsortedPositions(usize),
    #[error("measure weight at state {index} is {value}, must be finite and > 0")]
    NonpositiveMass { index: usize, value: f64 },
    #[error("size mismatch: expected {expected}, got {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("off-diagonal rate L[{i}][{j}] = {value} is negative or not finite")]
    InvalidRate { i: usize, j: usize, value: f64 },
    #[error("row {row} of the generator sums to {sum:e}")]
    RowSumViolation { row: usize, sum: f64 },
    #[error(
        "detailed balance fails at ({i},{j}): m_i L_ij = {forward:e}, m_j L_ji = {backward:e}"
    )]
    DetailedBalanceViolation {
        i: usize,
        j: usize,
        forward: f64,
        backward: f64,
    },
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("exp(-V) leaves the floating-point range at x = {x} (V = {v})")]
    Overflow { x: f64, v: f64 },
    #[error("generator text, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A finite state space. Grid spaces carry node coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n: usize,
    positions: Option<Vec<f64>>,
}

impl StateSpace {
    pub fn abstract_space(n: usize) -> Result<Self, SpaceError> {
        if n < 2 {
            return Err(SpaceError::TooFewStates(n));
        }
        Ok(Self { n, positions: None })
    }

    pub fn with_positions(positions: Vec<f64>) -> Result<Self, SpaceError> {
        if positions.len() < 2 {
            return Err(SpaceError::TooFewStates(positions.len()));
        }
        for (i, x) in positions.iter().enumerate() {
            if !x.is_finite() || (i > 0 && *x <= positions[i - 1]) {
                return Err(SpaceError::UnsortedPositions(i));
            }
        }
        Ok(Self {
            n: positions.len(),
            positions: Some(positions),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn positions(&self) -> Option<&[f64]> {
        self.positions.as_deref()
    }

    /// Index of the node closest to `x`, for grid spaces.
    pub fn nearest_node(&self, x: f64) -> Option<usize> {
        let pos = self.positions.as_ref()?;
        let k = pos.partition_point(|&p| p < x);
        let best = if k == 0 {
            0
        } else if k == pos.len() {
            pos.len() - 1
        } else if (x - pos[k - 1]) <= (pos[k] - x) {
            k - 1
        } else {
            k
        };
        Some(best)
    }
}

/// Reference measure with full support.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure(Vec<f64>);

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self, SpaceError> {
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(SpaceError::NonpositiveMass { index, value });
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize, mass: f64) -> Result<Self, SpaceError> {
        Self::new(vec![mass; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `∫ f dm`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.0.iter().zip(f).map(|(m, v)| m * v).sum()
    }

    /// `⟨f, g⟩_m`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(f.iter().zip(g))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }
}

/// A real-valued function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Indicator of a single state.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Finite Markov generator, reversible with respect to its measure.
///
/// Off-diagonal rates are kept both densely and as per-row neighbour lists;
/// every operator in the crate iterates the neighbour lists.
#[derive(Debug, Clone)]
pub struct ReversibleGenerator {
    space: StateSpace,
    measure: Measure,
    rates: DMatrix<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

/// Validates the structure of a reversible generator.
pub fn build_chain(
    space: StateSpace,
    measure: Measure,
    rates: DMatrix<f64>,
) -> Result<ReversibleGenerator, SpaceError> {
    let n = space.len();
    if measure.len() != n {
        return Err(SpaceError::SizeMismatch {
            expected: n,
            found: measure.len(),
        });
    }
    if rates.nrows() != n || rates.ncols() != n {
        return Err(SpaceError::SizeMismatch {
            expected: n,
            found: if rates.nrows() != n {
                rates.nrows()
            } else {
                rates.ncols()
            },
        });
    }
    let m = measure.weights();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let v = rates[(i, j)];
            if i != j && !(v.is_finite() && v >= 0.0) {
                return Err(SpaceError::InvalidRate { i, j, value: v });
            }
            if !v.is_finite() {
                return Err(SpaceError::InvalidRate { i, j, value: v });
            }
            sum += v;
            if i != j && v > 0.0 {
                neighbors[i].push((j, v));
            }
        }
        if sum.abs() > ROW_SUM_TOL {
            return Err(SpaceError::RowSumViolation { row: i, sum });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let forward = m[i] * rates[(i, j)];
            let backward = m[j] * rates[(j, i)];
            if (forward - backward).abs() > BALANCE_TOL * forward.abs().max(1.0) {
                return Err(SpaceError::DetailedBalanceViolation {
                    i,
                    j,
                    forward,
                    backward,
                });
            }
        }
    }
    Ok(ReversibleGenerator {
        space,
        measure,
        rates,
        neighbors,
    })
}

/// Reflecting-boundary finite-volume discretization of `f'' - V'f'` on a
/// uniform grid of `[a, b]`, reversible for `m_i = h e^{-V(x_i)}`.
pub fn build_weighted_grid(
    a: f64,
    b: f64,
    n: usize,
    potential: &UnivariatePoly,
) -> Result<ReversibleGenerator, SpaceError> {
    if n < 3 {
        return Err(SpaceError::DegenerateGrid(format!("n = {n} < 3")));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(SpaceError::DegenerateGrid(format!("[{a}, {b}]")));
    }
    let h = (b - a) / (n - 1) as f64;
    let boltzmann = |x: f64| -> Result<f64, SpaceError> {
        let v = potential.eval(x);
        let w = (-v).exp();
        if !(w.is_finite() && w > 0.0) {
            return Err(SpaceError::Overflow { x, v });
        }
        Ok(w)
    };
    let positions: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
    let mut masses = Vec::with_capacity(n);
    for &x in &positions {
        let w = h * boltzmann(x)?;
        if !(w.is_finite() && w > 0.0) {
            return Err(SpaceError::Overflow {
                x,
                v: potential.eval(x),
            });
        }
        masses.push(w);
    }
    // conductance across the edge (i, i+1), already multiplied by h
    let mut flux = Vec::with_capacity(n - 1);
    for x in &positions[..n - 1] {
        flux.push(boltzmann(x + 0.5 * h)? / h);
    }
    let mut rates = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        rates[(i, i + 1)] = flux[i] / masses[i];
        rates[(i + 1, i)] = flux[i] / masses[i + 1];
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| rates[(i, j)]).sum();
        rates[(i, i)] = -off;
    }
    build_chain(
        StateSpace::with_positions(positions)?,
        Measure::new(masses)?,
        rates,
    )
}

impl ReversibleGenerator {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Off-diagonal `(j, L_ij)` with `L_ij > 0`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Largest total jump rate `max_i |L_ii|`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.len())
            .map(|i| self.neighbors[i].iter().map(|(_, r)| r).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Grid spacing when the space is a uniform grid.
    pub fn grid_step(&self) -> Option<f64> {
        let p = self.space.positions()?;
        Some((p[p.len() - 1] - p[0]) / (p.len() - 1) as f64)
    }

    /// Same chain with every rate multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, SpaceError> {
        build_chain(self.space.clone(), self.measure.clone(), &self.rates * c)
    }

    pub(crate) fn check_len(&self, f: &[f64]) -> Result<(), SpaceError> {
        if f.len() != self.len() {
            return Err(SpaceError::SizeMismatch {
                expected: self.len(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// `(Lf)_i = sum_j L_ij (f_j - f_i)`; constants map to the exact zero field.
    pub fn apply(&self, f: &[f64]) -> Result<Field, SpaceError> {
        self.check_len(f)?;
        Ok(self.apply_unchecked(f))
    }

    pub(crate) fn apply_unchecked(&self, f: &[f64]) -> Field {
        Field::new(
            self.neighbors
                .iter()
                .enumerate()
                .map(|(i, row)| row.iter().map(|&(j, r)| r * (f[j] - f[i])).sum())
                .collect(),
        )
    }

    /// Dirichlet energy `E(f) = -⟨f, Lf⟩_m`.
    pub fn energy(&self, f: &[f64]) -> Result<f64, SpaceError> {
        let lf = self.apply(f)?;
        Ok(-self.measure.inner(f, &lf))
    }

    /// Writes the plain-text generator format.
    ///
    /// Header `n m_total`, then `i x_i m_i` per state (`nan` for abstract
    /// chains), then `i j L_ij` per nonzero rate; 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let n = self.len();
        let _ = writeln!(out, "{} {:.16e}", n, self.measure.total());
        for i in 0..n {
            let x = self.space.positions().map(|p| p[i]).unwrap_or(f64::NAN);
            let _ = writeln!(out, "{} {:.16e} {:.16e}", i, x, self.measure.weights()[i]);
        }
        for i in 0..n {
            for j in 0..n {
                let r = self.rates[(i, j)];
                if r != 0.0 {
                    let _ = writeln!(out, "{} {} {:.16e}", i, j, r);
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SpaceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, msg: &str| SpaceError::Parse {
            line,
            msg: msg.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let mut head = header.split_whitespace();
        let n: usize = head
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(hl, "expected state count"))?;
        if n < 2 {
            return Err(SpaceError::TooFewStates(n));
        }
        let mut positions = Vec::with_capacity(n);
        let mut masses = Vec::with_capacity(n);
        for expect in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, "missing state line"))?;
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(parse_err(ln, "expected `i x_i m_i`"));
            }
            let i: usize = cols[0].parse().map_err(|_| parse_err(ln, "bad index"))?;
            if i != expect {
                return Err(parse_err(ln, "state lines must be in order"));
            }
            let x: f64 = cols[1].parse().map_err(|_| parse_err(ln, "bad position"))?;
            let m: f64 = cols[2].parse().map_err(|_| parse_err(ln, "bad mass"))?;
            positions.push(x);
            masses.push(m);
        }
        let mut rates = DMatrix::zeros(n, n);
        for (ln, line) in lines {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(parse_err(ln, "expected `i j L_ij`"));
            }
            let i: usize = cols[0].parse().map_err(|_| parse_err(ln, "bad row"))?;
            let j: usize = cols[1].parse().map_err(|_| parse_err(ln, "bad column"))?;
            if i >= n || j >= n {
                return Err(parse_err(ln, "rate index out of range"));
            }
            rates[(i, j)] = cols[2].parse().map_err(|_| parse_err(ln, "bad rate"))?;
        }
        let space = if positions.iter().all(|x| x.is_nan()) {
            StateSpace::abstract_space(n)?
        } else {
            StateSpace::with_positions(positions)?
        };
        build_chain(space, Measure::new(masses)?, rates)
    }
}

/// Free-function form of [`ReversibleGenerator::apply`].
pub fn apply(generator: &ReversibleGenerator, f: &[f64]) -> Result<Field, SpaceError> {
    generator.apply(f)
}
