//! Optimal transport on the line and on finite supports, relative entropy,
//! heat flow of measures, and contraction / EVI / displacement convexity
//! checks along the heat flow of a 1D grid diffusion.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::gamma::{self, Curvature, GammaError};
use crate::report::{CheckReport, Location};
use crate::semigroup::{self, SemigroupError};
use crate::simplex::{self, SimplexError};
use crate::space::{Measure, ReversibleGenerator, SpaceError};

/// Largest support handled by the LP solver.
pub const LP_SIZE_CAP: usize = 500;
/// Mass removed by clamping above this is an error.
pub const CLAMP_LIMIT: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    Gamma(#[from] GammaError),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("support is not sorted at index {0}")]
    UnsortedSupport(usize),
    #[error("measure has {found} weights, reference has {expected}")]
    SupportMismatch { expected: usize, found: usize },
    #[error("invalid cost function: {0}")]
    InvalidCost(String),
    #[error("LP of size {rows}x{cols} exceeds the cap {cap}")]
    SizeOverflow {
        rows: usize,
        cols: usize,
        cap: usize,
    },
    #[error("transport LP is infeasible: {0}")]
    Infeasible(String),
    #[error("LP solver: {0}")]
    Lp(SimplexError),
    #[error("clamped mass {0:e} exceeds the limit")]
    ExcessClamp(f64),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("finite-difference step {delta} exceeds half the smallest time {limit}")]
    StepTooLarge { delta: f64, limit: f64 },
    #[error("generator has no grid positions")]
    NotAGrid,
    #[error("K = {k} exceeds the interior curvature {curvature} by more than {allowance}")]
    KExceedsCurvature {
        k: f64,
        curvature: String,
        allowance: f64,
    },
}

impl From<SimplexError> for TransportError {
    fn from(e: SimplexError) -> Self {
        match e {
            SimplexError::Infeasible { supply, demand } => {
                TransportError::Infeasible(format!("supply {supply} vs demand {demand}"))
            }
            other => TransportError::Lp(other),
        }
    }
}

/// Point masses `Σ w_k δ_{x_k}` with `Σ w_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self, TransportError> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(TransportError::InvalidMeasure(format!(
                "{} positions, {} weights",
                support.len(),
                weights.len()
            )));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(TransportError::InvalidMeasure("non-finite position".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(TransportError::InvalidMeasure(
                "negative or non-finite weight".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(TransportError::InvalidMeasure(format!(
                "total mass {total}"
            )));
        }
        Ok(Self { support, weights })
    }

    pub fn dirac(x: f64) -> Self {
        Self {
            support: vec![x],
            weights: vec![1.0],
        }
    }

    /// Uniform weights on the given positions.
    pub fn uniform(support: Vec<f64>) -> Result<Self, TransportError> {
        let w = 1.0 / support.len().max(1) as f64;
        let n = support.len();
        Self::new(support, vec![w; n])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - mu).powi(2))
            .sum()
    }

    /// `position,weight` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,weight\n");
        for (x, w) in self.support.iter().zip(&self.weights) {
            out.push_str(&format!("{x:.16e},{w:.16e}\n"));
        }
        out
    }

    /// Merges tied positions; rejects decreasing supports.
    fn sorted_merged(&self) -> Result<(Vec<f64>, Vec<f64>), TransportError> {
        let mut xs: Vec<f64> = Vec::with_capacity(self.len());
        let mut ws: Vec<f64> = Vec::with_capacity(self.len());
        for (k, (&x, &w)) in self.support.iter().zip(&self.weights).enumerate() {
            match xs.last() {
                Some(&last) if x < last => return Err(TransportError::UnsortedSupport(k)),
                Some(&last) if x == last => *ws.last_mut().expect("paired") += w,
                _ => {
                    xs.push(x);
                    ws.push(w);
                }
            }
        }
        Ok((xs, ws))
    }
}

/// `(i, j, mass)` couplings with positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0; self.rows];
        let mut c = vec![0.0; self.cols];
        for &(i, j, x) in &self.entries {
            r[i] += x;
            c[j] += x;
        }
        (r, c)
    }

    /// `i,j,mass` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,mass\n");
        for (i, j, x) in &self.entries {
            out.push_str(&format!("{i},{j},{x:.16e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `h(r) = r^p`, `p ≥ 1`.
    Power(f64),
    /// Essential supremum of the displacement.
    Sup,
    /// Linear interpolation through `(r_k, h_k)`, constant past the last node.
    PiecewiseLinear(Vec<(f64, f64)>),
}

/// A nondecreasing cost `r ↦ h(scale · r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    kind: CostKind,
    arg_scale: f64,
}

impl CostFunction {
    pub fn power(p: f64) -> Result<Self, TransportError> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(TransportError::InvalidCost(format!(
                "power {p} must be in [1, inf)"
            )));
        }
        Ok(Self {
            kind: CostKind::Power(p),
            arg_scale: 1.0,
        })
    }

    pub fn sup() -> Self {
        Self {
            kind: CostKind::Sup,
            arg_scale: 1.0,
        }
    }

    /// Breakpoints must start at `r = 0`, increase in `r`, and be
    /// nondecreasing in `h` with `h(0) ≥ 0`.
    pub fn piecewise_linear(points: Vec<(f64, f64)>) -> Result<Self, TransportError> {
        let bad = |m: &str| Err(TransportError::InvalidCost(m.into()));
        match points.first() {
            None => return bad("no breakpoints"),
            Some(&(r0, h0)) if r0 != 0.0 || h0 < 0.0 => return bad("need h(0) >= 0 at r = 0"),
            _ => {}
        }
        if points.iter().any(|(r, h)| !r.is_finite() || !h.is_finite()) {
            return bad("non-finite breakpoint");
        }
        if points
            .windows(2)
            .any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1)
        {
            return bad("breakpoints must increase in r and be nondecreasing in h");
        }
        Ok(Self {
            kind: CostKind::PiecewiseLinear(points),
            arg_scale: 1.0,
        })
    }

    /// `min(r, 1)`.
    pub fn truncated_linear() -> Self {
        Self::piecewise_linear(vec![(0.0, 0.0), (1.0, 1.0)]).expect("valid breakpoints")
    }

    /// `r ↦ h(c·r)`.
    pub fn with_argument_scale(&self, c: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            arg_scale: self.arg_scale * c,
        }
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = self.arg_scale * r;
        match &self.kind {
            CostKind::Power(p) => r.powf(*p),
            CostKind::Sup => r,
            CostKind::PiecewiseLinear(pts) => {
                let last = pts[pts.len() - 1];
                if r >= last.0 {
                    return last.1;
                }
                let k = pts.partition_point(|(x, _)| *x <= r);
                let (x0, h0) = pts[k - 1];
                let (x1, h1) = pts[k];
                h0 + (h1 - h0) * (r - x0) / (x1 - x0)
            }
        }
    }
}

impl fmt::Display for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CostKind::Power(p) => write!(f, "r^{p}")?,
            CostKind::Sup => f.write_str("sup")?,
            CostKind::PiecewiseLinear(pts) => {
                f.write_str("pl")?;
                for (r, h) in pts {
                    write!(f, "({r};{h})")?;
                }
            }
        }
        if self.arg_scale != 1.0 {
            write!(f, "@{}", self.arg_scale)?;
        }
        Ok(())
    }
}

/// Monotone (quantile) coupling of two sorted measures.
///
/// The lower half of the mass is matched from the left and the rest from
/// the right, so round-off in the cumulative sums never pairs a far tail
/// atom with the opposite end.
pub fn monotone_coupling(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Vec<(f64, f64, f64)>, TransportError> {
    let (xa, mut wa) = mu.sorted_merged()?;
    let (xb, mut wb) = nu.sorted_merged()?;
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();

    let (mut i, mut j) = (0, 0);
    let mut budget = 0.5;
    while budget > 0.0 && i < wa.len() && j < wb.len() {
        if wa[i] <= 0.0 {
            i += 1;
            continue;
        }
        if wb[j] <= 0.0 {
            j += 1;
            continue;
        }
        let m = wa[i].min(wb[j]).min(budget);
        *pairs.entry((i, j)).or_insert(0.0) += m;
        wa[i] -= m;
        wb[j] -= m;
        budget -= m;
    }
    let (mut i, mut j) = (wa.len(), wb.len());
    while i > 0 && j > 0 {
        if wa[i - 1] <= 0.0 {
            i -= 1;
            continue;
        }
        if wb[j - 1] <= 0.0 {
            j -= 1;
            continue;
        }
        let m = wa[i - 1].min(wb[j - 1]);
        *pairs.entry((i - 1, j - 1)).or_insert(0.0) += m;
        wa[i - 1] -= m;
        wb[j - 1] -= m;
    }
    Ok(pairs
        .into_iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|((i, j), m)| (xa[i], xb[j], m))
        .collect())
}

/// `W_p` on the line; `p = f64::INFINITY` gives `W_∞`.
pub fn wasserstein_1d(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
) -> Result<f64, TransportError> {
    if !(p >= 1.0) {
        return Err(TransportError::InvalidCost(format!(
            "exponent {p} must be in [1, inf]"
        )));
    }
    let pairs = monotone_coupling(mu, nu)?;
    if p.is_infinite() {
        return Ok(pairs
            .iter()
            .fold(0.0, |acc: f64, (x, y, _)| acc.max((x - y).abs())));
    }
    let total: f64 = pairs
        .iter()
        .map(|(x, y, m)| m * (x - y).abs().powf(p))
        .sum();
    Ok(total.powf(1.0 / p))
}

/// `|x_i - y_j|` between two supports.
pub fn distance_matrix(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| (a[i] - b[j]).abs())
}

/// `min_π Σ π_ij h(d_ij)` over couplings of `μ` and `ν`. For the sup cost
/// the value is the smallest `d` admitting a coupling supported on `{d_ij ≤ d}`.
pub fn transport_cost_lp(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFunction,
    distance: &DMatrix<f64>,
) -> Result<(f64, TransportPlan), TransportError> {
    let (m, n) = (mu.len(), nu.len());
    if m > LP_SIZE_CAP || n > LP_SIZE_CAP {
        return Err(TransportError::SizeOverflow {
            rows: m,
            cols: n,
            cap: LP_SIZE_CAP,
        });
    }
    if distance.nrows() != m || distance.ncols() != n {
        return Err(TransportError::SupportMismatch {
            expected: m * n,
            found: distance.nrows() * distance.ncols(),
        });
    }
    let rows: Vec<usize> = (0..m).filter(|&i| mu.weights[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| nu.weights[j] > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| mu.weights[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.weights[j]).collect();
    let d = DMatrix::from_fn(rows.len(), cols.len(), |a, b| distance[(rows[a], cols[b])]);

    let solve_with = |c: &DMatrix<f64>| -> Result<TransportPlan, TransportError> {
        let sol = simplex::solve(&supply, &demand, c)?;
        let plan = TransportPlan {
            rows: m,
            cols: n,
            entries: sol
                .basis
                .iter()
                .filter(|(_, _, x)| *x > 0.0)
                .map(|&(a, b, x)| (rows[a], cols[b], x))
                .collect(),
        };
        check_marginals(&plan, mu, nu)?;
        Ok(plan)
    };

    if let CostKind::Sup = cost.kind {
        let scaled = d.map(|v| cost.eval(v));
        let mut levels: Vec<f64> = scaled.iter().copied().collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let feasible = |level: f64| -> Result<Option<TransportPlan>, TransportError> {
            let c = scaled.map(|v| if v <= level { 0.0 } else { 1.0 });
            let plan = solve_with(&c)?;
            let excess: f64 = plan
                .entries
                .iter()
                .filter(|(i, j, _)| cost.eval(distance[(*i, *j)]) > level)
                .map(|e| e.2)
                .sum();
            Ok((excess <= 1e-12).then_some(plan))
        };
        let (mut lo, mut hi) = (0, levels.len() - 1);
        let mut best = feasible(levels[hi])?.ok_or_else(|| {
            TransportError::Infeasible("no coupling at the largest distance".into())
        })?;
        while lo < hi {
            let mid = (lo + hi) / 2;
            match feasible(levels[mid])? {
                Some(plan) => {
                    hi = mid;
                    best = plan;
                }
                None => lo = mid + 1,
            }
        }
        return Ok((levels[hi], best));
    }

    let c = d.map(|v| cost.eval(v));
    let plan = solve_with(&c)?;
    let value = plan
        .entries
        .iter()
        .map(|&(i, j, x)| x * cost.eval(distance[(i, j)]))
        .sum();
    Ok((value, plan))
}

fn check_marginals(
    plan: &TransportPlan,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<(), TransportError> {
    let (r, c) = plan.marginals();
    let worst = r
        .iter()
        .zip(&mu.weights)
        .chain(c.iter().zip(&nu.weights))
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
    if worst > 1e-9 {
        return Err(TransportError::Lp(SimplexError::CertificateFailure(
            format!("plan marginals off by {worst:e}"),
        )));
    }
    Ok(())
}

/// `Ent(μ) = Σ ρ_i log ρ_i m_i` with `μ = ρ m` and `0 log 0 = 0`.
pub fn entropy(mu: &DiscreteMeasure, m: &Measure) -> Result<f64, TransportError> {
    entropy_of_masses(&mu.weights, m)
}

fn entropy_of_masses(w: &[f64], m: &Measure) -> Result<f64, TransportError> {
    if w.len() != m.len() {
        return Err(TransportError::SupportMismatch {
            expected: m.len(),
            found: w.len(),
        });
    }
    Ok(w.iter()
        .zip(m.weights())
        .filter(|(wi, _)| **wi > 0.0)
        .map(|(wi, mi)| wi * (wi / mi).ln())
        .sum())
}

fn state_positions(l: &ReversibleGenerator) -> Vec<f64> {
    match l.space().positions() {
        Some(p) => p.to_vec(),
        None => (0..l.len()).map(|i| i as f64).collect(),
    }
}

/// Heat flow of a probability vector on the states, with negative entries
/// clamped and the result renormalized. Returns the measure and the clamped mass.
pub fn heat_flow(
    l: &ReversibleGenerator,
    mass: &[f64],
    t: f64,
) -> Result<(DiscreteMeasure, f64), TransportError> {
    if t < 0.0 || t.is_nan() {
        return Err(TransportError::NegativeTime(t));
    }
    let raw = semigroup::evolve_measure(l, mass, t)?;
    let clamped: f64 = raw.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    if clamped > CLAMP_LIMIT {
        return Err(TransportError::ExcessClamp(clamped));
    }
    let kept: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = kept.iter().sum();
    let weights = kept.iter().map(|v| v / total).collect();
    Ok((DiscreteMeasure::new(state_positions(l), weights)?, clamped))
}

/// `ρ_{t,x} = H_t δ_x`, the law at time `t` of the chain started at `x`.
pub fn heat_flow_dirac(
    l: &ReversibleGenerator,
    x: usize,
    t: f64,
) -> Result<(DiscreteMeasure, f64), TransportError> {
    if x >= l.len() {
        return Err(TransportError::SupportMismatch {
            expected: l.len(),
            found: x + 1,
        });
    }
    let mut mass = vec![0.0; l.len()];
    mass[x] = 1.0;
    heat_flow(l, &mass, t)
}

/// Least-squares slope of `log y` against `t`.
pub fn fit_decay_rate(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len().min(ys.len()) as f64;
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mt = ts.iter().sum::<f64>() / n;
    let ml = logs.iter().sum::<f64>() / n;
    let cov: f64 = ts.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
    let var: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    cov / var
}

/// Rejects `K` above the interior curvature of the grid by more than `h`.
pub fn check_interior_curvature(l: &ReversibleGenerator, k: f64) -> Result<f64, TransportError> {
    let h = l.grid_step().ok_or(TransportError::NotAGrid)?;
    let interior = gamma::curvature_interior(l)?.ok_or(TransportError::NotAGrid)?;
    let ok = match interior {
        Curvature::Finite(c) => k <= c + h,
        Curvature::Unbounded => true,
        Curvature::NoLowerBound => false,
    };
    if !ok {
        return Err(TransportError::KExceedsCurvature {
            k,
            curvature: interior.to_string(),
            allowance: h,
        });
    }
    Ok(h)
}

/// For each `t`: `W_p(ρ_{t,x}, ρ_{t,y}) ≤ e^{-Kt} |x - y|` for every `p`
/// (tolerance `5h` at `p = ∞`, `2h` otherwise), and for every cost `h`:
/// `C_{h_{Kt}}(ρ_{t,x}, ρ_{t,y}) ≤ h(|x - y|)` with `h_{Kt}(r) = h(e^{Kt} r)`
/// by LP (tolerance `2h`).
pub fn contraction_experiment(
    l: &ReversibleGenerator,
    k: f64,
    x: f64,
    y: f64,
    t_list: &[f64],
    p_list: &[f64],
    costs: &[CostFunction],
) -> Result<Vec<CheckReport>, TransportError> {
    let h = check_interior_curvature(l, k)?;
    let space = l.space();
    let xi = space.nearest_node(x).ok_or(TransportError::NotAGrid)?;
    let yi = space.nearest_node(y).ok_or(TransportError::NotAGrid)?;
    let pos = state_positions(l);
    let d = (pos[xi] - pos[yi]).abs();
    let dist = distance_matrix(&pos, &pos);
    let mut out = Vec::new();
    for &t in t_list {
        let (rx, _) = heat_flow_dirac(l, xi, t)?;
        let (ry, _) = heat_flow_dirac(l, yi, t)?;
        let rhs = (-k * t).exp() * d;
        for &p in p_list {
            let lhs = wasserstein_1d(&rx, &ry, p)?;
            let tol = if p.is_infinite() { 5.0 * h } else { 2.0 * h };
            out.push(CheckReport::new(
                format!("w_contraction[p={p}]"),
                Location::Time(t),
                lhs,
                rhs,
                tol,
            ));
        }
        for cost in costs {
            let perturbed = cost.with_argument_scale((k * t).exp());
            let (lhs, _) = transport_cost_lp(&rx, &ry, &perturbed, &dist)?;
            out.push(CheckReport::new(
                format!("cost_contraction[h={cost}]"),
                Location::Time(t),
                lhs,
                cost.eval(d),
                2.0 * h,
            ));
        }
    }
    Ok(out)
}

/// `d/dt ½W₂²(μ_t, ν) + (K/2) W₂²(μ_t, ν) ≤ Ent(ν) − Ent(μ_t)` along the heat
/// flow of `μ_0`, with a centered difference of step `δ` and tolerance `10δ + 5h`.
pub fn evi_check(
    l: &ReversibleGenerator,
    k: f64,
    mu0: &[f64],
    nu: &[f64],
    t_list: &[f64],
    delta: f64,
) -> Result<Vec<CheckReport>, TransportError> {
    let h = l.grid_step().ok_or(TransportError::NotAGrid)?;
    if let Some(&t) = t_list.iter().find(|t| !(**t >= 0.0)) {
        return Err(TransportError::NegativeTime(t));
    }
    let t_min = t_list.iter().copied().fold(f64::INFINITY, f64::min);
    if !(delta > 0.0) || delta > t_min / 2.0 {
        return Err(TransportError::StepTooLarge {
            delta,
            limit: t_min / 2.0,
        });
    }
    let m = l.measure();
    let nu_measure = DiscreteMeasure::new(state_positions(l), normalized(nu)?)?;
    let ent_nu = entropy(&nu_measure, m)?;
    let half_w2 = |t: f64| -> Result<(f64, DiscreteMeasure), TransportError> {
        let (mu_t, _) = heat_flow(l, mu0, t)?;
        let w = wasserstein_1d(&mu_t, &nu_measure, 2.0)?;
        Ok((0.5 * w * w, mu_t))
    };
    let tol = 10.0 * delta + 5.0 * h;
    let mut out = Vec::new();
    for &t in t_list {
        let (plus, _) = half_w2(t + delta)?;
        let (minus, _) = half_w2(t - delta)?;
        let (mid, mu_t) = half_w2(t)?;
        let lhs = (plus - minus) / (2.0 * delta) + k * mid;
        let rhs = ent_nu - entropy(&mu_t, m)?;
        out.push(CheckReport::new("evi", Location::Time(t), lhs, rhs, tol));
    }
    Ok(out)
}

fn normalized(w: &[f64]) -> Result<Vec<f64>, TransportError> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || w.iter().any(|v| *v < 0.0) {
        return Err(TransportError::InvalidMeasure(
            "weights must be nonnegative with positive total".into(),
        ));
    }
    Ok(w.iter().map(|v| v / total).collect())
}

/// Quantile interpolation `F_t^{-1} = (1-t) F_0^{-1} + t F_1^{-1}`.
pub fn displacement_interpolation(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    t: f64,
) -> Result<DiscreteMeasure, TransportError> {
    let mut atoms: Vec<(f64, f64)> = monotone_coupling(mu0, mu1)?
        .into_iter()
        .map(|(x, y, m)| ((1.0 - t) * x + t * y, m))
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let (support, weights) = atoms.into_iter().map(|(x, m)| (x, m / total)).unzip();
    DiscreteMeasure::new(support, weights)
}

/// Splits every atom between the two grid nodes around it in proportion to
/// proximity, preserving mass and mean; atoms outside the grid go to the end node.
pub fn rebin(mu: &DiscreteMeasure, grid: &[f64]) -> Result<DiscreteMeasure, TransportError> {
    let mut w = vec![0.0; grid.len()];
    for (x, m) in mu.support.iter().zip(&mu.weights) {
        let k = grid.partition_point(|g| g < x);
        if k == 0 {
            w[0] += m;
        } else if k == grid.len() {
            w[k - 1] += m;
        } else {
            let theta = (x - grid[k - 1]) / (grid[k] - grid[k - 1]);
            w[k - 1] += m * (1.0 - theta);
            w[k] += m * theta;
        }
    }
    DiscreteMeasure::new(grid.to_vec(), w)
}

/// `Ent(μ_t) ≤ (1-t) Ent(μ_0) + t Ent(μ_1) − (K/2) t(1-t) W₂²(μ_0, μ_1)`
/// along the quantile interpolation re-binned to the grid (tolerance `5h`),
/// and `W₂(μ_0, μ_t) = t W₂(μ_0, μ_1)` (tolerance `2h`).
pub fn displacement_convexity_check(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    l: &ReversibleGenerator,
    k: f64,
    t_list: &[f64],
) -> Result<Vec<CheckReport>, TransportError> {
    let grid = l.space().positions().ok_or(TransportError::NotAGrid)?;
    let h = l.grid_step().ok_or(TransportError::NotAGrid)?;
    let m = l.measure();
    let e0 = entropy(&rebin(mu0, grid)?, m)?;
    let e1 = entropy(&rebin(mu1, grid)?, m)?;
    let w = wasserstein_1d(mu0, mu1, 2.0)?;
    let mut out = Vec::new();
    for &t in t_list {
        let mu_t = rebin(&displacement_interpolation(mu0, mu1, t)?, grid)?;
        let lhs = entropy(&mu_t, m)?;
        let rhs = (1.0 - t) * e0 + t * e1 - 0.5 * k * t * (1.0 - t) * w * w;
        out.push(CheckReport::new(
            "displacement_convexity",
            Location::Time(t),
            lhs,
            rhs,
            5.0 * h,
        ));
        let gap = (wasserstein_1d(mu0, &mu_t, 2.0)? - t * w).abs();
        out.push(CheckReport::identity(
            "geodesic",
            Location::Time(t),
            gap,
            2.0 * h,
        ));
    }
    Ok(out)
}

/// `c · m` restricted to the states where `keep` holds, normalized.
pub fn restricted_reference(
    l: &ReversibleGenerator,
    keep: impl Fn(f64) -> bool,
) -> Result<Vec<f64>, TransportError> {
    let pos = state_positions(l);
    let w: Vec<f64> = pos
        .iter()
        .zip(l.measure().weights())
        .map(|(x, m)| if keep(*x) { *m } else { 0.0 })
        .collect();
    normalized(&w)
}

/// Tolerance-free slack summary used by the acceptance tests.
pub fn worst_slack(reports: &[CheckReport]) -> f64 {
    reports
        .iter()
        .map(|r| r.slack)
        .fold(f64::INFINITY, f64::min)
}
