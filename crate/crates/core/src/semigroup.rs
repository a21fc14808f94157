//! Heat semigroup `P_t = exp(tL)` of a reversible generator, the time
//! mollifier `𝔓_ε`, and pointwise checks of the gradient estimates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::gamma::{self, Curvature, GammaError};
use crate::report::{scale_of, CheckReport, Location};
use crate::space::{Field, ReversibleGenerator, SpaceError};

/// Iteration cap handed to the symmetric eigensolver.
pub const EIGEN_MAX_ITER: usize = 100_000;
/// Simpson nodes for the mollifier kernel on `[1, 2]`.
pub const KERNEL_NODES: usize = 257;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemigroupError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Gamma(#[from] GammaError),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("mollifier width must be positive, got {0}")]
    NonpositiveEpsilon(f64),
    #[error("exponent alpha = {0} outside [1/2, 1]")]
    AlphaOutOfRange(f64),
    #[error("K = {k} exceeds the certified curvature {curvature} (allowance {allowance:e})")]
    KExceedsCurvature {
        k: f64,
        curvature: String,
        allowance: f64,
    },
    #[error("symmetric eigensolver did not converge")]
    EigensolverNoConvergence,
    #[error("spectral factorization failed its check: {0}")]
    FactorizationCheck(String),
}

/// `L = Σ_k λ_k φ_k ⟨φ_k, ·⟩_m` with `φ_k` orthonormal in `L²(m)`.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    /// Descending, so `eigenvalues[0] ≈ 0`.
    eigenvalues: Vec<f64>,
    /// Columns are the `φ_k`.
    eigenvectors: DMatrix<f64>,
    weights: Vec<f64>,
}

/// Eigendecomposition of `D^{1/2} L D^{-1/2}` with `D = diag(m)`.
pub fn factorize(l: &ReversibleGenerator) -> Result<SpectralFactorization, SemigroupError> {
    let n = l.len();
    let m = l.measure().weights();
    let sq: Vec<f64> = m.iter().map(|w| w.sqrt()).collect();
    let rates = l.rates();
    let s = DMatrix::from_fn(n, n, |i, j| {
        let a = sq[i] * rates[(i, j)] / sq[j];
        let b = sq[j] * rates[(j, i)] / sq[i];
        0.5 * (a + b)
    });
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(SemigroupError::EigensolverNoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])] / sq[i]);
    let fact = SpectralFactorization {
        eigenvalues,
        eigenvectors,
        weights: m.to_vec(),
    };
    fact.verify(l)?;
    Ok(fact)
}

impl SpectralFactorization {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn verify(&self, l: &ReversibleGenerator) -> Result<(), SemigroupError> {
        let scale = scale_of(&[l.max_exit_rate()]);
        let top = self.eigenvalues[0];
        if top.abs() > 1e-10 * scale || self.eigenvalues.iter().any(|v| *v > 1e-10 * scale) {
            return Err(SemigroupError::FactorizationCheck(format!(
                "top eigenvalue {top:e} is not zero"
            )));
        }
        let phi0 = self.eigenvectors.column(0);
        let spread = phi0.max() - phi0.min();
        if spread > 1e-8 * phi0.amax() {
            return Err(SemigroupError::FactorizationCheck(
                "ground state is not constant".into(),
            ));
        }
        // reconstruction of L in the m-symmetrized frame
        let n = self.len();
        let sq: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let u = DMatrix::from_fn(n, n, |i, k| self.eigenvectors[(i, k)] * sq[i]);
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        let rebuilt = &u * lam * u.transpose();
        let rates = l.rates();
        let err =
            DMatrix::from_fn(n, n, |i, j| rebuilt[(i, j)] - sq[i] * rates[(i, j)] / sq[j]).amax();
        if err > 1e-8 * scale {
            return Err(SemigroupError::FactorizationCheck(format!(
                "reconstruction error {err:e}"
            )));
        }
        Ok(())
    }

    /// Coefficients `⟨φ_k, f⟩_m`.
    fn project(&self, f: &[f64]) -> DVector<f64> {
        let weighted =
            DVector::from_iterator(f.len(), f.iter().zip(&self.weights).map(|(v, w)| v * w));
        self.eigenvectors.tr_mul(&weighted)
    }

    /// `Σ_k μ(λ_k) φ_k ⟨φ_k, f⟩_m` for a spectral multiplier `μ`.
    pub fn apply_multiplier(
        &self,
        f: &[f64],
        mult: impl Fn(f64) -> f64,
    ) -> Result<Field, SemigroupError> {
        if f.len() != self.len() {
            return Err(SpaceError::SizeMismatch {
                expected: self.len(),
                found: f.len(),
            }
            .into());
        }
        let mut c = self.project(f);
        for (ck, lam) in c.iter_mut().zip(&self.eigenvalues) {
            *ck *= mult(*lam);
        }
        Ok(Field::new(
            (&self.eigenvectors * c).iter().copied().collect(),
        ))
    }
}

/// `P_t f`.
pub fn heat_apply(
    fact: &SpectralFactorization,
    f: &[f64],
    t: f64,
) -> Result<Field, SemigroupError> {
    if t < 0.0 || t.is_nan() {
        return Err(SemigroupError::NegativeTime(t));
    }
    if t == 0.0 {
        if f.len() != fact.len() {
            return fact.apply_multiplier(f, |_| 1.0);
        }
        return Ok(Field::new(f.to_vec()));
    }
    fact.apply_multiplier(f, |lam| (lam * t).exp())
}

/// Transition probabilities `p_t(x, ·)`, i.e. `P_t` applied to indicators.
pub fn kernel_row(
    fact: &SpectralFactorization,
    x: usize,
    t: f64,
) -> Result<Vec<f64>, SemigroupError> {
    if t < 0.0 || t.is_nan() {
        return Err(SemigroupError::NegativeTime(t));
    }
    let n = fact.len();
    if x >= n {
        return Err(SpaceError::SizeMismatch {
            expected: n,
            found: x + 1,
        }
        .into());
    }
    let v = &fact.eigenvectors;
    Ok((0..n)
        .map(|y| {
            fact.weights[y]
                * (0..n)
                    .map(|k| (fact.eigenvalues[k] * t).exp() * v[(x, k)] * v[(y, k)])
                    .sum::<f64>()
        })
        .collect())
}

/// Evolves a mass vector `μ ↦ μ e^{tL}` by uniformization: `e^{tL}` is the
/// Poisson mixture of powers of the stochastic matrix `I + L/λ`, with `λ`
/// the largest exit rate. Every term is nonnegative, so small masses in the
/// tails keep their relative accuracy.
pub fn evolve_measure(
    l: &ReversibleGenerator,
    mass: &[f64],
    t: f64,
) -> Result<Vec<f64>, SemigroupError> {
    if t < 0.0 || t.is_nan() {
        return Err(SemigroupError::NegativeTime(t));
    }
    l.check_len(mass)?;
    let lambda = l.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        return Ok(mass.to_vec());
    }
    let n = l.len();
    let lt = lambda * t;
    let terms = (lt + 10.0 * lt.sqrt() + 30.0).ceil() as usize;
    let exit: Vec<f64> = (0..n)
        .map(|i| l.neighbors(i).iter().map(|&(_, r)| r).sum())
        .collect();
    let mut current = mass.to_vec();
    let mut next = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut log_w = -lt;
    for k in 0..=terms {
        if k > 0 {
            log_w += lt.ln() - (k as f64).ln();
            for j in 0..n {
                next[j] = current[j] * (1.0 - exit[j] / lambda);
            }
            for (i, &ci) in current.iter().enumerate() {
                if ci == 0.0 {
                    continue;
                }
                for &(j, r) in l.neighbors(i) {
                    next[j] += ci * r / lambda;
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        let w = log_w.exp();
        if w > 0.0 {
            for (o, c) in out.iter_mut().zip(&current) {
                *o += w * c;
            }
        }
    }
    Ok(out)
}

/// The smooth bump `exp(-1/(1-u²))`, `u = 2s - 3`, supported on `s ∈ [1, 2]`.
fn bump(s: f64) -> f64 {
    let u = 2.0 * s - 3.0;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

fn bump_derivative(s: f64) -> f64 {
    let u = 2.0 * s - 3.0;
    if u.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - u * u;
        bump(s) * (-4.0 * u / (d * d))
    }
}

/// Simpson nodes `s_k` and weights `w_k κ(s_k)`, `w_k κ′(s_k)` for the
/// normalized mollifier kernel; `Σ w_k κ(s_k) = 1` exactly.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub nodes: Vec<f64>,
    pub kappa: Vec<f64>,
    pub kappa_prime: Vec<f64>,
}

impl MollifierKernel {
    pub fn new() -> Self {
        let n = KERNEL_NODES;
        let h = 1.0 / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|k| 1.0 + k as f64 * h).collect();
        let simpson: Vec<f64> = (0..n)
            .map(|k| {
                let c = if k == 0 || k == n - 1 {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        let raw: Vec<f64> = nodes
            .iter()
            .zip(&simpson)
            .map(|(s, w)| w * bump(*s))
            .collect();
        let total: f64 = raw.iter().sum();
        let kappa = raw.iter().map(|v| v / total).collect();
        let kappa_prime = nodes
            .iter()
            .zip(&simpson)
            .map(|(s, w)| w * bump_derivative(*s) / total)
            .collect();
        Self {
            nodes,
            kappa,
            kappa_prime,
        }
    }
}

impl Default for MollifierKernel {
    fn default() -> Self {
        Self::new()
    }
}

/// `𝔓_ε f = ∫ P_{εs} f κ(s) ds`.
pub fn mollify(fact: &SpectralFactorization, f: &[f64], eps: f64) -> Result<Field, SemigroupError> {
    if !(eps > 0.0) {
        return Err(SemigroupError::NonpositiveEpsilon(eps));
    }
    let k = MollifierKernel::new();
    fact.apply_multiplier(f, |lam| {
        k.nodes
            .iter()
            .zip(&k.kappa)
            .map(|(s, w)| w * (lam * eps * s).exp())
            .sum()
    })
}

/// Compares `L𝔓_ε f` with `-(1/ε) ∫ P_{εs} f κ′(s) ds`, both by the same quadrature.
pub fn mollifier_generator_check(
    fact: &SpectralFactorization,
    l: &ReversibleGenerator,
    f: &[f64],
    eps: f64,
) -> Result<CheckReport, SemigroupError> {
    let lhs = l.apply(&mollify(fact, f, eps)?)?;
    let k = MollifierKernel::new();
    let rhs = fact.apply_multiplier(f, |lam| {
        -k.nodes
            .iter()
            .zip(&k.kappa_prime)
            .map(|(s, w)| w * (lam * eps * s).exp())
            .sum::<f64>()
            / eps
    })?;
    let scale = scale_of(&[lhs.max_abs(), rhs.max_abs()]);
    let (state, residual) = lhs
        .iter()
        .zip(rhs.iter())
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .fold((0, 0.0), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    Ok(CheckReport::identity(
        "mollifier_generator",
        Location::State(state),
        residual,
        1e-6 * scale,
    ))
}

/// `I_{2K}(t) = (e^{2Kt} - 1) / 2K`, equal to `t` at `K = 0`.
pub fn i_2k(k: f64, t: f64) -> f64 {
    let x = 2.0 * k * t;
    if x.abs() < 1e-8 {
        t * (1.0 + 0.5 * x)
    } else {
        x.exp_m1() / (2.0 * k)
    }
}

/// How much slack a gradient-estimate check is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToleranceMode {
    /// Finite chain: `1e-8·scale`, `K` must not exceed the certified curvature.
    Exact,
    /// Discretized diffusion with step `h`: tolerance `c·h`, and `K` may
    /// exceed the certified curvature by `h`.
    Grid { h: f64, c: f64 },
}

impl ToleranceMode {
    /// Grid mode with the default constant `10·max|f|·max(1, |K|)`.
    pub fn grid_default(h: f64, f: &[f64], k: f64) -> Self {
        let fmax = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        ToleranceMode::Grid {
            h,
            c: 10.0 * fmax * k.abs().max(1.0),
        }
    }

    fn tolerance(&self, lhs: f64, rhs: f64) -> f64 {
        match self {
            ToleranceMode::Exact => 1e-8 * scale_of(&[lhs, rhs]),
            ToleranceMode::Grid { h, c } => c * h,
        }
    }

    fn curvature_allowance(&self) -> f64 {
        match self {
            ToleranceMode::Exact => 1e-9,
            ToleranceMode::Grid { h, .. } => *h,
        }
    }
}

/// Checks `K` against the certified global curvature of `l`.
pub fn check_curvature_claim(
    l: &ReversibleGenerator,
    k: f64,
    allowance: f64,
) -> Result<(), SemigroupError> {
    let certified = gamma::curvature_global(l)?;
    let ok = match certified {
        Curvature::Finite(c) => k <= c + allowance,
        Curvature::Unbounded => true,
        Curvature::NoLowerBound => false,
    };
    if ok {
        Ok(())
    } else {
        Err(SemigroupError::KExceedsCurvature {
            k,
            curvature: certified.to_string(),
            allowance,
        })
    }
}

/// For each `t` and `α`: `Γ(P_t f)^α ≤ e^{-2αKt} P_t(Γ(f)^α)` pointwise, and
/// for each `t`: `2 I_{2K}(t) Γ(P_t f) ≤ P_t(f²) - (P_t f)²`.
pub fn gradient_estimate_report(
    fact: &SpectralFactorization,
    l: &ReversibleGenerator,
    f: &[f64],
    k: f64,
    t_list: &[f64],
    alpha_list: &[f64],
    mode: ToleranceMode,
) -> Result<Vec<CheckReport>, SemigroupError> {
    l.check_len(f)?;
    if let Some(&a) = alpha_list.iter().find(|a| !(0.5..=1.0).contains(*a)) {
        return Err(SemigroupError::AlphaOutOfRange(a));
    }
    if let Some(&t) = t_list.iter().find(|t| !(**t >= 0.0)) {
        return Err(SemigroupError::NegativeTime(t));
    }
    check_curvature_claim(l, k, mode.curvature_allowance())?;
    let gf = gamma::gamma(l, f, f)?;
    let f2: Vec<f64> = f.iter().map(|v| v * v).collect();
    let mut out = Vec::new();
    for &t in t_list {
        let pf = heat_apply(fact, f, t)?;
        let g_pf = gamma::gamma(l, &pf, &pf)?;
        for &alpha in alpha_list {
            let powered: Vec<f64> = gf.iter().map(|v| v.max(0.0).powf(alpha)).collect();
            let p_powered = heat_apply(fact, &powered, t)?;
            let decay = (-2.0 * alpha * k * t).exp();
            let samples = (0..l.len()).map(|x| {
                let lhs = g_pf[x].max(0.0).powf(alpha);
                let rhs = decay * p_powered[x];
                (Location::State(x), lhs, rhs, mode.tolerance(lhs, rhs))
            });
            let mut r =
                CheckReport::worst(&format!("gradient_commutation[alpha={alpha}]"), samples)
                    .expect("nonempty space");
            r.location = Location::Label(format!("t={t} {}", r.location));
            out.push(r);
        }
        let pf2 = heat_apply(fact, &f2, t)?;
        let i = i_2k(k, t);
        let samples = (0..l.len()).map(|x| {
            let lhs = 2.0 * i * g_pf[x];
            let rhs = pf2[x] - pf[x] * pf[x];
            (Location::State(x), lhs, rhs, mode.tolerance(lhs, rhs))
        });
        let mut r = CheckReport::worst("reverse_poincare", samples).expect("nonempty space");
        r.location = Location::Label(format!("t={t} {}", r.location));
        out.push(r);
    }
    Ok(out)
}

/// `max(0, -min slack)` over a set of reports.
pub fn violation(reports: &[CheckReport]) -> f64 {
    reports.iter().fold(0.0_f64, |acc, r| acc.max(-r.slack))
}
