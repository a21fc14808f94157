//! Carré du champ `Γ`, iterated `Γ₂`, the trilinear `H` operator, the weak
//! `Γ₂` functional and Bakry-Émery curvature of finite reversible chains.
//!
//! Curvature at a state `x` is the largest `K` with `Γ₂(f)(x) ≥ K Γ(f)(x)`
//! for every field `f`. Both sides are quadratic forms in `f` which only see
//! the values of `f` on the two-step neighbourhood of `x`; we assemble them
//! there, remove the constants (the only common null direction), and bisect
//! on `λ_min(A - K B)`, which is nonincreasing in `K` because `B ⪰ 0`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::report::{scale_of, CheckReport, Location};
use crate::space::{Field, ReversibleGenerator, SpaceError};

/// Bisection iteration cap.
pub const BISECTION_STEPS: usize = 60;
/// `B(x)` eigenvalues below `-INDEFINITE_TOL` mean the generator is broken.
pub const INDEFINITE_TOL: f64 = 1e-8;
/// Postcondition tolerance on `λ_min(A - K B)` at the returned `K`.
pub const PENCIL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GammaError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("state index {index} out of range for {n} states")]
    StateOutOfRange { index: usize, n: usize },
    #[error("Γ form at state {state} has eigenvalue {eigenvalue:e}; the generator is not Markov")]
    IndefiniteGamma { state: usize, eigenvalue: f64 },
    #[error("premise violated at state {state}: {what}")]
    PremiseViolation { state: usize, what: String },
}

/// Bakry-Émery curvature value, with the unbounded cases as sentinels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curvature {
    Finite(f64),
    /// `Γ(·)(x) ≡ 0` and `Γ₂(·)(x) ⪰ 0`: every `K` works.
    Unbounded,
    /// `Γ₂(·)(x)` is negative on a direction where `Γ(·)(x)` vanishes.
    NoLowerBound,
}

impl Curvature {
    pub fn finite(self) -> Option<f64> {
        match self {
            Curvature::Finite(k) => Some(k),
            _ => None,
        }
    }

    fn rank(self) -> (u8, f64) {
        match self {
            Curvature::NoLowerBound => (0, 0.0),
            Curvature::Finite(k) => (1, k),
            Curvature::Unbounded => (2, 0.0),
        }
    }

    pub fn min(self, other: Self) -> Self {
        let (a, b) = (self.rank(), other.rank());
        if a.0 < b.0 || (a.0 == b.0 && a.1 <= b.1) {
            self
        } else {
            other
        }
    }
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Curvature::Finite(k) => write!(f, "{k}"),
            Curvature::Unbounded => f.write_str("+inf"),
            Curvature::NoLowerBound => f.write_str("-inf"),
        }
    }
}

fn check2(l: &ReversibleGenerator, f: &[f64], g: &[f64]) -> Result<(), SpaceError> {
    l.check_len(f)?;
    l.check_len(g)
}

/// `Γ(f,g) = ½(L(fg) - f Lg - g Lf)`, evaluated as `½ Σ_y L_xy (f_y - f_x)(g_y - g_x)`.
pub fn gamma(l: &ReversibleGenerator, f: &[f64], g: &[f64]) -> Result<Field, GammaError> {
    check2(l, f, g)?;
    Ok(gamma_unchecked(l, f, g))
}

pub(crate) fn gamma_unchecked(l: &ReversibleGenerator, f: &[f64], g: &[f64]) -> Field {
    Field::new(
        (0..l.len())
            .map(|x| {
                0.5 * l
                    .neighbors(x)
                    .iter()
                    .map(|&(y, r)| r * (f[y] - f[x]) * (g[y] - g[x]))
                    .sum::<f64>()
            })
            .collect(),
    )
}

/// `Γ₂(f,g) = ½(LΓ(f,g) - Γ(f,Lg) - Γ(g,Lf))`.
pub fn gamma2(l: &ReversibleGenerator, f: &[f64], g: &[f64]) -> Result<Field, GammaError> {
    check2(l, f, g)?;
    Ok(gamma2_unchecked(l, f, g))
}

pub(crate) fn gamma2_unchecked(l: &ReversibleGenerator, f: &[f64], g: &[f64]) -> Field {
    let lf = l.apply_unchecked(f);
    let lg = l.apply_unchecked(g);
    let l_gamma = l.apply_unchecked(&gamma_unchecked(l, f, g));
    let a = gamma_unchecked(l, f, &lg);
    let b = gamma_unchecked(l, g, &lf);
    Field::new(
        (0..l.len())
            .map(|x| 0.5 * (l_gamma[x] - a[x] - b[x]))
            .collect(),
    )
}

/// Weak form `∫ (½ Γ(f) Lφ - Γ(f, Lf) φ) dm`.
pub fn gamma2_weak(l: &ReversibleGenerator, f: &[f64], phi: &[f64]) -> Result<f64, GammaError> {
    check2(l, f, phi)?;
    let gf = gamma_unchecked(l, f, f);
    let lf = l.apply_unchecked(f);
    let g_f_lf = gamma_unchecked(l, f, &lf);
    let lphi = l.apply_unchecked(phi);
    let integrand: Vec<f64> = (0..l.len())
        .map(|x| 0.5 * gf[x] * lphi[x] - g_f_lf[x] * phi[x])
        .collect();
    Ok(l.measure().integrate(&integrand))
}

/// `H[f; g, h] = ½(Γ(g, Γ(f,h)) + Γ(h, Γ(f,g)) - Γ(f, Γ(g,h)))`.
pub fn h_operator(
    l: &ReversibleGenerator,
    f: &[f64],
    g: &[f64],
    h: &[f64],
) -> Result<Field, GammaError> {
    check2(l, f, g)?;
    l.check_len(h)?;
    let gfh = gamma_unchecked(l, f, h);
    let gfg = gamma_unchecked(l, f, g);
    let ggh = gamma_unchecked(l, g, h);
    let a = gamma_unchecked(l, g, &gfh);
    let b = gamma_unchecked(l, h, &gfg);
    let c = gamma_unchecked(l, f, &ggh);
    Ok(Field::new(
        (0..l.len()).map(|x| 0.5 * (a[x] + b[x] - c[x])).collect(),
    ))
}

/// The pair of quadratic forms `f ↦ Γ₂(f)(x)` and `f ↦ Γ(f)(x)`, restricted
/// to the states they depend on.
#[derive(Debug, Clone)]
pub struct QuadraticFormPair {
    pub state: usize,
    /// Global indices of the local coordinates, ascending.
    pub support: Vec<usize>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl QuadraticFormPair {
    /// Assembles both forms at `x` by summing rank-one and rank-two edge
    /// contributions over the two-step neighbourhood.
    pub fn assemble(l: &ReversibleGenerator, x: usize) -> Result<Self, GammaError> {
        let n = l.len();
        if x >= n {
            return Err(GammaError::StateOutOfRange { index: x, n });
        }
        let mut ball = BTreeSet::from([x]);
        for &(y, _) in l.neighbors(x) {
            ball.insert(y);
            for &(z, _) in l.neighbors(y) {
                ball.insert(z);
            }
        }
        let support: Vec<usize> = ball.into_iter().collect();
        let s = support.len();
        let local = |i: usize| support.binary_search(&i).expect("index inside the ball");
        let lx = local(x);
        let mut a = DMatrix::zeros(s, s);
        let mut b = DMatrix::zeros(s, s);

        // (Lf)_y - (Lf)_x as a linear functional of f on the ball
        let generator_row = |y: usize| -> Vec<f64> {
            let mut row = vec![0.0; s];
            for &(z, r) in l.neighbors(y) {
                row[local(z)] += r;
                row[local(y)] -= r;
            }
            row
        };
        let lx_row = generator_row(x);

        for &(y, rxy) in l.neighbors(x) {
            let ly = local(y);
            // B += ½ L_xy (e_y - e_x)(e_y - e_x)^T
            b[(ly, ly)] += 0.5 * rxy;
            b[(lx, lx)] += 0.5 * rxy;
            b[(ly, lx)] -= 0.5 * rxy;
            b[(lx, ly)] -= 0.5 * rxy;

            // ½ L Γ(f)(x) = ¼ Σ_y L_xy Σ_z L_yz (f_z - f_y)^2
            for &(z, ryz) in l.neighbors(y) {
                let lz = local(z);
                let w = 0.25 * rxy * ryz;
                a[(lz, lz)] += w;
                a[(ly, ly)] += w;
                a[(lz, ly)] -= w;
                a[(ly, lz)] -= w;
            }

            // -Γ(f, Lf)(x) = -½ Σ_y L_xy (f_y - f_x)((Lf)_y - (Lf)_x)
            let mut diff = generator_row(y);
            for (d, v) in diff.iter_mut().zip(&lx_row) {
                *d -= v;
            }
            for (k, dk) in diff.iter().enumerate() {
                if *dk == 0.0 {
                    continue;
                }
                let w = 0.25 * rxy * dk;
                a[(ly, k)] -= w;
                a[(k, ly)] -= w;
                a[(lx, k)] += w;
                a[(k, lx)] += w;
            }
        }
        // the -Γ(f)(x) half of ½ L Γ(f)(x)
        let exit: f64 = l.neighbors(x).iter().map(|&(_, r)| r).sum();
        a -= &b * (0.5 * exit);
        Ok(Self {
            state: x,
            support,
            a,
            b,
        })
    }

    /// Value of `Γ₂(f)(x)` and `Γ(f)(x)` for a global field.
    pub fn evaluate(&self, f: &[f64]) -> (f64, f64) {
        let v: Vec<f64> = self.support.iter().map(|&i| f[i]).collect();
        let quad = |m: &DMatrix<f64>| -> f64 {
            let mut acc = 0.0;
            for i in 0..v.len() {
                for j in 0..v.len() {
                    acc += v[i] * m[(i, j)] * v[j];
                }
            }
            acc
        };
        (quad(&self.a), quad(&self.b))
    }
}

/// Result of the pencil search at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilSolution {
    pub curvature: Curvature,
    /// `λ_min(A - K B)` after deflating constants, at the returned `K`.
    pub residual: f64,
    /// `max(1, ‖A‖, ‖B‖)` in the deflated coordinates.
    pub scale: f64,
}

/// Largest `K` with `A(x) - K B(x) ⪰ 0`.
pub fn curvature_at(l: &ReversibleGenerator, x: usize) -> Result<Curvature, GammaError> {
    pencil_at(l, x).map(|p| p.curvature)
}

pub fn pencil_at(l: &ReversibleGenerator, x: usize) -> Result<PencilSolution, GammaError> {
    let forms = QuadraticFormPair::assemble(l, x)?;
    let s = forms.support.len();
    let q = linalg::helmert_basis(s);
    let qt = q.transpose();
    let a = &qt * &forms.a * &q;
    let b = &qt * &forms.b * &q;
    let scale = scale_of(&[linalg::gershgorin_radius(&a), linalg::gershgorin_radius(&b)]);
    if s < 2 {
        return Ok(PencilSolution {
            curvature: Curvature::Unbounded,
            residual: 0.0,
            scale,
        });
    }

    let (b_vals, b_vecs) = linalg::jacobi_eigen(&b)?;
    let b_min = b_vals[0];
    let b_max = *b_vals.last().expect("nonempty");
    if b_min < -INDEFINITE_TOL * scale {
        return Err(GammaError::IndefiniteGamma {
            state: x,
            eigenvalue: b_min,
        });
    }
    let feasible_tol = 1e-12 * scale;
    let lambda_min = |k: f64| -> Result<f64, GammaError> {
        let m = &a - &b * k;
        Ok(linalg::jacobi_eigenvalues(&m)?[0])
    };
    if b_max <= feasible_tol {
        let a_min = linalg::jacobi_eigenvalues(&a)?[0];
        let curvature = if a_min >= -feasible_tol {
            Curvature::Unbounded
        } else {
            Curvature::NoLowerBound
        };
        return Ok(PencilSolution {
            curvature,
            residual: a_min,
            scale,
        });
    }

    // Upper bracket: the Rayleigh quotient along the top eigenvector of B
    // certifies infeasibility just above it.
    let top = b_vecs.column(b_vals.len() - 1).into_owned();
    let rayleigh = (top.transpose() * &a * &top)[(0, 0)] / b_max;
    let mut hi = rayleigh + feasible_tol.max(1e-12 * rayleigh.abs());
    // Lower bracket from Gershgorin: A - K B ⪰ 0 once -K b_pos ≥ ‖A‖ on the
    // range of B, provided A is nonnegative on ker B.
    let positive_floor = b_vals
        .iter()
        .copied()
        .find(|v| *v > feasible_tol)
        .unwrap_or(b_max);
    let mut lo = (-linalg::gershgorin_radius(&a) / positive_floor).min(hi - 1.0);
    let mut expansions = 0;
    while lambda_min(lo)? < -feasible_tol {
        lo = 2.0 * lo - 1.0;
        expansions += 1;
        if expansions > 200 || !lo.is_finite() {
            return Ok(PencilSolution {
                curvature: Curvature::NoLowerBound,
                residual: lambda_min(lo)?,
                scale,
            });
        }
    }
    while lambda_min(hi)? >= -feasible_tol {
        hi = hi + (hi - lo).max(1.0);
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lambda_min(mid)? >= -feasible_tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PencilSolution {
        curvature: Curvature::Finite(lo),
        residual: lambda_min(lo)?,
        scale,
    })
}

/// Curvature at every state.
pub fn curvature_profile(l: &ReversibleGenerator) -> Result<Vec<Curvature>, GammaError> {
    (0..l.len()).map(|x| curvature_at(l, x)).collect()
}

/// `min_x curvature_at(L, x)`.
pub fn curvature_global(l: &ReversibleGenerator) -> Result<Curvature, GammaError> {
    let profile = curvature_profile(l)?;
    Ok(min_curvature(profile.into_iter()))
}

fn min_curvature(it: impl Iterator<Item = Curvature>) -> Curvature {
    it.fold(Curvature::Unbounded, Curvature::min)
}

/// Grid nodes farther than `(b - a)/10` from both endpoints.
pub fn interior_nodes(l: &ReversibleGenerator) -> Option<Vec<usize>> {
    let p = l.space().positions()?;
    let (a, b) = (p[0], p[p.len() - 1]);
    let margin = (b - a) / 10.0;
    Some(
        p.iter()
            .enumerate()
            .filter(|(_, &x)| x - a > margin && b - x > margin)
            .map(|(i, _)| i)
            .collect(),
    )
}

/// Minimum curvature over [`interior_nodes`]; `None` for abstract chains.
pub fn curvature_interior(l: &ReversibleGenerator) -> Result<Option<Curvature>, GammaError> {
    let Some(nodes) = interior_nodes(l) else {
        return Ok(None);
    };
    let values = nodes
        .into_iter()
        .map(|x| curvature_at(l, x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(min_curvature(values.into_iter())))
}

/// Both conclusions of the discrete energy lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct LapmeasReport {
    /// `E(u) ≤ ∫ u g dm`.
    pub energy: CheckReport,
    /// `∫ g dm ≥ 0`.
    pub mass: CheckReport,
}

impl LapmeasReport {
    pub fn passed(&self) -> bool {
        self.energy.pass && self.mass.pass
    }
}

/// For `u ≥ 0` with `Lu ≥ -g`: checks `E(u) ≤ ∫ug dm` and `∫g dm ≥ 0`.
pub fn lapmeas_check(
    l: &ReversibleGenerator,
    u: &[f64],
    g: &[f64],
) -> Result<LapmeasReport, GammaError> {
    check2(l, u, g)?;
    let lu = l.apply_unchecked(u);
    let premise_scale = scale_of(&[
        lu.max_abs(),
        g.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())),
    ]);
    for x in 0..l.len() {
        if u[x] < 0.0 {
            return Err(GammaError::PremiseViolation {
                state: x,
                what: format!("u = {} is negative", u[x]),
            });
        }
        if lu[x] + g[x] < -1e-10 * premise_scale {
            return Err(GammaError::PremiseViolation {
                state: x,
                what: format!("Lu + g = {:e}", lu[x] + g[x]),
            });
        }
    }
    let m = l.measure();
    let energy = -m.inner(u, &lu);
    let ug = m.inner(u, g);
    let mass = m.integrate(g);
    let tol = 1e-10 * scale_of(&[energy, ug]);
    Ok(LapmeasReport {
        energy: CheckReport::new(
            "lapmeas_energy",
            Location::Label("global".into()),
            energy,
            ug,
            tol,
        ),
        mass: CheckReport::new(
            "lapmeas_mass",
            Location::Label("global".into()),
            0.0,
            mass,
            1e-10 * scale_of(&[mass]),
        ),
    })
}

/// `E(Γ(f)) ≤ -2 ∫ (Γ(f) Γ(f, Lf) + K Γ(f)²) dm`, obtained from the energy
/// lemma with `u = Γ(f)` and `g = -2(Γ(f, Lf) + K Γ(f))`.
pub fn gamma_energy_check(
    l: &ReversibleGenerator,
    f: &[f64],
    k: f64,
) -> Result<CheckReport, GammaError> {
    l.check_len(f)?;
    let gf = gamma_unchecked(l, f, f);
    let lf = l.apply_unchecked(f);
    let g_f_lf = gamma_unchecked(l, f, &lf);
    let g: Vec<f64> = (0..l.len())
        .map(|x| -2.0 * (g_f_lf[x] + k * gf[x]))
        .collect();
    let report = lapmeas_check(l, &gf, &g)?;
    let mut energy = report.energy;
    energy.name = "gamma_energy_bound".into();
    // the premise tolerance is relative, so the scale of the integrals governs
    energy.tolerance = 1e-8 * scale_of(&[energy.lhs, energy.rhs]);
    energy.pass = energy.slack >= -energy.tolerance;
    Ok(energy)
}

/// Weak curvature certificate `Γ₂(f; φ) ≥ K ∫ Γ(f) φ dm` for one pair.
pub fn weak_be_check(
    l: &ReversibleGenerator,
    f: &[f64],
    phi: &[f64],
    k: f64,
) -> Result<CheckReport, GammaError> {
    let lhs_weak = gamma2_weak(l, f, phi)?;
    let gf = gamma_unchecked(l, f, f);
    let rhs = k * l.measure().inner(&gf, phi);
    let tol = 1e-8 * scale_of(&[lhs_weak, rhs]);
    // inequality reads K∫Γφ ≤ Γ₂(f;φ)
    Ok(CheckReport::new(
        "weak_be",
        Location::Label("global".into()),
        rhs,
        lhs_weak,
        tol,
    ))
}
