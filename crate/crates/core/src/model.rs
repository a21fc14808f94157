//! The smooth model space `(ℝ, e^{-V(x)} dx)` with polynomial test functions.
//!
//! Here `Γ(f,g) = f′g′`, `Lf = f″ − V′f′`, `Γ₂(f,g) = f″g″ + V″f′g′` and
//! `H[f;g,h] = f″g′h′`, so every calculus rule becomes an identity between
//! polynomials and is checked coefficient by coefficient.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{MultivariatePoly, PolyError, UnivariatePoly};
use crate::report::{scale_of, CheckReport, Location};

/// Relative coefficient tolerance for zero-difference polynomials.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Relative tolerance for pointwise inequality checks.
pub const POINTWISE_TOL: f64 = 1e-10;
/// Number of points where residual polynomials are scanned for a location.
const SCAN_POINTS: usize = 101;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("V'' - K = {value:e} < 0 at x = {x}")]
    CurvaturePremiseViolation { x: f64, value: f64 },
    #[error("interval [{0}, {1}] is empty")]
    EmptyInterval(f64, f64),
    #[error("need at least {needed} test functions, got {found}")]
    TooFewFunctions { needed: usize, found: usize },
    #[error("need at least 2 sample points")]
    TooFewSamples,
}

pub fn model_gamma(f: &UnivariatePoly, g: &UnivariatePoly) -> Result<UnivariatePoly, PolyError> {
    f.derivative().mul(&g.derivative())
}

pub fn model_generator(
    v: &UnivariatePoly,
    f: &UnivariatePoly,
) -> Result<UnivariatePoly, PolyError> {
    let df = f.derivative();
    Ok(df.derivative().sub(&v.derivative().mul(&df)?))
}

pub fn model_gamma2(
    v: &UnivariatePoly,
    f: &UnivariatePoly,
    g: &UnivariatePoly,
) -> Result<UnivariatePoly, PolyError> {
    let (df, dg) = (f.derivative(), g.derivative());
    let second = df.derivative().mul(&dg.derivative())?;
    let drift = v.derivative().derivative().mul(&df)?.mul(&dg)?;
    Ok(second.add(&drift))
}

pub fn model_h(
    f: &UnivariatePoly,
    g: &UnivariatePoly,
    h: &UnivariatePoly,
) -> Result<UnivariatePoly, PolyError> {
    f.derivative()
        .derivative()
        .mul(&g.derivative())?
        .mul(&h.derivative())
}

/// `½(Γ(g, Γ(f,h)) + Γ(h, Γ(f,g)) − Γ(f, Γ(g,h)))` built from `model_gamma`.
pub fn h_from_gamma(
    f: &UnivariatePoly,
    g: &UnivariatePoly,
    h: &UnivariatePoly,
) -> Result<UnivariatePoly, PolyError> {
    let a = model_gamma(g, &model_gamma(f, h)?)?;
    let b = model_gamma(h, &model_gamma(f, g)?)?;
    let c = model_gamma(f, &model_gamma(g, h)?)?;
    Ok(a.add(&b).sub(&c).scale(0.5))
}

/// `½(LΓ(f,g) − Γ(f,Lg) − Γ(g,Lf))` built from `model_gamma` and `model_generator`.
pub fn gamma2_from_generator(
    v: &UnivariatePoly,
    f: &UnivariatePoly,
    g: &UnivariatePoly,
) -> Result<UnivariatePoly, PolyError> {
    let l_gamma = model_generator(v, &model_gamma(f, g)?)?;
    let a = model_gamma(f, &model_generator(v, g)?)?;
    let b = model_gamma(g, &model_generator(v, f)?)?;
    Ok(l_gamma.sub(&a).sub(&b).scale(0.5))
}

/// Compares two polynomials coefficientwise; the location is the scan point
/// of `interval` where the difference is largest.
pub fn polynomial_identity(
    name: &str,
    lhs: &UnivariatePoly,
    rhs: &UnivariatePoly,
    interval: (f64, f64),
) -> CheckReport {
    let diff = lhs.sub(rhs);
    let residual = diff.max_abs_coeff();
    let scale = scale_of(&[lhs.max_abs_coeff(), rhs.max_abs_coeff()]);
    let (a, b) = interval;
    let worst = (0..SCAN_POINTS)
        .map(|i| a + (b - a) * i as f64 / (SCAN_POINTS - 1) as f64)
        .max_by(|x, y| diff.eval(*x).abs().total_cmp(&diff.eval(*y).abs()))
        .unwrap_or(a);
    CheckReport::identity(name, Location::Point(worst), residual, IDENTITY_TOL * scale)
}

fn check_interval(interval: (f64, f64)) -> Result<(), ModelError> {
    if interval.0 < interval.1 && interval.0.is_finite() && interval.1.is_finite() {
        Ok(())
    } else {
        Err(ModelError::EmptyInterval(interval.0, interval.1))
    }
}

fn partials(
    phi: &MultivariatePoly,
    fs: &[UnivariatePoly],
) -> Result<Vec<UnivariatePoly>, PolyError> {
    (0..phi.nvars())
        .map(|i| phi.partial(i).compose(fs))
        .collect()
}

fn hessian(
    phi: &MultivariatePoly,
    fs: &[UnivariatePoly],
) -> Result<Vec<Vec<UnivariatePoly>>, PolyError> {
    (0..phi.nvars())
        .map(|i| {
            let pi = phi.partial(i);
            (0..phi.nvars())
                .map(|j| pi.partial(j).compose(fs))
                .collect()
        })
        .collect()
}

/// Leibniz rule, chain rule, diffusion composition, product rule for `L`,
/// the `H` formula, the symmetry identity of `H` and the definition of `Γ₂`.
///
/// `Φ` and `Ψ` take `f_list.len()` arguments and vanish at the origin.
pub fn verify_calculus_rules(
    f_list: &[UnivariatePoly],
    v: &UnivariatePoly,
    phi: &MultivariatePoly,
    psi: &MultivariatePoly,
    interval: (f64, f64),
) -> Result<Vec<CheckReport>, ModelError> {
    check_interval(interval)?;
    if f_list.is_empty() {
        return Err(ModelError::TooFewFunctions {
            needed: 1,
            found: 0,
        });
    }
    phi.require_vanishing_at_origin()?;
    psi.require_vanishing_at_origin()?;
    let n = f_list.len();
    let f = &f_list[0];
    let g = &f_list[1 % n];
    let h = &f_list[2 % n];
    let mut out = Vec::new();

    let fg = f.mul(g)?;
    let lhs = model_gamma(&fg, h)?;
    let rhs = f
        .mul(&model_gamma(g, h)?)?
        .add(&g.mul(&model_gamma(f, h)?)?);
    out.push(polynomial_identity("leibniz", &lhs, &rhs, interval));

    let lhs = model_gamma(&fg, &fg)?;
    let rhs = f
        .pow(2)?
        .mul(&model_gamma(g, g)?)?
        .add(&g.pow(2)?.mul(&model_gamma(f, f)?)?)
        .add(&fg.mul(&model_gamma(f, g)?)?.scale(2.0));
    out.push(polynomial_identity("leibniz_square", &lhs, &rhs, interval));

    let phi_f = phi.compose(f_list)?;
    let psi_f = psi.compose(f_list)?;
    let dphi = partials(phi, f_list)?;
    let dpsi = partials(psi, f_list)?;
    let mut rhs = UnivariatePoly::zero();
    for i in 0..n {
        for j in 0..n {
            let gij = model_gamma(&f_list[i], &f_list[j])?;
            rhs = rhs.add(&dphi[i].mul(&dpsi[j])?.mul(&gij)?);
        }
    }
    out.push(polynomial_identity(
        "chain_rule",
        &model_gamma(&phi_f, &psi_f)?,
        &rhs,
        interval,
    ));

    let d2phi = hessian(phi, f_list)?;
    let mut rhs = UnivariatePoly::zero();
    for i in 0..n {
        rhs = rhs.add(&dphi[i].mul(&model_generator(v, &f_list[i])?)?);
        for j in 0..n {
            let gij = model_gamma(&f_list[i], &f_list[j])?;
            rhs = rhs.add(&d2phi[i][j].mul(&gij)?);
        }
    }
    out.push(polynomial_identity(
        "diffusion_composition",
        &model_generator(v, &phi_f)?,
        &rhs,
        interval,
    ));

    let lhs = model_generator(v, &fg)?;
    let rhs = f
        .mul(&model_generator(v, g)?)?
        .add(&g.mul(&model_generator(v, f)?)?)
        .add(&model_gamma(f, g)?.scale(2.0));
    out.push(polynomial_identity(
        "product_generator",
        &lhs,
        &rhs,
        interval,
    ));

    out.push(polynomial_identity(
        "h_formula",
        &h_from_gamma(f, g, h)?,
        &model_h(f, g, h)?,
        interval,
    ));

    let lhs = h_from_gamma(f, g, h)?.add(&h_from_gamma(g, f, h)?);
    let rhs = model_gamma(&model_gamma(f, g)?, h)?;
    out.push(polynomial_identity("h_symmetry", &lhs, &rhs, interval));

    out.push(polynomial_identity(
        "gamma2_definition",
        &gamma2_from_generator(v, f, g)?,
        &model_gamma2(v, f, g)?,
        interval,
    ));
    Ok(out)
}

/// `Γ₂(Φ(f)) = Σ Φ_i Φ_j Γ₂(f_i,f_j) + 2 Σ Φ_i Φ_jk H[f_i; f_j, f_k]
///            + Σ Φ_ik Φ_jh Γ(f_i,f_j) Γ(f_k,f_h)`.
pub fn verify_fundamental_identity(
    f_list: &[UnivariatePoly],
    v: &UnivariatePoly,
    phi: &MultivariatePoly,
    interval: (f64, f64),
) -> Result<CheckReport, ModelError> {
    check_interval(interval)?;
    phi.require_vanishing_at_origin()?;
    let n = f_list.len();
    let phi_f = phi.compose(f_list)?;
    let lhs = model_gamma2(v, &phi_f, &phi_f)?;
    let d1 = partials(phi, f_list)?;
    let d2 = hessian(phi, f_list)?;
    let gam: Vec<Vec<UnivariatePoly>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| model_gamma(&f_list[i], &f_list[j]))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut rhs = UnivariatePoly::zero();
    for i in 0..n {
        for j in 0..n {
            let g2 = model_gamma2(v, &f_list[i], &f_list[j])?;
            rhs = rhs.add(&d1[i].mul(&d1[j])?.mul(&g2)?);
            for k in 0..n {
                if !d2[j][k].is_zero() {
                    let h = model_h(&f_list[i], &f_list[j], &f_list[k])?;
                    rhs = rhs.add(&d1[i].mul(&d2[j][k])?.mul(&h)?.scale(2.0));
                }
                for hh in 0..n {
                    if d2[i][k].is_zero() || d2[j][hh].is_zero() {
                        continue;
                    }
                    let term = d2[i][k]
                        .mul(&d2[j][hh])?
                        .mul(&gam[i][j])?
                        .mul(&gam[k][hh])?;
                    rhs = rhs.add(&term);
                }
            }
        }
    }
    Ok(polynomial_identity(
        "fundamental_identity",
        &lhs,
        &rhs,
        interval,
    ))
}

/// Certifies `V″ ≥ K` on `interval` by sampling `samples` points and
/// evaluating at the critical points of `V″`.
pub fn certify_curvature(
    v: &UnivariatePoly,
    k: f64,
    interval: (f64, f64),
    samples: usize,
) -> Result<(), ModelError> {
    check_interval(interval)?;
    let w = v
        .derivative()
        .derivative()
        .sub(&UnivariatePoly::constant(k));
    let (a, b) = interval;
    let samples = samples.max(2);
    let mut candidates: Vec<f64> = (0..samples)
        .map(|i| a + (b - a) * i as f64 / (samples - 1) as f64)
        .collect();
    candidates.extend(
        w.derivative()
            .real_roots()
            .into_iter()
            .filter(|r| *r >= a && *r <= b),
    );
    let tol = 1e-12 * scale_of(&[w.max_abs_coeff(), k]);
    for x in candidates {
        let value = w.eval(x);
        if value < -tol {
            return Err(ModelError::CurvaturePremiseViolation { x, value });
        }
    }
    Ok(())
}

/// Pointwise checks of
/// `H[f;g,h]² ≤ (Γ₂f − KΓf)ΓgΓh`,
/// `√Γ(Γ(f,g)) ≤ √(Γ₂f − KΓf)√Γg + √(Γ₂g − KΓg)√Γf`,
/// `Γ(Γf) ≤ 4(Γ₂f − KΓf)Γf`
/// and `H[f;g,h] + H[g;f,h] = Γ(Γ(f,g),h)` at `n_samples` points.
pub fn verify_theorem_estimates(
    f: &UnivariatePoly,
    g: &UnivariatePoly,
    h: &UnivariatePoly,
    v: &UnivariatePoly,
    k: f64,
    interval: (f64, f64),
    n_samples: usize,
) -> Result<Vec<CheckReport>, ModelError> {
    if n_samples < 2 {
        return Err(ModelError::TooFewSamples);
    }
    certify_curvature(v, k, interval, 10 * n_samples)?;
    let gf = model_gamma(f, f)?;
    let gg = model_gamma(g, g)?;
    let gh = model_gamma(h, h)?;
    let gfg = model_gamma(f, g)?;
    let excess = |p: &UnivariatePoly, gp: &UnivariatePoly| -> Result<UnivariatePoly, PolyError> {
        Ok(model_gamma2(v, p, p)?.sub(&gp.scale(k)))
    };
    let ef = excess(f, &gf)?;
    let eg = excess(g, &gg)?;
    let hf = model_h(f, g, h)?;
    let gamma_gfg = model_gamma(&gfg, &gfg)?;
    let gamma_gf = model_gamma(&gf, &gf)?;
    let sym_lhs = h_from_gamma(f, g, h)?.add(&h_from_gamma(g, f, h)?);
    let sym_rhs = model_gamma(&gfg, h)?;

    let (a, b) = interval;
    let xs: Vec<f64> = (0..n_samples)
        .map(|i| a + (b - a) * i as f64 / (n_samples - 1) as f64)
        .collect();
    let tol = |l: f64, r: f64| POINTWISE_TOL * scale_of(&[l, r]);
    let sqrt0 = |x: f64| x.max(0.0).sqrt();

    let h_bound = xs.iter().map(|&x| {
        let l = hf.eval(x).powi(2);
        let r = ef.eval(x) * gg.eval(x) * gh.eval(x);
        (Location::Point(x), l, r, tol(l, r))
    });
    let cross = xs.iter().map(|&x| {
        let l = sqrt0(gamma_gfg.eval(x));
        let r = sqrt0(ef.eval(x)) * sqrt0(gg.eval(x)) + sqrt0(eg.eval(x)) * sqrt0(gf.eval(x));
        (Location::Point(x), l, r, tol(l, r))
    });
    let self_bound = xs.iter().map(|&x| {
        let l = gamma_gf.eval(x);
        let r = 4.0 * ef.eval(x) * gf.eval(x);
        (Location::Point(x), l, r, tol(l, r))
    });
    let symmetry = xs.iter().map(|&x| {
        let (l, r) = (sym_lhs.eval(x), sym_rhs.eval(x));
        (Location::Point(x), (l - r).abs(), 0.0, tol(l, r))
    });
    Ok([
        CheckReport::worst("h_bound", h_bound),
        CheckReport::worst("gamma_gamma_cross_bound", cross),
        CheckReport::worst("gamma_gamma_bound", self_bound),
        CheckReport::worst("h_symmetry_pointwise", symmetry),
    ]
    .into_iter()
    .map(|r| r.expect("at least two samples"))
    .collect())
}

/// One randomized test instance.
#[derive(Debug, Clone)]
pub struct PolyTuple {
    pub fs: Vec<UnivariatePoly>,
    pub v: UnivariatePoly,
    pub k: f64,
    pub phi: MultivariatePoly,
    pub psi: MultivariatePoly,
}

/// Seeded corpus: three test functions of degree ≤ 4 with coefficients in
/// `[-2, 2]`, `V = Kx²/2 + εx⁴` with `ε ≥ 0`, and `Φ`, `Ψ` of total degree
/// ≤ 2 in three variables with no constant term.
pub fn random_corpus(seed: u64, count: usize) -> Vec<PolyTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_tuple(&mut rng)).collect()
}

fn random_tuple(rng: &mut impl Rng) -> PolyTuple {
    let fs = (0..3)
        .map(|_| {
            let deg = rng.gen_range(1..=4);
            let coeffs = (0..=deg).map(|_| rng.gen_range(-2.0..=2.0)).collect();
            UnivariatePoly::new(coeffs).expect("degree ≤ 4")
        })
        .collect();
    let k = rng.gen_range(-1.0..=2.0);
    let eps = rng.gen_range(0.0..=0.5);
    let v = UnivariatePoly::new(vec![0.0, 0.0, 0.5 * k, 0.0, eps]).expect("quartic");
    let phi = random_composite(rng);
    let psi = random_composite(rng);
    PolyTuple { fs, v, k, phi, psi }
}

fn random_composite(rng: &mut impl Rng) -> MultivariatePoly {
    let mut terms = Vec::new();
    for i in 0..3 {
        let mut e = vec![0; 3];
        e[i] = 1;
        terms.push((e, rng.gen_range(-2.0..=2.0)));
        for j in i..3 {
            let mut e = vec![0; 3];
            e[i] += 1;
            e[j] += 1;
            terms.push((e, rng.gen_range(-2.0..=2.0)));
        }
    }
    MultivariatePoly::vanishing_at_origin(3, terms).expect("quadratic without constant")
}
