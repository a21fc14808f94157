#![allow(dead_code)]

use g2lab::{
    build_chain, build_weighted_grid, Measure, ReversibleGenerator, StateSpace, UnivariatePoly,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reversible chain from masses and symmetric conductances `c_ij`, with
/// `L_ij = c_ij / m_i`. A path backbone keeps it irreducible.
pub fn chain_from(masses: &[f64], conductances: &[f64]) -> ReversibleGenerator {
    let n = masses.len();
    let mut rates = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut c = conductances[k % conductances.len()];
            k += 1;
            if j == i + 1 {
                c += 0.1;
            }
            rates[(i, j)] = c / masses[i];
            rates[(j, i)] = c / masses[j];
        }
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|j| *j != i).map(|j| rates[(i, j)]).sum();
        rates[(i, i)] = -s;
    }
    build_chain(
        StateSpace::abstract_space(n).unwrap(),
        Measure::new(masses.to_vec()).unwrap(),
        rates,
    )
    .unwrap()
}

/// Sparse-ish conductances: about a third of the pairs are switched off.
pub fn arb_chain(max_n: usize) -> impl Strategy<Value = ReversibleGenerator> {
    (2..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0.2f64..3.0, n),
            prop::collection::vec(
                prop_oneof![Just(0.0), 0.0f64..2.0, 0.0f64..2.0],
                n * (n - 1) / 2,
            ),
        )
            .prop_map(|(m, c)| chain_from(&m, &c))
    })
}

pub fn arb_chain_with_fields(
    max_n: usize,
    fields: usize,
) -> impl Strategy<Value = (ReversibleGenerator, Vec<Vec<f64>>)> {
    arb_chain(max_n).prop_flat_map(move |l| {
        let n = l.len();
        (
            Just(l),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), fields),
        )
    })
}

pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> ReversibleGenerator {
    let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
    let c: Vec<f64> = (0..n * (n - 1) / 2)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..2.0)
            }
        })
        .collect();
    chain_from(&m, &c)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ou(n: usize) -> ReversibleGenerator {
    let v: UnivariatePoly = "0.5*x^2".parse().unwrap();
    build_weighted_grid(-5.0, 5.0, n, &v).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn scale(v: &[f64]) -> f64 {
    v.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()))
}
