// SPDX-License-Identifier: Apache-2.0

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use spin_feedback::algebra::{basis_len, OperatorMatrix};
use spin_feedback::state::{
    density_from_stokes, hs_distance, norm, product_state, reduced_state, stokes_from_density,
};
use spin_feedback::{SingleSpinBloch, StokesTensor};

/// Random density matrix `A A† / tr(A A†)`.
fn density(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    let dim = 1usize << n;
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |v| {
        let a = DMatrix::from_iterator(
            dim,
            dim,
            v.into_iter().map(|(re, im)| Complex64::new(re, im)),
        );
        let p = &a * a.adjoint();
        let tr = p.trace();
        p / tr
    })
}

fn sized_density() -> impl Strategy<Value = (usize, DMatrix<Complex64>)> {
    (1usize..=3).prop_flat_map(|n| (Just(n), density(n)))
}

fn bloch() -> impl Strategy<Value = SingleSpinBloch> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..=1.0).prop_filter_map(
        "nonzero direction",
        |(x, y, z, r)| {
            let len = (x * x + y * y + z * z).sqrt();
            (len > 1e-3)
                .then(|| SingleSpinBloch::mixed([r * x / len, r * y / len, r * z / len]).unwrap())
        },
    )
}

/// Matrix partial trace keeping one slot; slot 0 is the most significant bit.
fn keep_slot(rho: &DMatrix<Complex64>, n: usize, slot: usize) -> DMatrix<Complex64> {
    let bit = n - 1 - slot;
    let mut out = DMatrix::zeros(2, 2);
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            if (i & !(1 << bit)) == (j & !(1 << bit)) {
                out[((i >> bit) & 1, (j >> bit) & 1)] += rho[(i, j)];
            }
        }
    }
    out
}

fn pauli_components(m: &DMatrix<Complex64>) -> [f64; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        (m[(0, 0)] + m[(1, 1)]).re * s,
        (m[(0, 1)] + m[(1, 0)]).re * s,
        (m[(1, 0)] - m[(0, 1)]).im * s,
        (m[(0, 0)] - m[(1, 1)]).re * s,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn density_round_trip((n, rho) in sized_density()) {
        let op = OperatorMatrix::new(n, rho.clone()).unwrap();
        let t = stokes_from_density(&op).unwrap();
        let back = density_from_stokes(&t);
        prop_assert!((back.matrix.entries() - &rho).camax() < 1e-12);
        prop_assert!(!back.negative);
        let again = stokes_from_density(&back.matrix).unwrap();
        prop_assert!((again.components() - t.components()).amax() < 1e-12);
    }

    #[test]
    fn reduced_state_matches_partial_trace((n, rho) in sized_density()) {
        let t = stokes_from_density(&OperatorMatrix::new(n, rho.clone()).unwrap()).unwrap();
        for slot in 0..n {
            let want = pauli_components(&keep_slot(&rho, n, slot));
            let got = reduced_state(&t, slot).unwrap().components();
            for k in 0..4 {
                prop_assert!((got[k] - want[k]).abs() < 1e-12, "slot {slot} comp {k}: {} vs {}", got[k], want[k]);
            }
        }
    }

    #[test]
    fn distance_nonnegative_at_equal_norm(a in prop::collection::vec(bloch(), 2), b in prop::collection::vec(bloch(), 2), angle in 0.0f64..6.3) {
        let d = product_state(&a).unwrap();
        // Rotate d's traceless part inside a random plane to get equal norm.
        let r = product_state(&b).unwrap();
        let (td, tr) = (d.traceless(), r.traceless());
        prop_assume!(td.norm() > 1e-6 && tr.norm() > 1e-6);
        let u = &td / td.norm();
        let mut w = &tr - &u * u.dot(&tr);
        if w.norm() < 1e-9 {
            w = any_orthogonal(&u);
        }
        let w = &w / w.norm();
        let rotated = (&u * angle.cos() + &w * angle.sin()) * td.norm();
        let mut comps = rotated.as_slice().to_vec();
        comps[0] = d.as_slice()[0];
        let rho = StokesTensor::from_vec(2, comps).unwrap();
        let v = hs_distance(&d, &rho);
        prop_assert!(v >= -1e-12);
        let half_sq = 0.5 * (d.traceless() - rho.traceless()).norm_squared();
        prop_assert!((v - half_sq).abs() < 1e-12);
        prop_assert_eq!(hs_distance(&d, &d), 0.0);
    }

    #[test]
    fn product_norm_is_product_of_norms(f in prop::collection::vec(bloch(), 1..=3)) {
        let t = product_state(&f).unwrap();
        let want: f64 = f.iter().map(|b| b.components().iter().map(|x| x * x).sum::<f64>().sqrt()).product();
        prop_assert!((norm(&t) - want).abs() < 1e-12);
        prop_assert_eq!(t.as_slice().len(), basis_len(f.len()));
        for (slot, b) in f.iter().enumerate() {
            let r = reduced_state(&t, slot).unwrap().components();
            // Reductions of a product of trace-one factors are the factors.
            for (got, want) in r.iter().zip(b.components()) {
                prop_assert!((got - want).abs() < 1e-12);
            }
        }
    }
}

/// A vector orthogonal to `u` with no identity component.
fn any_orthogonal(u: &DVector<f64>) -> DVector<f64> {
    let k = (1..u.len())
        .min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()))
        .unwrap();
    let mut e = DVector::zeros(u.len());
    e[k] = 1.0;
    &e - u * u.dot(&e)
}

#[test]
fn distance_vanishes_only_at_equality() {
    let a = product_state(&[SingleSpinBloch::pure([0.0, 0.6, 0.8]).unwrap()]).unwrap();
    let b = product_state(&[SingleSpinBloch::pure([0.0, 0.8, 0.6]).unwrap()]).unwrap();
    assert_eq!(hs_distance(&a, &a), 0.0);
    assert!(hs_distance(&a, &b) > 0.0);
    let anti = product_state(&[SingleSpinBloch::pure([0.0, -0.6, -0.8]).unwrap()]).unwrap();
    assert!((hs_distance(&a, &anti) - 1.0).abs() < 1e-15);
}
