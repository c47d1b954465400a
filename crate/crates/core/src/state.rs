// SPDX-License-Identifier: Apache-2.0

//! Stokes tensors: expectation values of a density matrix along the
//! product-operator basis.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::algebra::{basis_len, check_spins, BasisLabel, CMatrix, Monomial, OperatorMatrix};
use crate::error::{Error, Result};

/// Hermiticity tolerance for density-matrix input.
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues below this are reported as a positivity violation.
pub const POSITIVITY_TOLERANCE: f64 = -1e-9;

/// Single-spin Stokes vector `(ϱ⁰, ϱ¹, ϱ², ϱ³)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleSpinBloch([f64; 4]);

impl SingleSpinBloch {
    /// Fails if the traceless part is longer than a pure state allows.
    pub fn new(components: [f64; 4]) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite Bloch components {components:?}"
            )));
        }
        let r2: f64 = components[1..].iter().map(|c| c * c).sum();
        if r2 > 0.5 * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "traceless norm² {r2} exceeds 1/2 for {components:?}"
            )));
        }
        Ok(SingleSpinBloch(components))
    }

    /// Trace-one state with Bloch vector `r` (|r| ≤ 1).
    pub fn mixed(r: [f64; 3]) -> Result<Self> {
        Self::new([
            FRAC_1_SQRT_2,
            r[0] * FRAC_1_SQRT_2,
            r[1] * FRAC_1_SQRT_2,
            r[2] * FRAC_1_SQRT_2,
        ])
    }

    /// Pure state pointing along `direction` (normalized internally).
    pub fn pure(direction: [f64; 3]) -> Result<Self> {
        let len = direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if len == 0.0 || !len.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize direction {direction:?}"
            )));
        }
        Self::mixed(direction.map(|c| c / len))
    }

    pub fn maximally_mixed() -> Self {
        SingleSpinBloch([FRAC_1_SQRT_2, 0.0, 0.0, 0.0])
    }

    /// Trace-one state with the given traceless components `(ϱ¹, ϱ², ϱ³)`.
    pub fn from_traceless(t: [f64; 3]) -> Result<Self> {
        Self::new([FRAC_1_SQRT_2, t[0], t[1], t[2]])
    }

    pub fn components(&self) -> [f64; 4] {
        self.0
    }

    pub fn traceless(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    pub fn traceless_norm(&self) -> f64 {
        self.traceless().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Bloch vector `r = √2 ϱ̃`.
    pub fn bloch_vector(&self) -> [f64; 3] {
        self.traceless().map(|c| c * std::f64::consts::SQRT_2)
    }

    pub fn purity(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        (self.purity() - 1.0).abs() <= tol
    }
}

/// Stokes tensor of an `n`-spin state, indexed by flat basis index.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesTensor {
    n: usize,
    components: DVector<f64>,
}

impl StokesTensor {
    pub fn new(n: usize, components: DVector<f64>) -> Result<Self> {
        check_spins(n)?;
        if components.len() != basis_len(n) {
            return Err(Error::InvalidArgument(format!(
                "{n} spins need {} components, got {}",
                basis_len(n),
                components.len()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Stokes component".into()));
        }
        Ok(StokesTensor { n, components })
    }

    pub fn from_vec(n: usize, components: Vec<f64>) -> Result<Self> {
        Self::new(n, DVector::from_vec(components))
    }

    /// `ρ = I / 2^n`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_spins(n)?;
        let mut c = DVector::zeros(basis_len(n));
        c[0] = identity_component(n);
        Ok(StokesTensor { n, components: c })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    pub fn into_components(self) -> DVector<f64> {
        self.components
    }

    pub fn as_slice(&self) -> &[f64] {
        self.components.as_slice()
    }

    pub fn component(&self, label: &BasisLabel) -> f64 {
        assert_eq!(label.n(), self.n, "label spin count");
        self.components[label.flat_index()]
    }

    /// Components with the identity direction zeroed.
    pub fn traceless(&self) -> DVector<f64> {
        let mut t = self.components.clone();
        t[0] = 0.0;
        t
    }

    pub fn traceless_norm(&self) -> f64 {
        self.components.as_slice()[1..]
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.components.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.components.norm()
    }

    /// Rescales the traceless part to length `target`.
    pub fn renormalized(&self, target: f64) -> StokesTensor {
        let current = self.traceless_norm();
        if current == 0.0 {
            return self.clone();
        }
        let mut c = self.components.clone() * (target / current);
        c[0] = self.components[0];
        StokesTensor {
            n: self.n,
            components: c,
        }
    }

    /// Error tensor `ϱ_d − ϱ`.
    pub fn error_from(&self, desired: &StokesTensor) -> DVector<f64> {
        &desired.components - &self.components
    }

    /// All single-spin reductions in slot order.
    pub fn reductions(&self) -> Vec<SingleSpinBloch> {
        (0..self.n)
            .map(|s| reduced_state(self, s).expect("slot in range"))
            .collect()
    }

    /// Largest componentwise deviation from the product of the reductions.
    pub fn correlation(&self) -> f64 {
        let prod = product_state(&self.reductions()).expect("same spin count");
        (&prod.components - &self.components).amax()
    }
}

/// Identity component `2^{−n/2}` of every trace-one tensor.
pub fn identity_component(n: usize) -> f64 {
    2f64.powf(-(n as f64) / 2.0)
}

/// Projects a Hermitian density matrix onto the basis.
pub fn stokes_from_density(rho: &OperatorMatrix) -> Result<StokesTensor> {
    let dev = rho.hermiticity_error();
    if dev > HERMITICITY_TOLERANCE {
        return Err(Error::NonHermitian { deviation: dev });
    }
    let n = rho.n();
    let m = rho.entries();
    let components = BasisLabel::all(n)
        .map(|l| Monomial::of(&l).trace_against(m).re)
        .collect();
    StokesTensor::from_vec(n, components)
}

/// Density matrix rebuilt from a Stokes tensor, with a positivity check.
#[derive(Clone, Debug)]
pub struct DensityReconstruction {
    pub matrix: OperatorMatrix,
    pub min_eigenvalue: f64,
    /// Set when `min_eigenvalue` is below the positivity tolerance.
    pub negative: bool,
}

pub fn density_from_stokes(rho: &StokesTensor) -> DensityReconstruction {
    let n = rho.n();
    let dim = 1 << n;
    let mut m = CMatrix::zeros(dim, dim);
    for (flat, &c) in rho.components.iter().enumerate() {
        if c != 0.0 {
            let label = BasisLabel::from_flat(n, flat).expect("flat index in range");
            Monomial::of(&label).accumulate_into(c, &mut m);
        }
    }
    let min_eigenvalue = SymmetricEigen::new(m.clone()).eigenvalues.min();
    DensityReconstruction {
        matrix: OperatorMatrix::new(n, m).expect("dimension matches"),
        min_eigenvalue,
        negative: min_eigenvalue < POSITIVITY_TOLERANCE,
    }
}

/// `ϱ^{j1…jn} = Π_i ϱ_i^{j_i}`.
pub fn product_state(factors: &[SingleSpinBloch]) -> Result<StokesTensor> {
    let n = factors.len();
    check_spins(n)?;
    let mut c = vec![1.0];
    for f in factors {
        let next: Vec<f64> = c
            .iter()
            .flat_map(|&a| f.0.iter().map(move |&b| a * b))
            .collect();
        c = next;
    }
    StokesTensor::from_vec(n, c)
}

/// Reduced single-spin state of slot `spin` (0-based).
pub fn reduced_state(rho: &StokesTensor, spin: usize) -> Result<SingleSpinBloch> {
    let n = rho.n();
    if spin >= n {
        return Err(Error::InvalidArgument(format!(
            "spin {spin} out of range for {n} spins"
        )));
    }
    let scale = 2f64.powf((n as f64 - 1.0) / 2.0);
    let shift = 2 * (n - 1 - spin);
    let mut out = [0.0; 4];
    for (j, o) in out.iter_mut().enumerate() {
        *o = scale * rho.components[j << shift];
    }
    Ok(SingleSpinBloch(out))
}

/// `V = ‖ϱ̃_d‖² − ϱ̃_dᵀ ϱ̃` on traceless components.
///
/// # Panics
/// If the spin counts differ.
pub fn hs_distance(desired: &StokesTensor, rho: &StokesTensor) -> f64 {
    assert_eq!(desired.n, rho.n, "spin count mismatch in hs_distance");
    let d = &desired.components.as_slice()[1..];
    let r = &rho.components.as_slice()[1..];
    d.iter().zip(r).map(|(a, b)| a * (a - b)).sum()
}

pub fn purity(rho: &StokesTensor) -> f64 {
    rho.purity()
}

pub fn norm(rho: &StokesTensor) -> f64 {
    rho.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn density(n: usize, m: CMatrix) -> OperatorMatrix {
        OperatorMatrix::new(n, m).unwrap()
    }

    #[test]
    fn single_spin_examples() {
        let half = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        let s = stokes_from_density(&density(1, half)).unwrap();
        assert_abs_diff_eq!(
            s.as_slice(),
            &[FRAC_1_SQRT_2, 0.0, 0.0, 0.0][..],
            epsilon = 1e-15
        );

        let mut up = CMatrix::zeros(2, 2);
        up[(0, 0)] = Complex64::new(1.0, 0.0);
        let s = stokes_from_density(&density(1, up.clone())).unwrap();
        assert_abs_diff_eq!(
            s.as_slice(),
            &[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2][..],
            epsilon = 1e-15
        );
        let back = density_from_stokes(&s);
        assert!((back.matrix.entries() - up).camax() < 1e-15);
        assert!(!back.negative);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            stokes_from_density(&density(1, m)),
            Err(Error::NonHermitian { .. })
        ));
    }

    #[test]
    fn negative_eigenvalue_is_flagged() {
        let s = StokesTensor::from_vec(1, vec![FRAC_1_SQRT_2, 0.0, 0.0, 0.8]).unwrap();
        let rec = density_from_stokes(&s);
        assert!(rec.negative);
        assert!(rec.min_eigenvalue < -0.05);
    }

    #[test]
    fn product_state_examples() {
        let mixed = SingleSpinBloch::maximally_mixed();
        let p = product_state(&[mixed, mixed]).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.5, epsilon = 1e-15);
        assert!(p.as_slice()[1..].iter().all(|&c| c == 0.0));

        let a = SingleSpinBloch::pure([0.0, 0.0, 1.0]).unwrap();
        let b = SingleSpinBloch::pure([1.0, 0.0, 0.0]).unwrap();
        let p = product_state(&[a, b]).unwrap();
        for (label, want) in [("00", 0.5), ("30", 0.5), ("01", 0.5), ("31", 0.5)] {
            assert_abs_diff_eq!(p.component(&label.parse().unwrap()), want, epsilon = 1e-15);
        }
        assert_eq!(p.as_slice().iter().filter(|&&c| c != 0.0).count(), 4);

        let x = SingleSpinBloch::pure([1.0, 0.0, 0.0]).unwrap();
        let p = product_state(&[x, x, x]).unwrap();
        for label in ["100", "010", "001"] {
            assert_abs_diff_eq!(
                p.component(&label.parse().unwrap()),
                2f64.powf(-1.5),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn reductions_of_product_and_bell() {
        let a = SingleSpinBloch::mixed([0.1, -0.4, 0.3]).unwrap();
        let b = SingleSpinBloch::pure([0.3, 0.2, -1.0]).unwrap();
        let p = product_state(&[a, b]).unwrap();
        assert_abs_diff_eq!(
            &reduced_state(&p, 0).unwrap().components()[..],
            &a.components()[..],
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            &reduced_state(&p, 1).unwrap().components()[..],
            &b.components()[..],
            epsilon = 1e-15
        );
        assert!(reduced_state(&p, 2).is_err());
        assert!(p.correlation() < 1e-15);

        // |00⟩ + |11⟩: only ϱ^{00}, ϱ^{11}, ϱ^{22}, ϱ^{33} are nonzero.
        let mut bell = vec![0.0; 16];
        bell[0] = 0.5;
        bell[5] = 0.5;
        bell[10] = -0.5;
        bell[15] = 0.5;
        let bell = StokesTensor::from_vec(2, bell).unwrap();
        assert!(!density_from_stokes(&bell).negative);
        for s in 0..2 {
            let r = reduced_state(&bell, s).unwrap();
            assert_eq!(r, SingleSpinBloch::maximally_mixed());
        }
        assert!(bell.correlation() > 0.1);
    }

    #[test]
    fn distance_examples() {
        let d = product_state(&[SingleSpinBloch::pure([0.0, 0.0, 1.0]).unwrap()]).unwrap();
        assert_eq!(hs_distance(&d, &d), 0.0);
        let anti = product_state(&[SingleSpinBloch::pure([0.0, 0.0, -1.0]).unwrap()]).unwrap();
        assert_abs_diff_eq!(hs_distance(&d, &anti), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn purity_examples() {
        let mixed = StokesTensor::maximally_mixed(2).unwrap();
        assert_abs_diff_eq!(mixed.purity(), 0.25, epsilon = 1e-15);
        let a = SingleSpinBloch::mixed([0.5, 0.0, 0.0]).unwrap();
        let p = product_state(&[a, a]).unwrap();
        assert_abs_diff_eq!(p.purity(), a.purity() * a.purity(), epsilon = 1e-15);
        let pure = product_state(&[SingleSpinBloch::pure([1.0, 1.0, 0.0]).unwrap(); 3]).unwrap();
        assert_abs_diff_eq!(pure.purity(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn renormalization_keeps_identity_component() {
        let a = SingleSpinBloch::mixed([0.5, 0.1, 0.0]).unwrap();
        let p = product_state(&[a]).unwrap();
        let q = p.renormalized(0.2);
        assert_eq!(q.as_slice()[0], p.as_slice()[0]);
        assert_abs_diff_eq!(q.traceless_norm(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn bloch_validation() {
        assert!(SingleSpinBloch::mixed([1.0, 1.0, 0.0]).is_err());
        assert!(SingleSpinBloch::pure([0.0, 0.0, 0.0]).is_err());
        let s = SingleSpinBloch::pure([0.0, 3.0, 4.0]).unwrap();
        assert!(s.is_pure(1e-14));
        assert_abs_diff_eq!(s.traceless_norm(), FRAC_1_SQRT_2, epsilon = 1e-15);
    }
}
