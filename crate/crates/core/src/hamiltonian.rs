// SPDX-License-Identifier: Apache-2.0

//! Drift and control Hamiltonians in the product-operator basis, and the
//! strong-regularity diagnostic used as a sufficient controllability test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algebra::{basis_len, check_spins, BasisLabel, CMatrix, Monomial, OperatorMatrix};
use crate::error::{Error, Result};

/// Relative tolerance on level and transition-frequency coincidences.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Sparse map from basis labels to real coefficients (rad/s).
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    n: usize,
    terms: BTreeMap<BasisLabel, f64>,
}

impl HamiltonianSpec {
    pub fn new(n: usize) -> Result<Self> {
        check_spins(n)?;
        Ok(HamiltonianSpec {
            n,
            terms: BTreeMap::new(),
        })
    }

    pub fn with_term(mut self, label: BasisLabel, coeff: f64) -> Result<Self> {
        self.add_term(label, coeff)?;
        Ok(self)
    }

    /// Adds `coeff` to the coefficient of `label`; a term that cancels to
    /// exactly zero is removed.
    pub fn add_term(&mut self, label: BasisLabel, coeff: f64) -> Result<()> {
        if label.n() != self.n {
            return Err(Error::SpinMismatch {
                expected: self.n,
                found: label.n(),
            });
        }
        if label.is_identity() {
            return Err(Error::InvalidLabel(
                "the identity direction cannot carry a Hamiltonian term".into(),
            ));
        }
        if !coeff.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "coefficient {coeff} on {label} is not finite"
            )));
        }
        let entry = self.terms.entry(label).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.retain(|_, c| *c != 0.0);
        }
        Ok(())
    }

    /// Overwrites the coefficient of `label` (zero removes the term).
    pub fn set_term(&mut self, label: BasisLabel, coeff: f64) -> Result<()> {
        self.terms.remove(&label);
        if coeff != 0.0 {
            self.add_term(label, coeff)?;
        }
        Ok(())
    }

    /// Builds a spec from a dense coefficient vector indexed by flat index.
    /// Exact zeros are skipped and the identity component is ignored.
    pub fn from_coefficients(n: usize, coeffs: &[f64]) -> Result<Self> {
        check_spins(n)?;
        if coeffs.len() != basis_len(n) {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients for {n} spins, got {}",
                basis_len(n),
                coeffs.len()
            )));
        }
        let mut spec = HamiltonianSpec::new(n)?;
        for (flat, &c) in coeffs.iter().enumerate().skip(1) {
            if c != 0.0 {
                spec.add_term(BasisLabel::from_flat(n, flat)?, c)?;
            }
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<BasisLabel, f64> {
        &self.terms
    }

    pub fn coefficient(&self, label: &BasisLabel) -> f64 {
        self.terms.get(label).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; basis_len(self.n)];
        for (label, &c) in &self.terms {
            v[label.flat_index()] = c;
        }
        v
    }

    /// Term-wise difference `self − other`.
    pub fn difference(&self, other: &HamiltonianSpec) -> Result<HamiltonianSpec> {
        if self.n != other.n {
            return Err(Error::SpinMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let mut out = self.clone();
        for (label, &c) in &other.terms {
            out.add_term(label.clone(), -c)?;
        }
        Ok(out)
    }

    pub fn sum(&self, other: &HamiltonianSpec) -> Result<HamiltonianSpec> {
        if self.n != other.n {
            return Err(Error::SpinMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let mut out = self.clone();
        for (label, &c) in &other.terms {
            out.add_term(label.clone(), c)?;
        }
        Ok(out)
    }

    /// Dense `2^n × 2^n` matrix `Σ h^μ Λ_μ`.
    pub fn matrix(&self) -> OperatorMatrix {
        let dim = 1 << self.n;
        let mut m = CMatrix::zeros(dim, dim);
        for (label, &c) in &self.terms {
            Monomial::of(label).accumulate_into(c, &mut m);
        }
        OperatorMatrix::new(self.n, m).expect("dimension matches spin count")
    }

    /// Spec with slots `i` and `j` exchanged.
    pub fn swap_slots(&self, i: usize, j: usize) -> Result<HamiltonianSpec> {
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidArgument(format!(
                "slots ({i}, {j}) out of range for {} spins",
                self.n
            )));
        }
        let mut out = HamiltonianSpec::new(self.n)?;
        for (label, &c) in &self.terms {
            let mut idx = label.indices().to_vec();
            idx.swap(i, j);
            out.add_term(BasisLabel::new(idx)?, c)?;
        }
        Ok(out)
    }
}

/// One control input `u · H_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlChannel {
    name: String,
    spec: HamiltonianSpec,
}

impl ControlChannel {
    /// Fails unless every term acts on a single slot.
    pub fn new(name: impl Into<String>, spec: HamiltonianSpec) -> Result<Self> {
        if let Some((label, _)) = spec.terms().iter().find(|(l, _)| l.weight() != 1) {
            return Err(Error::InvalidArgument(format!(
                "control term {label} is not local to one spin"
            )));
        }
        Ok(ControlChannel {
            name: name.into(),
            spec,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }
}

/// Ising chain: `offsets[i]` multiplies the local `λ_3` on slot `i`, and
/// `couplings[i]` the `Λ_{…33…}` term between slots `i` and `i + 1`.
pub fn ising_chain(offsets: &[f64], couplings: &[f64]) -> Result<HamiltonianSpec> {
    let n = offsets.len();
    check_spins(n)?;
    if couplings.len() + 1 != n {
        return Err(Error::InvalidArgument(format!(
            "{n} spins need {} couplings, got {}",
            n - 1,
            couplings.len()
        )));
    }
    let mut spec = HamiltonianSpec::new(n)?;
    for (slot, &h) in offsets.iter().enumerate() {
        if h != 0.0 {
            spec.add_term(BasisLabel::local(n, slot, 3)?, h)?;
        }
    }
    for (slot, &j) in couplings.iter().enumerate() {
        if j != 0.0 {
            let mut idx = vec![0; n];
            idx[slot] = 3;
            idx[slot + 1] = 3;
            spec.add_term(BasisLabel::new(idx)?, j)?;
        }
    }
    Ok(spec)
}

/// Two-spin Ising drift `h03 Λ03 + h30 Λ30 + h33 Λ33`.
pub fn ising_pair(h03: f64, h30: f64, h33: f64) -> Result<HamiltonianSpec> {
    ising_chain(&[h30, h03], &[h33])
}

/// Dipole–dipole coupling `−ω (Λ_11 + Λ_22 − 2 Λ_33)` between slots `i` and
/// `j` (0-based) of an `n`-spin system.
pub fn dipole_pair(i: usize, j: usize, omega: f64, n: usize) -> Result<HamiltonianSpec> {
    check_spins(n)?;
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidArgument(format!(
            "dipole slots ({i}, {j}) must be distinct and below {n}"
        )));
    }
    let mut spec = HamiltonianSpec::new(n)?;
    if omega == 0.0 {
        return Ok(spec);
    }
    for (axis, coeff) in [(1u8, -omega), (2, -omega), (3, 2.0 * omega)] {
        let mut idx = vec![0; n];
        idx[i] = axis;
        idx[j] = axis;
        spec.add_term(BasisLabel::new(idx)?, coeff)?;
    }
    Ok(spec)
}

/// Same field on every spin along `axis` (1, or 2 for the 90°-phase field).
pub fn nonselective_channel(n: usize, axis: u8) -> Result<ControlChannel> {
    if axis != 1 && axis != 2 {
        return Err(Error::InvalidArgument(format!(
            "nonselective axis must be 1 or 2, got {axis}"
        )));
    }
    let mut spec = HamiltonianSpec::new(n)?;
    for slot in 0..n {
        spec.add_term(BasisLabel::local(n, slot, axis)?, 1.0)?;
    }
    let name = if axis == 1 { "u" } else { "u_phase90" };
    ControlChannel::new(name, spec)
}

/// One `λ_1` channel per spin, named after the basis label it drives.
pub fn selective_channels(n: usize) -> Result<Vec<ControlChannel>> {
    (0..n)
        .map(|slot| {
            let label = BasisLabel::local(n, slot, 1)?;
            let name = format!("u_{label}");
            ControlChannel::new(name, HamiltonianSpec::new(n)?.with_term(label, 1.0)?)
        })
        .collect()
}

/// Closed-form strong-regularity condition for the two-spin Ising drift
/// with the nonselective `λ_1` field.
pub fn lemma1_check(h03: f64, h30: f64, h33: f64) -> bool {
    h03 != h30 && h33 != 0.0 && h33 != (h03 - h30) / 2.0 && h33 != -(h03 - h30) / 2.0
}

/// Output of [`strong_regularity`]. Levels and frequencies are scaled by
/// `2^{n/2}` so they are in the same units as the `h` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub energy_levels: Vec<f64>,
    /// Level pairs `(i, j)`, `i < j`, coupled by the control Hamiltonian.
    pub transition_pairs: Vec<(usize, usize)>,
    pub transition_frequencies: Vec<f64>,
    pub degenerate_levels: bool,
    pub degenerate_transitions: bool,
    pub connected: bool,
    pub strongly_regular: bool,
    /// Smallest separation between local `λ_3` offsets, for comparison with
    /// the control amplitude when channels are assumed selective.
    pub offset_separation: Option<f64>,
}

impl RegularityReport {
    /// Strong regularity plus a connected transition graph is sufficient
    /// for controllability.
    pub fn sufficient_for_controllability(&self) -> bool {
        self.strongly_regular && self.connected
    }
}

/// Levels of `hf` and transitions enabled by `hc` in the eigenbasis of `hf`.
/// Diagonal drifts keep computational-basis order; otherwise levels are
/// sorted ascending.
pub fn strong_regularity(hf: &HamiltonianSpec, hc: &ControlChannel) -> Result<RegularityReport> {
    if hf.n() != hc.n() {
        return Err(Error::SpinMismatch {
            expected: hf.n(),
            found: hc.n(),
        });
    }
    let n = hf.n();
    let scale = 2f64.powf(n as f64 / 2.0);
    let h = hf.matrix().into_entries();
    let dim = h.nrows();
    let off_diag = (0..dim)
        .flat_map(|r| (0..dim).map(move |c| (r, c)))
        .filter(|(r, c)| r != c)
        .fold(0.0f64, |m, (r, c)| m.max(h[(r, c)].norm()));

    let (levels, vectors): (Vec<f64>, CMatrix) = if off_diag == 0.0 {
        (
            (0..dim).map(|i| h[(i, i)].re).collect(),
            CMatrix::identity(dim, dim),
        )
    } else {
        let eig = nalgebra::SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let levels = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
        (levels, vectors)
    };
    let levels: Vec<f64> = levels.into_iter().map(|e| e * scale).collect();

    let hc_eig = vectors.adjoint() * hc.spec().matrix().into_entries() * &vectors;
    let hc_scale = hc_eig.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut transition_pairs = Vec::new();
    for i in 0..dim {
        for j in (i + 1)..dim {
            if hc_scale > 0.0 && hc_eig[(i, j)].norm() > 1e-12 * hc_scale {
                transition_pairs.push((i, j));
            }
        }
    }
    let transition_frequencies: Vec<f64> = transition_pairs
        .iter()
        .map(|&(i, j)| (levels[i] - levels[j]).abs())
        .collect();

    let level_scale = levels.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let tol = DEGENERACY_TOLERANCE * level_scale.max(f64::MIN_POSITIVE);
    let degenerate_levels =
        (0..dim).any(|i| ((i + 1)..dim).any(|j| (levels[i] - levels[j]).abs() <= tol));
    let nf = transition_frequencies.len();
    let degenerate_transitions = (0..nf).any(|a| {
        ((a + 1)..nf).any(|b| (transition_frequencies[a] - transition_frequencies[b]).abs() <= tol)
    });

    // Union–find over levels.
    let mut parent: Vec<usize> = (0..dim).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in &transition_pairs {
        let (a, b) = (root(&mut parent, i), root(&mut parent, j));
        parent[a] = b;
    }
    let r0 = root(&mut parent, 0);
    let connected = (0..dim).all(|i| root(&mut parent, i) == r0);

    let offsets: Vec<f64> = (0..n)
        .map(|slot| BasisLabel::local(n, slot, 3).map(|l| hf.coefficient(&l)))
        .collect::<Result<_>>()?;
    let offset_separation = if n >= 2 {
        let mut best = f64::INFINITY;
        for a in 0..n {
            for b in (a + 1)..n {
                best = best.min((offsets[a] - offsets[b]).abs());
            }
        }
        Some(best)
    } else {
        None
    };

    Ok(RegularityReport {
        energy_levels: levels,
        transition_pairs,
        transition_frequencies,
        degenerate_levels,
        degenerate_transitions,
        connected,
        strongly_regular: !degenerate_levels && !degenerate_transitions,
        offset_separation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lbl(s: &str) -> BasisLabel {
        s.parse().unwrap()
    }

    #[test]
    fn ising_pair_terms() {
        let h = ising_pair(1.0, 2.0, 0.3).unwrap();
        assert_eq!(h.terms().len(), 3);
        assert_eq!(h.coefficient(&lbl("03")), 1.0);
        assert_eq!(h.coefficient(&lbl("30")), 2.0);
        assert_eq!(h.coefficient(&lbl("33")), 0.3);
    }

    #[test]
    fn ising_chain_shapes() {
        let decoupled = ising_pair(1.0, 2.0, 0.0).unwrap();
        assert_eq!(decoupled.terms().len(), 2);
        assert!(decoupled.terms().keys().all(|l| l.weight() == 1));
        let chain = ising_chain(&[1.0, 2.0, 3.0], &[0.5, 0.25]).unwrap();
        assert_eq!(chain.terms().len(), 5);
        assert_eq!(chain.coefficient(&lbl("330")), 0.5);
        assert_eq!(chain.coefficient(&lbl("033")), 0.25);
        assert!(ising_chain(&[1.0, 2.0], &[]).is_err());
    }

    #[test]
    fn spec_rejects_identity_and_nonfinite() {
        let mut h = HamiltonianSpec::new(2).unwrap();
        assert!(h.add_term(lbl("00"), 1.0).is_err());
        assert!(h.add_term(lbl("01"), f64::NAN).is_err());
        assert!(h.add_term(lbl("011"), 1.0).is_err());
    }

    #[test]
    fn dipole_pair_coefficients() {
        let w = 0.7;
        let h = dipole_pair(0, 1, w, 2).unwrap();
        assert_eq!(h.coefficient(&lbl("11")), -w);
        assert_eq!(h.coefficient(&lbl("22")), -w);
        assert_eq!(h.coefficient(&lbl("33")), 2.0 * w);
        // h11 = h22 = −h33/2 = −ω
        assert_eq!(h.coefficient(&lbl("11")), -h.coefficient(&lbl("33")) / 2.0);
        assert!(dipole_pair(0, 1, 0.0, 2).unwrap().is_empty());
        assert!(dipole_pair(1, 1, 1.0, 2).is_err());

        let ac = dipole_pair(0, 2, 0.125, 3).unwrap();
        assert_eq!(ac.terms().len(), 3);
        assert_eq!(ac.coefficient(&lbl("101")), -0.125);
        assert_eq!(ac.coefficient(&lbl("202")), -0.125);
        assert_eq!(ac.coefficient(&lbl("303")), 0.25);
        assert_eq!(ac, dipole_pair(2, 0, 0.125, 3).unwrap());
        assert_eq!(ac.swap_slots(0, 2).unwrap(), ac);
    }

    #[test]
    fn channel_builders() {
        let ns = nonselective_channel(2, 1).unwrap();
        assert_eq!(ns.spec().terms().len(), 2);
        assert_eq!(ns.spec().coefficient(&lbl("01")), 1.0);
        assert_eq!(ns.spec().coefficient(&lbl("10")), 1.0);
        let ns2 = nonselective_channel(2, 2).unwrap();
        assert_eq!(ns2.spec().coefficient(&lbl("02")), 1.0);
        assert_eq!(ns2.spec().coefficient(&lbl("20")), 1.0);
        let ns3 = nonselective_channel(3, 1).unwrap();
        let keys: Vec<String> = ns3.spec().terms().keys().map(|l| l.to_string()).collect();
        assert_eq!(keys, ["001", "010", "100"]);
        assert!(nonselective_channel(2, 3).is_err());

        let sel = selective_channels(2).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel[0].spec().coefficient(&lbl("10")), 1.0);
        assert_eq!(sel[1].spec().coefficient(&lbl("01")), 1.0);
        assert_eq!(selective_channels(1).unwrap().len(), 1);
        assert_eq!(selective_channels(3).unwrap().len(), 3);

        let nonlocal = HamiltonianSpec::new(2)
            .unwrap()
            .with_term(lbl("11"), 1.0)
            .unwrap();
        assert!(ControlChannel::new("bad", nonlocal).is_err());
    }

    #[test]
    fn lemma1_examples() {
        assert!(lemma1_check(1.0, 2.0, 0.3));
        assert!(!lemma1_check(1.0, 2.0, 0.5));
        assert!(!lemma1_check(1.0, 1.0, 0.3));
        assert!(!lemma1_check(1.0, 2.0, 0.0));
    }

    #[test]
    fn ising_levels_follow_computational_order() {
        let (a, b, c) = (1.0, 2.0, 0.3);
        let rep = strong_regularity(
            &ising_pair(a, b, c).unwrap(),
            &nonselective_channel(2, 1).unwrap(),
        )
        .unwrap();
        let want = [a + b + c, -a + b - c, a - b - c, -a - b + c];
        for (got, want) in rep.energy_levels.iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        assert_eq!(rep.transition_pairs, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert!(rep.connected);
        assert!(rep.strongly_regular);
        assert!(rep.sufficient_for_controllability());
        assert_eq!(rep.offset_separation, Some(1.0));
    }

    #[test]
    fn equal_offsets_are_degenerate_for_any_coupling() {
        for c in [0.0, 0.3, 1.7, -2.0] {
            let rep = strong_regularity(
                &ising_pair(1.0, 1.0, c).unwrap(),
                &nonselective_channel(2, 1).unwrap(),
            )
            .unwrap();
            assert!(rep.degenerate_levels, "h33 = {c}");
            assert!(!rep.strongly_regular);
        }
        let rep = strong_regularity(
            &ising_pair(1.0, 2.0, 0.5).unwrap(),
            &nonselective_channel(2, 1).unwrap(),
        )
        .unwrap();
        assert!(rep.degenerate_transitions);
        assert!(!rep.strongly_regular);
    }

    #[test]
    fn non_diagonal_drift_uses_eigenbasis() {
        let hf = ising_pair(1.0, 2.3, 0.3)
            .unwrap()
            .sum(&dipole_pair(0, 1, 0.05, 2).unwrap())
            .unwrap();
        let rep = strong_regularity(&hf, &nonselective_channel(2, 1).unwrap()).unwrap();
        assert_eq!(rep.energy_levels.len(), 4);
        assert!(rep.energy_levels.windows(2).all(|w| w[0] <= w[1]));
        assert!(rep.connected);
    }
}
