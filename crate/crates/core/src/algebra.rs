// SPDX-License-Identifier: Apache-2.0

//! Normalized product-operator basis and the real adjoint representation.
//!
//! Single-spin basis matrices are `λ_j = σ_j / √2` (with `σ_0 = I`), so that
//! `tr(λ_j λ_k) = δ_jk`. An `n`-spin basis element is the Kronecker product
//! `Λ_{j1…jn} = λ_{j1} ⊗ … ⊗ λ_{jn}`, with the first slot most significant
//! both in the flat index and in the matrix row index.
//!
//! A Hamiltonian `H` acts on Stokes tensors through the real antisymmetric
//! matrix `G_H` with entries `G_{μν} = tr(Λ_μ (−i)[H, Λ_ν])`. Generators are
//! built by commutator plus trace projection for every `n`; the two-spin
//! tensor formula in [`tensor_generator_pair`] is kept as an independent
//! cross-check.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSpec;

/// Largest spin count supported by the dense representation (4^5 = 1024).
pub const MAX_SPINS: usize = 5;

/// Relative rank threshold used by [`bracket_span`].
pub const SPAN_RANK_TOLERANCE: f64 = 1e-10;

const ANTISYMMETRY_TOLERANCE: f64 = 1e-12;

pub type CMatrix = DMatrix<Complex64>;

pub(crate) fn check_spins(n: usize) -> Result<()> {
    if n == 0 || n > MAX_SPINS {
        return Err(Error::Capacity { n, max: MAX_SPINS });
    }
    Ok(())
}

/// Number of basis elements (and Stokes components) for `n` spins.
pub fn basis_len(n: usize) -> usize {
    1 << (2 * n)
}

/// Multi-index `(j1, …, jn)` of a product-operator basis element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisLabel(Vec<u8>);

impl BasisLabel {
    pub fn new(indices: Vec<u8>) -> Result<Self> {
        check_spins(indices.len())?;
        if let Some(bad) = indices.iter().find(|&&j| j > 3) {
            return Err(Error::InvalidLabel(format!(
                "index {bad} in {indices:?} is outside 0..=3"
            )));
        }
        Ok(BasisLabel(indices))
    }

    /// Label with flat index `flat`; `j1` is the most significant base-4 digit.
    pub fn from_flat(n: usize, flat: usize) -> Result<Self> {
        check_spins(n)?;
        if flat >= basis_len(n) {
            return Err(Error::InvalidLabel(format!(
                "flat index {flat} out of range for {n} spins"
            )));
        }
        let indices = (0..n)
            .map(|slot| ((flat >> (2 * (n - 1 - slot))) & 3) as u8)
            .collect();
        Ok(BasisLabel(indices))
    }

    pub fn identity(n: usize) -> Result<Self> {
        BasisLabel::new(vec![0; n])
    }

    /// Label with `axis` on `slot` and the identity elsewhere.
    pub fn local(n: usize, slot: usize, axis: u8) -> Result<Self> {
        if slot >= n {
            return Err(Error::InvalidLabel(format!(
                "slot {slot} out of range for {n} spins"
            )));
        }
        let mut indices = vec![0; n];
        indices[slot] = axis;
        BasisLabel::new(indices)
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn flat_index(&self) -> usize {
        self.0.iter().fold(0, |acc, &j| acc * 4 + j as usize)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&j| j == 0)
    }

    /// Number of slots carrying a non-identity factor.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&j| j != 0).count()
    }

    /// Iterator over all labels for `n` spins in flat-index order.
    pub fn all(n: usize) -> impl Iterator<Item = BasisLabel> {
        (0..basis_len(n)).map(move |flat| BasisLabel::from_flat(n, flat).expect("in range"))
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in &self.0 {
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl Serialize for BasisLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BasisLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indices = s
            .chars()
            .map(|c| {
                c.to_digit(4)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::InvalidLabel(format!("'{s}' is not a base-4 label")))
            })
            .collect::<Result<Vec<_>>>()?;
        BasisLabel::new(indices)
    }
}

/// Dense complex `2^n × 2^n` operator.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    n: usize,
    entries: CMatrix,
}

impl OperatorMatrix {
    pub fn new(n: usize, entries: CMatrix) -> Result<Self> {
        check_spins(n)?;
        let dim = 1 << n;
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::InvalidArgument(format!(
                "expected a {dim}x{dim} matrix for {n} spins, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(OperatorMatrix { n, entries })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_spins(n)?;
        let dim = 1 << n;
        Ok(OperatorMatrix {
            n,
            entries: CMatrix::zeros(dim, dim),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// Trace inner product `tr(A† B)`.
    pub fn inner(&self, other: &OperatorMatrix) -> Complex64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn commutator(&self, other: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            n: self.n,
            entries: &self.entries * &other.entries - &other.entries * &self.entries,
        }
    }

    pub fn anticommutator(&self, other: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            n: self.n,
            entries: &self.entries * &other.entries + &other.entries * &self.entries,
        }
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.entries.adjoint();
        (&self.entries - adj)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }
}

/// Normalized single-spin basis matrix `λ_j`.
pub fn single_spin_matrix(j: u8) -> Matrix2<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    let r = Complex64::new(s, 0.0);
    let i = Complex64::new(0.0, s);
    match j {
        0 => Matrix2::new(r, z, z, r),
        1 => Matrix2::new(z, r, r, z),
        2 => Matrix2::new(z, -i, i, z),
        3 => Matrix2::new(r, z, z, -r),
        _ => panic!("single-spin index {j} outside 0..=3"),
    }
}

/// Dense basis element `Λ_label` built by Kronecker products.
pub fn basis_element(label: &BasisLabel) -> OperatorMatrix {
    let mut acc = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for &j in label.indices() {
        let factor = single_spin_matrix(j);
        acc = acc.kronecker(&factor);
    }
    OperatorMatrix {
        n: label.n(),
        entries: acc,
    }
}

/// All `4^n` basis matrices ordered by flat index.
pub fn build_basis(n: usize) -> Result<Vec<OperatorMatrix>> {
    check_spins(n)?;
    Ok(BasisLabel::all(n).map(|l| basis_element(&l)).collect())
}

/// Pauli-string form of a basis element: row `r` has its single nonzero
/// entry `phases[r]` in column `r ^ flip`.
#[derive(Clone, Debug)]
pub(crate) struct Monomial {
    pub flip: usize,
    pub phases: Vec<Complex64>,
}

impl Monomial {
    pub fn of(label: &BasisLabel) -> Monomial {
        let n = label.n();
        let dim = 1usize << n;
        let scale = 0.5f64.powf(n as f64 / 2.0);
        let mut flip = 0usize;
        for (slot, &j) in label.indices().iter().enumerate() {
            if j == 1 || j == 2 {
                flip |= 1 << (n - 1 - slot);
            }
        }
        let phases = (0..dim)
            .map(|row| {
                let mut p = Complex64::new(scale, 0.0);
                for (slot, &j) in label.indices().iter().enumerate() {
                    let bit = (row >> (n - 1 - slot)) & 1;
                    p *= match (j, bit) {
                        (0, _) | (1, _) => Complex64::new(1.0, 0.0),
                        (2, 0) => Complex64::new(0.0, -1.0),
                        (2, _) => Complex64::new(0.0, 1.0),
                        (3, 0) => Complex64::new(1.0, 0.0),
                        _ => Complex64::new(-1.0, 0.0),
                    };
                }
                p
            })
            .collect();
        Monomial { flip, phases }
    }

    /// `tr(Λ M)` in O(2^n).
    pub fn trace_against(&self, m: &CMatrix) -> Complex64 {
        self.phases
            .iter()
            .enumerate()
            .map(|(r, p)| p * m[(r ^ self.flip, r)])
            .sum()
    }

    /// Adds `coeff · Λ` to `m`.
    pub fn accumulate_into(&self, coeff: f64, m: &mut CMatrix) {
        for (r, p) in self.phases.iter().enumerate() {
            m[(r, r ^ self.flip)] += p * coeff;
        }
    }
}

/// Expansion coefficients `tr(Λ_μ M)` of `m` over the basis, by flat index.
pub fn project(m: &OperatorMatrix) -> Vec<Complex64> {
    BasisLabel::all(m.n)
        .map(|l| Monomial::of(&l).trace_against(&m.entries))
        .collect()
}

/// Structure constants of the normalized single-spin basis:
/// `[λ_j, λ_k] = Σ_l c[j][k][l] λ_l` and `{λ_j, λ_k} = Σ_l s[j][k][l] λ_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTensors {
    pub c: [[[Complex64; 4]; 4]; 4],
    pub s: [[[f64; 4]; 4]; 4],
}

impl StructureTensors {
    /// `ad_{λ_j}` as a 4×4 matrix acting on coefficient vectors.
    pub fn ad(&self, j: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(4, 4, |l, k| self.c[j][k][l])
    }

    /// `aad_{λ_j}`, the anticommutator analogue of [`StructureTensors::ad`].
    pub fn aad(&self, j: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(4, 4, |l, k| Complex64::new(self.s[j][k][l], 0.0))
    }
}

pub fn structure_tensors() -> StructureTensors {
    let lam: Vec<Matrix2<Complex64>> = (0..4).map(single_spin_matrix).collect();
    let zero = Complex64::new(0.0, 0.0);
    let mut c = [[[zero; 4]; 4]; 4];
    let mut s = [[[0.0; 4]; 4]; 4];
    for j in 0..4 {
        for k in 0..4 {
            let comm = lam[j] * lam[k] - lam[k] * lam[j];
            let anti = lam[j] * lam[k] + lam[k] * lam[j];
            for l in 0..4 {
                // λ_l is Hermitian, so tr(λ_l† X) = tr(λ_l X).
                c[j][k][l] = (lam[l] * comm).trace();
                s[j][k][l] = (lam[l] * anti).trace().re;
            }
        }
    }
    StructureTensors { c, s }
}

/// Real antisymmetric generator `G_H = −i ad_H` on Stokes tensors.
#[derive(Clone, Debug)]
pub struct Generator {
    n: usize,
    matrix: DMatrix<f64>,
    upper: Vec<(usize, usize, f64)>,
    source: HamiltonianSpec,
}

impl Generator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn source(&self) -> &HamiltonianSpec {
        &self.source
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// Adds `scale · G x` to `out` using the stored nonzeros.
    pub fn accumulate(&self, scale: f64, x: &[f64], out: &mut [f64]) {
        for &(row, col, g) in &self.upper {
            let g = scale * g;
            out[row] += g * x[col];
            out[col] -= g * x[row];
        }
    }

    /// Matrix commutator `[self, other]`.
    pub fn commutator(&self, other: &Generator) -> DMatrix<f64> {
        &self.matrix * &other.matrix - &other.matrix * &self.matrix
    }

    /// Bilinear form `aᵀ G b`, summed pairwise over the upper triangle so that
    /// it vanishes exactly whenever `a = ±b`.
    pub fn pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        self.upper
            .iter()
            .map(|&(row, col, g)| g * (a[row] * b[col] - a[col] * b[row]))
            .sum()
    }

    /// Induced ∞-norm, an upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn from_raw(n: usize, raw: DMatrix<f64>, source: HamiltonianSpec) -> Result<Generator> {
        let scale = raw.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let asym = (&raw + raw.transpose())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        if asym > ANTISYMMETRY_TOLERANCE * scale {
            return Err(Error::Internal(format!(
                "generator deviates from antisymmetry by {asym:.3e}"
            )));
        }
        // Exact antisymmetry keeps pairing(a, ±a) identically zero.
        let matrix = (&raw - raw.transpose()) * 0.5;
        let dim = matrix.nrows();
        let mut upper = Vec::new();
        for col in 1..dim {
            for row in 1..col {
                let g = matrix[(row, col)];
                if g != 0.0 {
                    upper.push((row, col, g));
                }
            }
        }
        Ok(Generator {
            n,
            matrix,
            upper,
            source,
        })
    }
}

/// Builds `G_H` by commutator and trace projection.
pub fn generator(h: &HamiltonianSpec) -> Result<Generator> {
    let n = h.n();
    check_spins(n)?;
    let len = basis_len(n);
    let hm = h.matrix().into_entries();
    let dim = hm.nrows();
    let monomials: Vec<Monomial> = BasisLabel::all(n).map(|l| Monomial::of(&l)).collect();
    let mut raw = DMatrix::<f64>::zeros(len, len);
    let mut comm = CMatrix::zeros(dim, dim);
    let minus_i = Complex64::new(0.0, -1.0);
    let scale = hm.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let mut worst_imag = 0.0f64;
    if !h.is_empty() {
        for (nu, mono) in monomials.iter().enumerate().skip(1) {
            let f = mono.flip;
            for c in 0..dim {
                for r in 0..dim {
                    let h_lam = hm[(r, c ^ f)] * mono.phases[c ^ f];
                    let lam_h = mono.phases[r] * hm[(r ^ f, c)];
                    comm[(r, c)] = minus_i * (h_lam - lam_h);
                }
            }
            for (mu, proj) in monomials.iter().enumerate().skip(1) {
                let z = proj.trace_against(&comm);
                worst_imag = worst_imag.max(z.im.abs());
                raw[(mu, nu)] = z.re;
            }
        }
    }
    if worst_imag > ANTISYMMETRY_TOLERANCE * scale {
        return Err(Error::Internal(format!(
            "generator has imaginary entries of size {worst_imag:.3e}"
        )));
    }
    Generator::from_raw(n, raw, h.clone())
}

/// Two-spin generator of `Λ_{jk}` from the single-spin structure constants,
/// `−i · ½ (ad_j ⊗ aad_k + aad_j ⊗ ad_k)`.
pub fn tensor_generator_pair(j: u8, k: u8) -> Result<Generator> {
    if j > 3 || k > 3 {
        return Err(Error::InvalidLabel(format!("({j}, {k}) outside 0..=3")));
    }
    let st = structure_tensors();
    let (j, k) = (j as usize, k as usize);
    let m = (st.ad(j).kronecker(&st.aad(k)) + st.aad(j).kronecker(&st.ad(k)))
        * Complex64::new(0.5, 0.0);
    let g = m * Complex64::new(0.0, -1.0);
    let imag = g.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if imag > ANTISYMMETRY_TOLERANCE {
        return Err(Error::Internal(format!(
            "tensor generator has imaginary entries of size {imag:.3e}"
        )));
    }
    let raw = g.map(|z| z.re);
    let mut source = HamiltonianSpec::new(2)?;
    let label = BasisLabel::new(vec![j as u8, k as u8])?;
    if !label.is_identity() {
        source.add_term(label, 1.0)?;
    }
    Generator::from_raw(2, raw, source)
}

/// Hamiltonian `K` with `[−iA, −iB] = −iK`, i.e. `K = −i[A, B]`, as a dense
/// coefficient vector indexed by flat index. By the adjoint isomorphism
/// `[G_A, G_B] = G_K`.
pub fn hamiltonian_bracket(a: &HamiltonianSpec, b: &HamiltonianSpec) -> Result<Vec<f64>> {
    if a.n() != b.n() {
        return Err(Error::SpinMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    let comm = a.matrix().commutator(&b.matrix());
    let k = OperatorMatrix {
        n: a.n(),
        entries: comm.entries * Complex64::new(0.0, -1.0),
    };
    let coeffs = project(&k);
    let scale = coeffs.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let imag = coeffs.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if imag > ANTISYMMETRY_TOLERANCE * scale {
        return Err(Error::Internal(format!(
            "bracket of Hermitian operators has imaginary coefficients ({imag:.3e})"
        )));
    }
    Ok(coeffs.into_iter().map(|z| z.re).collect())
}

/// The sequence `[Hf, Hc], [Hf, [Hf, Hc]], …` up to `depth`, unnormalized.
pub fn iterated_brackets(
    hf: &HamiltonianSpec,
    hc: &HamiltonianSpec,
    depth: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(depth);
    let mut current = hc.clone();
    for _ in 0..depth {
        let next = hamiltonian_bracket(hf, &current)?;
        current = HamiltonianSpec::from_coefficients(hf.n(), &next)?;
        out.push(next);
    }
    Ok(out)
}

/// Result of [`bracket_span`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpanReport {
    pub n: usize,
    pub dimension: usize,
    /// Non-identity directions reached by some element of the span.
    pub touched: BTreeSet<BasisLabel>,
    pub untouched: BTreeSet<BasisLabel>,
    /// Bracket depth at which the span stopped growing (or `max_depth`).
    pub depth_saturated: usize,
    pub saturated: bool,
    /// Largest |coefficient| per flat index over all normalized vectors seen.
    pub max_coefficient: Vec<f64>,
}

impl SpanReport {
    /// Dimension of the full Lie algebra `su(2^n)` the span is compared to.
    pub fn algebra_dimension(&self) -> usize {
        basis_len(self.n) - 1
    }
}

/// Span of `{Hf, Hc, [Hf, Hc], [Hf, [Hf, Hc]], …}` computed on Hamiltonian
/// coefficient vectors, with rank decided by Gram–Schmidt at
/// [`SPAN_RANK_TOLERANCE`].
pub fn bracket_span(gf: &Generator, gc: &Generator, max_depth: usize) -> Result<SpanReport> {
    if max_depth < 1 {
        return Err(Error::InvalidArgument(
            "max_depth must be at least 1".into(),
        ));
    }
    if gf.n != gc.n {
        return Err(Error::SpinMismatch {
            expected: gf.n,
            found: gc.n,
        });
    }
    let n = gf.n;
    let len = basis_len(n);
    let hf = gf.source();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut max_coefficient = vec![0.0; len];

    let mut absorb = |v: &[f64], basis: &mut Vec<Vec<f64>>| -> bool {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return false;
        }
        let mut w: Vec<f64> = v.iter().map(|x| x / norm).collect();
        for (m, x) in max_coefficient.iter_mut().zip(&w) {
            *m = f64::max(*m, x.abs());
        }
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for q in basis.iter() {
                let d: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (x, qx) in w.iter_mut().zip(q) {
                    *x -= d * qx;
                }
            }
        }
        let res = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if res > SPAN_RANK_TOLERANCE {
            basis.push(w.into_iter().map(|x| x / res).collect());
            true
        } else {
            false
        }
    };

    absorb(&hf.coefficient_vector(), &mut basis);
    absorb(&gc.source().coefficient_vector(), &mut basis);

    let mut current = gc.source().clone();
    let mut depth_saturated = max_depth;
    let mut saturated = false;
    for depth in 1..=max_depth {
        let next = hamiltonian_bracket(hf, &current)?;
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        let grew = absorb(&next, &mut basis);
        if !grew {
            depth_saturated = depth;
            saturated = true;
            break;
        }
        // Normalizing keeps magnitudes bounded; only directions matter here.
        let scaled: Vec<f64> = next.iter().map(|x| x / norm).collect();
        current = HamiltonianSpec::from_coefficients(n, &scaled)?;
    }

    let mut touched = BTreeSet::new();
    let mut untouched = BTreeSet::new();
    for label in BasisLabel::all(n).skip(1) {
        let mu = label.flat_index();
        let weight: f64 = basis.iter().map(|q| q[mu] * q[mu]).sum();
        if weight > SPAN_RANK_TOLERANCE {
            touched.insert(label);
        } else {
            untouched.insert(label);
        }
    }

    Ok(SpanReport {
        n,
        dimension: basis.len(),
        touched,
        untouched,
        depth_saturated,
        saturated,
        max_coefficient,
    })
}
