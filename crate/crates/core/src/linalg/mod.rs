//! Operators on truncated multi-transmon Hilbert spaces and their superoperators.
//!
//! Density matrices are vectorized by stacking columns, so
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

mod expm;
mod lu;
mod matrix;

use alloc::vec::Vec;

pub use expm::expm;
pub use lu::Lu;
pub use matrix::{CMatrix, C64, I, ONE, ZERO};

use crate::error::{invalid, Error, Result};

/// Square operator on a composite space with per-subsystem truncations `dims`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Operator {
    dims: Vec<usize>,
    #[cfg_attr(feature = "serde", serde(skip))]
    mat: CMatrix,
}

fn dim_product(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl Operator {
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(invalid("every subsystem needs at least 2 levels"));
        }
        let n = dim_product(&dims);
        if mat.rows() != n || mat.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: mat.rows().max(mat.cols()) });
        }
        Ok(Operator { dims, mat })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dim_product(dims);
        Operator { dims: dims.to_vec(), mat: CMatrix::zeros(n, n) }
    }

    pub fn identity(dims: &[usize]) -> Self {
        Operator { dims: dims.to_vec(), mat: CMatrix::identity(dim_product(dims)) }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dag(&self) -> Self {
        Operator { dims: self.dims.clone(), mat: self.mat.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Operator { dims: self.dims.clone(), mat: self.mat.scale(s) }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Operator { dims: self.dims.clone(), mat: self.mat.scale_real(s) }
    }

    pub fn mul(&self, rhs: &Operator) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(Operator { dims: self.dims.clone(), mat: &self.mat * &rhs.mat })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(Operator { dims: self.dims.clone(), mat: &self.mat + &rhs.mat })
    }

    /// `self += s * rhs`
    pub fn axpy(&mut self, s: C64, rhs: &Operator) -> Result<()> {
        self.check_same(rhs)?;
        self.mat.axpy(s, &rhs.mat);
        Ok(())
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.mat.hermiticity_error()
    }

    fn check_same(&self, rhs: &Operator) -> Result<()> {
        if self.dims != rhs.dims {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rhs.dim() });
        }
        Ok(())
    }
}

/// Truncated lowering operator with `√k` at `(k−1, k)`.
pub fn annihilation(levels: usize) -> Result<Operator> {
    if levels < 2 {
        return Err(invalid("annihilation operator needs at least 2 levels"));
    }
    let mut m = CMatrix::zeros(levels, levels);
    for k in 1..levels {
        m[(k - 1, k)] = C64::new(libm::sqrt(k as f64), 0.0);
    }
    Operator::new(alloc::vec![levels], m)
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` acting on subsystem `slot`.
pub fn embed(op: &Operator, slot: usize, dims: &[usize]) -> Result<Operator> {
    if slot >= dims.len() {
        return Err(invalid("embedding slot out of range"));
    }
    if op.dim() != dims[slot] {
        return Err(Error::DimensionMismatch { expected: dims[slot], found: op.dim() });
    }
    let left = CMatrix::identity(dim_product(&dims[..slot]));
    let right = CMatrix::identity(dim_product(&dims[slot + 1..]));
    let mat = left.kron(&op.mat).kron(&right);
    Operator::new(dims.to_vec(), mat)
}

/// Density matrix; validated on construction from user data.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    mat: CMatrix,
}

pub const TRACE_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;

impl DensityMatrix {
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        let op = Operator::new(dims, mat)?;
        let rho = DensityMatrix { dims: op.dims, mat: op.mat };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_parts_unchecked(dims: Vec<usize>, mat: CMatrix) -> Self {
        DensityMatrix { dims, mat }
    }

    /// Pure product state with the given level index per subsystem.
    pub fn basis(dims: &[usize], levels: &[usize]) -> Result<Self> {
        if levels.len() != dims.len() || levels.iter().zip(dims).any(|(l, d)| l >= d) {
            return Err(invalid("basis state outside the truncated space"));
        }
        let mut idx = 0;
        for (l, d) in levels.iter().zip(dims) {
            idx = idx * d + l;
        }
        let n = dim_product(dims);
        let mut mat = CMatrix::zeros(n, n);
        mat[(idx, idx)] = ONE;
        Ok(DensityMatrix { dims: dims.to_vec(), mat })
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn pure(dims: &[usize], psi: &[C64]) -> Result<Self> {
        let n = dim_product(dims);
        if psi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: psi.len() });
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(invalid("state vector is not normalized"));
        }
        let mat = CMatrix::from_fn(n, n, |r, c| psi[r] * psi[c].conj());
        Ok(DensityMatrix { dims: dims.to_vec(), mat })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn to_vec(&self) -> Vec<C64> {
        self.mat.vec()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Checks trace, hermiticity and positivity within the module tolerances.
    pub fn validate(&self) -> Result<()> {
        let tr = self.mat.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(invalid("density matrix trace differs from 1"));
        }
        if self.mat.hermiticity_error() > HERMITIAN_TOL {
            return Err(invalid("density matrix is not Hermitian"));
        }
        if !is_positive(&self.mat, POSITIVITY_TOL) {
            return Err(invalid("density matrix has a negative eigenvalue"));
        }
        Ok(())
    }
}

/// True when every eigenvalue of the Hermitian matrix `m` is ≥ `-tol`, tested by a
/// Cholesky factorization of `m + tol·I`.
pub fn is_positive(m: &CMatrix, tol: f64) -> bool {
    let n = m.rows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re + tol;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = libm::sqrt(d);
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    true
}

/// Superoperator acting on column-stacked density matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Liouvillian {
    dims: Vec<usize>,
    mat: CMatrix,
}

impl Liouvillian {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dim_product(dims);
        Liouvillian { dims: dims.to_vec(), mat: CMatrix::zeros(n * n, n * n) }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Hilbert-space dimension D (the matrix is D²×D²).
    pub fn dim(&self) -> usize {
        dim_product(&self.dims)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Liouvillian { dims: self.dims.clone(), mat: self.mat.scale_real(s) }
    }

    pub fn add_assign(&mut self, rhs: &Liouvillian) -> Result<()> {
        self.axpy(1.0, rhs)
    }

    /// `self += s * rhs`
    pub fn axpy(&mut self, s: f64, rhs: &Liouvillian) -> Result<()> {
        self.axpy_complex(ONE * s, rhs)
    }

    pub fn axpy_complex(&mut self, s: C64, rhs: &Liouvillian) -> Result<()> {
        if self.dims != rhs.dims {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rhs.dim() });
        }
        self.mat.axpy(s, &rhs.mat);
        Ok(())
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        CMatrix::unvec(&self.mat.matvec(&rho.vec()), rho.rows())
    }

    /// max |vec(I)† L|, zero for a trace-preserving generator.
    pub fn trace_preservation_error(&self) -> f64 {
        let n = self.dim();
        let nn = n * n;
        let mut worst = 0.0f64;
        for c in 0..nn {
            let mut s = ZERO;
            for d in 0..n {
                s += self.mat[(d * n + d, c)];
            }
            worst = worst.max(s.norm());
        }
        worst
    }
}

fn check_pair(a: &Operator, b: &Operator) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// Superoperator of `D(A,B)ρ = BρA† − (A†Bρ + ρA†B)/2`.
pub fn dissipator_matrix(a: &Operator, b: &Operator) -> Result<Liouvillian> {
    check_pair(a, b)?;
    let n = a.dim();
    let id = CMatrix::identity(n);
    let m = &a.mat.adjoint() * &b.mat;
    let mut mat = a.mat.conj().kron(&b.mat);
    mat.axpy(-ONE * 0.5, &id.kron(&m));
    mat.axpy(-ONE * 0.5, &m.transpose().kron(&id));
    Ok(Liouvillian { dims: a.dims.clone(), mat })
}

/// Superoperator of `ρ ↦ −i[H, ρ]`.
pub fn commutator_superop(h: &Operator) -> Result<Liouvillian> {
    if h.hermiticity_error() > HERMITIAN_TOL * h.mat.max_abs().max(1.0) {
        return Err(invalid("Hamiltonian is not Hermitian"));
    }
    let id = CMatrix::identity(h.dim());
    let mut mat = id.kron(&h.mat).scale(-I);
    mat.axpy(I, &h.mat.transpose().kron(&id));
    Ok(Liouvillian { dims: h.dims.clone(), mat })
}

/// `exp(L t)`.
pub fn propagator(l: &Liouvillian, t: f64) -> Result<CMatrix> {
    if !(t >= 0.0) {
        return Err(invalid("propagation time must be non-negative"));
    }
    expm(&l.mat.scale_real(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(n: usize, seed: u64) -> CMatrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(n, n, |_, _| C64::new(next(), next()))
    }

    fn random_rho(n: usize, seed: u64) -> CMatrix {
        let g = pseudo_random(n, seed);
        let m = &g * &g.adjoint();
        let tr = m.trace();
        m.scale(tr.inv())
    }

    #[test]
    fn ladder_entries() {
        let b = annihilation(2).unwrap();
        assert_eq!(b.matrix()[(0, 1)], ONE);
        assert_eq!(b.matrix().as_slice().iter().filter(|z| **z != ZERO).count(), 1);
        let b3 = annihilation(3).unwrap();
        assert_eq!(b3.matrix()[(1, 2)], C64::new(libm::sqrt(2.0), 0.0));
        let b4 = annihilation(4).unwrap();
        let n = b4.dag().mul(&b4).unwrap();
        for k in 0..4 {
            assert!((n.matrix()[(k, k)].re - k as f64).abs() < 1e-15);
        }
        assert!(annihilation(1).is_err());
    }

    #[test]
    fn truncated_commutator() {
        for levels in 2..7 {
            let b = annihilation(levels).unwrap();
            let bd = b.dag();
            let comm = &b.mul(&bd).unwrap().mat - &bd.mul(&b).unwrap().mat;
            let mut want = CMatrix::identity(levels);
            want[(levels - 1, levels - 1)] = C64::new(1.0 - levels as f64, 0.0);
            assert!((&comm - &want).max_abs() < 1e-14);
        }
    }

    #[test]
    fn embedding_order_and_commutation() {
        let sm = annihilation(2).unwrap();
        let e = embed(&sm, 0, &[2, 2]).unwrap();
        assert_eq!(e.matrix(), &sm.matrix().kron(&CMatrix::identity(2)));
        let id = Operator::identity(&[3]);
        assert_eq!(embed(&id, 1, &[2, 3, 2]).unwrap().matrix(), &CMatrix::identity(12));
        let bq = embed(&annihilation(3).unwrap(), 0, &[3, 3]).unwrap();
        let bf = embed(&annihilation(3).unwrap(), 1, &[3, 3]).unwrap();
        let c = &bq.mul(&bf).unwrap().mat - &bf.mul(&bq).unwrap().mat;
        assert_eq!(c.max_abs(), 0.0);
        assert!(embed(&sm, 2, &[2, 2]).is_err());
        assert!(embed(&sm, 1, &[2, 3]).is_err());
    }

    #[test]
    fn pure_decay_dissipator() {
        let sm = annihilation(2).unwrap();
        let d = dissipator_matrix(&sm, &sm).unwrap();
        let excited = DensityMatrix::basis(&[2], &[1]).unwrap();
        let out = d.apply(excited.matrix());
        let mut want = CMatrix::zeros(2, 2);
        want[(0, 0)] = ONE;
        want[(1, 1)] = -ONE;
        assert!((&out - &want).max_abs() < 1e-15);
        let ground = DensityMatrix::basis(&[2], &[0]).unwrap();
        assert_eq!(d.apply(ground.matrix()).max_abs(), 0.0);
    }

    #[test]
    fn dissipator_matches_direct_formula() {
        let dims = [3];
        let a = Operator::new(dims.to_vec(), pseudo_random(3, 1)).unwrap();
        let b = Operator::new(dims.to_vec(), pseudo_random(3, 2)).unwrap();
        let rho = random_rho(3, 3);
        let l = dissipator_matrix(&a, &b).unwrap();
        let ad = a.mat.adjoint();
        let adb = &ad * &b.mat;
        let mut direct = &(&b.mat * &rho) * &ad;
        direct.axpy(-ONE * 0.5, &(&adb * &rho));
        direct.axpy(-ONE * 0.5, &(&rho * &adb));
        assert!((&l.apply(&rho) - &direct).max_abs() < 1e-12);
    }

    #[test]
    fn commutator_matches_direct_formula() {
        let g = pseudo_random(4, 9);
        let h = Operator::new(alloc::vec![2, 2], &g + &g.adjoint()).unwrap();
        let rho = random_rho(4, 10);
        let l = commutator_superop(&h).unwrap();
        let mut direct = (&h.mat * &rho).scale(-I);
        direct.axpy(I, &(&rho * &h.mat));
        assert!((&l.apply(&rho) - &direct).max_abs() < 1e-12);
        assert_eq!(commutator_superop(&Operator::zeros(&[3])).unwrap().matrix().max_abs(), 0.0);
        assert!(commutator_superop(&Operator::new(alloc::vec![4], g).unwrap()).is_err());
    }

    #[test]
    fn diagonal_hamiltonian_leaves_diagonal_state() {
        let h = Operator::new(
            alloc::vec![3],
            CMatrix::from_diag(&[C64::new(0.0, 0.0), C64::new(1.5, 0.0), C64::new(-2.0, 0.0)]),
        )
        .unwrap();
        let rho = CMatrix::from_diag(&[C64::new(0.2, 0.0), C64::new(0.5, 0.0), C64::new(0.3, 0.0)]);
        assert_eq!(commutator_superop(&h).unwrap().apply(&rho).max_abs(), 0.0);
    }

    #[test]
    fn propagator_composes() {
        let sm = annihilation(3).unwrap();
        let g = pseudo_random(3, 4);
        let h = Operator::new(alloc::vec![3], &g + &g.adjoint()).unwrap();
        let mut l = commutator_superop(&h).unwrap();
        l.add_assign(&dissipator_matrix(&sm, &sm).unwrap().scale_real(0.7)).unwrap();
        let a = propagator(&l, 0.3).unwrap();
        let b = propagator(&l, 1.1).unwrap();
        let ab = propagator(&l, 1.4).unwrap();
        assert!((&(&a * &b) - &ab).max_abs() < 1e-9);
        assert_eq!(propagator(&l, 0.0).unwrap(), CMatrix::identity(9));
        assert!(propagator(&l, -1.0).is_err());
        assert!(l.trace_preservation_error() < 1e-12);
    }

    #[test]
    fn positivity_test() {
        assert!(is_positive(&random_rho(5, 11), 1e-8));
        let mut bad = CMatrix::identity(2).scale_real(0.5);
        bad[(0, 1)] = C64::new(0.6, 0.0);
        bad[(1, 0)] = C64::new(0.6, 0.0);
        assert!(!is_positive(&bad, 1e-8));
    }
}
