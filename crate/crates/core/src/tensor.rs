//! Dense complex linear algebra on tensor-product spaces.
//!
//! Subsystems are stored in list order with the leftmost system varying
//! slowest, so a flat index is `Σ i_k · Π_{j>k} d_j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Default relative Frobenius tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Eigenvalues below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Square complex matrix with subsystem dimensions attached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorJson", into = "OperatorJson")]
pub struct Operator {
    dims: Vec<usize>,
    mat: CMat,
}

impl Operator {
    pub fn new(dims: Vec<usize>, mat: CMat) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(QbError::Argument(format!("invalid dims {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(QbError::Argument(format!(
                "matrix is {}x{} but dims {:?} need side {}",
                mat.nrows(),
                mat.ncols(),
                dims,
                n
            )));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QbError::Argument("matrix contains NaN or Inf".into()));
        }
        Ok(Self { dims, mat })
    }

    /// Single-system operator.
    pub fn square(mat: CMat) -> Result<Self> {
        let n = mat.nrows();
        Self::new(vec![n], mat)
    }

    pub fn identity(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { dims: dims.to_vec(), mat: CMat::identity(n, n) }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { dims: dims.to_vec(), mat: CMat::zeros(n, n) }
    }

    /// Maximally mixed state `I/d`.
    pub fn maximally_mixed(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        Self::identity(dims).scale(1.0 / n as f64)
    }

    /// Real diagonal operator on one system.
    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mat = CMat::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { C64::default() });
        Self { dims: vec![n], mat }
    }

    /// Projector `|ψ⟩⟨ψ|`.
    pub fn projector(psi: &PureState) -> Self {
        let v = psi.vector();
        Self { dims: psi.dims().to_vec(), mat: v * v.adjoint() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    /// Same matrix, new subsystem split.
    pub fn with_dims(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.mat)
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn norm_fro(&self) -> f64 {
        self.mat.norm()
    }

    pub fn adjoint(&self) -> Self {
        Self { dims: self.dims.clone(), mat: self.mat.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { dims: self.dims.clone(), mat: self.mat.transpose() }
    }

    pub fn conj(&self) -> Self {
        Self { dims: self.dims.clone(), mat: self.mat.map(|z| z.conj()) }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dims: self.dims.clone(), mat: &self.mat * c(s, 0.0) }
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self { dims: self.dims.clone(), mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self { dims: self.dims.clone(), mat: &self.mat - &other.mat })
    }

    pub fn matmul(&self, other: &Operator) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self { dims: self.dims.clone(), mat: &self.mat * &other.mat })
    }

    /// `Tr[self · other]` without forming the product.
    pub fn trace_product(&self, other: &Operator) -> Result<C64> {
        self.check_same_dims(other)?;
        let n = self.dim();
        let mut acc = C64::default();
        for i in 0..n {
            for k in 0..n {
                acc += self.mat[(i, k)] * other.mat[(k, i)];
            }
        }
        Ok(acc)
    }

    pub fn check_same_dims(&self, other: &Operator) -> Result<()> {
        if self.dims != other.dims {
            return Err(QbError::Argument(format!(
                "dimension mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let diff = (&self.mat - self.mat.adjoint()).norm();
        diff <= tol * self.norm_fro()
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_hermitian(HERMITIAN_TOL) {
            return false;
        }
        match hermitian_eig(self) {
            Ok(e) => e.values[0] >= -tol * self.norm_fro().max(1.0),
            Err(_) => false,
        }
    }

    pub fn is_unit_trace(&self, tol: f64) -> bool {
        (self.trace() - c(1.0, 0.0)).norm() <= tol
    }

    pub fn is_density(&self, tol: f64) -> bool {
        self.is_unit_trace(tol) && self.is_psd(tol)
    }

    /// `(X + X†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self { dims: self.dims.clone(), mat: (&self.mat + self.mat.adjoint()) * c(0.5, 0.0) }
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.is_hermitian(HERMITIAN_TOL) {
            if let Ok(e) = hermitian_eig(self) {
                return e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            }
        }
        self.mat.clone().singular_values().max()
    }

    /// Smallest eigenvalue of a Hermitian operator.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_eig(self)?.values[0])
    }

    /// Largest eigenvalue of a Hermitian operator.
    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(*hermitian_eig(self)?.values.last().unwrap())
    }

    /// Entry-wise real test used by callers that need a real-symmetric shortcut.
    pub fn is_real(&self, tol: f64) -> bool {
        self.mat.iter().all(|z| z.im.abs() <= tol)
    }
}

/// Normalized state vector with subsystem dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PureStateJson", into = "PureStateJson")]
pub struct PureState {
    dims: Vec<usize>,
    vec: CVec,
    norm_tol: f64,
}

impl PureState {
    pub const DEFAULT_NORM_TOL: f64 = 1e-9;

    pub fn new(dims: Vec<usize>, vec: CVec) -> Result<Self> {
        Self::with_tol(dims, vec, Self::DEFAULT_NORM_TOL)
    }

    pub fn with_tol(dims: Vec<usize>, vec: CVec, norm_tol: f64) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || dims.contains(&0) || vec.len() != n {
            return Err(QbError::Argument(format!(
                "vector of length {} does not match dims {:?}",
                vec.len(),
                dims
            )));
        }
        if vec.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QbError::Argument("state contains NaN or Inf".into()));
        }
        let norm = vec.norm();
        if (norm - 1.0).abs() > norm_tol {
            return Err(QbError::Contract(format!("state norm {norm} is not 1 within {norm_tol:e}")));
        }
        Ok(Self { dims, vec, norm_tol })
    }

    /// Normalizes `vec` before wrapping it.
    pub fn normalized(dims: Vec<usize>, vec: CVec) -> Result<Self> {
        let norm = vec.norm();
        if norm == 0.0 {
            return Err(QbError::Argument("cannot normalize the zero vector".into()));
        }
        Self::new(dims, vec / c(norm, 0.0))
    }

    /// Computational basis vector `|k⟩`.
    pub fn basis(dims: &[usize], k: usize) -> Result<Self> {
        let n: usize = dims.iter().product();
        if k >= n {
            return Err(QbError::Argument(format!("basis index {k} out of range {n}")));
        }
        let mut v = CVec::zeros(n);
        v[k] = c(1.0, 0.0);
        Self::new(dims.to_vec(), v)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn vector(&self) -> &CVec {
        &self.vec
    }

    pub fn norm_tol(&self) -> f64 {
        self.norm_tol
    }

    pub fn kron(&self, other: &PureState) -> PureState {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        PureState {
            dims,
            vec: self.vec.kronecker(&other.vec),
            norm_tol: self.norm_tol.max(other.norm_tol),
        }
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.vec.dotc(&other.vec).norm_sqr()
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn column(&self, k: usize) -> CVec {
        self.vectors.column(k).into_owned()
    }

    /// Rebuild `f(m)` by applying `f` to the spectrum.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut out = CMat::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            if fl == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            out += (v * v.adjoint()) * c(fl, 0.0);
        }
        out
    }
}

/// Eigen-decomposition of a Hermitian matrix given as a raw matrix.
pub fn hermitian_eig_mat(m: &CMat) -> Result<HermitianEigen> {
    let diff = (m - m.adjoint()).norm();
    if diff > HERMITIAN_TOL * m.norm() {
        return Err(QbError::Contract(format!("matrix is not Hermitian (residual {diff:e})")));
    }
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
///
/// # Errors
/// Returns [`QbError::Contract`] when the input is not Hermitian within
/// [`HERMITIAN_TOL`].
pub fn hermitian_eig(m: &Operator) -> Result<HermitianEigen> {
    hermitian_eig_mat(m.mat())
}

/// Kronecker product, `a` slowest-varying.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    Operator { dims, mat: a.mat.kronecker(&b.mat) }
}

/// Kronecker product of a list of operators.
pub fn kron_all(ops: &[&Operator]) -> Result<Operator> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| QbError::Argument("empty operator list".into()))?;
    Ok(rest.iter().fold((*first).clone(), |acc, op| kron(&acc, op)))
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Flat offsets of every multi-index over `systems`, enumerated in list order.
fn offsets(dims: &[usize], systems: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut out = vec![0usize];
    for &s in systems {
        let mut next = Vec::with_capacity(out.len() * dims[s]);
        for &base in &out {
            for i in 0..dims[s] {
                next.push(base + i * st[s]);
            }
        }
        out = next;
    }
    out
}

/// Partial trace keeping the systems in `keep` (returned in ascending order).
///
/// # Errors
/// Returns [`QbError::Argument`] if `keep` is empty, repeats an index or is
/// out of range.
pub fn partial_trace(m: &Operator, keep: &[usize]) -> Result<Operator> {
    let n = m.dims.len();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() || keep.iter().any(|&k| k >= n) {
        return Err(QbError::Argument(format!("invalid keep set {keep:?} for {n} systems")));
    }
    let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
    let ko = offsets(&m.dims, &keep);
    let to = offsets(&m.dims, &traced);
    let dk = ko.len();
    let mut out = CMat::zeros(dk, dk);
    for (i, &ri) in ko.iter().enumerate() {
        for (j, &cj) in ko.iter().enumerate() {
            let mut acc = C64::default();
            for &t in &to {
                acc += m.mat[(ri + t, cj + t)];
            }
            out[(i, j)] = acc;
        }
    }
    let dims = keep.iter().map(|&k| m.dims[k]).collect();
    Operator::new(dims, out)
}

/// Partial transpose on one subsystem.
///
/// # Errors
/// Returns [`QbError::Argument`] if `sys` is out of range.
pub fn partial_transpose(m: &Operator, sys: usize) -> Result<Operator> {
    if sys >= m.dims.len() {
        return Err(QbError::Argument(format!("system {sys} out of range")));
    }
    let st = strides(&m.dims)[sys];
    let d = m.dims[sys];
    let n = m.dim();
    let mut out = CMat::zeros(n, n);
    for r in 0..n {
        let rs = (r / st) % d;
        for col in 0..n {
            let cs = (col / st) % d;
            let r2 = r - rs * st + cs * st;
            let c2 = col - cs * st + rs * st;
            out[(r2, c2)] = m.mat[(r, col)];
        }
    }
    Operator::new(m.dims.clone(), out)
}

/// Reorders subsystems: system `k` of the result is system `perm[k]` of `m`.
pub fn permute(m: &Operator, perm: &[usize]) -> Result<Operator> {
    let n = m.dims.len();
    let mut seen = perm.to_vec();
    seen.sort_unstable();
    if seen != (0..n).collect::<Vec<_>>() {
        return Err(QbError::Argument(format!("{perm:?} is not a permutation of {n} systems")));
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| m.dims[p]).collect();
    // Flat index in the new order for each old flat index.
    let old_st = strides(&m.dims);
    let new_st = strides(&new_dims);
    let size = m.dim();
    let map: Vec<usize> = (0..size)
        .map(|old| {
            perm.iter()
                .enumerate()
                .map(|(k, &p)| ((old / old_st[p]) % m.dims[p]) * new_st[k])
                .sum()
        })
        .collect();
    let mut out = CMat::zeros(size, size);
    for r in 0..size {
        for col in 0..size {
            out[(map[r], map[col])] = m.mat[(r, col)];
        }
    }
    Operator::new(new_dims, out)
}

/// Bipartite contraction `⟨v| M |v⟩` on one factor of a two-system operator,
/// leaving an operator on the other factor.
pub fn contract_factor(m: &Operator, v: &CVec, sys: usize) -> Result<CMat> {
    if m.dims.len() != 2 || sys > 1 || v.len() != m.dims[sys] {
        return Err(QbError::Argument("contract_factor needs a bipartite operator and matching vector".into()));
    }
    let (d1, d2) = (m.dims[0], m.dims[1]);
    let mm = &m.mat;
    if sys == 1 {
        let mut out = CMat::zeros(d1, d1);
        for i in 0..d1 {
            for j in 0..d1 {
                let mut acc = C64::default();
                for k in 0..d2 {
                    let vk = v[k].conj();
                    if vk == C64::default() {
                        continue;
                    }
                    for l in 0..d2 {
                        acc += vk * mm[(i * d2 + k, j * d2 + l)] * v[l];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    } else {
        let mut out = CMat::zeros(d2, d2);
        for k in 0..d2 {
            for l in 0..d2 {
                let mut acc = C64::default();
                for i in 0..d1 {
                    let vi = v[i].conj();
                    if vi == C64::default() {
                        continue;
                    }
                    for j in 0..d1 {
                        acc += vi * mm[(i * d2 + k, j * d2 + l)] * v[j];
                    }
                }
                out[(k, l)] = acc;
            }
        }
        Ok(out)
    }
}

/// `(I ⊗ X) M (I ⊗ Y)` for a bipartite `M` with `X`, `Y` possibly rectangular.
pub fn sandwich_second(m: &Operator, left: &CMat, right: &CMat) -> Result<Operator> {
    if m.dims.len() != 2 {
        return Err(QbError::Argument("sandwich_second needs a bipartite operator".into()));
    }
    let d1 = m.dims[0];
    if left.ncols() != m.dims[1] || right.nrows() != m.dims[1] || left.nrows() != right.ncols() {
        return Err(QbError::Argument("sandwich factors do not match the second system".into()));
    }
    let id = CMat::identity(d1, d1);
    let l = id.kronecker(left);
    let r = id.kronecker(right);
    Operator::new(vec![d1, left.nrows()], l * &m.mat * r)
}

/// Square root and pseudo-inverse square root of a PSD matrix on its support.
pub fn psd_sqrt_pinv(m: &CMat) -> Result<(CMat, CMat)> {
    let e = hermitian_eig_mat(m)?;
    let lmax = e.values.iter().cloned().fold(0.0f64, f64::max);
    let cut = RANK_TOL * lmax.max(f64::MIN_POSITIVE);
    let sqrt = e.map(|l| if l > cut { l.sqrt() } else { 0.0 });
    let pinv = e.map(|l| if l > cut { 1.0 / l.sqrt() } else { 0.0 });
    Ok((sqrt, pinv))
}

/// Purification `Σ √λ_n |φ_n⟩|n⟩` on dims `(d, r)` with `r = rank(rho)`.
///
/// The second factor uses the standard basis ordered by descending
/// eigenvalue.
///
/// # Errors
/// Returns [`QbError::Contract`] when `rho` is not a density matrix.
pub fn purify(rho: &Operator) -> Result<PureState> {
    Ok(purify_with_spectrum(rho)?.0)
}

fn is_diagonal(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == C64::default()))
}

/// Eigen-decomposition of a diagonal matrix with standard basis vectors;
/// ties keep index order.
fn diagonal_eig(m: &CMat) -> HermitianEigen {
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending readout later walks this list backwards, so sort ascending
    // with ties in reverse index order.
    order.sort_by(|&a, &b| m[(a, a)].re.total_cmp(&m[(b, b)].re).then(b.cmp(&a)));
    let values = order.iter().map(|&k| m[(k, k)].re).collect();
    let vectors = CMat::from_fn(n, n, |i, j| if i == order[j] { c(1., 0.) } else { c(0., 0.) });
    HermitianEigen { values, vectors }
}

/// Purification plus the retained eigenvalues (descending) and the matching
/// eigenvectors of `rho` as columns.
pub fn purify_with_spectrum(rho: &Operator) -> Result<(PureState, Vec<f64>, CMat)> {
    if !rho.is_hermitian(HERMITIAN_TOL) {
        return Err(QbError::Contract("purify: input is not Hermitian".into()));
    }
    if !rho.is_unit_trace(1e-9) {
        return Err(QbError::Contract(format!("purify: trace is {}", rho.trace())));
    }
    let e = if is_diagonal(rho.mat()) { diagonal_eig(rho.mat()) } else { hermitian_eig(rho)? };
    let lmax = *e.values.last().unwrap();
    if e.values[0] < -1e-9 * lmax.max(1.0) {
        return Err(QbError::Contract(format!("purify: negative eigenvalue {}", e.values[0])));
    }
    let cut = RANK_TOL * lmax;
    let kept: Vec<usize> = (0..e.values.len()).rev().filter(|&k| e.values[k] > cut).collect();
    let d = rho.dim();
    let r = kept.len();
    let mut v = CVec::zeros(d * r);
    let mut vecs = CMat::zeros(d, r);
    let mut lams = Vec::with_capacity(r);
    for (n, &k) in kept.iter().enumerate() {
        let lam = e.values[k];
        lams.push(lam);
        let phi = e.vectors.column(k);
        vecs.set_column(n, &phi);
        for i in 0..d {
            v[i * r + n] = phi[i] * lam.sqrt();
        }
    }
    let psi = PureState::with_tol(vec![d, r], v, 1e-8)?;
    Ok((psi, lams, vecs))
}

/// Partial isometry `T` (shape `d_A × d_R`) with `T† τ_A T = τ_R`.
///
/// Eigenvectors of `tau_r` are mapped onto eigenvectors of `tau_a` with the
/// same eigenvalue; inside degenerate blocks the pairing follows solver order.
///
/// # Errors
/// Returns [`QbError::SpectralMismatch`] if the nonzero spectra differ by
/// more than `1e-9`.
pub fn pairing_isometry(tau_a: &Operator, tau_r: &Operator) -> Result<CMat> {
    let ea = hermitian_eig(tau_a)?;
    let er = hermitian_eig(tau_r)?;
    let support = |e: &HermitianEigen| -> Vec<usize> {
        let lmax = e.values.iter().cloned().fold(0.0f64, f64::max);
        (0..e.values.len()).rev().filter(|&k| e.values[k] > RANK_TOL * lmax).collect()
    };
    let sa = support(&ea);
    let sr = support(&er);
    if sa.len() != sr.len() {
        return Err(QbError::SpectralMismatch(format!(
            "ranks differ: {} vs {}",
            sa.len(),
            sr.len()
        )));
    }
    let mut t = CMat::zeros(tau_a.dim(), tau_r.dim());
    for (&ka, &kr) in sa.iter().zip(&sr) {
        let (la, lr) = (ea.values[ka], er.values[kr]);
        if (la - lr).abs() > 1e-9 {
            return Err(QbError::SpectralMismatch(format!("eigenvalue {la} paired with {lr}")));
        }
        let a = ea.vectors.column(ka);
        let r = er.vectors.column(kr);
        t += a * r.adjoint();
    }
    Ok(t)
}

// JSON carriers.

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    dims: Vec<usize>,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

/// Plain complex matrix in the repo-wide `{"re":[[..]],"im":[[..]]}` layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMat> for MatrixJson {
    fn from(m: &CMat) -> Self {
        let rows = |f: fn(&C64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        MatrixJson { re: rows(|z| z.re), im: rows(|z| z.im) }
    }
}

impl TryFrom<MatrixJson> for CMat {
    type Error = QbError;

    fn try_from(j: MatrixJson) -> Result<CMat> {
        let nr = j.re.len();
        if j.im.len() != nr {
            return Err(QbError::Argument("re and im have different row counts".into()));
        }
        let nc = j.re.first().map_or(0, Vec::len);
        if j.re.iter().chain(&j.im).any(|row| row.len() != nc) {
            return Err(QbError::Argument("ragged matrix rows".into()));
        }
        let m = CMat::from_fn(nr, nc, |i, k| c(j.re[i][k], j.im[i][k]));
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QbError::Argument("matrix contains NaN or Inf".into()));
        }
        Ok(m)
    }
}

impl From<Operator> for OperatorJson {
    fn from(op: Operator) -> Self {
        let m = MatrixJson::from(&op.mat);
        OperatorJson { dims: op.dims, re: m.re, im: m.im }
    }
}

impl TryFrom<OperatorJson> for Operator {
    type Error = QbError;

    fn try_from(j: OperatorJson) -> Result<Operator> {
        let mat = CMat::try_from(MatrixJson { re: j.re, im: j.im })?;
        Operator::new(j.dims, mat)
    }
}

#[derive(Serialize, Deserialize)]
struct PureStateJson {
    dims: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<PureState> for PureStateJson {
    fn from(s: PureState) -> Self {
        PureStateJson {
            dims: s.dims,
            re: s.vec.iter().map(|z| z.re).collect(),
            im: s.vec.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<PureStateJson> for PureState {
    type Error = QbError;

    fn try_from(j: PureStateJson) -> Result<PureState> {
        if j.re.len() != j.im.len() {
            return Err(QbError::Argument("re and im lengths differ".into()));
        }
        let v = CVec::from_iterator(j.re.len(), j.re.iter().zip(&j.im).map(|(&r, &i)| c(r, i)));
        PureState::new(j.dims, v)
    }
}
