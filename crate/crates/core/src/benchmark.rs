//! Classical measure-and-prepare thresholds.
//!
//! Everything reduces to the product numerical range
//! `Λ⊗(M) = sup ⟨a|⟨b| M |a⟩|b⟩` of a Hermitian operator on `[A', A]`.
//! It is estimated by a multistart seesaw and, for small dimensions,
//! bracketed by an exhaustive grid over the smaller factor.

use std::collections::{hash_map::Entry, HashMap};

use argmin::core::{CostFunction, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::model::{mp_channel, Channel, ProbTest};
use crate::tensor::{
    c, contract_factor, hermitian_eig_mat, partial_transpose, psd_sqrt_pinv, sandwich_second, CMat, CVec, Operator,
};

/// Largest total dimension the grid oracle accepts.
pub const GRID_MAX_DIM: usize = 16;
/// Largest number of grid points the oracle evaluates.
pub const GRID_MAX_POINTS: usize = 20_000_000;
/// Tolerance on the smallest eigenvalue of `Ω^{T_A}` for the PPT check.
pub const PPT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PnrMethod {
    Seesaw,
    Grid,
    ClosedForm,
}

/// Search settings for `Λ⊗`.
#[derive(Clone, Debug)]
pub struct PnrConfig {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Grid mesh for the certification bracket; `None` disables the grid.
    pub grid_mesh: Option<f64>,
}

impl Default for PnrConfig {
    fn default() -> Self {
        Self { restarts: 64, tol: 1e-12, max_iter: 10_000, seed: 0x5eed, grid_mesh: None }
    }
}

#[derive(Clone, Debug)]
pub struct PnrResult {
    pub value: f64,
    pub maximizer_a: CVec,
    pub maximizer_b: CVec,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub method: PnrMethod,
    /// Every seesaw run met the tolerance before `max_iter`.
    pub converged: bool,
    /// Grid bracket `(lower, upper)` when the grid ran.
    pub grid: Option<(f64, f64)>,
}

impl PnrResult {
    /// Converged, with the value inside the grid bracket or equal to the
    /// upper bound.
    pub fn certified(&self) -> bool {
        self.converged && bracket_certifies(self.value, self.upper_bound, self.grid)
    }
}

fn bracket_certifies(value: f64, upper: f64, grid: Option<(f64, f64)>) -> bool {
    let slack = 1e-9 * value.abs().max(1.0);
    upper - value <= slack || grid.is_some_and(|(lo, hi)| value >= lo - slack && value <= hi + slack)
}

fn top_eig(m: &CMat) -> (f64, CVec) {
    let n = m.nrows();
    if n == 2 {
        let (a, d, b) = (m[(0, 0)].re, m[(1, 1)].re, m[(0, 1)]);
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        let lam = mid + rad;
        let v = if b.norm() > 1e-300 {
            CVec::from_vec(vec![b, c(lam - a, 0.0)])
        } else if a >= d {
            CVec::from_vec(vec![c(1., 0.), c(0., 0.)])
        } else {
            CVec::from_vec(vec![c(0., 0.), c(1., 0.)])
        };
        let norm = v.norm();
        return (lam, v / c(norm, 0.0));
    }
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let e = h.symmetric_eigen();
    let mut k = 0;
    for i in 1..n {
        if e.eigenvalues[i] > e.eigenvalues[k] {
            k = i;
        }
    }
    (e.eigenvalues[k], e.eigenvectors.column(k).into_owned())
}

fn top_value(m: &CMat) -> f64 {
    top_eig(m).0
}

struct SeesawRun {
    value: f64,
    a: CVec,
    b: CVec,
    converged: bool,
}

fn seesaw_from(m: &Operator, b0: CVec, tol: f64, max_iter: usize) -> Result<SeesawRun> {
    let mut b = b0;
    let mut a = CVec::zeros(m.dims()[0]);
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        let (_, na) = top_eig(&contract_factor(m, &b, 1)?);
        a = na;
        let (val, nb) = top_eig(&contract_factor(m, &a, 0)?);
        b = nb;
        if (val - prev).abs() < tol {
            return Ok(SeesawRun { value: val, a, b, converged: true });
        }
        prev = val;
    }
    Ok(SeesawRun { value: prev, a, b, converged: false })
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> CVec {
    let v = CVec::from_fn(d, |_, _| {
        c(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
    });
    let n = v.norm();
    v / c(n, 0.0)
}

/// Reduced vector on the second factor of the top Schmidt term of the top
/// eigenvector of `m`.
fn schmidt_start(m: &Operator) -> Result<CVec> {
    let (d1, d2) = (m.dims()[0], m.dims()[1]);
    let e = hermitian_eig_mat(m.mat())?;
    let top = e.column(e.values.len() - 1);
    let mat = CMat::from_fn(d1, d2, |i, j| top[i * d2 + j]);
    let svd = mat.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| QbError::Numerical("SVD failed".into()))?;
    let mut k = 0;
    for i in 1..svd.singular_values.len() {
        if svd.singular_values[i] > svd.singular_values[k] {
            k = i;
        }
    }
    let b = CVec::from_fn(d2, |j, _| vt[(k, j)]);
    let n = b.norm();
    Ok(b / c(n, 0.0))
}

fn check_bipartite_hermitian(m: &Operator) -> Result<()> {
    if m.dims().len() != 2 {
        return Err(QbError::Argument(format!("expected a bipartite operator, got dims {:?}", m.dims())));
    }
    if !m.is_hermitian(crate::tensor::HERMITIAN_TOL) {
        return Err(QbError::Contract("product numerical range needs a Hermitian operator".into()));
    }
    Ok(())
}

/// Multistart seesaw estimate of `Λ⊗(m)` with an eigenvalue cap and, when
/// `cfg.grid_mesh` is set and the dimensions allow it, a grid bracket.
///
/// # Errors
/// Returns [`QbError::Contract`] for non-Hermitian input.
pub fn product_numerical_range(m: &Operator, cfg: &PnrConfig) -> Result<PnrResult> {
    check_bipartite_hermitian(m)?;
    let d2 = m.dims()[1];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![schmidt_start(m)?];
    for _ in 0..cfg.restarts {
        starts.push(random_unit(&mut rng, d2));
    }
    let runs: Vec<SeesawRun> =
        starts.into_par_iter().map(|b| seesaw_from(m, b, cfg.tol, cfg.max_iter)).collect::<Result<_>>()?;
    let converged = runs.iter().all(|r| r.converged);
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value > runs[best].value {
            best = i;
        }
    }
    let run = &runs[best];
    let lam_max = m.max_eigenvalue()?;
    let mut out = PnrResult {
        value: run.value,
        maximizer_a: run.a.clone(),
        maximizer_b: run.b.clone(),
        lower_bound: run.value,
        upper_bound: lam_max.max(run.value),
        method: PnrMethod::Seesaw,
        converged,
        grid: None,
    };
    if let Some(mesh) = cfg.grid_mesh {
        if let Ok(g) = pnr_grid_oracle(m, mesh) {
            out.grid = Some((g.lower, g.upper));
            out.upper_bound = out.upper_bound.min(g.upper).max(out.value);
            if g.lower > out.value {
                out.value = g.lower;
                out.lower_bound = g.lower;
                out.maximizer_a = g.a;
                out.maximizer_b = g.b;
                out.method = PnrMethod::Grid;
            }
        }
    }
    Ok(out)
}

/// Grid bracket for `Λ⊗`.
#[derive(Clone, Debug)]
pub struct GridBracket {
    /// Value attained by a product vector (grid maximum after polishing).
    pub lower: f64,
    /// Lipschitz upper bound: grid maximum plus `‖m‖₂ Σ_k h_k`.
    pub upper: f64,
    pub a: CVec,
    pub b: CVec,
    pub points: usize,
}

/// Unit vector from hyperspherical angles `θ ∈ [0, π/2]^{d−1}` and phases
/// `φ ∈ [0, 2π)^{d−1}`.
fn sphere_point(thetas: &[f64], phis: &[f64]) -> CVec {
    let d = thetas.len() + 1;
    let mut v = CVec::zeros(d);
    let mut radius = 1.0;
    for k in 0..d {
        let mag = if k + 1 < d { radius * thetas[k].cos() } else { radius };
        if k + 1 < d {
            radius *= thetas[k].sin();
        }
        let ph = if k == 0 { 0.0 } else { phis[k - 1] };
        v[k] = c(mag * ph.cos(), mag * ph.sin());
    }
    v
}

/// Exhaustive maximization of `a ↦ λ_max(⟨a|m|a⟩)` over a grid on the unit
/// sphere of the smaller factor, followed by a seesaw polish.
///
/// Coordinates are spaced by at most `mesh` with grid points at cell
/// centres, so every unit vector lies within `Σ_k h_k / 2` of a grid point.
///
/// # Errors
/// Returns [`QbError::Refusal`] when the total dimension exceeds
/// [`GRID_MAX_DIM`] or the grid would exceed [`GRID_MAX_POINTS`].
pub fn pnr_grid_oracle(m: &Operator, mesh: f64) -> Result<GridBracket> {
    check_bipartite_hermitian(m)?;
    if !(mesh > 0.0) {
        return Err(QbError::Argument(format!("grid mesh must be positive, got {mesh}")));
    }
    let (d1, d2) = (m.dims()[0], m.dims()[1]);
    if d1 * d2 > GRID_MAX_DIM {
        return Err(QbError::Refusal(format!("grid oracle limited to total dimension {GRID_MAX_DIM}, got {}", d1 * d2)));
    }
    let sys = if d1 <= d2 { 0 } else { 1 };
    let ds = m.dims()[sys];
    let n_theta = (std::f64::consts::FRAC_PI_2 / mesh).ceil() as usize;
    let n_phi = (2.0 * std::f64::consts::PI / mesh).ceil() as usize;
    let h_theta = std::f64::consts::FRAC_PI_2 / n_theta as f64;
    let h_phi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut radices = vec![n_theta; ds - 1];
    radices.extend(std::iter::repeat_n(n_phi, ds - 1));
    let total = radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r)).unwrap_or(usize::MAX);
    if total > GRID_MAX_POINTS {
        return Err(QbError::Refusal(format!("grid would need {total} points, budget is {GRID_MAX_POINTS}")));
    }
    let eval = |idx: usize| -> (f64, usize) {
        let mut rem = idx;
        let mut th = Vec::with_capacity(ds - 1);
        let mut ph = Vec::with_capacity(ds - 1);
        for (k, &r) in radices.iter().enumerate() {
            let i = rem % r;
            rem /= r;
            if k < ds - 1 {
                th.push((i as f64 + 0.5) * h_theta);
            } else {
                ph.push((i as f64 + 0.5) * h_phi);
            }
        }
        let v = sphere_point(&th, &ph);
        let red = contract_factor(m, &v, sys).expect("dimensions checked");
        (top_value(&red), idx)
    };
    let (best_val, best_idx) = (0..total)
        .into_par_iter()
        .map(eval)
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), |x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x });
    // Recover the maximizing vector.
    let mut rem = best_idx;
    let mut th = Vec::new();
    let mut ph = Vec::new();
    for (k, &r) in radices.iter().enumerate() {
        let i = rem % r;
        rem /= r;
        if k < ds - 1 {
            th.push((i as f64 + 0.5) * h_theta);
        } else {
            ph.push((i as f64 + 0.5) * h_phi);
        }
    }
    let v = sphere_point(&th, &ph);
    let (_, w) = top_eig(&contract_factor(m, &v, sys)?);
    let (a0, b0) = if sys == 0 { (v, w) } else { (w, v) };
    let polish = seesaw_from(m, b0.clone(), 1e-13, 10_000)?;
    let (lower, a, b) = if polish.value >= best_val { (polish.value, polish.a, polish.b) } else { (best_val, a0, b0) };
    let h_sum = (ds - 1) as f64 * (h_theta + h_phi);
    let upper = best_val + m.spectral_norm() * h_sum;
    Ok(GridBracket { lower, upper: upper.max(lower), a, b, points: total })
}

/// Minimum eigenvalue of `Ω^{T_A}`.
pub fn ppt_min_eigenvalue(omega: &Operator) -> Result<f64> {
    partial_transpose(omega, 1)?.min_eigenvalue()
}

fn require_ppt(omega: &Operator) -> Result<()> {
    let lmin = ppt_min_eigenvalue(omega)?;
    if lmin < -PPT_TOL * omega.spectral_norm().max(1.0) {
        return Err(QbError::PptViolation(lmin));
    }
    Ok(())
}

/// PPT check at the tolerance used by the benchmarks.
pub fn is_ppt(omega: &Operator) -> Result<bool> {
    Ok(require_ppt(omega).is_ok())
}

/// `(I ⊗ τ^{-1/2}) Ω (I ⊗ τ^{-1/2})` with the inverse taken on the support
/// of `τ`; fails when `Ω` leaks out of that support.
pub fn conjugate_by_state(omega: &Operator, tau: &Operator) -> Result<Operator> {
    if omega.dims().len() != 2 || omega.dims()[1] != tau.dim() {
        return Err(QbError::Argument(format!("state of size {} does not match Ω dims {:?}", tau.dim(), omega.dims())));
    }
    let (sqrt, pinv) = psd_sqrt_pinv(tau.mat())?;
    let proj = &sqrt * &pinv;
    let projected = sandwich_second(omega, &proj, &proj)?;
    let resid = (omega.mat() - projected.mat()).norm();
    if resid > 1e-9 * omega.norm_fro().max(1e-300) {
        return Err(QbError::Invertibility(format!(
            "Ω is not supported on the support of the state (residual {resid:e})"
        )));
    }
    sandwich_second(omega, &pinv, &pinv)
}

/// Settings for [`det_benchmark`].
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub pnr: PnrConfig,
    /// Seesaw restarts per objective evaluation inside the τ search.
    pub inner_restarts: usize,
    pub nm_tol: f64,
    pub nm_max_iter: u64,
    pub rep: Option<GroupRep>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { pnr: PnrConfig::default(), inner_restarts: 8, nm_tol: 1e-10, nm_max_iter: 600, rep: None }
    }
}

/// Benchmark result in the repo-wide report layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub tau_min: Operator,
    pub method: PnrMethod,
    pub restarts: usize,
    pub converged: bool,
    /// Grid bracket on the benchmark scale when the grid ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<(f64, f64)>,
}

impl BenchReport {
    /// Closed form, or converged with the value inside the grid bracket or
    /// pinned by the eigenvalue cap.
    pub fn certified(&self) -> bool {
        match self.method {
            PnrMethod::ClosedForm => true,
            _ => self.converged && bracket_certifies(self.value, self.upper, self.grid),
        }
    }
}

fn tau_from_params(p: &[f64], d: usize) -> Operator {
    let mut l = CMat::zeros(d, d);
    for i in 0..d {
        l[(i, i)] = c(p[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in 0..i {
            l[(i, j)] = c(p[k], p[k + 1]);
            k += 2;
        }
    }
    let t = &l * l.adjoint();
    let tr = t.trace().re;
    Operator::new(vec![d], t / c(tr, 0.0)).expect("square by construction")
}

struct TauCost<'a> {
    omega: &'a Operator,
    cfg: PnrConfig,
}

impl CostFunction for TauCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let d = self.omega.dims()[1];
        let tau = tau_from_params(p, d);
        match conjugate_by_state(self.omega, &tau).and_then(|m| product_numerical_range(&m, &self.cfg)) {
            Ok(r) => Ok(r.value),
            Err(_) => Ok(1e300),
        }
    }
}

/// Deterministic M&P benchmark `inf_τ Λ⊗[(I⊗τ^{-1/2}) Ω (I⊗τ^{-1/2})]`.
///
/// With a covariant, irreducible `cfg.rep` the closed form `d·Λ⊗(Ω)` at
/// `τ = I/d` is returned. Otherwise `τ = LL†/Tr` is searched by
/// Nelder–Mead over the entries of the Cholesky factor `L`.
///
/// # Errors
/// Returns [`QbError::PptViolation`] for non-PPT `Ω` and
/// [`QbError::SearchFailure`] when the search produces no finite value.
pub fn det_benchmark(omega: &Operator, cfg: &BenchConfig) -> Result<BenchReport> {
    check_bipartite_hermitian(omega)?;
    require_ppt(omega)?;
    let d = omega.dims()[1];
    if let Some(rep) = &cfg.rep {
        if check_covariance(omega, rep, 1e-9) && is_irreducible(rep, cfg.pnr.seed) {
            let r = product_numerical_range(omega, &cfg.pnr)?;
            let df = d as f64;
            return Ok(BenchReport {
                value: df * r.value,
                lower: df * r.lower_bound,
                upper: df * r.upper_bound,
                tau_min: Operator::maximally_mixed(&[d]),
                method: PnrMethod::ClosedForm,
                restarts: cfg.pnr.restarts,
                converged: r.converged,
                grid: r.grid.map(|(lo, hi)| (df * lo, df * hi)),
            });
        }
    }
    let inner = PnrConfig { restarts: cfg.inner_restarts, grid_mesh: None, ..cfg.pnr.clone() };
    let n_par = d * d;
    let mut x0 = vec![0.0; n_par];
    for x in x0.iter_mut().take(d) {
        *x = 1.0;
    }
    let mut simplex = vec![x0.clone()];
    for i in 0..n_par {
        let mut x = x0.clone();
        x[i] += 0.25;
        simplex.push(x);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(cfg.nm_tol)
        .map_err(|e| QbError::Numerical(e.to_string()))?;
    let res = Executor::new(TauCost { omega, cfg: inner }, solver)
        .configure(|s| s.max_iters(cfg.nm_max_iter))
        .run()
        .map_err(|e| QbError::SearchFailure { message: e.to_string(), best_value: f64::NAN })?;
    let state = res.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| QbError::SearchFailure { message: "no iterate recorded".into(), best_value: f64::NAN })?;
    let nm_converged = matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged));
    let tau = tau_from_params(&best, d);
    let m = conjugate_by_state(omega, &tau)?;
    let r = product_numerical_range(&m, &cfg.pnr)?;
    if !r.value.is_finite() {
        return Err(QbError::SearchFailure { message: "objective is not finite".into(), best_value: r.value });
    }
    Ok(BenchReport {
        value: r.value,
        lower: r.lower_bound,
        upper: r.upper_bound,
        tau_min: tau,
        method: r.method,
        restarts: cfg.pnr.restarts,
        converged: nm_converged && r.converged,
        grid: r.grid,
    })
}

/// Probabilistic M&P benchmark `Λ⊗[(I⊗σ_A^{-1/2}) Ω (I⊗σ_A^{-1/2})]`.
///
/// # Errors
/// Returns [`QbError::PptViolation`] for non-PPT `Ω` and
/// [`QbError::Invertibility`] when `Ω` is not supported on `supp σ_A`.
pub fn prob_benchmark(t: &ProbTest, cfg: &PnrConfig) -> Result<PnrResult> {
    require_ppt(&t.omega)?;
    let m = conjugate_by_state(&t.omega, &t.sigma_a)?;
    product_numerical_range(&m, cfg)
}

/// Finite group (or design) acting as `U_g` on `A` and `U'_g` on `A'`.
#[derive(Clone, Debug)]
pub struct GroupRep {
    /// Pairs `(U_g, U'_g)`.
    pub elements: Vec<(CMat, CMat)>,
    pub weights: Vec<f64>,
}

fn pauli_mats() -> [CMat; 4] {
    let o = c(0., 0.);
    let l = c(1., 0.);
    let i = c(0., 1.);
    [
        CMat::identity(2, 2),
        CMat::from_row_slice(2, 2, &[o, l, l, o]),
        CMat::from_row_slice(2, 2, &[o, -i, i, o]),
        CMat::from_row_slice(2, 2, &[l, o, o, -l]),
    ]
}

fn is_unitary(u: &CMat) -> bool {
    (u.adjoint() * u - CMat::identity(u.ncols(), u.ncols())).norm() <= 1e-9 * (u.ncols() as f64).sqrt()
}

impl GroupRep {
    /// # Errors
    /// Returns [`QbError::Argument`] on empty or mismatched lists, weights
    /// not summing to 1, or non-unitary elements.
    pub fn new(elements: Vec<(CMat, CMat)>, weights: Vec<f64>) -> Result<Self> {
        if elements.is_empty() || elements.len() != weights.len() {
            return Err(QbError::Argument("group elements and weights must be nonempty and of equal length".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(QbError::Argument(format!("group weights sum to {total}")));
        }
        if elements.iter().any(|(u, v)| !is_unitary(u) || !is_unitary(v)) {
            return Err(QbError::Argument("group element is not unitary".into()));
        }
        Ok(Self { elements, weights })
    }

    /// Uniform weights over pairs `(U, U)`.
    pub fn diagonal(us: Vec<CMat>) -> Result<Self> {
        let w = 1.0 / us.len() as f64;
        let n = us.len();
        Self::new(us.into_iter().map(|u| (u.clone(), u)).collect(), vec![w; n])
    }

    /// Qubit Pauli group `{I, X, Y, Z}` acting identically on both sides.
    pub fn pauli() -> Self {
        Self::diagonal(pauli_mats().to_vec()).expect("Paulis are unitary")
    }

    /// Weyl–Heisenberg operators `X^a Z^b` in dimension `d`, both sides.
    pub fn weyl(d: usize) -> Self {
        let omega = 2.0 * std::f64::consts::PI / d as f64;
        let x = CMat::from_fn(d, d, |i, j| if i == (j + 1) % d { c(1., 0.) } else { c(0., 0.) });
        let z = CMat::from_fn(d, d, |i, j| {
            if i == j {
                c((omega * i as f64).cos(), (omega * i as f64).sin())
            } else {
                c(0., 0.)
            }
        });
        let mut us = Vec::with_capacity(d * d);
        let mut xa = CMat::identity(d, d);
        for _ in 0..d {
            let mut zb = CMat::identity(d, d);
            for _ in 0..d {
                us.push(&xa * &zb);
                zb = &zb * &z;
            }
            xa = &xa * &x;
        }
        Self::diagonal(us).expect("Weyl operators are unitary")
    }

    /// Clifford group modulo phases for `d ∈ {2, 3}` (24 and 216
    /// elements), both sides. A unitary 2-design.
    ///
    /// # Errors
    /// Returns [`QbError::Argument`] for other dimensions.
    pub fn clifford(d: usize) -> Result<Self> {
        let gens = match d {
            2 => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let h = CMat::from_row_slice(2, 2, &[c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)]);
                let ph = CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 1.)]);
                vec![h, ph]
            }
            3 => {
                let w = 2.0 * std::f64::consts::PI / 3.0;
                let s = 1.0 / 3f64.sqrt();
                let f = CMat::from_fn(3, 3, |i, j| {
                    let a = w * (i * j) as f64;
                    c(s * a.cos(), s * a.sin())
                });
                let mut ph = CMat::identity(3, 3);
                ph[(2, 2)] = c(w.cos(), w.sin());
                vec![f, ph]
            }
            _ => return Err(QbError::Argument(format!("Clifford group only tabulated for d = 2, 3, got {d}"))),
        };
        let key = |u: &CMat| -> Vec<i64> {
            let mut phase = c(1., 0.);
            for z in u.iter() {
                if z.norm() > 1e-6 {
                    phase = z.conj() / c(z.norm(), 0.);
                    break;
                }
            }
            u.iter()
                .flat_map(|z| {
                    let y = z * phase;
                    [(y.re * 1e6).round() as i64, (y.im * 1e6).round() as i64]
                })
                .collect()
        };
        let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut elems = vec![CMat::identity(d, d)];
        seen.insert(key(&elems[0]), 0);
        let mut frontier = 0;
        while frontier < elems.len() {
            let u = elems[frontier].clone();
            frontier += 1;
            for g in &gens {
                let v = g * &u;
                let k = key(&v);
                if let Entry::Vacant(e) = seen.entry(k) {
                    e.insert(elems.len());
                    elems.push(v);
                }
            }
        }
        Self::diagonal(elems)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim_input(&self) -> usize {
        self.elements[0].0.nrows()
    }

    pub fn dim_output(&self) -> usize {
        self.elements[0].1.nrows()
    }
}

/// `max_g ‖[Ω, U'_g ⊗ U_g]‖_F ≤ tol·‖Ω‖_F`.
pub fn check_covariance(omega: &Operator, rep: &GroupRep, tol: f64) -> bool {
    covariance_violation(omega, rep).is_some_and(|(v, _)| v <= tol * omega.norm_fro())
}

/// Largest commutator norm and the index of the element attaining it.
fn covariance_violation(omega: &Operator, rep: &GroupRep) -> Option<(f64, usize)> {
    if omega.dims() != [rep.dim_output(), rep.dim_input()] {
        return None;
    }
    let mut worst = (0.0, 0);
    for (i, (u, up)) in rep.elements.iter().enumerate() {
        let g = up.kronecker(u);
        let comm = omega.mat() * &g - &g * omega.mat();
        let n = comm.norm();
        if n > worst.0 {
            worst = (n, i);
        }
    }
    Some(worst)
}

/// Twirls one random Hermitian matrix over the input action and checks that
/// the result is proportional to the identity (threshold `1e-8`).
pub fn is_irreducible(rep: &GroupRep, seed: u64) -> bool {
    let d = rep.dim_input();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1ee7);
    let g = CMat::from_fn(d, d, |_, _| c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
    let h = (&g + g.adjoint()) * c(0.5, 0.0);
    let mut tw = CMat::zeros(d, d);
    for ((u, _), &w) in rep.elements.iter().zip(&rep.weights) {
        tw += u * &h * u.adjoint() * c(w, 0.0);
    }
    let scalar = h.trace() / c(d as f64, 0.0);
    (tw - CMat::identity(d, d) * scalar).norm() <= 1e-8 * h.norm()
}

/// Covariant closed form `d·Λ⊗(Ω)`.
///
/// # Errors
/// Returns [`QbError::Precondition`] naming the failing element when
/// covariance fails, or when the input action is reducible.
pub fn covariant_benchmark(omega: &Operator, rep: &GroupRep, cfg: &PnrConfig) -> Result<f64> {
    require_covariant(omega, rep, cfg.seed)?;
    let r = product_numerical_range(omega, cfg)?;
    Ok(rep.dim_input() as f64 * r.value)
}

fn require_covariant(omega: &Operator, rep: &GroupRep, seed: u64) -> Result<()> {
    match covariance_violation(omega, rep) {
        None => {
            return Err(QbError::Precondition(format!(
                "group acts on ({}, {}), Ω has dims {:?}",
                rep.dim_output(),
                rep.dim_input(),
                omega.dims()
            )))
        }
        Some((v, i)) if v > 1e-9 * omega.norm_fro() => {
            return Err(QbError::Precondition(format!("Ω does not commute with group element {i} (‖[Ω, U'⊗U]‖ = {v:e})")))
        }
        _ => {}
    }
    if !is_irreducible(rep, seed) {
        return Err(QbError::Precondition("input representation is reducible".into()));
    }
    Ok(())
}

/// Covariant M&P channel `ρ ↦ Σ_g Tr[P_g ρ] U'_g|a⟩⟨a|U'_g†` with
/// `P_g = d w_g U_g|b⟩⟨b|U_g†`, built from the `Λ⊗`
/// maximizers `(a, b)` (or `seed`). Its score on `Ω` is `d⟨ab|Ω|ab⟩`.
///
/// # Errors
/// Returns [`QbError::Precondition`] when covariance or irreducibility fail
/// and [`QbError::Construction`] if the POVM is incomplete.
pub fn optimal_mp_channel(
    omega: &Operator,
    rep: &GroupRep,
    seed: Option<(CVec, CVec)>,
    cfg: &PnrConfig,
) -> Result<Channel> {
    require_covariant(omega, rep, cfg.seed)?;
    let (a, b) = match seed {
        Some(ab) => ab,
        None => {
            let r = product_numerical_range(omega, cfg)?;
            (r.maximizer_a, r.maximizer_b)
        }
    };
    let d = rep.dim_input() as f64;
    let mut povm = Vec::with_capacity(rep.len());
    let mut outputs = Vec::with_capacity(rep.len());
    let mut total = CMat::zeros(rep.dim_input(), rep.dim_input());
    for ((u, up), &w) in rep.elements.iter().zip(&rep.weights) {
        let phi = u * &b;
        let p = &phi * phi.adjoint() * c(d * w, 0.0);
        total += &p;
        povm.push(Operator::new(vec![rep.dim_input()], p)?);
        let psi = up * &a;
        outputs.push(Operator::new(vec![rep.dim_output()], &psi * psi.adjoint())?);
    }
    let dev = (total - CMat::identity(rep.dim_input(), rep.dim_input())).norm();
    if dev > 1e-9 {
        return Err(QbError::Construction(format!("covariant POVM is incomplete (deviation {dev:e})")));
    }
    mp_channel(&povm, &outputs)
}

/// `m + ‖m‖₂ I` and the shift `‖m‖₂`.
pub fn ppt_offset(m: &Operator) -> (Operator, f64) {
    let s = m.spectral_norm();
    let shifted = m.add(&Operator::identity(m.dims()).scale(s)).expect("same dims");
    (shifted, s)
}
