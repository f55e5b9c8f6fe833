//! Truncated Fock-space simulator for coherent-state tests.
//!
//! Modes are cut at `n_max` levels. A two-mode amplitude array `ψ[a, r]` is
//! stored as an `n_max × n_max` matrix with the device output `A'` as row
//! index and the reference `R` as column index; flattened indices are
//! `a·n_max + r`.
//!
//! The coherent-pair observables
//! `F(c) = ∫d²γ/π |cγ⟩⟨cγ| ⊗ |γ̄⟩⟨γ̄|` and `Z(c) = ∫d²γ/π |cγ⟩⟨cγ| ⊗ |γ⟩⟨γ|`
//! are realized physically as a squeezer followed by a Gaussian reduction,
//! and as a beamsplitter followed by photodetection.

use std::collections::HashMap;
use std::f64::consts::PI;

use gauss_quad::{GaussHermite, GaussLaguerre};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::model::{Channel, P_MIN};
use crate::tensor::{c, hermitian_eig, CMat, CVec, Operator, PureState, C64};

/// Largest cutoff the simulator will suggest or build.
pub const MAX_CUTOFF: usize = 100_000;
/// Trace-preservation deficit allowed for the additive-noise family.
pub const NOISE_DEFICIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockCutoff {
    pub n_max: usize,
    pub leak_tol: f64,
}

impl Default for FockCutoff {
    fn default() -> Self {
        Self { n_max: 40, leak_tol: 1e-8 }
    }
}

impl FockCutoff {
    pub fn new(n_max: usize, leak_tol: f64) -> Result<Self> {
        if !(2..=MAX_CUTOFF).contains(&n_max) {
            return Err(QbError::Argument(format!("n_max must be in 2..={MAX_CUTOFF}, got {n_max}")));
        }
        if !(leak_tol > 0.0 && leak_tol < 1.0) {
            return Err(QbError::Argument(format!("leak_tol must be in (0, 1), got {leak_tol}")));
        }
        Ok(Self { n_max, leak_tol })
    }

    pub fn with_n_max(n_max: usize) -> Result<Self> {
        Self::new(n_max, Self::default().leak_tol)
    }
}

/// `ln k!` for `k = 0..n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for k in 1..=n {
        out.push(out[k - 1] + (k as f64).ln());
    }
    out
}

fn ipow(k: i64) -> C64 {
    match k.rem_euclid(4) {
        0 => c(1., 0.),
        1 => c(0., 1.),
        2 => c(-1., 0.),
        _ => c(0., -1.),
    }
}

/// `1 − Σ_{k<n} e^{−r2} r2^k / k!`, the weight a coherent state with
/// `|α|² = r2` puts at or above level `n`.
pub fn coherent_leakage(r2: f64, n: usize) -> f64 {
    if r2 == 0.0 {
        return 0.0;
    }
    let lr = r2.ln();
    let mut lf = 0.0;
    let mut s = 0.0;
    for k in 0..n {
        if k > 0 {
            lf += (k as f64).ln();
        }
        s += (-r2 + k as f64 * lr - lf).exp();
    }
    (1.0 - s).max(0.0)
}

/// Smallest cutoff at which a coherent state with `|α|² = r2` leaks at most `tol`.
pub fn suggest_cutoff_coherent(r2: f64, tol: f64) -> usize {
    if r2 == 0.0 {
        return 1;
    }
    let lr = r2.ln();
    let (mut lf, mut s) = (0.0, 0.0);
    for k in 0..MAX_CUTOFF {
        if k > 0 {
            lf += (k as f64).ln();
        }
        s += (-r2 + k as f64 * lr - lf).exp();
        if 1.0 - s <= tol && k as f64 > r2 {
            return k + 1;
        }
    }
    MAX_CUTOFF
}

/// `⟨n|α⟩` for `n < n_max` without renormalization.
pub fn coherent_amplitudes(alpha: C64, n_max: usize) -> CVec {
    let r = alpha.norm();
    if r == 0.0 {
        return CVec::from_fn(n_max, |n, _| if n == 0 { c(1., 0.) } else { c(0., 0.) });
    }
    let (lr, ph) = (r.ln(), alpha.arg());
    let mut lf = 0.0;
    CVec::from_fn(n_max, |n, _| {
        if n > 0 {
            lf += (n as f64).ln();
        }
        C64::from_polar((-0.5 * r * r + n as f64 * lr - 0.5 * lf).exp(), n as f64 * ph)
    })
}

/// Normalized truncated coherent state.
///
/// # Errors
/// [`QbError::Cutoff`] when the truncation leakage exceeds `leak_tol`.
pub fn coherent_state(alpha: C64, cutoff: &FockCutoff) -> Result<PureState> {
    let leak = coherent_leakage(alpha.norm_sqr(), cutoff.n_max);
    if leak > cutoff.leak_tol {
        return Err(QbError::Cutoff {
            message: format!("coherent state |α|={:.4} leaks {leak:e} above n_max={}", alpha.norm(), cutoff.n_max),
            suggested: suggest_cutoff_coherent(alpha.norm_sqr(), cutoff.leak_tol),
        });
    }
    PureState::normalized(vec![cutoff.n_max], coherent_amplitudes(alpha, cutoff.n_max))
}

/// `L_k^{(a)}(x)` for `k = 0..=kmax`.
fn laguerre_seq(kmax: usize, a: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax >= 1 {
        out.push(1.0 + a - x);
    }
    for k in 1..kmax {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Gauss–Hermite rule for `e^{−x²}` with weights recomputed as
/// `1/Σ_k p_k(x)²` over the orthonormal polynomials; eigenvector-based
/// weights lose all relative accuracy on the outer nodes.
pub fn hermite_rule(n: usize) -> Result<Vec<(f64, f64)>> {
    let rule = GaussHermite::new(n.max(2)).map_err(|e| QbError::Numerical(e.to_string()))?;
    Ok(rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, _)| {
            let (mut p0, mut p1) = (PI.powf(-0.25), 2f64.sqrt() * x * PI.powf(-0.25));
            let mut s = p0 * p0 + p1 * p1;
            for k in 1..n.max(2) - 1 {
                let kf = k as f64;
                let p2 = (2.0 / (kf + 1.0)).sqrt() * x * p1 - (kf / (kf + 1.0)).sqrt() * p0;
                s += p2 * p2;
                (p0, p1) = (p1, p2);
            }
            (x, 1.0 / s)
        })
        .collect())
}

/// Gauss–Laguerre rule for `e^{−x}` with Christoffel weights `1/Σ_k L_k(x)²`.
pub fn laguerre_rule(n: usize) -> Result<Vec<(f64, f64)>> {
    let rule = GaussLaguerre::new(n.max(2), 0.0).map_err(|e| QbError::Numerical(e.to_string()))?;
    Ok(rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, _)| (x, 1.0 / laguerre_seq(n.max(2) - 1, 0.0, x).iter().map(|l| l * l).sum::<f64>()))
        .collect())
}

/// Matrix elements `⟨m|D(α)|n⟩` of the untruncated displacement for
/// `m < rows`, `n < cols`.
pub fn displacement_block(alpha: C64, rows: usize, cols: usize) -> CMat {
    let r2 = alpha.norm_sqr();
    if r2 == 0.0 {
        return CMat::from_fn(rows, cols, |m, n| if m == n { c(1., 0.) } else { c(0., 0.) });
    }
    let lnf = ln_factorials(rows + cols);
    let (lr, ph) = (0.5 * r2.ln(), alpha.arg());
    let mut out = CMat::zeros(rows, cols);
    let dmax = rows.max(cols);
    for d in 0..dmax {
        // m − n = d (lower) and n − m = d (upper) share L^{(d)}.
        let kmax = rows.min(cols);
        let lag = laguerre_seq(kmax, d as f64, r2);
        for k in 0..kmax {
            let (m, n) = (k + d, k);
            if (m >= rows || n >= cols) && (d == 0 || n >= rows || m >= cols) {
                continue;
            }
            let mag = (0.5 * (lnf[k] - lnf[k + d]) + d as f64 * lr - 0.5 * r2).exp() * lag[k];
            if m < rows && n < cols {
                out[(m, n)] = C64::from_polar(mag, d as f64 * ph);
            }
            if d > 0 && n < rows && m < cols {
                // (−ᾱ)^d
                out[(n, m)] = C64::from_polar(mag, d as f64 * (PI - ph));
            }
        }
    }
    out
}

/// Truncated displacement `P D(α) P`.
pub fn displacement(alpha: C64, n_max: usize) -> CMat {
    displacement_block(alpha, n_max, n_max)
}

/// Levels needed so that a thermal state with ratio `y` loses under 1e-17.
fn thermal_span(y: f64) -> usize {
    if y <= 0.0 {
        1
    } else {
        ((1e-17f64).ln() / y.ln()).ceil().max(1.0) as usize
    }
}

/// `P ρ_{α,μ} P` without renormalization, with `ρ_{α,μ} = D(α) τ_μ D(α)†`
/// and `τ_μ` thermal with mean photon number `1/μ`.
fn displaced_thermal_block(alpha: C64, mu: f64, n_max: usize) -> CMat {
    let y = 1.0 / (1.0 + mu);
    let span = n_max + thermal_span(y);
    let d = displacement_block(alpha, n_max, span);
    let mut dw = d.clone();
    for n in 0..span {
        let p = (1.0 - y) * y.powi(n as i32);
        dw.column_mut(n).scale_mut(p);
    }
    dw * d.adjoint()
}

/// Displaced thermal state `∫d²β/π μ e^{−μ|β|²} |α+β⟩⟨α+β|`, evaluated
/// exactly as `D(α) τ_μ D(α)†`. `mu = None` is the noiseless limit.
///
/// # Errors
/// [`QbError::Cutoff`] when `1 − Tr` exceeds `leak_tol`.
pub fn displaced_thermal(alpha: C64, mu: Option<f64>, cutoff: &FockCutoff) -> Result<Operator> {
    let Some(mu) = mu else {
        return Ok(Operator::projector(&coherent_state(alpha, cutoff)?));
    };
    if !(mu > 0.0) {
        return Err(QbError::Argument(format!("mu must be positive, got {mu}")));
    }
    let rho = displaced_thermal_block(alpha, mu, cutoff.n_max);
    let tr = rho.trace().re;
    let leak = 1.0 - tr;
    if leak > cutoff.leak_tol {
        let r2 = (alpha.norm() + 6.0 / mu.sqrt()).powi(2);
        return Err(QbError::Cutoff {
            message: format!("displaced thermal state leaks {leak:e} above n_max={}", cutoff.n_max),
            suggested: suggest_cutoff_coherent(r2, cutoff.leak_tol).max(cutoff.n_max + 1),
        });
    }
    Operator::new(vec![cutoff.n_max], rho / c(tr, 0.0))
}

/// Thermal state `(1−y) Σ yⁿ|n⟩⟨n|`, renormalized on the cutoff.
pub fn thermal(y: f64, n_max: usize) -> Operator {
    let p: Vec<f64> = (0..n_max).map(|n| y.powi(n as i32)).collect();
    let s: f64 = p.iter().sum();
    Operator::diag(&p.iter().map(|v| v / s).collect::<Vec<_>>())
}

pub fn number_operator(n_max: usize) -> Operator {
    Operator::diag(&(0..n_max).map(|n| n as f64).collect::<Vec<_>>())
}

/// Schmidt coefficients `√(1−x) x^{n/2}` of the two-mode squeezed vacuum and
/// its truncation leakage `x^{n_max}`.
pub fn tmsv_schmidt(x: f64, cutoff: &FockCutoff) -> Result<(Vec<f64>, f64)> {
    if !(0.0..1.0).contains(&x) {
        return Err(QbError::Argument(format!("x must be in [0, 1), got {x}")));
    }
    let n = cutoff.n_max;
    let leak = x.powi(n as i32);
    if leak > cutoff.leak_tol {
        let need = (cutoff.leak_tol.ln() / x.ln()).ceil() as usize;
        return Err(QbError::Cutoff {
            message: format!("two-mode squeezed vacuum at x={x} leaks {leak:e} above n_max={n}"),
            suggested: need.min(MAX_CUTOFF),
        });
    }
    let norm = (1.0 - leak).sqrt();
    Ok(((0..n).map(|k| (1.0 - x).sqrt() * x.powf(0.5 * k as f64) / norm).collect(), leak))
}

/// Two-mode squeezed vacuum `√(1−x) Σ x^{n/2}|n,n⟩`, dims `[n_max, n_max]`.
pub fn tmsv(x: f64, cutoff: &FockCutoff) -> Result<PureState> {
    let (s, _) = tmsv_schmidt(x, cutoff)?;
    let n = cutoff.n_max;
    let mut v = CVec::zeros(n * n);
    for (k, sk) in s.iter().enumerate() {
        v[k * n + k] = c(*sk, 0.0);
    }
    PureState::normalized(vec![n, n], v)
}

/// `G_θ = Σ tanh^{2n}θ |n⟩⟨n|`.
pub fn gaussian_observable(theta: f64, n_max: usize) -> Operator {
    let t2 = theta.tanh().powi(2);
    Operator::diag(&(0..n_max).map(|n| t2.powi(n as i32)).collect::<Vec<_>>())
}

/// `exp(θK)` for a real antisymmetric tridiagonal chain generator with
/// `K[j−1, j] = e[j] = −K[j, j−1]`. Conjugating by `diag(iʲ)` turns `K`
/// into `−i T` with `T` real symmetric.
fn chain_exp(e: &[f64], theta: f64) -> CMat {
    let l = e.len();
    if l == 1 || theta == 0.0 {
        return CMat::identity(l, l);
    }
    let t = DMatrix::<f64>::from_fn(l, l, |i, j| {
        if j == i + 1 {
            e[j]
        } else if i == j + 1 {
            e[i]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let ph: Vec<C64> = eig.eigenvalues.iter().map(|&lam| C64::from_polar(1.0, -theta * lam)).collect();
    let v = &eig.eigenvectors;
    CMat::from_fn(l, l, |p, q| {
        let mut s = c(0., 0.);
        for (m, z) in ph.iter().enumerate() {
            s += z * (v[(p, m)] * v[(q, m)]);
        }
        s * ipow(q as i64 - p as i64)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    First,
    Second,
}

/// One invariant subspace of a two-mode unitary: a chain of Fock pairs,
/// of which some lie inside the `n_max × n_max` box.
#[derive(Clone, Debug)]
struct Sector {
    states: Vec<(usize, usize)>,
    /// Rows follow `states`; columns are the box states (squeezer) or all
    /// states (beamsplitter), in chain order.
    u: CMat,
}

impl Sector {
    fn box_positions(&self, n: usize) -> Vec<(usize, usize)> {
        self.states.iter().enumerate().filter(|(_, (a, b))| *a < n && *b < n).map(|(j, (a, b))| (j, a * n + b)).collect()
    }
}

/// Two-mode Gaussian unitary stored sector by sector.
#[derive(Clone, Debug)]
pub struct TwoModeUnitary {
    n_max: usize,
    sectors: Vec<Sector>,
    quality: f64,
}

impl TwoModeUnitary {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Largest population a low-photon input (both modes below `n_max/2`)
    /// sends past the stored rows of its chain. Zero for exact sectors.
    pub fn quality(&self) -> f64 {
        self.quality
    }

    fn act(&self, psi: &CMat, adjoint: bool) -> CMat {
        let n = self.n_max;
        let mut out = CMat::zeros(n, n);
        for s in &self.sectors {
            let pos = s.box_positions(n);
            for &(jo, io) in &pos {
                let mut acc = c(0., 0.);
                for &(ji, ii) in &pos {
                    let u = if adjoint { s.u[(ji, jo)].conj() } else { s.u[(jo, ji)] };
                    acc += u * psi[(ii / n, ii % n)];
                }
                out[(io / n, io % n)] = acc;
            }
        }
        out
    }

    /// `P U P ψ` for an amplitude array `ψ[a, b]`.
    pub fn apply(&self, psi: &CMat) -> CMat {
        self.act(psi, false)
    }

    pub fn apply_adjoint(&self, psi: &CMat) -> CMat {
        self.act(psi, true)
    }

    /// Dense `P U P` on `[n_max, n_max]`.
    pub fn to_operator(&self) -> Operator {
        let n = self.n_max;
        let mut m = CMat::zeros(n * n, n * n);
        for s in &self.sectors {
            let pos = s.box_positions(n);
            for &(jo, io) in &pos {
                for &(ji, ii) in &pos {
                    m[(io, ii)] = s.u[(jo, ji)];
                }
            }
        }
        Operator::new(vec![n, n], m).expect("square")
    }
}

/// Rows past the box kept per squeezer column, so that `tanh^{2j}θ`
/// falls below machine precision.
fn squeezer_tail(theta: f64) -> usize {
    let t2 = theta.tanh().powi(2);
    if t2 > 0.0 {
        (37.0 / -t2.ln()).ceil().min(4000.0) as usize
    } else {
        0
    }
}

fn squeezer_pad(theta: f64, n: usize) -> usize {
    n.max(20) + squeezer_tail(theta)
}

/// Column `S_θ|k, j⟩` of one sector (`k2 = 2k = |n_a − n_b| + 1`) on a
/// chain of `len` sites, unit norm.
///
/// The column is the eigenvector of `S K₀ S† = cosh2θ K₀ + ½sinh2θ (K₊ + K₋)`
/// with eigenvalue `k + j`, a three-term recurrence in the row index. It is
/// run forward from row 0 through the region where the solution grows and
/// backward from the chain end through the decaying tail, and the two
/// pieces are matched at the first oscillatory row. The sign follows
/// `⟨k,0|S|k,j⟩ ∝ tanh^j θ`.
fn squeezer_column(theta: f64, k2: usize, j: usize, len: usize) -> Vec<f64> {
    let k = 0.5 * k2 as f64;
    let (ch2, sh) = ((2.0 * theta).cosh(), 0.5 * (2.0 * theta).sinh());
    let e = k + j as f64;
    let diag = |p: usize| e - ch2 * (k + p as f64);
    // Couples rows p − 1 and p.
    let off = |p: usize| sh * ((p * (p + k2 - 1)) as f64).sqrt();
    let mut pm = 0;
    while pm + 2 < len && diag(pm).abs() > off(pm).abs() + off(pm + 1).abs() {
        pm += 1;
    }
    let pm = pm.max(1);
    let mut v = vec![0.0; len + 1];
    v[0] = 1.0;
    v[1] = diag(0) * v[0] / off(1);
    for p in 1..pm {
        v[p + 1] = (diag(p) * v[p] - off(p) * v[p - 1]) / off(p + 1);
        if v[p + 1].abs() > 1e150 {
            v[..=p + 1].iter_mut().for_each(|x| *x *= 1e-150);
        }
    }
    let mut back = vec![0.0; len + 1];
    back[len - 1] = 1.0;
    for p in (pm..len).rev() {
        back[p - 1] = (diag(p) * back[p] - off(p + 1) * back[p + 1]) / off(p);
        if back[p - 1].abs() > 1e150 {
            back[p - 1..len].iter_mut().for_each(|x| *x *= 1e-150);
        }
    }
    // Least squares over two rows: one of them may be a node.
    let scale = (v[pm - 1] * back[pm - 1] + v[pm] * back[pm]) / (back[pm - 1].powi(2) + back[pm].powi(2));
    for p in pm + 1..len {
        v[p] = back[p] * scale;
    }
    v.truncate(len);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sign = if theta < 0.0 && j % 2 == 1 { -1.0 } else { 1.0 };
    let f = sign * v[0].signum() / norm;
    v.iter_mut().for_each(|x| *x *= f);
    v
}

/// Squeezer sectors of fixed `n_a − n_b`. Each stores the box columns on
/// `inside + pad` rows; every column is computed on a chain long enough
/// to hold its support (up to `(k+j)e^{2θ}` plus the decay tail).
fn squeezer_sectors(theta: f64, n: usize) -> (Vec<Sector>, f64) {
    let pad = squeezer_pad(theta, n);
    let tail = squeezer_tail(theta);
    let growth = (2.0 * theta.abs()).exp();
    let nn = n as i64;
    let built: Vec<(Sector, f64)> = (-(nn - 1)..nn)
        .into_par_iter()
        .map(|delta| {
            let (a0, b0) = (delta.max(0) as usize, (-delta).max(0) as usize);
            let inside = n - delta.unsigned_abs() as usize;
            let rows = inside + pad;
            let states: Vec<_> = (0..rows).map(|j| (a0 + j, b0 + j)).collect();
            if theta == 0.0 {
                return (Sector { states, u: CMat::identity(rows, inside) }, 0.0);
            }
            let k2 = delta.unsigned_abs() as usize + 1;
            let mut u = CMat::zeros(rows, inside);
            let mut q = 0.0f64;
            for j in 0..inside {
                let support = ((0.5 * k2 as f64 + j as f64) * growth).ceil() as usize + 2 * tail + 20;
                let col = squeezer_column(theta, k2, j, rows.max(support));
                for (p, x) in col.iter().take(rows).enumerate() {
                    u[(p, j)] = c(*x, 0.0);
                }
                if a0 + j < n / 2 && b0 + j < n / 2 {
                    q = q.max(col[rows..].iter().map(|x| x * x).sum());
                }
            }
            (Sector { states, u }, q)
        })
        .collect();
    let quality = built.iter().map(|(_, q)| *q).fold(0.0, f64::max);
    (built.into_iter().map(|(s, _)| s).collect(), quality)
}

/// Two-mode squeezer `S_θ = exp[θ(ab − a†b†)]`.
///
/// Box columns are exact up to the recurrence round-off;
/// [`TwoModeUnitary::quality`] records the population they carry past the
/// stored rows.
pub fn two_mode_squeezer(theta: f64, n_max: usize) -> TwoModeUnitary {
    let (sectors, quality) = squeezer_sectors(theta, n_max);
    TwoModeUnitary { n_max, sectors, quality }
}

fn beamsplitter_chain(total: usize) -> Vec<f64> {
    // Generator a†b − ab† on states (j, total − j): K[j−1, j] = −√(j(total−j+1)).
    (0..=total).map(|j| -((j * (total + 1 - j)) as f64).sqrt()).collect()
}

fn beamsplitter_sectors(t: f64, n: usize) -> Vec<Sector> {
    let phi = t.sqrt().clamp(0.0, 1.0).acos();
    (0..=2 * (n - 1))
        .into_par_iter()
        .map(|total| Sector { states: (0..=total).map(|j| (j, total - j)).collect(), u: chain_exp(&beamsplitter_chain(total), phi) })
        .collect()
}

/// Beamsplitter `exp[φ(a†b − ab†)]` with `cos²φ = t`, mapping
/// `|α, β⟩ → |√t α + √(1−t) β, √t β − √(1−t) α⟩`. Number conserving, so the
/// box block is exact.
pub fn beamsplitter(t: f64, n_max: usize) -> Result<TwoModeUnitary> {
    if !(0.0..=1.0).contains(&t) {
        return Err(QbError::Argument(format!("transmissivity must be in [0, 1], got {t}")));
    }
    Ok(TwoModeUnitary { n_max, sectors: beamsplitter_sectors(t, n_max), quality: 0.0 })
}

/// Observable that is block diagonal in a set of invariant sectors.
#[derive(Clone, Debug)]
pub struct BlockObservable {
    n_max: usize,
    blocks: Vec<(Vec<usize>, CMat)>,
}

impl BlockObservable {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn scaled(mut self, w: f64) -> Self {
        for (_, m) in &mut self.blocks {
            *m *= c(w, 0.0);
        }
        self
    }

    /// `⟨ψ|O|ψ⟩` for an amplitude array `ψ[a, r]`.
    pub fn expectation_pure(&self, psi: &CMat) -> f64 {
        let n = self.n_max;
        let mut acc = 0.0;
        for (idx, m) in &self.blocks {
            let v = CVec::from_iterator(idx.len(), idx.iter().map(|&i| psi[(i / n, i % n)]));
            acc += v.dotc(&(m * &v)).re;
        }
        acc
    }

    /// `Tr[O ρ]` for a dense two-mode operator.
    pub fn expectation_dense(&self, rho: &CMat) -> f64 {
        let mut acc = c(0., 0.);
        for (idx, m) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    acc += m[(a, b)] * rho[(j, i)];
                }
            }
        }
        acc.re
    }

    pub fn to_operator(&self) -> Operator {
        let n = self.n_max;
        let mut out = CMat::zeros(n * n, n * n);
        for (idx, m) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    out[(i, j)] = m[(a, b)];
                }
            }
        }
        Operator::new(vec![n, n], out).expect("square")
    }
}

/// `S† (G_θ on port) S` restricted to the box, built from the squeezer
/// sectors. Also returns the squeezer quality.
pub fn squeezed_gaussian_observable(squeeze: f64, g_theta: f64, port: Port, n_max: usize) -> (BlockObservable, f64) {
    let (sectors, quality) = squeezer_sectors(squeeze, n_max);
    let t2 = g_theta.tanh().powi(2);
    let blocks = sectors
        .par_iter()
        .map(|s| {
            let pos = s.box_positions(n_max);
            let cols: Vec<usize> = pos.iter().map(|p| p.0).collect();
            let ub = s.u.select_columns(cols.iter());
            let mut gu = ub.clone();
            for (j, &(a, b)) in s.states.iter().enumerate() {
                let nport = if port == Port::First { a } else { b };
                gu.row_mut(j).scale_mut(t2.powi(nport as i32));
            }
            (pos.iter().map(|p| p.1).collect(), ub.adjoint() * gu)
        })
        .collect();
    (BlockObservable { n_max, blocks }, quality)
}

/// `U†(I ⊗ |0⟩⟨0|)U` for the beamsplitter with transmissivity `t`.
pub fn beamsplitter_vacuum_observable(t: f64, n_max: usize) -> Result<BlockObservable> {
    let sectors = beamsplitter(t, n_max)?.sectors;
    let blocks = sectors
        .iter()
        .map(|s| {
            let pos = s.box_positions(n_max);
            let last = s.states.len() - 1; // (total, 0)
            let row = CVec::from_iterator(pos.len(), pos.iter().map(|&(j, _)| s.u[(last, j)]));
            (pos.iter().map(|p| p.1).collect(), row.conjugate() * row.transpose())
        })
        .collect();
    Ok(BlockObservable { n_max, blocks })
}

/// Closed-form `F(c)` (`conjugate = false`) or `Z(c)` (`conjugate = true`):
/// `⟨m₁m₂|·|n₁n₂⟩ = c^{m₁+n₁} s! / ((1+c²)^{s+1} √(m₁!n₁!m₂!n₂!))` with
/// `s = m₁+n₂` and `m₁−m₂ = n₁−n₂` for `F`, `s = m₁+m₂ = n₁+n₂` for `Z`.
pub fn coherent_pair_observable(cr: f64, conjugate: bool, n_max: usize) -> BlockObservable {
    let n = n_max;
    let lnf = ln_factorials(2 * n);
    let l1c = (1.0 + cr * cr).ln();
    let lc = if cr > 0.0 { cr.ln() } else { f64::NEG_INFINITY };
    let elem = |m1: usize, m2: usize, n1: usize, n2: usize| {
        let s = if conjugate { m1 + m2 } else { m1 + n2 };
        let pw = m1 + n1;
        let lcp = if pw == 0 { 0.0 } else { pw as f64 * lc };
        (lcp + lnf[s] - (s + 1) as f64 * l1c - 0.5 * (lnf[m1] + lnf[n1] + lnf[m2] + lnf[n2])).exp()
    };
    let sectors: Vec<Vec<(usize, usize)>> = if conjugate {
        (0..=2 * (n - 1)).map(|s| (0..=s).filter(|&a| a < n && s - a < n).map(|a| (a, s - a)).collect()).collect()
    } else {
        let nn = n as i64;
        (-(nn - 1)..nn)
            .map(|d| {
                let (a0, b0) = (d.max(0) as usize, (-d).max(0) as usize);
                (0..n - d.unsigned_abs() as usize).map(|j| (a0 + j, b0 + j)).collect()
            })
            .collect()
    };
    let blocks = sectors
        .into_iter()
        .map(|st| {
            let m = CMat::from_fn(st.len(), st.len(), |i, j| c(elem(st[i].0, st[i].1, st[j].0, st[j].1), 0.0));
            (st.iter().map(|&(a, b)| a * n + b).collect(), m)
        })
        .collect();
    BlockObservable { n_max, blocks }
}

/// Gaussian additive noise `∫d²δ/π ν e^{−ν|δ|²} D(δ)·D(δ)†` on a cutoff.
///
/// Radial Gauss–Laguerre nodes in `u = (ν+1)|δ|²` integrate the truncated
/// matrix elements exactly; the angular average is taken analytically for
/// the superoperator and on `2 n_max` equally spaced angles for the Kraus
/// family. Weights are scaled down if `Σ K†K` exceeds the identity.
#[derive(Clone, Debug)]
pub struct AdditiveNoise {
    nu: f64,
    n_max: usize,
    radial: Vec<(f64, CMat)>,
    bands: Vec<(Vec<(usize, usize)>, DMatrix<f64>)>,
    gram_diag: Vec<f64>,
    deficit: f64,
}

impl AdditiveNoise {
    /// Builds the family without judging its truncation; see
    /// [`AdditiveNoise::deficit`] and [`AdditiveNoise::deficit_on`].
    pub fn new(nu: f64, n_max: usize) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(QbError::Argument(format!("nu must be positive and finite, got {nu}")));
        }
        if n_max < 2 {
            return Err(QbError::Argument("n_max must be at least 2".into()));
        }
        let mut radial: Vec<(f64, CMat)> = laguerre_rule(n_max + 2)?
            .iter()
            .map(|&(u, w)| {
                let s = u / (nu + 1.0);
                (nu / (nu + 1.0) * w * s.exp(), displacement(c(s.sqrt(), 0.0), n_max))
            })
            .collect();
        let mut gram_diag: Vec<f64> = (0..n_max)
            .map(|k| radial.iter().map(|(w, d)| w * d.column(k).norm_squared()).sum())
            .collect();
        let top = gram_diag.iter().cloned().fold(0.0, f64::max);
        if top > 1.0 {
            for (w, _) in &mut radial {
                *w /= top;
            }
            for g in &mut gram_diag {
                *g /= top;
            }
        }
        let deficit = gram_diag[..n_max.div_ceil(2)].iter().map(|g| 1.0 - g).fold(0.0, f64::max);
        let nn = n_max as i64;
        let bands = (-(nn - 1)..nn)
            .into_par_iter()
            .map(|d| {
                let pairs: Vec<(usize, usize)> = (0..n_max)
                    .filter_map(|n| {
                        let m = n as i64 + d;
                        (0..nn).contains(&m).then_some((m as usize, n))
                    })
                    .collect();
                let t = DMatrix::<f64>::from_fn(pairs.len(), pairs.len(), |o, i| {
                    let ((p, q), (m, n)) = (pairs[o], pairs[i]);
                    radial.iter().map(|(w, dk)| w * dk[(p, m)].re * dk[(q, n)].re).sum()
                });
                (pairs, t)
            })
            .collect();
        Ok(Self { nu, n_max, radial, bands, gram_diag, deficit })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Largest `1 − ⟨n|Σ K†K|n⟩` for `n < n_max/2`.
    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    /// Trace lost on a state of the first factor of a `[n_max, r]` operator,
    /// `Tr[(I − Σ K†K) ρ]`.
    pub fn deficit_on(&self, op: &CMat) -> f64 {
        let n = self.n_max;
        let r = op.nrows() / n;
        (0..n).map(|m| (1.0 - self.gram_diag[m]) * (0..r).map(|a| op[(m * r + a, m * r + a)].re).sum::<f64>()).sum()
    }

    fn require_low_block(&self) -> Result<()> {
        if self.deficit > NOISE_DEFICIT_TOL {
            return Err(QbError::Cutoff {
                message: format!(
                    "additive noise ν={} loses {:e} of the trace below n_max/2 at n_max={}",
                    self.nu, self.deficit, self.n_max
                ),
                suggested: self.n_max + (self.n_max / 2).max((8.0 / self.nu).ceil() as usize),
            });
        }
        Ok(())
    }

    /// Diagonal of `Σ K†K` (the family is phase covariant, so this is all of it).
    pub fn gram_diagonal(&self) -> &[f64] {
        &self.gram_diag
    }

    /// Acts on the first factor of a `[n_max, r]` operator (`r = 1` for a
    /// single mode).
    pub fn apply_first(&self, op: &CMat) -> CMat {
        let n = self.n_max;
        let r = op.nrows() / n;
        let mut out = CMat::zeros(op.nrows(), op.ncols());
        let results: Vec<(DMatrix<f64>, DMatrix<f64>)> = self
            .bands
            .par_iter()
            .map(|(pairs, t)| {
                // Columns run over the reference indices (a, b).
                let xr = DMatrix::<f64>::from_fn(pairs.len(), r * r, |i, ab| op[(pairs[i].0 * r + ab / r, pairs[i].1 * r + ab % r)].re);
                let xi = DMatrix::<f64>::from_fn(pairs.len(), r * r, |i, ab| op[(pairs[i].0 * r + ab / r, pairs[i].1 * r + ab % r)].im);
                (t * xr, t * xi)
            })
            .collect();
        for ((pairs, _), (yr, yi)) in self.bands.iter().zip(&results) {
            for (o, &(p, q)) in pairs.iter().enumerate() {
                for ab in 0..r * r {
                    out[(p * r + ab / r, q * r + ab % r)] = c(yr[(o, ab)], yi[(o, ab)]);
                }
            }
        }
        out
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        self.apply_first(rho)
    }

    /// `Tr[(I − Σ K†K) ρ]` on the first mode for `ρ = Σ_k |ψ_k⟩⟨ψ_k|`,
    /// with `ψ_k[(first, second)]`.
    pub fn deficit_on_outputs(&self, outputs: &[CMat]) -> f64 {
        outputs
            .iter()
            .map(|psi| (0..self.n_max).map(|m| (1.0 - self.gram_diag[m]) * psi.row(m).norm_squared()).sum::<f64>())
            .sum()
    }

    /// `Tr[O (N ⊗ I)(ρ)]` for `ρ = Σ_k |ψ_k⟩⟨ψ_k|`. Only the output entries
    /// read by the blocks of `O` are formed, band by band.
    pub fn expectation_on_outputs(&self, outputs: &[CMat], obs: &BlockObservable) -> f64 {
        let n = self.n_max;
        let amp = CMat::from_fn(outputs.len(), n * n, |k, i| outputs[k][(i / n, i % n)]);
        // Per band p − q, the reference pairs (a, b) whose entries are read.
        let mut wanted: Vec<HashMap<(usize, usize), usize>> = vec![HashMap::new(); 2 * n - 1];
        for (idx, _) in &obs.blocks {
            for &i in idx {
                for &j in idx {
                    let refs = &mut wanted[j / n + n - 1 - i / n];
                    let next = refs.len();
                    refs.entry((j % n, i % n)).or_insert(next);
                }
            }
        }
        let sigma: Vec<CMat> = self
            .bands
            .par_iter()
            .zip(&wanted)
            .map(|((pairs, t), refs)| {
                let mut cols = vec![(0, 0); refs.len()];
                for (&ab, &k) in refs {
                    cols[k] = ab;
                }
                let x = CMat::from_fn(pairs.len(), cols.len(), |r, k| {
                    let ((m, q), (a, b)) = (pairs[r], cols[k]);
                    amp.column(q * n + b).dotc(&amp.column(m * n + a))
                });
                t.map(|v| c(v, 0.0)) * x
            })
            .collect();
        let mut acc = c(0., 0.);
        for (idx, m) in &obs.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    let (p, q) = (j / n, i / n);
                    let band = p + n - 1 - q;
                    acc += m[(a, b)] * sigma[band][(p.min(q), wanted[band][&(j % n, i % n)])];
                }
            }
        }
        acc.re
    }

    /// Explicit Kraus family `√(w_k/M) P D(r_k e^{iφ_j}) P`, `M = 2 n_max`.
    pub fn kraus_channel(&self) -> Result<Channel> {
        let n = self.n_max;
        let angles = 2 * n;
        let mut kraus = Vec::with_capacity(angles * self.radial.len());
        for (w, d) in &self.radial {
            let amp = (w / angles as f64).sqrt();
            for j in 0..angles {
                let phi = 2.0 * PI * j as f64 / angles as f64;
                kraus.push(CMat::from_fn(n, n, |p, m| d[(p, m)] * C64::from_polar(amp, phi * (p as f64 - m as f64))));
            }
        }
        Channel::new(kraus, false)
    }
}

/// Kraus form of the additive-noise channel on a cutoff.
///
/// # Errors
/// [`QbError::Cutoff`] when some level below `n_max/2` loses more than
/// [`NOISE_DEFICIT_TOL`] of its trace.
pub fn additive_noise_channel(nu: f64, cutoff: &FockCutoff) -> Result<Channel> {
    let noise = AdditiveNoise::new(nu, cutoff.n_max)?;
    noise.require_low_block()?;
    noise.kraus_channel()
}

/// Beamsplitter with a vacuum environment, transmissivity `t`.
pub fn device_attenuator(t: f64, n_max: usize) -> Result<Channel> {
    if !(0.0..=1.0).contains(&t) {
        return Err(QbError::Argument(format!("transmissivity must be in [0, 1], got {t}")));
    }
    let lnf = ln_factorials(n_max);
    let kraus = (0..n_max)
        .map(|k| {
            CMat::from_fn(n_max, n_max, |row, n| {
                if n >= k && row == n - k {
                    let binom = (0.5 * (lnf[n] - lnf[k] - lnf[n - k])).exp();
                    c(binom * t.powf(0.5 * (n - k) as f64) * (1.0 - t).powf(0.5 * k as f64), 0.0)
                } else {
                    c(0., 0.)
                }
            })
        })
        .collect();
    Channel::new(kraus, true)
}

/// `ρ ↦ Tr[ρ] |0⟩⟨0|`.
pub fn device_vacuum(n_max: usize) -> Channel {
    let kraus = (0..n_max).map(|k| CMat::from_fn(n_max, n_max, |r, col| if r == 0 && col == k { c(1., 0.) } else { c(0., 0.) })).collect();
    Channel::from_kraus_unchecked(kraus, true)
}

/// Heterodyne measurement followed by preparation of `|gγ⟩`, discretized on
/// an `n_max`-point Gauss–Hermite grid per quadrature (exact completeness on
/// the cutoff). Prepared states are renormalized truncated coherent states.
pub fn device_heterodyne_mp(g: f64, n_max: usize) -> Result<Channel> {
    let pts = hermite_rule(n_max)?;
    let lnf = ln_factorials(n_max);
    let mut kraus = Vec::with_capacity(pts.len() * pts.len());
    for &(u, wu) in &pts {
        for &(v, wv) in &pts {
            let gamma = c(u, v);
            let out = coherent_amplitudes(gamma * g, n_max);
            let out = &out / c(out.norm(), 0.0);
            let (lr, ph) = (gamma.norm().ln(), gamma.arg());
            let lw = 0.5 * (wu * wv / PI).ln();
            // ⟨γ̃| = Σ γ̄ⁿ/√n! ⟨n|, the coherent bra without its Gaussian factor.
            let bra = CVec::from_fn(n_max, |k, _| {
                let mag = if k == 0 { lw.exp() } else { (lw + k as f64 * lr - 0.5 * lnf[k]).exp() };
                C64::from_polar(mag, -(k as f64) * ph)
            });
            kraus.push(&out * bra.transpose());
        }
    }
    Channel::new(kraus, true)
}

/// Resolves `identity`, `scale:q`, `heterodyne-mp`, `vacuum`, `attenuator:t`.
pub fn device_by_name(spec: &str, g: f64, n_max: usize) -> Result<Channel> {
    let (name, arg) = match spec.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (spec, None),
    };
    let num = |what: &str| -> Result<f64> {
        arg.ok_or_else(|| QbError::Argument(format!("device '{name}' needs a value, e.g. {name}:{what}")))?
            .parse::<f64>()
            .map_err(|e| QbError::Argument(format!("bad device parameter in '{spec}': {e}")))
    };
    match name {
        "identity" => Ok(Channel::identity(n_max)),
        "scale" => Channel::identity(n_max).scaled(num("0.5")?),
        "heterodyne-mp" => device_heterodyne_mp(g, n_max),
        "vacuum" => Ok(device_vacuum(n_max)),
        "attenuator" => device_attenuator(num("0.8")?, n_max),
        _ => Err(QbError::Argument(format!(
            "unknown device '{spec}' (identity, scale:q, heterodyne-mp, vacuum, attenuator:t)"
        ))),
    }
}

/// Gain `g`, prior inverse variance `λ`, input noise `μ` (`None` for pure
/// coherent inputs) and the conjugation flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvParams {
    pub g: f64,
    pub lambda: f64,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub conjugate: bool,
}

impl CvParams {
    pub fn new(g: f64, lambda: f64, mu: Option<f64>, conjugate: bool) -> Result<Self> {
        let p = Self { g, lambda, mu, conjugate };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(QbError::Argument(format!("g must be finite and non-negative, got {}", self.g)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(QbError::Argument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(QbError::Argument(format!("mu must be positive, got {mu}")));
            }
        }
        Ok(())
    }

    /// TMSV parameter: `1/(1+λ)`, or `(λ+μ)/(λ+μ+λμ)` for noisy inputs.
    pub fn x(&self) -> f64 {
        let l = self.lambda;
        match self.mu {
            None => 1.0 / (1.0 + l),
            Some(mu) => (l + mu) / (l + mu + l * mu),
        }
    }

    /// `μ√x/(λ+μ)`, tending to `√x` for pure inputs.
    pub fn k(&self) -> f64 {
        match self.mu {
            None => self.x().sqrt(),
            Some(mu) => mu * self.x().sqrt() / (self.lambda + mu),
        }
    }

    /// `(λ+μ)/g²`; `None` when there is no noise stage.
    pub fn nu(&self) -> Option<f64> {
        match self.mu {
            Some(mu) if self.g > 0.0 => Some((self.lambda + mu) / (self.g * self.g)),
            _ => None,
        }
    }

    /// Ratio `gk` of the coherent-pair observable.
    pub fn ratio(&self) -> f64 {
        self.g * self.k()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    PureLowGain,
    PureHighGain,
    Mixed,
    Conjugation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Tmsv { x: f64 },
    Device,
    Noise { nu: f64 },
    /// Applies `S_s = exp[s(ab − a†b†)]`.
    Squeezer { s: f64 },
    Beamsplitter { transmissivity: f64 },
    Gaussian { theta: f64, port: Port },
    /// Keeps the no-click event on the given port.
    Photodetect { port: Port },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvSetup {
    pub params: CvParams,
    pub cutoff: FockCutoff,
    pub branch: Branch,
    pub x: f64,
    pub k: f64,
    /// `θ > 0` of the Gaussian reduction, when the branch has one.
    pub theta: Option<f64>,
    pub weight: f64,
    pub stages: Vec<Stage>,
}

/// Chooses the branch and the stage list.
///
/// With `c = gk`, `F(c) = S†(G_θ ⊗ I)S` for `tanh θ = c ≤ 1` and
/// `F(c) = c⁻² S†(I ⊗ G_θ)S` for `tanh θ = 1/c < 1`, with `S = S_θ`. The conjugation observable is
/// `Z(c) = (1+c²)⁻¹ U†(I ⊗ |0⟩⟨0|)U` for a beamsplitter of transmissivity
/// `c²/(1+c²)`.
pub fn build_setup(params: CvParams, cutoff: FockCutoff) -> Result<CvSetup> {
    params.validate()?;
    let (x, k, cr) = (params.x(), params.k(), params.ratio());
    let mut stages = vec![Stage::Tmsv { x }, Stage::Device];
    if let Some(nu) = params.nu() {
        stages.push(Stage::Noise { nu });
    }
    if params.conjugate {
        stages.push(Stage::Beamsplitter { transmissivity: cr * cr / (1.0 + cr * cr) });
        stages.push(Stage::Photodetect { port: Port::Second });
        return Ok(CvSetup {
            params,
            cutoff,
            branch: Branch::Conjugation,
            x,
            k,
            theta: None,
            weight: 1.0 / (1.0 + cr * cr),
            stages,
        });
    }
    let (theta, port, weight) = if cr <= 1.0 { (cr.atanh(), Port::First, 1.0) } else { ((1.0 / cr).atanh(), Port::Second, 1.0 / (cr * cr)) };
    if !theta.is_finite() {
        return Err(QbError::Argument("gk = 1 makes the squeezing infinite; use a different g or λ".into()));
    }
    stages.push(Stage::Squeezer { s: theta });
    stages.push(Stage::Gaussian { theta, port });
    let branch = match (params.mu, cr <= 1.0) {
        (Some(_), _) => Branch::Mixed,
        (None, true) => Branch::PureLowGain,
        (None, false) => Branch::PureHighGain,
    };
    Ok(CvSetup { params, cutoff, branch, x, k, theta: Some(theta), weight, stages })
}

impl CvSetup {
    /// Final observable (weight included) as a block operator.
    pub fn observable(&self) -> Result<(BlockObservable, f64)> {
        let n = self.cutoff.n_max;
        let mut squeeze = None;
        let mut bs = None;
        for st in &self.stages {
            match st {
                Stage::Squeezer { s } => squeeze = Some(*s),
                Stage::Beamsplitter { transmissivity } => bs = Some(*transmissivity),
                Stage::Gaussian { theta, port } => {
                    let s = squeeze.ok_or_else(|| QbError::Construction("Gaussian reduction without squeezer".into()))?;
                    let (o, q) = squeezed_gaussian_observable(s, *theta, *port, n);
                    return Ok((o.scaled(self.weight), q));
                }
                Stage::Photodetect { port: Port::Second } => {
                    let t = bs.ok_or_else(|| QbError::Construction("photodetector without beamsplitter".into()))?;
                    return Ok((beamsplitter_vacuum_observable(t, n)?.scaled(self.weight), 0.0));
                }
                Stage::Photodetect { port: Port::First } => {
                    return Err(QbError::Construction("photodetection is only wired on the reference port".into()))
                }
                _ => {}
            }
        }
        Err(QbError::Construction("setup has no final reduction".into()))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CvOutcome {
    pub score: f64,
    pub p_succ: f64,
    /// Truncation leakage of the input state plus the trace the noise stage
    /// pushes above the cutoff. The noise loss is reported, not renormalized.
    pub leakage: f64,
    /// Boundary population of the squeezer chains (zero for beamsplitters).
    pub quality: f64,
}

/// Device output `(C ⊗ I)(Ψ)` as amplitude arrays, one per Kraus operator.
fn device_outputs(schmidt: &[f64], device: &Channel) -> Vec<CMat> {
    device
        .kraus()
        .par_iter()
        .map(|k| {
            let mut out = k.clone();
            for (r, s) in schmidt.iter().enumerate() {
                out.column_mut(r).scale_mut(*s);
            }
            out
        })
        .collect()
}

/// Runs the setup on a single-mode device and returns the normalized score.
/// Trace the noise stage loses above the cutoff is added to `leakage`.
///
/// # Errors
/// [`QbError::Cutoff`] if the input state does not fit the cutoff,
/// [`QbError::VanishingSuccess`] if the device almost never succeeds.
pub fn run_setup(setup: &CvSetup, device: &Channel) -> Result<CvOutcome> {
    let n = setup.cutoff.n_max;
    if device.dims_in() != n || device.dims_out() != n {
        return Err(QbError::Argument(format!(
            "device maps {} → {} levels but the cutoff is {n}",
            device.dims_in(),
            device.dims_out()
        )));
    }
    let (schmidt, mut leakage) = tmsv_schmidt(setup.x, &setup.cutoff)?;
    let outputs = device_outputs(&schmidt, device);
    let p_succ: f64 = outputs.iter().map(|m| m.norm_squared()).sum();
    if p_succ <= P_MIN {
        return Err(QbError::VanishingSuccess(p_succ));
    }
    let (obs, quality) = setup.observable()?;
    let noise = setup.stages.iter().find_map(|s| if let Stage::Noise { nu } = s { Some(*nu) } else { None });
    let value = match noise {
        None => outputs.par_iter().map(|psi| obs.expectation_pure(psi)).sum::<f64>(),
        Some(nu) => {
            let ch = AdditiveNoise::new(nu, n)?;
            leakage += ch.deficit_on_outputs(&outputs) / p_succ;
            ch.expectation_on_outputs(&outputs, &obs)
        }
    };
    Ok(CvOutcome { score: value / p_succ, p_succ, leakage, quality })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Gauss–Hermite nodes per real axis of `α`.
    pub nodes: usize,
    /// Largest allowed prior-weighted leakage of the node states.
    pub tail_tol: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { nodes: 24, tail_tol: 1e-5 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    /// `Σ w_α (leak(ρ_α) + leak(t_α))`: bounds the gap between the truncated
    /// and the untruncated average fidelity.
    pub truncation_bound: f64,
}

/// Average fidelity `∫d²α/π λe^{−λ|α|²} ⟨t_α|𝒞(ρ_α)|t_α⟩` by a product
/// Gauss–Hermite rule in `Re α`, `Im α`, with `t_α = gα` (or `gᾱ` for the
/// conjugation task) and `ρ_α` the coherent or displaced thermal input.
///
/// Each node is exact for the truncated device: inputs and targets are the
/// projected, unnormalized states `P|α⟩`, `P|gα⟩`. The leakage of those
/// states, weighted by the prior, bounds the truncation error.
///
/// # Errors
/// [`QbError::Cutoff`] when that bound exceeds `tail_tol`.
pub fn average_fidelity_oracle(device: &Channel, params: &CvParams, cutoff: &FockCutoff, quad: &QuadConfig) -> Result<OracleResult> {
    params.validate()?;
    let n = cutoff.n_max;
    if device.dims_in() != n || device.dims_out() != n {
        return Err(QbError::Argument(format!("device dims {}→{} differ from cutoff {n}", device.dims_in(), device.dims_out())));
    }
    let pts = hermite_rule(quad.nodes)?;
    let scale = 1.0 / params.lambda.sqrt();
    let nodes: Vec<(C64, f64)> =
        pts.iter().flat_map(|&(u, wu)| pts.iter().map(move |&(v, wv)| (c(u * scale, v * scale), wu * wv / PI))).collect();
    let kraus = device.kraus();
    let per_node = |&(alpha, w): &(C64, f64)| -> (f64, f64) {
        let target = if params.conjugate { alpha.conj() * params.g } else { alpha * params.g };
        let t = coherent_amplitudes(target, n);
        let mut leak = (1.0 - t.norm_squared()).max(0.0);
        let val = match params.mu {
            None => {
                let psi = coherent_amplitudes(alpha, n);
                leak += (1.0 - psi.norm_squared()).max(0.0);
                kraus.iter().map(|k| t.dotc(&(k * &psi)).norm_sqr()).sum::<f64>()
            }
            Some(mu) => {
                let rho = displaced_thermal_block(alpha, mu, n);
                leak += (1.0 - rho.trace().re).max(0.0);
                kraus
                    .iter()
                    .map(|k| {
                        let r = k.ad_mul(&t);
                        r.dotc(&(&rho * &r)).re
                    })
                    .sum::<f64>()
            }
        };
        (w * val, w * leak.min(1.0))
    };
    let (value, truncation_bound) =
        nodes.par_iter().map(per_node).reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if truncation_bound > quad.tail_tol {
        return Err(QbError::Cutoff {
            message: format!("coherent inputs leak past n_max={n}: truncation error bound {truncation_bound:e}"),
            suggested: suggest_oracle_cutoff(&nodes, params, cutoff, quad.tail_tol),
        });
    }
    Ok(OracleResult { value, truncation_bound })
}

fn suggest_oracle_cutoff(nodes: &[(C64, f64)], params: &CvParams, cutoff: &FockCutoff, tail_tol: f64) -> usize {
    let spread = params.mu.map_or(0.0, |mu| 6.0 / mu.sqrt());
    let mut need: Vec<(usize, f64)> = nodes
        .iter()
        .map(|&(a, w)| {
            let r = a.norm() * params.g.max(1.0) + spread;
            (suggest_cutoff_coherent(r * r, cutoff.leak_tol), w)
        })
        .collect();
    need.sort_by_key(|p| std::cmp::Reverse(p.0));
    let mut mass = 0.0;
    for (n, w) in need {
        mass += w;
        if mass > tail_tol {
            return n.max(cutoff.n_max + 1);
        }
    }
    cutoff.n_max
}

/// Heterodyne weight `w(γ) = tanh⁻²θ e^{−|γ|²/sinh²θ}`.
pub fn heterodyne_weight(gamma: C64, theta: f64) -> f64 {
    (-gamma.norm_sqr() / theta.sinh().powi(2)).exp() / theta.tanh().powi(2)
}

/// `∫d²γ/π w(γ) ⟨γ|ρ|γ⟩` by Gauss–Hermite on `γ = (u+iv)/√a`,
/// `a = 1 + 1/sinh²θ`; exact once `nodes ≥ n_max`.
pub fn heterodyne_expectation(rho: &Operator, theta: f64, nodes: usize) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(QbError::Argument(format!("theta must be positive, got {theta}")));
    }
    let n = rho.dim();
    let a = 1.0 + 1.0 / theta.sinh().powi(2);
    let pts = hermite_rule(nodes.max(n))?;
    let lnf = ln_factorials(n);
    let pre = 1.0 / (theta.tanh().powi(2) * PI * a);
    let mut acc = 0.0;
    for &(u, wu) in &pts {
        for &(v, wv) in &pts {
            let gamma = c(u, v) / a.sqrt();
            let (lr, ph) = (gamma.norm().ln(), gamma.arg());
            let amp = CVec::from_fn(n, |k, _| {
                if k == 0 {
                    c(1., 0.)
                } else {
                    C64::from_polar((k as f64 * lr - 0.5 * lnf[k]).exp(), k as f64 * ph)
                }
            });
            acc += wu * wv * pre * amp.dotc(&(rho.mat() * &amp)).re;
        }
    }
    Ok(acc)
}

/// `∫d²γ/π w(γ) |⟨γ|n⟩|²`, which equals `tanh^{2n}θ`.
pub fn heterodyne_moment(n: usize, theta: f64, nodes: usize) -> Result<f64> {
    let mut d = vec![0.0; n + 1];
    d[n] = 1.0;
    heterodyne_expectation(&Operator::diag(&d), theta, nodes.max(n + 1))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShotEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub shots: usize,
}

/// `h_n(q)` for `n < count`, normalized Hermite functions.
fn hermite_functions(q: f64, count: usize) -> Vec<f64> {
    let mut h = vec![0.0; count];
    h[0] = PI.powf(-0.25) * (-0.5 * q * q).exp();
    if count > 1 {
        h[1] = 2f64.sqrt() * q * h[0];
    }
    for k in 1..count.saturating_sub(1) {
        let kf = k as f64;
        h[k + 1] = (2.0 / (kf + 1.0)).sqrt() * q * h[k] - (kf / (kf + 1.0)).sqrt() * h[k - 1];
    }
    h
}

/// Monte-Carlo estimate of `Tr[G_θ ρ]` by simulated heterodyne detection:
/// `ρ` meets vacuum on a 50:50 beamsplitter, `X = (a+a†)/2` is read on one
/// output and `P = (b−b†)/2i` on the other, and each shot scores
/// `w(√2(x+ip))`. Outcomes are drawn from the exact joint density on a fine
/// grid.
pub fn homodyne_sampler(rho: &Operator, theta: f64, shots: usize, seed: u64) -> Result<ShotEstimate> {
    if shots < 2 {
        return Err(QbError::Argument("need at least two shots".into()));
    }
    let n = rho.dim();
    let eig = hermitian_eig(rho)?;
    let bs = beamsplitter(0.5, n)?;
    let half = (n as f64 + 0.5).sqrt() + 4.0;
    let grid = 320usize;
    let dx = 2.0 * half / grid as f64;
    let xs: Vec<f64> = (0..grid).map(|i| -half + (i as f64 + 0.5) * dx).collect();
    // ⟨x|m⟩ = 2^{1/4} h_m(√2 x) for X = (a+a†)/2, and ⟨p|m⟩ = (−i)^m ⟨x=p|m⟩.
    let hx = CMat::from_fn(grid, n, |i, m| c(2f64.powf(0.25) * hermite_functions(2f64.sqrt() * xs[i], n)[m], 0.0));
    let hp = CMat::from_fn(grid, n, |i, m| hx[(i, m)] * ipow(-(m as i64)));
    let mut density = DMatrix::<f64>::zeros(grid, grid);
    for k in 0..n {
        let p = eig.values[k];
        if p <= 1e-14 {
            continue;
        }
        let v = eig.column(k);
        let psi = CMat::from_fn(n, n, |a, b| if b == 0 { v[a] } else { c(0., 0.) });
        let out = bs.apply(&psi);
        let amp = &hx * out * hp.transpose();
        density += amp.map(|z| p * z.norm_sqr());
    }
    density *= dx * dx;
    let total: f64 = density.iter().sum();
    let mut cdf = Vec::with_capacity(grid * grid);
    let mut run = 0.0;
    for v in density.iter() {
        run += v / total;
        cdf.push(run);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..shots {
        let r: f64 = rng.gen();
        let idx = cdf.partition_point(|&v| v < r).min(cdf.len() - 1);
        let (i, j) = (idx % grid, idx / grid);
        let x = xs[i] + (rng.gen::<f64>() - 0.5) * dx;
        let p = xs[j] + (rng.gen::<f64>() - 0.5) * dx;
        let w = heterodyne_weight(c(x, p) * 2f64.sqrt(), theta);
        s1 += w;
        s2 += w * w;
    }
    let m = shots as f64;
    let mean = s1 / m;
    let var = (s2 / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok(ShotEstimate { mean, std_err: (var / m).sqrt(), shots })
}

/// Result record of a CV run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvReport {
    pub score: f64,
    pub p_succ: f64,
    pub oracle: Option<f64>,
    pub abs_diff: Option<f64>,
    pub cutoff: usize,
    pub leakage: f64,
    pub branch: Branch,
}
