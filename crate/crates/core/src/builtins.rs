//! Worked examples: teleportation, CHSH, equator states, coherent states.

use crate::benchmark::GroupRep;
use crate::error::{QbError, Result};
use crate::model::{fidelity_test, Ensemble, ProbTest};
use crate::tensor::{c, hermitian_eig_mat, kron, CMat, CVec, Operator, PureState};

/// A named test with an optional symmetry group.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub omega: Operator,
    pub sigma_a: Operator,
    pub rep: Option<GroupRep>,
}

impl Scenario {
    pub fn prob_test(&self) -> Result<ProbTest> {
        ProbTest::new(self.omega.clone(), self.sigma_a.clone())
    }
}

/// Swap operator on `C^d ⊗ C^d`.
pub fn swap(d: usize) -> CMat {
    CMat::from_fn(d * d, d * d, |r, col| {
        if (r / d, r % d) == (col % d, col / d) {
            c(1., 0.)
        } else {
            c(0., 0.)
        }
    })
}

/// Pure-state teleportation: `Ω = P₊/Tr P₊`, `σ_A = I/d`, Clifford group
/// for `d ≤ 3` and Weyl–Heisenberg group otherwise.
pub fn teleport(d: usize) -> Result<Scenario> {
    if d < 2 {
        return Err(QbError::Argument(format!("teleportation needs d ≥ 2, got {d}")));
    }
    let p_sym = (CMat::identity(d * d, d * d) + swap(d)) * c(0.5, 0.0);
    let tr = (d * (d + 1)) as f64 / 2.0;
    let omega = Operator::new(vec![d, d], p_sym / c(tr, 0.0))?;
    let rep = if d <= 3 { GroupRep::clifford(d)? } else { GroupRep::weyl(d) };
    Ok(Scenario {
        name: format!("teleport:{d}"),
        omega,
        sigma_a: Operator::maximally_mixed(&[d]),
        rep: Some(rep),
    })
}

/// Rotated Paulis `X̃ = (Z+X)/√2`, `Z̃ = (Z−X)/√2`.
fn rotated_paulis() -> (CMat, CMat) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let xt = CMat::from_row_slice(2, 2, &[c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)]);
    let zt = CMat::from_row_slice(2, 2, &[c(s, 0.), c(-s, 0.), c(-s, 0.), c(-s, 0.)]);
    (xt, zt)
}

/// CHSH: `Ω = (X̃⊗X̃ + Z̃⊗Z̃)/√2`, `σ_A = I/2`, Pauli group.
pub fn chsh() -> Scenario {
    let (xt, zt) = rotated_paulis();
    let m = (xt.kronecker(&xt) + zt.kronecker(&zt)) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Scenario {
        name: "chsh".into(),
        omega: Operator::new(vec![2, 2], m).expect("4x4"),
        sigma_a: Operator::maximally_mixed(&[2]),
        rep: Some(GroupRep::pauli()),
    }
}

/// `|φ_k⟩ = (|0⟩ + e^{2πik/n}|1⟩)/√2`.
pub fn equator_states(n: usize) -> Vec<PureState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|k| {
            let ph = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            PureState::new(vec![2], CVec::from_vec(vec![c(s, 0.), c(s * ph.cos(), s * ph.sin())]))
                .expect("unit norm")
        })
        .collect()
}

/// Fidelity test over `n ≥ 3` equally spaced equator states, Pauli group.
pub fn equator(n: usize) -> Result<Scenario> {
    if n < 3 {
        return Err(QbError::Argument(format!("equator test needs at least 3 states, got {n}")));
    }
    let t = fidelity_test(&Ensemble::pure_uniform(equator_states(n))?)?;
    Ok(Scenario { name: format!("equator:{n}"), omega: t.omega, sigma_a: t.sigma_a, rep: Some(GroupRep::pauli()) })
}

/// `n` phase-symmetric coherent states `|α e^{2πik/n}⟩`, written exactly in
/// an orthonormal basis of their span (columns of `G^{1/2}` for the Gram
/// matrix `G`).
pub fn coherent_span_states(n: usize, alpha: f64) -> Result<Vec<PureState>> {
    if n < 2 {
        return Err(QbError::Argument(format!("coherent test needs at least 2 states, got {n}")));
    }
    let amps: Vec<_> = (0..n)
        .map(|k| {
            let ph = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            c(alpha * ph.cos(), alpha * ph.sin())
        })
        .collect();
    let gram = CMat::from_fn(n, n, |j, k| (amps[j].conj() * amps[k] - c(alpha * alpha, 0.0)).exp());
    let e = hermitian_eig_mat(&gram)?;
    let root = e.map(|l| l.max(0.0).sqrt());
    (0..n).map(|k| PureState::normalized(vec![n], root.column(k).into_owned())).collect()
}

/// Fidelity test of `n` phase-symmetric coherent states with amplitude 1.
pub fn coherent(n: usize) -> Result<Scenario> {
    let t = fidelity_test(&Ensemble::pure_uniform(coherent_span_states(n, 1.0)?)?)?;
    Ok(Scenario { name: format!("coherent:{n}"), omega: t.omega, sigma_a: t.sigma_a, rep: None })
}

/// Resolves `teleport`, `chsh`, `equator`, `coherent` with a size argument.
pub fn by_name(name: &str, dim: Option<usize>) -> Result<Scenario> {
    match name {
        "teleport" => teleport(dim.unwrap_or(2)),
        "chsh" => Ok(chsh()),
        "equator" => equator(dim.unwrap_or(3)),
        "coherent" => coherent(dim.unwrap_or(3)),
        other => Err(QbError::Argument(format!("unknown builtin '{other}' (teleport, chsh, equator, coherent)"))),
    }
}

/// Product of a projector with itself, handy for rank-one tests.
pub fn product_projector(a: &PureState, b: &PureState) -> Operator {
    kron(&Operator::projector(a), &Operator::projector(b))
}
