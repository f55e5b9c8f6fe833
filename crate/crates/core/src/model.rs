//! Channels, tests and scores.
//!
//! The Jamiołkowski operator of a channel `𝒞` is
//! `C = Σ_ij 𝒞(|i⟩⟨j|) ⊗ |j⟩⟨i|` on `[A', A]`, and a deterministic test
//! `(σ_AR, O_A'R)` has performance operator
//! `Ω = Tr_R[(O ⊗ I_A)(I_A' ⊗ σ_AR)]`, so that its score is `Tr[ΩC]`.

use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::tensor::{c, hermitian_eig_mat, kron, CMat, MatrixJson, Operator, PureState, C64, HERMITIAN_TOL};

/// Tolerance on imaginary parts of traces that should be real.
pub const IMAG_TOL: f64 = 1e-9;
/// Default floor on the success probability of a quantum operation.
pub const P_MIN: f64 = 1e-12;
/// Tolerance for `Σ K†K = I` (or `≤ I`).
pub const KRAUS_TOL: f64 = 1e-9;

/// Completely positive map in Kraus form.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct Channel {
    kraus: Vec<CMat>,
    trace_preserving: bool,
    dims_in: usize,
    dims_out: usize,
}

impl Channel {
    /// Builds a channel and checks `Σ K†K = I` when `trace_preserving`,
    /// `Σ K†K ≤ I` otherwise.
    ///
    /// # Errors
    /// Returns [`QbError::Argument`] for empty or ragged Kraus lists and
    /// [`QbError::Contract`] when the normalization condition fails.
    pub fn new(kraus: Vec<CMat>, trace_preserving: bool) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| QbError::Argument("empty Kraus list".into()))?;
        let (dout, din) = (first.nrows(), first.ncols());
        if kraus.iter().any(|k| k.nrows() != dout || k.ncols() != din) {
            return Err(QbError::Argument("Kraus operators have different shapes".into()));
        }
        let ch = Self { kraus, trace_preserving, dims_in: din, dims_out: dout };
        let gram = ch.kraus_gram();
        if trace_preserving {
            let dev = (&gram - CMat::identity(din, din)).norm();
            if dev > KRAUS_TOL * (din as f64).sqrt() {
                return Err(QbError::Contract(format!("Σ K†K deviates from I by {dev:e}")));
            }
        } else {
            let top = hermitian_eig_mat(&gram)?.values.last().copied().unwrap_or(0.0);
            if top > 1.0 + KRAUS_TOL {
                return Err(QbError::Contract(format!("Σ K†K has eigenvalue {top} > 1")));
            }
        }
        Ok(ch)
    }

    /// Wraps Kraus operators without checking normalization. Used for large
    /// truncated families whose deficit is reported separately.
    pub fn from_kraus_unchecked(kraus: Vec<CMat>, trace_preserving: bool) -> Self {
        let (dout, din) = (kraus[0].nrows(), kraus[0].ncols());
        Self { kraus, trace_preserving, dims_in: din, dims_out: dout }
    }

    /// Classifies the map as trace preserving when `Σ K†K = I` to tolerance.
    pub fn auto(kraus: Vec<CMat>) -> Result<Self> {
        match Self::new(kraus.clone(), true) {
            Ok(ch) => Ok(ch),
            Err(_) => Self::new(kraus, false),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self { kraus: vec![CMat::identity(d, d)], trace_preserving: true, dims_in: d, dims_out: d }
    }

    /// `ρ ↦ Tr[ρ] I/d`.
    pub fn completely_depolarizing(d: usize) -> Self {
        let s = c((1.0 / d as f64).sqrt(), 0.0);
        let mut kraus = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut k = CMat::zeros(d, d);
                k[(i, j)] = s;
                kraus.push(k);
            }
        }
        Self { kraus, trace_preserving: true, dims_in: d, dims_out: d }
    }

    /// Kraus list `{√q K}`: same map scaled by `q ∈ (0, 1]`.
    pub fn scaled(&self, q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(QbError::Argument(format!("scale {q} outside (0, 1]")));
        }
        let s = c(q.sqrt(), 0.0);
        Ok(Self {
            kraus: self.kraus.iter().map(|k| k * s).collect(),
            trace_preserving: self.trace_preserving && q == 1.0,
            dims_in: self.dims_in,
            dims_out: self.dims_out,
        })
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    pub fn dims_in(&self) -> usize {
        self.dims_in
    }

    pub fn dims_out(&self) -> usize {
        self.dims_out
    }

    /// `Σ K†K`.
    pub fn kraus_gram(&self) -> CMat {
        let mut g = CMat::zeros(self.dims_in, self.dims_in);
        for k in &self.kraus {
            g += k.adjoint() * k;
        }
        g
    }

    /// `Σ K ρ K†` on a raw matrix.
    pub fn apply_mat(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(self.dims_out, self.dims_out);
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// `(𝒞 ⊗ ℐ_R)(ρ_AR)` with `A` the first factor of `rho`.
    pub fn apply_first(&self, rho: &Operator) -> Result<Operator> {
        if rho.dims().len() != 2 || rho.dims()[0] != self.dims_in {
            return Err(QbError::Argument(format!(
                "channel input {} does not match first system of {:?}",
                self.dims_in,
                rho.dims()
            )));
        }
        let dr = rho.dims()[1];
        let id = CMat::identity(dr, dr);
        let mut out = CMat::zeros(self.dims_out * dr, self.dims_out * dr);
        for k in &self.kraus {
            let kk = k.kronecker(&id);
            out += &kk * rho.mat() * kk.adjoint();
        }
        Operator::new(vec![self.dims_out, dr], out)
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    kraus: Vec<MatrixJson>,
    trace_preserving: bool,
    dims_in: usize,
    dims_out: usize,
}

impl From<Channel> for ChannelJson {
    fn from(ch: Channel) -> Self {
        ChannelJson {
            kraus: ch.kraus.iter().map(MatrixJson::from).collect(),
            trace_preserving: ch.trace_preserving,
            dims_in: ch.dims_in,
            dims_out: ch.dims_out,
        }
    }
}

impl TryFrom<ChannelJson> for Channel {
    type Error = QbError;

    fn try_from(j: ChannelJson) -> Result<Channel> {
        let kraus = j.kraus.into_iter().map(CMat::try_from).collect::<Result<Vec<_>>>()?;
        let ch = Channel::new(kraus, j.trace_preserving)?;
        if ch.dims_in != j.dims_in || ch.dims_out != j.dims_out {
            return Err(QbError::Argument("declared channel dims disagree with Kraus shapes".into()));
        }
        Ok(ch)
    }
}

/// Deterministic test: joint input `σ_AR` and joint observable `O_A'R`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetTest {
    #[serde(rename = "sigma_AR")]
    pub sigma_ar: Operator,
    pub observable: Operator,
}

impl DetTest {
    /// # Errors
    /// Returns [`QbError::Argument`] on malformed dims and
    /// [`QbError::Contract`] if `σ` is not a density matrix or `O` is not
    /// Hermitian.
    pub fn new(sigma_ar: Operator, observable: Operator) -> Result<Self> {
        if sigma_ar.dims().len() != 2 || observable.dims().len() != 2 {
            return Err(QbError::Argument("tests need bipartite σ_AR and O_A'R".into()));
        }
        if sigma_ar.dims()[1] != observable.dims()[1] {
            return Err(QbError::Argument(format!(
                "reference dims differ: σ {:?}, O {:?}",
                sigma_ar.dims(),
                observable.dims()
            )));
        }
        if !sigma_ar.is_density(1e-9) {
            return Err(QbError::Contract("σ_AR is not a density matrix".into()));
        }
        if !observable.is_hermitian(HERMITIAN_TOL) {
            return Err(QbError::Contract("observable is not Hermitian".into()));
        }
        Ok(Self { sigma_ar, observable })
    }

    pub fn d_in(&self) -> usize {
        self.sigma_ar.dims()[0]
    }

    pub fn d_out(&self) -> usize {
        self.observable.dims()[0]
    }

    pub fn d_ref(&self) -> usize {
        self.sigma_ar.dims()[1]
    }
}

/// Probabilistic test: performance operator and input marginal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbTest {
    pub omega: Operator,
    #[serde(rename = "sigma_A")]
    pub sigma_a: Operator,
}

impl ProbTest {
    /// # Errors
    /// Returns [`QbError::Argument`] on malformed dims and
    /// [`QbError::Contract`] if `Ω` is not Hermitian or `σ_A` is not a state.
    pub fn new(omega: Operator, sigma_a: Operator) -> Result<Self> {
        if omega.dims().len() != 2 || sigma_a.dims().len() != 1 || omega.dims()[1] != sigma_a.dim() {
            return Err(QbError::Argument(format!(
                "Ω dims {:?} incompatible with σ_A dims {:?}",
                omega.dims(),
                sigma_a.dims()
            )));
        }
        if !omega.is_hermitian(HERMITIAN_TOL) {
            return Err(QbError::Contract("Ω is not Hermitian".into()));
        }
        if !sigma_a.is_density(1e-9) {
            return Err(QbError::Contract("σ_A is not a density matrix".into()));
        }
        Ok(Self { omega, sigma_a })
    }
}

/// Input ensemble `{p_x, ρ_x}` with target states `|φ_x⟩`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ensemble {
    pub states: Vec<Operator>,
    pub targets: Vec<PureState>,
    pub probs: Vec<f64>,
}

impl Ensemble {
    /// # Errors
    /// Returns [`QbError::Argument`] when lengths disagree or the
    /// probabilities do not sum to one within `1e-12`.
    pub fn new(states: Vec<Operator>, targets: Vec<PureState>, probs: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != targets.len() || states.len() != probs.len() {
            return Err(QbError::Argument("ensemble lists have different lengths".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 || probs.iter().any(|&p| p < 0.0) {
            return Err(QbError::Argument(format!("probabilities sum to {total}")));
        }
        let din = states[0].dim();
        let dout = targets[0].vector().len();
        if states.iter().any(|s| s.dim() != din) || targets.iter().any(|t| t.vector().len() != dout) {
            return Err(QbError::Argument("ensemble members have different dimensions".into()));
        }
        Ok(Self { states, targets, probs })
    }

    /// Pure-state ensemble whose targets are the inputs themselves.
    pub fn pure_uniform(states: Vec<PureState>) -> Result<Self> {
        let p = 1.0 / states.len() as f64;
        let probs = vec![p; states.len()];
        let ops = states.iter().map(Operator::projector).collect();
        Self::new(ops, states, probs)
    }
}

fn bipartite(op: &Operator, what: &str) -> Result<(usize, usize)> {
    match op.dims() {
        [a, b] => Ok((*a, *b)),
        d => Err(QbError::Argument(format!("{what} must be bipartite, got dims {d:?}"))),
    }
}

/// `Ω = Tr_R[(O_{A'R} ⊗ I_A)(I_{A'} ⊗ σ_{AR})]` on dims `[A', A]`.
///
/// # Errors
/// Returns [`QbError::Argument`] when the reference dimensions differ.
pub fn performance_operator(t: &DetTest) -> Result<Operator> {
    let (da, dr) = bipartite(&t.sigma_ar, "σ_AR")?;
    let (dout, dr2) = bipartite(&t.observable, "observable")?;
    if dr != dr2 {
        return Err(QbError::Argument(format!("reference dims differ: {dr} vs {dr2}")));
    }
    let o = t.observable.mat();
    let s = t.sigma_ar.mat();
    let n = dout * da;
    let mut out = CMat::zeros(n, n);
    // ⟨a' p|Ω|b' q⟩ = Σ_rs O[(a' r),(b' s)] σ[(p s),(q r)]
    for ap in 0..dout {
        for bp in 0..dout {
            for r in 0..dr {
                for s_ in 0..dr {
                    let ov = o[(ap * dr + r, bp * dr + s_)];
                    if ov == C64::default() {
                        continue;
                    }
                    for p in 0..da {
                        for q in 0..da {
                            out[(ap * da + p, bp * da + q)] += ov * s[(p * dr + s_, q * dr + r)];
                        }
                    }
                }
            }
        }
    }
    Operator::new(vec![dout, da], out)
}

/// Fidelity test of an ensemble: `Ω = Σ p_x |φ_x⟩⟨φ_x| ⊗ ρ_x`,
/// `σ_A = Σ p_x ρ_x`.
pub fn fidelity_test(e: &Ensemble) -> Result<ProbTest> {
    let total: f64 = e.probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(QbError::Argument(format!("probabilities sum to {total}")));
    }
    let din = e.states[0].dim();
    let dout = e.targets[0].vector().len();
    let mut omega = Operator::zeros(&[dout, din]);
    let mut sigma = Operator::zeros(&[din]);
    for ((rho, phi), &p) in e.states.iter().zip(&e.targets).zip(&e.probs) {
        let target = Operator::projector(phi).with_dims(vec![dout])?;
        let rho1 = rho.clone().with_dims(vec![din])?;
        omega = omega.add(&kron(&target, &rho1).scale(p))?;
        sigma = sigma.add(&rho1.scale(p))?;
    }
    ProbTest::new(omega.hermitian_part(), sigma.hermitian_part())
}

/// Jamiołkowski operator `C = Σ_ij 𝒞(|i⟩⟨j|) ⊗ |j⟩⟨i|` on `[A', A]`.
pub fn jamiolkowski(ch: &Channel) -> Operator {
    let (din, dout) = (ch.dims_in, ch.dims_out);
    let mut out = CMat::zeros(dout * din, dout * din);
    for k in &ch.kraus {
        for i in 0..din {
            for j in 0..din {
                // 𝒞(|i⟩⟨j|)_{ab} at row (a, j), column (b, i)
                for a in 0..dout {
                    let kai = k[(a, i)];
                    if kai == C64::default() {
                        continue;
                    }
                    for b in 0..dout {
                        out[(a * din + j, b * din + i)] += kai * k[(b, j)].conj();
                    }
                }
            }
        }
    }
    Operator::new(vec![dout, din], out).expect("shape is consistent by construction")
}

/// `Σ K ρ K†`.
///
/// # Errors
/// Returns [`QbError::Argument`] when `rho` does not match the input size.
pub fn apply_channel(ch: &Channel, rho: &Operator) -> Result<Operator> {
    if rho.dim() != ch.dims_in {
        return Err(QbError::Argument(format!(
            "state of size {} does not match channel input {}",
            rho.dim(),
            ch.dims_in
        )));
    }
    Operator::new(vec![ch.dims_out], ch.apply_mat(rho.mat()))
}

fn real_part(z: C64, what: &str) -> Result<f64> {
    if z.im.abs() > IMAG_TOL {
        return Err(QbError::Numerical(format!("{what} has imaginary part {:e}", z.im)));
    }
    Ok(z.re)
}

/// Score `Tr[O (𝒞 ⊗ ℐ_R)(σ_AR)]` evaluated directly from Kraus operators.
///
/// # Errors
/// Returns [`QbError::Contract`] for non-trace-preserving channels and
/// [`QbError::Argument`] on dimension mismatch.
pub fn score_det_direct(t: &DetTest, ch: &Channel) -> Result<f64> {
    if !ch.trace_preserving {
        return Err(QbError::Contract("deterministic score needs a trace-preserving channel".into()));
    }
    let out = ch.apply_first(&t.sigma_ar)?;
    real_part(t.observable.trace_product(&out)?, "deterministic score")
}

/// `(score, p_succ)` of a test run on a quantum operation, directly from
/// Kraus operators: `p = Tr[(𝒞⊗ℐ)(σ)]`, `score = Tr[O (𝒞⊗ℐ)(σ)] / p`.
pub fn score_prob_direct(t: &DetTest, ch: &Channel) -> Result<(f64, f64)> {
    let out = ch.apply_first(&t.sigma_ar)?;
    let p = real_part(out.trace(), "success probability")?;
    if p <= P_MIN {
        return Err(QbError::VanishingSuccess(p));
    }
    let s = real_part(t.observable.trace_product(&out)?, "probabilistic score")?;
    Ok((s / p, p))
}

/// Score `Tr[ΩC]`.
///
/// # Errors
/// Returns [`QbError::Numerical`] when the trace has an imaginary part
/// above [`IMAG_TOL`].
pub fn score_det_jam(omega: &Operator, c_jam: &Operator) -> Result<f64> {
    real_part(omega.trace_product(c_jam)?, "Tr[ΩC]")
}

/// `(Tr[CΩ] / Tr[C(I⊗σ_A)], Tr[C(I⊗σ_A)])`.
///
/// # Errors
/// Returns [`QbError::VanishingSuccess`] when `p_succ ≤ p_min`.
pub fn score_prob(t: &ProbTest, ch: &Channel) -> Result<(f64, f64)> {
    score_prob_with(t, ch, P_MIN)
}

pub fn score_prob_with(t: &ProbTest, ch: &Channel, p_min: f64) -> Result<(f64, f64)> {
    let cj = jamiolkowski(ch);
    let dout = t.omega.dims()[0];
    let norm = kron(&Operator::identity(&[dout]), &t.sigma_a);
    let p = real_part(cj.trace_product(&norm)?, "success probability")?;
    if p <= p_min {
        return Err(QbError::VanishingSuccess(p));
    }
    let s = real_part(cj.trace_product(&t.omega)?, "Tr[CΩ]")?;
    Ok((s / p, p))
}

/// Measure-and-prepare map `ρ ↦ Σ_i Tr[P_i ρ] ρ_i`.
///
/// Kraus operators are `√(μ_k π_l) |e_k⟩⟨f_l|` for eigenpairs `(μ_k, e_k)`
/// of `ρ_i` and `(π_l, f_l)` of `P_i`. The result is trace preserving when
/// `Σ P_i = I` to `1e-9`.
///
/// # Errors
/// Returns [`QbError::Argument`] if `Σ P_i` exceeds `I` or an element is not
/// PSD, or if an output is not a density matrix.
pub fn mp_channel(povm: &[Operator], outputs: &[Operator]) -> Result<Channel> {
    if povm.is_empty() || povm.len() != outputs.len() {
        return Err(QbError::Argument("POVM and outputs must have equal nonzero length".into()));
    }
    let din = povm[0].dim();
    let dout = outputs[0].dim();
    let mut total = CMat::zeros(din, din);
    let mut kraus = Vec::new();
    for (p, rho) in povm.iter().zip(outputs) {
        if p.dim() != din || rho.dim() != dout {
            return Err(QbError::Argument("POVM or output dimensions are inconsistent".into()));
        }
        if !rho.is_density(1e-9) {
            return Err(QbError::Argument("M&P output is not a density matrix".into()));
        }
        total += p.mat();
        let ep = hermitian_eig_mat(p.mat())?;
        if ep.values[0] < -KRAUS_TOL {
            return Err(QbError::Argument(format!("POVM element has eigenvalue {}", ep.values[0])));
        }
        let er = hermitian_eig_mat(rho.mat())?;
        for (k, &mu) in er.values.iter().enumerate() {
            if mu <= 1e-15 {
                continue;
            }
            let e = er.column(k);
            for (l, &pi) in ep.values.iter().enumerate() {
                if pi <= 1e-15 {
                    continue;
                }
                let f = ep.column(l);
                kraus.push(&e * f.adjoint() * c((mu * pi).sqrt(), 0.0));
            }
        }
    }
    let dev = (&total - CMat::identity(din, din)).norm();
    let complete = dev <= KRAUS_TOL * (din as f64).sqrt();
    if !complete {
        let top = hermitian_eig_mat(&total)?.values.last().copied().unwrap_or(0.0);
        if top > 1.0 + KRAUS_TOL {
            return Err(QbError::Argument(format!("POVM sums above identity (eigenvalue {top})")));
        }
    }
    if kraus.is_empty() {
        kraus.push(CMat::zeros(dout, din));
    }
    Channel::new(kraus, complete)
}

/// Six octahedron states of a qubit, a spherical 3-design.
pub fn qubit_octahedron() -> Vec<PureState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let raw = [
        [c(1., 0.), c(0., 0.)],
        [c(0., 0.), c(1., 0.)],
        [c(s, 0.), c(s, 0.)],
        [c(s, 0.), c(-s, 0.)],
        [c(s, 0.), c(0., s)],
        [c(s, 0.), c(0., -s)],
    ];
    raw.iter()
        .map(|v| PureState::new(vec![2], crate::tensor::CVec::from_row_slice(v)).unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{partial_trace, partial_transpose, CVec};

    fn swap2() -> CMat {
        CMat::from_fn(4, 4, |i, j| if (i / 2, i % 2) == (j % 2, j / 2) { c(1., 0.) } else { c(0., 0.) })
    }

    #[test]
    fn identity_jamiolkowski_is_swap() {
        let cj = jamiolkowski(&Channel::identity(2));
        assert!((cj.mat() - swap2()).norm() < 1e-15);
        let dep = jamiolkowski(&Channel::completely_depolarizing(2));
        assert!((dep.mat() - CMat::identity(4, 4) * c(0.5, 0.)).norm() < 1e-15);
        let marg = partial_trace(&dep, &[1]).unwrap();
        assert!((marg.mat() - CMat::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn rank_one_performance_operator() {
        let p0 = Operator::diag(&[1.0, 0.0]);
        let t = DetTest::new(kron(&p0, &p0), kron(&p0, &p0)).unwrap();
        let om = performance_operator(&t).unwrap();
        assert!((om.mat() - kron(&p0, &p0).mat()).norm() < 1e-15);
    }

    #[test]
    fn equator_closed_form() {
        let states = (0..3)
            .map(|k| {
                let ph = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                let s = std::f64::consts::FRAC_1_SQRT_2;
                PureState::new(vec![2], CVec::from_vec(vec![c(s, 0.), c(s * ph.cos(), s * ph.sin())])).unwrap()
            })
            .collect();
        let t = fidelity_test(&Ensemble::pure_uniform(states).unwrap()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi_plus = CVec::from_vec(vec![c(0., 0.), c(s, 0.), c(s, 0.), c(0., 0.)]);
        let mut expect = CMat::zeros(4, 4);
        expect[(0, 0)] = c(0.25, 0.);
        expect[(3, 3)] = c(0.25, 0.);
        expect += &psi_plus * psi_plus.adjoint() * c(0.5, 0.);
        assert!((t.omega.mat() - expect).norm() < 1e-14);
        assert!((t.sigma_a.mat() - CMat::identity(2, 2) * c(0.5, 0.)).norm() < 1e-14);
    }

    #[test]
    fn octahedron_gives_symmetric_projector() {
        let t = fidelity_test(&Ensemble::pure_uniform(qubit_octahedron()).unwrap()).unwrap();
        let p_sym = (CMat::identity(4, 4) + swap2()) * c(0.5, 0.);
        assert!((t.omega.mat() - p_sym * c(1.0 / 3.0, 0.)).norm() < 1e-14);
    }

    #[test]
    fn depolarizing_on_teleport_scores_half() {
        let p_sym = Operator::new(vec![2, 2], (CMat::identity(4, 4) + swap2()) * c(0.5, 0.)).unwrap();
        let omega = p_sym.scale(1.0 / 3.0);
        let s = score_det_jam(&omega, &jamiolkowski(&Channel::completely_depolarizing(2))).unwrap();
        assert!((s - 0.5).abs() < 1e-14);
        let s1 = score_det_jam(&omega, &jamiolkowski(&Channel::identity(2))).unwrap();
        assert!((s1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn classical_bit_pipeline() {
        let p0 = Operator::diag(&[1.0, 0.0]);
        let p1 = Operator::diag(&[0.0, 1.0]);
        let ch = mp_channel(&[p0.clone(), p1.clone()], &[p0.clone(), p1.clone()]).unwrap();
        assert!(ch.trace_preserving());
        let basis = vec![PureState::basis(&[2], 0).unwrap(), PureState::basis(&[2], 1).unwrap()];
        let t = fidelity_test(&Ensemble::pure_uniform(basis).unwrap()).unwrap();
        let (s, p) = score_prob(&t, &ch).unwrap();
        assert!((s - 1.0).abs() < 1e-14 && (p - 1.0).abs() < 1e-14);
        let cj = jamiolkowski(&ch);
        assert!(partial_transpose(&cj, 1).unwrap().min_eigenvalue().unwrap() > -1e-12);
        let over = mp_channel(&[p0.clone(), Operator::identity(&[2])], &[p0.clone(), p1]);
        assert!(over.is_err());
    }

    #[test]
    fn scaled_identity_keeps_score() {
        let basis = vec![PureState::basis(&[2], 0).unwrap(), PureState::basis(&[2], 1).unwrap()];
        let t = fidelity_test(&Ensemble::pure_uniform(basis).unwrap()).unwrap();
        let (s, p) = score_prob(&t, &Channel::identity(2).scaled(0.3).unwrap()).unwrap();
        assert!((s - 1.0).abs() < 1e-14 && (p - 0.3).abs() < 1e-14);
        let zero = Channel::new(vec![CMat::zeros(2, 2)], false).unwrap();
        assert!(matches!(score_prob(&t, &zero), Err(QbError::VanishingSuccess(_))));
    }
}
