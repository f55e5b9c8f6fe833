//! Seeded random states, observables and channels for tests and self-checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::Channel;
use crate::tensor::{c, CMat, CVec, Operator, PureState};

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> PureState {
    let d: usize = dims.iter().product();
    let v: CVec = ginibre(rng, d, 1).column(0).into_owned();
    PureState::normalized(dims.to_vec(), v).expect("nonzero Gaussian vector")
}

/// Density matrix `GG†/Tr` with `G` of shape `d × rank`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], rank: usize) -> Operator {
    let d: usize = dims.iter().product();
    let g = ginibre(rng, d, rank.max(1));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    Operator::new(dims.to_vec(), m / c(tr, 0.0)).expect("square")
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> Operator {
    let d: usize = dims.iter().product();
    let g = ginibre(rng, d, d);
    Operator::new(dims.to_vec(), (&g + g.adjoint()) * c(0.5, 0.0)).expect("square")
}

/// Positive semidefinite operator `GG†` with trace 1.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> Operator {
    let d: usize = dims.iter().product();
    random_density(rng, dims, d)
}

/// Trace-preserving channel: blocks of an isometry `V = G(G†G)^{-1/2}`.
/// Uses `max(n_kraus, ⌈d_in/d_out⌉)` Kraus operators so that `V` exists.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize, n_kraus: usize) -> Channel {
    let n = n_kraus.max(d_in.div_ceil(d_out)).max(1);
    let g = ginibre(rng, d_out * n, d_in);
    let gram = g.adjoint() * &g;
    let e = crate::tensor::hermitian_eig_mat(&gram).expect("Hermitian Gram matrix");
    let inv_sqrt = e.map(|l| 1.0 / l.sqrt());
    let v = g * inv_sqrt;
    let kraus = (0..n).map(|k| v.rows(k * d_out, d_out).into_owned()).collect();
    Channel::new(kraus, true).expect("isometry blocks")
}

/// Trace-nonincreasing channel: a random channel followed by a filter with
/// singular values drawn from `[0.2, 1]`.
pub fn random_subchannel<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize, n_kraus: usize) -> Channel {
    let ch = random_channel(rng, d_in, d_out, n_kraus);
    let u = random_unitary(rng, d_out);
    let s = CMat::from_diagonal(&CVec::from_fn(d_out, |_, _| c(rng.gen_range(0.2..1.0), 0.0)));
    let filter = &u * s * u.adjoint();
    let kraus = ch.kraus().iter().map(|k| &filter * k).collect();
    Channel::new(kraus, false).expect("contraction of a channel")
}

/// Haar unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let qr = ginibre(rng, d, d).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMat::from_diagonal(&CVec::from_fn(d, |i, _| {
        let z = r[(i, i)];
        if z.norm() > 0.0 {
            z / c(z.norm(), 0.0)
        } else {
            c(1.0, 0.0)
        }
    }));
    q * phases
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn channels_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = random_channel(&mut rng, 3, 2, 4);
        assert!((ch.kraus_gram() - CMat::identity(3, 3)).norm() < 1e-10);
        let sub = random_subchannel(&mut rng, 2, 3, 2);
        assert!(crate::tensor::hermitian_eig_mat(&sub.kraus_gram()).unwrap().values.iter().all(|&l| l <= 1.0 + 1e-12));
        assert_eq!(random_channel(&mut rng, 3, 1, 1).kraus().len(), 3);
        let u = random_unitary(&mut rng, 4);
        assert!((&u * u.adjoint() - CMat::identity(4, 4)).norm() < 1e-12);
    }
}
