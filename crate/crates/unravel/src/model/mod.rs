//! Open-system definitions: Hamiltonian plus jump channels, the generators
//! derived from them (effective Hamiltonian, Liouvillian, recycling
//! superoperators) and the channel transformations that leave the Liouvillian
//! invariant.

mod catalog;

pub use catalog::{
    build_decaying_qubit, build_jcm_ion, build_model_by_name, build_three_level, build_two_level,
    lowering, model_parameter_names, number_operator, sigma_minus, sigma_plus, sigma_z,
    two_level_stationary_pee,
};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hilbert::{linalg, Operator, Superoperator};
use crate::C64;

/// One decay channel: rate `gamma` and dimensionless operator `op`.
///
/// Only the product sqrt(gamma) * op enters any generator; the pair is kept
/// separate so models can carry their natural parametrization.
#[derive(Debug, Clone)]
pub struct JumpChannel {
    pub label: String,
    pub rate: f64,
    pub op: Operator,
}

impl JumpChannel {
    pub fn new(label: impl Into<String>, rate: f64, op: Operator) -> Self {
        assert!(rate >= 0.0, "channel rate must be nonnegative");
        JumpChannel {
            label: label.into(),
            rate,
            op,
        }
    }

    /// sqrt(gamma) * op, the form entering all generators.
    pub fn absorbed(&self) -> Operator {
        self.op.scale(C64::new(self.rate.sqrt(), 0.0))
    }
}

/// Population guard for truncated spaces: an error is raised when the summed
/// population of `indices` exceeds `threshold` during a simulation.
#[derive(Debug, Clone)]
pub struct TruncationGuard {
    pub indices: Vec<usize>,
    pub threshold: f64,
}

/// Hamiltonian plus an ordered list of jump channels.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    dim: usize,
    hamiltonian: Operator,
    channels: Vec<JumpChannel>,
    guard: Option<TruncationGuard>,
}

impl OpenSystem {
    pub fn new(hamiltonian: Operator, channels: Vec<JumpChannel>) -> Self {
        let dim = hamiltonian.dim();
        assert!(
            hamiltonian.is_hermitian(1e-10 * hamiltonian.max_abs().max(1.0)),
            "Hamiltonian must be Hermitian"
        );
        for ch in &channels {
            assert_eq!(ch.op.dim(), dim, "channel dimension mismatch");
        }
        OpenSystem {
            dim,
            hamiltonian,
            channels,
            guard: None,
        }
    }

    pub fn with_guard(mut self, guard: TruncationGuard) -> Self {
        self.guard = Some(guard);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    pub fn guard(&self) -> Option<&TruncationGuard> {
        self.guard.as_ref()
    }

    pub fn channel(&self, j: usize) -> Result<&JumpChannel> {
        self.channels.get(j).ok_or(Error::InvalidChannel {
            index: j,
            count: self.channels.len(),
        })
    }

    /// Largest channel rate, used for step-size bounds.
    pub fn max_rate(&self) -> f64 {
        self.channels.iter().fold(0.0_f64, |m, ch| m.max(ch.rate))
    }

    /// Smallest strictly positive channel rate, used for burn-in horizons.
    pub fn min_positive_rate(&self) -> Option<f64> {
        self.channels
            .iter()
            .filter(|ch| ch.rate > 0.0)
            .map(|ch| ch.rate)
            .fold(None, |m, r| Some(m.map_or(r, |x: f64| x.min(r))))
    }
}

/// H - (i/2) sum_j gamma_j c_j^dag c_j.
pub fn effective_hamiltonian(sys: &OpenSystem) -> Operator {
    let mut h = sys.hamiltonian.clone();
    for ch in sys.channels() {
        let a = ch.absorbed();
        let ada = a.dagger().dot(&a);
        h = h.add(&ada.scale(C64::new(0.0, -0.5)));
    }
    h
}

/// Recycling superoperator of channel `j`: rho -> gamma_j c_j rho c_j^dag.
pub fn jump_superoperator(sys: &OpenSystem, j: usize) -> Result<Superoperator> {
    let a = sys.channel(j)?.absorbed();
    Ok(Superoperator::sandwich(&a, &a.dagger()))
}

/// Sum of the recycling superoperators over `channels`.
pub fn jump_superoperator_sum(sys: &OpenSystem, channels: &[usize]) -> Result<Superoperator> {
    let mut total = Superoperator::zeros(sys.dim());
    for &j in channels {
        total = total.add(&jump_superoperator(sys, j)?);
    }
    Ok(total)
}

/// Generator of the master equation under column stacking:
/// rho -> -i[H, rho] + sum_j gamma_j (c_j rho c_j^dag - {c_j^dag c_j, rho}/2).
pub fn liouvillian(sys: &OpenSystem) -> Superoperator {
    let h = &sys.hamiltonian;
    let mut l = Superoperator::left_mult(h)
        .sub(&Superoperator::right_mult(h))
        .scale(C64::new(0.0, -1.0));
    for ch in sys.channels() {
        let a = ch.absorbed();
        let ad = a.dagger();
        let ada = ad.dot(&a);
        l = l.add(&Superoperator::sandwich(&a, &ad));
        l = l.sub(&Superoperator::left_mult(&ada).scale(C64::new(0.5, 0.0)));
        l = l.sub(&Superoperator::right_mult(&ada).scale(C64::new(0.5, 0.0)));
    }
    l
}

/// General Lindblad data: an N_c x N_c Hermitian positive semidefinite
/// coupling matrix over a list of operators.
#[derive(Debug, Clone)]
pub struct LindbladMatrixForm {
    pub gamma: Array2<C64>,
    pub ops: Vec<Operator>,
}

impl LindbladMatrixForm {
    pub fn new(gamma: Array2<C64>, ops: Vec<Operator>) -> Self {
        assert_eq!(gamma.nrows(), gamma.ncols());
        assert_eq!(gamma.nrows(), ops.len());
        LindbladMatrixForm { gamma, ops }
    }

    /// Generator of the matrix form (same 1/2 normalization as
    /// [`liouvillian`]), for equality tests against canonicalized channels.
    pub fn liouvillian(&self, hamiltonian: &Operator) -> Superoperator {
        let mut l = Superoperator::left_mult(hamiltonian)
            .sub(&Superoperator::right_mult(hamiltonian))
            .scale(C64::new(0.0, -1.0));
        let n = self.ops.len();
        for i in 0..n {
            for j in 0..n {
                let g = self.gamma[(i, j)];
                if g == C64::new(0.0, 0.0) {
                    continue;
                }
                let ci = &self.ops[i];
                let cjd = self.ops[j].dagger();
                let cjd_ci = cjd.dot(ci);
                l = l.add(&Superoperator::sandwich(ci, &cjd).scale(g));
                l = l.sub(&Superoperator::left_mult(&cjd_ci).scale(g * 0.5));
                l = l.sub(&Superoperator::right_mult(&cjd_ci).scale(g * 0.5));
            }
        }
        l
    }
}

/// Diagonalize the coupling matrix and return equivalent plain channels
/// c_k = sqrt(kappa_k) sum_i c_i V_ik; zero-eigenvalue channels are dropped.
pub fn canonicalize_lindblad(form: &LindbladMatrixForm) -> Result<Vec<JumpChannel>> {
    let n = form.ops.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let herm_dev = {
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((form.gamma[(i, j)] - form.gamma[(j, i)].conj()).norm());
            }
        }
        worst
    };
    let scale = linalg::max_abs(&form.gamma).max(1.0);
    if herm_dev > 1e-10 * scale {
        return Err(Error::NotHermitian {
            deviation: herm_dev,
        });
    }
    let (kappa, v) = linalg::hermitian_eig(&form.gamma);
    if kappa[0] < -1e-10 * scale {
        return Err(Error::NotCompletelyPositive {
            min_eigenvalue: kappa[0],
        });
    }
    let dim = form.ops[0].dim();
    let mut channels = Vec::new();
    for g in 0..n {
        if kappa[g] <= 1e-12 * scale {
            continue;
        }
        let mut op = Operator::zeros(dim);
        for i in 0..n {
            op = op.add(&form.ops[i].scale(v[(i, g)]));
        }
        channels.push(JumpChannel::new(
            format!("canon{g}"),
            1.0,
            op.scale(C64::new(kappa[g].sqrt(), 0.0)),
        ));
    }
    Ok(channels)
}

/// Mix channels with a unitary: sqrt(gamma_j) c_j -> sum_k U_jk sqrt(gamma_k) c_k.
/// The Hamiltonian is untouched and the Liouvillian is invariant.
pub fn mix_channels(sys: &OpenSystem, u: &Array2<C64>) -> Result<OpenSystem> {
    let n = sys.channels().len();
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.nrows(),
        });
    }
    // U U^dag = I to 1e-10.
    let uh = linalg::adjoint(u);
    let prod = u.dot(&uh);
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((prod[(i, j)] - C64::new(want, 0.0)).norm());
        }
    }
    if dev > 1e-10 {
        return Err(Error::NotUnitary { deviation: dev });
    }
    let absorbed: Vec<Operator> = sys.channels().iter().map(|ch| ch.absorbed()).collect();
    let mut channels = Vec::with_capacity(n);
    for j in 0..n {
        let mut op = Operator::zeros(sys.dim());
        for k in 0..n {
            op = op.add(&absorbed[k].scale(u[(j, k)]));
        }
        channels.push(JumpChannel::new(format!("mix{j}"), 1.0, op));
    }
    let mut out = OpenSystem::new(sys.hamiltonian.clone(), channels);
    out.guard = sys.guard.clone();
    Ok(out)
}

/// Displace channel `j` by a complex local-oscillator amplitude:
/// c -> c + gamma_lo with the compensating Hamiltonian shift
/// H -> H - (i/2)(gamma_lo^* c - gamma_lo c^dag). Liouvillian-invariant.
pub fn displace_channel(sys: &OpenSystem, j: usize, gamma_lo: C64) -> Result<OpenSystem> {
    let n = sys.channels().len();
    if j >= n {
        return Err(Error::InvalidChannel { index: j, count: n });
    }
    let a = sys.channels()[j].absorbed();
    let shift = a
        .scale(gamma_lo.conj())
        .sub(&a.dagger().scale(gamma_lo))
        .scale(C64::new(0.0, -0.5));
    let new_h = sys.hamiltonian.add(&shift);
    let mut channels = sys.channels().to_vec();
    let id = Operator::identity(sys.dim());
    channels[j] = JumpChannel::new(
        sys.channels()[j].label.clone(),
        1.0,
        a.add(&id.scale(gamma_lo)),
    );
    let mut out = OpenSystem::new(new_h, channels);
    out.guard = sys.guard.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DensityMatrix, StateVector};
    use ndarray::array;

    fn rc(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_density(dim: usize, salt: u64) -> DensityMatrix {
        // Deterministic positive matrix: G G^dag normalized.
        let mut state = salt.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) - 0.5
        };
        let g = Array2::from_shape_fn((dim, dim), |_| C64::new(next(), next()));
        let gh = linalg::adjoint(&g);
        let p = g.dot(&gh);
        let tr: C64 = (0..dim).map(|i| p[(i, i)]).sum();
        DensityMatrix::new(p.mapv(|z| z / tr))
    }

    fn driven_atom() -> OpenSystem {
        build_two_level(1.0, -1.0, 1.0)
    }

    #[test]
    fn effective_hamiltonian_pure_decay() {
        let sys = build_two_level(0.0, 0.0, 1.3);
        let heff = effective_hamiltonian(&sys);
        assert!((heff.entry(1, 1) - C64::new(0.0, -0.65)).norm() < 1e-14);
        assert!(heff.entry(0, 0).norm() < 1e-14);
    }

    #[test]
    fn effective_hamiltonian_additive_channels() {
        let sm = Operator::ketbra(2, 0, 1);
        let one = OpenSystem::new(
            Operator::zeros(2),
            vec![JumpChannel::new("d", 1.0, sm.clone())],
        );
        let two = OpenSystem::new(
            Operator::zeros(2),
            vec![
                JumpChannel::new("d1", 0.5, sm.clone()),
                JumpChannel::new("d2", 0.5, sm),
            ],
        );
        assert!(
            effective_hamiltonian(&one).max_abs_diff(&effective_hamiltonian(&two)) < 1e-14
        );
    }

    #[test]
    fn effective_hamiltonian_matches_driven_atom_form() {
        // (-Delta - i Gamma/2)|e><e| - (Omega/2)(sigma+ + sigma-)
        let (omega, delta, gamma) = (0.8, -0.6, 1.1);
        let sys = build_two_level(omega, delta, gamma);
        let heff = effective_hamiltonian(&sys);
        let mut want = Operator::zeros(2);
        want = want.add(&Operator::ketbra(2, 1, 1).scale(C64::new(-delta, -gamma / 2.0)));
        want = want.add(&Operator::ketbra(2, 1, 0).scale(rc(-omega / 2.0)));
        want = want.add(&Operator::ketbra(2, 0, 1).scale(rc(-omega / 2.0)));
        assert!(heff.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn liouvillian_annihilates_trace() {
        let sys = driven_atom();
        let l = liouvillian(&sys);
        for salt in 0..10 {
            let rho = random_density(2, salt);
            let out = l.apply(&rho);
            assert!(out.trace().norm() < 1e-10);
            assert!(out.hermiticity_deviation() < 1e-10);
        }
    }

    #[test]
    fn liouvillian_pure_decay_action() {
        let sys = build_two_level(0.0, 0.0, 1.0);
        let l = liouvillian(&sys);
        let ee = DensityMatrix::pure(&StateVector::basis(2, 1));
        let out = l.apply(&ee);
        // Gamma (|g><g| - |e><e|)
        assert!((out.entry(0, 0) - rc(1.0)).norm() < 1e-14);
        assert!((out.entry(1, 1) - rc(-1.0)).norm() < 1e-14);
        assert!(out.entry(0, 1).norm() < 1e-14);
    }

    #[test]
    fn liouvillian_splits_into_heff_and_recycling() {
        let sys = build_three_level(1.0, 0.1, 0.3, -0.2, 1.0, 0.01);
        let l = liouvillian(&sys);
        let heff = effective_hamiltonian(&sys);
        // -i(H_eff rho - rho H_eff^dag) + sum_j J_j rho
        let mut alt = Superoperator::left_mult(&heff)
            .sub(&Superoperator::right_mult(&heff.dagger()))
            .scale(C64::new(0.0, -1.0));
        for j in 0..sys.channels().len() {
            alt = alt.add(&jump_superoperator(&sys, j).unwrap());
        }
        for salt in 0..20 {
            let rho = random_density(3, 100 + salt);
            let a = l.apply(&rho);
            let b = alt.apply(&rho);
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn rate_rescaling_leaves_liouvillian_unchanged() {
        let sm = Operator::ketbra(2, 0, 1);
        for &s in &[0.5, 2.0, 10.0] {
            let base = OpenSystem::new(
                Operator::zeros(2),
                vec![JumpChannel::new("d", 1.0, sm.clone())],
            );
            let scaled = OpenSystem::new(
                Operator::zeros(2),
                vec![JumpChannel::new("d", 1.0 / (s * s), sm.scale(rc(s)))],
            );
            let d = liouvillian(&base).max_abs_diff(&liouvillian(&scaled));
            assert!(d < 1e-12, "s = {s}: {d}");
        }
    }

    #[test]
    fn canonicalize_diagonal_gamma_is_identity_up_to_phase() {
        let sm = Operator::ketbra(2, 0, 1);
        let sz = Operator::from_fn(2, |i, j| {
            if i != j {
                rc(0.0)
            } else if i == 1 {
                rc(1.0)
            } else {
                rc(-1.0)
            }
        });
        let form = LindbladMatrixForm::new(
            array![[rc(0.7), rc(0.0)], [rc(0.0), rc(0.2)]],
            vec![sm, sz],
        );
        let channels = canonicalize_lindblad(&form).unwrap();
        assert_eq!(channels.len(), 2);
        let h = Operator::zeros(2);
        let sys = OpenSystem::new(h.clone(), channels);
        let d = liouvillian(&sys).max_abs_diff(&form.liouvillian(&h));
        assert!(d < 1e-12);
    }

    #[test]
    fn canonicalize_rank_one_gamma() {
        // gamma = [[1,1],[1,1]]: eigenvalues {2, 0}, eigenvector (1,1)/sqrt(2),
        // so the single surviving channel is c1 + c2 at unit rate.
        let c1 = Operator::ketbra(2, 0, 1);
        let c2 = Operator::ketbra(2, 1, 0);
        let form = LindbladMatrixForm::new(
            array![[rc(1.0), rc(1.0)], [rc(1.0), rc(1.0)]],
            vec![c1.clone(), c2.clone()],
        );
        let channels = canonicalize_lindblad(&form).unwrap();
        assert_eq!(channels.len(), 1);
        assert_eq!(channels[0].rate, 1.0);
        let want = c1.add(&c2);
        // Phase freedom: compare |entries| and the Liouvillian.
        let got = &channels[0].op;
        for i in 0..2 {
            for j in 0..2 {
                assert!((got.entry(i, j).norm() - want.entry(i, j).norm()).abs() < 1e-12);
            }
        }
        let h = Operator::zeros(2);
        let sys = OpenSystem::new(h.clone(), channels);
        assert!(liouvillian(&sys).max_abs_diff(&form.liouvillian(&h)) < 1e-12);
    }

    #[test]
    fn canonicalize_rejects_indefinite_gamma() {
        let form = LindbladMatrixForm::new(
            array![[rc(1.0), rc(0.0)], [rc(0.0), rc(-0.1)]],
            vec![Operator::ketbra(2, 0, 1), Operator::ketbra(2, 1, 0)],
        );
        assert!(matches!(
            canonicalize_lindblad(&form),
            Err(Error::NotCompletelyPositive { .. })
        ));
    }

    fn two_channel_system() -> OpenSystem {
        let sm = Operator::ketbra(2, 0, 1);
        let sz = Operator::from_fn(2, |i, j| {
            if i != j {
                rc(0.0)
            } else if i == 1 {
                rc(1.0)
            } else {
                rc(-1.0)
            }
        });
        let h = Operator::ketbra(2, 1, 0)
            .add(&Operator::ketbra(2, 0, 1))
            .scale(rc(-0.5));
        OpenSystem::new(
            h,
            vec![
                JumpChannel::new("decay", 1.0, sm),
                JumpChannel::new("dephase", 0.25, sz),
            ],
        )
    }

    #[test]
    fn mix_channels_identity_and_permutation() {
        let sys = two_channel_system();
        let id = Array2::eye(2);
        let mixed = mix_channels(&sys, &id).unwrap();
        for (a, b) in sys.channels().iter().zip(mixed.channels()) {
            assert!(a.absorbed().max_abs_diff(&b.absorbed()) < 1e-14);
        }
        let perm = array![[rc(0.0), rc(1.0)], [rc(1.0), rc(0.0)]];
        let swapped = mix_channels(&sys, &perm).unwrap();
        assert!(
            swapped.channels()[0]
                .absorbed()
                .max_abs_diff(&sys.channels()[1].absorbed())
                < 1e-14
        );
        assert!(liouvillian(&swapped).max_abs_diff(&liouvillian(&sys)) < 1e-12);
    }

    #[test]
    fn mix_channels_hadamard_invariance() {
        let sys = two_channel_system();
        let s = 1.0 / 2f64.sqrt();
        let u = array![[rc(s), rc(s)], [rc(s), rc(-s)]];
        let mixed = mix_channels(&sys, &u).unwrap();
        assert!(liouvillian(&mixed).max_abs_diff(&liouvillian(&sys)) < 1e-12);
    }

    #[test]
    fn mix_channels_random_unitaries_invariance() {
        // Random unitaries from Jacobi eigenvectors of random Hermitian seeds.
        for n in 2..=4usize {
            let mut ops = Vec::new();
            for k in 0..n {
                ops.push(JumpChannel::new(
                    format!("c{k}"),
                    0.3 + 0.2 * k as f64,
                    Operator::from_fn(3, |i, j| {
                        C64::new(
                            ((i + 2 * j + k) % 3) as f64 * 0.4,
                            ((i * j + k) % 2) as f64 * -0.3,
                        )
                    }),
                ));
            }
            let h0 = Operator::from_fn(3, |i, j| C64::new((i + j) as f64 * 0.2, 0.0));
            let h = h0.add(&h0.dagger()).scale(rc(0.5));
            let sys = OpenSystem::new(h, ops);
            for salt in 0..20u64 {
                let mut state = salt.wrapping_mul(0x9e3779b97f4a7c15) + 7;
                let mut next = move || {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state as f64 / u64::MAX as f64) - 0.5
                };
                let g = Array2::from_shape_fn((n, n), |_| C64::new(next(), next()));
                let herm = {
                    let gh = linalg::adjoint(&g);
                    (&g + &gh).mapv(|z| z * rc(0.5))
                };
                let (_, u) = linalg::hermitian_eig(&herm);
                let mixed = mix_channels(&sys, &u).unwrap();
                let d = liouvillian(&mixed).max_abs_diff(&liouvillian(&sys));
                assert!(d < 1e-10, "n={n} salt={salt}: {d}");
            }
        }
    }

    #[test]
    fn mix_channels_rejects_non_unitary() {
        let sys = two_channel_system();
        let u = array![[rc(1.0), rc(0.1)], [rc(0.0), rc(1.0)]];
        assert!(matches!(
            mix_channels(&sys, &u),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn displace_channel_invariance() {
        let sys = driven_atom();
        let same = displace_channel(&sys, 0, C64::new(0.0, 0.0)).unwrap();
        assert!(liouvillian(&same).max_abs_diff(&liouvillian(&sys)) < 1e-14);
        assert!(same.hamiltonian().max_abs_diff(sys.hamiltonian()) < 1e-14);

        for gamma_lo in [C64::new(2.0, 0.0), C64::new(1.0, 1.0), C64::new(-0.3, 0.7)] {
            let disp = displace_channel(&sys, 0, gamma_lo).unwrap();
            let d = liouvillian(&disp).max_abs_diff(&liouvillian(&sys));
            assert!(d < 1e-12, "gamma_lo={gamma_lo}: {d}");
        }
        // Twenty random complex displacements.
        for k in 0..20 {
            let re = (k as f64 * 0.37).sin() * 2.0;
            let im = (k as f64 * 0.71).cos() * 1.5;
            let disp = displace_channel(&sys, 0, C64::new(re, im)).unwrap();
            assert!(liouvillian(&disp).max_abs_diff(&liouvillian(&sys)) < 1e-10);
        }
    }

    #[test]
    fn effective_hamiltonian_damping_is_negative_semidefinite() {
        let catalog: Vec<OpenSystem> = vec![
            build_two_level(1.0, -1.0, 1.0),
            build_three_level(1.0, 0.02, 0.0, 0.0, 1.0, 1e-3),
            build_jcm_ion(1.0, -1.0, 0.4, 0.1, 0.05, 6, true),
            build_jcm_ion(1.0, -1.0, 0.4, 0.1, 0.05, 6, false),
            build_decaying_qubit(0.8),
        ];
        for sys in catalog {
            let heff = effective_hamiltonian(&sys);
            // The damping part (H_eff - H_eff^dag)/(2i) = -sum gamma c^dag c / 2
            // must be negative semidefinite.
            let damping = heff
                .sub(&heff.dagger())
                .scale(C64::new(0.0, -0.5));
            let w = damping.hermitian_eigenvalues();
            assert!(w[w.len() - 1] <= 1e-12, "max eig {}", w[w.len() - 1]);
        }
    }
}
