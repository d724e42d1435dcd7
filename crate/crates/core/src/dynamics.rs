// SPDX-License-Identifier: Apache-2.0

//! Matrix-free effective Hamiltonian and the no-jump propagator.
//!
//! Units: ħ = 1, every Hamiltonian entry is an angular frequency. The
//! Schrödinger right-hand side is `-i H̃ ψ`; [`EffectiveHamiltonian::apply`]
//! returns `H̃ ψ` itself.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::BasisSet;
use crate::lattice::{InteractionMatrix, PhysicalParams};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// H̃ = Σ_j V_af^j + Σ_{i<j} V_aa^{ij} − (i/2) Σ_j (Γ_r σ_rr^j + Γ_z 𝟙).
///
/// The diagonal (interactions and decay) is stored explicitly; the drive
/// −Ω Σ_j (σ_rg^j + σ_gr^j) is applied through the precomputed list of
/// single-flip partners that exist in the basis.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    basis: Arc<BasisSet>,
    params: PhysicalParams,
    diag: Vec<Complex64>,
    row_start: Vec<usize>,
    partners: Vec<u32>,
    drive_norm: f64,
    max_abs_diag: f64,
}

impl EffectiveHamiltonian {
    pub fn build(basis: Arc<BasisSet>, delta: &InteractionMatrix, params: &PhysicalParams) -> Result<Self> {
        let n = basis.n_atoms();
        if delta.n_atoms() != n {
            return Err(Error::BasisMismatch);
        }
        let floor = params.gamma_z * n as f64;
        let diag: Vec<Complex64> = basis
            .configs()
            .iter()
            .map(|c| {
                Complex64::new(
                    delta.energy(c.bits()),
                    -0.5 * (params.gamma_r * c.n_exc() as f64 + floor),
                )
            })
            .collect();

        let mut row_start = Vec::with_capacity(basis.dim() + 1);
        let mut partners = Vec::new();
        row_start.push(0);
        for c in basis.configs() {
            for j in 0..n {
                if let Some(p) = basis.try_rank(c.flip(j)) {
                    partners.push(p as u32);
                }
            }
            row_start.push(partners.len());
        }
        let max_abs_diag = diag.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let mut h = EffectiveHamiltonian {
            basis,
            params: *params,
            diag,
            row_start,
            partners,
            drive_norm: 0.0,
            max_abs_diag,
        };
        h.drive_norm = params.omega * h.adjacency_norm_estimate();
        Ok(h)
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    /// Dense indices of the single-flip partners of basis element `i`.
    pub fn partners(&self, i: usize) -> &[u32] {
        &self.partners[self.row_start[i]..self.row_start[i + 1]]
    }

    /// Upper estimate of the spectral norm of the drive term.
    pub fn drive_norm(&self) -> f64 {
        self.drive_norm
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.max_abs_diag
    }

    /// Power iteration on the partner graph; the graph is bipartite between
    /// even and odd excitation blocks, so ‖A x‖ with a positive start vector
    /// converges to the spectral radius from below. The result is padded and
    /// capped by the maximal degree.
    fn adjacency_norm_estimate(&self) -> f64 {
        let dim = self.dim();
        let max_degree = (0..dim)
            .map(|i| self.row_start[i + 1] - self.row_start[i])
            .max()
            .unwrap_or(0) as f64;
        if max_degree == 0.0 {
            return 0.0;
        }
        let mut x = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut y = vec![0.0; dim];
        let mut lambda = 0.0;
        for _ in 0..80 {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.partners(i).iter().map(|&p| x[p as usize]).sum();
            }
            lambda = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if lambda == 0.0 {
                return 0.0;
            }
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi / lambda;
            }
        }
        (1.05 * lambda).min(max_degree)
    }

    fn check_len(&self, psi: &[Complex64], out: &[Complex64]) -> Result<()> {
        if psi.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }

    /// `out = H̃ ψ`.
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.check_len(psi, out)?;
        let omega = self.params.omega;
        for (i, o) in out.iter_mut().enumerate() {
            let drive: Complex64 = self.partners(i).iter().map(|&p| psi[p as usize]).sum();
            *o = self.diag[i] * psi[i] - omega * drive;
        }
        Ok(())
    }

    /// `out = H̃ ψ` for a state known to live on the same basis.
    pub fn apply_state(&self, state: &crate::hilbert::StateVector) -> Result<Vec<Complex64>> {
        if !state.same_basis(&self.basis) && state.basis().configs() != self.basis.configs() {
            return Err(Error::BasisMismatch);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.apply(state.amplitudes(), &mut out)?;
        Ok(out)
    }
}

/// Default step rule: `dt ≤ STABILITY_FACTOR / (spread + drive_norm)`.
pub const STABILITY_FACTOR: f64 = 0.1;

/// Fixed-step classical RK4 for the no-jump evolution, one per trajectory
/// worker. The real part of the diagonal is shifted by the midpoint of its
/// range; this changes only the global phase, so the step is set by the
/// spread of the diagonal rather than its largest entry.
pub struct Propagator<'h> {
    h: &'h EffectiveHamiltonian,
    shifted: Vec<Complex64>,
    dt_max: f64,
    k: Vec<Complex64>,
    tmp: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl<'h> Propagator<'h> {
    pub fn new(h: &'h EffectiveHamiltonian, stability_factor: f64) -> Self {
        let (lo, hi) = h
            .diag()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d.re), hi.max(d.re)));
        let mid = if lo <= hi { 0.5 * (lo + hi) } else { 0.0 };
        let shifted: Vec<Complex64> = h.diag().iter().map(|d| d - mid).collect();
        let spread = shifted.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let scale = spread + h.drive_norm();
        let dt_max = if scale > 0.0 {
            stability_factor / scale
        } else {
            f64::INFINITY
        };
        let zero = Complex64::new(0.0, 0.0);
        Propagator {
            h,
            shifted,
            dt_max,
            k: vec![zero; h.dim()],
            tmp: vec![zero; h.dim()],
            acc: vec![zero; h.dim()],
        }
    }

    pub fn hamiltonian(&self) -> &'h EffectiveHamiltonian {
        self.h
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    /// `out = -i (H̃ - shift) ψ`.
    #[inline]
    fn rhs(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let omega = self.h.params.omega;
        for (i, o) in out.iter_mut().enumerate() {
            let drive: Complex64 = self.h.partners(i).iter().map(|&p| psi[p as usize]).sum();
            *o = -I * (self.shifted[i] * psi[i] - omega * drive);
        }
    }

    /// Advance the unnormalized state `psi` by one step of length `dt`.
    pub fn step(&mut self, psi: &mut [Complex64], dt: f64) -> Result<()> {
        if psi.len() != self.h.dim() {
            return Err(Error::BasisMismatch);
        }
        if !(dt > 0.0) || dt > self.dt_max * (1.0 + 1e-12) {
            return Err(Error::StepSize {
                dt,
                dt_max: self.dt_max,
            });
        }
        let mut k = std::mem::take(&mut self.k);
        let mut tmp = std::mem::take(&mut self.tmp);
        let mut acc = std::mem::take(&mut self.acc);
        let (h2, h3, h6) = (0.5 * dt, dt / 3.0, dt / 6.0);
        self.rhs(psi, &mut k);
        for i in 0..psi.len() {
            acc[i] = psi[i] + h6 * k[i];
            tmp[i] = psi[i] + h2 * k[i];
        }
        self.rhs(&tmp, &mut k);
        for i in 0..psi.len() {
            acc[i] += h3 * k[i];
            tmp[i] = psi[i] + h2 * k[i];
        }
        self.rhs(&tmp, &mut k);
        for i in 0..psi.len() {
            acc[i] += h3 * k[i];
            tmp[i] = psi[i] + dt * k[i];
        }
        self.rhs(&tmp, &mut k);
        for i in 0..psi.len() {
            psi[i] = acc[i] + h6 * k[i];
        }
        self.k = k;
        self.tmp = tmp;
        self.acc = acc;
        Ok(())
    }

    /// Advance by `duration` using equal steps no longer than `dt_max`.
    pub fn evolve(&mut self, psi: &mut [Complex64], duration: f64) -> Result<()> {
        if duration <= 0.0 {
            return Ok(());
        }
        let n = (duration / self.dt_max).ceil().max(1.0) as usize;
        let dt = duration / n as f64;
        for _ in 0..n {
            self.step(psi, dt)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{BasisSet, Configuration, StateVector};
    use crate::lattice::{AtomGeometry, InteractionMatrix};
    use crate::oracle::LindbladModel;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_atom(gr: f64, gz: f64) -> EffectiveHamiltonian {
        let basis = Arc::new(BasisSet::truncated(1, 1).unwrap());
        let delta = InteractionMatrix::from_entries(1, vec![0.0]).unwrap();
        let p = PhysicalParams::new(1.0, gr, gz, 1.0).unwrap();
        EffectiveHamiltonian::build(basis, &delta, &p).unwrap()
    }

    fn random_setup(n: usize, n_max: usize, seed: u64, omega: f64) -> (EffectiveHamiltonian, Vec<[f64; 2]>, PhysicalParams) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let positions: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 + rng.random::<f64>() * 0.3, rng.random::<f64>()]).collect();
        let geometry = AtomGeometry::from_positions(positions.clone(), 1.0, 4.0 * n as f64).unwrap();
        let p = PhysicalParams::new(omega, rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.5, 1.0 + rng.random::<f64>()).unwrap();
        let delta = crate::lattice::interaction_matrix(&geometry, &p).unwrap();
        let basis = Arc::new(BasisSet::truncated(n, n_max).unwrap());
        (EffectiveHamiltonian::build(basis, &delta, &p).unwrap(), positions, p)
    }

    fn random_state(dim: usize, seed: u64) -> Vec<Complex64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..dim).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn single_atom_diagonal() {
        let h = single_atom(0.2, 0.3);
        assert_eq!(h.diag(), &[c(0.0, -0.15), c(0.0, -0.25)]);
    }

    #[test]
    fn doubly_excited_pair_at_blockade_distance_costs_linewidth() {
        let p = PhysicalParams::reference();
        let w = p.excitation_linewidth().unwrap().value;
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [1.0, 0.0]], 1.0, 1.0).unwrap();
        let delta = crate::lattice::interaction_matrix(&g, &p).unwrap();
        let basis = Arc::new(BasisSet::truncated(2, 2).unwrap());
        let h = EffectiveHamiltonian::build(basis.clone(), &delta, &p).unwrap();
        let i = basis.rank(Configuration(0b11)).unwrap();
        assert!((h.diag()[i].re - w).abs() < 1e-12 * w);
        assert_eq!(h.diag()[0], c(0.0, -0.5 * p.gamma_z * 2.0));
    }

    #[test]
    fn drive_on_single_ground_state() {
        let h = single_atom(0.0, 0.0);
        let mut out = vec![c(0.0, 0.0); 2];
        h.apply(&[c(1.0, 0.0), c(0.0, 0.0)], &mut out).unwrap();
        assert_eq!(out, vec![c(0.0, 0.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn ground_state_has_n_drive_partners() {
        let (h, _, _) = random_setup(5, 2, 3, 1.0);
        let mut psi = vec![c(0.0, 0.0); h.dim()];
        psi[0] = c(1.0, 0.0);
        let mut out = vec![c(0.0, 0.0); h.dim()];
        h.apply(&psi, &mut out).unwrap();
        let nonzero = out.iter().skip(1).filter(|a| a.norm() > 0.0).count();
        assert_eq!(nonzero, 5);
    }

    #[test]
    fn drive_couples_adjacent_blocks_only() {
        let (h, _, _) = random_setup(6, 4, 5, 1.0);
        let b = h.basis();
        for i in 0..h.dim() {
            let k = b.configs()[i].n_exc();
            for &p in h.partners(i) {
                let kp = b.configs()[p as usize].n_exc();
                assert!(kp + 1 == k || k + 1 == kp);
            }
        }
    }

    /// Matrix-free H̃ against the dense oracle construction in bit order.
    #[test]
    fn matrix_free_matches_dense_hamiltonian() {
        for n in 1..=4 {
            for n_max in 1..=n {
                let (h, positions, p) = random_setup(n, n_max, 10 + n as u64, 1.3);
                let geometry = AtomGeometry::from_positions(positions, 1.0, 16.0).unwrap();
                let model = LindbladModel::build(&geometry, &p).unwrap();
                let hd = model.hamiltonian();
                let psi = random_state(h.dim(), 99);
                let mut out = vec![c(0.0, 0.0); h.dim()];
                h.apply(&psi, &mut out).unwrap();
                let basis = h.basis();
                // Embed into the full space, multiply, then restrict.
                let mut full = nalgebra::DVector::<Complex64>::zeros(1 << n);
                for (i, cfg) in basis.configs().iter().enumerate() {
                    full[cfg.bits() as usize] = psi[i];
                }
                let hpsi = hd * &full;
                let mut herm = c(0.0, 0.0);
                for (i, cfg) in basis.configs().iter().enumerate() {
                    let b = cfg.bits() as usize;
                    let anti = -c(0.0, 0.5) * (p.gamma_r * cfg.n_exc() as f64 + p.gamma_z * n as f64) * psi[i];
                    assert!((out[i] - (hpsi[b] + anti)).norm() < 1e-12, "n={n} n_max={n_max}");
                    herm += full[b].conj() * hpsi[b];
                }
                // Restricted to the truncated space the Hermitian parts agree
                // only once the dense product is restricted too.
                let mut restricted = c(0.0, 0.0);
                for (i, _) in basis.configs().iter().enumerate() {
                    restricted += psi[i].conj() * out[i];
                }
                assert!((restricted.re - herm.re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_part_expectation_matches_dense() {
        let (h, positions, p) = random_setup(4, 4, 77, 0.9);
        let geometry = AtomGeometry::from_positions(positions, 1.0, 16.0).unwrap();
        let model = LindbladModel::build(&geometry, &p).unwrap();
        let psi = random_state(16, 5);
        let mut out = vec![c(0.0, 0.0); 16];
        h.apply(&psi, &mut out).unwrap();
        let lhs: Complex64 = psi.iter().zip(&out).map(|(a, b)| a.conj() * b).sum();
        let mut full = nalgebra::DVector::<Complex64>::zeros(16);
        for (i, cfg) in h.basis().configs().iter().enumerate() {
            full[cfg.bits() as usize] = psi[i];
        }
        let rhs = (full.adjoint() * model.hamiltonian() * &full)[(0, 0)];
        assert!((lhs.re - rhs.re).abs() < 1e-12);
    }

    #[test]
    fn rabi_oscillation_single_atom() {
        let h = single_atom(0.0, 0.0);
        let mut prop = Propagator::new(&h, STABILITY_FACTOR);
        let mut psi = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let mut t = 0.0f64;
        for _ in 0..50 {
            prop.evolve(&mut psi, 0.1).unwrap();
            t += 0.1;
            let pr = psi[1].norm_sqr();
            // RK4 global error at dt = 0.1 is about t·dt⁴/120.
            assert!((pr - t.sin().powi(2)).abs() < 1e-5, "t={t}");
        }
    }

    #[test]
    fn diagonal_evolution_is_closed_form() {
        let p = PhysicalParams::new(1.0, 0.3, 0.2, 1.0).unwrap();
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [1.2, 0.0], [0.0, 1.1]], 1.0, 4.0).unwrap();
        let delta = crate::lattice::interaction_matrix(&g, &p).unwrap();
        let basis = Arc::new(BasisSet::truncated(3, 3).unwrap());
        let mut h = EffectiveHamiltonian::build(basis, &delta, &p).unwrap();
        h.params.omega = 0.0;
        h.drive_norm = 0.0;
        let psi0 = random_state(8, 1);
        let mut prop = Propagator::new(&h, STABILITY_FACTOR);
        let mut psi = psi0.clone();
        let t = 2.0;
        prop.evolve(&mut psi, t).unwrap();
        // The propagator may drop a global phase.
        let phase = psi[0] / psi0[0] / psi[0].norm() * psi0[0].norm();
        for (i, cfg) in h.basis().configs().iter().enumerate() {
            let decay = (-(p.gamma_r * cfg.n_exc() as f64 + p.gamma_z * 3.0) * t / 2.0).exp();
            let expect = psi0[i] * (-I * (h.diag()[i].re - h.diag()[0].re) * t).exp() * decay * phase;
            assert!((psi[i] - expect).norm() < 1e-6, "{}", (psi[i] - expect).norm());
        }
    }

    /// Far-detuned doubly excited pair: the no-jump propagator against a
    /// dense matrix exponential of H̃, up to a global phase. Error is
    /// small at the default step and falls at fourth order.
    #[test]
    fn detuned_pair_matches_matrix_exponential() {
        for r in [0.6, 0.8, 1.0] {
            let p = PhysicalParams::new(1.0, 0.1, 0.3, 40.0).unwrap();
            let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [r, 0.0]], 1.0, 2.0).unwrap();
            let delta = crate::lattice::interaction_matrix(&g, &p).unwrap();
            let basis = Arc::new(BasisSet::truncated(2, 2).unwrap());
            let h = EffectiveHamiltonian::build(basis.clone(), &delta, &p).unwrap();
            let model = LindbladModel::build(&g, &p).unwrap();
            let mut heff = model.hamiltonian().clone();
            for b in 0..4usize {
                let n_exc = b.count_ones() as f64;
                heff[(b, b)] -= c(0.0, 0.5) * (p.gamma_r * n_exc + p.gamma_z * 2.0);
            }
            let t = 3.0;
            let u = (heff * c(0.0, -t)).exp();
            let ground = basis.rank(Configuration(0)).unwrap();
            let error = |factor: f64| {
                let mut psi = vec![c(0.0, 0.0); 4];
                psi[ground] = c(1.0, 0.0);
                Propagator::new(&h, factor).evolve(&mut psi, t).unwrap();
                let phase = psi[ground] / u[(0, 0)];
                assert!((phase.norm() - 1.0).abs() < 1e-4);
                basis
                    .configs()
                    .iter()
                    .enumerate()
                    .map(|(i, cfg)| (psi[i] - u[(cfg.bits() as usize, 0)] * phase).norm())
                    .fold(0.0, f64::max)
            };
            let (coarse, fine) = (error(STABILITY_FACTOR), error(STABILITY_FACTOR / 2.0));
            assert!(coarse < 5e-5, "r={r}: {coarse:e}");
            assert!(fine < coarse / 10.0 || coarse < 1e-10, "r={r}: {coarse:e} -> {fine:e}");
        }
    }

    #[test]
    fn norm_non_increasing_without_drive() {
        let (mut h, _, _) = random_setup(4, 3, 8, 1.0);
        h.params.omega = 0.0;
        h.drive_norm = 0.0;
        let mut prop = Propagator::new(&h, STABILITY_FACTOR);
        let mut psi = random_state(h.dim(), 2);
        let mut prev = crate::hilbert::norm_sqr(&psi);
        for _ in 0..200 {
            prop.step(&mut psi, prop.dt_max()).unwrap();
            let now = crate::hilbert::norm_sqr(&psi);
            assert!(now <= prev);
            prev = now;
        }
    }

    #[test]
    fn step_size_enforced() {
        let (h, _, _) = random_setup(3, 3, 1, 1.0);
        let mut prop = Propagator::new(&h, STABILITY_FACTOR);
        let mut psi = random_state(h.dim(), 3);
        let too_big = prop.dt_max() * 1.01;
        assert!(matches!(prop.step(&mut psi, too_big), Err(Error::StepSize { .. })));
        assert!(prop.step(&mut psi, -1.0).is_err());
        assert!(matches!(prop.step(&mut psi[..2], 0.001), Err(Error::BasisMismatch)));
    }

    /// Unitary case: one-step norm error shrinks as dt⁵ or faster.
    #[test]
    fn norm_error_converges_at_fifth_order() {
        let (h0, _, _) = random_setup(4, 4, 21, 1.0);
        let mut h = h0.clone();
        for d in h.diag.iter_mut() {
            d.im = 0.0;
        }
        let mut prop = Propagator::new(&h, 10.0);
        let mut psi0 = random_state(h.dim(), 4);
        let s = 1.0 / crate::hilbert::norm_sqr(&psi0).sqrt();
        psi0.iter_mut().for_each(|a| *a *= s);
        let err = |prop: &mut Propagator, dt: f64| {
            let mut psi = psi0.clone();
            prop.step(&mut psi, dt).unwrap();
            (crate::hilbert::norm_sqr(&psi) - 1.0).abs()
        };
        let dt = 0.2 / h.max_abs_diag().max(h.drive_norm());
        let e1 = err(&mut prop, dt);
        let e2 = err(&mut prop, dt / 2.0);
        let e3 = err(&mut prop, dt / 4.0);
        assert!(e1 > 0.0);
        // Leading norm defect of RK4 on a skew-Hermitian operator is dt⁶,
        // so the ratio per halving must be at least 2⁵.
        assert!(e1 / e2 > 30.0 && e2 / e3 > 30.0, "{e1} {e2} {e3}");
    }

    #[test]
    fn state_vector_apply_checks_basis() {
        let (h, _, _) = random_setup(3, 2, 1, 1.0);
        let other = Arc::new(BasisSet::truncated(3, 3).unwrap());
        assert!(h.apply_state(&StateVector::ground(other)).is_err());
        assert!(h.apply_state(&StateVector::ground(h.basis().clone())).is_ok());
    }
}
