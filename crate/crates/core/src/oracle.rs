// SPDX-License-Identifier: Apache-2.0

//! Dense Lindblad master equation over the full 2^N space.
//!
//! Basis index = configuration bitmask (bit j set ⇔ atom j in |r⟩). Used as
//! the exact reference for the trajectory engine, so it shares no code with
//! the matrix-free propagator beyond the parameter types.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{interaction_matrix, AtomGeometry, InteractionMatrix, PhysicalParams};
use crate::mcwf::{JumpChannel, JumpKind};
use crate::observables::DensityMatrix;

/// Largest ensemble the oracle accepts.
pub const MAX_ORACLE_ATOMS: usize = 10;

/// Time the steady state is integrated to, in units of Ω⁻¹.
pub const STEADY_STATE_TIME: f64 = 60.0;

/// Nonzero entries (row, col, value) of a matrix.
type Sparse = Vec<(usize, usize, Complex64)>;

fn nonzeros(m: &DMatrix<Complex64>) -> Sparse {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != Complex64::new(0.0, 0.0) {
                out.push((i, j, v));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LindbladModel {
    n_atoms: usize,
    params: PhysicalParams,
    hamiltonian: DMatrix<Complex64>,
    jump_ops: Vec<(JumpChannel, DMatrix<Complex64>)>,
    /// Nonzeros of H − (i/2) Σ L†L.
    h_eff: Sparse,
    jump_sparse: Vec<Sparse>,
    /// Row-sum norm of H − (i/2) Σ L†L, which bounds the generator.
    norm: f64,
}

impl LindbladModel {
    pub fn build(geometry: &AtomGeometry, params: &PhysicalParams) -> Result<Self> {
        let delta = interaction_matrix(geometry, params)?;
        Self::from_interactions(&delta, params)
    }

    pub fn from_interactions(delta: &InteractionMatrix, params: &PhysicalParams) -> Result<Self> {
        params.validate()?;
        let n = delta.n_atoms();
        if n == 0 {
            return Err(Error::EmptyGeometry);
        }
        if n > MAX_ORACLE_ATOMS {
            return Err(Error::Capacity {
                required_bytes: 16u128 << (2 * n),
                cap_bytes: 16u128 << (2 * MAX_ORACLE_ATOMS),
            });
        }
        let dim = 1usize << n;
        let zero = Complex64::new(0.0, 0.0);
        let mut h = DMatrix::from_element(dim, dim, zero);
        for s in 0..dim {
            let mut e = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    if (s >> i) & 1 == 1 && (s >> j) & 1 == 1 {
                        e += delta.get(i, j);
                    }
                }
            }
            h[(s, s)] = Complex64::new(e, 0.0);
            for j in 0..n {
                h[(s ^ (1 << j), s)] = Complex64::new(-params.omega, 0.0);
            }
        }

        let mut jump_ops = Vec::with_capacity(2 * n);
        let sr = params.gamma_r.sqrt();
        let sz = params.gamma_z.sqrt();
        for atom in 0..n {
            let mut l = DMatrix::from_element(dim, dim, zero);
            for s in 0..dim {
                if (s >> atom) & 1 == 1 {
                    l[(s ^ (1 << atom), s)] = Complex64::new(sr, 0.0);
                }
            }
            jump_ops.push((JumpChannel { kind: JumpKind::Decay, atom }, l));
        }
        for atom in 0..n {
            let l = DMatrix::from_fn(dim, dim, |r, c| {
                if r != c {
                    zero
                } else if (r >> atom) & 1 == 1 {
                    Complex64::new(sz, 0.0)
                } else {
                    Complex64::new(-sz, 0.0)
                }
            });
            jump_ops.push((JumpChannel { kind: JumpKind::Dephase, atom }, l));
        }

        let mut h_eff = h.clone();
        for (_, l) in &jump_ops {
            h_eff -= (l.adjoint() * l) * Complex64::new(0.0, 0.5);
        }
        let norm = (0..dim)
            .map(|r| h_eff.row(r).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let jump_sparse = jump_ops
            .iter()
            .filter(|(ch, _)| match ch.kind {
                JumpKind::Decay => params.gamma_r > 0.0,
                JumpKind::Dephase => params.gamma_z > 0.0,
            })
            .map(|(_, l)| nonzeros(l))
            .collect();
        Ok(LindbladModel {
            n_atoms: n,
            params: *params,
            h_eff: nonzeros(&h_eff),
            hamiltonian: h,
            jump_ops,
            jump_sparse,
            norm,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn hamiltonian(&self) -> &DMatrix<Complex64> {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[(JumpChannel, DMatrix<Complex64>)] {
        &self.jump_ops
    }

    /// Largest RK4 step, 0.05/‖H − (i/2)ΣL†L‖_∞.
    pub fn max_step(&self) -> f64 {
        if self.norm > 0.0 {
            0.05 / self.norm
        } else {
            f64::INFINITY
        }
    }

    /// dρ/dt = −i(H_eff ρ − ρ H_eff†) + Σ_k L_k ρ L_k†, which equals
    /// −i[H, ρ] + Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ}).
    pub fn lindblad_rhs(&self, rho: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::BasisMismatch);
        }
        let minus_i = Complex64::new(0.0, -1.0);
        let mut out = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        // (H_eff ρ)[r, c] = Σ H_eff[r, k] ρ[k, c]
        for &(r, k, v) in &self.h_eff {
            let a = minus_i * v;
            for c in 0..d {
                out[(r, c)] += a * rho[(k, c)];
            }
        }
        // −(−i)(ρ H_eff†)[r, c] = i Σ ρ[r, k] conj(H_eff[c, k])
        for &(c, k, v) in &self.h_eff {
            let a = Complex64::new(0.0, 1.0) * v.conj();
            for r in 0..d {
                out[(r, c)] += a * rho[(r, k)];
            }
        }
        for l in &self.jump_sparse {
            for &(r, k, a) in l {
                for &(c, m, b) in l {
                    out[(r, c)] += a * rho[(k, m)] * b.conj();
                }
            }
        }
        Ok(out)
    }

    pub fn ground_state(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut rho = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        rho
    }

    fn rk4_step(&self, rho: &mut DMatrix<Complex64>, dt: f64) -> Result<f64> {
        let half = Complex64::new(0.5 * dt, 0.0);
        let full = Complex64::new(dt, 0.0);
        let k1 = self.lindblad_rhs(rho)?;
        let k2 = self.lindblad_rhs(&(&*rho + &k1 * half))?;
        let k3 = self.lindblad_rhs(&(&*rho + &k2 * half))?;
        let k4 = self.lindblad_rhs(&(&*rho + &k3 * full))?;
        *rho += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(dt / 6.0, 0.0);
        let adj = rho.adjoint();
        let defect = (&*rho - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
        *rho = (&*rho + adj) * Complex64::new(0.5, 0.0);
        Ok(defect)
    }

    /// Integrates from `rho0` at t = 0 and returns ρ at each of `times`.
    pub fn integrate(&self, rho0: &DMatrix<Complex64>, times: &[f64]) -> Result<OracleRun> {
        let d = self.dim();
        if rho0.nrows() != d || rho0.ncols() != d {
            return Err(Error::BasisMismatch);
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidTimeWindow("oracle times must be finite, >= 0 and non-decreasing".into()));
        }
        let configs = DensityMatrix::bit_order_configs(self.n_atoms);
        let mut rho = rho0.clone();
        let mut t = 0.0;
        let mut states = Vec::with_capacity(times.len());
        let mut max_defect: f64 = 0.0;
        for &target in times {
            let span = target - t;
            if span > 0.0 {
                let n = (span / self.max_step()).ceil().max(1.0) as usize;
                let dt = span / n as f64;
                for _ in 0..n {
                    max_defect = max_defect.max(self.rk4_step(&mut rho, dt)?);
                }
                if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Numeric(format!("oracle diverged before t = {target}")));
                }
            }
            t = target;
            states.push(DensityMatrix::from_matrix(configs.clone(), rho.clone())?);
        }
        Ok(OracleRun {
            times: times.to_vec(),
            states,
            max_hermiticity_defect: max_defect,
        })
    }

    /// ρ(t = 60/Ω) from the ground state.
    pub fn steady_state(&self) -> Result<DensityMatrix> {
        let t_end = STEADY_STATE_TIME / self.params.omega.max(f64::MIN_POSITIVE).min(1.0);
        let mut run = self.integrate(&self.ground_state(), &[t_end])?;
        Ok(run.states.pop().expect("one sample"))
    }
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Largest ‖ρ − ρ†‖_max seen before symmetrization.
    pub max_hermiticity_defect: f64,
}

/// Runs the oracle from `rho0` over `times`.
pub fn integrate_master_equation(model: &LindbladModel, rho0: &DMatrix<Complex64>, times: &[f64]) -> Result<OracleRun> {
    model.integrate(rho0, times)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pair(r: f64, p: PhysicalParams) -> LindbladModel {
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [r, 0.0]], r, r).unwrap();
        LindbladModel::build(&g, &p).unwrap()
    }

    fn single(p: PhysicalParams) -> LindbladModel {
        let delta = InteractionMatrix::from_entries(1, vec![0.0]).unwrap();
        LindbladModel::from_interactions(&delta, &p).unwrap()
    }

    /// Textbook form −i[H, ρ] + Σ (LρL† − ½{L†L, ρ}) with dense products.
    fn reference_rhs(m: &LindbladModel, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let h = m.hamiltonian();
        let mut out = (h * rho - rho * h) * c(0.0, -1.0);
        for (_, l) in m.jump_ops() {
            let ld = l.adjoint();
            let ll = &ld * l;
            out += l * rho * &ld - (&ll * rho + rho * &ll) * c(0.5, 0.0);
        }
        out
    }

    fn random_rho(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(d, d, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho / tr
    }

    fn mean_n(rho: &DensityMatrix) -> f64 {
        rho.mean_excitations()
    }

    #[test]
    fn operator_structure() {
        let p = PhysicalParams::new(1.0, 0.2, 0.3, 1.0).unwrap();
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 1.0, 2.0).unwrap();
        let m = LindbladModel::build(&g, &p).unwrap();
        let h = m.hamiltonian();
        assert!((h - h.adjoint()).iter().all(|z| z.norm() < 1e-12));
        assert_eq!(m.jump_ops().len(), 6);
        for (ch, l) in m.jump_ops() {
            let nz: Vec<Complex64> = l.iter().copied().filter(|z| z.norm() != 0.0).collect();
            match ch.kind {
                JumpKind::Decay => {
                    assert_eq!(nz.len(), 4);
                    assert!(nz.iter().all(|z| (z.re - 0.2f64.sqrt()).abs() < 1e-15));
                }
                JumpKind::Dephase => {
                    assert_eq!(nz.len(), 8);
                    assert!(l.is_square() && (0..8).all(|i| (l[(i, i)].norm() - 0.3f64.sqrt()).abs() < 1e-15));
                }
            }
        }
        assert!(matches!(
            LindbladModel::from_interactions(&InteractionMatrix::from_entries(11, vec![0.0; 121]).unwrap(), &p),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn rhs_matches_textbook_form() {
        let p = PhysicalParams::new(1.3, 0.2, 0.4, 2.0).unwrap();
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [0.9, 0.1], [0.2, 1.0]], 1.0, 2.0).unwrap();
        let m = LindbladModel::build(&g, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let rho = random_rho(8, &mut rng);
            let fast = m.lindblad_rhs(&rho).unwrap();
            let slow = reference_rhs(&m, &rho);
            assert!((fast.clone() - slow).iter().all(|z| z.norm() < 1e-12));
            assert!(fast.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_special_cases() {
        let mut p = PhysicalParams::new(0.0, 0.1, 0.2, 1.0).unwrap();
        let m = pair(1.0, p);
        assert!(m.lindblad_rhs(&m.ground_state()).unwrap().iter().all(|z| z.norm() == 0.0));
        p.omega = 1.0;
        p.gamma_r = 0.0;
        p.gamma_z = 0.0;
        let m = pair(1.0, p);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_rho(4, &mut rng);
        let h = m.hamiltonian();
        let commutator = (h * &rho - &rho * h) * c(0.0, -1.0);
        assert!((m.lindblad_rhs(&rho).unwrap() - commutator).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn single_atom_steady_state() {
        let p = PhysicalParams::reference();
        let m = single(p);
        let rho = m.steady_state().unwrap();
        let expected = p.single_atom_steady_population();
        assert!((rho.elements()[(1, 1)].re - expected).abs() < 1e-6, "{}", rho.elements()[(1, 1)].re);
        // Bloch-equation closed form, independently: ρ_rr = 2Ω²/(Γ_r γ_rg + 4Ω²).
        let closed = 2.0 / (0.075 * (0.0375 + 0.6) + 4.0);
        assert!((expected - closed).abs() < 1e-15 && (closed - 0.4941).abs() < 1e-4);
        rho.validate().unwrap();
    }

    #[test]
    fn independent_and_blockaded_pairs() {
        let times: Vec<f64> = (1..=20).map(|k| 0.15 * k as f64).collect();
        let p = PhysicalParams::new(1.0, 0.0, 0.0, 1.0).unwrap();
        let far = pair(20.0, p).integrate(&pair(20.0, p).ground_state(), &times).unwrap();
        let near = pair(0.1, p).integrate(&pair(0.1, p).ground_state(), &times).unwrap();
        for (k, &t) in times.iter().enumerate() {
            assert!((mean_n(&far.states[k]) - 2.0 * t.sin().powi(2)).abs() < 1e-6);
            // Δ = 10⁶ at r = 0.1 suppresses |rr⟩ to O(Ω²/Δ²).
            assert!((mean_n(&near.states[k]) - (2f64.sqrt() * t).sin().powi(2)).abs() < 1e-4);
        }
        assert!(far.max_hermiticity_defect < 1e-10);
    }

    #[test]
    fn trace_and_purity() {
        let times: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
        let mut p = PhysicalParams::new(1.0, 0.3, 0.2, 1.5).unwrap();
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]], 1.0, 2.0).unwrap();
        let m = LindbladModel::build(&g, &p).unwrap();
        let run = m.integrate(&m.ground_state(), &times).unwrap();
        for rho in &run.states {
            assert!((rho.trace().re - 1.0).abs() < 1e-9);
            rho.validate().unwrap();
        }
        assert!(run.max_hermiticity_defect < 1e-10);
        p.gamma_r = 0.0;
        p.gamma_z = 0.0;
        let m = LindbladModel::build(&g, &p).unwrap();
        let run = m.integrate(&m.ground_state(), &times).unwrap();
        for rho in &run.states {
            let e = rho.elements();
            let purity = (e * e).trace().re;
            assert!((purity - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let m = single(PhysicalParams::reference());
        assert!(m.integrate(&DMatrix::zeros(3, 3), &[1.0]).is_err());
        assert!(m.integrate(&m.ground_state(), &[2.0, 1.0]).is_err());
    }
}
