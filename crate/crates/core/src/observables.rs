// SPDX-License-Identifier: Apache-2.0

//! Excitation statistics, configuration distributions and density matrices.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BasisSet, Configuration, StateVector};

/// Tolerance on Σp = 1 for every probability container.
pub const NORMALIZATION_TOL: f64 = 1e-9;

fn check_probabilities(values: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in values {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::Numeric(format!("invalid probability {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Unnormalized(total));
    }
    Ok(())
}

/// p_R(n) for n = 0..=n_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationDistribution {
    probs: Vec<f64>,
}

impl ExcitationDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Numeric("empty excitation distribution".into()));
        }
        check_probabilities(probs.iter().copied())?;
        Ok(ExcitationDistribution { probs })
    }

    /// Wraps accumulated data without the normalization check.
    pub fn new_unchecked(probs: Vec<f64>) -> Self {
        ExcitationDistribution { probs }
    }

    /// Block sums of |amplitude|² over the n-excitation blocks of `basis`.
    pub fn from_amplitudes(basis: &BasisSet, amps: &[Complex64]) -> Self {
        let mut probs = vec![0.0; basis.n_max() + 1];
        for (k, p) in probs.iter_mut().enumerate() {
            *p = amps[basis.block(k)].iter().map(|a| a.norm_sqr()).sum();
        }
        ExcitationDistribution { probs }
    }

    pub fn from_state(state: &StateVector) -> Result<Self> {
        check_normalized(state.norm_sqr())?;
        Ok(Self::from_amplitudes(state.basis(), state.amplitudes()))
    }

    /// Poisson distribution with the given mean, cut where the remaining
    /// tail mass drops below `tail` and renormalized over the kept terms.
    pub fn poisson(mean: f64, tail: f64) -> Self {
        let mut probs = Vec::new();
        let mut term = (-mean).exp();
        let mut cumulative = 0.0;
        let mut n = 0usize;
        loop {
            probs.push(term);
            cumulative += term;
            n += 1;
            if 1.0 - cumulative < tail && n as f64 > mean {
                break;
            }
            term *= mean / n as f64;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        ExcitationDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| (n * n) as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// Q = (⟨n²⟩ − ⟨n⟩²)/⟨n⟩ − 1.
    pub fn mandel_q(&self) -> Result<f64> {
        let m = self.mean();
        if !(m > 0.0) {
            return Err(Error::UndefinedQ);
        }
        Ok(self.variance() / m - 1.0)
    }

    /// JSON object keyed by the excitation number.
    pub fn to_json_map(&self) -> BTreeMap<String, f64> {
        self.probs.iter().enumerate().map(|(n, p)| (n.to_string(), *p)).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, f64> = serde_json::from_str(text)?;
        let mut probs = Vec::new();
        for (key, p) in map {
            let n: usize = key
                .parse()
                .map_err(|_| Error::Config(format!("excitation number key {key:?} is not an integer")))?;
            if n > crate::hilbert::MAX_ATOMS {
                return Err(Error::Config(format!("excitation number {n} exceeds {}", crate::hilbert::MAX_ATOMS)));
            }
            if probs.len() <= n {
                probs.resize(n + 1, 0.0);
            }
            probs[n] = p;
        }
        Self::new(probs)
    }
}

fn check_normalized(n2: f64) -> Result<()> {
    if (n2 - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Unnormalized(n2));
    }
    Ok(())
}

/// ⟨n_R⟩ = Σ |amplitude|² n_exc of a normalized state.
pub fn mean_excitations(state: &StateVector) -> Result<f64> {
    check_normalized(state.norm_sqr())?;
    Ok(state
        .amplitudes()
        .iter()
        .zip(state.basis().configs())
        .map(|(a, c)| a.norm_sqr() * c.n_exc() as f64)
        .sum())
}

/// Probabilities of excitation configurations; absent keys have probability zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigurationDistribution {
    probs: BTreeMap<u64, f64>,
}

impl ConfigurationDistribution {
    pub fn new(probs: BTreeMap<u64, f64>) -> Result<Self> {
        check_probabilities(probs.values().copied())?;
        Ok(ConfigurationDistribution { probs })
    }

    /// From basis-indexed probabilities; zero entries are dropped.
    pub fn from_basis_probs(configs: &[Configuration], probs: &[f64]) -> Result<Self> {
        if configs.len() != probs.len() {
            return Err(Error::BasisMismatch);
        }
        let map = configs
            .iter()
            .zip(probs)
            .filter(|(_, &p)| p != 0.0)
            .map(|(c, &p)| (c.bits(), p))
            .collect();
        Self::new(map)
    }

    pub fn from_state(state: &StateVector) -> Result<Self> {
        let probs: Vec<f64> = state.amplitudes().iter().map(|a| a.norm_sqr()).collect();
        Self::from_basis_probs(state.basis().configs(), &probs)
    }

    pub fn get(&self, config: Configuration) -> f64 {
        self.probs.get(&config.bits()).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Configuration, f64)> + '_ {
        self.probs.iter().map(|(&b, &p)| (Configuration(b), p))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Groups configurations by excitation number.
    pub fn marginal(&self, n_max: usize) -> ExcitationDistribution {
        let mut probs = vec![0.0; n_max + 1];
        for (c, p) in self.iter() {
            let n = c.n_exc();
            if n >= probs.len() {
                probs.resize(n + 1, 0.0);
            }
            probs[n] += p;
        }
        ExcitationDistribution::new_unchecked(probs)
    }

    /// JSON object keyed by the configuration bitmask as a decimal string.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<String, f64> = self.probs.iter().map(|(b, p)| (b.to_string(), *p)).collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, f64> = serde_json::from_str(text)?;
        let mut map = BTreeMap::new();
        for (key, p) in raw {
            let bits: u64 = key
                .parse()
                .map_err(|_| Error::Config(format!("configuration key {key:?} is not a decimal bitmask")))?;
            map.insert(bits, p);
        }
        Self::new(map)
    }
}

/// D_p = ½ Σ_σ |p_σ − q_σ| over the union of both supports.
pub fn kolmogorov_distance(p: &ConfigurationDistribution, q: &ConfigurationDistribution) -> f64 {
    let mut sum = 0.0;
    for (&b, &x) in &p.probs {
        sum += (x - q.probs.get(&b).copied().unwrap_or(0.0)).abs();
    }
    for (&b, &y) in &q.probs {
        if !p.probs.contains_key(&b) {
            sum += y.abs();
        }
    }
    0.5 * sum
}

/// Same distance for two vectors over a shared index set (the shorter one
/// is padded with zeros).
pub fn kolmogorov_distance_slices(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Density matrix over an explicit list of configurations; row/column `i`
/// refers to `configs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    configs: Vec<Configuration>,
    elements: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Wraps a matrix without validation.
    pub fn from_matrix(configs: Vec<Configuration>, elements: DMatrix<Complex64>) -> Result<Self> {
        if elements.nrows() != configs.len() || elements.ncols() != configs.len() {
            return Err(Error::BasisMismatch);
        }
        Ok(DensityMatrix { configs, elements })
    }

    pub fn from_row_major(configs: Vec<Configuration>, data: &[Complex64]) -> Result<Self> {
        let d = configs.len();
        if data.len() != d * d {
            return Err(Error::BasisMismatch);
        }
        Self::from_matrix(configs, DMatrix::from_row_slice(d, d, data))
    }

    pub fn from_pure(state: &StateVector) -> Result<Self> {
        check_normalized(state.norm_sqr())?;
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        Self::from_matrix(state.basis().configs().to_vec(), &v * v.adjoint())
    }

    /// Full 2^N space with row index = configuration bitmask.
    pub fn bit_order_configs(n_atoms: usize) -> Vec<Configuration> {
        (0..1u64 << n_atoms).map(Configuration).collect()
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn trace(&self) -> Complex64 {
        self.elements.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.elements[(i, j)] - self.elements[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if self.elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite density matrix entry".into()));
        }
        let h = hermitian_part(&self.elements);
        let eig = nalgebra::SymmetricEigen::try_new(h, 1e-14, 10_000)
            .ok_or_else(|| Error::Numeric("Hermitian eigensolver did not converge".into()))?;
        Ok(eig.eigenvalues.iter().copied().collect())
    }

    /// Hermitian to 1e-12, unit trace to 1e-9, eigenvalues ≥ −1e-9.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > 1e-12 {
            return Err(Error::Numeric(format!("density matrix not Hermitian (defect {herm:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > NORMALIZATION_TOL || tr.im.abs() > NORMALIZATION_TOL {
            return Err(Error::Unnormalized(tr.re));
        }
        let min = self.eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min);
        if min < -1e-9 {
            return Err(Error::Numeric(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Diagonal part in the product basis.
    pub fn classical_projection(&self) -> DensityMatrix {
        let d = self.dim();
        let elements = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                self.elements[(i, i)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        DensityMatrix {
            configs: self.configs.clone(),
            elements,
        }
    }

    /// ½ Σ |eigenvalues of (self − other)|.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.configs != other.configs {
            return Err(Error::BasisMismatch);
        }
        trace_norm_half(&(&self.elements - &other.elements))
    }

    pub fn mean_excitations(&self) -> f64 {
        self.configs
            .iter()
            .enumerate()
            .map(|(i, c)| self.elements[(i, i)].re * c.n_exc() as f64)
            .sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.elements[(i, i)].re).collect()
    }

    pub fn configuration_distribution(&self) -> Result<ConfigurationDistribution> {
        let diag: Vec<f64> = self.diagonal().into_iter().map(|p| p.max(0.0)).collect();
        ConfigurationDistribution::from_basis_probs(&self.configs, &diag)
    }

    pub fn excitation_distribution(&self, n_max: usize) -> Result<ExcitationDistribution> {
        Ok(self.configuration_distribution()?.marginal(n_max))
    }

    /// Re-expresses the matrix over the full 2^N bit-ordered space; entries
    /// for configurations outside `configs` are zero.
    pub fn to_bit_order(&self, n_atoms: usize) -> Result<DensityMatrix> {
        if n_atoms > 16 {
            return Err(Error::Capacity {
                required_bytes: 16u128 << (2 * n_atoms),
                cap_bytes: 16u128 << 32,
            });
        }
        if self.configs.iter().any(|c| c.bits() >> n_atoms != 0) {
            return Err(Error::BasisMismatch);
        }
        let full = 1usize << n_atoms;
        let mut elements = DMatrix::zeros(full, full);
        for (i, ci) in self.configs.iter().enumerate() {
            for (j, cj) in self.configs.iter().enumerate() {
                elements[(ci.bits() as usize, cj.bits() as usize)] = self.elements[(i, j)];
            }
        }
        Ok(DensityMatrix {
            configs: Self::bit_order_configs(n_atoms),
            elements,
        })
    }
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn trace_norm_half(diff: &DMatrix<Complex64>) -> Result<f64> {
    if diff.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("non-finite density matrix entry".into()));
    }
    let eig = nalgebra::SymmetricEigen::try_new(hermitian_part(diff), 1e-14, 10_000)
        .ok_or_else(|| Error::Numeric("Hermitian eigensolver did not converge".into()))?;
    Ok(0.5 * eig.eigenvalues.iter().map(|e| e.abs()).sum::<f64>())
}

/// Trapezoidal time average of |ψ(t)⟩⟨ψ(t)| over the snapshots with t ≥ t0.
pub fn steady_state_time_average(
    configs: &[Configuration],
    times: &[f64],
    states: &[Vec<Complex64>],
    t0: f64,
) -> Result<DensityMatrix> {
    if times.len() != states.len() {
        return Err(Error::InvalidTimeWindow("one snapshot per sample time required".into()));
    }
    let t_end = *times.last().ok_or_else(|| Error::InvalidTimeWindow("no samples".into()))?;
    if t0 >= t_end {
        return Err(Error::InvalidTimeWindow(format!("burn-in {t0} is not before the last sample {t_end}")));
    }
    let weights = crate::mcwf::trapezoid_weights(times, t0)?;
    let d = configs.len();
    let mut rho = DMatrix::<Complex64>::zeros(d, d);
    for (w, psi) in weights.iter().zip(states) {
        if *w == 0.0 {
            continue;
        }
        if psi.len() != d {
            return Err(Error::BasisMismatch);
        }
        let v = nalgebra::DVector::from_column_slice(psi);
        rho += (&v * v.adjoint()) * Complex64::new(*w, 0.0);
    }
    DensityMatrix::from_matrix(configs.to_vec(), rho)
}

/// Spread of the trace distance under resampling of the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Mean over resamples of D(ρ*, ρ̂).
    pub mean: f64,
    pub std: f64,
    pub resamples: usize,
}

/// Bootstrap estimate of the statistical trace-distance error of
/// ρ̂ = (1/M) Σ_m |ψ_m⟩⟨ψ_m|: trajectories are resampled with replacement
/// and D(ρ*, ρ̂) is averaged over `resamples` draws.
pub fn bootstrap_trace_distance(states: &[&[Complex64]], resamples: usize, seed: u64) -> Result<BootstrapSummary> {
    let m = states.len();
    if m == 0 || resamples == 0 {
        return Err(Error::Numeric("bootstrap needs at least one state and one resample".into()));
    }
    let d = states[0].len();
    if states.iter().any(|s| s.len() != d) {
        return Err(Error::BasisMismatch);
    }
    let psi = DMatrix::from_fn(d, m, |i, j| states[j][i]);
    let psi_adj = psi.adjoint();
    let inv_m = Complex64::new(1.0 / m as f64, 0.0);
    let rho_hat = (&psi * &psi_adj) * inv_m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(resamples);
    let mut counts = vec![0u32; m];
    for _ in 0..resamples {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..m {
            counts[rng.random_range(0..m)] += 1;
        }
        let mut weighted = psi.clone();
        for (j, &c) in counts.iter().enumerate() {
            weighted.column_mut(j).scale_mut(c as f64);
        }
        let rho_star = (&weighted * &psi_adj) * inv_m;
        values.push(trace_norm_half(&(rho_star - &rho_hat))?);
    }
    let mean = values.iter().sum::<f64>() / resamples as f64;
    let var = if resamples > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64
    } else {
        0.0
    };
    Ok(BootstrapSummary {
        mean,
        std: var.sqrt(),
        resamples,
    })
}

/// One named column of a time-series table.
pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Writes a CSV table with a leading `t` column.
pub fn write_time_series_csv(out: &mut dyn Write, times: &[f64], columns: &[Series<'_>]) -> std::io::Result<()> {
    write!(out, "t")?;
    for c in columns {
        write!(out, ",{}", c.name)?;
    }
    writeln!(out)?;
    for (k, t) in times.iter().enumerate() {
        write!(out, "{t}")?;
        for c in columns {
            write!(out, ",{}", c.values[k])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
