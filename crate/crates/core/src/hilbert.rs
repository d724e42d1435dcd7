// SPDX-License-Identifier: Apache-2.0

//! Excitation-number-truncated configuration basis.
//!
//! Configurations are ordered by excitation number, then by bitmask. Inside
//! one excitation block the bitmask order coincides with colexicographic
//! order of the excited-atom sets, so the combinatorial number system gives
//! the rank directly.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::InteractionMatrix;

pub const MAX_ATOMS: usize = 64;

/// Default memory cap for a basis and one state vector over it.
pub const DEFAULT_MEMORY_CAP_BYTES: u128 = 8 << 30;

/// Bytes per basis element: the configuration word, the dense index map
/// entry and one complex amplitude.
const BYTES_PER_CONFIG: u128 = 8 + 4 + 16;

/// Bit `j` set iff atom `j` is in the Rydberg state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration(pub u64);

impl Configuration {
    pub const GROUND: Configuration = Configuration(0);

    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn n_exc(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_excited(self, atom: usize) -> bool {
        self.0 >> atom & 1 == 1
    }

    /// Configuration after the decay of atom `atom` to the ground state.
    pub fn lower(self, atom: usize) -> Result<Configuration> {
        if atom >= MAX_ATOMS || !self.is_excited(atom) {
            return Err(Error::InvalidLowering {
                bits: self.0,
                atom,
            });
        }
        Ok(Configuration(self.0 & !(1u64 << atom)))
    }

    #[inline]
    pub fn flip(self, atom: usize) -> Configuration {
        Configuration(self.0 ^ (1u64 << atom))
    }

    /// Indices of the excited atoms in increasing order.
    pub fn excited_atoms(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(j)
            }
        })
    }
}

/// Removes configurations whose total interaction energy exceeds `delta_cut`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneRule {
    pub delta_cut: f64,
}

/// Binomial coefficients C(n, k) for n, k ≤ 64.
struct Binomials {
    table: Vec<[u64; MAX_ATOMS + 1]>,
}

impl Binomials {
    fn new() -> Self {
        let mut table = vec![[0u64; MAX_ATOMS + 1]; MAX_ATOMS + 1];
        for n in 0..=MAX_ATOMS {
            table[n][0] = 1;
            for k in 1..=n {
                table[n][k] = table[n - 1][k - 1].saturating_add(if k <= n - 1 { table[n - 1][k] } else { 0 });
            }
        }
        Binomials { table }
    }

    #[inline]
    fn get(&self, n: usize, k: usize) -> u64 {
        if k > n {
            0
        } else {
            self.table[n][k]
        }
    }
}

fn binomials() -> &'static Binomials {
    static TABLE: std::sync::OnceLock<Binomials> = std::sync::OnceLock::new();
    TABLE.get_or_init(Binomials::new)
}

/// Number of configurations of `n` atoms with at most `n_max` excitations.
pub fn truncated_dimension(n_atoms: usize, n_max: usize) -> u128 {
    let b = binomials();
    (0..=n_max.min(n_atoms)).map(|k| b.get(n_atoms, k) as u128).sum()
}

/// Rank of `bits` among all `n_exc`-bit masks in increasing order.
fn colex_rank(bits: u64) -> u64 {
    let b = binomials();
    let mut rank = 0u64;
    let mut rest = bits;
    let mut i = 1;
    while rest != 0 {
        let pos = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        rank += b.get(pos, i);
        i += 1;
    }
    rank
}

/// Next larger integer with the same popcount (Gosper's hack), or `None`
/// past `limit_bits` bits.
fn next_same_popcount(x: u64, n_bits: usize) -> Option<u64> {
    let c = x & x.wrapping_neg();
    let (r, overflow) = x.overflowing_add(c);
    if overflow || r == 0 {
        return None;
    }
    let next = (((r ^ x) >> 2) / c) | r;
    if n_bits < 64 && next >> n_bits != 0 {
        None
    } else {
        Some(next)
    }
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    n_atoms: usize,
    n_max: usize,
    configs: Vec<Configuration>,
    /// `block_start[k]` is the first dense index with k excitations; one
    /// extra entry closes the last block.
    block_start: Vec<usize>,
    /// Offsets of the excitation blocks in the unpruned enumeration.
    full_block_start: Vec<u64>,
    /// Unpruned index → dense index, `u32::MAX` for pruned entries. Absent
    /// when nothing was pruned.
    dense_of_full: Option<Vec<u32>>,
    pruned: Vec<Configuration>,
    prune_rule: Option<PruneRule>,
}

pub struct BasisBuilder<'a> {
    n_atoms: usize,
    n_max: usize,
    prune: Option<(PruneRule, &'a InteractionMatrix)>,
    memory_cap: u128,
}

impl<'a> BasisBuilder<'a> {
    pub fn new(n_atoms: usize, n_max: usize) -> Self {
        BasisBuilder {
            n_atoms,
            n_max,
            prune: None,
            memory_cap: DEFAULT_MEMORY_CAP_BYTES,
        }
    }

    pub fn prune(mut self, rule: PruneRule, delta: &'a InteractionMatrix) -> Self {
        self.prune = Some((rule, delta));
        self
    }

    pub fn memory_cap(mut self, bytes: u128) -> Self {
        self.memory_cap = bytes;
        self
    }

    pub fn build(self) -> Result<BasisSet> {
        let BasisBuilder {
            n_atoms,
            n_max,
            prune,
            memory_cap,
        } = self;
        if n_atoms == 0 || n_atoms > MAX_ATOMS {
            return Err(Error::InvalidBasis(format!(
                "number of atoms must be in 1..={MAX_ATOMS}, got {n_atoms}"
            )));
        }
        if n_max == 0 || n_max > n_atoms {
            return Err(Error::InvalidBasis(format!(
                "n_max must be in 1..={n_atoms}, got {n_max}"
            )));
        }
        if let Some((rule, delta)) = prune {
            if delta.n_atoms() != n_atoms {
                return Err(Error::InvalidBasis(format!(
                    "interaction matrix is for {} atoms, basis for {n_atoms}",
                    delta.n_atoms()
                )));
            }
            if rule.delta_cut.is_nan() {
                return Err(Error::InvalidBasis("delta_cut is NaN".into()));
            }
        }
        let full_dim = truncated_dimension(n_atoms, n_max);
        let required = full_dim * BYTES_PER_CONFIG;
        if required > memory_cap || full_dim >= u32::MAX as u128 {
            return Err(Error::Capacity {
                required_bytes: required,
                cap_bytes: memory_cap,
            });
        }
        let full_dim = full_dim as usize;

        let b = binomials();
        let mut full_block_start = Vec::with_capacity(n_max + 2);
        let mut acc = 0u64;
        for k in 0..=n_max {
            full_block_start.push(acc);
            acc += b.get(n_atoms, k);
        }
        full_block_start.push(acc);

        let mut configs = Vec::with_capacity(if prune.is_some() { 0 } else { full_dim });
        let mut block_start = Vec::with_capacity(n_max + 2);
        let mut pruned = Vec::new();
        let mut dense_of_full = prune.map(|_| Vec::with_capacity(full_dim));
        for k in 0..=n_max {
            block_start.push(configs.len());
            let mut bits = if k == 0 { 0 } else { (u64::MAX) >> (64 - k) };
            loop {
                let c = Configuration(bits);
                let keep = match prune {
                    Some((rule, delta)) if k >= 2 => delta.energy(bits) <= rule.delta_cut,
                    _ => true,
                };
                if let Some(map) = dense_of_full.as_mut() {
                    map.push(if keep { configs.len() as u32 } else { u32::MAX });
                }
                if keep {
                    configs.push(c);
                } else {
                    pruned.push(c);
                }
                if k == 0 {
                    break;
                }
                match next_same_popcount(bits, n_atoms) {
                    Some(next) => bits = next,
                    None => break,
                }
            }
        }
        block_start.push(configs.len());
        // Nothing pruned: the combinatorial rank is already dense.
        if pruned.is_empty() {
            dense_of_full = None;
        }
        configs.shrink_to_fit();
        Ok(BasisSet {
            n_atoms,
            n_max,
            configs,
            block_start,
            full_block_start,
            dense_of_full,
            pruned,
            prune_rule: prune.map(|(rule, _)| rule),
        })
    }
}

impl BasisSet {
    /// Unpruned basis of `n_atoms` atoms with at most `n_max` excitations.
    pub fn truncated(n_atoms: usize, n_max: usize) -> Result<BasisSet> {
        BasisBuilder::new(n_atoms, n_max).build()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn pruned(&self) -> &[Configuration] {
        &self.pruned
    }

    pub fn prune_rule(&self) -> Option<PruneRule> {
        self.prune_rule
    }

    /// Dense index range of the configurations with `k` excitations.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        if k > self.n_max {
            return 0..0;
        }
        self.block_start[k]..self.block_start[k + 1]
    }

    pub fn rank(&self, config: Configuration) -> Result<usize> {
        self.try_rank(config).ok_or(Error::NotInBasis(config.0))
    }

    /// Like [`rank`](Self::rank) but `None` for configurations outside the basis.
    #[inline]
    pub fn try_rank(&self, config: Configuration) -> Option<usize> {
        let k = config.n_exc();
        if k > self.n_max || (self.n_atoms < 64 && config.0 >> self.n_atoms != 0) {
            return None;
        }
        let full = self.full_block_start[k] + colex_rank(config.0);
        match &self.dense_of_full {
            None => Some(full as usize),
            Some(map) => {
                let dense = map[full as usize];
                (dense != u32::MAX).then_some(dense as usize)
            }
        }
    }

    pub fn unrank(&self, index: usize) -> Result<Configuration> {
        self.configs.get(index).copied().ok_or(Error::IndexOutOfRange {
            index,
            dim: self.dim(),
        })
    }

    /// Lower `config` at `atom` and return the dense index of the result.
    pub fn lower_index(&self, config: Configuration, atom: usize) -> Result<usize> {
        self.rank(config.lower(atom)?)
    }
}

/// Complex amplitudes over a basis. The norm is not fixed: during no-jump
/// evolution it decays from 1.
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<BasisSet>,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// All atoms in the ground state.
    pub fn ground(basis: Arc<BasisSet>) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { basis, amps }
    }

    pub fn from_amplitudes(basis: Arc<BasisSet>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::BasisMismatch);
        }
        Ok(StateVector { basis, amps })
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n2 = self.norm_sqr();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::Unnormalized(n2));
        }
        let s = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= s);
        Ok(())
    }

    pub fn same_basis(&self, other: &Arc<BasisSet>) -> bool {
        Arc::ptr_eq(&self.basis, other)
    }
}

#[inline]
pub fn norm_sqr(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}
