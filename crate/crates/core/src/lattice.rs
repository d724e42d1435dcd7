// SPDX-License-Identifier: Apache-2.0

//! Atom geometry, physical parameters and the derived scales of the driven
//! Rydberg ensemble.
//!
//! Rates and frequencies are angular (rad per unit time). The rest of the
//! crate works in natural units where the Rabi frequency is 1 and time is
//! measured in inverse Rabi frequencies; see [`PhysicalParams::in_omega_units`].

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rabi frequency of the reference experiment, 2π × 85 kHz, in rad/s.
pub const REFERENCE_OMEGA_SI: f64 = TAU * 85.0e3;

/// Drive, decay and interaction strengths of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Rabi frequency of the ground–Rydberg drive.
    pub omega: f64,
    /// Population decay rate of the Rydberg state.
    pub gamma_r: f64,
    /// Relaxation rate of the ground–Rydberg coherence.
    pub gamma_z: f64,
    /// van der Waals coefficient (frequency × length⁶).
    pub c6: f64,
}

/// Excitation linewidth together with the validity flag of the formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linewidth {
    pub value: f64,
    /// `false` when Ω² ≤ Γ_r γ_rg, outside the regime where the formula holds.
    pub valid: bool,
}

impl PhysicalParams {
    pub fn new(omega: f64, gamma_r: f64, gamma_z: f64, c6: f64) -> Result<Self> {
        let p = PhysicalParams {
            omega,
            gamma_r,
            gamma_z,
            c6,
        };
        p.validate()?;
        Ok(p)
    }

    /// Reference parameter set in units of Ω: Γ_r = 0.075Ω, Γ_z = 0.3Ω, and
    /// C_6 chosen so that the blockade distance is one length unit.
    pub fn reference() -> Self {
        let mut p = PhysicalParams {
            omega: 1.0,
            gamma_r: 0.075,
            gamma_z: 0.3,
            c6: 1.0,
        };
        p.c6 = p.excitation_linewidth().expect("gamma_r > 0").value;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega, self.gamma_r, self.gamma_z, self.c6]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidParams(format!("omega must be >= 0, got {}", self.omega)));
        }
        if self.gamma_r < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma_r must be >= 0, got {}",
                self.gamma_r
            )));
        }
        if self.gamma_z < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma_z must be >= 0, got {}",
                self.gamma_z
            )));
        }
        if self.c6 <= 0.0 {
            return Err(Error::InvalidParams(format!("c6 must be > 0, got {}", self.c6)));
        }
        Ok(())
    }

    /// Same physics with every frequency divided by Ω (lengths untouched).
    /// Requires Ω > 0.
    pub fn in_omega_units(&self) -> Self {
        PhysicalParams {
            omega: 1.0,
            gamma_r: self.gamma_r / self.omega,
            gamma_z: self.gamma_z / self.omega,
            c6: self.c6 / self.omega,
        }
    }

    /// Total decay rate of the ground–Rydberg coherence, ½Γ_r + 2Γ_z.
    pub fn gamma_rg(&self) -> f64 {
        0.5 * self.gamma_r + 2.0 * self.gamma_z
    }

    pub fn linewidth_condition_holds(&self) -> bool {
        self.omega * self.omega > self.gamma_r * self.gamma_rg()
    }

    /// Steady-state excitation linewidth of an isolated atom, 2Ω√(γ_rg/Γ_r).
    pub fn excitation_linewidth(&self) -> Result<Linewidth> {
        if self.gamma_r <= 0.0 {
            return Err(Error::UndefinedLinewidth);
        }
        let valid = self.linewidth_condition_holds();
        if !valid {
            log::warn!(
                "linewidth formula outside its validity range: omega^2 = {} <= gamma_r * gamma_rg = {}",
                self.omega * self.omega,
                self.gamma_r * self.gamma_rg()
            );
        }
        Ok(Linewidth {
            value: 2.0 * self.omega * (self.gamma_rg() / self.gamma_r).sqrt(),
            valid,
        })
    }

    /// Separation at which the vdW shift equals the excitation linewidth.
    pub fn blockade_distance(&self) -> Result<f64> {
        let w = self.excitation_linewidth()?.value;
        Ok((self.c6 / w).powf(1.0 / 6.0))
    }

    /// vdW level shift C_6 / r⁶ of a doubly excited pair at separation `r`.
    pub fn vdw_shift(&self, r: f64) -> f64 {
        self.c6 / r.powi(6)
    }

    /// Closed-form steady-state Rydberg population of a single resonantly
    /// driven atom, 2Ω²/(Γ_r γ_rg + 4Ω²).
    pub fn single_atom_steady_population(&self) -> f64 {
        let o2 = self.omega * self.omega;
        2.0 * o2 / (self.gamma_r * self.gamma_rg() + 4.0 * o2)
    }
}

/// Where the disk center sits relative to the square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    /// A lattice site at the disk center.
    Site,
    /// Disk center in the middle of a square of four sites.
    Plaquette,
}

impl CenterMode {
    fn offset(self) -> f64 {
        match self {
            CenterMode::Site => 0.0,
            CenterMode::Plaquette => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomGeometry {
    positions: Vec<[f64; 2]>,
    spacing: f64,
    diameter: f64,
}

impl AtomGeometry {
    /// Geometry from explicit positions. The disk is centered at the
    /// centroid of the positions and every position must lie inside it.
    pub fn from_positions(positions: Vec<[f64; 2]>, spacing: f64, diameter: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyGeometry);
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite coordinate".into()));
        }
        for (i, a) in positions.iter().enumerate() {
            if let Some(j) = positions[i + 1..].iter().position(|b| b == a) {
                return Err(Error::SingularDistance { i, j: i + 1 + j });
            }
        }
        if !(spacing > 0.0 && spacing.is_finite()) || !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "spacing and diameter must be positive and finite (got {spacing}, {diameter})"
            )));
        }
        let geometry = AtomGeometry {
            positions,
            spacing,
            diameter,
        };
        let [cx, cy] = geometry.centroid();
        let limit = 0.5 * diameter * (1.0 + 1e-12);
        for (i, p) in geometry.positions.iter().enumerate() {
            let r = (p[0] - cx).hypot(p[1] - cy);
            if r > limit {
                return Err(Error::InvalidGeometry(format!(
                    "atom {i} lies {r} from the centroid, outside the disk of diameter {diameter}"
                )));
            }
        }
        Ok(geometry)
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.positions.len() as f64;
        let (sx, sy) = self
            .positions
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        AtomGeometry {
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] * factor, p[1] * factor])
                .collect(),
            spacing: self.spacing * factor,
            diameter: self.diameter * factor,
        }
    }
}

/// Square lattice with constant `spacing`, clipped to the closed disk of the
/// given diameter. Sites are ordered row by row (y, then x).
pub fn build_disk_lattice(spacing: f64, diameter: f64, center: CenterMode) -> Result<AtomGeometry> {
    if !(spacing > 0.0 && spacing.is_finite()) || !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "spacing and diameter must be positive and finite (got {spacing}, {diameter})"
        )));
    }
    let radius = 0.5 * diameter;
    let limit = radius * (1.0 + 1e-12);
    let reach = (radius / spacing).ceil() as i64 + 1;
    let off = center.offset();
    let mut positions = Vec::new();
    for j in -reach..=reach {
        for i in -reach..=reach {
            let x = (i as f64 + off) * spacing;
            let y = (j as f64 + off) * spacing;
            if x.hypot(y) <= limit {
                positions.push([x, y]);
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    Ok(AtomGeometry {
        positions,
        spacing,
        diameter,
    })
}

/// Interval of lattice spacings `(lower, upper]` for which the clipped lattice
/// holds exactly `target` atoms, or `None` if no spacing gives that count.
pub fn spacing_interval_for_count(
    target: usize,
    diameter: f64,
    center: CenterMode,
) -> Option<(f64, f64)> {
    if target == 0 || !(diameter > 0.0) {
        return None;
    }
    let radius = 0.5 * diameter;
    // Site distances from the center in units of the spacing. A site at
    // normalized distance ρ is inside iff radius/spacing ≥ ρ.
    let reach = (target as f64).sqrt().ceil() as i64 + 2;
    let off = center.offset();
    let mut norms: Vec<f64> = Vec::new();
    for j in -reach..=reach {
        for i in -reach..=reach {
            let (x, y) = (i as f64 + off, j as f64 + off);
            norms.push(x * x + y * y);
        }
    }
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Group equal norms (exact in binary for these half-integer squares).
    let mut count = 0usize;
    let mut k = 0;
    while k < norms.len() {
        let shell = norms[k];
        let mut end = k;
        while end < norms.len() && norms[end] == shell {
            end += 1;
        }
        count += end - k;
        if count == target {
            if end >= norms.len() {
                return None;
            }
            let next = norms[end];
            return Some((radius / next.sqrt(), radius / shell.sqrt()));
        }
        if count > target {
            return None;
        }
        k = end;
    }
    None
}

/// Spacing in the middle of the admissible interval for `target` atoms. With
/// `center = None` site-centered filling is tried first, then plaquette.
pub fn spacing_for_count(
    target: usize,
    diameter: f64,
    center: Option<CenterMode>,
) -> Result<(f64, CenterMode)> {
    let modes: &[CenterMode] = match center {
        Some(CenterMode::Site) => &[CenterMode::Site],
        Some(CenterMode::Plaquette) => &[CenterMode::Plaquette],
        None => &[CenterMode::Site, CenterMode::Plaquette],
    };
    for &mode in modes {
        if let Some((lo, hi)) = spacing_interval_for_count(target, diameter, mode) {
            return Ok((0.5 * (lo + hi), mode));
        }
    }
    Err(Error::InvalidGeometry(format!(
        "no square-lattice filling of a disk holds exactly {target} atoms with center {center:?}"
    )))
}

/// Symmetric matrix of pairwise vdW shifts with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    delta: Vec<f64>,
}

impl InteractionMatrix {
    pub fn n_atoms(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.delta[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.delta[i * self.n..(i + 1) * self.n]
    }

    /// Total interaction energy Σ_{i<j} Δ_ij over the excited atoms of `bits`.
    pub fn energy(&self, bits: u64) -> f64 {
        let mut e = 0.0;
        let mut rest = bits;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let row = self.row(i);
            let mut others = rest;
            while others != 0 {
                let j = others.trailing_zeros() as usize;
                others &= others - 1;
                e += row[j];
            }
        }
        e
    }

    /// Matrix from explicit entries; used by tests and custom models.
    pub fn from_entries(n: usize, delta: Vec<f64>) -> Result<Self> {
        if delta.len() != n * n {
            return Err(Error::InvalidGeometry(format!(
                "interaction matrix needs {} entries, got {}",
                n * n,
                delta.len()
            )));
        }
        Ok(InteractionMatrix { n, delta })
    }
}

pub fn interaction_matrix(geometry: &AtomGeometry, params: &PhysicalParams) -> Result<InteractionMatrix> {
    let n = geometry.n_atoms();
    let mut delta = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = geometry.distance(i, j);
            if r == 0.0 {
                return Err(Error::SingularDistance { i, j });
            }
            let shift = params.vdw_shift(r);
            if !shift.is_finite() {
                return Err(Error::SingularDistance { i, j });
            }
            delta[i * n + j] = shift;
            delta[j * n + i] = shift;
        }
    }
    Ok(InteractionMatrix { n, delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthUnit {
    #[serde(rename = "um")]
    Micrometre,
    /// Lengths measured in blockade distances.
    #[serde(rename = "d_b")]
    BlockadeDistance,
}

/// JSON interchange form of a geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub spacing: f64,
    pub diameter: f64,
    pub positions: Vec<[f64; 2]>,
    #[serde(default = "default_length_unit")]
    pub length_unit: LengthUnit,
}

fn default_length_unit() -> LengthUnit {
    LengthUnit::BlockadeDistance
}

impl GeometryFile {
    pub fn from_geometry(geometry: &AtomGeometry, length_unit: LengthUnit) -> Self {
        GeometryFile {
            spacing: geometry.spacing,
            diameter: geometry.diameter,
            positions: geometry.positions.clone(),
            length_unit,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_geometry(&self) -> Result<AtomGeometry> {
        AtomGeometry::from_positions(self.positions.clone(), self.spacing, self.diameter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    fn si_params(gamma_z_ratio: f64, c6_ghz: f64) -> PhysicalParams {
        let omega = REFERENCE_OMEGA_SI;
        PhysicalParams::new(omega, 0.075 * omega, gamma_z_ratio * omega, TAU * c6_ghz * 1e9).unwrap()
    }

    // Independent count: brute-force every integer pair in a generous box.
    fn brute_count(spacing: f64, diameter: f64, center: CenterMode) -> usize {
        let off = if center == CenterMode::Site { 0.0 } else { 0.5 };
        let r = diameter / 2.0;
        let mut n = 0;
        for i in -200..=200 {
            for j in -200..=200 {
                let x = (i as f64 + off) * spacing;
                let y = (j as f64 + off) * spacing;
                if x * x + y * y <= r * r * (1.0 + 1e-12) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn gamma_rg_examples() {
        let p = PhysicalParams::new(1.0, 0.075, 0.3, 1.0).unwrap();
        assert!((p.gamma_rg() - 0.6375).abs() < 1e-15);
        let p = PhysicalParams::new(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(p.gamma_rg(), 0.0);
        let p = PhysicalParams::new(1.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(p.gamma_rg(), 1.0);
    }

    #[test]
    fn linewidth_matches_reference_values() {
        let w = si_params(0.3, 1.0).excitation_linewidth().unwrap();
        assert!(w.valid);
        assert!(rel_close(w.value / TAU, 0.5e6, 0.01), "{}", w.value / TAU);
        let w0 = si_params(0.0, 1.0).excitation_linewidth().unwrap();
        assert!(rel_close(w0.value / TAU, 120e3, 0.01), "{}", w0.value / TAU);
    }

    #[test]
    fn linewidth_half_ratio_gives_sqrt2_omega() {
        for k in [0.1, 0.25, 0.4] {
            let p = PhysicalParams::new(1.0, 2.0 * k, 0.0, 1.0).unwrap();
            let w = p.excitation_linewidth().unwrap().value;
            assert!((w - 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn linewidth_undefined_without_decay() {
        let p = PhysicalParams::new(1.0, 0.0, 0.3, 1.0).unwrap();
        assert!(matches!(p.excitation_linewidth(), Err(Error::UndefinedLinewidth)));
        assert!(matches!(p.blockade_distance(), Err(Error::UndefinedLinewidth)));
    }

    #[test]
    fn invalid_linewidth_regime_is_flagged_not_rejected() {
        let p = PhysicalParams::new(0.1, 1.0, 1.0, 1.0).unwrap();
        let w = p.excitation_linewidth().unwrap();
        assert!(!w.valid);
    }

    #[test]
    fn blockade_distance_range() {
        let d1 = si_params(0.3, 1.0).blockade_distance().unwrap();
        let d15 = si_params(0.3, 15.0).blockade_distance().unwrap();
        assert!((d1 - 3.5).abs() < 0.1, "{d1}");
        assert!((d15 - 5.6).abs() < 0.1, "{d15}");
        let mut p = PhysicalParams::reference();
        p.c6 = p.excitation_linewidth().unwrap().value;
        assert!((p.blockade_distance().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PhysicalParams::new(-1.0, 0.1, 0.1, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, -0.1, 0.1, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 0.1, -0.1, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 0.1, 0.1, 0.0).is_err());
        assert!(PhysicalParams::new(f64::NAN, 0.1, 0.1, 1.0).is_err());
    }

    #[test]
    fn lattice_half_diameter_spacing_holds_five_sites() {
        // Axis neighbours sit exactly on the rim, diagonals fall outside.
        let d = 0.7;
        let g = build_disk_lattice(d / 2.0, d, CenterMode::Site).unwrap();
        assert_eq!(brute_count(d / 2.0, d, CenterMode::Site), 5);
        assert_eq!(g.n_atoms(), 5);
        let g = build_disk_lattice(d / (2.0 * 2f64.sqrt()), d, CenterMode::Site).unwrap();
        assert_eq!(g.n_atoms(), 9);
    }

    #[test]
    fn oversize_spacing_keeps_center_only() {
        let g = build_disk_lattice(2.0, 1.0, CenterMode::Site).unwrap();
        assert_eq!(g.n_atoms(), 1);
        assert!(matches!(
            build_disk_lattice(2.0, 1.0, CenterMode::Plaquette),
            Err(Error::EmptyGeometry)
        ));
    }

    #[test]
    fn spacing_sweep_hits_reference_counts() {
        let s2 = 2f64.sqrt();
        for (n, d, mode) in [
            (12, 1.0, CenterMode::Plaquette),
            (21, s2, CenterMode::Site),
            (37, 2.0, CenterMode::Site),
            (9, 0.7, CenterMode::Site),
            (16, 0.7, CenterMode::Plaquette),
            (25, 0.7, CenterMode::Site),
            (45, 0.7, CenterMode::Site),
        ] {
            let (lo, hi) = spacing_interval_for_count(n, d, mode).unwrap();
            assert_eq!(brute_count(hi, d, mode), n);
            assert_eq!(brute_count(0.5 * (lo + hi), d, mode), n);
            assert!(brute_count(lo * (1.0 - 1e-9), d, mode) > n);
            let (a, m) = spacing_for_count(n, d, None).unwrap();
            assert_eq!(m, mode);
            assert_eq!(build_disk_lattice(a, d, m).unwrap().n_atoms(), n);
        }
        assert!(spacing_for_count(10, 1.0, Some(CenterMode::Site)).is_err());
    }

    #[test]
    fn interaction_examples() {
        let p = PhysicalParams::reference();
        let w = p.excitation_linewidth().unwrap().value;
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0], [1.0, 0.0]], 1.0, 1.0).unwrap();
        let m = interaction_matrix(&g, &p).unwrap();
        assert!(rel_close(m.get(0, 1), w, 1e-12));
        let g = g.scaled(0.7);
        let m = interaction_matrix(&g, &p).unwrap();
        assert!(rel_close(m.get(0, 1) / w, 0.7f64.powi(-6), 1e-12));
        assert!((m.get(0, 1) / w - 8.50).abs() < 0.01);
        let g = AtomGeometry::from_positions(vec![[0.0, 0.0]], 1.0, 1.0).unwrap();
        assert_eq!(interaction_matrix(&g, &p).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn coincident_atoms_rejected() {
        assert!(matches!(
            AtomGeometry::from_positions(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], 1.0, 2.0),
            Err(Error::SingularDistance { i: 0, j: 2 })
        ));
    }

    #[test]
    fn explicit_positions_must_fit_disk() {
        assert!(AtomGeometry::from_positions(vec![[0.0, 0.0], [3.0, 0.0]], 1.0, 2.0).is_err());
        assert!(AtomGeometry::from_positions(vec![], 1.0, 2.0).is_err());
    }

    #[test]
    fn geometry_json_round_trip() {
        let g = build_disk_lattice(0.3, 1.0, CenterMode::Plaquette).unwrap();
        let file = GeometryFile::from_geometry(&g, LengthUnit::BlockadeDistance);
        let back = GeometryFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_geometry().unwrap(), g);
        assert!(GeometryFile::from_json(r#"{"spacing":1,"diameter":1,"positions":[],"x":1}"#).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn disk_membership_and_spacing(spacing in 0.05f64..2.0, diameter in 0.1f64..4.0, plaq in any::<bool>()) {
                let mode = if plaq { CenterMode::Plaquette } else { CenterMode::Site };
                if let Ok(g) = build_disk_lattice(spacing, diameter, mode) {
                    for p in g.positions() {
                        prop_assert!(p[0].hypot(p[1]) <= diameter / 2.0 + 1e-12 * diameter);
                    }
                    for i in 0..g.n_atoms() {
                        for j in (i + 1)..g.n_atoms() {
                            prop_assert!(g.distance(i, j) >= spacing * (1.0 - 1e-12));
                        }
                    }
                }
            }

            #[test]
            fn count_monotone_in_diameter(spacing in 0.1f64..1.0, d in 0.1f64..3.0, extra in 0.0f64..1.0) {
                let n = |d| build_disk_lattice(spacing, d, CenterMode::Site).map(|g| g.n_atoms()).unwrap_or(0);
                prop_assert!(n(d + extra) >= n(d));
            }

            #[test]
            fn shifts_scale_as_inverse_sixth_power(s in 0.2f64..5.0) {
                let p = PhysicalParams::reference();
                let g = build_disk_lattice(0.3, 1.0, CenterMode::Site).unwrap();
                let a = interaction_matrix(&g, &p).unwrap();
                let b = interaction_matrix(&g.scaled(s), &p).unwrap();
                for i in 0..g.n_atoms() {
                    for j in 0..g.n_atoms() {
                        let expect = a.get(i, j) * s.powi(-6);
                        prop_assert!((b.get(i, j) - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
                        prop_assert_eq!(a.get(i, j), a.get(j, i));
                    }
                }
            }

            #[test]
            fn shift_at_blockade_distance_is_linewidth(gr in 0.01f64..1.0, gz in 0.0f64..1.0, c6 in 0.1f64..1e4) {
                let p = PhysicalParams::new(1.0, gr, gz, c6).unwrap();
                let w = p.excitation_linewidth().unwrap().value;
                let db = p.blockade_distance().unwrap();
                prop_assert!((p.vdw_shift(db) - w).abs() <= 1e-12 * w);
            }
        }
    }
}
