// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration.
//!
//! Two unit systems are accepted. With `units = "omega"` (the default) all
//! rates are in units of Ω, times in Ω⁻¹, and, unless `params.c6` is given,
//! lengths in blockade distances. With `units = "si"` the drive is given as
//! `omega_khz` (Ω/2π), the interaction as `c6_ghz_um6` (C_6/2π), lengths in
//! μm and times in μs; everything is converted to Ω units on load.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{EffectiveHamiltonian, STABILITY_FACTOR};
use crate::error::{Error, Result};
use crate::hilbert::{BasisBuilder, BasisSet, PruneRule};
use crate::lattice::{
    build_disk_lattice, interaction_matrix, spacing_for_count, AtomGeometry, CenterMode, GeometryFile, InteractionMatrix,
    LengthUnit, PhysicalParams,
};
use crate::mcwf::StepOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Omega,
    Si,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    /// Γ_r/Ω.
    #[serde(default = "default_gamma_r")]
    pub gamma_r: f64,
    /// Γ_z/Ω.
    #[serde(default = "default_gamma_z")]
    pub gamma_z: f64,
    /// C_6 in Ω·(length unit)⁶; omitted means lengths are in d_b.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c6: Option<f64>,
    /// Ω/2π in kHz (SI mode; informational in Ω mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_khz: Option<f64>,
    /// C_6/2π in GHz·μm⁶ (SI mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c6_ghz_um6: Option<f64>,
}

fn default_gamma_r() -> f64 {
    0.075
}

fn default_gamma_z() -> f64 {
    0.3
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            gamma_r: default_gamma_r(),
            gamma_z: default_gamma_z(),
            c6: None,
            omega_khz: None,
            c6_ghz_um6: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterChoice {
    /// Site-centered if it can realize `target_n`, else plaquette-centered.
    #[default]
    Auto,
    Site,
    Plaquette,
}

impl CenterChoice {
    fn mode(self) -> Option<CenterMode> {
        match self {
            CenterChoice::Auto => None,
            CenterChoice::Site => Some(CenterMode::Site),
            CenterChoice::Plaquette => Some(CenterMode::Plaquette),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default)]
    pub center: CenterChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
    /// Geometry JSON file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    /// Maximal number of simultaneous excitations; default min(N, 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Configurations with interaction energy above `delta_cut · w` are dropped.
    #[serde(default = "default_delta_cut")]
    pub delta_cut: f64,
    #[serde(default = "default_true")]
    pub prune: bool,
    #[serde(default = "default_memory_cap")]
    pub memory_cap_gib: f64,
}

fn default_delta_cut() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

fn default_memory_cap() -> f64 {
    8.0
}

impl Default for BasisSection {
    fn default() -> Self {
        BasisSection {
            n_max: None,
            delta_cut: default_delta_cut(),
            prune: true,
            memory_cap_gib: default_memory_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_factor: Option<f64>,
}

fn default_t_end() -> f64 {
    20.0
}

fn default_samples() -> usize {
    400
}

fn default_trajectories() -> usize {
    200
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: default_t_end(),
            samples: default_samples(),
            trajectories: default_trajectories(),
            master_seed: 0,
            workers: None,
            stability_factor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySection {
    #[serde(default = "default_steady_t_end")]
    pub t_end: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_steady_samples")]
    pub samples: usize,
    /// Independent long trajectories; the first one alone gives the
    /// single-trajectory estimate.
    #[serde(default = "default_steady_trajectories")]
    pub trajectories: usize,
}

fn default_steady_t_end() -> f64 {
    240.0
}

fn default_burn_in() -> f64 {
    40.0
}

fn default_steady_samples() -> usize {
    2000
}

fn default_steady_trajectories() -> usize {
    4
}

impl Default for SteadySection {
    fn default() -> Self {
        SteadySection {
            t_end: default_steady_t_end(),
            burn_in: default_burn_in(),
            samples: default_steady_samples(),
            trajectories: default_steady_trajectories(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Accumulate density matrices (dim ≤ 4096) and report D_ρ.
    #[serde(default)]
    pub density_matrix: bool,
    /// Write configuration distributions.
    #[serde(default)]
    pub configurations: bool,
    /// Steady-state configuration distribution (JSON) for the D_p(t) column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_reference: Option<PathBuf>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            density_matrix: false,
            configurations: false,
            steady_reference: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Atom number at fixed diameter (`geometry.target_n` is replaced).
    N,
    /// Disk diameter at fixed spacing or atom number.
    Diameter,
    GammaZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    #[serde(default = "default_levels")]
    pub n_max: Vec<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_convergence_trajectories")]
    pub trajectories: usize,
}

fn default_levels() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_convergence_trajectories() -> usize {
    50
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            n_max: default_levels(),
            tolerance: default_tolerance(),
            trajectories: default_convergence_trajectories(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_oracle_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_oracle_samples")]
    pub samples: usize,
    #[serde(default = "default_oracle_t_end")]
    pub t_end: f64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    /// Γ_z/Ω used by the oracle only; a mismatch is a negative control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_z: Option<f64>,
}

fn default_oracle_trajectories() -> usize {
    1000
}

fn default_oracle_samples() -> usize {
    20
}

fn default_oracle_t_end() -> f64 {
    10.0
}

fn default_resamples() -> usize {
    32
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            trajectories: default_oracle_trajectories(),
            samples: default_oracle_samples(),
            t_end: default_oracle_t_end(),
            bootstrap_resamples: default_resamples(),
            gamma_z: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub params: ParamsSection,
    pub geometry: GeometrySection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub steady: SteadySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

/// Reads and validates a config file. Relative paths inside it are
/// resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = RunConfig::from_toml_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    if let Some(p) = config.geometry.positions_file.as_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(p) = config.output.steady_reference.as_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    config.validate()?;
    Ok(config)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} must be a positive number, got {v}")));
    }
    Ok(())
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

impl RunConfig {
    /// Parses TOML text; syntax errors and unknown keys carry line and key
    /// information from the parser.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Field-level checks that need no geometry construction.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        non_negative("params.gamma_r", p.gamma_r)?;
        non_negative("params.gamma_z", p.gamma_z)?;
        if let Some(c6) = p.c6 {
            positive("params.c6", c6)?;
        }
        if let Some(w) = p.omega_khz {
            positive("params.omega_khz", w)?;
        }
        match self.units {
            Units::Omega => {
                if p.c6_ghz_um6.is_some() {
                    return Err(Error::Config("params.c6_ghz_um6 requires units = \"si\"".into()));
                }
            }
            Units::Si => {
                let c6 = p
                    .c6_ghz_um6
                    .ok_or_else(|| Error::Config("units = \"si\" requires params.c6_ghz_um6".into()))?;
                positive("params.c6_ghz_um6", c6)?;
                if p.c6.is_some() {
                    return Err(Error::Config("params.c6 is for units = \"omega\"; use c6_ghz_um6".into()));
                }
            }
        }

        let g = &self.geometry;
        let sources = [g.target_n.is_some(), g.spacing.is_some(), g.positions.is_some(), g.positions_file.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if sources != 1 {
            return Err(Error::Config(
                "geometry needs exactly one of target_n, spacing, positions, positions_file".into(),
            ));
        }
        if let Some(d) = g.diameter {
            positive("geometry.diameter", d)?;
        } else if g.target_n.is_some() || g.spacing.is_some() {
            return Err(Error::Config("geometry.diameter is required with target_n or spacing".into()));
        }
        if let Some(s) = g.spacing {
            positive("geometry.spacing", s)?;
        }
        if g.target_n == Some(0) {
            return Err(Error::Config("geometry.target_n must be >= 1".into()));
        }

        let b = &self.basis;
        if b.n_max == Some(0) {
            return Err(Error::Config("basis.n_max must be >= 1".into()));
        }
        positive("basis.delta_cut", b.delta_cut)?;
        positive("basis.memory_cap_gib", b.memory_cap_gib)?;

        let r = &self.run;
        positive("run.t_end", r.t_end)?;
        if r.samples == 0 || r.trajectories == 0 {
            return Err(Error::Config("run.samples and run.trajectories must be >= 1".into()));
        }
        if r.workers == Some(0) {
            return Err(Error::Config("run.workers must be >= 1".into()));
        }
        if let Some(f) = r.stability_factor {
            positive("run.stability_factor", f)?;
            if f > 2.5 {
                return Err(Error::Config(format!("run.stability_factor {f} is outside the RK4 stability region (max 2.5)")));
            }
        }

        let s = &self.steady;
        positive("steady.t_end", s.t_end)?;
        non_negative("steady.burn_in", s.burn_in)?;
        if s.burn_in >= s.t_end {
            return Err(Error::Config(format!(
                "steady.burn_in ({}) must be below steady.t_end ({})",
                s.burn_in, s.t_end
            )));
        }
        if s.samples < 2 || s.trajectories == 0 {
            return Err(Error::Config("steady.samples must be >= 2 and steady.trajectories >= 1".into()));
        }

        let c = &self.convergence;
        positive("convergence.tolerance", c.tolerance)?;
        if c.trajectories == 0 || c.n_max.contains(&0) {
            return Err(Error::Config("convergence.trajectories and n_max levels must be >= 1".into()));
        }

        let o = &self.oracle;
        positive("oracle.t_end", o.t_end)?;
        if o.trajectories == 0 || o.samples == 0 || o.bootstrap_resamples == 0 {
            return Err(Error::Config("oracle.trajectories, samples and bootstrap_resamples must be >= 1".into()));
        }
        if let Some(gz) = o.gamma_z {
            non_negative("oracle.gamma_z", gz)?;
        }
        if let Some(sweep) = &self.sweep {
            for &v in &sweep.values {
                match sweep.axis {
                    SweepAxis::N if v < 1.0 || v.fract() != 0.0 => {
                        return Err(Error::Config(format!("sweep value {v} is not an atom number")));
                    }
                    SweepAxis::Diameter => positive("sweep value", v)?,
                    SweepAxis::GammaZ => non_negative("sweep value", v)?,
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Builds parameters and geometry and fills every default.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let (params, length_unit, time_scale, omega_si) = match self.units {
            Units::Omega => {
                let mut p = PhysicalParams {
                    omega: 1.0,
                    gamma_r: self.params.gamma_r,
                    gamma_z: self.params.gamma_z,
                    c6: 1.0,
                };
                let unit = match self.params.c6 {
                    Some(c6) => {
                        p.c6 = c6;
                        "c6 length unit"
                    }
                    None => {
                        // Lengths in d_b: C_6 = w · d_b⁶ with d_b = 1.
                        p.c6 = p.excitation_linewidth()?.value;
                        "d_b"
                    }
                };
                let omega_si = self.params.omega_khz.map(|k| std::f64::consts::TAU * k * 1e3);
                (p, unit, 1.0, omega_si)
            }
            Units::Si => {
                let omega_khz = self.params.omega_khz.unwrap_or(85.0);
                let c6_ghz = self.params.c6_ghz_um6.expect("validated");
                let p = PhysicalParams {
                    omega: 1.0,
                    gamma_r: self.params.gamma_r,
                    gamma_z: self.params.gamma_z,
                    c6: c6_ghz * 1e6 / omega_khz,
                };
                let omega = std::f64::consts::TAU * omega_khz * 1e3;
                (p, "um", omega * 1e-6, Some(omega))
            }
        };
        params.validate()?;
        let d_b = params.blockade_distance()?;

        let g = &self.geometry;
        let (geometry, center) = if let Some(target) = g.target_n {
            let diameter = g.diameter.expect("validated");
            let (spacing, mode) = spacing_for_count(target, diameter, g.center.mode())?;
            (build_disk_lattice(spacing, diameter, mode)?, Some(mode))
        } else if let Some(spacing) = g.spacing {
            let mode = g.center.mode().unwrap_or(CenterMode::Site);
            (build_disk_lattice(spacing, g.diameter.expect("validated"), mode)?, Some(mode))
        } else if let Some(positions) = &g.positions {
            let diameter = match g.diameter {
                Some(d) => d,
                None => enclosing_diameter(positions),
            };
            let spacing = min_distance(positions);
            (AtomGeometry::from_positions(positions.clone(), spacing, diameter)?, None)
        } else {
            let path = g.positions_file.as_ref().expect("validated");
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file = GeometryFile::from_json(&text)?;
            let geometry = file.to_geometry()?;
            let geometry = match (file.length_unit, self.units) {
                (LengthUnit::BlockadeDistance, _) => geometry.scaled(d_b),
                (LengthUnit::Micrometre, Units::Si) => geometry,
                (LengthUnit::Micrometre, Units::Omega) => {
                    return Err(Error::Config(format!(
                        "{}: positions in um need units = \"si\"",
                        path.display()
                    )))
                }
            };
            (geometry, None)
        };
        let delta = interaction_matrix(&geometry, &params)?;
        let n = geometry.n_atoms();
        let n_max = self.basis.n_max.unwrap_or(n.min(4)).min(n);

        let mut config = self.clone();
        config.basis.n_max = Some(n_max);
        config.run.stability_factor = Some(
            self.run
                .stability_factor
                .unwrap_or(STABILITY_FACTOR),
        );
        Ok(Resolved {
            config,
            params,
            geometry,
            delta,
            center,
            length_unit,
            time_scale,
            omega_si,
        })
    }
}

fn enclosing_diameter(positions: &[[f64; 2]]) -> f64 {
    let n = positions.len().max(1) as f64;
    let cx = positions.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = positions.iter().map(|p| p[1]).sum::<f64>() / n;
    let r = positions
        .iter()
        .map(|p| (p[0] - cx).hypot(p[1] - cy))
        .fold(0.0, f64::max);
    (2.0 * r).max(f64::MIN_POSITIVE)
}

fn min_distance(positions: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            best = best.min((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    if best.is_finite() {
        best
    } else {
        1.0
    }
}

/// Config with every default materialized, plus the built physics.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    /// In units of Ω.
    pub params: PhysicalParams,
    pub geometry: AtomGeometry,
    pub delta: InteractionMatrix,
    pub center: Option<CenterMode>,
    pub length_unit: &'static str,
    /// Ω⁻¹ per configured time unit (1 in Ω mode, Ω·1μs in SI mode).
    pub time_scale: f64,
    /// Ω in rad/s when known.
    pub omega_si: Option<f64>,
}

impl Resolved {
    pub fn n_atoms(&self) -> usize {
        self.geometry.n_atoms()
    }

    pub fn n_max(&self) -> usize {
        self.config.basis.n_max.expect("resolved")
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions {
            stability_factor: self.config.run.stability_factor.expect("resolved"),
        }
    }

    pub fn memory_cap_bytes(&self) -> u128 {
        (self.config.basis.memory_cap_gib * (1u64 << 30) as f64) as u128
    }

    pub fn basis(&self, n_max: usize) -> Result<BasisSet> {
        let mut builder = BasisBuilder::new(self.n_atoms(), n_max.min(self.n_atoms())).memory_cap(self.memory_cap_bytes());
        if self.config.basis.prune {
            let w = self.params.excitation_linewidth()?.value;
            builder = builder.prune(
                PruneRule {
                    delta_cut: self.config.basis.delta_cut * w,
                },
                &self.delta,
            );
        }
        builder.build()
    }

    pub fn hamiltonian(&self, n_max: usize) -> Result<EffectiveHamiltonian> {
        let basis = Arc::new(self.basis(n_max)?);
        EffectiveHamiltonian::build(basis, &self.delta, &self.params)
    }

    /// Converts a configured time into Ω⁻¹.
    pub fn time(&self, t: f64) -> f64 {
        t * self.time_scale
    }

    pub fn derived(&self) -> Result<Derived> {
        let lw = self.params.excitation_linewidth()?;
        Ok(Derived {
            w: lw.value,
            linewidth_formula_valid: lw.valid,
            d_b: self.params.blockade_distance()?,
            gamma_rg: self.params.gamma_rg(),
            length_unit: self.length_unit.to_string(),
            n_atoms: self.n_atoms(),
            spacing: self.geometry.spacing(),
            diameter: self.geometry.diameter(),
            center: self.center,
            c6: self.params.c6,
            omega_rad_per_s: self.omega_si,
            w_rad_per_s: self.omega_si.map(|o| o * lw.value),
            time_unit_us: self.omega_si.map(|o| 1e6 / o),
        })
    }
}

/// Derived scales echoed into every manifest, in units of Ω and the
/// configured length unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub w: f64,
    pub linewidth_formula_valid: bool,
    pub d_b: f64,
    pub gamma_rg: f64,
    pub length_unit: String,
    pub n_atoms: usize,
    pub spacing: f64,
    pub diameter: f64,
    pub center: Option<CenterMode>,
    pub c6: f64,
    pub omega_rad_per_s: Option<f64>,
    pub w_rad_per_s: Option<f64>,
    /// Length of Ω⁻¹ in μs.
    pub time_unit_us: Option<f64>,
}
