// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations. Each command computes everything first and
//! then hands the finished artifacts to [`ArtifactWriter`], the only code
//! that touches the output directory.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use super::config::{Derived, Resolved, RunConfig, SweepAxis};
use crate::dynamics::EffectiveHamiltonian;
use crate::error::{Error, Result};
use crate::hilbert::BasisSet;
use crate::mcwf::{
    convergence_check, run_ensemble, run_steady_state, run_trajectory_states, trajectory_seed, uniform_grid,
    ConvergenceReport, EnsembleSpec, StepOptions, SteadySpec, Tracking, MAX_DENSITY_DIM, RNG_ALGORITHM,
};
use crate::observables::{
    bootstrap_trace_distance, kolmogorov_distance, write_time_series_csv, ConfigurationDistribution, DensityMatrix,
    ExcitationDistribution, Series,
};
use crate::oracle::{LindbladModel, MAX_ORACLE_ATOMS};

/// Bumped whenever a CSV column is added, removed or reordered.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Collects files in memory and writes them in one place.
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ArtifactWriter {
            dir: dir.into(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, contents: Vec<u8>) {
        self.files.push((name.to_string(), contents));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.add(name, text);
        Ok(())
    }

    pub fn file_names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn flush(self) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut written = Vec::new();
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_bytes(times: &[f64], columns: &[Series<'_>]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_time_series_csv(&mut buf, times, columns).expect("writing to memory");
    buf
}

fn manifest(resolved: &Resolved, command: &str, started: Instant, source: &str, results: serde_json::Value) -> Result<serde_json::Value> {
    Ok(json!({
        "command": command,
        "source": source,
        "version": env!("CARGO_PKG_VERSION"),
        "rng_algorithm": RNG_ALGORITHM,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "config": resolved.config,
        "derived": resolved.derived()?,
        "results": results,
    }))
}

fn add_common(writer: &mut ArtifactWriter, resolved: &Resolved) -> Result<()> {
    writer.add("config.resolved.toml", resolved.config.to_toml()?.into_bytes());
    Ok(())
}

fn ensemble_spec(resolved: &Resolved, times: Vec<f64>, trajectories: usize, tracking: Tracking) -> EnsembleSpec {
    EnsembleSpec {
        times,
        trajectories,
        master_seed: resolved.config.run.master_seed,
        options: resolved.step_options(),
        tracking,
        workers: resolved.config.run.workers,
    }
}

/// Summary of a dynamics run.
#[derive(Debug, Clone, Serialize)]
pub struct DynamicsSummary {
    pub dim: usize,
    pub trajectories: usize,
    pub final_mean: f64,
    pub final_mean_stderr: f64,
    pub final_q: Option<f64>,
    pub final_d_rho: Option<f64>,
    pub final_d_p: Option<f64>,
}

/// Ensemble time series of ⟨n_R⟩, Q, p_R(n) and optionally D_p(t).
pub fn cmd_dynamics(resolved: &Resolved) -> Result<(DynamicsSummary, ArtifactWriter)> {
    let started = Instant::now();
    let cfg = &resolved.config;
    let h = resolved.hamiltonian(resolved.n_max())?;
    let reference = match &cfg.output.steady_reference {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(ConfigurationDistribution::from_json(&text)?)
        }
        None => None,
    };
    let tracking = Tracking {
        configurations: cfg.output.configurations || reference.is_some(),
        density_matrix: cfg.output.density_matrix,
    };
    let times = uniform_grid(resolved.time(cfg.run.t_end), cfg.run.samples);
    let acc = run_ensemble(&h, &ensemble_spec(resolved, times.clone(), cfg.run.trajectories, tracking))?;

    let s = times.len();
    let n_levels = h.basis().n_max() + 1;
    let mut mean = vec![0.0; s];
    let mut mean_err = vec![0.0; s];
    let mut q = vec![f64::NAN; s];
    let mut q_err = vec![f64::NAN; s];
    let mut probs = vec![vec![0.0; s]; n_levels];
    let mut prob_errs = vec![vec![0.0; s]; n_levels];
    let mut d_p = vec![f64::NAN; s];
    for k in 0..s {
        (mean[k], mean_err[k]) = acc.mean_excitations(k);
        if let Ok((v, e)) = acc.mandel_q(k) {
            q[k] = v;
            q_err[k] = e;
        }
        let dist = acc.excitation_distribution(k);
        let errs = acc.excitation_errors(k);
        for n in 0..n_levels {
            probs[n][k] = dist.get(n);
            prob_errs[n][k] = errs[n];
        }
        if let Some(reference) = &reference {
            let cp = acc.configuration_probs(k).expect("tracked");
            let dist = ConfigurationDistribution::from_basis_probs(h.basis().configs(), &cp)?;
            d_p[k] = kolmogorov_distance(&dist, reference);
        }
    }
    let names: Vec<(String, String)> = (0..n_levels).map(|n| (format!("p{n}"), format!("p{n}_stderr"))).collect();
    let mut columns = vec![
        Series { name: "mean", values: &mean },
        Series { name: "mean_stderr", values: &mean_err },
        Series { name: "q", values: &q },
        Series { name: "q_stderr", values: &q_err },
    ];
    for n in 0..n_levels {
        columns.push(Series { name: &names[n].0, values: &probs[n] });
        columns.push(Series { name: &names[n].1, values: &prob_errs[n] });
    }
    if reference.is_some() {
        columns.push(Series { name: "d_p", values: &d_p });
    }

    let last = s - 1;
    let final_d_rho = match acc.density(last) {
        Some(data) => {
            let rho = DensityMatrix::from_row_major(h.basis().configs().to_vec(), &data)?;
            Some(rho.trace_distance(&rho.classical_projection())?)
        }
        None => None,
    };
    let summary = DynamicsSummary {
        dim: h.dim(),
        trajectories: acc.n_traj(),
        final_mean: mean[last],
        final_mean_stderr: mean_err[last],
        final_q: q[last].is_finite().then_some(q[last]),
        final_d_rho,
        final_d_p: reference.is_some().then_some(d_p[last]),
    };

    let mut writer = ArtifactWriter::new(&cfg.output.dir);
    add_common(&mut writer, resolved)?;
    writer.add("timeseries.csv", csv_bytes(&times, &columns));
    if cfg.output.configurations {
        let cp = acc.configuration_probs(last).expect("tracked");
        let dist = ConfigurationDistribution::from_basis_probs(h.basis().configs(), &cp)?;
        writer.add("configurations_final.json", dist.to_json()?.into_bytes());
    }
    let m = manifest(resolved, "dynamics", started, "trajectories", json!({
        "dim": h.dim(),
        "pruned_configurations": h.basis().pruned().len(),
        "summary": summary,
    }))?;
    writer.add_json("manifest.json", &m)?;
    Ok((summary, writer))
}

/// Steady-state estimate from long time averages.
#[derive(Debug, Clone, Serialize)]
pub struct SteadySummary {
    pub n_atoms: usize,
    pub dim: usize,
    pub trajectories: usize,
    /// Time average over all trajectories, with the spread between trajectories.
    pub mean: f64,
    pub mean_stderr: f64,
    /// Time average of trajectory 0 alone.
    pub single_trajectory_mean: f64,
    pub q: Option<f64>,
    pub excitation_probs: Vec<f64>,
    pub poisson_reference: Vec<f64>,
    pub d_rho: Option<f64>,
}

struct SteadyOutcome {
    summary: SteadySummary,
    configurations: ConfigurationDistribution,
}

fn steady_core(resolved: &Resolved) -> Result<SteadyOutcome> {
    let cfg = &resolved.config;
    let h = resolved.hamiltonian(resolved.n_max())?;
    let density_matrix = cfg.output.density_matrix && h.dim() <= MAX_DENSITY_DIM;
    if cfg.output.density_matrix && !density_matrix {
        log::warn!(
            "density matrix skipped: dimension {} exceeds {}",
            h.dim(),
            MAX_DENSITY_DIM
        );
    }
    let spec = SteadySpec {
        t_end: resolved.time(cfg.steady.t_end),
        burn_in: resolved.time(cfg.steady.burn_in),
        samples: cfg.steady.samples,
        trajectories: cfg.steady.trajectories,
        master_seed: cfg.run.master_seed,
        options: resolved.step_options(),
        density_matrix,
        workers: cfg.run.workers,
    };
    let run = run_steady_state(&h, &spec)?;
    let levels: Vec<usize> = h.basis().configs().iter().map(|c| c.n_exc()).collect();
    let dist = run.all.excitation_distribution(&levels);
    let (mean, mean_stderr) = run.all.mean_excitations();
    let single = run.first.mean_excitations().0;
    let poisson = ExcitationDistribution::poisson(dist.mean(), 1e-12);
    let d_rho = match run.all.density() {
        Some(data) => {
            let rho = DensityMatrix::from_row_major(h.basis().configs().to_vec(), &data)?;
            Some(rho.trace_distance(&rho.classical_projection())?)
        }
        None => None,
    };
    let configurations = ConfigurationDistribution::from_basis_probs(h.basis().configs(), &run.all.configuration_probs())?;
    Ok(SteadyOutcome {
        summary: SteadySummary {
            n_atoms: resolved.n_atoms(),
            dim: h.dim(),
            trajectories: run.all.n_traj(),
            mean,
            mean_stderr,
            single_trajectory_mean: single,
            q: dist.mandel_q().ok(),
            excitation_probs: dist.probs().to_vec(),
            poisson_reference: poisson.probs().to_vec(),
            d_rho,
        },
        configurations,
    })
}

pub fn cmd_steady(resolved: &Resolved) -> Result<(SteadySummary, ArtifactWriter)> {
    let started = Instant::now();
    let outcome = steady_core(resolved)?;
    let s = &outcome.summary;
    let mut writer = ArtifactWriter::new(&resolved.config.output.dir);
    add_common(&mut writer, resolved)?;
    let mut csv = String::from("n,p,poisson\n");
    let rows = s.excitation_probs.len().max(s.poisson_reference.len());
    for n in 0..rows {
        let p = s.excitation_probs.get(n).copied().unwrap_or(0.0);
        let poisson = s.poisson_reference.get(n).copied().unwrap_or(0.0);
        csv.push_str(&format!("{n},{p},{poisson}\n"));
    }
    writer.add("distribution.csv", csv.into_bytes());
    writer.add("steady_configurations.json", outcome.configurations.to_json()?.into_bytes());
    writer.add_json("steady.json", s)?;
    let m = manifest(resolved, "steady", started, "trajectories", serde_json::to_value(s)?)?;
    writer.add_json("manifest.json", &m)?;
    Ok((outcome.summary, writer))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: SteadySummary,
}

/// Config for one sweep point.
pub fn sweep_point(config: &RunConfig, axis: SweepAxis, value: f64) -> RunConfig {
    let mut c = config.clone();
    match axis {
        SweepAxis::N => {
            c.geometry.target_n = Some(value as usize);
            c.geometry.spacing = None;
        }
        SweepAxis::Diameter => c.geometry.diameter = Some(value),
        SweepAxis::GammaZ => c.params.gamma_z = value,
    }
    c
}

pub fn cmd_sweep(config: &RunConfig) -> Result<(Vec<SweepRow>, Option<ArtifactWriter>)> {
    let started = Instant::now();
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    if sweep.values.is_empty() {
        log::warn!("sweep has no values; nothing to do");
        return Ok((Vec::new(), None));
    }
    let mut rows = Vec::new();
    for &value in &sweep.values {
        let point = sweep_point(config, sweep.axis, value);
        let resolved = point.resolve()?;
        log::info!("sweep {:?} = {value}: N = {}", sweep.axis, resolved.n_atoms());
        rows.push(SweepRow {
            value,
            summary: steady_core(&resolved)?.summary,
        });
    }
    let first = sweep_point(config, sweep.axis, sweep.values[0]).resolve()?;
    let mut csv = String::from("value,n_atoms,dim,mean,mean_stderr,single_trajectory_mean,q,d_rho\n");
    for r in &rows {
        let s = &r.summary;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.value,
            s.n_atoms,
            s.dim,
            s.mean,
            s.mean_stderr,
            s.single_trajectory_mean,
            s.q.unwrap_or(f64::NAN),
            s.d_rho.unwrap_or(f64::NAN)
        ));
    }
    let mut writer = ArtifactWriter::new(&config.output.dir);
    writer.add("config.resolved.toml", config.to_toml()?.into_bytes());
    writer.add("sweep.csv", csv.into_bytes());
    let m = manifest(&first, "sweep", started, "trajectories", serde_json::to_value(&rows)?)?;
    writer.add_json("manifest.json", &m)?;
    Ok((rows, Some(writer)))
}

/// Per-sample comparison of trajectory averages with the oracle.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub t: f64,
    pub trace_distance: f64,
    pub bootstrap_error: f64,
    pub trajectory_mean: f64,
    pub trajectory_mean_stderr: f64,
    pub oracle_mean: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub n_atoms: usize,
    pub trajectories: usize,
    pub rows: Vec<OracleRow>,
    pub max_mean_deviation: f64,
    pub pass: bool,
    /// Oracle populations ⟨n_R⟩ and p_R(n) per sample, for export.
    #[serde(skip)]
    pub oracle_states: Vec<DensityMatrix>,
}

/// Runs `trajectories` trajectories on the full 2^N basis and compares the
/// averaged density matrix with `model` at each of `times`. A sample passes
/// when the trace distance is below 3 bootstrap errors.
pub fn compare_with_oracle(
    h: &EffectiveHamiltonian,
    model: &LindbladModel,
    options: StepOptions,
    times: &[f64],
    trajectories: usize,
    master_seed: u64,
    resamples: usize,
    workers: Option<usize>,
) -> Result<OracleComparison> {
    let n = h.basis().n_atoms();
    if model.n_atoms() != n || h.basis().n_max() != n || !h.basis().pruned().is_empty() {
        return Err(Error::BasisMismatch);
    }
    let dim = h.dim();
    let budget = trajectories as u128 * times.len() as u128 * dim as u128 * 16;
    let cap = 2u128 << 30;
    if budget > cap {
        return Err(Error::Capacity {
            required_bytes: budget,
            cap_bytes: cap,
        });
    }
    let states = run_trajectory_states(h, options, times, master_seed, trajectories, workers)?;
    let oracle = model.integrate(&model.ground_state(), times)?;
    let configs = h.basis().configs().to_vec();
    let mut rows = Vec::with_capacity(times.len());
    let mut max_dev: f64 = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let sample: Vec<&[Complex64]> = states.iter().map(|s| &s[k][..]).collect();
        let m = trajectories as f64;
        let mut rho = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
        let mut means = Vec::with_capacity(trajectories);
        for psi in &sample {
            let v = nalgebra::DVector::from_column_slice(psi);
            rho += &v * v.adjoint();
            means.push(
                psi.iter()
                    .zip(&configs)
                    .map(|(a, c)| a.norm_sqr() * c.n_exc() as f64)
                    .sum::<f64>(),
            );
        }
        rho /= Complex64::new(m, 0.0);
        let rho = DensityMatrix::from_matrix(configs.clone(), rho)?.to_bit_order(n)?;
        let d = rho.trace_distance(&oracle.states[k])?;
        let boot = bootstrap_trace_distance(&sample, resamples, trajectory_seed(master_seed ^ 0xB007, k as u64))?;
        let mean = means.iter().sum::<f64>() / m;
        let var = if trajectories > 1 {
            means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let oracle_mean = oracle.states[k].mean_excitations();
        max_dev = max_dev.max((mean - oracle_mean).abs());
        rows.push(OracleRow {
            t,
            trace_distance: d,
            bootstrap_error: boot.mean,
            trajectory_mean: mean,
            trajectory_mean_stderr: (var / m).sqrt(),
            oracle_mean,
            pass: d < 3.0 * boot.mean,
        });
    }
    Ok(OracleComparison {
        n_atoms: n,
        trajectories,
        pass: rows.iter().all(|r| r.pass),
        rows,
        max_mean_deviation: max_dev,
        oracle_states: oracle.states,
    })
}

/// Sample times k·T/S for k = 1..=S.
pub fn oracle_times(t_end: f64, samples: usize) -> Vec<f64> {
    (1..=samples).map(|k| t_end * k as f64 / samples as f64).collect()
}

pub fn cmd_oracle_compare(resolved: &Resolved) -> Result<(OracleComparison, ArtifactWriter)> {
    let started = Instant::now();
    let cfg = &resolved.config;
    let n = resolved.n_atoms();
    if n > MAX_ORACLE_ATOMS {
        return Err(Error::Capacity {
            required_bytes: 16u128 << (2 * n),
            cap_bytes: 16u128 << (2 * MAX_ORACLE_ATOMS),
        });
    }
    let basis = Arc::new(BasisSet::truncated(n, n)?);
    let h = EffectiveHamiltonian::build(basis, &resolved.delta, &resolved.params)?;
    let mut oracle_params = resolved.params;
    if let Some(gz) = cfg.oracle.gamma_z {
        oracle_params.gamma_z = gz;
    }
    let model = LindbladModel::from_interactions(&resolved.delta, &oracle_params)?;
    let times = oracle_times(resolved.time(cfg.oracle.t_end), cfg.oracle.samples);
    let report = compare_with_oracle(
        &h,
        &model,
        resolved.step_options(),
        &times,
        cfg.oracle.trajectories,
        cfg.run.master_seed,
        cfg.oracle.bootstrap_resamples,
        cfg.run.workers,
    )?;

    let mut writer = ArtifactWriter::new(&cfg.output.dir);
    add_common(&mut writer, resolved)?;
    let mut csv = String::from("t,trace_distance,bootstrap_error,trajectory_mean,trajectory_mean_stderr,oracle_mean,pass\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t, r.trace_distance, r.bootstrap_error, r.trajectory_mean, r.trajectory_mean_stderr, r.oracle_mean, r.pass
        ));
    }
    writer.add("oracle_compare.csv", csv.into_bytes());
    // Oracle series in the same layout as the trajectory time series.
    let mut mean = Vec::new();
    let mut q = Vec::new();
    let mut probs = vec![Vec::new(); n + 1];
    for rho in &report.oracle_states {
        let dist = rho.excitation_distribution(n)?;
        mean.push(dist.mean());
        q.push(dist.mandel_q().unwrap_or(f64::NAN));
        for (k, col) in probs.iter_mut().enumerate() {
            col.push(dist.get(k));
        }
    }
    let zeros = vec![0.0; times.len()];
    let names: Vec<String> = (0..=n).map(|k| format!("p{k}")).collect();
    let mut columns = vec![
        Series { name: "mean", values: &mean },
        Series { name: "mean_stderr", values: &zeros },
        Series { name: "q", values: &q },
    ];
    for k in 0..=n {
        columns.push(Series { name: &names[k], values: &probs[k] });
    }
    writer.add("oracle_timeseries.csv", csv_bytes(&times, &columns));
    let m = manifest(resolved, "oracle-compare", started, "trajectories+oracle", json!({
        "pass": report.pass,
        "max_mean_deviation": report.max_mean_deviation,
        "oracle_gamma_z": oracle_params.gamma_z,
        "oracle_timeseries_source": "oracle",
        "rows": report.rows,
    }))?;
    writer.add_json("manifest.json", &m)?;
    Ok((report, writer))
}

pub fn cmd_convergence(resolved: &Resolved) -> Result<(ConvergenceReport, ArtifactWriter)> {
    let started = Instant::now();
    let cfg = &resolved.config;
    let levels: Vec<usize> = cfg.convergence.n_max.iter().map(|&k| k.min(resolved.n_atoms())).collect();
    let times = uniform_grid(resolved.time(cfg.run.t_end), cfg.run.samples);
    let spec = ensemble_spec(resolved, times, cfg.convergence.trajectories, Tracking::default());
    let report = convergence_check(|n_max| resolved.hamiltonian(n_max), &spec, &levels, cfg.convergence.tolerance)?;
    let mut writer = ArtifactWriter::new(&cfg.output.dir);
    add_common(&mut writer, resolved)?;
    let mut csv = String::from("n_max,dim,max_mean_difference_to_next,max_distribution_distance_to_next,converged\n");
    for (i, &level) in report.n_max_levels.iter().enumerate() {
        let next = |v: &Vec<f64>| v.get(i).map_or(f64::NAN, |x| *x);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            level,
            report.dims[i],
            next(&report.max_mean_difference),
            next(&report.max_distribution_distance),
            report.converged.get(i).copied().unwrap_or(false)
        ));
    }
    writer.add("convergence.csv", csv.into_bytes());
    let m = manifest(resolved, "convergence", started, "trajectories", serde_json::to_value(&report)?)?;
    writer.add_json("manifest.json", &m)?;
    Ok((report, writer))
}

/// Derived scales and problem size, one `key = value` per line.
pub fn cmd_info(resolved: &Resolved) -> Result<String> {
    let d: Derived = resolved.derived()?;
    let mut out = Vec::new();
    let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("in-memory write");
    line("w", format!("{} (units of Omega)", d.w));
    if !d.linewidth_formula_valid {
        line("w_warning", "Omega^2 <= gamma_r*gamma_rg; linewidth formula outside its range".into());
    }
    if let Some(w_si) = d.w_rad_per_s {
        line("w_over_2pi_khz", format!("{}", w_si / std::f64::consts::TAU / 1e3));
    }
    line("d_b", format!("{} ({})", d.d_b, d.length_unit));
    line("gamma_rg", format!("{}", d.gamma_rg));
    line("n_atoms", format!("{}", d.n_atoms));
    line("spacing", format!("{}", d.spacing));
    line("diameter", format!("{}", d.diameter));
    if let Some(c) = d.center {
        line("center", format!("{c:?}").to_lowercase());
    }
    if let Some(us) = d.time_unit_us {
        line("time_unit_us", format!("{us}"));
    }
    let h = resolved.hamiltonian(resolved.n_max())?;
    line("n_max", format!("{}", resolved.n_max()));
    line("dim", format!("{}", h.dim()));
    line("pruned", format!("{}", h.basis().pruned().len()));
    line("drive_norm", format!("{}", h.drive_norm()));
    let prop = crate::dynamics::Propagator::new(&h, resolved.step_options().stability_factor);
    line("dt_max", format!("{}", prop.dt_max()));
    Ok(String::from_utf8(out).expect("utf-8"))
}

/// Writes `writer` and logs the paths.
pub fn flush(writer: ArtifactWriter) -> Result<()> {
    for path in writer.flush()? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

pub fn output_dir_override(config: &mut RunConfig, dir: Option<&Path>) {
    if let Some(d) = dir {
        config.output.dir = d.to_path_buf();
    }
}
