//! Exact Lindblad propagation, recovered-state deviations and logical error-rate scaling.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::factory::models::CodeModel;
use crate::factory::SynthesisResult;
use crate::linalg::{self, c, linear_fit, CMatrix, CVector, C64, I};
use crate::superop::{hamiltonian_superop, lindbladian, vectorize, DensityMatrix, Operator, Superoperator};

/// The three generators of the full dynamics plus the data needed to score it.
#[derive(Clone, Debug)]
pub struct System {
    pub dim: usize,
    pub order: usize,
    pub natural: Superoperator,
    pub engineered: Superoperator,
    pub hamiltonian: Superoperator,
    pub recovery: Superoperator,
    pub pseudo_inverse: Superoperator,
    pub code_basis: Vec<CVector>,
    pub h0_logical: CMatrix,
    pub h0_full: Operator,
    /// Projectors onto the order-n error states, n = 0..=order.
    pub weight_projectors: Vec<Operator>,
}

impl System {
    /// Uses the synthesized error-transparent Hamiltonian.
    pub fn new(model: &CodeModel, synth: &SynthesisResult) -> Result<Self> {
        Self::with_hamiltonian(model, synth, &synth.eth)
    }

    /// Uses an arbitrary Hamiltonian `h` in place of the synthesized one.
    pub fn with_hamiltonian(model: &CodeModel, synth: &SynthesisResult, h: &Operator) -> Result<Self> {
        check_dim("synthesis dimension", model.dim, synth.dim())?;
        check_dim("Hamiltonian", model.dim, h.dim())?;
        let b = &synth.error_basis;
        Ok(Self {
            dim: model.dim,
            order: synth.order,
            natural: lindbladian(model.dim, &model.natural_jumps)?,
            engineered: synth.engineered_liouvillian.clone(),
            hamiltonian: hamiltonian_superop(h)?,
            recovery: synth.recovery_projector.clone(),
            pseudo_inverse: synth.pseudo_inverse.clone(),
            code_basis: synth.code_basis.clone(),
            h0_logical: synth.h0_logical.clone(),
            h0_full: synth.embedded_h0(),
            weight_projectors: (0..=b.order).map(|n| b.weight_projector(n)).collect(),
        })
    }

    /// L = κ(−i g 𝓗 + R 𝓛_E + 𝓛_n)
    pub fn liouvillian(&self, kappa: f64, r: f64, g: f64) -> Superoperator {
        let m = self.hamiltonian.matrix() * C64::new(0.0, -g)
            + self.engineered.matrix() * c(r)
            + self.natural.matrix();
        Superoperator::new(self.dim, m * c(kappa)).expect("finite generator")
    }

    /// ρ ↦ P_C ρ P_C
    pub fn code_superprojector(&self) -> Superoperator {
        let p = Operator::projector(self.dim, &self.code_basis);
        Superoperator::sandwich(p.matrix(), p.matrix())
    }

    /// Q_E = 𝓘 − P_E
    pub fn complementary(&self) -> Superoperator {
        &Superoperator::identity(self.dim) - &self.recovery
    }

    /// [H₀, ·] for the embedded logical Hamiltonian.
    pub fn logical_hamiltonian_superop(&self) -> Superoperator {
        hamiltonian_superop(&self.h0_full).expect("logical Hamiltonian is Hermitian")
    }

    /// U₀ = exp(−i H₀ g κ t) on the full space.
    pub fn reference_unitary(&self, kappa: f64, g: f64, t: f64) -> Result<CMatrix> {
        linalg::expm(&(self.h0_full.matrix() * (-I)), g * kappa * t)
    }
}

pub fn assemble_full_liouvillian(
    model: &CodeModel,
    synth: &SynthesisResult,
    config: &SimulationConfig,
) -> Result<Superoperator> {
    config.validate()?;
    Ok(System::new(model, synth)?.liouvillian(config.kappa, config.r, config.g))
}

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub kappa: f64,
    pub r: f64,
    pub g: f64,
    pub time_grid: Vec<f64>,
    pub initial_state: DensityMatrix,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidInput("kappa must be positive".into()));
        }
        if !(self.r >= 0.0) || !self.g.is_finite() {
            return Err(Error::InvalidInput("R must be non-negative and g finite".into()));
        }
        check_time_grid(&self.time_grid)
    }
}

fn check_time_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("times must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("time grid must be ascending".into()));
    }
    Ok(())
}

pub fn check_in_code_space(rho: &CMatrix, code_basis: &[CVector]) -> Result<()> {
    let p = Operator::projector(rho.nrows(), code_basis);
    let r = (p.matrix() * rho * p.matrix() - rho).norm();
    if r > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "initial state leaves the code space (residual {r:.3e})"
        )));
    }
    Ok(())
}

/// ρ(t) = e^{Lt} ρ(0) on the grid.
pub fn propagate(l: &Superoperator, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<CMatrix>> {
    check_dim("initial state", l.dim(), rho0.dim())?;
    check_time_grid(times)?;
    let d = l.dim();
    let v0 = vectorize(rho0.matrix());
    let mut out = Vec::with_capacity(times.len());
    if d * d <= 400 {
        for &t in times {
            let v = linalg::expm(l.matrix(), t)? * &v0;
            out.push(CMatrix::from_column_slice(d, d, v.as_slice()));
        }
    } else {
        let mut v = v0;
        let mut last = 0.0;
        let mut step: Option<(f64, CMatrix)> = None;
        for &t in times {
            let dt = t - last;
            if dt > 0.0 {
                let reuse = matches!(&step, Some((h, _)) if (h - dt).abs() <= 1e-14 * dt);
                if !reuse {
                    step = Some((dt, linalg::expm(l.matrix(), dt)?));
                }
                v = &step.as_ref().expect("step set").1 * v;
            }
            last = t;
            out.push(CMatrix::from_column_slice(d, d, v.as_slice()));
        }
    }
    for (rho, &t) in out.iter().zip(times) {
        let drift = (rho.trace() - c(1.0)).norm();
        if !(drift < 1e-8) {
            let substeps = (l.norm() * t).ceil().max(1.0) as usize;
            return Err(Error::Stiffness {
                suggested_substeps: substeps,
            });
        }
    }
    Ok(out)
}

/// ‖P_E ρ(t) − U₀ ρ(0) U₀†‖_F
pub fn recovered_deviation(rho_t: &CMatrix, p_e: &Superoperator, u0_t: &CMatrix, rho0: &CMatrix) -> f64 {
    let target = u0_t * rho0 * u0_t.adjoint();
    (p_e.apply(rho_t) - target).norm()
}

/// Least-squares slope of the deviation over times inside `window` (inclusive).
pub fn extract_kappa_eff(times: &[f64], deviations: &[f64], window: (f64, f64)) -> Result<f64> {
    check_dim("deviation trace", times.len(), deviations.len())?;
    let tol = 1e-12 * window.1.abs().max(1.0);
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(deviations)
        .filter(|(t, _)| **t >= window.0 - tol && **t <= window.1 + tol)
        .map(|(t, d)| (*t, *d))
        .unzip();
    if x.len() < 2 {
        return Err(Error::Fit(format!(
            "window [{:.3e}, {:.3e}] holds {} points",
            window.0,
            window.1,
            x.len()
        )));
    }
    let (slope, _, _) = linear_fit(&x, &y).ok_or_else(|| Error::Fit("degenerate window".into()))?;
    Ok(slope.max(0.0))
}

/// Pure probe states on the code space: the codewords and their pairwise superpositions
/// (j ± k)/√2, (j ± ik)/√2. For a qubit code these are the six Pauli eigenstates.
pub fn probe_states(code_basis: &[CVector]) -> Vec<(String, DensityMatrix)> {
    let dc = code_basis.len();
    let name = |j: usize| {
        if dc == 2 {
            String::new()
        } else {
            j.to_string()
        }
    };
    let mut out: Vec<(String, DensityMatrix)> = code_basis
        .iter()
        .enumerate()
        .map(|(j, v)| (j.to_string(), DensityMatrix::pure(v).expect("unit codeword")))
        .collect();
    for j in 0..dc {
        for k in (j + 1)..dc {
            for (tag, phase) in [("+", c(1.0)), ("-", c(-1.0)), ("+i", I), ("-i", -I)] {
                let v = &code_basis[j] + &code_basis[k] * phase;
                let label = format!("{}{}{}", name(j), tag, name(k));
                out.push((label, DensityMatrix::pure(&v).expect("nonzero superposition")));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    Fixed(f64),
    /// g = a·R
    Proportional(f64),
}

impl Coupling {
    pub fn at(self, r: f64) -> f64 {
        match self {
            Coupling::Fixed(g) => g,
            Coupling::Proportional(a) => a * r,
        }
    }
}

/// Placement of the slope window [f/(Rκ), 2f/(Rκ)].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowRule {
    Fixed(f64),
    /// f = min(20, 0.1·R_min κ / λ), λ the slowest relaxation rate of the full generator at
    /// the smallest R, so every window ends well inside the linear regime.
    Auto,
}

pub const DEFAULT_WINDOW_CAP: f64 = 20.0;

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub kappa: f64,
    pub r_values: Vec<f64>,
    pub coupling: Coupling,
    pub probes: Vec<(String, DensityMatrix)>,
    pub window: WindowRule,
    /// Samples inside each window (t = 0 is always prepended).
    pub points: usize,
    pub workers: usize,
}

impl SweepConfig {
    pub fn new(r_values: Vec<f64>, probes: Vec<(String, DensityMatrix)>) -> Self {
        Self {
            kappa: 1.0,
            r_values,
            coupling: Coupling::Fixed(0.0),
            probes,
            window: WindowRule::Auto,
            points: 9,
            workers: 1,
        }
    }
}

/// One (R, probe) trajectory.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub r: f64,
    pub g: f64,
    pub probe: usize,
    pub times: Vec<f64>,
    pub deviations: Vec<f64>,
    pub kappa_eff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFit {
    /// s in y ∝ R^{−s}
    pub exponent: f64,
    pub intercept: f64,
    pub stderr: Option<f64>,
}

/// Fits log y = −s log R + b.
pub fn fit_power_law(r: &[f64], y: &[f64]) -> Result<ScalingFit> {
    if r.len() < 2 {
        return Err(Error::Fit("need at least two R values".into()));
    }
    if let Some(bad) = y.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Fit(format!(
            "non-positive value {:.3e} at R = {}; no power law to fit",
            y[bad], r[bad]
        )));
    }
    let x: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, intercept, stderr) =
        linear_fit(&x, &ly).ok_or_else(|| Error::Fit("R values are not distinct".into()))?;
    Ok(ScalingFit {
        exponent: -slope,
        intercept,
        stderr,
    })
}

#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub r_values: Vec<f64>,
    pub window_factor: f64,
    pub probe_names: Vec<String>,
    /// Sorted by R, then probe index.
    pub cells: Vec<SweepCell>,
    /// Model-level κ_eff per R: maximum over probes.
    pub kappa_eff: Vec<f64>,
    pub fit: std::result::Result<ScalingFit, String>,
}

/// Window start factor for a sweep under `rule`.
pub fn window_factor(system: &System, kappa: f64, r_values: &[f64], coupling: Coupling, rule: WindowRule) -> Result<f64> {
    match rule {
        WindowRule::Fixed(f) if f > 0.0 => Ok(f),
        WindowRule::Fixed(_) => Err(Error::InvalidInput("window factor must be positive".into())),
        WindowRule::Auto => {
            let r_min = r_values.iter().cloned().fold(f64::INFINITY, f64::min);
            let l = system.liouvillian(kappa, r_min, coupling.at(r_min));
            Ok(match linalg::slowest_decay_rate(l.matrix())? {
                Some(rate) => (0.1 * r_min * kappa / rate).min(DEFAULT_WINDOW_CAP),
                None => DEFAULT_WINDOW_CAP,
            })
        }
    }
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

/// Deviation trace of one (R, probe) pair.
#[derive(Clone, Debug)]
pub struct Trace {
    pub r: f64,
    pub g: f64,
    pub probe: usize,
    pub times: Vec<f64>,
    pub deviations: Vec<f64>,
}

/// Propagates every (R, probe) pair on `times(R)` and returns deviation traces in R-then-probe order.
pub fn run_cells(
    system: &System,
    kappa: f64,
    r_values: &[f64],
    coupling: Coupling,
    probes: &[(String, DensityMatrix)],
    times: &(dyn Fn(f64) -> Vec<f64> + Sync),
    workers: usize,
) -> Result<Vec<Trace>> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidInput("kappa must be positive".into()));
    }
    for (_, p) in probes {
        check_in_code_space(p.matrix(), &system.code_basis)?;
    }
    let jobs: Vec<(f64, usize)> = r_values
        .iter()
        .flat_map(|&r| (0..probes.len()).map(move |p| (r, p)))
        .collect();
    let pool = worker_pool(workers)?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(r, p)| {
                let g = coupling.at(r);
                let ts = times(r);
                let l = system.liouvillian(kappa, r, g);
                let rho0 = &probes[p].1;
                let states = propagate(&l, rho0, &ts)?;
                let devs = states
                    .iter()
                    .zip(&ts)
                    .map(|(rho, &t)| {
                        let u = system.reference_unitary(kappa, g, t)?;
                        Ok(recovered_deviation(rho, &system.recovery, &u, rho0.matrix()))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(Trace {
                    r,
                    g,
                    probe: p,
                    times: ts,
                    deviations: devs,
                })
            })
            .collect()
    })
}

pub fn scaling_sweep(system: &System, config: &SweepConfig) -> Result<SweepRecord> {
    if config.r_values.len() < 2 {
        return Err(Error::Fit("a scaling sweep needs at least two R values".into()));
    }
    if config.r_values.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput("R values must be positive".into()));
    }
    if config.probes.is_empty() || config.points < 2 {
        return Err(Error::InvalidInput("need probes and at least two window points".into()));
    }
    let mut r_values = config.r_values.clone();
    r_values.sort_by(f64::total_cmp);
    let kappa = config.kappa;
    let f = window_factor(system, kappa, &r_values, config.coupling, config.window)?;
    let n = config.points;
    let times = move |r: f64| {
        let t0 = f / (r * kappa);
        std::iter::once(0.0)
            .chain((0..n).map(|k| t0 * (1.0 + k as f64 / (n - 1) as f64)))
            .collect::<Vec<f64>>()
    };
    let raw = run_cells(system, kappa, &r_values, config.coupling, &config.probes, &times, config.workers)?;
    let mut cells = Vec::with_capacity(raw.len());
    for t in raw {
        let t0 = f / (t.r * kappa);
        let kappa_eff = extract_kappa_eff(&t.times, &t.deviations, (t0, 2.0 * t0))?;
        cells.push(SweepCell {
            r: t.r,
            g: t.g,
            probe: t.probe,
            times: t.times,
            deviations: t.deviations,
            kappa_eff,
        });
    }
    let kappa_eff: Vec<f64> = r_values
        .iter()
        .map(|&r| {
            cells
                .iter()
                .filter(|c| c.r == r)
                .map(|c| c.kappa_eff)
                .fold(0.0, f64::max)
        })
        .collect();
    let fit = fit_power_law(&r_values, &kappa_eff).map_err(|e| e.to_string());
    Ok(SweepRecord {
        r_values,
        window_factor: f,
        probe_names: config.probes.iter().map(|(n, _)| n.clone()).collect(),
        cells,
        kappa_eff,
        fit,
    })
}

#[derive(Clone, Debug)]
pub struct OccupancyRecord {
    pub weight: usize,
    pub r_values: Vec<f64>,
    /// Maximum over probes of tr(P_n ρ(t)) at t = factor/(Rκ).
    pub occupancy: Vec<f64>,
    pub fit: std::result::Result<ScalingFit, String>,
}

/// Population of the weight-n error states after the engineered relaxation has settled.
pub fn occupancy_sweep(
    system: &System,
    kappa: f64,
    r_values: &[f64],
    probes: &[(String, DensityMatrix)],
    weight: usize,
    factor: f64,
) -> Result<OccupancyRecord> {
    let proj = system
        .weight_projectors
        .get(weight)
        .ok_or_else(|| Error::InvalidInput(format!("no error states of weight {weight}")))?
        .clone();
    let occupancy = r_values
        .iter()
        .map(|&r| {
            let l = system.liouvillian(kappa, r, 0.0);
            let t = factor / (r * kappa);
            let mut best: f64 = 0.0;
            for (_, p) in probes {
                let rho = &propagate(&l, p, &[t])?[0];
                best = best.max((proj.matrix() * rho).trace().re);
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_power_law(r_values, &occupancy).map_err(|e| e.to_string());
    Ok(OccupancyRecord {
        weight,
        r_values: r_values.to_vec(),
        occupancy,
        fit,
    })
}

/// `n` values log-spaced from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}
