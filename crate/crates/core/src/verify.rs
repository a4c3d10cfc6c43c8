//! Numerical certificates: the symmetrized-product condition, bound constants and the
//! relaxation bound that limits the usable coupling.

use std::collections::BTreeMap;

use crate::dynamics::{run_cells, Coupling, System, Trace};
use crate::error::{Error, Result};
use crate::error_sets::{SymmetrizedProducts, DEFAULT_DEGREE_CAP};
use crate::linalg::{self, range_basis, CMatrix, C64};
use crate::superop::DensityMatrix;

pub const DEFAULT_LEMMA_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_K1: usize = 3;
pub const DEFAULT_K2: usize = 2;

/// Powers of (𝓗, 𝓛_E, 𝓛_n).
pub type Triple = (usize, usize, usize);

#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub order: usize,
    pub k1_max: usize,
    pub k2_max: usize,
    pub tolerance: f64,
    pub residuals: BTreeMap<Triple, f64>,
    pub passed: bool,
    pub worst: (Triple, f64),
}

fn lemma_target(system: &System, k1: usize, pc: &CMatrix) -> CMatrix {
    let h0 = system.logical_hamiltonian_superop().into_matrix();
    let mut t = pc.clone();
    for _ in 0..k1 {
        t = &h0 * t;
    }
    t
}

/// ‖P_E S[{𝓗,k₁},{𝓛_E,k₂},{𝓛_n,k₃}] 𝓟_C − δ_{k₂0}δ_{k₃0} 𝓗₀^{k₁} 𝓟_C‖ / max(1, ‖S 𝓟_C‖)
/// for k₁ ≤ k1_max, k₂ ≤ k2_max, k₃ ≤ c.
pub fn check_lemma_condition(
    system: &System,
    order: usize,
    k1_max: usize,
    k2_max: usize,
    tolerance: f64,
) -> Result<LemmaReport> {
    let degree = k1_max + k2_max + order;
    if degree > DEFAULT_DEGREE_CAP {
        return Err(Error::DegreeCap {
            degree,
            cap: DEFAULT_DEGREE_CAP,
        });
    }
    let pc = system.code_superprojector().into_matrix();
    let pe = system.recovery.matrix();
    let mut products = SymmetrizedProducts::with_base(
        &[&system.hamiltonian, &system.engineered, &system.natural],
        pc.clone(),
        DEFAULT_DEGREE_CAP,
    );
    let mut residuals = BTreeMap::new();
    let mut worst = ((0, 0, 0), 0.0);
    for k1 in 0..=k1_max {
        let target = lemma_target(system, k1, &pc);
        for k2 in 0..=k2_max {
            for k3 in 0..=order {
                let s = products.get(&[k1, k2, k3])?;
                let mut diff = pe * &s;
                if k2 == 0 && k3 == 0 {
                    diff -= &target;
                }
                let res = diff.norm() / s.norm().max(1.0);
                if res > worst.1 || residuals.is_empty() {
                    worst = ((k1, k2, k3), res);
                }
                residuals.insert((k1, k2, k3), res);
            }
        }
    }
    let passed = residuals.values().all(|r| *r < tolerance);
    Ok(LemmaReport {
        order,
        k1_max,
        k2_max,
        tolerance,
        residuals,
        passed,
        worst,
    })
}

fn words(ks: [usize; 3], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if ks.iter().all(|&k| k == 0) {
        out.push(prefix.clone());
        return;
    }
    for i in 0..3 {
        if ks[i] > 0 {
            let mut rest = ks;
            rest[i] -= 1;
            prefix.push(i);
            words(rest, prefix, out);
            prefix.pop();
        }
    }
}

/// Worst single-ordering residual ‖P_E W 𝓟_C − δ 𝓗₀^{k₁}𝓟_C‖ / max(1, ‖W 𝓟_C‖) over all distinct
/// words W with the given powers of (𝓗, 𝓛_E, 𝓛_n).
pub fn asymmetric_residual(system: &System, powers: Triple) -> Result<f64> {
    let (k1, k2, k3) = powers;
    let degree = k1 + k2 + k3;
    if degree > DEFAULT_DEGREE_CAP {
        return Err(Error::DegreeCap {
            degree,
            cap: DEFAULT_DEGREE_CAP,
        });
    }
    let pc = system.code_superprojector().into_matrix();
    let pe = system.recovery.matrix();
    let factors = [
        system.hamiltonian.matrix(),
        system.engineered.matrix(),
        system.natural.matrix(),
    ];
    let target = lemma_target(system, k1, &pc);
    let mut all = Vec::new();
    words([k1, k2, k3], &mut Vec::new(), &mut all);
    let mut worst: f64 = 0.0;
    for w in all {
        let mut m = pc.clone();
        for &i in w.iter().rev() {
            m = factors[i] * m;
        }
        let mut diff = pe * &m;
        if k2 == 0 && k3 == 0 {
            diff -= &target;
        }
        worst = worst.max(diff.norm() / m.norm().max(1.0));
    }
    Ok(worst)
}

/// One normalized deviation ‖𝓟_E ρ(t) − U₀ρ(0)U₀†‖ · R^p / (κ t ‖ρ(0)‖).
#[derive(Clone, Debug)]
pub struct BoundSample {
    pub r: f64,
    pub g: f64,
    pub probe: usize,
    pub t: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug)]
pub struct BoundEstimate {
    /// Power of R used in the normalization.
    pub exponent: f64,
    pub m: f64,
    /// Maximum normalized deviation for each R, ascending R.
    pub per_r: Vec<(f64, f64)>,
    /// Max over the two largest R divided by the max over the remaining R.
    pub tail_ratio: f64,
    pub stable: bool,
    /// Largest g/R in the grid.
    pub max_g_over_r: f64,
    pub samples: Vec<BoundSample>,
}

impl BoundEstimate {
    /// Normalizes existing traces by R^exponent.
    pub fn from_traces(traces: &[Trace], probes: &[(String, DensityMatrix)], kappa: f64, exponent: f64) -> Result<Self> {
        let mut samples = Vec::new();
        for tr in traces {
            let rho_norm = probes
                .get(tr.probe)
                .ok_or_else(|| Error::InvalidInput(format!("trace names missing probe {}", tr.probe)))?
                .1
                .matrix()
                .norm();
            for (&t, &d) in tr.times.iter().zip(&tr.deviations) {
                if t > 0.0 {
                    let v = d * tr.r.powf(exponent) / (kappa * t * rho_norm);
                    if !v.is_finite() {
                        return Err(Error::Numerical(format!(
                            "normalized deviation at R = {}, t = {t:e} is not finite",
                            tr.r
                        )));
                    }
                    samples.push(BoundSample {
                        r: tr.r,
                        g: tr.g,
                        probe: tr.probe,
                        t,
                        normalized: v,
                    });
                }
            }
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("no samples with t > 0".into()));
        }
        let mut rs: Vec<f64> = samples.iter().map(|s| s.r).collect();
        rs.sort_by(f64::total_cmp);
        rs.dedup();
        let per_r: Vec<(f64, f64)> = rs
            .iter()
            .map(|&r| {
                let m = samples
                    .iter()
                    .filter(|s| s.r == r)
                    .map(|s| s.normalized)
                    .fold(0.0, f64::max);
                (r, m)
            })
            .collect();
        let m = per_r.iter().map(|p| p.1).fold(0.0, f64::max);
        let split = per_r.len().saturating_sub(2);
        let head = per_r[..split].iter().map(|p| p.1).fold(0.0, f64::max);
        let tail = per_r[split..].iter().map(|p| p.1).fold(0.0, f64::max);
        let (tail_ratio, stable) = if m <= 1e-12 {
            (1.0, true)
        } else if split == 0 || head == 0.0 {
            (f64::INFINITY, false)
        } else {
            let ratio = tail / head;
            (ratio, (0.5..=2.0).contains(&ratio))
        };
        let max_g_over_r = samples.iter().map(|s| (s.g / s.r).abs()).fold(0.0, f64::max);
        Ok(Self {
            exponent,
            m,
            per_r,
            tail_ratio,
            stable,
            max_g_over_r,
            samples,
        })
    }
}

/// Sweeps R with t = f/(Rκ) for every factor f and normalizes by R^exponent
/// (the code order for the sharp estimate).
#[allow(clippy::too_many_arguments)]
pub fn estimate_bound_constants(
    system: &System,
    kappa: f64,
    r_values: &[f64],
    coupling: Coupling,
    time_factors: &[f64],
    probes: &[(String, DensityMatrix)],
    exponent: f64,
    workers: usize,
) -> Result<BoundEstimate> {
    if r_values.is_empty() || time_factors.is_empty() || probes.is_empty() {
        return Err(Error::InvalidInput("grids must be nonempty".into()));
    }
    let mut rs = r_values.to_vec();
    rs.sort_by(f64::total_cmp);
    let factors = time_factors.to_vec();
    let times = move |r: f64| factors.iter().map(|f| f / (r * kappa)).collect::<Vec<f64>>();
    let traces = run_cells(system, kappa, &rs, coupling, probes, &times, workers)?;
    BoundEstimate::from_traces(&traces, probes, kappa, exponent)
}

#[derive(Clone, Debug)]
pub struct RelaxationSample {
    pub g: f64,
    /// max_t ‖G(t)Q_E‖ e^{Rκλ̃₀t/2} / M̃; the bound holds when ≤ 1.
    pub envelope_ratio: f64,
    pub certified: bool,
    pub within_certified_range: bool,
    /// Slowest decay rate of the perturbed generator on range(Q_E).
    pub spectral_rate: f64,
}

#[derive(Clone, Debug)]
pub struct RelaxationReport {
    pub r: f64,
    pub kappa: f64,
    /// Slowest nonzero relaxation rate of 𝓛_E.
    pub lambda0: f64,
    pub m_tilde: f64,
    pub qhq_norm: f64,
    /// Certified coupling range |g| ≤ g̃₀ R.
    pub g0_tilde: f64,
    pub samples: Vec<RelaxationSample>,
}

const RELAXATION_GRID: usize = 81;
const RELAXATION_SPAN: f64 = 40.0;

/// Fits M̃ from the unperturbed envelope of exp(Rκ𝓛_E t)Q_E and checks the perturbed
/// propagator exp((Rκ𝓛_E − iκg Q_E𝓗Q_E)t)Q_E against M̃e^{−Rκλ̃₀t/2} for every g.
pub fn verify_relaxation_bound(system: &System, kappa: f64, r: f64, g_values: &[f64]) -> Result<RelaxationReport> {
    if !(kappa > 0.0 && r > 0.0) {
        return Err(Error::InvalidInput("kappa and R must be positive".into()));
    }
    let le = system.engineered.matrix();
    let lambda0 = match linalg::slowest_decay_rate(le)? {
        Some(l) if l > 1e-10 => l,
        other => return Err(Error::Gapless { gap: other.unwrap_or(0.0) }),
    };
    let q = system.complementary().into_matrix();
    let qhq = &q * system.hamiltonian.matrix() * &q;
    let qhq_norm = qhq.norm();
    let rate = r * kappa * lambda0;
    let times: Vec<f64> = (0..RELAXATION_GRID)
        .map(|k| RELAXATION_SPAN * k as f64 / ((RELAXATION_GRID - 1) as f64 * rate))
        .collect();
    let base = le * C64::from(r * kappa);
    let mut m_tilde: f64 = 0.0;
    for &t in &times {
        let e = linalg::expm(&base, t)? * &q;
        m_tilde = m_tilde.max(e.norm() * (rate * t).exp());
    }
    let g0_tilde = if qhq_norm > 0.0 {
        lambda0 / (2.0 * m_tilde * qhq_norm)
    } else {
        f64::INFINITY
    };
    let basis = range_basis(&q, 1e-10);
    let samples = g_values
        .iter()
        .map(|&g| {
            let gen = &base + &qhq * C64::new(0.0, -kappa * g);
            let mut worst: f64 = 0.0;
            for &t in &times {
                let e = linalg::expm(&gen, t)? * &q;
                worst = worst.max(e.norm() * (0.5 * rate * t).exp() / m_tilde);
            }
            let reduced = basis.adjoint() * &gen * &basis;
            let spectral_rate = linalg::eigenvalues(&reduced)?
                .into_iter()
                .map(|l| -l.re)
                .fold(f64::INFINITY, f64::min);
            Ok(RelaxationSample {
                g,
                envelope_ratio: worst,
                certified: worst <= 1.0 + 1e-9,
                within_certified_range: g.abs() <= g0_tilde * r,
                spectral_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RelaxationReport {
        r,
        kappa,
        lambda0,
        m_tilde,
        qhq_norm,
        g0_tilde,
        samples,
    })
}
