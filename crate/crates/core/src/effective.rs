//! Projected code-space dynamics: memory kernel, effective Liouvillian and T-map series.

use nalgebra::SymmetricEigen;

use crate::dynamics::{check_in_code_space, propagate, System};
use crate::error::{Error, Result};
use crate::linalg::{self, c, restricted_inverse, CMatrix, CVector, C64};
use crate::superop::{vectorize, DensityMatrix, Superoperator};

/// Σ(τ) = P_E L Q_E exp(Q_E L Q_E τ) Q_E L P_E on the grid.
pub fn memory_kernel(l: &Superoperator, p_e: &Superoperator, taus: &[f64]) -> Result<Vec<Superoperator>> {
    let q = &Superoperator::identity(l.dim()) - p_e;
    let left = &(p_e * l) * &q;
    let right = &(&q * l) * p_e;
    let qlq = &(&q * l) * &q;
    taus.iter()
        .map(|&t| {
            let e = qlq.expm(t)?;
            Ok(&(&left * &e) * &right)
        })
        .collect()
}

/// Truncated series with per-order diagnostics.
#[derive(Clone, Debug)]
pub struct SeriesResult {
    pub generator: Superoperator,
    pub k_max: usize,
    /// Norm of the k-th term (index k−1), including the first term beyond `k_max`.
    pub term_norms: Vec<f64>,
    /// Norm of the first omitted term.
    pub truncation_estimate: f64,
}

fn require_projector_compatibility(system: &System) -> Result<()> {
    let pc = system.code_superprojector();
    let r = (&(&pc * &system.recovery) - &system.recovery).norm();
    if r > 1e-10 {
        return Err(Error::Inconsistent(format!(
            "recovery projector leaves the code space (residual {r:.3e})"
        )));
    }
    Ok(())
}

/// κ Σ_{k=1}^{k_max} (−1/R)^{k−1} P_E (𝓛_n 𝓛_E*)^{k−1} 𝓛_n 𝓟_C, for a system without Hamiltonian.
/// Terms with k ≤ c must vanish and are checked.
pub fn effective_liouvillian_h0_zero(system: &System, kappa: f64, r: f64, k_max: usize) -> Result<SeriesResult> {
    require_projector_compatibility(system)?;
    if !(r > 0.0) {
        return Err(Error::InvalidInput("R must be positive".into()));
    }
    let dim = system.dim;
    let pc = system.code_superprojector();
    let ln = system.natural.matrix();
    let lstar = system.pseudo_inverse.matrix();
    let pe = system.recovery.matrix();
    let mut x = ln * pc.matrix();
    let mut gen = CMatrix::zeros(dim * dim, dim * dim);
    let mut norms = Vec::with_capacity(k_max + 1);
    for k in 1..=(k_max + 1) {
        let term = pe * &x * c(kappa * (-1.0 / r).powi(k as i32 - 1));
        let nrm = term.norm();
        if k <= system.order && nrm >= 1e-9 {
            return Err(Error::Cancellation { order: k, norm: nrm });
        }
        norms.push(nrm);
        if k <= k_max {
            gen += term;
        }
        x = ln * (lstar * x);
    }
    Ok(SeriesResult {
        generator: Superoperator::new(dim, gen)?,
        k_max,
        truncation_estimate: *norms.last().expect("at least one term"),
        term_norms: norms,
    })
}

/// Eigen-decomposition of the logical Hamiltonian embedded in the full space.
fn logical_eigenbasis(system: &System) -> (Vec<f64>, Vec<CVector>) {
    let eig = SymmetricEigen::new(system.h0_logical.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let v = CMatrix::from_columns(&system.code_basis);
    let energies = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let states = idx
        .iter()
        .map(|&i| &v * eig.eigenvectors.column(i))
        .collect();
    (energies, states)
}

/// Restricted inverse of 𝓛_E − i(g/R)(Q_E 𝓗 Q_E − E Q_E) on range(Q_E).
#[derive(Clone, Debug)]
pub struct GapInverse {
    pub gap: f64,
    pub inverse: Superoperator,
    /// max of ‖F L F − F‖ and ‖L F L − L‖.
    pub law_residual: f64,
}

fn gap_inverse(system: &System, q: &CMatrix, qhq: &CMatrix, r: f64, g: f64, gap: f64) -> Result<GapInverse> {
    let dim = system.dim;
    let shift = (qhq - q * c(gap)) * C64::new(0.0, -g / r);
    let l = system.engineered.matrix() + shift;
    let f = restricted_inverse(&l, q)?;
    let a = (&f * &l * &f - &f).norm();
    let b = (&l * &f * &l - &l).norm();
    Ok(GapInverse {
        gap,
        inverse: Superoperator::new(dim, f)?,
        law_residual: a.max(b),
    })
}

#[derive(Clone, Debug)]
pub struct EffectiveDynamics {
    /// Full code-space generator, including the logical Hamiltonian term.
    pub generator: Superoperator,
    /// Generator minus −igκ𝓗₀𝓟_C.
    pub correction: Superoperator,
    /// L^{00}, L^{10}, L^{01}, L^{11} (natural dissipation on both, Hamiltonian on the left,
    /// on the right, on both sides).
    pub components: [Superoperator; 4],
    pub t_map: TMap,
    pub k_max: usize,
    /// Norm of the correction collected by power of 𝓛_n, p = 0..=k_max+1.
    pub order_norms: Vec<f64>,
    pub truncation_estimate: f64,
    pub energies: Vec<f64>,
    pub inverses: Vec<GapInverse>,
    /// Orthonormal code-space operator basis |v⟩⟨w| (columns), in the H₀ eigenbasis.
    pub code_frame: CMatrix,
}

/// Effective code-space generator with a Hamiltonian, through the H₀-eigenbasis resolvents.
pub fn effective_liouvillian_general(
    system: &System,
    kappa: f64,
    r: f64,
    g: f64,
    k_max: usize,
) -> Result<EffectiveDynamics> {
    require_projector_compatibility(system)?;
    if !(r > 0.0) {
        return Err(Error::InvalidInput("R must be positive".into()));
    }
    let dim = system.dim;
    let n2 = dim * dim;
    let q = system.complementary().into_matrix();
    let h = system.hamiltonian.matrix();
    let ln = system.natural.matrix();
    let pe = system.recovery.matrix();
    let qhq = &q * h * &q;
    let (energies, states) = logical_eigenbasis(system);
    let mut inverses: Vec<GapInverse> = Vec::new();
    let mut frame = Vec::new();
    let mut cols: [Vec<CVector>; 4] = Default::default();
    let orders = k_max + 2;
    let mut order_cols: Vec<Vec<CVector>> = vec![Vec::new(); orders];
    let mut direct_cols = Vec::new();
    let ig = C64::new(0.0, -g);
    for (v, ev) in states.iter().zip(&energies) {
        for (w, ew) in states.iter().zip(&energies) {
            let x = vectorize(&(v * w.adjoint()));
            let gap = ev - ew;
            let tol = 1e-12 * gap.abs().max(1.0);
            let pos = match inverses.iter().position(|f| (f.gap - gap).abs() <= tol) {
                Some(p) => p,
                None => {
                    inverses.push(gap_inverse(system, &q, &qhq, r, g, gap)?);
                    inverses.len() - 1
                }
            };
            let f = inverses[pos].inverse.matrix();
            let y_n = ln * &x;
            let y_h = h * &x;
            // P_E(−ig𝓗 + 𝓛_n) acting directly
            let direct_h = pe * &y_h * (ig * kappa);
            let direct_n = pe * &y_n * c(kappa);
            let mut parts = [
                CVector::zeros(n2),
                CVector::zeros(n2),
                CVector::zeros(n2),
                CVector::zeros(n2),
            ];
            let mut per_order = vec![CVector::zeros(n2); orders];
            per_order[0] += &direct_h;
            if orders > 1 {
                per_order[1] += &direct_n;
            }
            let mut zn = f * &y_n;
            let mut zh = f * &y_h;
            for k in 0..orders {
                let coef = kappa * (-1.0 / r).powi(k as i32 + 1);
                let t00 = pe * (ln * &zn) * c(coef);
                let t10 = pe * (h * &zn) * (ig * coef);
                let t01 = pe * (ln * &zh) * (ig * coef);
                let t11 = pe * (h * &zh) * (ig * ig * coef);
                for (slot, (term, power)) in [(t00, k + 2), (t10, k + 1), (t01, k + 1), (t11, k)]
                    .into_iter()
                    .enumerate()
                {
                    if power < orders {
                        per_order[power] += &term;
                    }
                    if power <= k_max {
                        parts[slot] += term;
                    }
                }
                zn = f * (ln * zn);
                zh = f * (ln * zh);
            }
            for (slot, p) in parts.into_iter().enumerate() {
                cols[slot].push(p);
            }
            for (p, col) in per_order.into_iter().enumerate() {
                order_cols[p].push(col);
            }
            direct_cols.push(direct_h + if k_max >= 1 { direct_n } else { CVector::zeros(n2) });
            frame.push(x);
        }
    }
    let frame = CMatrix::from_columns(&frame);
    let frame_h = frame.adjoint();
    let assemble = |cs: &[CVector]| CMatrix::from_columns(cs) * &frame_h;
    let components = [
        Superoperator::new(dim, assemble(&cols[0]))?,
        Superoperator::new(dim, assemble(&cols[1]))?,
        Superoperator::new(dim, assemble(&cols[2]))?,
        Superoperator::new(dim, assemble(&cols[3]))?,
    ];
    let direct = assemble(&direct_cols);
    let mut generator = direct;
    for comp in &components {
        generator += comp.matrix();
    }
    let h0 = system.logical_hamiltonian_superop().matrix() * system.code_superprojector().matrix();
    let baseline = h0 * (ig * kappa);
    let correction = &generator - &baseline;
    let mut order_norms = Vec::with_capacity(orders);
    let scale = 1e-9 * kappa.max(1e-300) * g.abs().max(1.0).powi(2);
    for (p, cs) in order_cols.iter().enumerate() {
        let mut m = assemble(cs);
        if p == 0 {
            m -= &baseline;
        }
        let nrm = m.norm();
        if p <= system.order && nrm >= scale {
            return Err(Error::Cancellation { order: p, norm: nrm });
        }
        order_norms.push(nrm);
    }
    Ok(EffectiveDynamics {
        generator: Superoperator::new(dim, generator)?,
        correction: Superoperator::new(dim, correction)?,
        components,
        t_map: t_map(system, r, g, k_max)?,
        k_max,
        truncation_estimate: *order_norms.last().expect("orders present"),
        order_norms,
        energies,
        inverses,
        code_frame: frame,
    })
}

#[derive(Clone, Debug)]
pub struct TMap {
    pub map: Superoperator,
    pub k_max: usize,
    pub term_norms: Vec<f64>,
}

/// T = 𝓟_C + Σ_{k=1}^{k_max} (−1/R)^k (F 𝓛_n)^{k−1} F (𝓛_n − ig𝓗) on code-space inputs,
/// with F the resolvent for each H₀ energy gap (the pseudo-inverse of 𝓛_E when g = 0).
pub fn t_map(system: &System, r: f64, g: f64, k_max: usize) -> Result<TMap> {
    require_projector_compatibility(system)?;
    if !(r > 0.0) {
        return Err(Error::InvalidInput("R must be positive".into()));
    }
    let dim = system.dim;
    let q = system.complementary().into_matrix();
    let h = system.hamiltonian.matrix();
    let ln = system.natural.matrix();
    let qhq = &q * h * &q;
    let (energies, states) = logical_eigenbasis(system);
    let mut inverses: Vec<GapInverse> = Vec::new();
    let mut frame = Vec::new();
    let mut cols = Vec::new();
    let mut norms_sq = vec![0.0; k_max + 1];
    let ig = C64::new(0.0, -g);
    for (v, ev) in states.iter().zip(&energies) {
        for (w, ew) in states.iter().zip(&energies) {
            let x = vectorize(&(v * w.adjoint()));
            let gap = ev - ew;
            let tol = 1e-12 * gap.abs().max(1.0);
            let pos = match inverses.iter().position(|f| (f.gap - gap).abs() <= tol) {
                Some(p) => p,
                None => {
                    inverses.push(gap_inverse(system, &q, &qhq, r, g, gap)?);
                    inverses.len() - 1
                }
            };
            let f = inverses[pos].inverse.matrix();
            let mut col = x.clone();
            norms_sq[0] += x.norm_squared();
            let mut z = f * (ln * &x + h * &x * ig);
            for (k, nk) in norms_sq.iter_mut().enumerate().take(k_max + 1).skip(1) {
                let term = &z * c((-1.0 / r).powi(k as i32));
                *nk += term.norm_squared();
                col += term;
                z = f * (ln * z);
            }
            cols.push(col);
            frame.push(x);
        }
    }
    let norms: Vec<f64> = norms_sq.iter().map(|s| s.sqrt()).collect();
    if k_max >= 2 {
        let (a, b) = (norms[k_max - 1], norms[k_max]);
        if a > 1e-300 && b / a >= 1.0 {
            return Err(Error::Divergent { ratio: b / a });
        }
    }
    let map = CMatrix::from_columns(&cols) * CMatrix::from_columns(&frame).adjoint();
    Ok(TMap {
        map: Superoperator::new(dim, map)?,
        k_max,
        term_norms: norms,
    })
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub r: f64,
    pub g: f64,
    pub times: Vec<f64>,
    /// ‖P_E ρ(t) − σ(t)‖ per probe and time.
    pub curves: Vec<Vec<f64>>,
    pub max_disagreement: f64,
}

/// Evolves the exact P_E ρ(t) and the effective equation from the same code state.
pub fn compare_effective_vs_exact(
    system: &System,
    dynamics: &EffectiveDynamics,
    kappa: f64,
    r: f64,
    g: f64,
    probes: &[(String, DensityMatrix)],
    times: &[f64],
) -> Result<Comparison> {
    let l = system.liouvillian(kappa, r, g);
    let frame = &dynamics.code_frame;
    let frame_h = frame.adjoint();
    let reduced = &frame_h * dynamics.generator.matrix() * frame;
    let dim = system.dim;
    let mut curves = Vec::with_capacity(probes.len());
    let mut worst: f64 = 0.0;
    let props: Vec<CMatrix> = times
        .iter()
        .map(|&t| linalg::expm(&reduced, t))
        .collect::<Result<_>>()?;
    for (_, rho0) in probes {
        check_in_code_space(rho0.matrix(), &system.code_basis)?;
        let exact = propagate(&l, rho0, times)?;
        let s0 = &frame_h * vectorize(rho0.matrix());
        let curve: Vec<f64> = exact
            .iter()
            .zip(&props)
            .map(|(rho, u)| {
                let sigma = frame * (u * &s0);
                let sigma = CMatrix::from_column_slice(dim, dim, sigma.as_slice());
                (system.recovery.apply(rho) - sigma).norm()
            })
            .collect();
        worst = curve.iter().cloned().fold(worst, f64::max);
        curves.push(curve);
    }
    Ok(Comparison {
        r,
        g,
        times: times.to_vec(),
        curves,
        max_disagreement: worst,
    })
}

/// ‖ρ(t) − T P_E ρ(t)‖ for one probe at time t.
pub fn t_map_residual(
    system: &System,
    tmap: &TMap,
    kappa: f64,
    r: f64,
    g: f64,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<f64> {
    let l = system.liouvillian(kappa, r, g);
    let rho = &propagate(&l, rho0, &[t])?[0];
    let projected = system.recovery.apply(rho);
    Ok((rho - tmap.map.apply(&projected)).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::probe_states;
    use crate::factory::models::{pauli, toy6};
    use crate::factory::synthesize;

    fn toy(h0: Option<CMatrix>) -> System {
        let m = toy6();
        let s = synthesize(&m, h0.as_ref()).unwrap();
        System::new(&m, &s).unwrap()
    }

    #[test]
    fn kernel_at_zero_lag() {
        let sys = toy(None);
        let l = sys.liouvillian(1.0, 20.0, 0.0);
        let k = memory_kernel(&l, &sys.recovery, &[0.0]).unwrap();
        let q = sys.complementary();
        let want = &(&(&(&sys.recovery * &l) * &q) * &l) * &sys.recovery;
        assert!((&k[0] - &want).norm() < 1e-10);
    }

    #[test]
    fn kernel_vanishes_without_natural_noise() {
        let mut sys = toy(None);
        sys.natural = Superoperator::zeros(sys.dim);
        let l = sys.liouvillian(1.0, 20.0, 0.0);
        for k in memory_kernel(&l, &sys.recovery, &[0.0, 0.1, 1.0]).unwrap() {
            assert!(k.norm() < 1e-12);
        }
    }

    #[test]
    fn first_term_cancels_and_leading_term_scales() {
        let sys = toy(None);
        let a = effective_liouvillian_h0_zero(&sys, 1.0, 50.0, 2).unwrap();
        assert!(a.term_norms[0] < 1e-9);
        let b = effective_liouvillian_h0_zero(&sys, 1.0, 500.0, 2).unwrap();
        let ratio = b.generator.norm() / a.generator.norm();
        assert!((ratio - 0.1).abs() < 1e-3);
        let pc = sys.code_superprojector();
        assert!((&(&pc * &a.generator) - &a.generator).norm() < 1e-10);
        assert!((&(&a.generator * &pc) - &a.generator).norm() < 1e-10);
    }

    #[test]
    fn general_reduces_to_closed_form() {
        let sys = toy(None);
        let a = effective_liouvillian_h0_zero(&sys, 1.0, 30.0, 4).unwrap();
        let b = effective_liouvillian_general(&sys, 1.0, 30.0, 0.0, 4).unwrap();
        assert!((&a.generator - &b.generator).norm() < 1e-12);
        assert_eq!(b.inverses.len(), 1);
    }

    #[test]
    fn resolvents_are_pseudo_inverses() {
        let sys = toy(Some(pauli('x').unwrap() * c(0.5)));
        let e = effective_liouvillian_general(&sys, 1.0, 50.0, 5.0, 4).unwrap();
        assert_eq!(e.inverses.len(), 3);
        for f in &e.inverses {
            assert!(f.law_residual < 1e-9);
        }
    }

    #[test]
    fn tmap_trivial_and_trace_preserving() {
        let sys = toy(None);
        let t0 = t_map(&sys, 40.0, 0.0, 0).unwrap();
        assert!((&t0.map - &sys.code_superprojector()).norm() < 1e-12);
        let t = t_map(&sys, 40.0, 0.0, 4).unwrap();
        for (_, p) in probe_states(&sys.code_basis) {
            let out = t.map.apply(p.matrix());
            assert!((out.trace() - c(1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn no_natural_noise_agrees_exactly() {
        let mut sys = toy(None);
        sys.natural = Superoperator::zeros(sys.dim);
        let e = effective_liouvillian_general(&sys, 1.0, 20.0, 0.0, 3).unwrap();
        let probes = probe_states(&sys.code_basis);
        let cmp = compare_effective_vs_exact(&sys, &e, 1.0, 20.0, 0.0, &probes, &[0.0, 0.5, 1.0]).unwrap();
        assert!(cmp.max_disagreement < 1e-10);
    }
}
