//! `autoqec` command-line front end.

pub mod manifest;
pub mod model_file;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use autoqec::dynamics::{
    extract_kappa_eff, logspace, probe_states, run_cells, scaling_sweep, window_factor, Coupling, SweepCell,
    SweepConfig, SweepRecord, System, WindowRule,
};
use autoqec::effective::{compare_effective_vs_exact, effective_liouvillian_general};
use autoqec::error::Error as CoreError;
use autoqec::factory::models::pauli;
use autoqec::factory::{eth_transparency_residual, pseudo_inverse_residuals, synthesize, SynthesisResult};
use autoqec::kl::{check_knill_laflamme, DEFAULT_KL_TOLERANCE};
use autoqec::linalg::relaxation_integral;
use autoqec::superop::spectral_kernel_projector;
use autoqec::verify::{check_lemma_condition, estimate_bound_constants, verify_relaxation_bound};
use autoqec::{CMatrix, CVector, DensityMatrix, C64};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use manifest::{config_hash, manifest_name, now_unix, record_run, RunRecord};
use model_file::{model_hash, resolve_model, ModelFile};
use output::{matrix, number, pretty, sweep_csv, vector};

/// Bad invocation or unreadable input; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Parser, Debug)]
#[command(name = "autoqec", version, about = "Build, verify and simulate autonomously error-corrected Lindblad systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Model JSON file or builtin name (toy6, lowering3)
    #[arg(long)]
    model: String,
    /// Correction order c; defaults to the model's
    #[arg(long)]
    order: Option<usize>,
    /// Logical Hamiltonian as a scaled Pauli on a qubit code, e.g. "x", "0.5x", "-z"
    #[arg(long)]
    h0: Option<String>,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct RateArgs {
    /// Natural dissipation rate κ
    #[arg(long)]
    kappa: Option<f64>,
    /// Hamiltonian coupling: a number, or "<a>R" for g = a·R
    #[arg(long)]
    g: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct PoolArgs {
    /// Worker threads
    #[arg(long, env = "AUTOQEC_WORKERS", default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the Knill-Laflamme condition at the requested order
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Synthesize engineered jumps and the error-transparent Hamiltonian
    Build {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Deviation traces at one engineering strength
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rates: RateArgs,
        /// Engineering strength R
        #[arg(long = "R")]
        r: String,
        /// Time grid "a:b:N" (linear); defaults to the slope window
        #[arg(long)]
        times: Option<String>,
        /// Seed for a random rotation of the probe states
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Logical error rate over a grid of engineering strengths
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rates: RateArgs,
        /// "a:b:Nlog", "a:b:N", a comma list or a single value
        #[arg(long = "R")]
        r: Option<String>,
        /// Window points per trace
        #[arg(long, default_value_t = 9)]
        points: usize,
        /// Fixed window start factor f (window [f/(Rκ), 2f/(Rκ)])
        #[arg(long)]
        window: Option<f64>,
        /// Seed for a random rotation of the probe states
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Effective code-space generator and comparison with exact dynamics
    Effective {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rates: RateArgs,
        /// Engineering strength R
        #[arg(long = "R")]
        r: String,
        /// Series truncation; defaults to c + 3
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Certify the symmetrized-product condition
    VerifyLemma {
        #[command(flatten)]
        model: ModelArgs,
        /// Largest power of the first factor
        #[arg(long, default_value_t = autoqec::verify::DEFAULT_K1)]
        k1: usize,
        /// Largest power of the second factor
        #[arg(long, default_value_t = autoqec::verify::DEFAULT_K2)]
        k2: usize,
        /// Residual tolerance
        #[arg(long, default_value_t = autoqec::verify::DEFAULT_LEMMA_TOLERANCE)]
        tol: f64,
    },
    /// Estimate the deviation-bound constant and the certified coupling range
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rates: RateArgs,
        /// R grid as for sweep; defaults to the model file's sweep grid, else 10:1000:7log
        #[arg(long = "R")]
        r: Option<String>,
        /// Window points per trace
        #[arg(long, default_value_t = 9)]
        points: usize,
        #[command(flatten)]
        pool: PoolArgs,
    },
}

/// Check verdict of a completed command.
enum Verdict {
    Pass,
    Fail,
}

struct Loaded {
    file: ModelFile,
    hash: String,
}

impl Loaded {
    fn new(args: &ModelArgs) -> Result<Self> {
        let mut file = resolve_model(&args.model).map_err(|e| UsageError(e.0))?;
        if let Some(c) = args.order {
            file.model.order = c;
        }
        if let Some(h) = &args.h0 {
            file.model.h0_logical = Some(parse_h0(h, file.model.code_basis.len())?);
        }
        let hash = model_hash(&file);
        Ok(Self { file, hash })
    }

    fn synthesize(&self) -> Result<SynthesisResult> {
        Ok(synthesize(&self.file.model, None)?)
    }

    fn system(&self) -> Result<(SynthesisResult, System)> {
        let s = self.synthesize()?;
        let sys = System::new(&self.file.model, &s)?;
        Ok((s, sys))
    }
}

/// "x", "0.5x", "-z": a multiple of a Pauli matrix on a two-dimensional code.
fn parse_h0(spec: &str, code_dim: usize) -> Result<CMatrix> {
    let spec = spec.trim();
    let Some(axis) = spec.chars().last() else {
        return usage("--h0: empty value");
    };
    let prefix = &spec[..spec.len() - axis.len_utf8()];
    let scale = match prefix {
        "" | "+" => 1.0,
        "-" => -1.0,
        p => p.trim_end_matches('*').parse::<f64>().map_err(|_| UsageError(format!("--h0: cannot parse {spec:?}")))?,
    };
    if code_dim != 2 {
        return usage(format!("--h0 needs a two-dimensional code, model has {code_dim}"));
    }
    let p = pauli(axis.to_ascii_lowercase()).map_err(|_| UsageError(format!("--h0: unknown axis {axis:?}")))?;
    Ok(p * C64::new(scale, 0.0))
}

fn parse_float(flag: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| UsageError(format!("{flag}: cannot parse {s:?}")).into())
}

/// "a:b:Nlog" (log-spaced), "a:b:N" (linear), a comma list or a single value.
pub fn parse_grid(flag: &str, s: &str) -> Result<Vec<f64>> {
    if s.contains(',') {
        return s.split(',').map(|x| parse_float(flag, x.trim())).collect();
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => Ok(vec![parse_float(flag, one)?]),
        [a, b, n] => {
            let (a, b) = (parse_float(flag, a)?, parse_float(flag, b)?);
            let (count, log) = match n.strip_suffix("log") {
                Some(k) => (k, true),
                None => (*n, false),
            };
            let n: usize = count
                .parse()
                .map_err(|_| UsageError(format!("{flag}: cannot parse point count in {s:?}")))?;
            if n == 0 {
                return usage(format!("{flag}: empty grid"));
            }
            if log {
                if !(a > 0.0 && b > 0.0) {
                    return usage(format!("{flag}: log grid needs positive end points"));
                }
                Ok(logspace(a, b, n))
            } else if n == 1 {
                Ok(vec![a])
            } else {
                Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
            }
        }
        _ => usage(format!("{flag}: expected \"a:b:Nlog\", \"a:b:N\", \"a,b,...\" or a number, got {s:?}")),
    }
}

/// A number, or "<a>R" for a coupling proportional to R.
pub fn parse_coupling(s: &str) -> Result<Coupling> {
    let t = s.trim();
    match t.strip_suffix('R').or_else(|| t.strip_suffix('r')) {
        Some(a) => {
            let a = a.trim_end_matches('*');
            let a = if a.is_empty() { 1.0 } else { parse_float("--g", a)? };
            Ok(Coupling::Proportional(a))
        }
        None => Ok(Coupling::Fixed(parse_float("--g", t)?)),
    }
}

fn coupling_json(c: Coupling) -> Value {
    match c {
        Coupling::Fixed(g) => json!({"fixed": g}),
        Coupling::Proportional(a) => json!({"per_R": a}),
    }
}

struct Rates {
    kappa: f64,
    coupling: Coupling,
}

fn rates(args: &RateArgs, file: &ModelFile) -> Result<Rates> {
    let kappa = args.kappa.or(file.sweep.kappa).unwrap_or(1.0);
    if !(kappa > 0.0) {
        return usage("--kappa must be positive");
    }
    let g = args.g.clone().or_else(|| file.sweep.g.clone()).unwrap_or_else(|| "0".into());
    Ok(Rates {
        kappa,
        coupling: parse_coupling(&g)?,
    })
}

fn single_r(s: &str) -> Result<f64> {
    let r = parse_float("--R", s)?;
    if !(r > 0.0) {
        return usage("--R must be positive");
    }
    Ok(r)
}

fn default_grid(arg: &Option<String>, file: &ModelFile) -> Result<Vec<f64>> {
    let s = arg.clone().or_else(|| file.sweep.r.clone()).unwrap_or_else(|| "10:1000:7log".into());
    let g = parse_grid("--R", &s)?;
    if g.iter().any(|r| !(*r > 0.0)) {
        return usage("--R values must be positive");
    }
    Ok(g)
}

/// Standard probes, optionally rotated by a seeded Haar-random unitary on the code space.
fn probes(code_basis: &[CVector], seed: Option<u64>) -> Result<Vec<(String, DensityMatrix)>> {
    let Some(seed) = seed else {
        return Ok(probe_states(code_basis));
    };
    let dc = code_basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(dc, dc, |_, _| {
        C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(dc, |i, _| {
        let d = r[(i, i)];
        if d.norm() > 0.0 {
            d / C64::new(d.norm(), 0.0)
        } else {
            C64::new(1.0, 0.0)
        }
    }));
    let u = q * phases;
    let v = CMatrix::from_columns(code_basis) * u;
    let rotated: Vec<CVector> = v.column_iter().map(|c| c.into_owned()).collect();
    Ok(probe_states(&rotated)
        .into_iter()
        .map(|(n, p)| (format!("{n}~"), p))
        .collect())
}

struct Emitter<'a> {
    command: &'a str,
    argv: &'a [String],
    workers: usize,
    started: u64,
}

impl Emitter<'_> {
    /// Writes `bytes` to `out` (or stdout) after recording the manifest; `render` receives the
    /// manifest file name so the output can reference it.
    fn emit(
        &self,
        out: &Option<PathBuf>,
        config: &Value,
        model_hash: &str,
        render: impl Fn(Option<&str>) -> Result<Vec<u8>>,
    ) -> Result<()> {
        match out {
            None => {
                let bytes = render(None)?;
                std::io::stdout().write_all(&bytes)?;
            }
            Some(path) => {
                let hash = config_hash(self.command, config, model_hash);
                let name = manifest_name(&hash);
                let bytes = render(Some(&name))?;
                write_file(path, &bytes)?;
                record_run(
                    path,
                    self.command,
                    config,
                    &hash,
                    model_hash,
                    RunRecord {
                        argv: self.argv.to_vec(),
                        workers: self.workers,
                        started_unix: self.started,
                        finished_unix: now_unix(),
                        outputs: vec![path.display().to_string()],
                    },
                )?;
            }
        }
        Ok(())
    }

    fn emit_json(&self, out: &Option<PathBuf>, config: &Value, model_hash: &str, report: Value) -> Result<()> {
        self.emit(out, config, model_hash, |name| {
            let mut r = report.clone();
            if let (Some(n), Some(obj)) = (name, r.as_object_mut()) {
                obj.insert("manifest".into(), json!(n));
            }
            Ok(pretty(&r).into_bytes())
        })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn base_config(args: &ModelArgs, file: &ModelFile) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("order".into(), json!(file.model.order));
    m.insert("h0".into(), json!(args.h0));
    m
}

fn validate(e: &Emitter, args: &ModelArgs) -> Result<Verdict> {
    let l = Loaded::new(args)?;
    let m = &l.file.model;
    let hier = m.hierarchy(m.order)?;
    let rep = check_knill_laflamme(&m.code_basis, &hier, DEFAULT_KL_TOLERANCE)?;
    let verdict = if rep.passed { "PASS" } else { "FAIL" };
    println!("KL {verdict} worst_residual={:.3e}", rep.worst_residual);
    for p in rep.offending_pairs.iter().take(10) {
        println!("  {} {} residual={:.3e}", p.left, p.right, p.residual);
    }
    let report = json!({
        "model": m.name,
        "order": rep.order,
        "passed": rep.passed,
        "tolerance": rep.tolerance,
        "worst_residual": rep.worst_residual,
        "labels": rep.labels.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
        "gram": matrix(&rep.gram),
        "offending_pairs": rep.offending_pairs.iter().map(|p| json!({
            "left": p.left.to_string(), "right": p.right.to_string(), "residual": p.residual,
        })).collect::<Vec<_>>(),
    });
    if args.out.is_some() {
        e.emit_json(&args.out, &Value::Object(base_config(args, &l.file)), &l.hash, report)?;
    }
    Ok(if rep.passed { Verdict::Pass } else { Verdict::Fail })
}

fn build(e: &Emitter, args: &ModelArgs) -> Result<Verdict> {
    let l = Loaded::new(args)?;
    let m = &l.file.model;
    let s = l.synthesize()?;
    let hier = m.hierarchy(m.order)?;
    let pe = &s.recovery_projector;
    let spectral = spectral_kernel_projector(&s.engineered_liouvillian)?;
    let quad = relaxation_integral(s.engineered_liouvillian.matrix(), s.complementary_projector.matrix())?;
    let (law1, law2) = pseudo_inverse_residuals(&s.engineered_liouvillian, &s.pseudo_inverse);
    let transparency = eth_transparency_residual(&s.eth, &s.embedded_h0(), &hier, &s.code_basis);
    let checks = json!({
        "recovery_explicit_vs_spectral": (pe - &spectral).norm(),
        "recovery_idempotence": (&(pe * pe) - pe).norm(),
        "recovery_annihilates_engineering": (pe * &s.engineered_liouvillian).norm(),
        "pseudo_inverse_vs_quadrature": (s.pseudo_inverse.matrix() - quad).norm(),
        "pseudo_inverse_law_lxl": law1,
        "pseudo_inverse_law_xlx": law2,
        "transparency": transparency,
    });
    let report = json!({
        "model": m.name,
        "order": s.order,
        "error_sets": hier.sets.iter().enumerate().map(|(n, set)| json!({
            "order": n,
            "entries": set.iter().map(|en| json!({"label": en.label.to_string(), "op": matrix(en.op.matrix())})).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "error_counts": s.error_basis.counts,
        "residual_states": s.error_basis.residual.iter().map(vector).collect::<Vec<_>>(),
        "engineered_jumps": s.engineered_jumps.iter().map(|j| json!({"label": j.label, "op": matrix(j.op.matrix())})).collect::<Vec<_>>(),
        "h0_logical": matrix(&s.h0_logical),
        "hamiltonian": matrix(s.eth.matrix()),
        "checks": checks,
    });
    eprintln!(
        "built {} engineered jumps, counts {:?}",
        s.engineered_jumps.len(),
        s.error_basis.counts
    );
    e.emit_json(&args.out, &Value::Object(base_config(args, &l.file)), &l.hash, report)?;
    Ok(Verdict::Pass)
}

fn fit_failed(record: &SweepRecord) -> bool {
    if let Err(msg) = &record.fit {
        eprintln!("{msg}");
        return true;
    }
    false
}

fn simulate(e: &Emitter, args: &ModelArgs, ra: &RateArgs, r: &str, times: &Option<String>, seed: Option<u64>) -> Result<Verdict> {
    let l = Loaded::new(args)?;
    let rt = rates(ra, &l.file)?;
    let r = single_r(r)?;
    let (_, sys) = l.system()?;
    let probes = probes(&sys.code_basis, seed)?;
    let (grid, window) = match times {
        Some(t) => {
            let g = parse_grid("--times", t)?;
            if g.iter().any(|t| *t < 0.0) {
                return usage("--times must be non-negative");
            }
            let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = g.iter().cloned().fold(0.0, f64::max);
            (g, (lo, hi))
        }
        None => {
            let f = window_factor(&sys, rt.kappa, &[r], rt.coupling, WindowRule::Auto)?;
            let t0 = f / (r * rt.kappa);
            let mut g = vec![0.0];
            g.extend((0..9).map(|k| t0 * (1.0 + k as f64 / 8.0)));
            (g, (t0, 2.0 * t0))
        }
    };
    let grid_c = grid.clone();
    let traces = run_cells(&sys, rt.kappa, &[r], rt.coupling, &probes, &move |_| grid_c.clone(), 1)?;
    let cells = traces
        .into_iter()
        .map(|t| {
            let kappa_eff = extract_kappa_eff(&t.times, &t.deviations, window)?;
            Ok(SweepCell {
                r: t.r,
                g: t.g,
                probe: t.probe,
                times: t.times,
                deviations: t.deviations,
                kappa_eff,
            })
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    let record = SweepRecord {
        r_values: vec![r],
        window_factor: window.0 * r * rt.kappa,
        probe_names: probes.iter().map(|(n, _)| n.clone()).collect(),
        kappa_eff: vec![cells.iter().map(|c| c.kappa_eff).fold(0.0, f64::max)],
        cells,
        fit: Err("single R".into()),
    };
    let mut cfg = base_config(args, &l.file);
    cfg.insert("kappa".into(), json!(rt.kappa));
    cfg.insert("g".into(), coupling_json(rt.coupling));
    cfg.insert("R".into(), json!(r));
    cfg.insert("times".into(), json!(grid));
    cfg.insert("seed".into(), json!(seed));
    e.emit(&args.out, &Value::Object(cfg), &l.hash, |name| sweep_csv(&record, name))?;
    Ok(Verdict::Pass)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    e: &Emitter,
    args: &ModelArgs,
    ra: &RateArgs,
    r: &Option<String>,
    points: usize,
    window: Option<f64>,
    seed: Option<u64>,
    workers: usize,
) -> Result<Verdict> {
    let l = Loaded::new(args)?;
    let rt = rates(ra, &l.file)?;
    let grid = default_grid(r, &l.file)?;
    let (_, sys) = l.system()?;
    let probes = probes(&sys.code_basis, seed)?;
    let mut config = SweepConfig::new(grid.clone(), probes);
    config.kappa = rt.kappa;
    config.coupling = rt.coupling;
    config.points = points;
    config.workers = workers;
    if let Some(f) = window {
        config.window = WindowRule::Fixed(f);
    }
    let record = scaling_sweep(&sys, &config)?;
    if let Ok(f) = &record.fit {
        eprintln!(
            "exponent s = {:.4} ± {:.4} (window factor {:.4})",
            f.exponent,
            f.stderr.unwrap_or(f64::NAN),
            record.window_factor
        );
    }
    let mut cfg = base_config(args, &l.file);
    cfg.insert("kappa".into(), json!(rt.kappa));
    cfg.insert("g".into(), coupling_json(rt.coupling));
    cfg.insert("R".into(), json!(grid));
    cfg.insert("points".into(), json!(points));
    cfg.insert("window".into(), json!(window));
    cfg.insert("seed".into(), json!(seed));
    e.emit(&args.out, &Value::Object(cfg), &l.hash, |name| sweep_csv(&record, name))?;
    Ok(if fit_failed(&record) { Verdict::Fail } else { Verdict::Pass })
}

fn effective(e: &Emitter, args: &ModelArgs, ra: &RateArgs, r: &str, kmax: Option<usize>) -> Result<Verdict> {
    let l = Loaded::new(args)?;
    let rt = rates(ra, &l.file)?;
    let r = single_r(r)?;
    let c = l.file.model.order;
    let kmax = kmax.or(l.file.sweep.kmax).unwrap_or(c + 3);
    let g = rt.coupling.at(r);
    let (_, sys) = l.system()?;
    let eff = effective_liouvillian_general(&sys, rt.kappa, r, g, kmax)?;
    let probes = probe_states(&sys.code_basis);
    let times: Vec<f64> = (0..9).map(|k| (20.0 + 20.0 * k as f64 / 8.0) / (r * rt.kappa)).collect();
    let cmp = compare_effective_vs_exact(&sys, &eff, rt.kappa, r, g, &probes, &times)?;
    let frame = &eff.code_frame;
    let reduced = frame.adjoint() * eff.generator.matrix() * frame;
    eprintln!(
        "effective generator: correction norm {:.3e}, truncation estimate {:.3e}, max disagreement {:.3e}",
        eff.correction.norm(),
        eff.truncation_estimate,
        cmp.max_disagreement
    );
    let names = ["00", "10", "01", "11"];
    let report = json!({
        "model": l.file.model.name,
        "order": c,
        "kappa": rt.kappa,
        "R": r,
        "g": g,
        "kmax": kmax,
        "generator_code_frame": matrix(&reduced),
        "correction_norm": eff.correction.norm(),
        "component_norms": names.iter().zip(&eff.components).map(|(n, m)| (n.to_string(), number(m.norm()))).collect::<serde_json::Map<_, _>>(),
        "order_norms": eff.order_norms.iter().map(|x| number(*x)).collect::<Vec<_>>(),
        "truncation_estimate": number(eff.truncation_estimate),
        "energies": eff.energies,
        "resolvents": eff.inverses.iter().map(|f| json!({"gap": f.gap, "law_residual": f.law_residual})).collect::<Vec<_>>(),
        "t_map_term_norms": eff.t_map.term_norms,
        "comparison": {
            "times": cmp.times,
            "probes": probes.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            "curves": cmp.curves,
            "max_disagreement": cmp.max_disagreement,
        },
    });
    let mut cfg = base_config(args, &l.file);
    cfg.insert("kappa".into(), json!(rt.kappa));
    cfg.insert("g".into(), coupling_json(rt.coupling));
    cfg.insert("R".into(), json!(r));
    cfg.insert("kmax".into(), json!(kmax));
    e.emit_json(&args.out, &Value::Object(cfg), &l.hash, report)?;
    Ok(Verdict::Pass)
}

fn verify_lemma(e: &Emitter, args: &ModelArgs, k1: usize, k2: usize, tol: f64) -> Result<Verdict> {
    let l = Loaded::new(args)?;
    let (_, sys) = l.system()?;
    let c = l.file.model.order;
    let rep = check_lemma_condition(&sys, c, k1, k2, tol)?;
    let ((a, b, d), worst) = rep.worst;
    let verdict = if rep.passed { "PASS" } else { "FAIL" };
    eprintln!("LEMMA {verdict} worst=({a},{b},{d}) residual={worst:.3e}");
    let report = json!({
        "model": l.file.model.name,
        "order": c,
        "k1_max": k1,
        "k2_max": k2,
        "tolerance": tol,
        "passed": rep.passed,
        "worst": {"k": [a, b, d], "residual": worst},
        "residuals": rep.residuals.iter().map(|((x, y, z), v)| json!({"k": [x, y, z], "residual": v})).collect::<Vec<_>>(),
    });
    let mut cfg = base_config(args, &l.file);
    cfg.insert("k1".into(), json!(k1));
    cfg.insert("k2".into(), json!(k2));
    cfg.insert("tol".into(), json!(tol));
    e.emit_json(&args.out, &Value::Object(cfg), &l.hash, report)?;
    Ok(if rep.passed { Verdict::Pass } else { Verdict::Fail })
}

fn bounds(e: &Emitter, args: &ModelArgs, ra: &RateArgs, r: &Option<String>, points: usize, workers: usize) -> Result<Verdict> {
    let l = Loaded::new(args)?;
    let rt = rates(ra, &l.file)?;
    let mut grid = default_grid(r, &l.file)?;
    grid.sort_by(f64::total_cmp);
    if points < 1 {
        return usage("--points must be positive");
    }
    let (_, sys) = l.system()?;
    let probes = probe_states(&sys.code_basis);
    let f = window_factor(&sys, rt.kappa, &grid, rt.coupling, WindowRule::Auto)?;
    let factors: Vec<f64> = (0..points)
        .map(|k| f * (1.0 + k as f64 / (points.max(2) - 1) as f64))
        .collect();
    let c = l.file.model.order as f64;
    let est = estimate_bound_constants(&sys, rt.kappa, &grid, rt.coupling, &factors, &probes, c, workers)?;
    let r_max = *grid.last().expect("nonempty grid");
    let gs: Vec<f64> = grid.iter().map(|&r| rt.coupling.at(r) * r_max / r).collect();
    let relax = match verify_relaxation_bound(&sys, rt.kappa, r_max, &gs) {
        Ok(rep) => json!({
            "R": rep.r,
            "lambda0": rep.lambda0,
            "m_tilde": rep.m_tilde,
            "g0_tilde": number(rep.g0_tilde),
            "samples": rep.samples.iter().map(|s| json!({
                "g": s.g,
                "envelope_ratio": s.envelope_ratio,
                "certified": s.certified,
                "within_certified_range": s.within_certified_range,
                "spectral_rate": number(s.spectral_rate),
            })).collect::<Vec<_>>(),
        }),
        Err(err) => json!({"error": err.to_string()}),
    };
    eprintln!(
        "M = {:.4e}, tail ratio {:.3}, {}",
        est.m,
        est.tail_ratio,
        if est.stable { "stable" } else { "unstable" }
    );
    let report = json!({
        "model": l.file.model.name,
        "order": l.file.model.order,
        "exponent": est.exponent,
        "M": est.m,
        "per_R": est.per_r.iter().map(|(r, m)| json!({"R": r, "max_normalized": m})).collect::<Vec<_>>(),
        "tail_ratio": number(est.tail_ratio),
        "stable": est.stable,
        "max_g_over_R": est.max_g_over_r,
        "window_factor": f,
        "relaxation": relax,
    });
    let mut cfg = base_config(args, &l.file);
    cfg.insert("kappa".into(), json!(rt.kappa));
    cfg.insert("g".into(), coupling_json(rt.coupling));
    cfg.insert("R".into(), json!(grid));
    cfg.insert("points".into(), json!(points));
    e.emit_json(&args.out, &Value::Object(cfg), &l.hash, report)?;
    Ok(if est.stable { Verdict::Pass } else { Verdict::Fail })
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<Verdict> {
    let started = now_unix();
    let (name, workers) = match &cli.command {
        Command::Validate { .. } => ("validate", 1),
        Command::Build { .. } => ("build", 1),
        Command::Simulate { .. } => ("simulate", 1),
        Command::Sweep { pool, .. } => ("sweep", pool.workers),
        Command::Effective { .. } => ("effective", 1),
        Command::VerifyLemma { .. } => ("verify-lemma", 1),
        Command::Bounds { pool, .. } => ("bounds", pool.workers),
    };
    if workers == 0 {
        return usage("--workers must be at least 1");
    }
    let e = Emitter {
        command: name,
        argv,
        workers,
        started,
    };
    match &cli.command {
        Command::Validate { model } => validate(&e, model),
        Command::Build { model } => build(&e, model),
        Command::Simulate { model, rates, r, times, seed } => simulate(&e, model, rates, r, times, *seed),
        Command::Sweep { model, rates, r, points, window, seed, pool } => {
            sweep(&e, model, rates, r, *points, *window, *seed, pool.workers)
        }
        Command::Effective { model, rates, r, kmax } => effective(&e, model, rates, r, *kmax),
        Command::VerifyLemma { model, k1, k2, tol } => verify_lemma(&e, model, *k1, *k2, *tol),
        Command::Bounds { model, rates, r, points, pool } => bounds(&e, model, rates, r, *points, pool.workers),
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code:
/// 0 pass, 1 check failure or computation error, 2 usage or input error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, &argv) {
        Ok(Verdict::Pass) => 0,
        Ok(Verdict::Fail) => 1,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("--R", "100").unwrap(), vec![100.0]);
        let g = parse_grid("--R", "10:1000:3log").unwrap();
        assert!((g[1] - 100.0).abs() < 1e-9);
        assert_eq!(parse_grid("--R", "0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("--R", "1:2").is_err());
        assert_eq!(parse_grid("--R", "10, 20,40").unwrap(), vec![10.0, 20.0, 40.0]);
        assert!(parse_grid("--R", "0:10:3log").is_err());
    }

    #[test]
    fn couplings() {
        assert_eq!(parse_coupling("0.1R").unwrap(), Coupling::Proportional(0.1));
        assert_eq!(parse_coupling("R").unwrap(), Coupling::Proportional(1.0));
        assert_eq!(parse_coupling("2.5").unwrap(), Coupling::Fixed(2.5));
        assert!(parse_coupling("abc").is_err());
    }

    #[test]
    fn h0_specs() {
        let h = parse_h0("0.5x", 2).unwrap();
        assert!((h[(0, 1)].re - 0.5).abs() < 1e-15);
        let h = parse_h0("-z", 2).unwrap();
        assert!((h[(0, 0)].re + 1.0).abs() < 1e-15);
        assert!(parse_h0("x", 1).is_err());
        assert!(parse_h0("q", 2).is_err());
    }

    #[test]
    fn seeded_probes_are_reproducible_and_valid() {
        let basis = autoqec::factory::models::toy6().code_basis;
        let a = probes(&basis, Some(7)).unwrap();
        let b = probes(&basis, Some(7)).unwrap();
        assert_eq!(a.len(), 6);
        for ((na, pa), (nb, pb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(pa.matrix(), pb.matrix());
        }
    }
}
