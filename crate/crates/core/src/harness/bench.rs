//! Timing: runtime per RHS per degree of freedom, and flux microbenchmarks.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::Precompute;
use crate::error::{Error, Result};
use crate::euler::{prim2cons_unchecked, ConservedState, GasParams, PrimitiveState};
use crate::fluxes::{flux_cartesian, flux_directional, rotated_flux, FluxKind, Rotation, RotationFrame};
use crate::harness::config::RunConfig;
use crate::harness::diagnostics::{build_discretization, initial_field};
use crate::with_dim;

/// Timed spans must be at least this many clock ticks long.
pub const MIN_TICKS: u32 = 1000;

/// Tolerance of the correctness gates.
pub const GATE_TOL: f64 = 1e-13;

/// Smallest observable step of the monotonic clock.
pub fn clock_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..16 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

fn check_span(total: Duration, what: &str) -> Result<()> {
    let tick = clock_resolution();
    if total < tick * MIN_TICKS {
        return Err(Error::Benchmark(format!(
            "{what}: timed span {total:?} is below {MIN_TICKS} clock ticks of {tick:?}; increase the sample count"
        )));
    }
    Ok(())
}

pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidResult {
    pub d: usize,
    pub p: usize,
    pub mesh: String,
    pub scheme: String,
    pub flux: String,
    pub n_rhs: usize,
    pub dofs: usize,
    /// Seconds per RHS evaluation per degree of freedom.
    pub pid_mean: f64,
    pub pid_std: f64,
}

/// Scheme label for reports; batched runs are marked with their width.
fn scheme_label(cfg: &RunConfig) -> String {
    match cfg.rhs.batch {
        Some(w) => format!("{}_batched{}", cfg.rhs.volume_scheme, w.lanes()),
        None => cfg.rhs.volume_scheme.to_string(),
    }
}

/// Times `n_rhs` evaluations after one untimed warm-up, `repeats` times, single-threaded.
pub fn measure_pid(cfg: &RunConfig, n_rhs: usize, repeats: usize) -> Result<PidResult> {
    if n_rhs == 0 || repeats == 0 {
        return Err(Error::config("n_rhs", "need at least one RHS evaluation and one repeat"));
    }
    let mut cfg = cfg.clone();
    cfg.rhs.parallel = false;
    with_dim!(cfg.d, D => pid_dim::<D>(&cfg, n_rhs, repeats))
}

fn pid_dim<const D: usize>(cfg: &RunConfig, n_rhs: usize, repeats: usize) -> Result<PidResult> {
    let disc = build_discretization::<D>(cfg)?;
    let u = initial_field(&disc, &cfg.ic);
    let mut du = disc.zeros(u.layout());
    disc.rhs(&u, &mut du)?;
    // gate: the timed variant agrees with the scalar kernel without precomputation
    if cfg.rhs.batch.is_some() || cfg.rhs.precompute != Precompute::Primitives {
        let mut base = cfg.clone();
        base.rhs.batch = None;
        base.rhs.precompute = Precompute::Primitives;
        let reference = build_discretization::<D>(&base)?;
        let mut dr = reference.zeros(u.layout());
        reference.rhs(&u, &mut dr)?;
        let diff = dr.data().iter().zip(du.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff > GATE_TOL * dr.max_abs().max(1.0) {
            return Err(Error::Benchmark(format!("{}: differs from the reference kernel by {diff:e}", scheme_label(cfg))));
        }
    }
    let dofs = disc.dofs();
    let mut samples = Vec::with_capacity(repeats);
    let mut total = Duration::ZERO;
    for _ in 0..repeats {
        let start = Instant::now();
        for _ in 0..n_rhs {
            disc.rhs(black_box(&u), &mut du)?;
            black_box(&du);
        }
        let el = start.elapsed();
        total += el;
        samples.push(el.as_secs_f64() / (n_rhs * dofs) as f64);
    }
    check_span(total, "pid")?;
    let (pid_mean, pid_std) = mean_std(&samples);
    Ok(PidResult {
        d: D,
        p: cfg.p,
        mesh: cfg.mesh_name(),
        scheme: scheme_label(cfg),
        flux: cfg.rhs.volume_flux.to_string(),
        n_rhs,
        dofs,
        pid_mean,
        pid_std,
    })
}

/// Flux evaluation variants compared by the microbenchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FluxForm {
    /// Coordinate direction, no normal vector.
    Cartesian,
    /// General direction `ñ`.
    Directional,
    /// Rotation frame built from `ñ` on every call.
    RotatedOnTheFly,
    /// Rotation frame precomputed outside the timed loop.
    RotatedPrecomputed,
}

impl FluxForm {
    pub const ALL: [FluxForm; 4] = [FluxForm::Cartesian, FluxForm::Directional, FluxForm::RotatedPrecomputed, FluxForm::RotatedOnTheFly];

    pub fn name(self) -> &'static str {
        match self {
            FluxForm::Cartesian => "cartesian",
            FluxForm::Directional => "directional",
            FluxForm::RotatedOnTheFly => "rotated_otf",
            FluxForm::RotatedPrecomputed => "rotated_pre",
        }
    }
}

impl fmt::Display for FluxForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FluxForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FluxForm::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config("forms", format!("unknown flux form '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrobenchResult {
    pub flux: FluxKind,
    pub form: FluxForm,
    pub d: usize,
    pub ns_mean: f64,
    pub ns_std: f64,
    pub n_samples: usize,
}

struct Inputs<const D: usize> {
    left: Vec<ConservedState<D>>,
    right: Vec<ConservedState<D>>,
    normals: Vec<[f64; D]>,
    frames: Vec<RotationFrame<D>>,
}

fn random_inputs<const D: usize>(n: usize, seed: u64, gas: &GasParams) -> Result<Inputs<D>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = |rng: &mut ChaCha8Rng| {
        let q = PrimitiveState {
            rho: rng.gen_range(1.0..=2.0),
            v: std::array::from_fn(|_| rng.gen_range(-1.0..=1.0)),
            p: rng.gen_range(1.0..=2.0),
        };
        prim2cons_unchecked(&q, gas)
    };
    let mut inp = Inputs { left: vec![], right: vec![], normals: vec![], frames: vec![] };
    for _ in 0..n {
        inp.left.push(state(&mut rng));
        inp.right.push(state(&mut rng));
        // scaled, non-unit contravariant directions as they occur on curved meshes
        let mut nv: [f64; D] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
        if nv.iter().all(|x| x.abs() < 0.1) {
            nv[0] = 1.0;
        }
        inp.frames.push(RotationFrame::new(&nv)?);
        inp.normals.push(nv);
    }
    Ok(inp)
}

fn rel_diff<const D: usize>(a: &ConservedState<D>, b: &ConservedState<D>) -> f64 {
    (*a - *b).max_abs() / a.max_abs().max(1.0)
}

/// Checks that all forms agree before anything is timed.
fn gate<const D: usize>(kind: FluxKind, inp: &Inputs<D>, gas: &GasParams) -> Result<()> {
    let mut worst: f64 = 0.0;
    for i in 0..inp.left.len().min(1000) {
        let (a, b) = (&inp.left[i], &inp.right[i]);
        let j = i % D;
        let mut e = [0.0; D];
        e[j] = 1.0;
        let cart = flux_cartesian(kind, a, b, j, gas)?;
        let frame = RotationFrame::new(&e)?;
        for other in [
            flux_directional(kind, a, b, &e, gas)?,
            rotated_flux(a, b, Rotation::OnTheFly(&e), kind, gas)?,
            rotated_flux(a, b, Rotation::Precomputed(&frame), kind, gas)?,
        ] {
            worst = worst.max(rel_diff(&cart, &other));
        }
        let n = &inp.normals[i];
        let dir = flux_directional(kind, a, b, n, gas)?;
        worst = worst.max(rel_diff(&dir, &rotated_flux(a, b, Rotation::OnTheFly(n), kind, gas)?));
        worst = worst.max(rel_diff(&dir, &rotated_flux(a, b, Rotation::Precomputed(&inp.frames[i]), kind, gas)?));
    }
    if worst > GATE_TOL {
        return Err(Error::Benchmark(format!("{kind}: flux forms disagree by {worst:e}")));
    }
    Ok(())
}

/// Nanoseconds per flux evaluation over pre-generated random state pairs,
/// `repeats` timed passes after one untimed pass.
pub fn microbench_flux(kind: FluxKind, form: FluxForm, d: usize, n_samples: usize, repeats: usize, seed: u64) -> Result<MicrobenchResult> {
    if n_samples == 0 || repeats == 0 {
        return Err(Error::config("samples", "need at least one sample and one repeat"));
    }
    with_dim!(d, D => micro_dim::<D>(kind, form, n_samples, repeats, seed))
}

fn micro_dim<const D: usize>(kind: FluxKind, form: FluxForm, n: usize, repeats: usize, seed: u64) -> Result<MicrobenchResult> {
    let gas = GasParams::default();
    let inp = random_inputs::<D>(n, seed, &gas)?;
    gate(kind, &inp, &gas)?;
    let pass = || -> Result<()> {
        for i in 0..n {
            let (a, b) = (black_box(&inp.left[i]), black_box(&inp.right[i]));
            let f = match form {
                FluxForm::Cartesian => flux_cartesian(kind, a, b, i % D, &gas)?,
                FluxForm::Directional => flux_directional(kind, a, b, &inp.normals[i], &gas)?,
                FluxForm::RotatedOnTheFly => rotated_flux(a, b, Rotation::OnTheFly(&inp.normals[i]), kind, &gas)?,
                FluxForm::RotatedPrecomputed => rotated_flux(a, b, Rotation::Precomputed(&inp.frames[i]), kind, &gas)?,
            };
            black_box(f);
        }
        Ok(())
    };
    pass()?;
    let mut ns = Vec::with_capacity(repeats);
    let mut total = Duration::ZERO;
    for _ in 0..repeats {
        let start = Instant::now();
        pass()?;
        let el = start.elapsed();
        total += el;
        ns.push(el.as_nanos() as f64 / n as f64);
    }
    check_span(total, "microbench")?;
    let (ns_mean, ns_std) = mean_std(&ns);
    Ok(MicrobenchResult { flux: kind, form, d: D, ns_mean, ns_std, n_samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics() {
        assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
        assert!(clock_resolution() > Duration::ZERO);
    }

    #[test]
    fn too_short_spans_are_rejected() {
        assert!(matches!(check_span(Duration::ZERO, "x"), Err(Error::Benchmark(_))));
        assert!(check_span(Duration::from_secs(1), "x").is_ok());
    }

    #[test]
    fn pid_reports_dofs_and_rejects_empty_runs() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["elements=2", "d=3", "scheme=gauss_fluxdiff", "surface_flux=llf"]).unwrap();
        let r = measure_pid(&cfg, 20, 2).unwrap();
        assert_eq!(r.dofs, 8 * 64);
        assert_eq!(r.scheme, "gauss_fluxdiff");
        assert!(r.pid_mean > 0.0);
        assert!(measure_pid(&cfg, 0, 5).is_err());
    }

    #[test]
    fn batched_pid_is_gated_and_labelled() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["elements=2", "batch_width=4", "precompute=primitives_and_logs"]).unwrap();
        let r = measure_pid(&cfg, 20, 2).unwrap();
        assert_eq!(r.scheme, "fluxdiff_batched4");
    }

    #[test]
    fn microbench_forms_run() {
        for form in FluxForm::ALL {
            let r = microbench_flux(FluxKind::RanochaEc, form, 3, 20_000, 2, 1).unwrap();
            assert!(r.ns_mean > 0.0 && r.n_samples == 20_000);
            assert_eq!(form.name().parse::<FluxForm>().unwrap(), form);
        }
        assert!(microbench_flux(FluxKind::ShimaEtal, FluxForm::Cartesian, 4, 10, 1, 1).is_err());
    }
}
