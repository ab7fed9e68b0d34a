//! Acceptance criteria P1-P9. Prints one PASS/FAIL line per criterion.
//! Set `ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit status.

use std::time::Instant;

use markovian_embed::correlator::{
    bose, fdt_residual, model_from_regime, ri_decompose, BasisTag, BrownianParams, CorrelatorModel, Regime,
};
use markovian_embed::embeddings::{
    bogoliubov_transform, build_hilbert_retarded, build_keldysh_pseudomode, build_namba_keldysh,
    build_preset, build_pure_state, build_pure_state_sectors, interior_block_deviation,
    strong_damping_reduce_sector, ExtendedGenerator, PureStateMode, TransformSpec,
};
use markovian_embed::liouville::{pauli, CMat, SystemSpec};
use markovian_embed::oracles::{dephasing_coherence, single_mode_exact};
use markovian_embed::propagator::{
    embedded_bath_correlation, evolve, evolve_monitored, observable, EvolveOptions, Termination, Trajectory,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const P1_TOL: f64 = 1e-6;
const P1_RUNTIME_S: f64 = 60.0;
const P2_TOL: f64 = 1e-7;
const P3_TOL: f64 = 1e-6;
const P4_FDT_REL: f64 = 1e-2;
const P4_RECON: f64 = 1e-10;
const P5_STABLE_TRACE: f64 = 1e-6;
const P6_TOL: f64 = 1e-8;
const P7_TOL: f64 = 1e-3;
const P8_TOL: f64 = 1e-8;
const P9_TOL: f64 = 1e-14;
const INTEGRATOR_TOL: f64 = 1e-10;

type Outcome = Result<String, String>;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

fn grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}

fn ground() -> CMat {
    let mut r = CMat::zeros(2, 2);
    r[(0, 0)] = Complex64::ONE;
    r
}

fn plus() -> CMat {
    CMat::from_element(2, 2, c(0.5))
}

fn spin_boson() -> SystemSpec {
    SystemSpec::new(pauli('x').unwrap() * c(0.5), pauli('z').unwrap()).unwrap()
}

fn dephasing() -> SystemSpec {
    SystemSpec::new(CMat::zeros(2, 2), pauli('z').unwrap()).unwrap()
}

fn max_dev(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn opts() -> EvolveOptions {
    EvolveOptions::with_tol(INTEGRATOR_TOL)
}

fn run(g: &ExtendedGenerator, rho0: &CMat, t: &[f64]) -> Result<Trajectory, String> {
    evolve(g, rho0, t, &opts()).map_err(|e| format!("{}: {e}", g.frame_tag))
}

/// Keldysh, pure-state and retarded frames for a single-pair bath at `n_f`.
fn frames(sys: &SystemSpec, m: &CorrelatorModel, n_f: usize) -> Result<Vec<(String, ExtendedGenerator)>, String> {
    let e = |r: markovian_embed::Result<ExtendedGenerator>| r.map_err(|e| e.to_string());
    let pair = m.pairs[0];
    // n_ref = 0 with the simplified coupling m delta lambda = c1* + c2
    let d = c((pair.c1.conj() + pair.c2).re.sqrt());
    let g = c((pair.c1 - pair.c2).norm().sqrt());
    let diag = ri_decompose(m, BasisTag::ExpDiagonal).map_err(|e| e.to_string())?;
    Ok(vec![
        ("keldysh".into(), e(build_keldysh_pseudomode(sys, m, 0.0, d, d, n_f))?),
        ("pure-state".into(), e(build_pure_state(sys, m, g, g, n_f))?),
        ("hilbert-expdiag".into(), e(build_hilbert_retarded(sys, &diag, &[n_f, n_f]))?),
    ])
}

fn p1() -> Outcome {
    let t0 = Instant::now();
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.2, 1.0).map_err(|e| e.to_string())?;
    let m = model_from_regime(&p, Regime::QuasiThermal).map_err(|e| e.to_string())?;
    let sys = spin_boson();
    let t = grid(20.0, 201);
    let sz = pauli('z').unwrap();
    let n_f = 12;
    let mut series = Vec::new();
    for (name, g) in frames(&sys, &m, n_f)? {
        series.push((name, observable(&run(&g, &ground(), &t)?, &sz).unwrap()));
    }
    // Lindblad pseudomode at the physical reference occupation needs a deeper truncation
    let n_b = bose(p.beta, 1.0);
    let gc = c((p.c0 * p.c0 / 2.0).sqrt());
    let ex1 = build_keldysh_pseudomode(&sys, &m, n_b, gc, gc, 26).map_err(|e| e.to_string())?;
    series.push(("keldysh n_ref=n_beta (n_F=26)".into(), observable(&run(&ex1, &ground(), &t)?, &sz).unwrap()));
    let mut worst: f64 = 0.0;
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            worst = worst.max(max_dev(&series[i].1, &series[j].1));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let msg = format!("max pairwise <sz> deviation {worst:.2e} (n_F = {n_f}), runtime {secs:.1}s");
    if worst < P1_TOL && secs < P1_RUNTIME_S {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn coherence(tr: &Trajectory) -> Vec<Complex64> {
    let r0 = tr.reduced[0][(0, 1)];
    tr.reduced.iter().map(|r| r[(0, 1)] / r0).collect()
}

fn p2() -> Outcome {
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.2, 1.0).map_err(|e| e.to_string())?;
    let m = model_from_regime(&p, Regime::QuasiThermal).map_err(|e| e.to_string())?;
    let sys = dephasing();
    let t = grid(20.0, 101);
    let oracle: Vec<Complex64> = t.iter().map(|&s| dephasing_coherence(&m, s).unwrap()).collect();
    let mut fr = frames(&sys, &m, 16)?;
    let ps = ri_decompose(&m, BasisTag::PhaseSpace).map_err(|e| e.to_string())?;
    fr.push(("hilbert-phasespace".into(), build_hilbert_retarded(&sys, &ps, &[16, 16]).map_err(|e| e.to_string())?));
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, g) in &fr {
        let d = max_dev(&coherence(&run(g, &plus(), &t)?), &oracle);
        worst = worst.max(d);
        parts.push(format!("{name} {d:.1e}"));
    }
    let msg = format!("max coherence deviation {worst:.2e} [{}]", parts.join(", "));
    if worst < P2_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn p3() -> Outcome {
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let m = model_from_regime(&p, Regime::QuasiThermal).map_err(|e| e.to_string())?;
    let sys = spin_boson();
    let t = grid(10.0, 101);
    let n_b = bose(p.beta, 1.0);
    let g = p.c0 / 2f64.sqrt();
    let exact = single_mode_exact(&sys, 1.0, g, n_b, 60, &ground(), &t).map_err(|e| e.to_string())?;
    let sz = pauli('z').unwrap();
    let reference = observable(&exact, &sz).unwrap();
    let n_f = 22;
    let mut fr = frames(&sys, &m, n_f)?;
    fr.push((
        "keldysh n_ref=n_beta".into(),
        build_keldysh_pseudomode(&sys, &m, n_b, c(g), c(g), 30).map_err(|e| e.to_string())?,
    ));
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, gen) in &fr {
        let d = max_dev(&observable(&run(gen, &ground(), &t)?, &sz).unwrap(), &reference);
        worst = worst.max(d);
        parts.push(format!("{name} {d:.1e}"));
    }
    let msg = format!("max <sz> deviation from exact diagonalization {worst:.2e} [{}]", parts.join(", "));
    if worst < P3_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn p4() -> Outcome {
    let hot = BrownianParams::from_zeta(0.5, 1.0, 0.05, 0.1).map_err(|e| e.to_string())?;
    let m = model_from_regime(&hot, Regime::ClassicalHighTemperature).map_err(|e| e.to_string())?;
    let zeta = hot.zeta().unwrap();
    let half = hot.gamma0 / 2.0;
    let omega: Vec<f64> = (0..=40)
        .flat_map(|k| {
            let x = -half + 2.0 * half * k as f64 / 40.0;
            [zeta + x, -zeta + x]
        })
        .collect();
    let rep = fdt_residual(&m, &hot, &omega).map_err(|e| e.to_string())?;
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.2, 1.0).map_err(|e| e.to_string())?;
    let classical = model_from_regime(&p, Regime::Classical).map_err(|e| e.to_string())?;
    let tg = grid(25.0, 200);
    let mut recon: f64 = 0.0;
    for b in [BasisTag::ExpDiagonal, BasisTag::PhaseSpace] {
        recon = recon.max(ri_decompose(&classical, b).map_err(|e| e.to_string())?.reconstruction_residual(&classical, &tg));
    }
    let qp = ri_decompose(&m, BasisTag::ClassicalQP).map_err(|e| e.to_string())?;
    recon = recon.max(qp.reconstruction_residual(&m, &tg));
    let msg = format!("near-peak FDT relative residual {:.2e}; max reconstruction residual {recon:.2e}", rep.max_rel);
    if rep.max_rel < P4_FDT_REL && recon < P4_RECON {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn p5() -> Outcome {
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let m = model_from_regime(&p, Regime::Classical).map_err(|e| e.to_string())?;
    let sys = spin_boson();
    let n_f = 6;
    let t = grid(50.0, 501);
    let coth = 1.0 / (p.beta * p.omega0 / 2.0).tanh();
    let d = c((p.c0 * p.c0 / (2.0 * p.omega0) * coth).sqrt());
    let unstable = build_pure_state(&sys, &m, d, d, n_f).map_err(|e| e.to_string())?;
    let stable = build_preset("heom-stable-eq27", &sys, &m, n_f).map_err(|e| e.to_string())?;
    let o = EvolveOptions { divergence_threshold: Some(1.0), ..opts() };
    let u = evolve_monitored(&unstable, &ground(), &t, &o).map_err(|e| e.to_string())?;
    let s = evolve_monitored(&stable, &ground(), &t, &o).map_err(|e| e.to_string())?;
    let flagged = matches!(u.termination, Termination::Diverged { .. } | Termination::NonFinite { .. });
    let s_max = s.diagnostics.trace_dev.iter().cloned().fold(0.0, f64::max);
    let u_max = u.diagnostics.trace_dev.iter().cloned().fold(0.0, f64::max);
    let top = |tr: &Trajectory| tr.diagnostics.top_level_norm.iter().cloned().fold(0.0, f64::max);
    let msg = format!(
        "pure-state frame: {:?}, max trace_dev {u_max:.2e}, spectral abscissa {:.2e}, max top-level amplitude {:.2e}; \
         stable frame: {:?}, max trace_dev {s_max:.2e}, spectral abscissa {:.2e}, max top-level amplitude {:.2e}",
        u.termination,
        spectral_abscissa(&unstable),
        top(&u),
        s.termination,
        spectral_abscissa(&stable),
        top(&s),
    );
    if flagged && s.termination == Termination::Completed && s_max < P5_STABLE_TRACE {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn spectral_abscissa(g: &ExtendedGenerator) -> f64 {
    nalgebra::Schur::try_new(markovian_embed::liouville::to_dense(&g.rate), 1e-14, 10_000)
        .and_then(|s| s.eigenvalues())
        .map_or(f64::NAN, |ev| ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

fn p6() -> Outcome {
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.2, 1.0).map_err(|e| e.to_string())?;
    let m = model_from_regime(&p, Regime::QuasiThermal).map_err(|e| e.to_string())?;
    let sys = SystemSpec::new(CMat::zeros(1, 1), CMat::zeros(1, 1)).unwrap();
    let n_b = bose(p.beta, 1.0);
    let gc = (p.c0 * p.c0 / 2.0).sqrt();
    let n_f = 30;
    let g = build_keldysh_pseudomode(&sys, &m, n_b, c(gc), c(gc), n_f).map_err(|e| e.to_string())?;
    let l = markovian_embed::liouville::ladder(n_f, markovian_embed::liouville::FockConvention::Normalized).unwrap();
    let b = (&l.a + &l.a_dag) * c(gc);
    let t = grid(10.0, 101);
    let corr = embedded_bath_correlation(&g, &b, &t, &opts()).map_err(|e| e.to_string())?;
    let target: Vec<Complex64> = t.iter().map(|&s| m.eval(s)).collect();
    let d = max_dev(&corr, &target);
    let msg = format!("max |C_embedded - C| {d:.2e} (n_F = {n_f})");
    if d < P6_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn p7() -> Outcome {
    let p = BrownianParams::new(0.1, 1.0, 10.0, 1.0).map_err(|e| e.to_string())?;
    let sys = spin_boson();
    let mode = PureStateMode::overdamped(&p).map_err(|e| e.to_string())?;
    let s2 = c(2f64.sqrt());
    let n_f = 8;
    let full = build_pure_state_sectors(&sys, &[mode], s2, s2, n_f).map_err(|e| e.to_string())?;
    let reduced = strong_damping_reduce_sector(&sys, mode.left, s2, n_f).map_err(|e| e.to_string())?;
    let t = grid(20.0, 401);
    let t_min = 1.0 / (2.0 * p.gamma0);
    let mut worst: f64 = 0.0;
    for name in ['x', 'y', 'z'] {
        let o = pauli(name).unwrap();
        let a = observable(&run(&full, &ground(), &t)?, &o).unwrap();
        let b = observable(&run(&reduced, &ground(), &t)?, &o).unwrap();
        for k in 0..t.len() {
            if t[k] >= t_min {
                worst = worst.max((a[k] - b[k]).norm());
            }
        }
    }
    let msg = format!("max Pauli-expectation deviation for t >= {t_min}: {worst:.2e}");
    if worst < P7_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn p8() -> Outcome {
    let sys = spin_boson();
    let n_f = 12;
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let m = model_from_regime(&p, Regime::Classical).map_err(|e| e.to_string())?;
    let coth = 1.0 / (p.beta * p.omega0 / 2.0).tanh();
    let d = c((p.c0 * p.c0 / (2.0 * p.omega0) * coth).sqrt());
    let ps = build_pure_state(&sys, &m, d, d, n_f).map_err(|e| e.to_string())?;
    let mapped = bogoliubov_transform(&ps, &TransformSpec::pure_state_to_keldysh(1)).map_err(|e| e.to_string())?;
    let target = build_preset("heom-stable-eq27", &sys, &m, n_f).map_err(|e| e.to_string())?;
    let d1 = interior_block_deviation(&mapped, &target, 2).map_err(|e| e.to_string())?;

    let hot = BrownianParams::from_zeta(0.4, 1.0, 0.1, 0.1).map_err(|e| e.to_string())?;
    let mh = model_from_regime(&hot, Regime::ClassicalHighTemperature).map_err(|e| e.to_string())?;
    let qp = build_hilbert_retarded(&sys, &ri_decompose(&mh, BasisTag::ClassicalQP).map_err(|e| e.to_string())?, &[n_f, n_f])
        .map_err(|e| e.to_string())?;
    let spec = TransformSpec::classical_to_namba(&hot).map_err(|e| e.to_string())?;
    let mapped2 = bogoliubov_transform(&qp, &spec).map_err(|e| e.to_string())?;
    let direct = build_namba_keldysh(&sys, &hot, n_f).map_err(|e| e.to_string())?;
    let d2 = interior_block_deviation(&mapped2, &direct, 2).map_err(|e| e.to_string())?;
    let msg = format!("interior deviation: pure-state->stable {d1:.2e}, classical->thermal-vacuum {d2:.2e} (n_F = {n_f})");
    if d1 < P8_TOL && d2 < P8_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_density(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let a = CMat::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let m = &a * a.adjoint();
    let t = m.trace();
    m / t
}

fn p9() -> Outcome {
    let sys = spin_boson();
    let p = BrownianParams::from_zeta(0.5, 1.0, 0.2, 1.0).map_err(|e| e.to_string())?;
    let m = model_from_regime(&p, Regime::Classical).map_err(|e| e.to_string())?;
    let mq = model_from_regime(&p, Regime::QuasiThermal).map_err(|e| e.to_string())?;
    let mut gens = frames(&sys, &mq, 5)?;
    let extra = [("pure-state classical", build_pure_state(&sys, &m, c(1.3), c(0.4), 5))];
    for (n, g) in extra {
        gens.push((n.into(), g.map_err(|e| e.to_string())?));
    }
    let mapped = bogoliubov_transform(&gens[1].1, &TransformSpec::pure_state_to_keldysh(1)).map_err(|e| e.to_string())?;
    gens.push(("transformed".into(), mapped));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for (_, g) in &gens {
        for _ in 0..100 {
            let rho = random_density(&mut rng, 2);
            let back = g.extract(g.inject(&rho).map_err(|e| e.to_string())?.as_slice());
            worst = worst.max((back - &rho).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    let msg = format!("max |extract(inject(rho)) - rho| {worst:.1e} over {} frames x 100 states", gens.len());
    if worst < P9_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("P1 cross-embedding equivalence", p1),
        ("P2 dephasing oracle", p2),
        ("P3 exact single-mode oracle", p3),
        ("P4 FDT and reconstruction", p4),
        ("P5 stability phenomenology", p5),
        ("P6 embedded correlator regression", p6),
        ("P7 strong-damping collapse", p7),
        ("P8 transform consistency", p8),
        ("P9 boundary-condition consistency", p9),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!("{} of 9 criteria pass", 9 - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
