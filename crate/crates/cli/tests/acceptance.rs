//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any of them fails.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use twomode_core::fitting::{
    calibrate_beamsplitter, fit_fock_populations, fit_fock_populations_offres, fit_fringe, transfer_fidelity,
    OffresFitOptions, PopulationFitOptions, PopulationStrategy, RabiDataset, SimulatedContrast, Spectator,
};
use twomode_core::fock::{
    default_n_max, fidelity, fock_marginal, mode_purity, number_stats, Mode, NumberOp, Qubit, TailShape, Truncation,
    TwoModeQubitState,
};
use twomode_core::gates::{beamsplitter, single_mode_squeeze, two_mode_squeeze};
use twomode_core::interferometer::{
    linspace, run_circuit, run_circuit_state, sweep_fringe, AnalyticFringe, CircuitKind, CircuitProgram, FringeModel,
    Readout, SimulatedFringe,
};
use twomode_core::metrology::{
    classical_fisher, cr_bound, default_phi_grid, max_sensitivity, quantum_fisher, sql,
};
use twomode_core::sideband::{offres_trajectory, rabi_signal, Kernel, SidebandConfig, SidebandKind};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn vacuum(cutoff: usize) -> Result<TwoModeQubitState, String> {
    ok(TwoModeQubitState::vacuum(ok(Truncation::with_cutoffs(cutoff, cutoff))?, Qubit::Up))
}

// ---------------------------------------------------------------------------

fn tms_fock_amplitudes() -> Outcome {
    let mut worst_amp = 0.0f64;
    let mut worst_off = 0.0f64;
    for r in [0.3f64, 0.8, 1.3229] {
        let cutoff = default_n_max(r.sinh().powi(2), TailShape::Thermal);
        let s = ok(two_mode_squeeze(&vacuum(cutoff)?, r, 0.0))?;
        for n in 0..=cutoff {
            let want = r.tanh().powi(n as i32) / r.cosh();
            let got = s.amplitude(Qubit::Up, n, n);
            let err = (got.re - want).abs().max(got.im.abs());
            worst_amp = worst_amp.max(err);
            ensure(err < 1e-8, || format!("r={r} n={n}: amplitude {got} vs {want}"))?;
        }
        for q in [Qubit::Up, Qubit::Down] {
            for na in 0..=cutoff {
                for nb in 0..=cutoff {
                    if na != nb || q == Qubit::Down {
                        worst_off = worst_off.max(s.probability(q, na, nb));
                    }
                }
            }
        }
        ensure(worst_off < 1e-12, || format!("r={r}: off-diagonal population {worst_off:.2e}"))?;
    }
    Ok(format!("max amplitude error {worst_amp:.1e}, max off-diagonal {worst_off:.1e}"))
}

fn tms_thermal_then_separable() -> Outcome {
    let nbar = 3.04f64;
    let r = nbar.sqrt().asinh();
    let cutoff = default_n_max(nbar, TailShape::SqueezedVacuum);
    let vac = vacuum(cutoff)?;
    let tms = ok(two_mode_squeeze(&vac, r, 0.0))?;
    let q = nbar / (nbar + 1.0);
    for mode in [Mode::A, Mode::B] {
        let p = fock_marginal(&tms, mode);
        let mean = ok(number_stats(&tms, mode.into()))?.mean;
        ensure((mean - r.sinh().powi(2)).abs() < 1e-6, || format!("{mode:?} mean {mean}"))?;
        for (n, pn) in p.iter().enumerate() {
            let want = q.powi(n as i32) / (nbar + 1.0);
            ensure((pn - want).abs() < 1e-10, || format!("{mode:?} P({n}) = {pn} vs geometric {want}"))?;
        }
    }
    let split = ok(beamsplitter(&tms, FRAC_PI_4, 0.0))?;
    let product = ok(single_mode_squeeze(&ok(single_mode_squeeze(&vac, r, 0.0, Mode::A))?, r, PI, Mode::B))?;
    let f = ok(fidelity(&split, &product))?;
    let (pa, pb) = (mode_purity(&split, Mode::A), mode_purity(&split, Mode::B));
    ensure(f > 1.0 - 1e-6, || format!("fidelity with squeezed product {f}"))?;
    ensure(pa > 1.0 - 1e-6 && pb > 1.0 - 1e-6, || format!("purities {pa} {pb}"))?;
    Ok(format!("fidelity 1-{:.1e}, purity 1-{:.1e}", 1.0 - f, 1.0 - pa.min(pb)))
}

fn tms_phase_law() -> Outcome {
    let mut worst = 0.0f64;
    for r0 in [0.8f64, 1.3229] {
        let cutoff = default_n_max(r0.sinh().powi(2), TailShape::Thermal);
        let vac = vacuum(cutoff)?;
        let first = ok(two_mode_squeeze(&vac, r0 / 2.0, 0.0))?;
        for phi in linspace(0.0, TAU, 21) {
            let s = ok(two_mode_squeeze(&first, r0 / 2.0, phi))?;
            let want = (r0.sinh() * (phi / 2.0).cos()).asinh().sinh().powi(2);
            for which in [NumberOp::ModeA, NumberOp::ModeB] {
                let got = ok(number_stats(&s, which))?.mean;
                let err = (got - want).abs();
                if want > 1e-9 {
                    worst = worst.max(err / want);
                }
                ensure(err <= 1e-6 * want + 1e-12, || format!("r0={r0} phi={phi}: {got} vs {want}"))?;
            }
        }
    }
    Ok(format!("max relative error {worst:.1e} over 21 phases"))
}

fn time_reversal() -> Outcome {
    let mut worst = 0.0f64;
    for (kind, param) in [
        (CircuitKind::Su2, 1.0),
        (CircuitKind::Su2, 5f64.sqrt()),
        (CircuitKind::Su11Single, 0.8),
        (CircuitKind::Su11Single, 1.3229),
        (CircuitKind::Su11Two, 0.8),
        (CircuitKind::Su11Two, 1.3229),
    ] {
        let prog = ok(CircuitProgram::new(kind, param))?;
        let s = ok(run_circuit_state(&prog, PI))?;
        let vac = ok(TwoModeQubitState::vacuum(*s.truncation(), Qubit::Up))?;
        let f = if kind == CircuitKind::Su2 {
            // the probe leaves through mode b; the readout mode must be empty
            let residual = ok(number_stats(&s, NumberOp::ModeA))?.mean;
            ensure(residual < 1e-8, || format!("su2 mode a residual {residual:.2e}"))?;
            fock_marginal(&s, Mode::A)[0]
        } else {
            ok(fidelity(&s, &vac))?
        };
        worst = worst.max(1.0 - f);
        ensure(f > 1.0 - 1e-6, || format!("{kind:?} param {param}: vacuum fidelity {f}"))?;
        let p = ok(run_circuit(&prog, PI))?;
        ensure(p < 1e-8, || format!("{kind:?}: red readout at reversal {p:.2e}"))?;
    }
    Ok(format!("worst vacuum infidelity {worst:.1e}"))
}

fn readout_models_match_simulation() -> Outcome {
    let phis = linspace(0.0, TAU, 41);
    let mut worst_p = 0.0f64;
    let mut worst_slope = 0.0f64;
    let h = 1e-5;
    for kind in CircuitKind::ALL {
        let mut readouts = vec![
            Readout::default(),
            Readout { beta: 1.1, ..Readout::default() },
            Readout {
                kind: SidebandKind::Blue,
                beta: 0.7,
                ..Readout::default()
            },
        ];
        if kind != CircuitKind::Su11Single {
            readouts.push(Readout { mode: Mode::B, ..Readout::default() });
        }
        for amplitude in [0.5f64, 1.0, 2.0, 3.04, 5.0] {
            let param = match kind {
                CircuitKind::Su2 => amplitude.sqrt(),
                _ => amplitude.sqrt().asinh(),
            };
            for &readout in &readouts {
                let prog = ok(CircuitProgram::new(kind, param))?.with_readout(readout);
                let analytic = ok(AnalyticFringe::new(prog.clone(), Kernel::Corrected))?;
                let sim = ok(SimulatedFringe::new(prog))?;
                for &phi in &phis {
                    let e = ok(analytic.eval(phi))?;
                    let exact = ok(sim.p_down(phi))?;
                    let err = (e.p - exact).abs();
                    worst_p = worst_p.max(err);
                    ensure(err < 1e-4, || format!("{kind:?} A={amplitude} {readout:?} phi={phi}: {} vs {exact}", e.p))?;
                    let fd = (ok(analytic.p_down(phi + h))? - ok(analytic.p_down(phi - h))?) / (2.0 * h);
                    if fd.abs() > 1e-3 {
                        let rel = (e.d_phi - fd).abs() / fd.abs();
                        worst_slope = worst_slope.max(rel);
                        ensure(rel < 1e-6, || {
                            format!("{kind:?} A={amplitude} phi={phi}: slope {} vs {fd}", e.d_phi)
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!("max |dP| {worst_p:.1e}, max slope relative error {worst_slope:.1e}"))
}

/// Fisher information of the simulated fringe near `phi`, skipping points
/// where it is undefined.
fn simulated_fisher(sim: &SimulatedFringe, phi: f64) -> Result<Option<f64>, String> {
    let h = 1e-5;
    let p = ok(sim.p_down(phi))?;
    let slope = (ok(sim.p_down(phi + h))? - ok(sim.p_down(phi - h))?) / (2.0 * h);
    Ok(classical_fisher(p, slope).ok())
}

/// Kind, probe mean, best Fisher information, simulated sensitivity.
type SweepPoint = (CircuitKind, f64, f64, f64);

fn metrology_bounds() -> Outcome {
    let spots = [
        (CircuitKind::Su2, 36.0, 1.0 / 6.0),
        (CircuitKind::Su11Single, 1.0, 0.25),
        (CircuitKind::Su11Two, 3.04, 1.0 / (3.04f64 * 5.04).sqrt()),
    ];
    for (kind, n, want) in spots {
        let got = ok(cr_bound(kind, n))?;
        ensure((got - want).abs() < 1e-12, || format!("{kind:?} cr_bound({n}) = {got}, expected {want}"))?;
    }
    let tms = ok(cr_bound(CircuitKind::Su11Two, 3.04))?;
    ensure((tms - 0.2554).abs() < 1e-4, || format!("two-mode bound {tms}"))?;

    let grid = default_phi_grid();
    let mean_ns = linspace(0.5, 3.0, 11);
    let mut worst_db = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    let jobs: Vec<(CircuitKind, f64)> = CircuitKind::ALL
        .iter()
        .flat_map(|&k| mean_ns.iter().map(move |&n| (k, n)))
        .collect();
    let results: Vec<Result<SweepPoint, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(kind, n)| {
                let grid = &grid;
                scope.spawn(move || -> Result<SweepPoint, String> {
                    let prog = ok(CircuitProgram::new(kind, ok(kind.param_for_mean_n(n))?))?;
                    let report = ok(max_sensitivity(&ok(AnalyticFringe::new(prog.clone(), Kernel::Corrected))?, grid, true))?;
                    // cross-check the optimum on the simulated fringe, with a
                    // truncation sized for the phases probed; the leak guard
                    // rejects it if that is too small
                    let offsets = [-0.03, -0.01, 0.0, 0.01, 0.03];
                    let mut prog = prog;
                    let peak = offsets
                        .iter()
                        .map(|d| kind.amplitude(prog.param) * ((report.phi_at_best + d) / 2.0).cos().powi(2))
                        .fold(n, f64::max);
                    let cutoff = default_n_max(peak, TailShape::SqueezedVacuum);
                    let other = if kind == CircuitKind::Su11Single { 2 } else { cutoff };
                    prog.truncation = Some(ok(Truncation::with_cutoffs(cutoff, other))?);
                    let sim = ok(SimulatedFringe::new(prog))?.with_beta(report.beta_used);
                    let mut f_sim = 0.0f64;
                    for d in offsets {
                        if let Some(f) = simulated_fisher(&sim, report.phi_at_best + d)? {
                            f_sim = f_sim.max(f);
                        }
                    }
                    Ok((kind, n, report.fisher_max.max(f_sim), 1.0 / f_sim.sqrt()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        let (kind, n, f_max, delta_sim) = r?;
        let qfi = quantum_fisher(kind, n);
        worst_ratio = worst_ratio.max(f_max / qfi);
        ensure(f_max <= qfi * (1.0 + 1e-6), || format!("{kind:?} n={n}: F {f_max} exceeds QFI {qfi}"))?;
        if kind != CircuitKind::Su2 {
            let db = 20.0 * (delta_sim / ok(sql(n))?).log10();
            worst_db = worst_db.max(db);
            ensure(db < 0.0, || format!("{kind:?} n={n}: simulated sensitivity {db:.3} dB vs SQL"))?;
        }
    }
    Ok(format!(
        "max F/QFI {worst_ratio:.6}, least squeezed-probe gain {worst_db:.2} dB"
    ))
}

fn normalized(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

fn fitting_round_trips() -> Outcome {
    // noiseless fringes
    for (kind, param, phi0, v0) in [
        (CircuitKind::Su2, 3.0, 0.0, 0.0),
        (CircuitKind::Su2, 1.5, -0.3, 0.05),
        (CircuitKind::Su11Single, 1.2, 0.2, 0.02),
        (CircuitKind::Su11Two, 3.04f64.sqrt().asinh(), 0.1, 0.04),
    ] {
        let prog = ok(CircuitProgram::new(kind, param))?.with_offsets(phi0, v0);
        let d = ok(sweep_fringe(&prog, &linspace(0.0, TAU, 41), None, 0))?;
        let fit = ok(fit_fringe(&d, kind))?;
        for (got, want) in fit.params.iter().zip([param, phi0, v0]) {
            ensure((got - want).abs() < 1e-6, || format!("{kind:?} noiseless fit {:?}", fit.params))?;
        }
    }

    // 250 shots per point, fixed seed
    let mut worst_shot = 0.0f64;
    for (kind, param) in [
        (CircuitKind::Su11Two, 3.04f64.sqrt().asinh()),
        (CircuitKind::Su11Single, 3.04f64.sqrt().asinh()),
        (CircuitKind::Su2, 3.04f64.sqrt()),
    ] {
        let prog = ok(CircuitProgram::new(kind, param))?.with_offsets(0.2, 0.03);
        let d = ok(sweep_fringe(&prog, &linspace(0.0, TAU, 401), Some(250), 0))?;
        let fit = ok(fit_fringe(&d, kind))?;
        let (got, want) = (kind.amplitude(fit.params[0]), kind.amplitude(param));
        let rel = (got / want - 1.0).abs();
        worst_shot = worst_shot.max(rel);
        ensure(rel < 0.05, || format!("{kind:?} 250-shot nbar {got} vs {want}"))?;
    }

    // Fock populations from blue-sideband Rabi curves
    let omega_sb = TAU * 10e3;
    let mut worst_pop = 0.0f64;
    let nbar = 3.04f64;
    let thermal: Vec<f64> = (0..=120).map(|n| (nbar / (nbar + 1.0)).powi(n) / (nbar + 1.0)).collect();
    let r_sq = 0.8f64;
    let tr = ok(Truncation::with_cutoffs(60, 1))?;
    let sq = ok(single_mode_squeeze(&ok(TwoModeQubitState::vacuum(tr, Qubit::Up))?, r_sq, 0.0, Mode::A))?;
    let squeezed = fock_marginal(&sq, Mode::A);
    for (name, truth, n_max) in [("thermal", normalized(&thermal), 40), ("squeezed", normalized(&squeezed), 30)] {
        let times = linspace(0.0, 1.2e-3, 300);
        let d = ok(RabiDataset::from_exact(&times, &ok(rabi_signal(&truth, omega_sb, &times))?))?;
        let fit = ok(fit_fock_populations(&d, n_max, omega_sb))?;
        for n in 0..=n_max {
            let err = (fit.params[n] - truth[n]).abs();
            worst_pop = worst_pop.max(err);
            ensure(err < 0.02, || format!("{name} P({n}) = {} vs {}", fit.params[n], truth[n]))?;
        }
    }

    // off-resonant readout with the other mode 33 kHz away
    let r = 0.8f64;
    let n_max = 14;
    let tr = ok(Truncation::new(22, 22, 1e-6))?;
    let s = ok(two_mode_squeeze(&ok(TwoModeQubitState::vacuum(tr, Qubit::Up))?, r, 0.0))?;
    let truth = normalized(&fock_marginal(&s, Mode::A));
    let eta = 0.1;
    let cfg = ok(SidebandConfig::new(eta, eta, omega_sb / eta, 0.0, -TAU * 33e3))?;
    let times = linspace(0.0, 6e-4, 160);
    let data = ok(RabiDataset::from_exact(&times, &ok(offres_trajectory(&s, &cfg, &times, SidebandKind::Blue))?))?;
    let ideal = ok(RabiDataset::from_exact(&times, &ok(rabi_signal(&truth, omega_sb, &times))?))?;
    let resonant = ok(fit_fock_populations(&ideal, n_max, omega_sb))?;
    let mut worst_off = 0.0f64;
    for strategy in [PopulationStrategy::Joint, PopulationStrategy::Coordinate] {
        let opts = OffresFitOptions {
            fit: PopulationFitOptions {
                strategy,
                ..Default::default()
            },
            spectator: Spectator::Correlated,
        };
        let off = ok(fit_fock_populations_offres(&data, &cfg, n_max, &opts))?;
        for n in 0..=n_max {
            let err = (off.params[n] - resonant.params[n]).abs();
            worst_off = worst_off.max(err);
            ensure(err < 0.02, || format!("{strategy:?} P({n}): {} vs resonant {}", off.params[n], resonant.params[n]))?;
        }
    }
    Ok(format!(
        "250-shot nbar error {:.1}%, population error {worst_pop:.1e}, off-resonant vs resonant {worst_off:.1e}",
        100.0 * worst_shot
    ))
}

fn beamsplitter_calibration() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_transfer = 0.0f64;
    for (alpha, per_amp, lo, hi) in [(1.0, 1.0, 0.1, 1.5), (1.5, 0.6, 0.2, 2.4)] {
        let ev = ok(SimulatedContrast::new(alpha, per_amp))?;
        let cal = ok(calibrate_beamsplitter(&ev, &linspace(lo, hi, 29)))?;
        ensure(!cal.at_boundary, || "optimum at grid edge".into())?;
        let mix = ev.mix(cal.amplitude);
        worst = worst.max((mix - FRAC_PI_4).abs());
        ensure((mix - FRAC_PI_4).abs() < 1e-4, || format!("calibrated mix {mix}"))?;
        let tr = ok(Truncation::with_cutoffs(30, 30))?;
        let f = ok(transfer_fidelity(mix, 2.0, tr))?;
        worst_transfer = worst_transfer.max(1.0 - f);
        ensure(f > 1.0 - 1e-6, || format!("transfer fidelity {f}"))?;
    }
    Ok(format!("mix error {worst:.1e}, transfer infidelity {worst_transfer:.1e}"))
}

fn run_cli(out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_twomode"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("TWOMODE_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr))
    })
}

fn cli_determinism() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = work.path().join("exp.toml");
    std::fs::write(
        &config,
        "[circuit]\nkind = \"su11_two\"\nmean_n = 3.04\nphi0 = 0.1\n\n[grid]\npoints = 61\n\n[sampling]\nshots = 250\nseed = 11\n",
    )
    .map_err(|e| e.to_string())?;
    let rabi = work.path().join("rabi.csv");
    let times = linspace(0.0, 1e-3, 120);
    let p = ok(rabi_signal(&[0.6, 0.3, 0.1], TAU * 10e3, &times))?;
    let mut text = String::from("t_seconds,p_down,shots\n");
    for (t, p) in times.iter().zip(&p) {
        text.push_str(&format!("{t},{p},\n"));
    }
    std::fs::write(&rabi, text).map_err(|e| e.to_string())?;

    let mut runs = Vec::new();
    for i in 0..2 {
        let out = work.path().join(format!("run{i}"));
        let cfg = config.to_str().unwrap();
        run_cli(&out, &["fringe", "--config", cfg])?;
        run_cli(&out, &["fit-fringe", "--data", out.join("fringe.csv").to_str().unwrap(), "--kind", "su11_two"])?;
        run_cli(&out, &["sensitivity", "--nbar", "1,3.04"])?;
        run_cli(&out, &["bounds"])?;
        run_cli(&out, &["calibrate-bs"])?;
        run_cli(&out, &["fit-fock", "--data", rabi.to_str().unwrap(), "--n-max", "6", "--omega-sb", &(TAU * 10e3).to_string()])?;
        run_cli(&out, &["verify-tms", "--nbar", "1.0"])?;
        runs.push(out);
    }
    let mut names: Vec<_> = std::fs::read_dir(&runs[0])
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    ensure(names.len() == 9, || format!("expected 9 outputs, found {}", names.len()))?;
    for name in &names {
        let a = std::fs::read(runs[0].join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(runs[1].join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name:?} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", names.len()))
}

fn main() {
    let criteria: [(&str, Option<u64>, Check); 9] = [
        ("TMS Fock amplitudes", Some(5), tms_fock_amplitudes),
        ("TMS thermal marginals and beamsplitter separation", Some(10), tms_thermal_then_separable),
        ("squeezing phase law", None, tms_phase_law),
        ("time reversal", None, time_reversal),
        ("readout models vs simulation", None, readout_models_match_simulation),
        ("metrology bounds and sensitivity", Some(60), metrology_bounds),
        ("fitting round trips", None, fitting_round_trips),
        ("beamsplitter calibration", None, beamsplitter_calibration),
        ("CLI determinism", None, cli_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&result, budget) {
            if elapsed > Duration::from_secs(*limit) {
                result = Err(format!("took {:.1} s, limit {limit} s", elapsed.as_secs_f64()));
            }
        }
        match &result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} ({:.2} s)", i + 1, elapsed.as_secs_f64()),
            Err(why) => {
                println!("criterion {}: FAIL {name}: {why} ({:.2} s)", i + 1, elapsed.as_secs_f64());
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
