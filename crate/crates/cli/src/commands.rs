use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::Serialize;
use twomode_core::fitting::{
    calibrate_beamsplitter, fit_fock_populations_offres, fit_fock_populations_with, fit_fringe_with,
    transfer_fidelity, FringeFitOptions, OffresFitOptions, PopulationFitOptions, PopulationStrategy, RabiDataset,
    RabiPoint, SimulatedContrast, Spectator,
};
use twomode_core::fock::{
    default_n_max, fidelity, fock_marginal, mode_purity, number_stats, Mode, NumberOp, Qubit, TailShape, Truncation,
    TwoModeQubitState,
};
use twomode_core::gates::{beamsplitter, single_mode_squeeze, two_mode_squeeze, FIFTY_FIFTY};
use twomode_core::interferometer::{
    linspace, sweep_fringe, AnalyticFringe, CircuitKind, CircuitProgram, FringeDataset, FringeModel, FringePoint,
    Readout,
};
use twomode_core::metrology::{cr_bound, db_vs_sql, default_phi_grid, max_sensitivity, quantum_fisher, sql};
use twomode_core::sideband::{Kernel, SidebandConfig, SidebandKind};

use crate::config::{self, ExperimentConfig};
use crate::error::CliError;
use crate::output::{read_csv, OutDir, Provenance, Table};

pub struct Context {
    pub out: Option<PathBuf>,
    pub kernel: Kernel,
}

impl Context {
    fn out_dir(&self, from_config: Option<&PathBuf>) -> Result<OutDir, CliError> {
        let root = self
            .out
            .clone()
            .or_else(|| from_config.cloned())
            .or_else(|| std::env::var_os("TWOMODE_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        OutDir::create(root)
    }
}

fn kernel_name(kernel: Kernel) -> &'static str {
    match kernel {
        Kernel::Corrected => "corrected",
        Kernel::SingleCosine => "single_cosine",
    }
}

fn kinds(kind: Option<CircuitKind>) -> Vec<CircuitKind> {
    kind.map_or_else(|| CircuitKind::ALL.to_vec(), |k| vec![k])
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FringeInputs<'a> {
    config: &'a ExperimentConfig,
    kernel: Kernel,
}

pub fn fringe(ctx: &Context, config_path: &Path) -> Result<OutDir, CliError> {
    let cfg = config::load(config_path)?;
    let prog = cfg.circuit.program()?;
    let grid = cfg.grid.resolve()?;
    let data = sweep_fringe(&prog, &grid, cfg.sampling.shots, cfg.sampling.seed)?;
    let model = AnalyticFringe::new(prog.clone(), ctx.kernel)?;

    let model_name = format!("{}_{}", prog.kind.name(), kernel_name(ctx.kernel));
    let mut table = Table::new(&["phi_rad", "p_down", "shots", "p_model", "model_name"]);
    for p in &data.points {
        table.push(vec![
            p.phi.into(),
            p.p_down.into(),
            p.shots.into(),
            model.p_down(p.phi)?.into(),
            model_name.as_str().into(),
        ]);
    }
    let prov = Provenance::new(
        "fringe",
        &FringeInputs {
            config: &cfg,
            kernel: ctx.kernel,
        },
    )?;
    let mut out = ctx.out_dir(cfg.output.dir.as_ref())?;
    let name = cfg.output.name.clone().unwrap_or_else(|| "fringe".into());
    out.csv(&format!("{name}.csv"), &table, &prov)?;
    Ok(out)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SensitivityInputs {
    kinds: Vec<CircuitKind>,
    mean_ns: Vec<f64>,
    optimize_beta: bool,
    beta: f64,
    kernel: Kernel,
}

pub fn sensitivity(
    ctx: &Context,
    kind: Option<CircuitKind>,
    mean_ns: &[f64],
    optimize_beta: bool,
    beta: f64,
) -> Result<OutDir, CliError> {
    if mean_ns.is_empty() {
        return Err(CliError::config("no mean_n values given"));
    }
    let inputs = SensitivityInputs {
        kinds: kinds(kind),
        mean_ns: mean_ns.to_vec(),
        optimize_beta,
        beta,
        kernel: ctx.kernel,
    };
    let grid = default_phi_grid();
    let mut table = Table::new(&[
        "kind",
        "mean_n",
        "param",
        "beta",
        "phi_at_best",
        "fisher_max",
        "delta_phi",
        "cr_bound",
        "sql",
        "db_vs_sql",
        "cr_bound_db",
    ]);
    for &k in &inputs.kinds {
        for &n in mean_ns {
            let param = k.param_for_mean_n(n)?;
            let prog = CircuitProgram::new(k, param)?.with_readout(Readout { beta, ..Readout::default() });
            let r = max_sensitivity(&AnalyticFringe::new(prog, ctx.kernel)?, &grid, optimize_beta)?;
            table.push(vec![
                k.name().into(),
                n.into(),
                param.into(),
                r.beta_used.into(),
                r.phi_at_best.into(),
                r.fisher_max.into(),
                r.delta_phi.into(),
                r.cr_bound.into(),
                r.sql.into(),
                r.db_vs_sql.into(),
                db_vs_sql(r.cr_bound, n)?.into(),
            ]);
        }
    }
    let prov = Provenance::new("sensitivity", &inputs)?;
    let mut out = ctx.out_dir(None)?;
    out.csv("sensitivity.csv", &table, &prov)?;
    Ok(out)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BoundsInputs {
    kinds: Vec<CircuitKind>,
    mean_ns: Vec<f64>,
}

pub fn bounds(ctx: &Context, kind: Option<CircuitKind>, mean_ns: &[f64]) -> Result<(OutDir, String), CliError> {
    if mean_ns.is_empty() {
        return Err(CliError::config("no mean_n values given"));
    }
    let inputs = BoundsInputs {
        kinds: kinds(kind),
        mean_ns: mean_ns.to_vec(),
    };
    let mut table = Table::new(&["kind", "mean_n", "quantum_fisher", "cr_bound", "sql", "db_vs_sql"]);
    for &k in &inputs.kinds {
        for &n in mean_ns {
            let bound = cr_bound(k, n)?;
            table.push(vec![
                k.name().into(),
                n.into(),
                quantum_fisher(k, n).into(),
                bound.into(),
                sql(n)?.into(),
                db_vs_sql(bound, n)?.into(),
            ]);
        }
    }
    let prov = Provenance::new("bounds", &inputs)?;
    let mut out = ctx.out_dir(None)?;
    out.csv("bounds.csv", &table, &prov)?;
    Ok((out, table.render(&prov)))
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TmsInputs {
    nbar: f64,
    cutoff: usize,
}

#[derive(Serialize)]
struct TmsReport {
    nbar_target: f64,
    r: f64,
    cutoff: usize,
    marginal_mean_a: f64,
    marginal_mean_b: f64,
    marginal_max_dev_from_geometric: f64,
    off_diagonal_population: f64,
    post_bs_fidelity_with_product: f64,
    post_bs_purity_a: f64,
    post_bs_purity_b: f64,
    post_bs_mean_a: f64,
    post_bs_r_a: f64,
    post_bs_r_b: f64,
}

/// Squeezed-vacuum Fock populations for parameter `r`.
fn squeezed_populations(r: f64, len: usize) -> Vec<f64> {
    let t2 = r.tanh().powi(2);
    let mut p = vec![0.0; len];
    let mut even = 1.0 / r.cosh();
    for k in 0..len.div_ceil(2) {
        if 2 * k < len {
            p[2 * k] = even;
        }
        even *= t2 * (2 * k + 1) as f64 / (2 * k + 2) as f64;
    }
    p
}

pub fn verify_tms(ctx: &Context, nbar: f64, cutoff: Option<usize>) -> Result<OutDir, CliError> {
    if !(nbar > 0.0 && nbar.is_finite()) {
        return Err(CliError::config(format!("nbar must be positive, got {nbar}")));
    }
    let r = nbar.sqrt().asinh();
    // the post-beamsplitter state has squeezed-vacuum tails
    let cutoff = cutoff.unwrap_or_else(|| default_n_max(nbar, TailShape::SqueezedVacuum));
    let tr = Truncation::with_cutoffs(cutoff, cutoff)?;
    let vac = TwoModeQubitState::vacuum(tr, Qubit::Down)?;
    let tms = two_mode_squeeze(&vac, r, 0.0)?;

    let pa = fock_marginal(&tms, Mode::A);
    let pb = fock_marginal(&tms, Mode::B);
    let q = nbar / (nbar + 1.0);
    let geometric: Vec<f64> = (0..=cutoff).map(|n| q.powi(n as i32) / (nbar + 1.0)).collect();
    let dev = (0..=cutoff)
        .map(|n| (pa[n] - geometric[n]).abs().max((pb[n] - geometric[n]).abs()))
        .fold(0.0, f64::max);
    let joint = tms.joint_populations();
    let mut off_diag = 0.0f64;
    for i in 0..joint.nrows() {
        for j in 0..joint.ncols() {
            if i != j {
                off_diag = off_diag.max(joint[(i, j)]);
            }
        }
    }

    let split = beamsplitter(&tms, FIFTY_FIFTY, 0.0)?;
    let product = single_mode_squeeze(&single_mode_squeeze(&vac, r, 0.0, Mode::A)?, r, std::f64::consts::PI, Mode::B)?;
    let sa = fock_marginal(&split, Mode::A);
    let sb = fock_marginal(&split, Mode::B);
    let sq = squeezed_populations(r, cutoff + 1);
    let mean_a = number_stats(&split, NumberOp::ModeA)?.mean;
    let mean_b = number_stats(&split, NumberOp::ModeB)?.mean;

    let report = TmsReport {
        nbar_target: nbar,
        r,
        cutoff,
        marginal_mean_a: number_stats(&tms, NumberOp::ModeA)?.mean,
        marginal_mean_b: number_stats(&tms, NumberOp::ModeB)?.mean,
        marginal_max_dev_from_geometric: dev,
        off_diagonal_population: off_diag,
        post_bs_fidelity_with_product: fidelity(&split, &product)?,
        post_bs_purity_a: mode_purity(&split, Mode::A),
        post_bs_purity_b: mode_purity(&split, Mode::B),
        post_bs_mean_a: mean_a,
        post_bs_r_a: mean_a.sqrt().asinh(),
        post_bs_r_b: mean_b.sqrt().asinh(),
    };

    let prov = Provenance::new("verify-tms", &TmsInputs { nbar, cutoff })?;
    let mut marg = Table::new(&["n", "p_a", "p_b", "p_geometric"]);
    let mut post = Table::new(&["n", "p_a", "p_b", "p_squeezed"]);
    for n in 0..=cutoff {
        marg.push(vec![n.into(), pa[n].into(), pb[n].into(), geometric[n].into()]);
        post.push(vec![n.into(), sa[n].into(), sb[n].into(), sq[n].into()]);
    }
    let mut out = ctx.out_dir(None)?;
    out.csv("tms_marginals.csv", &marg, &prov)?;
    out.csv("tms_beamsplitter.csv", &post, &prov)?;
    out.json("verify_tms.json", &report, &prov)?;
    Ok(out)
}

// ---------------------------------------------------------------------------

fn column(header: &[String], names: &[&str], path: &Path) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| names.contains(&h.as_str()))
        .ok_or_else(|| CliError::config(format!("{}: missing column {}", path.display(), names[0])))
}

fn optional_column(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| CliError::config(format!("bad {what} value {s:?}")))
}

fn parse_shots(row: &[String], idx: Option<usize>) -> Result<Option<u64>, CliError> {
    match idx.and_then(|i| row.get(i)).map(String::as_str) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| CliError::config(format!("bad shots value {s:?}"))),
    }
}

fn read_fringe_points(path: &Path) -> Result<Vec<FringePoint>, CliError> {
    let (header, rows) = read_csv(path)?;
    let ip = column(&header, &["phi_rad", "phi"], path)?;
    let iy = column(&header, &["p_down"], path)?;
    let is = optional_column(&header, "shots");
    rows.iter()
        .map(|row| {
            let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
            Ok(FringePoint {
                phi: parse_f64(get(ip), "phi")?,
                p_down: parse_f64(get(iy), "p_down")?,
                shots: parse_shots(row, is)?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct FitFringeInputs<'a> {
    kind: CircuitKind,
    readout: Readout,
    kernel: Kernel,
    points: &'a [FringePoint],
}

pub fn fit_fringe(ctx: &Context, data: &Path, kind: CircuitKind, readout: Readout) -> Result<OutDir, CliError> {
    let points = read_fringe_points(data)?;
    let program = CircuitProgram::new(kind, 1.0)?.with_readout(readout);
    let dataset = FringeDataset {
        points: points.clone(),
        program,
        seed: None,
    };
    let opts = FringeFitOptions {
        kernel: ctx.kernel,
        ..Default::default()
    };
    let fit = fit_fringe_with(&dataset, kind, &opts)?;
    let prov = Provenance::new(
        "fit-fringe",
        &FitFringeInputs {
            kind,
            readout,
            kernel: ctx.kernel,
            points: &points,
        },
    )?;
    let mut out = ctx.out_dir(None)?;
    out.json("fit_fringe.json", &fit, &prov)?;
    Ok(out)
}

// ---------------------------------------------------------------------------

/// Sideband settings for an off-resonant population fit.
#[derive(Clone, Debug, Serialize)]
pub struct OffresArgs {
    pub eta_a: f64,
    pub eta_b: f64,
    pub omega_carrier: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub spectator: Spectator,
}

#[derive(Serialize)]
struct FitFockInputs<'a> {
    n_max: usize,
    omega_sb: Option<f64>,
    strategy: PopulationStrategy,
    offres: Option<&'a OffresArgs>,
    points: &'a [RabiPoint],
}

pub fn fit_fock(
    ctx: &Context,
    data: &Path,
    n_max: usize,
    omega_sb: Option<f64>,
    strategy: PopulationStrategy,
    offres: Option<OffresArgs>,
) -> Result<OutDir, CliError> {
    let (header, rows) = read_csv(data)?;
    let it = column(&header, &["t_seconds", "t"], data)?;
    let iy = column(&header, &["p_down"], data)?;
    let is = optional_column(&header, "shots");
    let points: Vec<RabiPoint> = rows
        .iter()
        .map(|row| {
            let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
            Ok(RabiPoint {
                t: parse_f64(get(it), "t")?,
                p_down: parse_f64(get(iy), "p_down")?,
                shots: parse_shots(row, is)?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let dataset = RabiDataset { points: points.clone() };
    let fit_opts = PopulationFitOptions {
        strategy,
        ..Default::default()
    };
    let fit = match (&offres, omega_sb) {
        (Some(o), _) => {
            let cfg = SidebandConfig::new(o.eta_a, o.eta_b, o.omega_carrier, o.delta_1, o.delta_2)?;
            let opts = OffresFitOptions {
                fit: fit_opts,
                spectator: o.spectator.clone(),
            };
            fit_fock_populations_offres(&dataset, &cfg, n_max, &opts)?
        }
        (None, Some(w)) => fit_fock_populations_with(&dataset, n_max, w, &fit_opts)?,
        (None, None) => {
            return Err(CliError::config(
                "give --omega-sb for a resonant fit or the sideband settings for an off-resonant one",
            ))
        }
    };
    let prov = Provenance::new(
        "fit-fock",
        &FitFockInputs {
            n_max,
            omega_sb,
            strategy,
            offres: offres.as_ref(),
            points: &points,
        },
    )?;
    let mut out = ctx.out_dir(None)?;
    out.json("fit_fock.json", &fit, &prov)?;
    Ok(out)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CalibrationInputs {
    alpha: f64,
    mix_per_amplitude: f64,
    grid: Vec<f64>,
}

#[derive(Serialize)]
struct CalibrationReport {
    amplitude: f64,
    mix: f64,
    contrast: f64,
    at_boundary: bool,
    mix_error_from_fifty_fifty: f64,
    transfer_fidelity: f64,
}

pub fn calibrate_bs(
    ctx: &Context,
    alpha: f64,
    mix_per_amplitude: f64,
    start: f64,
    stop: f64,
    points: usize,
) -> Result<OutDir, CliError> {
    let grid = linspace(start, stop, points);
    let ev = SimulatedContrast::new(alpha, mix_per_amplitude)?;
    let cal = calibrate_beamsplitter(&ev, &grid)?;
    if cal.at_boundary {
        log::warn!("calibration optimum at grid boundary; result is the edge value");
    }
    let mix = ev.mix(cal.amplitude);
    let report = CalibrationReport {
        amplitude: cal.amplitude,
        mix,
        contrast: cal.contrast,
        at_boundary: cal.at_boundary,
        mix_error_from_fifty_fifty: mix - FIFTY_FIFTY,
        transfer_fidelity: transfer_fidelity(mix, alpha, ev.truncation)?,
    };
    let prov = Provenance::new(
        "calibrate-bs",
        &CalibrationInputs {
            alpha,
            mix_per_amplitude,
            grid,
        },
    )?;
    let mut out = ctx.out_dir(None)?;
    out.json("calibrate_bs.json", &report, &prov)?;
    Ok(out)
}

pub fn default_readout(mode: Option<Mode>, kind: Option<SidebandKind>, beta: Option<f64>) -> Readout {
    let d = Readout::default();
    Readout {
        mode: mode.unwrap_or(d.mode),
        kind: kind.unwrap_or(d.kind),
        beta: beta.unwrap_or(FRAC_PI_2),
    }
}
