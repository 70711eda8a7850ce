//! Python bindings. Enum arguments are passed as strings: modes `"a"`/`"b"`,
//! qubit `"up"`/`"down"`, sidebands `"red"`/`"blue"`, circuit kinds `"su2"`,
//! `"su11_single"`, `"su11_two"`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use twomode_core::fitting::{self, FitResult, RabiDataset, RabiPoint};
use twomode_core::fock::{self, NumberOp, Qubit, Truncation, TwoModeQubitState};
use twomode_core::interferometer::{self, AnalyticFringe, CircuitKind, CircuitProgram, FringeModel, Readout};
use twomode_core::sideband::{self, Kernel, SidebandKind};
use twomode_core::{gates, metrology};

fn to_py(e: twomode_core::Error) -> PyErr {
    use twomode_core::Error as E;
    let msg = format!("{}: {e}", e.kind());
    match e {
        E::InvalidDimension(_)
        | E::InvalidParameter(_)
        | E::TruncationMismatch(_)
        | E::Json(_)
        | E::InsufficientData(_) => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn parse<T: DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {s:?}")))
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn fit_to_py<'py>(py: Python<'py>, fit: &FitResult) -> PyResult<Bound<'py, PyAny>> {
    from_json(py, &fit.to_json().map_err(to_py)?)
}

/// Qubit plus two truncated bosonic modes, as a pure state.
#[pyclass(name = "State", module = "twomode", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: TwoModeQubitState,
}

impl PyState {
    fn wrap(r: twomode_core::Result<TwoModeQubitState>) -> PyResult<Self> {
        r.map(|inner| PyState { inner }).map_err(to_py)
    }
}

#[pymethods]
impl PyState {
    #[staticmethod]
    #[pyo3(signature = (n_max_a, n_max_b, qubit = "up", leak_tol = Truncation::DEFAULT_LEAK_TOL))]
    fn vacuum(n_max_a: usize, n_max_b: usize, qubit: &str, leak_tol: f64) -> PyResult<Self> {
        let tr = Truncation::new(n_max_a, n_max_b, leak_tol).map_err(to_py)?;
        Self::wrap(TwoModeQubitState::vacuum(tr, parse("qubit", qubit)?))
    }

    #[staticmethod]
    #[pyo3(signature = (n_max_a, n_max_b, na, nb, qubit = "up"))]
    fn fock(n_max_a: usize, n_max_b: usize, na: usize, nb: usize, qubit: &str) -> PyResult<Self> {
        let tr = Truncation::with_cutoffs(n_max_a, n_max_b).map_err(to_py)?;
        Self::wrap(TwoModeQubitState::fock(tr, parse("qubit", qubit)?, na, nb))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::wrap(TwoModeQubitState::from_json(text))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn cutoffs(&self) -> (usize, usize) {
        let t = self.inner.truncation();
        (t.n_max_a, t.n_max_b)
    }

    #[getter]
    fn norm_leak(&self) -> f64 {
        self.inner.norm_leak()
    }

    #[getter]
    fn p_down(&self) -> f64 {
        self.inner.p_down()
    }

    /// `(re, im)` of the amplitude of `|qubit, na, nb⟩`.
    #[pyo3(signature = (na, nb, qubit = "up"))]
    fn amplitude(&self, na: usize, nb: usize, qubit: &str) -> PyResult<(f64, f64)> {
        let q: Qubit = parse("qubit", qubit)?;
        let t = self.inner.truncation();
        if na > t.n_max_a || nb > t.n_max_b {
            return Err(PyValueError::new_err("Fock index beyond the cutoff"));
        }
        let z = self.inner.amplitude(q, na, nb);
        Ok((z.re, z.im))
    }

    #[pyo3(signature = (re, im = 0.0, mode = "a"))]
    fn displace(&self, re: f64, im: f64, mode: &str) -> PyResult<Self> {
        Self::wrap(gates::displacement(&self.inner, Complex64::new(re, im), parse("mode", mode)?))
    }

    #[pyo3(signature = (r, theta = 0.0, mode = "a"))]
    fn squeeze(&self, r: f64, theta: f64, mode: &str) -> PyResult<Self> {
        Self::wrap(gates::single_mode_squeeze(&self.inner, r, theta, parse("mode", mode)?))
    }

    #[pyo3(signature = (r, theta = 0.0))]
    fn two_mode_squeeze(&self, r: f64, theta: f64) -> PyResult<Self> {
        Self::wrap(gates::two_mode_squeeze(&self.inner, r, theta))
    }

    #[pyo3(signature = (mix, phase = 0.0))]
    fn beamsplitter(&self, mix: f64, phase: f64) -> PyResult<Self> {
        Self::wrap(gates::beamsplitter(&self.inner, mix, phase))
    }

    /// Resonant sideband pulse of area `beta`.
    #[pyo3(signature = (beta, kind = "red", mode = "a"))]
    fn sideband(&self, beta: f64, kind: &str, mode: &str) -> PyResult<Self> {
        let kind: SidebandKind = parse("sideband", kind)?;
        Self::wrap(sideband::sideband_pulse(&self.inner, beta, kind, parse("mode", mode)?))
    }

    fn marginal(&self, mode: &str) -> PyResult<Vec<f64>> {
        Ok(fock::fock_marginal(&self.inner, parse("mode", mode)?))
    }

    /// Mean of `"mode_a"`, `"mode_b"` or `"total"`.
    fn mean_number(&self, which: &str) -> PyResult<f64> {
        let op: NumberOp = parse("number operator", which)?;
        Ok(fock::number_stats(&self.inner, op).map_err(to_py)?.mean)
    }

    fn purity(&self, mode: &str) -> PyResult<f64> {
        Ok(fock::mode_purity(&self.inner, parse("mode", mode)?))
    }

    fn fidelity(&self, other: &PyState) -> PyResult<f64> {
        fock::fidelity(&self.inner, &other.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let (a, b) = self.cutoffs();
        format!("State(n_max_a={a}, n_max_b={b}, norm_leak={:.3e})", self.norm_leak())
    }
}

fn program(kind: &str, param: f64, phi0: f64, v0: f64, beta: f64, readout: &str, mode: &str) -> PyResult<CircuitProgram> {
    let kind: CircuitKind = parse("circuit kind", kind)?;
    let readout = Readout {
        mode: parse("mode", mode)?,
        kind: parse("sideband", readout)?,
        beta,
    };
    Ok(CircuitProgram::new(kind, param)
        .map_err(to_py)?
        .with_readout(readout)
        .with_offsets(phi0, v0))
}

/// `P↓` of a circuit over `phis`, by exact simulation (optionally
/// binomially sampled) or from the analytic series.
#[pyfunction]
#[pyo3(signature = (kind, param, phis, phi0 = 0.0, v0 = 0.0, beta = std::f64::consts::FRAC_PI_2, readout = "red",
    mode = "a", shots = None, seed = 0, analytic = false, single_cosine = false))]
#[allow(clippy::too_many_arguments)]
fn fringe(
    kind: &str,
    param: f64,
    phis: Vec<f64>,
    phi0: f64,
    v0: f64,
    beta: f64,
    readout: &str,
    mode: &str,
    shots: Option<u64>,
    seed: u64,
    analytic: bool,
    single_cosine: bool,
) -> PyResult<Vec<f64>> {
    let prog = program(kind, param, phi0, v0, beta, readout, mode)?;
    if analytic {
        let kernel = if single_cosine { Kernel::SingleCosine } else { Kernel::Corrected };
        let m = AnalyticFringe::new(prog, kernel).map_err(to_py)?;
        phis.iter().map(|&p| m.p_down(p).map_err(to_py)).collect()
    } else {
        let d = interferometer::sweep_fringe(&prog, &phis, shots, seed).map_err(to_py)?;
        Ok(d.p_downs())
    }
}

/// Cramér–Rao phase bound of `kind` at probe mean `mean_n`.
#[pyfunction]
fn cr_bound(kind: &str, mean_n: f64) -> PyResult<f64> {
    metrology::cr_bound(parse("circuit kind", kind)?, mean_n).map_err(to_py)
}

#[pyfunction]
fn quantum_fisher(kind: &str, mean_n: f64) -> PyResult<f64> {
    Ok(metrology::quantum_fisher(parse("circuit kind", kind)?, mean_n))
}

#[pyfunction]
fn sql(mean_n: f64) -> PyResult<f64> {
    metrology::sql(mean_n).map_err(to_py)
}

/// Best sensitivity of the analytic fringe of `kind` at probe mean `mean_n`.
#[pyfunction]
#[pyo3(signature = (kind, mean_n, optimize_beta = false))]
fn sensitivity<'py>(py: Python<'py>, kind: &str, mean_n: f64, optimize_beta: bool) -> PyResult<Bound<'py, PyAny>> {
    let kind: CircuitKind = parse("circuit kind", kind)?;
    let reports = metrology::sensitivity_sweep(kind, &[mean_n], optimize_beta, Kernel::Corrected).map_err(to_py)?;
    from_json(py, &serde_json::to_string(&reports[0]).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)
}

/// Fit `(param, phi0, v0)` of `kind` to a measured fringe.
#[pyfunction]
#[pyo3(signature = (kind, phis, p_downs, shots = None, beta = std::f64::consts::FRAC_PI_2, readout = "red", mode = "a"))]
#[allow(clippy::too_many_arguments)]
fn fit_fringe<'py>(
    py: Python<'py>,
    kind: &str,
    phis: Vec<f64>,
    p_downs: Vec<f64>,
    shots: Option<u64>,
    beta: f64,
    readout: &str,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    if phis.len() != p_downs.len() {
        return Err(PyValueError::new_err("phis and p_downs differ in length"));
    }
    let prog = program(kind, 1.0, 0.0, 0.0, beta, readout, mode)?;
    let dataset = interferometer::FringeDataset {
        points: phis
            .iter()
            .zip(&p_downs)
            .map(|(&phi, &p_down)| interferometer::FringePoint { phi, p_down, shots })
            .collect(),
        program: prog.clone(),
        seed: None,
    };
    let fit = fitting::fit_fringe(&dataset, prog.kind).map_err(to_py)?;
    fit_to_py(py, &fit)
}

/// Fock populations `P(0..=n_max)` from a resonant blue-sideband Rabi curve.
#[pyfunction]
#[pyo3(signature = (times, p_downs, n_max, omega_sb, shots = None))]
fn fit_fock<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    p_downs: Vec<f64>,
    n_max: usize,
    omega_sb: f64,
    shots: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    if times.len() != p_downs.len() {
        return Err(PyValueError::new_err("times and p_downs differ in length"));
    }
    let data = RabiDataset {
        points: times
            .iter()
            .zip(&p_downs)
            .map(|(&t, &p_down)| RabiPoint { t, p_down, shots })
            .collect(),
    };
    let fit = fitting::fit_fock_populations(&data, n_max, omega_sb).map_err(to_py)?;
    fit_to_py(py, &fit)
}

/// Blue-sideband Rabi signal of a Fock distribution.
#[pyfunction]
fn rabi_signal(populations: Vec<f64>, omega_sb: f64, times: Vec<f64>) -> PyResult<Vec<f64>> {
    sideband::rabi_signal(&populations, omega_sb, &times).map_err(to_py)
}

/// Contrast-maximizing beamsplitter amplitude over `grid`, with the
/// two-pulse transfer fidelity at the result.
#[pyfunction]
#[pyo3(signature = (grid, alpha = 1.0, mix_per_amplitude = 1.0))]
fn calibrate_bs<'py>(py: Python<'py>, grid: Vec<f64>, alpha: f64, mix_per_amplitude: f64) -> PyResult<Bound<'py, PyAny>> {
    let ev = fitting::SimulatedContrast::new(alpha, mix_per_amplitude).map_err(to_py)?;
    let cal = fitting::calibrate_beamsplitter(&ev, &grid).map_err(to_py)?;
    let mix = ev.mix(cal.amplitude);
    let transfer = fitting::transfer_fidelity(mix, alpha, ev.truncation).map_err(to_py)?;
    let body = serde_json::json!({
        "amplitude": cal.amplitude,
        "mix": mix,
        "contrast": cal.contrast,
        "at_boundary": cal.at_boundary,
        "transfer_fidelity": transfer,
    });
    from_json(py, &body.to_string())
}

#[pymodule]
fn twomode(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FIFTY_FIFTY", gates::FIFTY_FIFTY)?;
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(fringe, m)?)?;
    m.add_function(wrap_pyfunction!(cr_bound, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_fisher, m)?)?;
    m.add_function(wrap_pyfunction!(sql, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fringe, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fock, m)?)?;
    m.add_function(wrap_pyfunction!(rabi_signal, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_bs, m)?)?;
    Ok(())
}
