//! Python bindings: systems, data generation, networks, training, rollout,
//! uncertainty statistics and error bounds.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use flowmap::bounds::{self, BoundInputs};
use flowmap::cli::parse_box;
use flowmap::data::{self, GenConfig, NoiseSpec};
use flowmap::net::{self, Activation, AdamConfig, NetworkSpec};
use flowmap::rollout::{self, DeltaSchedule};
use flowmap::systems::{self, SystemDef, SystemId};
use flowmap::train::{self, TrainConfig};
use flowmap::uq::{self, RuleSpec, StatSeries};
use flowmap::{FlowError, ParamVec, Rng, StateVec, Trajectory};

fn to_py(err: FlowError) -> PyErr {
    match err {
        FlowError::Diverged { .. }
        | FlowError::NonFiniteState { .. }
        | FlowError::BoundOverflow { .. }
        | FlowError::Io { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

type Series = (Vec<f64>, Vec<Vec<f64>>);

fn series(traj: Trajectory) -> Series {
    (traj.times, traj.states.into_iter().map(StateVec::into_inner).collect())
}

fn stats_tuple(s: StatSeries) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        s.times,
        s.mean.into_iter().map(StateVec::into_inner).collect(),
        s.var.into_iter().map(StateVec::into_inner).collect(),
    )
}

/// A benchmark system: `linear-scalar`, `linear-2d`, `oscillator` or `cell-cascade`.
#[pyclass(name = "System", frozen)]
struct PySystem {
    inner: SystemDef,
}

#[pymethods]
impl PySystem {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: SystemDef::from_name(name).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.id.as_str()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l
    }

    /// Right-hand side `f(x, alpha)`.
    fn rhs(&self, x: Vec<f64>, alpha: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .rhs_eval(&StateVec::new(x), &ParamVec::new(alpha))
            .map(StateVec::into_inner)
            .map_err(to_py)
    }

    /// RK4 approximation of the exact flow over `delta`.
    #[pyo3(signature = (x, alpha, delta, substeps=None))]
    fn flow(&self, x: Vec<f64>, alpha: Vec<f64>, delta: f64, substeps: Option<usize>) -> PyResult<Vec<f64>> {
        for (what, expected, got) in [("state", self.inner.d, x.len()), ("parameters", self.inner.l, alpha.len())] {
            if expected != got {
                return Err(to_py(FlowError::DimensionMismatch { what, expected, got }));
            }
        }
        let n = substeps.unwrap_or_else(|| systems::default_substeps(delta));
        Ok(systems::flow_oracle(&self.inner, &x, &alpha, delta, n))
    }

    /// Reference solution on a uniform grid: `(times, states)`.
    fn reference(&self, x0: Vec<f64>, alpha: Vec<f64>, delta: f64, steps: usize) -> PyResult<Series> {
        let sched = DeltaSchedule::uniform(delta, steps).map_err(to_py)?;
        rollout::reference_trajectory(&self.inner, &StateVec::new(x0), &ParamVec::new(alpha), &sched)
            .map(series)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("System('{}')", self.inner.id)
    }
}

/// Training pairs `(delta, x_in, alpha, x_out)`.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: flowmap::Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn pair(&self, i: usize) -> PyResult<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let p = self
            .inner
            .pairs
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("pair {i} out of range")))?;
        Ok((p.delta, p.x_in.0.clone(), p.alpha.0.clone(), p.x_out.0.clone()))
    }

    fn to_csv(&self) -> String {
        data::dataset_to_string(&self.inner)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::write_dataset(&self.inner, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: data::read_dataset(path).map_err(to_py)?,
        })
    }
}

/// Sample `pairs` training pairs from `system` with lags in `[0, max_lag]`.
#[pyfunction]
#[pyo3(signature = (system, pairs, seed=0, sigma=0.0, max_lag=0.1, alpha_box=None))]
fn generate_pairs(
    py: Python<'_>,
    system: &str,
    pairs: usize,
    seed: u64,
    sigma: f64,
    max_lag: f64,
    alpha_box: Option<&str>,
) -> PyResult<PyDataset> {
    let id: SystemId = system.parse().map_err(to_py)?;
    let mut cfg = GenConfig::for_system(id, pairs, seed);
    cfg.noise = NoiseSpec { sigma };
    cfg.idelta = flowmap::BoxDomain::interval(0.0, max_lag).map_err(to_py)?;
    if let Some(b) = alpha_box {
        cfg.ialpha = parse_box(b).map_err(to_py)?;
    }
    let ds = py.detach(|| data::generate_pairs(&cfg)).map_err(to_py)?;
    Ok(PyDataset { inner: ds })
}

/// Residual network `x_out = x_in + N([x_in, alpha, delta])`.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: net::Network,
}

#[pymethods]
impl PyNetwork {
    /// Gaussian-initialized network with zero biases.
    #[new]
    #[pyo3(signature = (d, l, layers=3, width=40, activation="tanh", output_tanh=false, seed=0))]
    fn new(
        d: usize,
        l: usize,
        layers: usize,
        width: usize,
        activation: &str,
        output_tanh: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let act: Activation = activation.parse().map_err(to_py)?;
        let spec = NetworkSpec::new(d, l, layers, width)
            .with_activation(act)
            .with_output_tanh(output_tanh);
        let inner = net::Network::init(spec, &mut Rng::new(seed).substream("init")).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.spec().d
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.spec().l
    }

    /// One step `x + N(x, alpha, delta)`.
    fn step(&self, x: Vec<f64>, alpha: Vec<f64>, delta: f64) -> PyResult<Vec<f64>> {
        let (y, _) = self
            .inner
            .forward(&StateVec::new(x), &ParamVec::new(alpha), delta)
            .map_err(to_py)?;
        Ok(y.into_inner())
    }

    /// Composed prediction over `steps` lags of `delta`: `(times, states)`.
    fn predict(&self, py: Python<'_>, x0: Vec<f64>, alpha: Vec<f64>, delta: f64, steps: usize) -> PyResult<Series> {
        let sched = DeltaSchedule::uniform(delta, steps).map_err(to_py)?;
        py.detach(|| rollout::predict(&self.inner, &StateVec::new(x0), &ParamVec::new(alpha), &sched))
            .map(series)
            .map_err(to_py)
    }

    /// Mean squared one-step loss over a dataset.
    fn loss(&self, data: &PyDataset) -> PyResult<f64> {
        train::mse_loss(&self.inner, &data.inner.pairs).map_err(to_py)
    }

    fn to_json(&self) -> String {
        net::model_to_string(&self.inner)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: net::model_from_str(text).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        net::save_model(&self.inner, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: net::load_model(path).map_err(to_py)?,
        })
    }
}

/// Train with mini-batch Adam; returns the trained network and per-epoch losses.
#[pyfunction]
#[pyo3(signature = (network, data, epochs, batch_size=30, lr=1e-3, seed=0, validation=0.0))]
fn train_network(
    py: Python<'_>,
    network: &PyNetwork,
    data: &PyDataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    validation: f64,
) -> PyResult<(PyNetwork, Vec<f64>)> {
    let cfg = TrainConfig {
        epochs,
        batch_size,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        seed,
        validation_fraction: validation,
        log_every: 0,
    };
    let start = network.inner.clone();
    let (net, report) = py
        .detach(|| train::train(start, &data.inner, &cfg))
        .map_err(to_py)?;
    Ok((PyNetwork { inner: net }, report.epoch_loss))
}

/// Mean and variance of model rollouts over a parameter box:
/// `(times, mean, var)`. `rule` is `gl:N`, `gl:NxM..` or `mc:SAMPLES`.
#[pyfunction]
#[pyo3(signature = (network, x0, steps, rule="gl:5", alpha_box=None, delta=0.1, seed=0, system=None))]
#[allow(clippy::too_many_arguments)]
fn uq_statistics(
    py: Python<'_>,
    network: &PyNetwork,
    x0: Vec<f64>,
    steps: usize,
    rule: &str,
    alpha_box: Option<&str>,
    delta: f64,
    seed: u64,
    system: Option<&str>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let rule: RuleSpec = rule.parse().map_err(to_py)?;
    let domain = match (alpha_box, system) {
        (Some(b), _) => parse_box(b).map_err(to_py)?,
        (None, Some(s)) => SystemDef::from_name(s).map_err(to_py)?.default_ialpha,
        (None, None) => return Err(PyValueError::new_err("give alpha_box or system")),
    };
    let sched = DeltaSchedule::uniform(delta, steps).map_err(to_py)?;
    let x0 = StateVec::new(x0);
    let net = &network.inner;
    let eval = |a: &ParamVec| rollout::predict(net, &x0, a, &sched);
    let stats = py
        .detach(|| match &rule {
            RuleSpec::GaussLegendre(_) => uq::uq_statistics(eval, &rule.quadrature(&domain)?),
            RuleSpec::MonteCarlo(n) => {
                uq::mc_statistics(eval, &uq::Density::UniformBox(domain.clone()), *n, &Rng::new(seed))
            }
        })
        .map_err(to_py)?;
    Ok(stats_tuple(stats))
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
#[pyfunction]
#[pyo3(signature = (n, a=-1.0, b=1.0))]
fn gauss_legendre(n: usize, a: f64, b: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let r = uq::gauss_legendre(n, a, b).map_err(to_py)?;
    Ok((r.nodes.iter().map(|p| p[0]).collect(), r.weights))
}

/// `(e^{n L delta} - 1) / (e^{L delta} - 1)`.
#[pyfunction]
#[pyo3(name = "composition_factor")]
fn py_composition_factor(n: usize, lipschitz: f64, delta: f64) -> PyResult<f64> {
    bounds::composition_factor(n, lipschitz, delta).map_err(to_py)
}

/// `(mean_bound, var_bound)` for exact parameter ranges.
#[pyfunction]
#[pyo3(signature = (n, lipschitz, delta, eps, ct=0.0))]
fn mean_var_bounds(n: usize, lipschitz: f64, delta: f64, eps: f64, ct: f64) -> PyResult<(f64, f64)> {
    let inp = BoundInputs {
        n,
        lipschitz,
        delta,
        sup_error: eps,
        ct,
        ..BoundInputs::default()
    };
    bounds::mean_var_bounds(&inp).map_err(to_py)
}

/// `(mean_bound, var_bound)` for an estimated parameter range.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn mismatch_bounds(
    n: usize,
    lipschitz: f64,
    delta: f64,
    eps: f64,
    ct_tilde: f64,
    gamma: f64,
    eta: f64,
) -> PyResult<(f64, f64)> {
    let inp = BoundInputs {
        n,
        lipschitz,
        delta,
        sup_error: eps,
        ct_tilde,
        gamma,
        eta,
        ..BoundInputs::default()
    };
    bounds::mismatch_bounds(&inp).map_err(to_py)
}

/// Closed-form mean and variance of `exp(-alpha t)` for `alpha ~ U[0, 1]`.
#[pyfunction]
fn analytic_mean_var_ex1(t: f64) -> (f64, f64) {
    systems::analytic_mean_var_ex1(t)
}

#[pymodule]
pub fn pyflowmap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(generate_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(train_network, m)?)?;
    m.add_function(wrap_pyfunction!(uq_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_legendre, m)?)?;
    m.add_function(wrap_pyfunction!(py_composition_factor, m)?)?;
    m.add_function(wrap_pyfunction!(mean_var_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(mismatch_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_mean_var_ex1, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
