//! Python bindings for the nested model-averaging library.
//!
//! Exposes the design factorization, the exact simplex solvers, the scenario
//! generators, and the Monte Carlo driver as plain Python types (lists and
//! dicts), so no numpy dependency is required.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nestma::cli_report::WeightSetSpec;
use nestma::dgp::{generate, make_scenario, ScenarioKind, ScenarioSpec};
use nestma::mat::Mat;
use nestma::montecarlo::{run_experiment, Phi};
use nestma::nested_projection::{coords, factorize, sigma_hat, NestedDesign};
use nestma::objectives::{
    build_criterion, build_loss, build_risk, ObjectiveKind, SeparableSimplexObjective,
};
use nestma::simplex_solver::{solve_discrete, solve_simplex, Method, SolveReport};

fn err(e: nestma::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Isotonic => "isotonic",
        Method::GenericQp => "generic_qp",
        Method::Enumeration => "enumeration",
        Method::RestrictedTwoPhase => "restricted_two_phase",
    }
}

fn report_to_dict(py: Python<'_>, rep: &SolveReport) -> PyResult<PyObject> {
    let d = PyDict::new_bound(py);
    d.set_item("weights", rep.weights.w.clone())?;
    d.set_item("objective_value", rep.objective_value)?;
    d.set_item("method", method_name(rep.method))?;
    d.set_item("kkt_residual", rep.kkt_residual)?;
    d.set_item("warning", rep.warning.clone())?;
    Ok(d.into())
}

fn rows_to_mat(rows: &[Vec<f64>]) -> PyResult<Mat> {
    let n = rows.len();
    if n == 0 {
        return Err(PyValueError::new_err("design must have at least one row"));
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("design rows have unequal lengths"));
    }
    Ok(Mat::from_fn(n, k, |i, j| rows[i][j]))
}

/// A QR-factorized nested design: columns in nesting order, one shared
/// factorization serving all candidate models.
#[pyclass(name = "Design")]
struct PyDesign {
    inner: NestedDesign,
}

#[pymethods]
impl PyDesign {
    /// Build from row-major design data and strictly increasing model sizes.
    #[new]
    fn new(x: Vec<Vec<f64>>, sizes: Vec<usize>) -> PyResult<Self> {
        let mat = rows_to_mat(&x)?;
        let inner = factorize(&mat, &sizes).map_err(err)?;
        Ok(PyDesign { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.sizes().to_vec()
    }

    #[getter]
    fn num_models(&self) -> usize {
        self.inner.num_models()
    }

    /// Residual-variance estimate from the largest model.
    fn sigma_hat_sq(&self, y: Vec<f64>) -> PyResult<f64> {
        let c_y = coords(&self.inner, &y).map_err(err)?;
        sigma_hat(&self.inner, &c_y).map_err(err)
    }

    /// Minimize the penalized criterion over a weight set.
    ///
    /// `phi` is "mma", "logn", or a positive number; `weight_set` is
    /// "simplex" or "discrete:N".
    #[pyo3(signature = (y, phi = "mma", weight_set = "simplex"))]
    fn solve(
        &self,
        py: Python<'_>,
        y: Vec<f64>,
        phi: &str,
        weight_set: &str,
    ) -> PyResult<PyObject> {
        let phi = Phi::parse(phi).map_err(err)?;
        let set = WeightSetSpec::parse(weight_set).map_err(err)?;
        let c_y = coords(&self.inner, &y).map_err(err)?;
        let s2hat = sigma_hat(&self.inner, &c_y).map_err(err)?;
        let obj = build_criterion(&self.inner, &c_y, phi.value(self.inner.n()), s2hat)
            .map_err(err)?;
        let rep = match set {
            WeightSetSpec::Simplex => solve_simplex(&obj).map_err(err)?,
            WeightSetSpec::Discrete(n_grid) => solve_discrete(&obj, n_grid).map_err(err)?,
            WeightSetSpec::Restricted { .. } => {
                return Err(PyValueError::new_err(
                    "restricted sets need a scenario (the under-fitted count); \
                     use the simulate() driver",
                ))
            }
        };
        let out = report_to_dict(py, &rep)?;
        let d = out.downcast_bound::<PyDict>(py)?;
        d.set_item("criterion_value", rep.objective_value)?;
        d.set_item("sigma_hat_sq", s2hat)?;
        Ok(out)
    }

    /// Exact in-sample loss minimizer given the (known) regression mean.
    fn solve_loss(&self, py: Python<'_>, y: Vec<f64>, mu: Vec<f64>) -> PyResult<PyObject> {
        let c_y = coords(&self.inner, &y).map_err(err)?;
        let c_mu = coords(&self.inner, &mu).map_err(err)?;
        let obj = build_loss(&self.inner, &c_y, &c_mu).map_err(err)?;
        let rep = solve_simplex(&obj).map_err(err)?;
        report_to_dict(py, &rep)
    }

    /// Exact risk minimizer given the regression mean and noise variance.
    fn solve_risk(&self, py: Python<'_>, mu: Vec<f64>, sigma2: f64) -> PyResult<PyObject> {
        let c_mu = coords(&self.inner, &mu).map_err(err)?;
        let obj = build_risk(&self.inner, &c_mu, sigma2).map_err(err)?;
        let rep = solve_simplex(&obj).map_err(err)?;
        report_to_dict(py, &rep)
    }
}

/// A simulation scenario: design law, coefficients, nesting plan, and noise.
#[pyclass(name = "Scenario")]
struct PyScenario {
    spec: ScenarioSpec,
}

#[pymethods]
impl PyScenario {
    /// `kind` is one of "toy", "fixed", "div1", "div2". `r2` sets the noise
    /// from a population R² (required except for "toy"); `rho` overrides the
    /// covariate autocorrelation where the scenario allows it.
    #[new]
    #[pyo3(signature = (kind, n, r2 = None, rho = None))]
    fn new(kind: &str, n: usize, r2: Option<f64>, rho: Option<f64>) -> PyResult<Self> {
        let kind = ScenarioKind::parse(kind).map_err(err)?;
        let spec = make_scenario(kind, n, r2, rho).map_err(err)?;
        Ok(PyScenario { spec })
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.spec.sizes.clone()
    }

    #[getter]
    fn m0(&self) -> usize {
        self.spec.m0
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.spec.sigma2
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.spec.beta.clone()
    }

    /// Draw one replication; returns a dict with row-major `x`, `mu`, `e`,
    /// and `y`. The draw is a pure function of `(seed, rep)`.
    fn generate(&self, py: Python<'_>, seed: u64, rep: u64) -> PyResult<PyObject> {
        let data = generate(&self.spec, seed, rep).map_err(err)?;
        let k = self.spec.k_max();
        let rows: Vec<Vec<f64>> = (0..self.spec.n)
            .map(|i| (0..k).map(|j| data.x[(i, j)]).collect())
            .collect();
        let d = PyDict::new_bound(py);
        d.set_item("x", rows)?;
        d.set_item("mu", data.mu)?;
        d.set_item("e", data.e)?;
        d.set_item("y", data.y)?;
        Ok(d.into())
    }
}

/// Minimize `c0 + sum_m (a[m] t_m^2 + b[m] t_m)` over simplex weights, where
/// `t_m` is the tail weight `sum_{l >= m} w_l`. Direct access to the exact
/// solver for externally built objectives.
#[pyfunction]
#[pyo3(signature = (a, b, c0 = 0.0))]
fn solve_separable(py: Python<'_>, a: Vec<f64>, b: Vec<f64>, c0: f64) -> PyResult<PyObject> {
    let obj = SeparableSimplexObjective {
        a,
        b,
        c0,
        kind: ObjectiveKind::Criterion,
    };
    let rep = solve_simplex(&obj).map_err(err)?;
    report_to_dict(py, &rep)
}

/// Run a Monte Carlo experiment and return the summary rows as dicts with
/// keys scenario, r2, n, estimator, metric, mean, mc_se, reps.
#[pyfunction]
#[pyo3(signature = (kind, n, reps, seed, r2 = None, rho = None,
                    phis = vec!["mma".into(), "logn".into()],
                    weight_sets = vec!["simplex".into()], threads = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    kind: &str,
    n: usize,
    reps: usize,
    seed: u64,
    r2: Option<f64>,
    rho: Option<f64>,
    phis: Vec<String>,
    weight_sets: Vec<String>,
    threads: usize,
) -> PyResult<Vec<PyObject>> {
    let kind = ScenarioKind::parse(kind).map_err(err)?;
    let spec = make_scenario(kind, n, r2, rho).map_err(err)?;
    let phis: Vec<Phi> = phis
        .iter()
        .map(|p| Phi::parse(p).map_err(err))
        .collect::<PyResult<_>>()?;
    let sets: Vec<_> = weight_sets
        .iter()
        .map(|s| WeightSetSpec::parse(s).map(|ws| ws.resolve(&spec)).map_err(err))
        .collect::<PyResult<_>>()?;
    let res = run_experiment(&spec, reps, seed, &phis, &sets, threads).map_err(err)?;
    res.summary
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new_bound(py);
            d.set_item("scenario", row.scenario.clone())?;
            d.set_item("r2", row.r2)?;
            d.set_item("n", row.n)?;
            d.set_item("estimator", row.estimator.clone())?;
            d.set_item("metric", row.metric.clone())?;
            d.set_item("mean", row.mean)?;
            d.set_item("mc_se", row.mc_se)?;
            d.set_item("reps", row.reps)?;
            Ok(d.into())
        })
        .collect()
}

/// Regularized incomplete beta function `I_x(a, b)`.
#[pyfunction]
fn beta_cdf(a: f64, b: f64, x: f64) -> PyResult<f64> {
    nestma::montecarlo::stats::beta_cdf(a, b, x).map_err(err)
}

#[pymodule]
fn nestma_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDesign>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(solve_separable, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(beta_cdf, m)?)?;
    Ok(())
}
