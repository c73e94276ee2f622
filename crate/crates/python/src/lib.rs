use std::f64::consts::PI;

use origami_core::analysis::classify_with;
use origami_core::collision::Collider;
use origami_core::constraints::{self, ConstraintSystem};
use origami_core::fixtures;
use origami_core::genericity::{dual_graph, is_generically_rigid, is_generically_rigid_checked};
use origami_core::kinematics::Folder;
use origami_core::linalg::RANK_REL_TOL;
use origami_core::model::{self, CreasePattern, LambdaPair, NormalizedAngles};
use origami_core::singlevertex;
use origami_core::tracking::{self, TrackOptions, Tracker};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(rigid_origami, OrigamiError, PyValueError);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    OrigamiError::new_err(e.to_string())
}

/// Converts through JSON so Python gets plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn options(step: f64) -> PyResult<TrackOptions> {
    if !(step > 0.0 && step < PI) {
        return Err(OrigamiError::new_err(format!("step must be in (0, pi), got {step}")));
    }
    Ok(TrackOptions::with_step(step))
}

/// A validated crease pattern.
#[pyclass(name = "Pattern", module = "rigid_origami", frozen)]
struct PyPattern {
    inner: CreasePattern,
}

impl PyPattern {
    fn system(&self) -> ConstraintSystem {
        ConstraintSystem::build(&self.inner)
    }

    fn state(&self, rho: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let rho = rho.unwrap_or_else(|| self.inner.initial_rho().to_vec());
        if rho.len() != self.inner.num_inner_creases() {
            return Err(OrigamiError::new_err(format!(
                "expected {} folding angles, got {}",
                self.inner.num_inner_creases(),
                rho.len()
            )));
        }
        Ok(rho)
    }
}

#[pymethods]
impl PyPattern {
    /// Parses a FOLD JSON document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CreasePattern::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(err)?;
        Self::from_json(&text)
    }

    /// Built-in test pattern by name. `nx`, `ny` size the grid patterns.
    #[staticmethod]
    #[pyo3(signature = (name, nx=2, ny=2))]
    fn fixture(name: &str, nx: usize, ny: usize) -> PyResult<Self> {
        let inner = match name {
            "square_with_diagonal" => fixtures::square_with_diagonal(),
            "fig2_vertex" => fixtures::fig2_vertex(),
            "cube_corner" => fixtures::cube_corner(),
            "degree6_vertex" => fixtures::degree6_vertex(),
            "miura" => fixtures::miura(nx, ny),
            "quad_grid" => fixtures::quad_grid(nx, ny),
            "three_squares" => fixtures::three_squares(),
            "pentagon_hole" => fixtures::pentagon_hole(0.3),
            "fig6_lock" => fixtures::fig6_lock(),
            "fig6_tree" => fixtures::fig6_tree(),
            "forest_pair" => fixtures::forest_pair(),
            _ => return Err(OrigamiError::new_err(format!("unknown fixture '{name}'"))),
        };
        Ok(Self { inner })
    }

    /// Single inner vertex with the given sector angles (radians).
    #[staticmethod]
    fn single_vertex(alphas: Vec<f64>) -> PyResult<Self> {
        if alphas.len() < 2 || !alphas.iter().all(|&a| a > 0.0 && a < 2.0 * PI) {
            return Err(OrigamiError::new_err("need at least two sector angles in (0, 2pi)"));
        }
        Ok(Self {
            inner: fixtures::single_vertex(&alphas),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn num_inner_creases(&self) -> usize {
        self.inner.num_inner_creases()
    }

    #[getter]
    fn num_panels(&self) -> usize {
        self.inner.panels().len()
    }

    #[getter]
    fn num_holes(&self) -> usize {
        self.inner.holes().len()
    }

    #[getter]
    fn inner_vertices(&self) -> Vec<usize> {
        self.inner.inner_vertices()
    }

    #[getter]
    fn initial_rho(&self) -> Vec<f64> {
        self.inner.initial_rho().to_vec()
    }

    /// Pattern with a different stored initial state.
    fn with_initial_rho(&self, rho: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_initial_rho(rho).map_err(err)?,
        })
    }

    fn residual(&self, rho: Vec<f64>) -> PyResult<f64> {
        let rho = self.state(Some(rho))?;
        Ok(self.system().max_norm(&rho))
    }

    fn residual_vector(&self, rho: Vec<f64>) -> PyResult<Vec<f64>> {
        let rho = self.state(Some(rho))?;
        Ok(self.system().residual(&rho).values)
    }

    fn is_satisfied(&self, rho: Vec<f64>) -> PyResult<bool> {
        let rho = self.state(Some(rho))?;
        Ok(self.system().is_satisfied(&rho))
    }

    /// Rigidity report: rank, deg, flex and stress bases, flags.
    #[pyo3(signature = (rho=None, rank_tol=RANK_REL_TOL))]
    fn analyze<'py>(&self, py: Python<'py>, rho: Option<Vec<f64>>, rank_tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let rho = self.state(rho)?;
        let report = classify_with(&self.system(), &rho, rank_tol).map_err(err)?;
        to_py(py, &report)
    }

    #[pyo3(signature = (rho, direction, steps=100, step=PI / 200.0))]
    fn track_flex<'py>(
        &self,
        py: Python<'py>,
        rho: Vec<f64>,
        direction: Vec<f64>,
        steps: usize,
        step: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let rho = self.state(Some(rho))?;
        let s = self.system();
        let path = Tracker::new(&s, options(step)?).track_flex(&rho, &direction, steps).map_err(err)?;
        to_py(py, &path)
    }

    #[pyo3(signature = (start, target, step=PI / 200.0, collisions=false))]
    fn track_to<'py>(
        &self,
        py: Python<'py>,
        start: Vec<f64>,
        target: Vec<f64>,
        step: f64,
        collisions: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let start = self.state(Some(start))?;
        let target = self.state(Some(target))?;
        let s = self.system();
        let collider = Collider::new(&self.inner);
        let mut tracker = Tracker::new(&s, options(step)?);
        if collisions {
            tracker = tracker.with_collider(&collider);
        }
        to_py(py, &tracker.track_to(&start, &target).map_err(err)?)
    }

    /// Global path composed from single-vertex motions (forest patterns).
    #[pyo3(signature = (rho=None, step=PI / 200.0))]
    fn compose_forest<'py>(&self, py: Python<'py>, rho: Option<Vec<f64>>, step: f64) -> PyResult<Bound<'py, PyAny>> {
        let rho = self.state(rho)?;
        let composed = tracking::compose_forest(&self.inner, &rho, None, &options(step)?).map_err(err)?;
        to_py(py, &composed)
    }

    /// Folded panel outlines: one list of `(x, y, z)` per panel.
    fn fold_mesh(&self, rho: Vec<f64>) -> PyResult<Vec<Vec<(f64, f64, f64)>>> {
        let rho = self.state(Some(rho))?;
        let mesh = Folder::new(&self.inner).fold_mesh(&rho).map_err(err)?;
        Ok(mesh
            .into_iter()
            .map(|p| p.vertices.iter().map(|v| (v.x, v.y, v.z)).collect())
            .collect())
    }

    /// Contact report. `order` lists declared `(a, b, sign)` stacking pairs.
    #[pyo3(signature = (rho, order=Vec::new()))]
    fn check_collisions<'py>(&self, py: Python<'py>, rho: Vec<f64>, order: Vec<(usize, usize, i8)>) -> PyResult<Bound<'py, PyAny>> {
        let rho = self.state(Some(rho))?;
        let pairs: Vec<LambdaPair> = order.into_iter().map(|(a, b, sign)| LambdaPair { a, b, sign }).collect();
        let report = Collider::new(&self.inner).check_state(&rho, &pairs).map_err(err)?;
        to_py(py, &report)
    }

    /// Generic rigid-foldability verdict; `check > 0` adds a sampled
    /// numeric cross-check.
    #[pyo3(signature = (check=0, seed=0))]
    fn generic<'py>(&self, py: Python<'py>, check: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let report = if check > 0 {
            is_generically_rigid_checked(&self.inner, check, seed)
        } else {
            is_generically_rigid(&self.inner)
        };
        to_py(py, &report)
    }

    fn dual_dot(&self) -> String {
        dual_graph(&self.inner).to_dot()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pattern(panels={}, inner_creases={}, inner_vertices={}, holes={})",
            self.inner.panels().len(),
            self.inner.num_inner_creases(),
            self.inner.inner_vertices().len(),
            self.inner.holes().len()
        )
    }
}

#[pyfunction]
fn solve_degree3<'py>(py: Python<'py>, alphas: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &singlevertex::solve_degree3(&alphas).map_err(err)?)
}

#[pyfunction]
fn classify_vertex<'py>(py: Python<'py>, alphas: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &singlevertex::classify_vertex(&alphas).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (alphas, sweep=0, samples=73))]
fn explore_vertex(alphas: Vec<f64>, sweep: usize, samples: usize) -> PyResult<Vec<Vec<f64>>> {
    if sweep >= alphas.len() {
        return Err(OrigamiError::new_err("sweep index out of range"));
    }
    Ok(singlevertex::explore_vertex(&alphas, sweep, samples, None))
}

#[pyfunction]
fn is_flat_state(rho: Vec<f64>) -> bool {
    constraints::is_flat_state(&rho)
}

/// `t = tan(rho / 2)`, infinite at ±pi.
#[pyfunction]
fn to_normalized(rho: Vec<f64>) -> Vec<f64> {
    model::to_normalized(&rho).t
}

#[pyfunction]
fn from_normalized(t: Vec<f64>) -> Vec<f64> {
    model::from_normalized(&NormalizedAngles { t }).rho
}

#[pymodule]
fn rigid_origami(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPattern>()?;
    m.add("OrigamiError", m.py().get_type::<OrigamiError>())?;
    m.add_function(wrap_pyfunction!(solve_degree3, m)?)?;
    m.add_function(wrap_pyfunction!(classify_vertex, m)?)?;
    m.add_function(wrap_pyfunction!(explore_vertex, m)?)?;
    m.add_function(wrap_pyfunction!(is_flat_state, m)?)?;
    m.add_function(wrap_pyfunction!(to_normalized, m)?)?;
    m.add_function(wrap_pyfunction!(from_normalized, m)?)?;
    Ok(())
}
