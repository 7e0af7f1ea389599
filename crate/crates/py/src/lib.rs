//! Python bindings: datasets, networks, losses, metrics, grid topology and
//! whole experiment runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mustangs::data::{make_grid, make_ring, SyntheticDataset};
use mustangs::grid::{neighborhood_coords, GridConfig};
use mustangs::harness::{run_experiment as run_core, RunConfig, RunStatus};
use mustangs::metrics;
use mustangs::nn::{Activation, Batch, MlpSpec, Network as CoreNetwork};
use mustangs::objectives::{self, LossKind};

fn err(e: mustangs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn batch(rows: Vec<Vec<f64>>) -> PyResult<Batch> {
    Batch::from_rows(&rows).map_err(err)
}

fn rows(b: &Batch) -> Vec<Vec<f64>> {
    b.iter_rows().map(<[f64]>::to_vec).collect()
}

/// Seeded synthetic 2-D target distribution.
#[pyclass(name = "Dataset", frozen)]
pub struct Dataset {
    inner: SyntheticDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (modes=8, radius=2.0, std=0.05, seed=0))]
    fn ring(modes: usize, radius: f64, std: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: make_ring(modes, radius, std, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (side=5, spacing=2.0, std=0.05, seed=0))]
    fn grid(side: usize, spacing: f64, std: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: make_grid(side, spacing, std, seed).map_err(err)?,
        })
    }

    #[getter]
    fn centers(&self) -> Vec<(f64, f64)> {
        self.inner.mode_centers.iter().map(|c| (c[0], c[1])).collect()
    }

    #[getter]
    fn mode_std(&self) -> f64 {
        self.inner.mode_std
    }

    #[getter]
    fn num_modes(&self) -> usize {
        self.inner.num_modes()
    }

    /// `n` points drawn with the given seed.
    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        rows(&self.inner.sample(n, &mut ChaCha8Rng::seed_from_u64(seed)))
    }
}

/// Fully connected tanh network with a chosen output activation.
#[pyclass(name = "Network")]
pub struct Network {
    inner: CoreNetwork,
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (layers, output="identity", seed=0))]
    fn new(layers: Vec<usize>, output: &str, seed: u64) -> PyResult<Self> {
        let act: Activation = output.parse().map_err(err)?;
        let spec = MlpSpec::new(layers, act).map_err(err)?;
        Ok(Self {
            inner: CoreNetwork::random(spec, &mut ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params.values.clone()
    }

    #[setter]
    fn set_params(&mut self, values: Vec<f64>) -> PyResult<()> {
        if values.len() != self.inner.spec.param_count() {
            return Err(PyValueError::new_err(format!(
                "expected {} parameters, got {}",
                self.inner.spec.param_count(),
                values.len()
            )));
        }
        self.inner.params.values = values;
        Ok(())
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.spec.param_count()
    }

    fn forward(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.forward(&batch(inputs)?).map_err(err)?))
    }
}

fn loss_kind(name: &str) -> PyResult<LossKind> {
    name.parse().map_err(err)
}

/// Generator loss of `kind` for discriminator outputs on generated samples.
#[pyfunction]
fn generator_loss(kind: &str, d_fake: Vec<f64>) -> PyResult<f64> {
    Ok(objectives::generator_loss(loss_kind(kind)?, &d_fake))
}

#[pyfunction]
fn discriminator_loss(d_real: Vec<f64>, d_fake: Vec<f64>) -> f64 {
    objectives::discriminator_loss(&d_real, &d_fake)
}

#[pyfunction]
fn gan_value(d_real: Vec<f64>, d_fake: Vec<f64>) -> f64 {
    objectives::gan_value_from_outputs(&d_real, &d_fake)
}

#[pyfunction]
fn frechet_distance(real: Vec<Vec<f64>>, fake: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::frechet_distance(&batch(real)?, &batch(fake)?).map_err(err)
}

#[pyfunction]
fn tvd(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    metrics::tvd(&p, &q).map_err(err)
}

/// `(per-mode counts, unassigned, covered modes)` of `samples` against `dataset`.
#[pyfunction]
#[pyo3(signature = (dataset, samples, min_fraction=None))]
fn mode_coverage(dataset: &Dataset, samples: Vec<Vec<f64>>, min_fraction: Option<f64>) -> PyResult<(Vec<usize>, usize, usize)> {
    let ds = &dataset.inner;
    let hist = metrics::assign_modes(&batch(samples)?, &ds.mode_centers, ds.mode_std);
    let frac = min_fraction.unwrap_or_else(|| metrics::default_min_fraction(ds.num_modes()));
    let covered = metrics::mode_coverage(&hist, frac);
    Ok((hist.counts, hist.unassigned, covered))
}

/// Two-sided rank-sum test: `(u, p_value, exact)`.
#[pyfunction]
fn mann_whitney(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, bool)> {
    let r = metrics::mann_whitney(&a, &b).map_err(err)?;
    Ok((r.u, r.p_value, r.exact))
}

#[pyfunction]
fn holm(p_values: Vec<f64>) -> Vec<f64> {
    metrics::holm(&p_values)
}

/// Pairwise `(first, second, u, raw_p, holm_p)` over methods in name order.
#[pyfunction]
fn ranksum_holm(scores: BTreeMap<String, Vec<f64>>) -> PyResult<Vec<(String, String, f64, f64, f64)>> {
    Ok(metrics::ranksum_holm(&scores)
        .map_err(err)?
        .into_iter()
        .map(|c| (c.first, c.second, c.u, c.raw_p, c.adjusted_p))
        .collect())
}

/// Toroidal neighborhood of `(row, col)`: center, N, S, W, E without repeats.
#[pyfunction]
fn neighborhood(rows: usize, cols: usize, row: usize, col: usize) -> PyResult<Vec<(usize, usize)>> {
    let cfg = GridConfig::new(rows, cols).map_err(err)?;
    neighborhood_coords(&cfg, (row, col)).map_err(err)
}

/// Runs one experiment and returns its summary plus per-epoch records.
///
/// `options` takes any config-file key (e.g. `{"grid": "2x2", "steps_per_mutation": "5"}`).
#[pyfunction]
#[pyo3(signature = (variant="mustangs", epochs=10, seed=0, mode="sequential", out=None, options=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    variant: &str,
    epochs: u64,
    seed: u64,
    mode: &str,
    out: Option<PathBuf>,
    options: Option<BTreeMap<String, String>>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let mut cfg = RunConfig::default();
    cfg.set("variant", variant).map_err(err)?;
    cfg.set("mode", mode).map_err(err)?;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.out = out;
    for (k, v) in options.unwrap_or_default() {
        cfg.set(&k, &v).map_err(err)?;
    }
    let log = py.detach(|| run_core(&cfg)).map_err(err)?;

    let d = pyo3::types::PyDict::new(py);
    let s = &log.summary;
    d.set_item("variant", s.variant.name())?;
    d.set_item("seed", s.seed)?;
    d.set_item(
        "status",
        match &s.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Failed(r) => format!("failed: {r}"),
        },
    )?;
    d.set_item("epochs_completed", s.epochs_completed)?;
    d.set_item("best_fd", s.best_fd)?;
    d.set_item("tvd", s.tvd)?;
    d.set_item("coverage", s.coverage)?;
    d.set_item("best_weights", s.best_weights.clone())?;
    d.set_item("generator_digest", s.generator_digest.clone())?;
    let records = pyo3::types::PyList::empty(py);
    for r in &log.records {
        let row = pyo3::types::PyDict::new(py);
        row.set_item("epoch", r.epoch)?;
        row.set_item("best_fd", r.best_fd)?;
        row.set_item("tvd", r.tvd)?;
        row.set_item("coverage", r.coverage)?;
        row.set_item("loss_counts", r.loss_counts.to_vec())?;
        records.append(row)?;
    }
    d.set_item("records", records)?;
    Ok(d)
}

#[pymodule]
pub fn mustangs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(generator_loss, m)?)?;
    m.add_function(wrap_pyfunction!(discriminator_loss, m)?)?;
    m.add_function(wrap_pyfunction!(gan_value, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_distance, m)?)?;
    m.add_function(wrap_pyfunction!(tvd, m)?)?;
    m.add_function(wrap_pyfunction!(mode_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney, m)?)?;
    m.add_function(wrap_pyfunction!(holm, m)?)?;
    m.add_function(wrap_pyfunction!(ranksum_holm, m)?)?;
    m.add_function(wrap_pyfunction!(neighborhood, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
