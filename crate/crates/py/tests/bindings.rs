use std::sync::Once;

use pyo3::prelude::*;
use pyo3::types::PyDict;

use mustangs_py::mustangs_py;

static INIT: Once = Once::new();

fn with_module<F: for<'py> FnOnce(Python<'py>, Bound<'py, PyModule>) -> PyResult<()>>(f: F) {
    INIT.call_once(|| {
        pyo3::append_to_inittab!(mustangs_py);
        Python::initialize();
    });
    Python::attach(|py| {
        let m = py.import("mustangs_py")?;
        f(py, m)
    })
    .unwrap();
}

#[test]
fn losses_at_half() {
    with_module(|_, m| {
        let half = vec![0.5; 4];
        let mm: f64 = m.getattr("generator_loss")?.call1(("minmax", half.clone()))?.extract()?;
        assert!((mm - 0.5 * 0.5f64.ln()).abs() < 1e-12);
        let ls: f64 = m.getattr("generator_loss")?.call1(("least_square", half.clone()))?.extract()?;
        assert!((ls - 0.25).abs() < 1e-12);
        let bce: f64 = m.getattr("discriminator_loss")?.call1((half.clone(), half.clone()))?.extract()?;
        assert!((bce - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(m.getattr("generator_loss")?.call1(("wasserstein", half)).is_err());
        Ok(())
    });
}

#[test]
fn metrics_and_topology() {
    with_module(|_, m| {
        let t: f64 = m.getattr("tvd")?.call1((vec![0.5, 0.5], vec![0.25, 0.75]))?.extract()?;
        assert!((t - 0.25).abs() < 1e-12);
        let hood: Vec<(usize, usize)> = m.getattr("neighborhood")?.call1((3, 3, 0, 0))?.extract()?;
        assert_eq!(hood, vec![(0, 0), (2, 0), (1, 0), (0, 2), (0, 1)]);
        let adj: Vec<f64> = m.getattr("holm")?.call1((vec![0.01, 0.04],))?.extract()?;
        assert_eq!(adj, vec![0.02, 0.04]);
        let (u, p, exact): (f64, f64, bool) =
            m.getattr("mann_whitney")?.call1((vec![1.0, 2.0, 3.0], vec![100.0, 101.0, 102.0]))?.extract()?;
        assert_eq!((u, exact), (0.0, true));
        assert!((p - 0.1).abs() < 1e-12);
        Ok(())
    });
}

#[test]
fn dataset_and_network() {
    with_module(|_, m| {
        let ds = m.getattr("Dataset")?.call_method1("ring", (4, 1.0, 0.0, 3))?;
        let centers: Vec<(f64, f64)> = ds.getattr("centers")?.extract()?;
        assert!((centers[1].1 - 1.0).abs() < 1e-12);
        let pts: Vec<Vec<f64>> = ds.call_method1("sample", (50, 1))?.extract()?;
        let (counts, unassigned, covered): (Vec<usize>, usize, usize) =
            m.getattr("mode_coverage")?.call1((ds.clone(), pts.clone()))?.extract()?;
        assert_eq!(counts.iter().sum::<usize>(), 50);
        assert_eq!(unassigned, 0);
        assert!(covered >= 3);
        let fd: f64 = m.getattr("frechet_distance")?.call1((pts.clone(), pts))?.extract()?;
        assert!(fd.abs() < 1e-9);

        let net = m.getattr("Network")?.call1((vec![2usize, 3, 1], "sigmoid", 7))?;
        let n: usize = net.getattr("param_count")?.extract()?;
        assert_eq!(n, 13);
        net.setattr("params", vec![0.0; 13])?;
        let out: Vec<Vec<f64>> = net.call_method1("forward", (vec![vec![1.0, -1.0]],))?.extract()?;
        assert_eq!(out, vec![vec![0.5]]);
        assert!(net.setattr("params", vec![0.0; 3]).is_err());
        Ok(())
    });
}

#[test]
fn tiny_run() {
    with_module(|py, m| {
        let opts = PyDict::new(py);
        for (k, v) in [("grid", "1x1"), ("steps_per_mutation", "2"), ("gen_hidden", "4"), ("disc_hidden", "4"),
            ("batch_size", "16"), ("metric_samples", "64"), ("es_eval_samples", "32")] {
            opts.set_item(k, v)?;
        }
        let kwargs = PyDict::new(py);
        kwargs.set_item("options", opts)?;
        let res = m.getattr("run_experiment")?.call(("mustangs", 2u64, 5u64), Some(&kwargs))?;
        let status: String = res.get_item("status")?.extract()?;
        assert_eq!(status, "completed");
        let records = res.get_item("records")?;
        assert_eq!(records.len()?, 2);
        let weights: Vec<f64> = res.get_item("best_weights")?.extract()?;
        assert_eq!(weights, vec![1.0]);
        Ok(())
    });
}
