use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "pavescan_py").unwrap();
        pavescan_py::pavescan_py(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("ps", m).unwrap();
        f(py, &globals);
    });
}

fn eval(py: Python<'_>, globals: &Bound<'_, PyDict>, expr: &str) -> f64 {
    let code = std::ffi::CString::new(expr).unwrap();
    py.eval(&code, Some(globals), None)
        .unwrap()
        .extract()
        .unwrap()
}

#[test]
fn geometry_and_metrics_round_trip_through_python() {
    with_module(|py, g| {
        let iou = eval(py, g, "ps.iou([0, 0, 2, 2], [1, 1, 3, 3])");
        assert!((iou - 1.0 / 7.0).abs() < 1e-12);
        let kept = eval(
            py,
            g,
            "len(ps.nms([('Crack', 0.9, [0, 0, 10, 10]), ('Crack', 0.8, [1, 1, 10, 10])], 0.45))",
        );
        assert_eq!(kept, 1.0);
        let miou = eval(
            py,
            g,
            "ps.evaluate_masks(bytes([0, 1, 1, 1]), bytes([0, 1, 0, 1]), 2, 2)['miou']",
        );
        assert!((miou - 7.0 / 12.0).abs() < 1e-12);
    });
}

#[test]
fn invalid_inputs_raise_value_error() {
    with_module(|py, g| {
        for expr in [
            "ps.iou([0, 0, 1, 1], [0, 0, 1, 1], 'giou')",
            "ps.iou([2, 2, 1, 1], [0, 0, 1, 1])",
            "ps.parse_config('detect.nope = 1')",
        ] {
            let code = std::ffi::CString::new(expr).unwrap();
            let e = py.eval(&code, Some(g), None).unwrap_err();
            assert!(
                e.is_instance_of::<pyo3::exceptions::PyValueError>(py),
                "{expr}"
            );
        }
    });
}
