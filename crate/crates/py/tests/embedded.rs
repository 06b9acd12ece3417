//! Runs the Python smoke script against the module registered in an embedded interpreter.

use std::ffi::CString;
use std::sync::Once;

use pyo3::prelude::*;
use pyo3::types::PyDict;

const SMOKE: &str = include_str!("../python/smoke_test.py");

fn init() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        use mshc::mshc as module;
        pyo3::append_to_inittab!(module);
        Python::initialize();
    });
}

#[test]
fn smoke_script_passes() {
    init();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        let code = CString::new(SMOKE).unwrap();
        py.run(&code, Some(&globals), None).unwrap();
        let mut ran = 0;
        for (name, value) in globals.iter() {
            let name: String = name.extract().unwrap();
            if name.starts_with("test_") {
                value.call0().unwrap_or_else(|e| panic!("{name}: {e}"));
                ran += 1;
            }
        }
        assert_eq!(ran, 5);
    });
}

#[test]
fn oracle_scores_follow_planted_law() {
    init();
    Python::attach(|py| {
        let m = py.import("mshc").unwrap();
        let oracle = m.getattr("Oracle").unwrap().call_method0("planted").unwrap();
        let heads: Vec<String> = oracle.getattr("planted_heads").unwrap().extract().unwrap();
        assert_eq!(heads.len(), 12);
        // saturation 3: disabling all but 3 planted heads keeps the full score, one more drops it
        let score = |n: usize| -> f64 {
            oracle
                .call_method1("score", (heads[..n].to_vec(),))
                .unwrap()
                .extract()
                .unwrap()
        };
        assert_eq!(score(9), 1.0);
        assert!((score(10) - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(score(12), 0.5);
        let err = oracle.call_method1("score", (vec!["L99.H0"],)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}
