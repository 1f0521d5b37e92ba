use std::time::Instant;

use sgh_model::gradcheck::{gradcheck_registry, run_checks, GradCheckOptions};

#[test]
fn every_module_matches_finite_differences() {
    let opts = GradCheckOptions::default();
    let start = Instant::now();
    let reports = run_checks(&[], &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(reports.len(), gradcheck_registry().len());
    for r in &reports {
        for i in &r.inputs {
            eprintln!(
                "{:16} {:40} checked {:3} kinks {:2} max rel {:.2e}",
                r.module, i.name, i.checked, i.skipped_kinks, i.max_rel_error
            );
        }
        assert!(r.passed(opts.tolerance), "{} max rel {:.3e}", r.module, r.max_rel_error());
    }
    eprintln!("suite took {secs:.2}s");
    assert!(secs < 60.0);
}

#[test]
fn unknown_module_is_rejected() {
    assert!(run_checks(&["nope".to_string()], &GradCheckOptions::default()).is_err());
}
