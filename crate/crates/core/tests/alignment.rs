mod common;

use common::alignment::{run_suite, PAIRING_TOL};

#[test]
fn alignment_lemmas_hold_along_trajectories() {
    let s = run_suite(100, 300);
    eprintln!("{s:?}");
    assert!(s.predicate_hits > 0);
    assert_eq!(s.monotone_violations, 0);
    assert_eq!(s.ordering_violations, 0);
    assert_eq!(s.sigma_min_violations, 0);
    assert_eq!(s.bound_violations, 0);
    assert!(s.pairing_worst <= PAIRING_TOL);
}
