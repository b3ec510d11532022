#[path = "support/checks.rs"]
mod checks;

use checks::*;

#[test]
fn cfar_matches_brute_force() {
    assert_eq!(cfar_mismatches(300, 1), 0);
}

#[test]
fn lnms_matches_exhaustive_suppression() {
    assert_eq!(lnms_mismatches(300, 2), 0);
}

#[test]
fn matching_matches_brute_force_assignment() {
    assert_eq!(matching_mismatches(1000, 3), (0, 0));
}
