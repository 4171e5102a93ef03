mod common;

use common::{check_gradient, gradient_cases};

#[test]
fn analytic_gradients_match_central_differences() {
    let mut n = 0;
    for seed in [3, 17] {
        for case in gradient_cases(seed) {
            let r = check_gradient(&case);
            assert_eq!(r.branch, r.want, "{}: branch", r.name);
            assert!(r.rel_err < 1e-4, "{}: relative error {}", r.name, r.rel_err);
            n += 1;
        }
    }
    assert!(n >= 20);
}
