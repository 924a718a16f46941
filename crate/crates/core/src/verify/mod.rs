//! Numerical property checks: gradient checks, adjoint identities and the
//! model's structural identities.

mod gradcheck;
mod suite;

pub use gradcheck::{adjoint_gap, gradcheck, GradcheckOutcome, REL_FLOOR, STEP};
pub use suite::{run_suite, Check, VerifyReport, ADJOINT_TOL, GRAD_TOL, INSTANCES};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::with_corrupted_conv_backward;

    #[test]
    fn suite_passes_and_catches_a_corrupted_backward() {
        let report = run_suite();
        assert!(report.passed(), "\n{}", report.to_table());
        assert!(report.checks.len() > 30);

        let broken = with_corrupted_conv_backward(run_suite);
        assert!(!broken.passed());
        assert!(broken.failures().any(|c| c.name == "gradcheck conv2d stride 1"));
        assert!(run_suite().passed(), "corruption must not outlive the closure");
    }
}
