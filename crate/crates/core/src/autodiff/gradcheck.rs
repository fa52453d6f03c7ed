use std::fmt::Display;

use super::{Bound, ParamSet, Tape, Var};

/// Agreement between reverse-mode and central-difference gradients for one
/// parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub max_abs_diff: f64,
    pub max_fd: f64,
    /// `max|g_ad − g_fd| / (max|g_fd| + 1e-12)`; for a scalar parameter this
    /// is the plain per-element relative error.
    pub rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
    /// Set when the function itself failed to evaluate.
    pub failure: Option<String>,
}

/// Compares the tape gradient of `f` with central differences of step `h`
/// over every scalar of every parameter.
///
/// `f` records a scalar loss on the supplied tape from the bound parameter
/// leaves. Evaluation errors end the check and are reported, not raised.
pub fn gradcheck<F, E>(params: &ParamSet, mut f: F, h: f64, tol: f64) -> GradcheckReport
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var, E>,
    E: Display,
{
    let fail = |msg: String| GradcheckReport {
        groups: Vec::new(),
        max_rel_err: f64::INFINITY,
        tol,
        passed: false,
        failure: Some(msg),
    };

    let mut tape = Tape::new();
    let mut eval = |ps: &ParamSet, tape: &mut Tape| -> Result<(f64, Bound, Var), String> {
        tape.reset();
        let bound = ps.bind(tape);
        let loss = f(tape, &bound).map_err(|e| e.to_string())?;
        Ok((tape.value(loss), bound, loss))
    };

    let (_, bound, loss) = match eval(params, &mut tape) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let grads = match tape.backward(loss) {
        Ok(g) => g,
        Err(e) => return fail(e.to_string()),
    };
    let mut analytic = params.clone();
    analytic.zero_grad();
    analytic.accumulate(&bound, &grads);
    let g_ad = analytic.flat_grads();

    let base = params.flat_values();
    let mut probe = params.clone();
    let mut g_fd = vec![0.0; base.len()];
    let mut values = base.clone();
    for i in 0..base.len() {
        values[i] = base[i] + h;
        probe.set_flat_values(&values);
        let plus = match eval(&probe, &mut tape) {
            Ok(v) => v.0,
            Err(e) => return fail(e),
        };
        values[i] = base[i] - h;
        probe.set_flat_values(&values);
        let minus = match eval(&probe, &mut tape) {
            Ok(v) => v.0,
            Err(e) => return fail(e),
        };
        values[i] = base[i];
        g_fd[i] = (plus - minus) / (2.0 * h);
    }

    let groups: Vec<GroupError> = params
        .ranges()
        .into_iter()
        .map(|(name, r)| {
            let max_abs_diff = r
                .clone()
                .map(|i| (g_ad[i] - g_fd[i]).abs())
                .fold(0.0, f64::max);
            let max_fd = r.map(|i| g_fd[i].abs()).fold(0.0, f64::max);
            let rel_err = max_abs_diff / (max_fd + 1e-12);
            GroupError {
                name,
                max_abs_diff,
                max_fd,
                rel_err,
                passed: rel_err <= tol,
            }
        })
        .collect();
    let max_rel_err = groups.iter().map(|g| g.rel_err).fold(0.0, f64::max);
    GradcheckReport {
        passed: groups.iter().all(|g| g.passed),
        groups,
        max_rel_err,
        tol,
        failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{AutodiffError, ParamKind, ParamRole};

    #[test]
    fn sum_of_squared_moduli() {
        let mut ps = ParamSet::new();
        let vals: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let id = ps.add("z", vec![8], ParamKind::Complex, ParamRole::Weight, vals);
        let report = gradcheck(
            &ps,
            |t, b| {
                let terms: Vec<Var> = (0..8).map(|i| t.cabs2(b.complex(id, i))).collect();
                Ok::<_, AutodiffError>(t.sum(&terms))
            },
            1e-6,
            1e-7,
        );
        assert!(report.passed, "{report:?}");
        assert!(report.max_rel_err < 1e-7);
    }

    #[test]
    fn dead_relu_is_flat_for_both() {
        let mut ps = ParamSet::new();
        let id = ps.add("x", vec![1], ParamKind::Real, ParamRole::Weight, vec![-0.5]);
        let report = gradcheck(
            &ps,
            |t, b| Ok::<_, AutodiffError>(t.relu(b.real(id, 0))),
            1e-6,
            1e-4,
        );
        assert!(report.passed);
        assert_eq!(report.groups[0].max_fd, 0.0);
        assert_eq!(report.groups[0].max_abs_diff, 0.0);
    }

    #[test]
    fn evaluation_error_is_reported() {
        let mut ps = ParamSet::new();
        let id = ps.add("x", vec![1], ParamKind::Real, ParamRole::Weight, vec![0.0]);
        let report = gradcheck(&ps, |t, b| t.ln(b.real(id, 0)), 1e-6, 1e-4);
        assert!(!report.passed);
        assert!(report.failure.is_some());
    }
}
