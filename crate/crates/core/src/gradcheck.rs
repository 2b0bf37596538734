//! Central finite-difference checking of tape gradients.
//!
//! The numeric side only ever evaluates forward values, so it is independent
//! of the reverse-pass rules it checks.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub input: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub mismatches: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares reverse-mode gradients of `build` with central differences for
/// every entry of every input.
pub fn check_gradients<F>(inputs: &[Matrix], build: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.constant(m.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        mismatches: Vec::new(),
    };
    let mut work: Vec<Matrix> = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let (r, c) = inputs[k].shape();
        let analytic = grads.get(v).cloned().unwrap_or_else(|| Matrix::zeros(r, c));
        for e in 0..inputs[k].len() {
            let orig = inputs[k].data()[e];
            work[k].data_mut()[e] = orig + cfg.step;
            let plus = eval(&work)?;
            work[k].data_mut()[e] = orig - cfg.step;
            let minus = eval(&work)?;
            work[k].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic.data()[e];
            let abs_err = (a - numeric).abs();
            let rel_err = abs_err / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            report.checked += 1;
            if abs_err > cfg.abs_floor {
                report.max_rel_error = report.max_rel_error.max(rel_err);
                if rel_err > cfg.rel_tol {
                    report.mismatches.push(Mismatch {
                        input: k,
                        entry: e,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}
