//! Finite-difference verification of analytic gradients.
//!
//! The analytic side comes from the float32 tape; the central-difference
//! side replays the recorded graph in float64, so the comparison isolates
//! the backward rules instead of drowning in f32 rounding noise.

use std::fmt;

use crate::autograd::tape::{Tape, Var};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over all checked elements.
    pub max_rel_err: f64,
    /// (parameter name, flat element index, analytic, finite-difference)
    /// of the worst element.
    pub worst: Option<(String, usize, f64, f64)>,
    pub tolerance: f64,
    pub elements_checked: usize,
    pub passed: bool,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: max rel err {:.3e} over {} elements (tol {:.1e})",
            if self.passed { "pass" } else { "FAIL" },
            self.max_rel_err,
            self.elements_checked,
            self.tolerance
        )?;
        if let Some((name, i, ana, fd)) = &self.worst {
            write!(f, "; worst {name}[{i}] analytic={ana:.6e} fd={fd:.6e}")?;
        }
        Ok(())
    }
}

/// Record the graph once, backprop, then compare every parameter gradient
/// against central differences (loss(p+h) - loss(p-h)) / 2h.
pub fn grad_check<B>(params: &[(String, Tensor)], build: B, h: f64, tolerance: f64) -> Result<GradCheckReport>
where
    B: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|(_, t)| {
            let mut t = t.clone();
            t.requires_grad = true;
            tape.leaf(&t)
        })
        .collect();
    let loss = build(&mut tape, &vars)?;
    if tape.numel(loss) != 1 {
        return Err(Error::Contract("grad_check builder must produce a scalar loss".into()));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; tape.numel(v)]))
        .collect();
    let names: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
    Ok(compare_with_fd(&tape, loss, &vars, &names, &analytic, h, tolerance))
}

/// Compare supplied analytic gradients against finite differences computed
/// by float64 replay of `tape`. Exposed separately so tests can feed in
/// deliberately corrupted gradients as a negative control.
///
/// Central differences at base step `h` carry O(h^2) truncation, which for
/// h = 1e-3 sits near 1e-7 and would drown small gradient elements; one
/// Richardson refinement over (h, h/2) cancels that term so the oracle
/// out-resolves the f32 gradients it checks. Elements where both sides are
/// below the f32 resolution floor are compared absolutely.
pub fn compare_with_fd(
    tape: &Tape,
    loss: Var,
    vars: &[Var],
    names: &[&str],
    analytic: &[Vec<f64>],
    h: f64,
    tolerance: f64,
) -> GradCheckReport {
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut checked = 0usize;
    // Differences below one half-ulp of f32 at unit scale are resolution
    // noise of the f32 engine, not gradient errors; the floor turns the
    // per-element test into |a-f| <= max(tol * max(|a|,|f|), eps32/2).
    let atol = f32::EPSILON as f64 * 0.5;
    let denom_floor = atol / tolerance;
    for (pi, &v) in vars.iter().enumerate() {
        for i in 0..tape.numel(v) {
            let central = |step: f64| {
                let fp = tape.replay_f64(loss, Some((v, i, step)));
                let fm = tape.replay_f64(loss, Some((v, i, -step)));
                (fp - fm) / (2.0 * step)
            };
            let d_h = central(h);
            let d_half = central(h / 2.0);
            let fd = (4.0 * d_half - d_h) / 3.0;
            let ana = analytic[pi][i];
            checked += 1;
            let rel = (ana - fd).abs() / ana.abs().max(fd.abs()).max(denom_floor);
            if rel > max_rel {
                max_rel = rel;
                worst = Some((names[pi].to_string(), i, ana, fd));
            }
        }
    }
    GradCheckReport {
        max_rel_err: max_rel,
        worst,
        tolerance,
        elements_checked: checked,
        passed: max_rel < tolerance,
    }
}
