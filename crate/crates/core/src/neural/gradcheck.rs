use super::Params;

/// Step used for central differences.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so that parameters with a
/// vanishing gradient are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` around
/// `model`, over every entry of every parameter. `analytic` must have the
/// same parameter layout as `model`.
pub fn check_gradients<P, F>(model: &P, analytic: &P, h: f64, mut loss: F) -> GradCheck
where
    P: Params + Clone,
    F: FnMut(&P) -> f64,
{
    let mut probe = model.clone();
    let grads: Vec<(String, Vec<f64>)> = analytic
        .params()
        .into_iter()
        .map(|(n, m)| (n, m.data().to_vec()))
        .collect();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    for (p, (name, g)) in grads.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let x = probe.params_mut()[p].1.data()[i];
            probe.params_mut()[p].1.data_mut()[i] = x + h;
            let up = loss(&probe);
            probe.params_mut()[p].1.data_mut()[i] = x - h;
            let down = loss(&probe);
            probe.params_mut()[p].1.data_mut()[i] = x;
            let n = (up - down) / (2.0 * h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(GRADCHECK_FLOOR);
            if rel > out.max_rel_error || out.checked == 0 {
                out.max_rel_error = rel;
                out.worst = (name.clone(), i);
            }
            out.checked += 1;
        }
    }
    out
}
