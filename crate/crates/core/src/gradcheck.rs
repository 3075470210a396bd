//! Central finite-difference gradient checks against the tape.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::nn::{Binding, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Relative-error denominator floor.
    pub floor: f64,
    /// Coordinates probed per tensor; `None` probes all of them.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, tolerance: 1e-4, floor: 1e-6, max_per_tensor: None, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
    /// Probes skipped because the one-sided differences disagree, meaning a
    /// ReLU or max-pool switch lies within one step of the point.
    pub kinks: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance && self.kinks * 20 <= self.checked
    }
}

/// Compares the tape gradient of `loss` with respect to every tensor in
/// `params` against central differences of the same function.
///
/// `loss` builds a scalar from bound parameters; it is called once with a
/// tracked binding and twice per probed coordinate with a frozen one.
pub fn check_gradients(
    params: &mut ParamStore<f64>,
    cfg: GradCheckConfig,
    mut loss: impl FnMut(&mut Graph<f64>, &Binding) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let bind = params.bind(&mut g);
    let l = loss(&mut g, &bind)?;
    g.backward(l)?;
    let analytic = bind.grads(&g);

    let mut eval = |params: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let bind = params.bind_frozen(&mut g);
        let l = loss(&mut g, &bind)?;
        Ok(g.value(l).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
        kinks: 0,
        tolerance: cfg.tolerance,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let len = params.get(id).numel();
        let coords: Vec<usize> = match cfg.max_per_tensor {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for i in coords {
            let orig = params.get(id).data()[i];
            let mid = eval(params)?;
            params.get_mut(id).data_mut()[i] = orig + cfg.step;
            let up = eval(params)?;
            params.get_mut(id).data_mut()[i] = orig - cfg.step;
            let down = eval(params)?;
            params.get_mut(id).data_mut()[i] = orig;
            let (right, left) = ((up - mid) / cfg.step, (mid - down) / cfg.step);
            if (right - left).abs() > 1e-3 * right.abs().max(left.abs()) + 1e-7 {
                report.kinks += 1;
                continue;
            }
            let fd = (up - down) / (2.0 * cfg.step);
            let a = analytic[id.index()].data()[i];
            let rel = (a - fd).abs() / fd.abs().max(cfg.floor);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{}[{i}] analytic {a:.6e} fd {fd:.6e}", params.name(id));
            }
        }
    }
    Ok(report)
}
