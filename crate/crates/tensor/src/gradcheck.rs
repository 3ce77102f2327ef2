//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::param::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Perturbation step.
    pub h: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Denominator floor: relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Check at most this many evenly spaced coordinates per tensor.
    pub max_coords: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            floor: 1e-4,
            max_coords: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (tensor index, flat coordinate) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn coords(n: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
        _ => (0..n).collect(),
    }
}

fn scalar(tape: &Tape<f64>, v: Var) -> f64 {
    tape.value(v).data()[0]
}

struct Tracker {
    max: f64,
    worst: Option<(usize, usize)>,
    checked: usize,
    floor: f64,
}

impl Tracker {
    fn record(&mut self, t: usize, c: usize, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric, self.floor);
        self.checked += 1;
        if e > self.max || self.worst.is_none() {
            self.max = e;
            self.worst = Some((t, c));
        }
    }

    fn report(self, tol: f64) -> GradCheckReport {
        GradCheckReport {
            passed: self.max <= tol,
            max_rel_err: self.max,
            worst: self.worst,
            checked: self.checked,
        }
    }
}

/// Compares supplied analytic gradients of `f` at `inputs` against central
/// differences. `f` must return a scalar.
pub fn compare_gradients<F>(
    f: &F,
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = xs
            .iter()
            .map(|x| tape.constant(x.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(scalar(&tape, out))
    };
    let mut tracker = Tracker {
        max: 0.0,
        worst: None,
        checked: 0,
        floor: cfg.floor,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for t in 0..inputs.len() {
        for c in coords(inputs[t].numel(), cfg.max_coords) {
            let orig = inputs[t].data()[c];
            work[t].data_mut()[c] = orig + cfg.h;
            let up = eval(&work)?;
            work[t].data_mut()[c] = orig - cfg.h;
            let down = eval(&work)?;
            work[t].data_mut()[c] = orig;
            tracker.record(t, c, analytic[t].data()[c], (up - down) / (2.0 * cfg.h));
        }
    }
    Ok(tracker.report(cfg.tol))
}

/// Gradient check of `f` with respect to every input tensor.
pub fn gradient_check<F>(f: F, inputs: &[Tensor<f64>], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|x| tape.input(x.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.gradients(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).expect("input leaf has a gradient"))
        .collect();
    compare_gradients(&f, inputs, &analytic, cfg)
}

/// Gradient check of a model loss with respect to every registered parameter.
pub fn check_params<F>(store: &mut ParamStore<f64>, f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    tape.backward(out, store)?;
    drop(tape);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let analytic: Vec<Option<Tensor<f64>>> = ids.iter().map(|&id| store.get(id).grad.clone()).collect();
    let mut tracker = Tracker {
        max: 0.0,
        worst: None,
        checked: 0,
        floor: cfg.floor,
    };
    for (t, &id) in ids.iter().enumerate() {
        let n = store.get(id).numel();
        for c in coords(n, cfg.max_coords) {
            let orig = store.value(id).data()[c];
            let probe = |v: f64, store: &mut ParamStore<f64>| -> Result<f64> {
                store.get_mut(id).value.data_mut()[c] = v;
                let mut tape = Tape::new();
                let out = f(&mut tape, store)?;
                Ok(scalar(&tape, out))
            };
            let up = probe(orig + cfg.h, store)?;
            let down = probe(orig - cfg.h, store)?;
            store.get_mut(id).value.data_mut()[c] = orig;
            let a = analytic[t].as_ref().map_or(0.0, |g| g.data()[c]);
            tracker.record(t, c, a, (up - down) / (2.0 * cfg.h));
        }
    }
    Ok(tracker.report(cfg.tol))
}
