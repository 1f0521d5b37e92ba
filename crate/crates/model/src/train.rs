//! Adam optimisation of the full pipeline on a fixed scene.

use std::collections::BTreeMap;
use std::io::Write;

use sgh_core::tensor::Tensor;

use crate::error::{argument, ModelError, Result};
use crate::losses::{loss_registry, LossInputs};
use crate::model::{Forward, Model};
use crate::params::Parameters;
use crate::scene::Scene;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update. A zero learning rate leaves everything untouched.
    pub fn step(&mut self, params: &mut Parameters, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        if self.learning_rate == 0.0 {
            return Ok(());
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| argument(format!("gradient for unknown parameter `{name}`")))?;
            if p.shape() != g.shape() {
                return Err(argument(format!("gradient shape mismatch for `{name}`")));
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
            for (((pi, &gi), mi), vi) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut()).zip(v.data_mut().iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Loss values of one evaluation; `terms` holds unweighted values by log key.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLosses {
    pub step: usize,
    pub total: f64,
    pub terms: Vec<(&'static str, f64)>,
}

impl StepLosses {
    pub fn term(&self, key: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    /// `{"step":…,"loss_total":…,"loss_mesh":…,…}` with a stable key order.
    pub fn to_json_line(&self) -> String {
        let num = |v: f64| serde_json::to_string(&v).expect("finite f64");
        let mut s = format!("{{\"step\":{},\"loss_total\":{}", self.step, num(self.total));
        for (k, v) in &self.terms {
            s.push_str(&format!(",\"{k}\":{}", num(*v)));
        }
        s.push('}');
        s
    }
}

/// Builds the forward pass and the weighted loss on `tape`.
pub fn forward_losses(model: &Model, params: &Parameters, tape: &mut Tape, scene: &Scene, step: usize) -> Result<(Var, StepLosses, Forward)> {
    let pv = params.register(tape);
    let fwd = model.forward(tape, &pv, &scene.features)?;
    if let Some(label) = tape.first_non_finite() {
        return Err(ModelError::NonFinite { tensor: label.to_string(), step });
    }
    // `exp` underflow leaves a zero scale, which the projection cannot use.
    if tape.value(fwd.camera.scale).data().iter().any(|&s| s <= 0.0) {
        return Err(ModelError::NonFinite { tensor: "camera.scale".into(), step });
    }
    let inputs = LossInputs { vertices: fwd.vertices(), scale: fwd.camera.scale, translation: fwd.camera.translation };
    let mut weighted = Vec::new();
    let mut terms = Vec::new();
    for (name, term) in loss_registry().iter() {
        let w = model.config().weight(name);
        if w == 0.0 {
            continue;
        }
        let l = term.apply(tape, &inputs, &scene.target)?;
        terms.push((term.log_key(), tape.value(l).data()[0]));
        weighted.push(tape.scale(l, w));
    }
    let mut total = weighted[0];
    for &w in &weighted[1..] {
        total = tape.add(total, w)?;
    }
    let losses = StepLosses { step, total: tape.value(total).data()[0], terms };
    Ok((total, losses, fwd))
}

pub fn evaluate(model: &Model, params: &Parameters, scene: &Scene, step: usize) -> Result<StepLosses> {
    let mut tape = Tape::new();
    let (_, losses, _) = forward_losses(model, params, &mut tape, scene, step)?;
    Ok(losses)
}

/// Forward, backward and one Adam update. Returns the losses before the update.
///
/// Aborts with [`ModelError::NonFinite`] naming the first non-finite
/// activation, gradient or updated parameter.
pub fn train_step(model: &Model, params: &mut Parameters, adam: &mut Adam, scene: &Scene, step: usize) -> Result<StepLosses> {
    let mut tape = Tape::new();
    let (total, losses, _) = forward_losses(model, params, &mut tape, scene, step)?;
    if let Some(label) = tape.first_non_finite() {
        return Err(ModelError::NonFinite { tensor: label.to_string(), step });
    }
    let grads = tape.backward(total)?.into_params();
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(ModelError::NonFinite { tensor: format!("grad({name})"), step });
    }
    adam.step(params, &grads)?;
    if let Some(name) = params.first_non_finite() {
        return Err(ModelError::NonFinite { tensor: name.to_string(), step });
    }
    Ok(losses)
}

#[derive(Clone, Debug)]
pub struct OverfitReport {
    pub history: Vec<StepLosses>,
    /// Loss after the last update.
    pub final_losses: StepLosses,
}

impl OverfitReport {
    pub fn initial(&self) -> f64 {
        self.history.first().map_or(self.final_losses.total, |s| s.total)
    }

    pub fn final_total(&self) -> f64 {
        self.final_losses.total
    }

    /// `1 − final / initial`.
    pub fn reduction(&self) -> f64 {
        1.0 - self.final_total() / self.initial()
    }
}

/// Runs `steps` updates on one scene, writing exactly one JSON line per step to `log`.
pub fn overfit(model: &Model, params: &mut Parameters, scene: &Scene, steps: usize, log: &mut dyn Write) -> Result<OverfitReport> {
    let mut adam = Adam::new(model.config().learning_rate);
    let mut history = Vec::with_capacity(steps);
    for step in 0..steps {
        let l = train_step(model, params, &mut adam, scene, step)?;
        writeln!(log, "{}", l.to_json_line())?;
        history.push(l);
    }
    // The post-training evaluation goes in the report only, so the log holds one record per step.
    let final_losses = evaluate(model, params, scene, steps)?;
    Ok(OverfitReport { history, final_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Parameters::new();
        p.insert("x", Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap()).unwrap();
        let mut g = BTreeMap::new();
        g.insert("x".to_string(), Tensor::new(vec![1, 2], vec![3.0, -0.5]).unwrap());
        let mut adam = Adam::new(0.1);
        adam.step(&mut p, &g).unwrap();
        let x = p.get("x").unwrap().data();
        assert!((x[0] - 0.9).abs() < 1e-6 && (x[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut p = Parameters::new();
        p.insert("x", Tensor::new(vec![1, 1], vec![2.0]).unwrap()).unwrap();
        let before = p.clone();
        let mut g = BTreeMap::new();
        g.insert("x".to_string(), Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        Adam::new(0.0).step(&mut p, &g).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn json_line_order() {
        let s = StepLosses { step: 3, total: 1.5, terms: vec![("loss_mesh", 1.0), ("loss_2d", 0.5)] };
        assert_eq!(s.to_json_line(), r#"{"step":3,"loss_total":1.5,"loss_mesh":1.0,"loss_2d":0.5}"#);
    }
}
