//! Named trainable parameters and the Adam optimizer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    value: Matrix,
    grad: Matrix,
    first_moment: Matrix,
    second_moment: Matrix,
    step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
            step: 0,
        }
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> &Matrix {
        &self.grad
    }

    pub fn moments(&self) -> (&Matrix, &Matrix) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_grad(&mut self, grad: Matrix) -> Result<()> {
        if grad.shape() != self.value.shape() {
            return Err(Error::shape(
                "Parameter::set_grad",
                format!("{}: {:?} vs {:?}", self.name, grad.shape(), self.value.shape()),
            ));
        }
        self.grad = grad.checked(&self.name)?;
        Ok(())
    }

    pub fn set_value(&mut self, value: Matrix) -> Result<()> {
        if value.shape() != self.value.shape() {
            return Err(Error::shape(
                "Parameter::set_value",
                format!("{}: {:?} vs {:?}", self.name, value.shape(), self.value.shape()),
            ));
        }
        self.value = value;
        Ok(())
    }
}

/// Glorot-uniform initialized `fan_in × fan_out` matrix.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::from_raw(fan_in, fan_out, data)
}

/// Ordered collection of parameters; order is the checkpoint order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its position.
    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn values(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Registers every parameter as a differentiable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Runs the reverse pass from `loss` and stores each parameter's gradient.
    /// Parameters that the loss does not depend on get a zero gradient.
    pub fn backprop(&mut self, tape: &Tape, loss: Var, bound: &[Var]) -> Result<()> {
        if bound.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "{} bound vars for {} parameters",
                bound.len(),
                self.params.len()
            )));
        }
        let mut grads = tape.backward(loss)?;
        for (p, &v) in self.params.iter_mut().zip(bound) {
            let g = grads
                .take(v)
                .unwrap_or_else(|| Matrix::zeros(p.value.rows(), p.value.cols()));
            p.set_grad(g)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn new(learning_rate: f64) -> Result<Self> {
        let adam = Self {
            learning_rate,
            ..Self::default()
        };
        adam.validate()?;
        Ok(adam)
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }

    /// One bias-corrected adaptive-moment step using the stored gradient.
    pub fn update(&self, p: &mut Parameter) -> Result<()> {
        self.validate()?;
        if p.grad.shape() != p.value.shape() || p.first_moment.shape() != p.value.shape() {
            return Err(Error::shape("adam_update", p.name.clone()));
        }
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let g = p.grad.data().to_vec();
        let m = p.first_moment.data_mut();
        for (mi, gi) in m.iter_mut().zip(&g) {
            *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
        }
        let v = p.second_moment.data_mut();
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
        }
        let (m, v) = (p.first_moment.data(), p.second_moment.data());
        let mut value = p.value.clone();
        for ((x, mi), vi) in value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *x -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        p.value = value.checked(&p.name)?;
        Ok(())
    }

    pub fn step(&self, set: &mut ParamSet) -> Result<()> {
        set.params.iter_mut().try_for_each(|p| self.update(p))
    }
}
