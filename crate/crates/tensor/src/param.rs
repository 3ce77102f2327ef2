use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its gradient slot.
#[derive(Debug, Clone)]
pub struct Parameter<T: Float> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

impl<T: Float> Parameter<T> {
    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

/// Registry of every trainable tensor of one model, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Float> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            grad: None,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    /// Total trainable scalar count.
    pub fn num_trainable(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[T]) {
        let p = &mut self.params[id.0];
        match &mut p.grad {
            Some(g) => {
                for (a, &b) in g.data_mut().iter_mut().zip(grad) {
                    *a += b;
                }
            }
            None => {
                p.grad = Some(
                    Tensor::new(p.value.shape().to_vec(), grad.to_vec())
                        .expect("gradient matches parameter shape"),
                )
            }
        }
    }

    /// Clones all parameter values (cheap: storage is shared until written).
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor<T>]) {
        assert_eq!(values.len(), self.params.len(), "snapshot size mismatch");
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v.clone();
        }
    }

    /// Replaces one parameter's values, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(TensorError::Shape {
                op: "set_param",
                lhs: p.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }
}

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Uniform on `[-a, a]`.
    Uniform(f64),
}

/// Registers parameters under a hierarchical name prefix with a seeded RNG.
pub struct ParamBuilder<'a, T: Float> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
    prefix: Vec<String>,
}

impl<'a, T: Float> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        ParamBuilder {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
            prefix: Vec::new(),
        }
    }

    pub fn push(&mut self, scope: impl Into<String>) {
        self.prefix.push(scope.into());
    }

    pub fn pop(&mut self) {
        self.prefix.pop();
    }

    /// Runs `f` inside a nested name scope.
    pub fn scoped<R>(&mut self, scope: impl Into<String>, f: impl FnOnce(&mut Self) -> R) -> R {
        self.push(scope);
        let r = f(self);
        self.pop();
        r
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).map_err(|e| TensorError::Invalid {
                    op: "init",
                    msg: e.to_string(),
                })?;
                (0..n).map(|_| T::from_f64(d.sample(&mut self.rng))).collect()
            }
            Init::Uniform(a) => {
                if a > 0.0 {
                    let d = Uniform::new_inclusive(-a, a).map_err(|e| TensorError::Invalid {
                        op: "init",
                        msg: e.to_string(),
                    })?;
                    (0..n).map(|_| T::from_f64(d.sample(&mut self.rng))).collect()
                } else {
                    vec![T::zero(); n]
                }
            }
        };
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix.join("."), name)
        };
        self.store.register(full, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn rng(&mut self) -> &mut impl Rng {
        &mut self.rng
    }
}
