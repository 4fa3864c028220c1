use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{sigmoid, Graph, Var};
use super::store::{ParamId, ParameterStore};
use super::tensor::{uniform_init, zeros, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Whether a layer's parameters receive gradients in the graph being built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Trainable,
    Frozen,
}

pub(crate) fn bind(g: &mut Graph, store: &ParameterStore, id: ParamId, binding: Binding) -> Result<Var> {
    match binding {
        Binding::Trainable => g.param(store, id),
        Binding::Frozen => Ok(g.frozen_param(store, id)),
    }
}

/// Plain values of a dense layer: `activation(W·x + b)` with `W: [out × in]`.
#[derive(Debug, Clone)]
pub struct DenseParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseParams {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if bias.dim() != (1, weight.nrows()) {
            return Err(Error::shape(format!(
                "bias {:?} for weight {:?}",
                bias.dim(),
                weight.dim()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }
}

/// Single-vector dense forward pass, computed entry by entry.
pub fn dense_forward(x: &[f64], p: &DenseParams) -> Result<Vec<f64>> {
    let (out, input) = p.weight.dim();
    if x.len() != input {
        return Err(Error::shape(format!(
            "dense layer expects {input} inputs, got {}",
            x.len()
        )));
    }
    Ok((0..out)
        .map(|o| {
            let pre: f64 = (0..input).map(|i| p.weight[[o, i]] * x[i]).sum::<f64>() + p.bias[[0, o]];
            p.activation.apply(pre)
        })
        .collect())
}

/// A dense layer whose weights live in a [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert(format!("{name}.weight"), uniform_init(rng, output, input, input))?;
        let bias = store.insert(format!("{name}.bias"), zeros(1, output))?;
        Ok(Self {
            weight,
            bias,
            activation,
            input,
            output,
        })
    }

    /// Re-binds a layer to parameters already present in `store`.
    pub fn attach(store: &ParameterStore, name: &str, activation: Activation) -> Result<Self> {
        let weight = lookup(store, &format!("{name}.weight"))?;
        let bias = lookup(store, &format!("{name}.bias"))?;
        let (output, input) = store.value(weight).dim();
        if store.value(bias).dim() != (1, output) {
            return Err(Error::shape(format!("{name}.bias does not match {name}.weight")));
        }
        Ok(Self {
            weight,
            bias,
            activation,
            input,
            output,
        })
    }

    pub fn params(&self, store: &ParameterStore) -> DenseParams {
        DenseParams {
            weight: store.value(self.weight).clone(),
            bias: store.value(self.bias).clone(),
            activation: self.activation,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, binding: Binding, x: Var) -> Result<Var> {
        let w = bind(g, store, self.weight, binding)?;
        let b = bind(g, store, self.bias, binding)?;
        let pre = g.matmul_t(x, w)?;
        let pre = g.add_row(pre, b)?;
        Ok(match self.activation {
            Activation::Identity => pre,
            Activation::Tanh => g.tanh(pre),
        })
    }
}

pub(crate) fn lookup(store: &ParameterStore, name: &str) -> Result<ParamId> {
    store
        .id_of(name)
        .ok_or_else(|| Error::CheckpointMalformed(format!("missing parameter `{name}`")))
}

/// Plain values of a GRU cell. Input weights are `[H × in]`, recurrent
/// weights `[H × H]`, biases `1 × H`; gates are update (z), reset (r) and
/// candidate (h).
#[derive(Debug, Clone)]
pub struct GruParams {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: zeros(hidden, input),
            u_z: zeros(hidden, hidden),
            b_z: zeros(1, hidden),
            w_r: zeros(hidden, input),
            u_r: zeros(hidden, hidden),
            b_r: zeros(1, hidden),
            w_h: zeros(hidden, input),
            u_h: zeros(hidden, hidden),
            b_h: zeros(1, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_z.nrows()
    }

    pub fn input(&self) -> usize {
        self.w_z.ncols()
    }
}

/// One GRU step on single vectors:
/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
pub fn gru_step(h_prev: &[f64], x: &[f64], p: &GruParams) -> Result<Vec<f64>> {
    let hidden = p.hidden();
    let input = p.input();
    if h_prev.len() != hidden {
        return Err(Error::shape(format!(
            "hidden state has {} entries, cell has {hidden}",
            h_prev.len()
        )));
    }
    if x.len() != input {
        return Err(Error::shape(format!(
            "input has {} entries, cell expects {input}",
            x.len()
        )));
    }
    let affine = |w: &Tensor, u: &Tensor, b: &Tensor, h: &[f64], j: usize| -> f64 {
        let wx: f64 = (0..input).map(|i| w[[j, i]] * x[i]).sum();
        let uh: f64 = (0..hidden).map(|i| u[[j, i]] * h[i]).sum();
        wx + uh + b[[0, j]]
    };
    let z: Vec<f64> = (0..hidden)
        .map(|j| sigmoid(affine(&p.w_z, &p.u_z, &p.b_z, h_prev, j)))
        .collect();
    let r: Vec<f64> = (0..hidden)
        .map(|j| sigmoid(affine(&p.w_r, &p.u_r, &p.b_r, h_prev, j)))
        .collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = (0..hidden)
        .map(|j| affine(&p.w_h, &p.u_h, &p.b_h, &rh, j).tanh())
        .collect();
    Ok((0..hidden).map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * cand[j]).collect())
}

/// A GRU cell whose weights live in a [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct Gru {
    ids: [ParamId; 9],
    pub input: usize,
    pub hidden: usize,
}

const GRU_NAMES: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

impl Gru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut ids = Vec::with_capacity(9);
        for gate in ["z", "r", "h"] {
            ids.push(store.insert(format!("{name}.w_{gate}"), uniform_init(rng, hidden, input, input))?);
            ids.push(store.insert(format!("{name}.u_{gate}"), uniform_init(rng, hidden, hidden, hidden))?);
            ids.push(store.insert(format!("{name}.b_{gate}"), zeros(1, hidden))?);
        }
        Ok(Self {
            ids: ids.try_into().expect("nine gate tensors"),
            input,
            hidden,
        })
    }

    pub fn attach(store: &ParameterStore, name: &str) -> Result<Self> {
        let mut ids = Vec::with_capacity(9);
        for n in GRU_NAMES {
            ids.push(lookup(store, &format!("{name}.{n}"))?);
        }
        let ids: [ParamId; 9] = ids.try_into().expect("nine gate tensors");
        let (hidden, input) = store.value(ids[0]).dim();
        for (k, id) in ids.iter().enumerate() {
            let expected = match k % 3 {
                0 => (hidden, input),
                1 => (hidden, hidden),
                _ => (1, hidden),
            };
            if store.value(*id).dim() != expected {
                return Err(Error::shape(format!("{name}.{} has inconsistent shape", GRU_NAMES[k])));
            }
        }
        Ok(Self { ids, input, hidden })
    }

    pub fn params(&self, store: &ParameterStore) -> GruParams {
        let v = |k: usize| store.value(self.ids[k]).clone();
        GruParams {
            w_z: v(0),
            u_z: v(1),
            b_z: v(2),
            w_r: v(3),
            u_r: v(4),
            b_r: v(5),
            w_h: v(6),
            u_h: v(7),
            b_h: v(8),
        }
    }

    /// One batched step: `h: [B × H]`, `x: [B × in]`.
    pub fn step(&self, g: &mut Graph, store: &ParameterStore, binding: Binding, h: Var, x: Var) -> Result<Var> {
        let mut p = [None; 9];
        for (slot, id) in p.iter_mut().zip(self.ids) {
            *slot = Some(bind(g, store, id, binding)?);
        }
        let p = p.map(|v| v.expect("bound"));
        let gate = |g: &mut Graph, w: Var, u: Var, b: Var, hin: Var| -> Result<Var> {
            let wx = g.matmul_t(x, w)?;
            let uh = g.matmul_t(hin, u)?;
            let sum = g.add(wx, uh)?;
            g.add_row(sum, b)
        };
        let z_pre = gate(g, p[0], p[1], p[2], h)?;
        let z = g.sigmoid(z_pre);
        let r_pre = gate(g, p[3], p[4], p[5], h)?;
        let r = g.sigmoid(r_pre);
        let rh = g.mul(r, h)?;
        let c_pre = gate(g, p[6], p[7], p[8], rh)?;
        let cand = g.tanh(c_pre);
        let keep = g.one_minus(z);
        let kept = g.mul(keep, h)?;
        let fresh = g.mul(z, cand)?;
        g.add(kept, fresh)
    }

    /// Runs the cell over `inputs` (chronological) from a zero state and
    /// returns the final hidden state.
    pub fn encode(&self, g: &mut Graph, store: &ParameterStore, binding: Binding, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::shape("GRU over an empty sequence"));
        };
        let batch = g.value(first).nrows();
        let mut h = g.constant(zeros(batch, self.hidden));
        for &x in inputs {
            h = self.step(g, store, binding, h, x)?;
        }
        Ok(h)
    }
}
