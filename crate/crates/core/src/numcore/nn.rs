//! Parameter storage and the small neural building blocks shared by the
//! motion generator and the socially-aware nets.

use super::{AdamState, Grads, NumError, Rng, Tape, Tensor, Var};

/// Optimizer grouping. Learning rates and freezing are decided per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Gaussian primitive parameters (positions, rotations, scales, ...).
    Gaussian,
    /// Generic network weights.
    Network,
    /// Stand-in projections for the pretrained speech encoder; frozen by
    /// default during training.
    SpeechSurrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

/// Named, grouped parameter tensors. Everything trainable in the artifact
/// lives in one of these stores.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        let mut value = value;
        value.requires_grad = true;
        self.entries.push(ParamEntry {
            name: name.into(),
            group,
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    /// Handle for the entry at `index` (the order of `entries()`).
    pub fn id_at(&self, index: usize) -> ParamId {
        assert!(index < self.entries.len(), "parameter index out of range");
        ParamId(index)
    }

    pub fn total_scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Bind every parameter as a tape leaf for one forward/backward pass.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        Binding {
            vars: self.entries.iter().map(|e| tape.leaf(&e.value)).collect(),
        }
    }

    /// Pull this store's gradients out of a backward sweep, zeros where a
    /// parameter did not participate.
    pub fn collect_grads(&self, binding: &Binding, grads: &Grads) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| grads.get_or_zeros(binding.vars[i], e.value.numel()))
            .collect()
    }
}

/// Per-pass map from parameters to tape leaves.
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    /// Rebuild a binding from explicit leaves, e.g. inside gradient checks
    /// that bind a store's tensors themselves.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Binding { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Per-group learning rates. Defaults follow splatting practice: fast for
/// Gaussian primitives, slow for networks.
#[derive(Debug, Clone, Copy)]
pub struct LearningRates {
    pub gaussian: f64,
    pub network: f64,
    pub speech_surrogate: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            gaussian: 5e-3,
            network: 1e-4,
            speech_surrogate: 1e-4,
        }
    }
}

impl LearningRates {
    fn for_group(&self, g: ParamGroup) -> f64 {
        match g {
            ParamGroup::Gaussian => self.gaussian,
            ParamGroup::Network => self.network,
            ParamGroup::SpeechSurrogate => self.speech_surrogate,
        }
    }
}

/// Adam over a whole [`ParamStore`], one moment pair per parameter tensor.
pub struct Optimizer {
    states: Vec<AdamState>,
    frozen: Vec<bool>,
}

impl Optimizer {
    pub fn new(store: &ParamStore, rates: LearningRates) -> Self {
        let states = store
            .entries()
            .iter()
            .map(|e| AdamState::new(e.value.numel(), rates.for_group(e.group)))
            .collect();
        Optimizer {
            states,
            frozen: vec![false; store.len()],
        }
    }

    pub fn freeze_group(&mut self, store: &ParamStore, group: ParamGroup) {
        self.freeze_by(store, |e| e.group == group);
    }

    /// Freeze every parameter the predicate selects.
    pub fn freeze_by(&mut self, store: &ParamStore, pred: impl Fn(&ParamEntry) -> bool) {
        for (i, e) in store.entries().iter().enumerate() {
            if pred(e) {
                self.frozen[i] = true;
            }
        }
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.0]
    }

    #[allow(clippy::needless_range_loop)]
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) -> Result<(), NumError> {
        if grads.len() != store.len() {
            return Err(NumError::Contract {
                what: format!(
                    "optimizer got {} gradient blocks for {} parameters",
                    grads.len(),
                    store.len()
                ),
            });
        }
        for i in 0..store.len() {
            if self.frozen[i] {
                continue;
            }
            self.states[i].step(store.entries_mut()[i].value.data_mut(), &grads[i])?;
        }
        Ok(())
    }
}

/// Activation for the two-layer MLPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer, y = x·W + b.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        Linear::in_group(store, rng, name, d_in, d_out, ParamGroup::Network)
    }

    pub fn in_group(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        group: ParamGroup,
    ) -> Self {
        // Xavier-uniform weights, zero bias
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let wdata: Vec<f64> = (0..d_in * d_out)
            .map(|_| rng.range(-bound, bound))
            .collect();
        let w = store.add(
            format!("{name}.w"),
            group,
            Tensor::new(vec![d_in, d_out], wdata).expect("shape matches data"),
        );
        let b = store.add(format!("{name}.b"), group, Tensor::zeros(vec![d_out]));
        Linear { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var, NumError> {
        let xw = tape.matmul(x, bind.var(self.w))?;
        tape.add_row(xw, bind.var(self.b))
    }
}

/// Two-layer MLP: activation(x·W1 + b1)·W2 + b2.
#[derive(Debug, Clone, Copy)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
    pub activation: Activation,
}

impl Mlp2 {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        activation: Activation,
    ) -> Self {
        Mlp2 {
            l1: Linear::new(store, rng, &format!("{name}.l1"), d_in, d_hidden),
            l2: Linear::new(store, rng, &format!("{name}.l2"), d_hidden, d_out),
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var, NumError> {
        let h = self.l1.forward(tape, bind, x)?;
        let h = match self.activation {
            Activation::Relu => tape.relu(h),
            Activation::Identity => h,
        };
        self.l2.forward(tape, bind, h)
    }
}
