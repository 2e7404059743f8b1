//! Flat named tensor storage.
//!
//! All parameters of a network live in one contiguous `f32` buffer with a
//! parallel gradient buffer; non-trainable state (normalization running
//! statistics) lives in a [`BufferSet`] without gradients. Layers hold
//! [`ParamId`]/[`BufId`] handles and view their slices as ndarray arrays.
//! Flat storage keeps the optimizer, the momentum teacher update,
//! checkpointing, and finite-difference probes simple vector operations.

use ndarray::{ArrayViewD, ArrayViewMutD, IxDyn};

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct TensorStore {
    entries: Vec<Entry>,
    data: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

impl TensorStore {
    pub fn new() -> Self {
        Self { entries: Vec::new(), data: Vec::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, shape: &[usize]) -> TensorId {
        let name = name.into();
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate tensor name {name}"
        );
        let len: usize = shape.iter().product();
        let offset = self.data.len();
        self.data.resize(offset + len, 0.0);
        self.entries.push(Entry { name, shape: shape.to_vec(), offset, len });
        TensorId(self.entries.len() - 1)
    }

    pub fn tensor_count(&self) -> usize {
        self.entries.len()
    }

    pub fn scalar_count(&self) -> usize {
        self.data.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = TensorId> {
        (0..self.entries.len()).map(TensorId)
    }

    pub fn name(&self, id: TensorId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.entries[id.0].shape
    }

    /// Offset of this tensor's first scalar in the flat buffer.
    pub fn offset(&self, id: TensorId) -> usize {
        self.entries[id.0].offset
    }

    pub fn find(&self, name: &str) -> Option<TensorId> {
        self.entries.iter().position(|e| e.name == name).map(TensorId)
    }

    pub fn slice(&self, id: TensorId) -> &[f32] {
        let e = &self.entries[id.0];
        &self.data[e.offset..e.offset + e.len]
    }

    pub fn slice_mut(&mut self, id: TensorId) -> &mut [f32] {
        let e = &self.entries[id.0];
        &mut self.data[e.offset..e.offset + e.len]
    }

    pub fn view(&self, id: TensorId) -> ArrayViewD<'_, f32> {
        let e = &self.entries[id.0];
        ArrayViewD::from_shape(IxDyn(&e.shape), &self.data[e.offset..e.offset + e.len])
            .expect("stored shape matches stored length")
    }

    pub fn view_mut(&mut self, id: TensorId) -> ArrayViewMutD<'_, f32> {
        let e = self.entries[id.0].clone();
        ArrayViewMutD::from_shape(IxDyn(&e.shape), &mut self.data[e.offset..e.offset + e.len])
            .expect("stored shape matches stored length")
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Copy values from `other` for every tensor whose name exists in both
    /// stores. Shapes must agree. Returns the copied names.
    pub fn copy_matching_from(&mut self, other: &TensorStore) -> Vec<String> {
        let mut copied = Vec::new();
        for id in self.ids() {
            if let Some(src) = other.find(self.name(id)) {
                assert_eq!(
                    self.shape(id),
                    other.shape(src),
                    "shape mismatch for {}",
                    self.name(id)
                );
                let from = other.slice(src).to_vec();
                self.slice_mut(id).copy_from_slice(&from);
                copied.push(self.name(id).to_string());
            }
        }
        copied
    }
}

impl Default for TensorStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Trainable parameters: values plus an aligned gradient buffer.
#[derive(Debug, Clone)]
pub struct ParamSet {
    store: TensorStore,
    grad: Vec<f32>,
}

pub type ParamId = TensorId;

impl ParamSet {
    pub fn new() -> Self {
        Self { store: TensorStore::new(), grad: Vec::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let id = self.store.register(name, shape);
        self.grad.resize(self.store.scalar_count(), 0.0);
        id
    }

    pub fn store(&self) -> &TensorStore {
        &self.store
    }

    pub fn tensor_count(&self) -> usize {
        self.store.tensor_count()
    }

    pub fn scalar_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        self.store.ids()
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.store.name(id)
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        self.store.shape(id)
    }

    pub fn offset(&self, id: ParamId) -> usize {
        self.store.offset(id)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.store.find(name)
    }

    pub fn value(&self, id: ParamId) -> ArrayViewD<'_, f32> {
        self.store.view(id)
    }

    pub fn value_mut(&mut self, id: ParamId) -> ArrayViewMutD<'_, f32> {
        self.store.view_mut(id)
    }

    pub fn slice(&self, id: ParamId) -> &[f32] {
        self.store.slice(id)
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [f32] {
        self.store.slice_mut(id)
    }

    pub fn grad_slice(&self, id: ParamId) -> &[f32] {
        let e = &self.store.entries[id.0];
        &self.grad[e.offset..e.offset + e.len]
    }

    pub fn grad_slice_mut(&mut self, id: ParamId) -> &mut [f32] {
        let e = &self.store.entries[id.0];
        &mut self.grad[e.offset..e.offset + e.len]
    }

    pub fn grad_view(&self, id: ParamId) -> ArrayViewD<'_, f32> {
        let e = &self.store.entries[id.0];
        ArrayViewD::from_shape(IxDyn(&e.shape), &self.grad[e.offset..e.offset + e.len])
            .expect("stored shape matches stored length")
    }

    /// Add a contribution into the gradient buffer of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, contribution: &[f32]) {
        let g = self.grad_slice_mut(id);
        assert_eq!(g.len(), contribution.len());
        for (dst, src) in g.iter_mut().zip(contribution) {
            *dst += *src;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn grad_data(&self) -> &[f32] {
        &self.grad
    }

    pub fn data(&self) -> &[f32] {
        self.store.data()
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        self.store.data_mut()
    }

    pub fn max_abs_grad(&self) -> f32 {
        self.grad.iter().fold(0.0f32, |m, g| m.max(g.abs()))
    }

    /// Copy values from `other` for every tensor whose name exists in both
    /// sets; shapes must agree. Returns how many tensors were copied.
    pub fn copy_values_by_name(&mut self, other: &ParamSet) -> usize {
        self.store.copy_matching_from(&other.store).len()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Non-trainable named state (running statistics).
pub type BufferSet = TensorStore;
pub type BufId = TensorId;
