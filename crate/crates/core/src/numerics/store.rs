use super::{Matrix, NumericsError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
struct Slot {
    name: String,
    value: Matrix,
    grad: Matrix,
    first_moment: Matrix,
    second_moment: Matrix,
}

/// Named parameter matrices with gradient accumulators and Adam moments of
/// identical shape.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    slots: Vec<Slot>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId, NumericsError> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(NumericsError::DuplicateParam(name));
        }
        let (r, c) = value.shape();
        self.slots.push(Slot {
            name,
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
        });
        Ok(ParamId(self.slots.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.slots.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.slots[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.slots[id.0].grad
    }

    pub fn moments(&self, id: ParamId) -> (&Matrix, &Matrix) {
        let s = &self.slots[id.0];
        (&s.first_moment, &s.second_moment)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.slots {
            s.grad.fill(0.0);
        }
    }

    /// Clears Adam moments and the step counter; values are kept.
    pub fn reset_optimizer(&mut self) {
        for s in &mut self.slots {
            s.first_moment.fill(0.0);
            s.second_moment.fill(0.0);
        }
        self.step = 0;
    }

    pub(super) fn slots_mut(
        &mut self,
    ) -> impl Iterator<Item = (&str, &mut Matrix, &mut Matrix, &mut Matrix, &mut Matrix)> {
        self.slots.iter_mut().map(|s| {
            (
                s.name.as_str(),
                &mut s.value,
                &mut s.grad,
                &mut s.first_moment,
                &mut s.second_moment,
            )
        })
    }

    pub(super) fn bump_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }
}
