use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};

/// An `H × d` state sequence stored row-major (one state per timestep).
///
/// For the planar maze the state is `[px, py, vx, vy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    horizon: usize,
    state_dim: usize,
    data: DVector<f64>,
}

impl Trajectory {
    pub fn new(horizon: usize, state_dim: usize, data: DVector<f64>) -> Result<Self> {
        if data.len() != horizon * state_dim {
            return Err(Error::ShapeMismatch {
                expected: horizon * state_dim,
                actual: data.len(),
            });
        }
        Ok(Trajectory { horizon, state_dim, data })
    }

    pub fn zeros(horizon: usize, state_dim: usize) -> Self {
        Trajectory {
            horizon,
            state_dim,
            data: DVector::zeros(horizon * state_dim),
        }
    }

    pub fn from_states(states: &[Vec<f64>]) -> Result<Self> {
        let horizon = states.len();
        let state_dim = states.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(horizon * state_dim);
        for s in states {
            if s.len() != state_dim {
                return Err(Error::ShapeMismatch { expected: state_dim, actual: s.len() });
            }
            data.extend_from_slice(s);
        }
        Trajectory::new(horizon, state_dim, DVector::from_vec(data))
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn d_pos(&self) -> usize {
        self.state_dim / 2
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn as_vector_mut(&mut self) -> &mut DVector<f64> {
        &mut self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    pub fn state(&self, t: usize) -> DVectorView<'_, f64> {
        self.data.rows(t * self.state_dim, self.state_dim)
    }

    pub fn state_slice(&self, t: usize) -> &[f64] {
        &self.data.as_slice()[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn state_slice_mut(&mut self, t: usize) -> &mut [f64] {
        let d = self.state_dim;
        &mut self.data.as_mut_slice()[t * d..(t + 1) * d]
    }

    pub fn position(&self, t: usize) -> &[f64] {
        &self.state_slice(t)[..self.d_pos()]
    }

    pub fn velocity(&self, t: usize) -> &[f64] {
        &self.state_slice(t)[self.d_pos()..]
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.data[t * self.state_dim + k]
    }

    pub fn set(&mut self, t: usize, k: usize, v: f64) {
        self.data[t * self.state_dim + k] = v;
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.as_slice().chunks(self.state_dim)
    }
}
