//! Per-snapshot vertex embeddings stored in one contiguous array.

use rand::Rng;

use crate::error::{DhprepError, Result};

/// Embeddings `u_i^t` for every vertex at every snapshot, snapshot-major:
/// the vector for vertex `i` at ordinal `t` starts at `((t-1)*N + i)*dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    snapshots: usize,
    vertices: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingSequence {
    /// All-zero embeddings.
    pub fn zeros(snapshots: usize, vertices: usize, dim: usize) -> Result<Self> {
        if snapshots == 0 || vertices == 0 || dim == 0 {
            return Err(DhprepError::Validation(
                "embedding dimensions must all be positive".into(),
            ));
        }
        Ok(Self {
            snapshots,
            vertices,
            dim,
            data: vec![0.0; snapshots * vertices * dim],
        })
    }

    /// Uniform init in `[-0.5/dim, 0.5/dim)`, matching common shallow
    /// embedding initializers.
    pub fn random<R: Rng + ?Sized>(
        snapshots: usize,
        vertices: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut seq = Self::zeros(snapshots, vertices, dim)?;
        let half = 0.5 / dim as f64;
        for x in &mut seq.data {
            *x = rng.random_range(-half..half);
        }
        Ok(seq)
    }

    /// Rebuild from a raw buffer (checkpoint loading).
    pub fn from_raw(snapshots: usize, vertices: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != snapshots * vertices * dim {
            return Err(DhprepError::Validation(format!(
                "embedding buffer has {} values, expected {}",
                data.len(),
                snapshots * vertices * dim
            )));
        }
        let mut seq = Self::zeros(snapshots, vertices, dim)?;
        seq.data = data;
        Ok(seq)
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Flat offset of `u_i^t` (`t` is the 1-based snapshot ordinal).
    pub fn offset(&self, t: usize, i: usize) -> usize {
        assert!(t >= 1 && t <= self.snapshots, "snapshot ordinal {t} out of range");
        assert!(i < self.vertices, "vertex id {i} out of range");
        ((t - 1) * self.vertices + i) * self.dim
    }

    /// Embedding of vertex `i` at snapshot `t`.
    pub fn get(&self, t: usize, i: usize) -> &[f64] {
        let o = self.offset(t, i);
        &self.data[o..o + self.dim]
    }

    pub fn get_mut(&mut self, t: usize, i: usize) -> &mut [f64] {
        let o = self.offset(t, i);
        &mut self.data[o..o + self.dim]
    }

    pub fn set(&mut self, t: usize, i: usize, values: &[f64]) {
        assert_eq!(values.len(), self.dim, "value length must match dim");
        self.get_mut(t, i).copy_from_slice(values);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Squared Euclidean distance between two equal-length vectors.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
