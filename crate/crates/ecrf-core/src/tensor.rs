//! Minimal dense 4-axis tensor used for all grid components.
//!
//! Every grid component is stored as `[rank, channel, d1, d2]` in row-major
//! order; vector lines use `d2 = 1`. Keeping a single fixed-arity layout lets
//! the transform, codec and trainer share one indexing scheme.

/// Dense row-major tensor with four axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        let len = dims.iter().product();
        Tensor4 {
            dims,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor4 { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, r: usize, c: usize, i: usize, j: usize) -> usize {
        debug_assert!(r < self.dims[0] && c < self.dims[1] && i < self.dims[2] && j < self.dims[3]);
        ((r * self.dims[1] + c) * self.dims[2] + i) * self.dims[3] + j
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.offset(r, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, i: usize, j: usize, v: f64) {
        let o = self.offset(r, c, i, j);
        self.data[o] = v;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared L2 norm of all entries.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Elementwise `self += scale * other`. Shapes must match.
    pub fn axpy(&mut self, scale: f64, other: &Tensor4) {
        assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_row_major() {
        let t = Tensor4::zeros([2, 3, 4, 5]);
        assert_eq!(t.offset(0, 0, 0, 0), 0);
        assert_eq!(t.offset(0, 0, 0, 1), 1);
        assert_eq!(t.offset(0, 0, 1, 0), 5);
        assert_eq!(t.offset(0, 1, 0, 0), 20);
        assert_eq!(t.offset(1, 0, 0, 0), 60);
        assert_eq!(t.len(), 120);
    }

    #[test]
    fn axpy_adds_scaled() {
        let mut a = Tensor4::from_vec([1, 1, 1, 3], vec![1.0, 2.0, 3.0]);
        let b = Tensor4::from_vec([1, 1, 1, 3], vec![10.0, 20.0, 30.0]);
        a.axpy(0.5, &b);
        assert_eq!(a.data(), &[6.0, 12.0, 18.0]);
    }
}
