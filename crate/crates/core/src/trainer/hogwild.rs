use std::marker::PhantomData;

use super::objective::ParamRows;
use super::EmbeddingMatrices;
use crate::scalar::Real;
use crate::vocab::WordId;

/// Lock-free view of the embedding matrices shared by all training workers.
///
/// Every worker holds its own copy of the view and writes rows without
/// synchronization (Hogwild). Each update touches only a handful of rows, so
/// concurrent writes to the same row are rare and only perturb SGD slightly.
/// With a single worker there is no concurrency at all and training is
/// deterministic.
pub(crate) struct SharedMatrices<'a, T> {
    input: *mut T,
    output: *mut T,
    rows: usize,
    dim: usize,
    _borrow: PhantomData<&'a mut EmbeddingMatrices<T>>,
}

// SAFETY: the view is created from an exclusive borrow that outlives every
// copy, and row indices are bounds-checked before any pointer arithmetic.
// Unsynchronized element writes between workers are the accepted Hogwild
// trade-off.
unsafe impl<T: Send> Send for SharedMatrices<'_, T> {}
unsafe impl<T: Sync> Sync for SharedMatrices<'_, T> {}

impl<'a, T: Real> SharedMatrices<'a, T> {
    pub(crate) fn new(matrices: &'a mut EmbeddingMatrices<T>) -> Self {
        let rows = matrices.input.rows();
        let dim = matrices.input.cols();
        assert_eq!(rows, matrices.output.rows());
        assert_eq!(dim, matrices.output.cols());
        SharedMatrices {
            input: matrices.input.as_mut_slice().as_mut_ptr(),
            output: matrices.output.as_mut_slice().as_mut_ptr(),
            rows,
            dim,
            _borrow: PhantomData,
        }
    }

    pub(crate) fn handle(&self) -> Self {
        SharedMatrices {
            input: self.input,
            output: self.output,
            rows: self.rows,
            dim: self.dim,
            _borrow: PhantomData,
        }
    }

    #[inline]
    fn row(&mut self, base: *mut T, id: WordId) -> &mut [T] {
        assert!(
            id < self.rows,
            "row {id} out of range for {} rows",
            self.rows
        );
        // SAFETY: id < rows, so the slice lies inside the allocation.
        unsafe { std::slice::from_raw_parts_mut(base.add(id * self.dim), self.dim) }
    }
}

impl<T: Real> ParamRows<T> for SharedMatrices<'_, T> {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn input_row(&mut self, id: WordId) -> &mut [T] {
        self.row(self.input, id)
    }

    #[inline]
    fn output_row(&mut self, id: WordId) -> &mut [T] {
        self.row(self.output, id)
    }
}
