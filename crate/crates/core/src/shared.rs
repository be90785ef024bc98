use std::marker::PhantomData;

/// A mutable `f64` slice that several workers address concurrently.
///
/// Every access is `unsafe`: the caller guarantees that no entry is written by
/// one worker while another worker reads or writes that same entry, unless
/// the two accesses are ordered by a synchronisation point (end of a parallel
/// region or a task-graph edge).
#[derive(Clone, Copy)]
pub(crate) struct SharedSlice<'a> {
    ptr: *mut f64,
    len: usize,
    _borrow: PhantomData<&'a mut [f64]>,
}

// SAFETY: access discipline is delegated to the unsafe accessors.
unsafe impl Send for SharedSlice<'_> {}
unsafe impl Sync for SharedSlice<'_> {}

impl<'a> SharedSlice<'a> {
    pub fn new(slice: &'a mut [f64]) -> Self {
        Self {
            ptr: slice.as_mut_ptr(),
            len: slice.len(),
            _borrow: PhantomData,
        }
    }

    #[inline]
    pub unsafe fn read(self, i: usize) -> f64 {
        debug_assert!(i < self.len);
        self.ptr.add(i).read()
    }

    #[inline]
    pub unsafe fn write(self, i: usize, v: f64) {
        debug_assert!(i < self.len);
        self.ptr.add(i).write(v)
    }

    #[inline]
    pub unsafe fn add(self, i: usize, v: f64) {
        debug_assert!(i < self.len);
        *self.ptr.add(i) += v;
    }
}
