//! Floating-point element type of the embedding matrices.
//!
//! Training runs over a shared view of the matrices made of atomic cells,
//! one per element, accessed with relaxed loads and stores. With one worker
//! this is plain sequential arithmetic; with several workers concurrent
//! updates may overwrite each other but never tear a value.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    type Cell: Send + Sync;

    /// Reinterpret an exclusively borrowed slice as shared atomic cells.
    fn cells(values: &mut [Self]) -> &[Self::Cell];

    fn load(cell: &Self::Cell) -> Self;

    fn store(cell: &Self::Cell, value: Self);

    /// Lossless-or-nearest conversion from `f64`.
    fn of(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("f64 converts to every float type")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    type Cell = AtomicU32;

    fn cells(values: &mut [f32]) -> &[AtomicU32] {
        // SAFETY: AtomicU32 has the size and alignment of u32, which matches
        // f32. The exclusive borrow guarantees no non-atomic access aliases
        // the returned view for its lifetime.
        unsafe { &*(values as *mut [f32] as *const [AtomicU32]) }
    }

    #[inline]
    fn load(cell: &AtomicU32) -> f32 {
        f32::from_bits(cell.load(Ordering::Relaxed))
    }

    #[inline]
    fn store(cell: &AtomicU32, value: f32) {
        cell.store(value.to_bits(), Ordering::Relaxed)
    }
}

impl Scalar for f64 {
    type Cell = AtomicU64;

    fn cells(values: &mut [f64]) -> &[AtomicU64] {
        // SAFETY: as for f32, with AtomicU64 and f64.
        unsafe { &*(values as *mut [f64] as *const [AtomicU64]) }
    }

    #[inline]
    fn load(cell: &AtomicU64) -> f64 {
        f64::from_bits(cell.load(Ordering::Relaxed))
    }

    #[inline]
    fn store(cell: &AtomicU64, value: f64) {
        cell.store(value.to_bits(), Ordering::Relaxed)
    }
}
