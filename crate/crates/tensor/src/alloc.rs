//! Accounting of live tensor buffer bytes.
//!
//! Every tensor buffer registers its byte size with the counter that was
//! active on the creating thread and releases it on drop. The peak is the
//! high-water mark of the live total since the last [`reset_peak`]. An
//! optional budget turns allocations beyond it into
//! [`Error::OutOfMemory`](crate::Error::OutOfMemory).

use std::cell::RefCell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::{Error, Result};

#[derive(Debug, Default)]
pub struct AllocCounter {
    current: AtomicUsize,
    peak: AtomicUsize,
    budget: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocStats {
    pub current_bytes: usize,
    pub peak_bytes: usize,
}

impl AllocCounter {
    fn new() -> Self {
        AllocCounter {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            budget: AtomicUsize::new(usize::MAX),
        }
    }

    fn check(&self, bytes: usize) -> Result<()> {
        let current = self.current.load(Ordering::Relaxed);
        let budget = self.budget.load(Ordering::Relaxed);
        if current.saturating_add(bytes) > budget {
            return Err(Error::OutOfMemory {
                requested: bytes,
                current,
                budget,
            });
        }
        Ok(())
    }

    pub(crate) fn acquire(&self, bytes: usize) {
        let now = self.current.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.peak.fetch_max(now, Ordering::Relaxed);
    }

    pub(crate) fn release(&self, bytes: usize) {
        self.current.fetch_sub(bytes, Ordering::Relaxed);
    }
}

thread_local! {
    static ACTIVE: RefCell<Arc<AllocCounter>> = RefCell::new(Arc::new(AllocCounter::new()));
}

pub(crate) fn active() -> Arc<AllocCounter> {
    ACTIVE.with(|a| a.borrow().clone())
}

pub fn alloc_stats() -> AllocStats {
    ACTIVE.with(|a| {
        let a = a.borrow();
        AllocStats {
            current_bytes: a.current.load(Ordering::Relaxed),
            peak_bytes: a.peak.load(Ordering::Relaxed),
        }
    })
}

/// Resets the high-water mark to the bytes currently live.
pub fn reset_peak() {
    ACTIVE.with(|a| {
        let a = a.borrow();
        a.peak.store(a.current.load(Ordering::Relaxed), Ordering::Relaxed);
    })
}

/// Sets the byte budget for the current thread; `None` removes it.
pub fn set_budget(bytes: Option<usize>) {
    ACTIVE.with(|a| {
        a.borrow()
            .budget
            .store(bytes.unwrap_or(usize::MAX), Ordering::Relaxed)
    })
}

pub fn budget() -> Option<usize> {
    ACTIVE.with(|a| match a.borrow().budget.load(Ordering::Relaxed) {
        usize::MAX => None,
        b => Some(b),
    })
}

/// Fails if registering `bytes` more would exceed the budget.
pub fn check_reserve(bytes: usize) -> Result<()> {
    ACTIVE.with(|a| a.borrow().check(bytes))
}

/// Allocates a zero-filled buffer after checking the budget.
pub fn zeroed<T: Copy + Default>(len: usize) -> Result<Vec<T>> {
    check_reserve(len.saturating_mul(std::mem::size_of::<T>()))?;
    Ok(vec![T::default(); len])
}

/// Restores the previous budget when dropped.
pub struct BudgetGuard(Option<usize>);

impl BudgetGuard {
    pub fn new(bytes: Option<usize>) -> Self {
        let prev = budget();
        set_budget(bytes);
        BudgetGuard(prev)
    }
}

impl Drop for BudgetGuard {
    fn drop(&mut self) {
        set_budget(self.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn peak_is_zero_after_reset_without_allocation() {
        reset_peak();
        let s = alloc_stats();
        assert_eq!(s.current_bytes, 0);
        assert_eq!(s.peak_bytes, 0);
    }

    #[test]
    fn float64_tensor_counts_its_width() {
        reset_peak();
        let t = Tensor::<f64>::zeros([1000]).unwrap();
        assert!(alloc_stats().peak_bytes >= 8000);
        drop(t);
        assert_eq!(alloc_stats().current_bytes, 0);
    }

    #[test]
    fn high_water_mark_survives_free() {
        reset_peak();
        let a = Tensor::<f32>::zeros([1000]).unwrap();
        drop(a);
        let _b = Tensor::<f32>::zeros([500]).unwrap();
        let s = alloc_stats();
        assert_eq!(s.peak_bytes, 4000);
        assert_eq!(s.current_bytes, 2000);
    }

    #[test]
    fn reshape_shares_the_buffer() {
        reset_peak();
        let a = Tensor::<f32>::zeros([4, 4]).unwrap();
        let _b = a.reshape([16]).unwrap();
        assert_eq!(alloc_stats().current_bytes, 64);
    }

    #[test]
    fn budget_rejects_oversized_allocation() {
        let _g = BudgetGuard::new(Some(1024));
        let err = Tensor::<f64>::zeros([1000]).unwrap_err();
        assert!(err.is_out_of_memory());
        assert!(Tensor::<f64>::zeros([100]).is_ok());
    }
}
