//! Byte accounting for long-lived buffers.
//!
//! Every cost tensor, DP table, gradient table, norm cache and gradient output
//! allocated by the kernels can be registered with an [`AllocationLedger`]. The
//! ledger's peak is the portable stand-in for peak device memory.

use std::ops::{Deref, DerefMut};
use std::sync::{Arc, Mutex, MutexGuard};

use crate::error::{Result, SdtwError};

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LedgerSnapshot {
    pub live_bytes: usize,
    pub peak_bytes: usize,
}

#[derive(Debug, Default)]
struct LedgerState {
    live: usize,
    peak: usize,
    limit: Option<usize>,
}

/// Shared handle to a byte ledger. Clones refer to the same counters.
#[derive(Debug, Clone, Default)]
pub struct AllocationLedger {
    state: Arc<Mutex<LedgerState>>,
}

impl AllocationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// A ledger that refuses any `track` that would push live bytes above `limit`.
    pub fn with_limit(limit: usize) -> Self {
        let ledger = Self::default();
        ledger.lock().limit = Some(limit);
        ledger
    }

    fn lock(&self) -> MutexGuard<'_, LedgerState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn track(&self, bytes: usize) -> Result<()> {
        let mut s = self.lock();
        let live = s
            .live
            .checked_add(bytes)
            .ok_or(SdtwError::OutOfMemory { requested_bytes: bytes })?;
        if let Some(limit) = s.limit {
            if live > limit {
                return Err(SdtwError::OutOfMemory { requested_bytes: bytes });
            }
        }
        s.live = live;
        s.peak = s.peak.max(live);
        Ok(())
    }

    pub fn release(&self, bytes: usize) -> Result<()> {
        let mut s = self.lock();
        if bytes > s.live {
            return Err(SdtwError::LedgerUnderflow {
                live: s.live,
                requested: bytes,
            });
        }
        s.live -= bytes;
        Ok(())
    }

    /// Zeroes both counters; the limit is kept.
    pub fn reset(&self) {
        let mut s = self.lock();
        s.live = 0;
        s.peak = 0;
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let s = self.lock();
        LedgerSnapshot {
            live_bytes: s.live,
            peak_bytes: s.peak,
        }
    }

    pub fn live_bytes(&self) -> usize {
        self.lock().live
    }

    pub fn peak_bytes(&self) -> usize {
        self.lock().peak
    }
}

/// A `Vec` whose capacity is registered with a ledger for its whole lifetime.
///
/// Clones are untracked copies.
#[derive(Debug)]
pub struct Buffer<T> {
    data: Vec<T>,
    tracked: Option<(AllocationLedger, usize)>,
}

impl<T: Copy> Buffer<T> {
    /// Allocates `len` copies of `value`, refusing with `OutOfMemory` if either
    /// the ledger limit or the system allocator says no.
    pub fn filled(len: usize, value: T, ledger: Option<&AllocationLedger>) -> Result<Self> {
        let bytes = len
            .checked_mul(std::mem::size_of::<T>())
            .ok_or(SdtwError::OutOfMemory {
                requested_bytes: usize::MAX,
            })?;
        if let Some(l) = ledger {
            l.track(bytes)?;
        }
        let mut data = Vec::new();
        if data.try_reserve_exact(len).is_err() {
            if let Some(l) = ledger {
                let _ = l.release(bytes);
            }
            return Err(SdtwError::OutOfMemory { requested_bytes: bytes });
        }
        data.resize(len, value);
        Ok(Self {
            data,
            tracked: ledger.map(|l| (l.clone(), bytes)),
        })
    }
}

impl<T> Buffer<T> {
    pub fn untracked(data: Vec<T>) -> Self {
        Self { data, tracked: None }
    }

    pub fn is_tracked(&self) -> bool {
        self.tracked.is_some()
    }

    pub fn into_vec(mut self) -> Vec<T> {
        self.release_registration();
        std::mem::take(&mut self.data)
    }

    fn release_registration(&mut self) {
        if let Some((ledger, bytes)) = self.tracked.take() {
            // Registered bytes were tracked on construction, so this cannot underflow
            // unless the ledger was reset in between.
            let _ = ledger.release(bytes);
        }
    }
}

impl<T> Drop for Buffer<T> {
    fn drop(&mut self) {
        self.release_registration();
    }
}

impl<T: Clone> Clone for Buffer<T> {
    fn clone(&self) -> Self {
        Self::untracked(self.data.clone())
    }
}

impl<T> Deref for Buffer<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for Buffer<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}
