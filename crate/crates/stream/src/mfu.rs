//! Consumer-side sample store with most-frequently-used eviction.
//!
//! Only training draws count as uses. When the cache is full the entry drawn
//! most often is evicted; ties go to the oldest insertion.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

pub const DEFAULT_CACHE_CAPACITY: usize = 8192;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("cache capacity must be positive")]
    ZeroCapacity,
    #[error("cache is empty")]
    Empty,
    #[error("batch of {batch} exceeds cache size {size}")]
    BatchTooLarge { batch: usize, size: usize },
}

#[derive(Debug)]
struct Entry<T> {
    value: Arc<T>,
    uses: u64,
    slot: usize,
}

/// An entry removed to make room for a newer one.
#[derive(Debug, Clone)]
pub struct Evicted<T> {
    pub seq: u64,
    pub uses: u64,
    pub value: Arc<T>,
}

#[derive(Debug)]
pub struct MfuCache<T> {
    capacity: usize,
    entries: HashMap<u64, Entry<T>>,
    // (uses, Reverse(seq)): the last key is the eviction victim
    order: BTreeMap<(u64, Reverse<u64>), ()>,
    // dense list of resident sequence numbers for uniform sampling
    slots: Vec<u64>,
    next_seq: u64,
    evictions: u64,
    draws: u64,
}

impl<T> MfuCache<T> {
    pub fn new(capacity: usize) -> Result<Self, CacheError> {
        if capacity == 0 {
            return Err(CacheError::ZeroCapacity);
        }
        Ok(MfuCache {
            capacity,
            entries: HashMap::with_capacity(capacity),
            order: BTreeMap::new(),
            slots: Vec::with_capacity(capacity),
            next_seq: 0,
            evictions: 0,
            draws: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    /// Total samples handed out by [`MfuCache::draw`].
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn uses(&self, seq: u64) -> Option<u64> {
        self.entries.get(&seq).map(|e| e.uses)
    }

    /// Resident sequence numbers in slot order.
    pub fn residents(&self) -> &[u64] {
        &self.slots
    }

    /// Stores `value` and returns its insertion sequence number plus the
    /// entry evicted to make room, if any.
    pub fn insert(&mut self, value: impl Into<Arc<T>>) -> (u64, Option<Evicted<T>>) {
        let evicted = if self.slots.len() == self.capacity { self.evict() } else { None };
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(seq, Entry { value: value.into(), uses: 0, slot: self.slots.len() });
        self.order.insert((0, Reverse(seq)), ());
        self.slots.push(seq);
        (seq, evicted)
    }

    fn evict(&mut self) -> Option<Evicted<T>> {
        let (&(uses, Reverse(seq)), _) = self.order.last_key_value()?;
        self.order.remove(&(uses, Reverse(seq)));
        let entry = self.entries.remove(&seq).expect("order and entries agree");
        let last = self.slots.len() - 1;
        self.slots.swap_remove(entry.slot);
        if entry.slot != last {
            let moved = self.slots[entry.slot];
            self.entries.get_mut(&moved).unwrap().slot = entry.slot;
        }
        self.evictions += 1;
        Some(Evicted { seq, uses, value: entry.value })
    }

    /// Draws `batch` distinct entries uniformly at random and bumps their use
    /// counts. Returns shared handles, so copying payloads happens outside any lock.
    pub fn draw<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<Vec<(u64, Arc<T>)>, CacheError> {
        if self.slots.is_empty() {
            return Err(CacheError::Empty);
        }
        if batch > self.slots.len() {
            return Err(CacheError::BatchTooLarge { batch, size: self.slots.len() });
        }
        let picks = rand::seq::index::sample(rng, self.slots.len(), batch);
        let mut out = Vec::with_capacity(batch);
        for i in picks.iter() {
            let seq = self.slots[i];
            let e = self.entries.get_mut(&seq).unwrap();
            self.order.remove(&(e.uses, Reverse(seq)));
            e.uses += 1;
            self.order.insert((e.uses, Reverse(seq)), ());
            out.push((seq, e.value.clone()));
        }
        self.draws += batch as u64;
        Ok(out)
    }
}
