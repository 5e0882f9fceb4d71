//! Consumer pipeline: socket -> staging FIFO -> MFU cache -> training draws.

use std::io::{self, BufReader, Read};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender};
use pdeforge::generation::FrameSample;
use rand::Rng;
use thiserror::Error;

use crate::codec::{decode_from, ProtocolError};
use crate::mfu::{CacheError, Evicted, MfuCache, DEFAULT_CACHE_CAPACITY};

pub const DEFAULT_STAGING_CAPACITY: usize = 256;
pub const DEFAULT_EPOCH_LENGTH: u64 = 13_200;

/// Counts consumed samples and reports epoch boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochCounter {
    length: u64,
    seen: u64,
}

impl EpochCounter {
    pub fn new(length: u64) -> Option<Self> {
        (length > 0).then_some(EpochCounter { length, seen: 0 })
    }

    /// Records `n` more samples; returns how many boundaries were crossed.
    pub fn record(&mut self, n: u64) -> u64 {
        let before = self.seen / self.length;
        self.seen += n;
        self.seen / self.length - before
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn epochs(&self) -> u64 {
        self.seen / self.length
    }

    pub fn length(&self) -> u64 {
        self.length
    }
}

impl Default for EpochCounter {
    fn default() -> Self {
        EpochCounter { length: DEFAULT_EPOCH_LENGTH, seen: 0 }
    }
}

#[derive(Debug, Default)]
pub struct PumpStats {
    pub received: AtomicU64,
    pub decode_errors: AtomicU64,
    pub migrated: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PumpSnapshot {
    pub received: u64,
    pub decode_errors: u64,
    pub migrated: u64,
}

impl PumpStats {
    pub fn snapshot(&self) -> PumpSnapshot {
        PumpSnapshot {
            received: self.received.load(Ordering::Relaxed),
            decode_errors: self.decode_errors.load(Ordering::Relaxed),
            migrated: self.migrated.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Error)]
pub enum PumpError {
    #[error("connection lost: {0}")]
    Connection(#[source] ProtocolError),
}

/// Decodes messages from `reader` into `staging` until end of stream.
///
/// Checksum and header errors are counted and the message skipped. Framing
/// errors and I/O failures end the pump with an error. Returns `Ok` on a clean
/// end of stream or when the staging receiver is gone.
pub fn staging_pump<R: Read>(reader: R, staging: &Sender<FrameSample>, stats: &PumpStats) -> Result<(), PumpError> {
    let mut reader = BufReader::with_capacity(1 << 16, reader);
    loop {
        match decode_from(&mut reader) {
            Ok(Some(sample)) => {
                stats.received.fetch_add(1, Ordering::Relaxed);
                if staging.send(sample).is_err() {
                    return Ok(());
                }
            }
            Ok(None) => return Ok(()),
            Err(e) if e.is_recoverable() => {
                stats.decode_errors.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                stats.decode_errors.fetch_add(1, Ordering::Relaxed);
                return Err(PumpError::Connection(e));
            }
        }
    }
}

/// MFU cache shared between one migrator and any number of drawers.
pub struct SharedCache<T> {
    inner: Arc<(Mutex<MfuCache<T>>, Condvar)>,
}

impl<T> Clone for SharedCache<T> {
    fn clone(&self) -> Self {
        SharedCache { inner: self.inner.clone() }
    }
}

impl<T> SharedCache<T> {
    pub fn new(capacity: usize) -> Result<Self, CacheError> {
        Ok(SharedCache { inner: Arc::new((Mutex::new(MfuCache::new(capacity)?), Condvar::new())) })
    }

    fn lock(&self) -> MutexGuard<'_, MfuCache<T>> {
        self.inner.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn insert(&self, value: impl Into<Arc<T>>) -> (u64, Option<Evicted<T>>) {
        let out = self.lock().insert(value);
        self.inner.1.notify_all();
        out
    }

    /// The lock is held only while picking entries; callers copy out of the
    /// returned handles afterwards.
    pub fn draw<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<(u64, Arc<T>)>, CacheError> {
        self.lock().draw(batch, rng)
    }

    /// Waits until the cache holds at least `min` entries.
    pub fn wait_for(&self, min: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut guard = self.lock();
        while guard.len() < min {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            guard = self.inner.1.wait_timeout(guard, deadline - now).unwrap_or_else(|p| p.into_inner()).0;
        }
        true
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn evictions(&self) -> u64 {
        self.lock().evictions()
    }

    pub fn with<R>(&self, f: impl FnOnce(&MfuCache<T>) -> R) -> R {
        f(&self.lock())
    }
}

/// Observes every sample on its way into the cache.
pub type ReceiveTap = Box<dyn FnMut(&FrameSample) + Send>;

/// Moves staged samples into the cache until the staging sender is dropped.
pub fn migrate(
    staging: &Receiver<FrameSample>,
    cache: &SharedCache<FrameSample>,
    stats: &PumpStats,
    mut tap: Option<ReceiveTap>,
) {
    for sample in staging.iter() {
        if let Some(t) = tap.as_mut() {
            t(&sample);
        }
        cache.insert(sample);
        stats.migrated.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConsumerOptions {
    pub staging_capacity: usize,
    pub cache_capacity: usize,
}

impl Default for ConsumerOptions {
    fn default() -> Self {
        ConsumerOptions { staging_capacity: DEFAULT_STAGING_CAPACITY, cache_capacity: DEFAULT_CACHE_CAPACITY }
    }
}

#[derive(Debug, Error)]
pub enum ConsumerError {
    #[error("staging capacity must be positive")]
    ZeroStaging,
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A running reception pipeline: one reader thread and one migrator thread.
pub struct Consumer {
    cache: SharedCache<FrameSample>,
    stats: Arc<PumpStats>,
    done: Arc<AtomicBool>,
    socket: Option<TcpStream>,
    reception: Option<JoinHandle<Result<(), PumpError>>>,
    migrator: Option<JoinHandle<()>>,
}

impl Consumer {
    pub fn connect(addr: impl ToSocketAddrs, opts: ConsumerOptions) -> Result<Self, ConsumerError> {
        Consumer::connect_with_tap(addr, opts, None)
    }

    pub fn connect_with_tap(
        addr: impl ToSocketAddrs,
        opts: ConsumerOptions,
        tap: Option<ReceiveTap>,
    ) -> Result<Self, ConsumerError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let socket = stream.try_clone()?;
        let mut c = Consumer::from_reader_with_tap(stream, opts, tap)?;
        c.socket = Some(socket);
        Ok(c)
    }

    pub fn from_reader<R: Read + Send + 'static>(reader: R, opts: ConsumerOptions) -> Result<Self, ConsumerError> {
        Consumer::from_reader_with_tap(reader, opts, None)
    }

    pub fn from_reader_with_tap<R: Read + Send + 'static>(
        reader: R,
        opts: ConsumerOptions,
        tap: Option<ReceiveTap>,
    ) -> Result<Self, ConsumerError> {
        if opts.staging_capacity == 0 {
            return Err(ConsumerError::ZeroStaging);
        }
        let cache = SharedCache::new(opts.cache_capacity)?;
        let stats = Arc::new(PumpStats::default());
        let done = Arc::new(AtomicBool::new(false));
        let (tx, rx) = bounded(opts.staging_capacity);

        let (s, d) = (stats.clone(), done.clone());
        let reception = thread::Builder::new().name("pdeforge-reception".into()).spawn(move || {
            let r = staging_pump(reader, &tx, &s);
            d.store(true, Ordering::Release);
            r
        })?;
        let (s, c) = (stats.clone(), cache.clone());
        let migrator =
            thread::Builder::new().name("pdeforge-migrator".into()).spawn(move || migrate(&rx, &c, &s, tap))?;
        Ok(Consumer { cache, stats, done, socket: None, reception: Some(reception), migrator: Some(migrator) })
    }

    pub fn cache(&self) -> &SharedCache<FrameSample> {
        &self.cache
    }

    pub fn stats(&self) -> PumpSnapshot {
        self.stats.snapshot()
    }

    /// True once the connection has ended, cleanly or not.
    pub fn is_disconnected(&self) -> bool {
        self.done.load(Ordering::Acquire)
    }

    /// Closes the connection and waits for both threads. Returns the reception outcome.
    pub fn close(mut self) -> (PumpSnapshot, Result<(), PumpError>) {
        if let Some(s) = &self.socket {
            let _ = s.shutdown(Shutdown::Both);
        }
        let result = self.reception.take().map(|h| h.join().expect("reception thread panicked")).unwrap_or(Ok(()));
        if let Some(h) = self.migrator.take() {
            let _ = h.join();
        }
        (self.stats.snapshot(), result)
    }
}

impl Drop for Consumer {
    fn drop(&mut self) {
        if let Some(s) = &self.socket {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}
