//! Bounded FIFO between the generation loop and the network dispatcher.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, SendTimeoutError, Sender, TrySendError};
use pdeforge::generation::{FrameSample, FrameSink, SinkClosed};

use crate::codec::{encode, ProtocolError};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

/// An encoded message ready for the wire.
pub type Message = Arc<Vec<u8>>;

#[derive(Debug, Default)]
pub struct QueueCounters {
    pushed: AtomicU64,
    blocked: AtomicU64,
    popped: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueStats {
    pub pushed: u64,
    /// Pushes that found the queue full and had to wait.
    pub blocked: u64,
    pub popped: u64,
}

/// Producer half. Cloneable; pushes block while the queue is full.
#[derive(Clone)]
pub struct QueueProducer {
    tx: Sender<Message>,
    counters: Arc<QueueCounters>,
}

/// Consumer half, owned by the dispatcher.
#[derive(Clone)]
pub struct QueueConsumer {
    rx: Receiver<Message>,
    counters: Arc<QueueCounters>,
}

pub fn transmission_queue(capacity: usize) -> Result<(QueueProducer, QueueConsumer), QueueError> {
    if capacity == 0 {
        return Err(QueueError::ZeroCapacity);
    }
    let (tx, rx) = bounded(capacity);
    let counters = Arc::new(QueueCounters::default());
    Ok((QueueProducer { tx, counters: counters.clone() }, QueueConsumer { rx, counters }))
}

#[derive(Debug, thiserror::Error)]
pub enum QueueError {
    #[error("queue capacity must be positive")]
    ZeroCapacity,
    #[error("queue closed")]
    Closed,
    #[error(transparent)]
    Encode(#[from] ProtocolError),
}

fn snapshot(c: &QueueCounters) -> QueueStats {
    QueueStats {
        pushed: c.pushed.load(Ordering::Relaxed),
        blocked: c.blocked.load(Ordering::Relaxed),
        popped: c.popped.load(Ordering::Relaxed),
    }
}

impl QueueProducer {
    pub fn push_message(&self, msg: Message) -> Result<(), QueueError> {
        match self.tx.try_send(msg) {
            Ok(()) => {}
            Err(TrySendError::Full(msg)) => {
                self.counters.blocked.fetch_add(1, Ordering::Relaxed);
                self.tx.send(msg).map_err(|_| QueueError::Closed)?;
            }
            Err(TrySendError::Disconnected(_)) => return Err(QueueError::Closed),
        }
        self.counters.pushed.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Like [`QueueProducer::push_message`] but gives the message back after `timeout`.
    pub fn push_message_timeout(&self, msg: Message, timeout: Duration) -> Result<Result<(), Message>, QueueError> {
        let msg = match self.tx.try_send(msg) {
            Ok(()) => {
                self.counters.pushed.fetch_add(1, Ordering::Relaxed);
                return Ok(Ok(()));
            }
            Err(TrySendError::Full(msg)) => msg,
            Err(TrySendError::Disconnected(_)) => return Err(QueueError::Closed),
        };
        self.counters.blocked.fetch_add(1, Ordering::Relaxed);
        match self.tx.send_timeout(msg, timeout) {
            Ok(()) => {
                self.counters.pushed.fetch_add(1, Ordering::Relaxed);
                Ok(Ok(()))
            }
            Err(SendTimeoutError::Timeout(msg)) => Ok(Err(msg)),
            Err(SendTimeoutError::Disconnected(_)) => Err(QueueError::Closed),
        }
    }

    pub fn push(&self, sample: &FrameSample) -> Result<(), QueueError> {
        self.push_message(Arc::new(encode(sample)?))
    }

    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.tx.capacity().unwrap_or(0)
    }

    pub fn stats(&self) -> QueueStats {
        snapshot(&self.counters)
    }
}

impl FrameSink for QueueProducer {
    fn push(&mut self, sample: FrameSample) -> Result<(), SinkClosed> {
        QueueProducer::push(self, &sample).map_err(|_| SinkClosed)
    }
}

impl QueueConsumer {
    /// `Ok(None)` on timeout, `Err` once every producer is gone and the queue drained.
    pub fn pop_timeout(&self, timeout: Duration) -> Result<Option<Message>, QueueError> {
        match self.rx.recv_timeout(timeout) {
            Ok(m) => {
                self.counters.popped.fetch_add(1, Ordering::Relaxed);
                Ok(Some(m))
            }
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(QueueError::Closed),
        }
    }

    pub fn pop(&self) -> Option<Message> {
        let m = self.rx.recv().ok()?;
        self.counters.popped.fetch_add(1, Ordering::Relaxed);
        Some(m)
    }

    pub fn len(&self) -> usize {
        self.rx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rx.is_empty()
    }

    pub fn stats(&self) -> QueueStats {
        snapshot(&self.counters)
    }
}
