//! Streaming transport for generated frames: wire codec, producer-side
//! transmission queue and TCP dispatch, consumer-side staging and MFU cache.

pub mod codec;
pub mod consumer;
pub mod mfu;
pub mod queue;
pub mod server;

pub use codec::{decode, decode_from, encode, encode_into, write_message, ProtocolError};
pub use consumer::{
    staging_pump, Consumer, ConsumerError, ConsumerOptions, EpochCounter, PumpError, PumpSnapshot, PumpStats,
    ReceiveTap, SharedCache, DEFAULT_EPOCH_LENGTH, DEFAULT_STAGING_CAPACITY,
};
pub use mfu::{CacheError, Evicted, MfuCache, DEFAULT_CACHE_CAPACITY};
pub use queue::{
    transmission_queue, Message, QueueConsumer, QueueError, QueueProducer, QueueStats, DEFAULT_QUEUE_CAPACITY,
};
pub use server::{serve, ConsumerReport, ServeHandle, ServeOptions, ServeStats};
