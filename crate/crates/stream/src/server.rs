//! TCP fan-out: an acceptor thread, one dispatcher popping the transmission
//! queue round-robin, and one writer thread per consumer connection.

use std::io::{self, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Receiver, Sender, TrySendError};

use crate::queue::{Message, QueueConsumer, QueueError};

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    /// Messages buffered per connection before that consumer is skipped.
    pub connection_buffer: usize,
    pub poll: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { connection_buffer: 16, poll: Duration::from_millis(5) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsumerReport {
    pub id: u64,
    pub peer: Option<SocketAddr>,
    pub sent: u64,
    pub connected: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub accepted: u64,
    pub dispatched: u64,
    /// Messages fully written to some socket.
    pub served: u64,
    /// Messages dropped because their consumer went away.
    pub lost: u64,
    pub consumers: Vec<ConsumerReport>,
}

struct Slot {
    id: u64,
    tx: Sender<Message>,
    alive: Arc<AtomicBool>,
}

#[derive(Default)]
struct Shared {
    accepted: AtomicU64,
    dispatched: AtomicU64,
    served: AtomicU64,
    lost: AtomicU64,
    reports: Mutex<Vec<ConsumerReport>>,
}

pub struct ServeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
    dispatcher: Option<JoinHandle<()>>,
    writers: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

/// Starts serving `queue` on `listener`. Returns immediately.
pub fn serve(listener: TcpListener, queue: QueueConsumer, opts: ServeOptions) -> io::Result<ServeHandle> {
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let shared = Arc::new(Shared::default());
    let writers = Arc::new(Mutex::new(Vec::new()));
    let (new_tx, new_rx) = unbounded();

    let acceptor = {
        let (stop, shared, writers) = (stop.clone(), shared.clone(), writers.clone());
        thread::Builder::new()
            .name("pdeforge-acceptor".into())
            .spawn(move || accept_loop(listener, new_tx, opts, &stop, &shared, &writers))?
    };
    let dispatcher = {
        let (stop, shared) = (stop.clone(), shared.clone());
        thread::Builder::new()
            .name("pdeforge-dispatcher".into())
            .spawn(move || dispatch_loop(queue, new_rx, opts, &stop, &shared))?
    };
    Ok(ServeHandle { addr, stop, shared, acceptor: Some(acceptor), dispatcher: Some(dispatcher), writers })
}

fn accept_loop(
    listener: TcpListener,
    new_tx: Sender<Slot>,
    opts: ServeOptions,
    stop: &AtomicBool,
    shared: &Arc<Shared>,
    writers: &Mutex<Vec<JoinHandle<()>>>,
) {
    let mut next_id = 0;
    while !stop.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                let _ = stream.set_nodelay(true);
                let (tx, rx) = bounded(opts.connection_buffer.max(1));
                let alive = Arc::new(AtomicBool::new(true));
                shared.reports.lock().unwrap().push(ConsumerReport { id, peer: Some(peer), sent: 0, connected: true });
                shared.accepted.fetch_add(1, Ordering::Relaxed);
                if let Ok(probe) = stream.try_clone() {
                    let (a, s) = (alive.clone(), shared.clone());
                    let _ = thread::Builder::new()
                        .name(format!("pdeforge-monitor-{id}"))
                        .spawn(move || monitor(id, probe, &a, &s));
                }
                let (a, s) = (alive.clone(), shared.clone());
                let spawned = thread::Builder::new()
                    .name(format!("pdeforge-writer-{id}"))
                    .spawn(move || write_loop(id, stream, rx, &a, &s));
                match spawned {
                    Ok(h) => writers.lock().unwrap().push(h),
                    Err(_) => continue,
                }
                if new_tx.send(Slot { id, tx, alive }).is_err() {
                    return;
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(opts.poll),
            Err(_) => thread::sleep(opts.poll),
        }
    }
}

/// Consumers never send; end of file or an error on the read side means the peer is gone.
fn monitor(id: u64, mut stream: TcpStream, alive: &AtomicBool, shared: &Shared) {
    let mut buf = [0u8; 256];
    while let Ok(k) = stream.read(&mut buf) {
        if k == 0 {
            break;
        }
    }
    alive.store(false, Ordering::Release);
    mark_disconnected(id, shared);
}

fn mark_disconnected(id: u64, shared: &Shared) {
    if let Some(r) = shared.reports.lock().unwrap().iter_mut().find(|r| r.id == id) {
        r.connected = false;
    }
}

fn write_loop(id: u64, stream: TcpStream, rx: Receiver<Message>, alive: &AtomicBool, shared: &Shared) {
    let mut w = BufWriter::with_capacity(1 << 16, stream);
    let mark_sent = |n: u64| {
        shared.served.fetch_add(n, Ordering::Relaxed);
        if let Some(r) = shared.reports.lock().unwrap().iter_mut().find(|r| r.id == id) {
            r.sent += n;
        }
    };
    let mut failed = false;
    while let Ok(msg) = rx.recv() {
        let ok = w.write_all(&msg).is_ok() && (!rx.is_empty() || w.flush().is_ok());
        if !ok {
            failed = true;
            shared.lost.fetch_add(1, Ordering::Relaxed);
            break;
        }
        mark_sent(1);
    }
    if !failed {
        let _ = w.flush();
    }
    alive.store(false, Ordering::Release);
    let lost = rx.try_iter().count() as u64;
    shared.lost.fetch_add(lost, Ordering::Relaxed);
    mark_disconnected(id, shared);
    // also wakes the monitor
    let _ = w.get_ref().shutdown(std::net::Shutdown::Both);
}

fn dispatch_loop(queue: QueueConsumer, new_rx: Receiver<Slot>, opts: ServeOptions, stop: &AtomicBool, shared: &Shared) {
    let mut slots: Vec<Slot> = Vec::new();
    let mut cursor = 0usize;
    let mut held: Option<Message> = None;
    while !stop.load(Ordering::Acquire) {
        slots.extend(new_rx.try_iter());
        if held.is_none() {
            match queue.pop_timeout(opts.poll) {
                Ok(Some(m)) => held = Some(m),
                Ok(None) => continue,
                Err(QueueError::Closed) | Err(_) => break,
            }
        }
        slots.retain(|s| s.alive.load(Ordering::Acquire));
        if slots.is_empty() {
            thread::sleep(opts.poll);
            continue;
        }
        let len = slots.len();
        let start = cursor % len;
        let mut dead = Vec::new();
        for i in 0..len {
            let idx = (start + i) % len;
            match slots[idx].tx.try_send(held.take().unwrap()) {
                Ok(()) => {
                    shared.dispatched.fetch_add(1, Ordering::Relaxed);
                    cursor = idx + 1;
                    break;
                }
                Err(TrySendError::Full(m)) => held = Some(m),
                Err(TrySendError::Disconnected(m)) => {
                    held = Some(m);
                    dead.push(slots[idx].id);
                }
            }
        }
        if !dead.is_empty() {
            slots.retain(|s| !dead.contains(&s.id));
        }
        if held.is_some() {
            // every live consumer is saturated
            thread::sleep(Duration::from_micros(200));
        }
    }
    if held.is_some() {
        shared.lost.fetch_add(1, Ordering::Relaxed);
    }
    // dropping the slots lets writers flush their buffers and exit
}

impl ServeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> ServeStats {
        ServeStats {
            accepted: self.shared.accepted.load(Ordering::Relaxed),
            dispatched: self.shared.dispatched.load(Ordering::Relaxed),
            served: self.shared.served.load(Ordering::Relaxed),
            lost: self.shared.lost.load(Ordering::Relaxed),
            consumers: self.shared.reports.lock().unwrap().clone(),
        }
    }

    /// Connected consumers that have not failed.
    pub fn connected(&self) -> usize {
        self.shared.reports.lock().unwrap().iter().filter(|r| r.connected).count()
    }

    /// Stops accepting and dispatching, lets writers flush what they hold, and joins all threads.
    pub fn shutdown(mut self) -> ServeStats {
        self.stop.store(true, Ordering::Release);
        self.join_all();
        self.stats()
    }

    /// Waits for the dispatcher to finish on its own, i.e. after the queue
    /// producers are gone and the queue is drained, then shuts down.
    pub fn drain(mut self) -> ServeStats {
        if let Some(h) = self.dispatcher.take() {
            let _ = h.join();
        }
        self.stop.store(true, Ordering::Release);
        self.join_all();
        self.stats()
    }

    fn join_all(&mut self) {
        if let Some(h) = self.dispatcher.take() {
            let _ = h.join();
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        let handles: Vec<JoinHandle<()>> = self.writers.lock().unwrap().drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Drop for ServeHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.join_all();
    }
}
