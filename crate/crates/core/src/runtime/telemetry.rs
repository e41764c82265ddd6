//! Telemetry service: fans step records out to TCP clients and feeds their
//! control messages back to the step source.
//!
//! The step source runs on the caller's thread. Each client gets a writer
//! thread fed through a channel and a reader thread that forwards decoded
//! control messages to the caller, where they are applied between steps.
//! A client that connects late first receives the last `backlog` records.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::protocol::{decode_message, encode_frame, read_frame, Message};
use super::record::{StepRecord, TraceHeader};
use super::ControlLoop;
use crate::dine::{
    minimal_sufficient_explanation, DineThresholds, MinimalSufficientExplanation, ThresholdKind,
};
use crate::{Error, Result};

/// Something that produces step records and accepts threshold changes.
pub trait StepSource {
    fn header(&self) -> TraceHeader;
    fn next_record(&mut self) -> Result<Option<StepRecord>>;
    /// Applies from the next emitted record; returns that record's step.
    fn set_threshold(&mut self, kind: ThresholdKind, value: f64) -> Result<u64>;
    fn msx(&self, step: u64) -> Result<MinimalSufficientExplanation>;
}

impl StepSource for ControlLoop {
    fn header(&self) -> TraceHeader {
        ControlLoop::header(self).clone()
    }

    fn next_record(&mut self) -> Result<Option<StepRecord>> {
        self.step()
    }

    fn set_threshold(&mut self, kind: ThresholdKind, value: f64) -> Result<u64> {
        ControlLoop::set_threshold(self, kind, value)
    }

    fn msx(&self, step: u64) -> Result<MinimalSufficientExplanation> {
        ControlLoop::msx(self, step)
    }
}

/// Plays back a recorded trace. Records are emitted unchanged until a
/// threshold is changed; from then on their DINEs are re-derived.
pub struct ReplaySource {
    header: TraceHeader,
    records: Vec<StepRecord>,
    pos: usize,
    overridden: Option<DineThresholds>,
}

impl ReplaySource {
    pub fn new(header: TraceHeader, records: Vec<StepRecord>) -> Self {
        ReplaySource {
            header,
            records,
            pos: 0,
            overridden: None,
        }
    }

    fn current_thresholds(&self) -> DineThresholds {
        self.overridden
            .or_else(|| self.records.get(self.pos).map(|r| r.thresholds))
            .or_else(|| self.records.last().map(|r| r.thresholds))
            .unwrap_or_default()
    }

    fn next_step_index(&self) -> u64 {
        match self.records.get(self.pos) {
            Some(r) => r.step,
            None => self.records.last().map_or(0, |r| r.step + 1),
        }
    }
}

impl StepSource for ReplaySource {
    fn header(&self) -> TraceHeader {
        self.header.clone()
    }

    fn next_record(&mut self) -> Result<Option<StepRecord>> {
        let Some(rec) = self.records.get(self.pos) else {
            return Ok(None);
        };
        self.pos += 1;
        Ok(Some(match self.overridden {
            Some(t) => rec.with_thresholds(t),
            None => rec.clone(),
        }))
    }

    fn set_threshold(&mut self, kind: ThresholdKind, value: f64) -> Result<u64> {
        let mut t = self.current_thresholds();
        t.set(kind, value)?;
        self.overridden = Some(t);
        Ok(self.next_step_index())
    }

    fn msx(&self, step: u64) -> Result<MinimalSufficientExplanation> {
        let rec = self.records[..self.pos]
            .iter()
            .find(|r| r.step == step)
            .ok_or_else(|| Error::Data(format!("no record for step {step}")))?;
        minimal_sufficient_explanation(&rec.q, rec.action)
    }
}

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub backlog: usize,
    /// Block before the first step until this many clients have connected.
    pub wait_for_clients: usize,
    /// Delay between steps, to make a live view watchable.
    pub step_interval: Option<Duration>,
    /// After the source is exhausted, keep answering control messages until
    /// every client has disconnected.
    pub linger: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            backlog: 500,
            wait_for_clients: 0,
            step_interval: None,
            linger: false,
        }
    }
}

type Frame = Arc<Vec<u8>>;

enum Outgoing {
    Frame(Frame),
    Close,
}

enum Event {
    Connected,
    Disconnected(u64),
    Control { client: u64, msg: Message },
    Malformed { client: u64, reason: String },
}

struct Hub {
    header: TraceHeader,
    backlog: VecDeque<Frame>,
    capacity: usize,
    clients: BTreeMap<u64, Sender<Outgoing>>,
    next_id: u64,
    writers: Vec<JoinHandle<()>>,
}

fn lock(hub: &Mutex<Hub>) -> MutexGuard<'_, Hub> {
    hub.lock().unwrap_or_else(|p| p.into_inner())
}

impl Hub {
    fn publish(&mut self, frame: Frame) {
        if self.capacity > 0 {
            if self.backlog.len() == self.capacity {
                self.backlog.pop_front();
            }
            self.backlog.push_back(frame.clone());
        }
        // a client whose writer has gone away is dropped
        self.clients
            .retain(|_, tx| tx.send(Outgoing::Frame(frame.clone())).is_ok());
    }

    fn reply(&mut self, client: u64, msg: &Message) {
        if let (Some(tx), Ok(frame)) = (self.clients.get(&client), encode_frame(msg)) {
            if tx.send(Outgoing::Frame(Arc::new(frame))).is_err() {
                self.clients.remove(&client);
            }
        }
    }
}

fn attach(hub: &Arc<Mutex<Hub>>, stream: TcpStream, events: &Sender<Event>) -> Result<()> {
    let reader = stream.try_clone()?;
    let (tx, rx) = mpsc::channel::<Outgoing>();
    let id = {
        let mut h = lock(hub);
        let id = h.next_id;
        h.next_id += 1;
        // hello and backlog go out before any live record: both are queued
        // while holding the lock that publishing also takes
        let hello = encode_frame(&Message::hello(&h.header, h.backlog.len()))?;
        let _ = tx.send(Outgoing::Frame(Arc::new(hello)));
        for f in &h.backlog {
            let _ = tx.send(Outgoing::Frame(f.clone()));
        }
        h.clients.insert(id, tx);
        let writer = thread::spawn(move || write_loop(stream, rx));
        h.writers.push(writer);
        id
    };
    let _ = events.send(Event::Connected);
    let events = events.clone();
    thread::spawn(move || read_loop(id, reader, events));
    Ok(())
}

fn write_loop(mut stream: TcpStream, rx: Receiver<Outgoing>) {
    for out in rx {
        match out {
            Outgoing::Frame(f) => {
                if stream.write_all(&f).and_then(|_| stream.flush()).is_err() {
                    break;
                }
            }
            Outgoing::Close => break,
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

fn read_loop(id: u64, mut stream: TcpStream, events: Sender<Event>) {
    while let Ok(Some(body)) = read_frame(&mut stream) {
        let ev = match decode_message(&body) {
            Ok(msg) if msg.is_control() => Event::Control { client: id, msg },
            Ok(_) => Event::Malformed {
                client: id,
                reason: "only set_threshold, msx_request, pause and resume are accepted".into(),
            },
            Err(e) => Event::Malformed {
                client: id,
                reason: e.to_string(),
            },
        };
        if events.send(ev).is_err() {
            return;
        }
    }
    let _ = events.send(Event::Disconnected(id));
}

struct Session<'a, S: StepSource> {
    source: &'a mut S,
    hub: Arc<Mutex<Hub>>,
    events: Receiver<Event>,
    connected: usize,
    paused: bool,
}

impl<S: StepSource> Session<'_, S> {
    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Connected => self.connected += 1,
            Event::Disconnected(id) => {
                self.connected = self.connected.saturating_sub(1);
                lock(&self.hub).clients.remove(&id);
                // nobody left to resume a paused loop
                if self.connected == 0 {
                    self.paused = false;
                }
            }
            Event::Malformed { client, reason } => {
                lock(&self.hub).reply(client, &Message::error(reason))
            }
            Event::Control { client, msg } => {
                let reply = match msg {
                    Message::SetThreshold { kind, value } => {
                        match self.source.set_threshold(kind, value) {
                            Ok(effective_step) => Some(Message::ThresholdAck {
                                kind,
                                value,
                                effective_step,
                            }),
                            Err(e) => Some(Message::error(e.to_string())),
                        }
                    }
                    Message::MsxRequest { step } => Some(match self.source.msx(step) {
                        Ok(explanation) => Message::MsxReply { step, explanation },
                        Err(e) => Message::error(e.to_string()),
                    }),
                    Message::Pause => {
                        self.paused = true;
                        None
                    }
                    Message::Resume => {
                        self.paused = false;
                        None
                    }
                    _ => None,
                };
                if let Some(r) = reply {
                    lock(&self.hub).reply(client, &r);
                }
            }
        }
    }

    fn drain(&mut self) {
        while let Ok(ev) = self.events.try_recv() {
            self.handle(ev);
        }
    }

    fn wait(&mut self) {
        match self.events.recv_timeout(Duration::from_millis(50)) {
            Ok(ev) => self.handle(ev),
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {}
        }
    }
}

/// Serves `source` to clients of `listener` until the source is exhausted
/// (and, with `linger`, until the last client leaves). Every record is also
/// passed to `sink` before it is published. Returns the number of records.
pub fn serve<S: StepSource>(
    source: &mut S,
    listener: TcpListener,
    opts: &ServeOptions,
    mut sink: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<u64> {
    let hub = Arc::new(Mutex::new(Hub {
        header: source.header(),
        backlog: VecDeque::with_capacity(opts.backlog),
        capacity: opts.backlog,
        clients: BTreeMap::new(),
        next_id: 0,
        writers: Vec::new(),
    }));
    let (ev_tx, ev_rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));

    listener.set_nonblocking(true)?;
    let acceptor = {
        let hub = hub.clone();
        let stop = stop.clone();
        thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        if stream.set_nonblocking(false).is_ok() {
                            let _ = attach(&hub, stream, &ev_tx);
                        }
                    }
                    Err(_) => thread::sleep(Duration::from_millis(10)),
                }
            }
        })
    };

    let mut session = Session {
        source,
        hub: hub.clone(),
        events: ev_rx,
        connected: 0,
        paused: false,
    };
    let result = (|| -> Result<u64> {
        while session.connected < opts.wait_for_clients {
            session.wait();
        }
        let mut emitted = 0;
        loop {
            session.drain();
            while session.paused {
                session.wait();
            }
            let Some(rec) = session.source.next_record()? else {
                break;
            };
            sink(&rec)?;
            let frame = encode_frame(&Message::StepRecord {
                record: Box::new(rec),
            })?;
            lock(&hub).publish(Arc::new(frame));
            emitted += 1;
            if let Some(d) = opts.step_interval {
                thread::sleep(d);
            }
        }
        if opts.linger {
            while session.connected > 0 {
                session.wait();
            }
        }
        session.drain();
        Ok(emitted)
    })();

    stop.store(true, Ordering::Relaxed);
    let _ = acceptor.join();
    let writers = {
        let mut h = lock(&hub);
        for tx in h.clients.values() {
            let _ = tx.send(Outgoing::Close);
        }
        h.clients.clear();
        std::mem::take(&mut h.writers)
    };
    for w in writers {
        let _ = w.join();
    }
    result
}
