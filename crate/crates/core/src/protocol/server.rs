//! TCP front door: many clients, one engine thread.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::{encode, EventKind, Message, Session};
use crate::engine::{ClientId, Engine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServeOptions {
    /// Pace frames by the wall clock instead of running flat out.
    pub realtime: bool,
}

enum Inbox {
    Connect(ClientId, Sender<String>),
    Line(ClientId, String),
    Disconnect(ClientId),
    Shutdown,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    inbox: Sender<Inbox>,
    acceptor: Option<JoinHandle<()>>,
    engine: Option<JoinHandle<Engine>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, answers every command already received, and returns the engine.
    pub fn shutdown(mut self) -> Engine {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.inbox.send(Inbox::Shutdown);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        self.engine
            .take()
            .expect("engine joined once")
            .join()
            .expect("engine thread panicked")
    }

    /// Blocks until the engine thread exits (it runs until shutdown).
    pub fn wait(mut self) -> Engine {
        self.engine
            .take()
            .expect("engine joined once")
            .join()
            .expect("engine thread panicked")
    }
}

/// Binds `addr` and starts serving `engine`.
pub fn serve(addr: impl ToSocketAddrs, engine: Engine, options: ServeOptions) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let acceptor = {
        let stop = stop.clone();
        let tx = tx.clone();
        thread::spawn(move || accept_loop(listener, stop, tx))
    };
    let engine = thread::spawn(move || engine_loop(engine, rx, options));
    Ok(ServerHandle {
        addr: local,
        stop,
        inbox: tx,
        acceptor: Some(acceptor),
        engine: Some(engine),
    })
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, inbox: Sender<Inbox>) {
    let mut next: ClientId = 0;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                next += 1;
                if spawn_client(next, stream, inbox.clone()).is_err() {
                    continue;
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn spawn_client(id: ClientId, stream: TcpStream, inbox: Sender<Inbox>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    let _ = stream.set_nodelay(true);
    let mut writer = stream.try_clone()?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    if inbox.send(Inbox::Connect(id, out_tx)).is_err() {
        return Ok(());
    }
    thread::spawn(move || {
        for line in out_rx {
            if writer.write_all(line.as_bytes()).is_err() || writer.write_all(b"\n").is_err() {
                break;
            }
        }
        let _ = writer.flush();
        let _ = writer.shutdown(std::net::Shutdown::Write);
    });
    thread::spawn(move || {
        let reader = BufReader::new(stream);
        for line in reader.split(b'\n') {
            let Ok(bytes) = line else { break };
            let text = String::from_utf8_lossy(&bytes).into_owned();
            if text.trim().is_empty() {
                continue;
            }
            if inbox.send(Inbox::Line(id, text)).is_err() {
                return;
            }
        }
        let _ = inbox.send(Inbox::Disconnect(id));
    });
    Ok(())
}

struct Client {
    session: Session,
    out: Sender<String>,
}

fn engine_loop(mut engine: Engine, inbox: Receiver<Inbox>, options: ServeOptions) -> Engine {
    let mut clients: BTreeMap<ClientId, Client> = BTreeMap::new();
    let start = Instant::now();
    let mut shutting_down = false;
    loop {
        // commands first, so an ack always precedes the events it causes
        let wait = match engine.next_frame_time() {
            _ if shutting_down => Duration::ZERO,
            None => Duration::from_millis(50),
            Some(t) if options.realtime => Duration::from_secs_f64(t).saturating_sub(start.elapsed()),
            Some(_) => Duration::ZERO,
        };
        let mut first = true;
        loop {
            let msg = if first {
                first = false;
                match inbox.recv_timeout(wait) {
                    Ok(m) => m,
                    Err(RecvTimeoutError::Timeout) => break,
                    Err(RecvTimeoutError::Disconnected) => {
                        shutting_down = true;
                        break;
                    }
                }
            } else {
                match inbox.try_recv() {
                    Ok(m) => m,
                    Err(_) => break,
                }
            };
            match msg {
                Inbox::Connect(id, out) => {
                    clients.insert(
                        id,
                        Client {
                            session: Session::new(id),
                            out,
                        },
                    );
                }
                Inbox::Line(id, line) => {
                    if let Some(c) = clients.get_mut(&id) {
                        let ack = c.session.handle_line(&mut engine, &line);
                        let _ = c.out.send(encode(&Message::Ack(ack)));
                    }
                }
                Inbox::Disconnect(id) => {
                    clients.remove(&id);
                    engine.drop_client(id);
                }
                Inbox::Shutdown => shutting_down = true,
            }
        }
        if shutting_down {
            return engine;
        }
        if let Some(events) = engine.step() {
            for e in events {
                let line = encode(&Message::Event(e.clone()));
                for (id, c) in &clients {
                    if e.kind == EventKind::Sound && !engine.is_subscribed(*id) {
                        continue;
                    }
                    let _ = c.out.send(line.clone());
                }
            }
        }
    }
}
