//! TCP transport. Workers connect to the master, introduce themselves with a
//! 4-byte little-endian worker id and then answer one broadcast per round
//! over the same connection. The master closes the connections when the run
//! ends; workers treat EOF at a frame boundary as shutdown.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use twoway_core::cluster::{
    decode, encode, frame_len, header_len, worker_step, BroadcastMsg, GradientMsg, Message, Transport, PREFIX_LEN,
};
use twoway_core::{Error, Result, Shard};

fn io_err(context: &str, e: std::io::Error) -> Error {
    Error::Protocol(format!("{context}: {e}"))
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

/// Reads one complete frame, or `None` on a clean EOF before its first byte.
pub fn read_frame(stream: &mut impl Read) -> std::io::Result<Option<Vec<u8>>> {
    let mut buf = vec![0u8; PREFIX_LEN];
    let mut got = 0;
    while got < PREFIX_LEN {
        match stream.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ErrorKind::UnexpectedEof.into()),
            Ok(k) => got += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let invalid = |e: Error| std::io::Error::new(ErrorKind::InvalidData, e.to_string());
    let header = header_len(&buf).map_err(invalid)?;
    buf.resize(header, 0);
    stream.read_exact(&mut buf[PREFIX_LEN..])?;
    let total = frame_len(&buf).map_err(invalid)?;
    buf.resize(total, 0);
    stream.read_exact(&mut buf[header..])?;
    Ok(Some(buf))
}

/// Master side: one persistent connection per worker, keyed by worker id.
pub struct TcpMaster {
    conns: BTreeMap<u32, TcpStream>,
    reply_timeout: Duration,
}

impl TcpMaster {
    /// Accepts connections on `listener` until workers `1..=workers` have all
    /// said hello, or `accept_timeout` elapses.
    pub fn accept(
        listener: &TcpListener,
        workers: usize,
        accept_timeout: Duration,
        reply_timeout: Duration,
    ) -> Result<Self> {
        listener
            .set_nonblocking(true)
            .map_err(|e| io_err("configuring listener", e))?;
        let deadline = Instant::now() + accept_timeout;
        let mut conns = BTreeMap::new();
        while conns.len() < workers {
            match listener.accept() {
                Ok((mut stream, peer)) => {
                    stream
                        .set_nonblocking(false)
                        .and_then(|_| stream.set_nodelay(true))
                        .and_then(|_| stream.set_read_timeout(Some(accept_timeout)))
                        .map_err(|e| io_err("configuring worker socket", e))?;
                    let mut hello = [0u8; 4];
                    stream
                        .read_exact(&mut hello)
                        .map_err(|e| io_err(&format!("reading hello from {peer}"), e))?;
                    let id = u32::from_le_bytes(hello);
                    if id == 0 || id as usize > workers {
                        return Err(Error::Protocol(format!("{peer} announced unknown worker id {id}")));
                    }
                    if conns.insert(id, stream).is_some() {
                        return Err(Error::Protocol(format!("worker {id} connected twice")));
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing: Vec<u32> = (1..=workers as u32).filter(|id| !conns.contains_key(id)).collect();
                        return Err(Error::Protocol(format!(
                            "timed out waiting for workers {missing:?} to connect"
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(io_err("accepting worker", e)),
            }
        }
        for stream in conns.values() {
            stream
                .set_read_timeout(Some(reply_timeout))
                .map_err(|e| io_err("configuring worker socket", e))?;
        }
        Ok(TcpMaster { conns, reply_timeout })
    }

    pub fn reply_timeout(&self) -> Duration {
        self.reply_timeout
    }
}

impl Transport for TcpMaster {
    fn worker_count(&self) -> usize {
        self.conns.len()
    }

    fn exchange(&mut self, broadcast: &BroadcastMsg) -> Result<Vec<GradientMsg>> {
        let frame = encode(&Message::Broadcast(broadcast.clone()))?;
        for (id, stream) in &mut self.conns {
            stream
                .write_all(&frame)
                .map_err(|e| io_err(&format!("sending to worker {id}"), e))?;
        }
        let mut replies = Vec::with_capacity(self.conns.len());
        let mut missing = Vec::new();
        for (id, stream) in &mut self.conns {
            match read_frame(stream) {
                Ok(Some(bytes)) => match decode(&bytes)? {
                    Message::Gradient(g) => replies.push(g),
                    Message::Broadcast(_) => return Err(Error::Protocol(format!("worker {id} sent a broadcast"))),
                },
                Ok(None) => return Err(Error::Protocol(format!("worker {id} closed its connection"))),
                Err(e) if is_timeout(&e) => missing.push(*id),
                Err(e) => return Err(io_err(&format!("reading from worker {id}"), e)),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Protocol(format!(
                "timed out waiting for workers {missing:?} in round {}",
                broadcast.round
            )));
        }
        Ok(replies)
    }
}

/// Connects to the master, retrying until `connect_timeout`, and sends the hello.
pub fn connect_worker(addr: &str, worker_id: u32, connect_timeout: Duration) -> Result<TcpStream> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(|e| io_err(&format!("resolving {addr}"), e))?
        .collect();
    let deadline = Instant::now() + connect_timeout;
    loop {
        let attempt = addrs.iter().find_map(|a| TcpStream::connect(a).ok());
        if let Some(mut stream) = attempt {
            stream.set_nodelay(true).map_err(|e| io_err("configuring socket", e))?;
            stream
                .write_all(&worker_id.to_le_bytes())
                .map_err(|e| io_err("sending hello", e))?;
            return Ok(stream);
        }
        if Instant::now() >= deadline {
            return Err(Error::Protocol(format!("could not connect to master at {addr}")));
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

/// Worker loop: answer broadcasts until the master hangs up. Returns the
/// number of rounds served.
pub fn serve(stream: &mut TcpStream, shard: &Shard, worker_id: u32) -> Result<usize> {
    let mut rounds = 0;
    loop {
        let bytes = match read_frame(stream) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(rounds),
            Err(e) => return Err(io_err("reading broadcast", e).in_round("cluster", rounds)),
        };
        let Message::Broadcast(msg) = decode(&bytes).map_err(|e| e.in_round("cluster", rounds))? else {
            return Err(Error::Protocol("worker received a gradient message".into()).in_round("cluster", rounds));
        };
        let round = msg.round as usize;
        let reply = worker_step(shard, &msg, worker_id).map_err(|e| e.in_round("cluster", round))?;
        stream
            .write_all(&encode(&Message::Gradient(reply))?)
            .map_err(|e| io_err("sending gradient", e).in_round("cluster", round))?;
        rounds += 1;
    }
}

pub fn run_worker(addr: &str, worker_id: u32, shard: &Shard, connect_timeout: Duration) -> Result<usize> {
    let mut stream = connect_worker(addr, worker_id, connect_timeout)?;
    serve(&mut stream, shard, worker_id)
}
