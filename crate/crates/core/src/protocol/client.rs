use std::io::{self, Read};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::framing::{read_frame, write_frame, FrameError};
use super::message::{HealthResult, PerceptionRequest, PerceptionResponse, Status};

#[derive(Debug, Error)]
pub enum CallError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

enum AttemptError {
    /// Refused, reset or closed: worth one reconnect.
    Transient(String),
    Final(CallError),
}

fn classify_io(e: io::Error) -> AttemptError {
    use io::ErrorKind::*;
    match e.kind() {
        TimedOut | WouldBlock => AttemptError::Final(CallError::Timeout),
        ConnectionRefused | ConnectionReset | ConnectionAborted | BrokenPipe | UnexpectedEof
        | NotConnected => AttemptError::Transient(e.to_string()),
        _ => AttemptError::Final(CallError::ConnectionFailed(e.to_string())),
    }
}

/// Applies the time left before `deadline` to every read on the socket.
struct DeadlineReader<'a> {
    stream: &'a TcpStream,
    deadline: Instant,
}

impl Read for DeadlineReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let left = self.deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(io::ErrorKind::TimedOut.into());
        }
        self.stream.set_read_timeout(Some(left))?;
        let mut s = self.stream;
        s.read(buf)
    }
}

/// Client side of the framed request/response protocol.
///
/// One request is in flight at a time. A refused or reset connection gets a
/// single reconnect-and-retry; a timeout is reported immediately.
#[derive(Debug)]
pub struct GatewayClient {
    addr: String,
    stream: Option<TcpStream>,
    seq: u64,
}

impl GatewayClient {
    /// Creates a client that connects lazily on the first call.
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            stream: None,
            seq: 0,
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Fresh request id, unique for this client.
    pub fn next_id(&mut self) -> String {
        self.seq += 1;
        format!("req-{}", self.seq)
    }

    pub fn disconnect(&mut self) {
        self.stream = None;
    }

    fn connect(&self, deadline: Instant) -> Result<TcpStream, AttemptError> {
        let addrs: Vec<SocketAddr> = self
            .addr
            .to_socket_addrs()
            .map_err(|e| AttemptError::Final(CallError::ConnectionFailed(e.to_string())))?
            .collect();
        let mut last = AttemptError::Final(CallError::ConnectionFailed(format!(
            "no address for {}",
            self.addr
        )));
        for addr in addrs {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(AttemptError::Final(CallError::Timeout));
            }
            match TcpStream::connect_timeout(&addr, left) {
                Ok(s) => {
                    let _ = s.set_nodelay(true);
                    return Ok(s);
                }
                Err(e) => last = classify_io(e),
            }
        }
        Err(last)
    }

    fn attempt(
        &mut self,
        payload: &str,
        id: &str,
        deadline: Instant,
    ) -> Result<PerceptionResponse, AttemptError> {
        if self.stream.is_none() {
            self.stream = Some(self.connect(deadline)?);
        }
        let stream = self.stream.as_ref().expect("connected above");
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(AttemptError::Final(CallError::Timeout));
        }
        stream
            .set_write_timeout(Some(left))
            .map_err(classify_io)?;
        let mut w = stream;
        write_frame(&mut w, payload).map_err(|e| match e {
            FrameError::Io(io) => classify_io(io),
            other => AttemptError::Final(CallError::ProtocolViolation(other.to_string())),
        })?;
        let mut reader = DeadlineReader { stream, deadline };
        let text = match read_frame(&mut reader) {
            Ok(Some(t)) => t,
            Ok(None) | Err(FrameError::Eof) => {
                return Err(AttemptError::Transient("connection closed by peer".into()))
            }
            Err(FrameError::Io(io)) => return Err(classify_io(io)),
            Err(e) => return Err(AttemptError::Final(CallError::ProtocolViolation(e.to_string()))),
        };
        let resp: PerceptionResponse = serde_json::from_str(&text).map_err(|e| {
            AttemptError::Final(CallError::ProtocolViolation(format!("malformed response: {e}")))
        })?;
        if resp.id != id {
            return Err(AttemptError::Final(CallError::ProtocolViolation(format!(
                "response id {:?} does not match request id {:?}",
                resp.id, id
            ))));
        }
        if !resp.is_well_formed() {
            return Err(AttemptError::Final(CallError::ProtocolViolation(
                "response must carry exactly one of result/error".into(),
            )));
        }
        Ok(resp)
    }

    /// Sends `request` and waits up to `timeout` for the matching response.
    pub fn call(
        &mut self,
        request: &PerceptionRequest,
        timeout: Duration,
    ) -> Result<PerceptionResponse, CallError> {
        let payload = serde_json::to_string(request)
            .map_err(|e| CallError::ProtocolViolation(e.to_string()))?;
        let deadline = Instant::now() + timeout;
        let first = self.attempt(&payload, &request.id, deadline);
        let outcome = match first {
            Err(AttemptError::Transient(_)) => {
                self.stream = None;
                self.attempt(&payload, &request.id, deadline)
            }
            other => other,
        };
        outcome.map_err(|e| {
            // a connection in an unknown state must not serve the next call
            self.stream = None;
            match e {
                AttemptError::Transient(msg) => CallError::ConnectionFailed(msg),
                AttemptError::Final(err) => err,
            }
        })
    }

    pub fn health(&mut self, timeout: Duration) -> Result<HealthResult, CallError> {
        let id = self.next_id();
        let resp = self.call(&PerceptionRequest::health(id), timeout)?;
        match (resp.status, resp.result) {
            (Status::Ok, Some(v)) => serde_json::from_value(v)
                .map_err(|e| CallError::ProtocolViolation(format!("bad health result: {e}"))),
            _ => Err(CallError::ProtocolViolation("health check returned an error".into())),
        }
    }
}
