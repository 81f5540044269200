use std::collections::HashSet;
use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use thiserror::Error;

use super::backend::BackendRegistry;
use crate::protocol::{read_frame, write_frame, FrameError, PerceptionRequest, PerceptionResponse};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: io::Error },
}

/// A running gateway. Dropping the handle stops it.
#[derive(Debug)]
pub struct GatewayHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
    accept_thread: Option<JoinHandle<()>>,
}

impl GatewayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        for conn in self.connections.lock().unwrap().drain(..) {
            let _ = conn.shutdown(Shutdown::Both);
        }
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` and serves framed requests, one thread per connection.
pub fn serve(addr: &str, registry: Arc<BackendRegistry>) -> Result<GatewayHandle, GatewayError> {
    let listener = TcpListener::bind(addr).map_err(|source| GatewayError::BindFailure {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr().map_err(|source| GatewayError::BindFailure {
        addr: addr.to_string(),
        source,
    })?;
    let stop = Arc::new(AtomicBool::new(false));
    let connections = Arc::new(Mutex::new(Vec::new()));
    let accept_thread = {
        let stop = stop.clone();
        let connections = connections.clone();
        std::thread::Builder::new()
            .name("gateway-accept".into())
            .spawn(move || accept_loop(listener, registry, stop, connections))
            .expect("spawn accept thread")
    };
    log::info!("gateway listening on {local}");
    Ok(GatewayHandle {
        addr: local,
        stop,
        connections,
        accept_thread: Some(accept_thread),
    })
}

fn accept_loop(
    listener: TcpListener,
    registry: Arc<BackendRegistry>,
    stop: Arc<AtomicBool>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        if let Ok(clone) = stream.try_clone() {
            let mut conns = connections.lock().unwrap();
            conns.retain(|c| c.peer_addr().is_ok());
            conns.push(clone);
        }
        let registry = registry.clone();
        let spawned = std::thread::Builder::new()
            .name("gateway-conn".into())
            .spawn(move || {
                if let Err(e) = handle_connection(stream, &registry) {
                    log::debug!("connection ended: {e}");
                }
            });
        if let Err(e) = spawned {
            log::warn!("cannot spawn connection thread: {e}");
        }
    }
}

fn send(stream: &mut TcpStream, resp: &PerceptionResponse) -> Result<(), FrameError> {
    let text = serde_json::to_string(resp).expect("response serializes");
    write_frame(stream, &text)
}

/// Serves frames until the peer closes. A malformed frame gets a
/// `bad_frame` error response and closes the connection.
fn handle_connection(mut stream: TcpStream, registry: &BackendRegistry) -> Result<(), FrameError> {
    let _ = stream.set_nodelay(true);
    let mut seen_ids: HashSet<String> = HashSet::new();
    loop {
        let text = match read_frame(&mut stream) {
            Ok(Some(t)) => t,
            Ok(None) => return Ok(()),
            Err(FrameError::Io(e)) => return Err(FrameError::Io(e)),
            Err(e) => {
                let _ = send(&mut stream, &PerceptionResponse::error("", "bad_frame", e.to_string()));
                let _ = stream.shutdown(Shutdown::Both);
                return Err(e);
            }
        };
        let request: PerceptionRequest = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(e) => {
                let _ = send(
                    &mut stream,
                    &PerceptionResponse::error("", "bad_frame", format!("malformed request: {e}")),
                );
                let _ = stream.shutdown(Shutdown::Both);
                return Ok(());
            }
        };
        let response = if !request.id.is_empty() && !seen_ids.insert(request.id.clone()) {
            PerceptionResponse::error(
                request.id.clone(),
                "duplicate_id",
                "request id already used on this connection",
            )
        } else {
            registry.dispatch(&request)
        };
        send(&mut stream, &response)?;
    }
}
