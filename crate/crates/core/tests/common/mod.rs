#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use iris_core::gateway::{image_digest, FixtureSet};
use iris_core::protocol::PerceptionRequest;
use serde_json::json;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_set() -> FixtureSet {
    FixtureSet::load(&fixtures_dir().join("fixtures.json")).unwrap()
}

pub type Handler = dyn Fn(&str, &str, &[u8]) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server: one request per connection, `Connection: close`.
pub struct HttpStub {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl HttpStub {
    pub fn start(handler: Arc<Handler>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(conn) = conn else { continue };
                let handler = handler.clone();
                std::thread::spawn(move || {
                    let _ = serve_one(conn, &*handler);
                });
            }
        });
        Self {
            addr,
            stop,
            thread: Some(thread),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for HttpStub {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve_one(conn: TcpStream, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let (status, text) = handler(&method, &path, &body);
    let mut out = conn;
    write!(
        out,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    out.flush()
}

/// Stand-in for the HTTP reference service, answering from `set`.
pub fn reference_stub(set: FixtureSet) -> HttpStub {
    HttpStub::start(Arc::new(move |method: &str, path: &str, body: &[u8]| {
        if method == "GET" && path == "/health" {
            return (200, json!({"status": "ok", "kinds": ["face", "objects", "ocr", "scene"]}).to_string());
        }
        let Some(kind) = path.strip_prefix("/v1/") else {
            return (404, json!({"code": "not_found"}).to_string());
        };
        let req: PerceptionRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(_) => return (400, json!({"code": "bad_request"}).to_string()),
        };
        let Some(Ok((_, canonical))) = req.decode_image() else {
            return (400, json!({"code": "bad_request"}).to_string());
        };
        let digest = image_digest(&canonical);
        match set.entries().iter().find(|e| e.kind == kind && e.digest == digest) {
            Some(e) => (200, e.result.to_string()),
            None => (404, json!({"code": "no_fixture"}).to_string()),
        }
    }))
}
