use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

use iris_core::gateway::{serve, BackendRegistry, FixtureBackend};
use iris_core::imaging::ImageFrame;
use iris_core::protocol::{
    encode_frame, read_frame, write_frame, CallError, GatewayClient, PerceptionRequest,
    PerceptionResponse, Status, KIND_SCENE,
};

mod common;

fn gateway(latency: u64) -> iris_core::gateway::GatewayHandle {
    let backend = FixtureBackend::new(&common::fixture_set()).with_uniform_latency(latency);
    serve("127.0.0.1:0", Arc::new(BackendRegistry::with_fixtures(backend))).unwrap()
}

fn scene_frame() -> ImageFrame {
    let bytes = std::fs::read(common::fixtures_dir().join("images/scene.pgm")).unwrap();
    iris_core::imaging::load_pgm(&bytes).unwrap()
}

#[test]
fn health_lists_kinds() {
    let gw = gateway(0);
    let mut client = GatewayClient::new(gw.local_addr().to_string());
    let h = client.health(Duration::from_millis(500)).unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.kinds, ["face", "objects", "ocr", "scene"]);
}

#[test]
fn fixture_round_trip_and_errors() {
    let gw = gateway(0);
    let mut client = GatewayClient::new(gw.local_addr().to_string());
    let req = PerceptionRequest::with_frame(client.next_id(), KIND_SCENE, &scene_frame());
    let resp = client.call(&req, Duration::from_secs(2)).unwrap();
    assert_eq!(resp.status, Status::Ok);
    assert_eq!(resp.id, req.id);
    assert_eq!(resp.result.unwrap()["caption"], "A man sitting at a table.");

    let unknown = PerceptionRequest::with_frame(client.next_id(), KIND_SCENE, &ImageFrame::filled(3, 3, 9).unwrap());
    let resp = client.call(&unknown, Duration::from_secs(2)).unwrap();
    assert_eq!(resp.error_code(), Some("no_fixture"));

    let teleport = PerceptionRequest::with_frame(client.next_id(), "teleport", &scene_frame());
    assert_eq!(client.call(&teleport, Duration::from_secs(2)).unwrap().error_code(), Some("unknown_kind"));

    let mut no_image = PerceptionRequest::health(client.next_id());
    no_image.kind = KIND_SCENE.into();
    assert_eq!(client.call(&no_image, Duration::from_secs(2)).unwrap().error_code(), Some("bad_request"));

    let mut bad_image = PerceptionRequest::with_frame(client.next_id(), KIND_SCENE, &scene_frame());
    bad_image.image = Some("UDUK".into());
    assert_eq!(client.call(&bad_image, Duration::from_secs(2)).unwrap().error_code(), Some("bad_image"));

    let mut old = PerceptionRequest::health(client.next_id());
    old.v = 7;
    assert_eq!(client.call(&old, Duration::from_secs(2)).unwrap().error_code(), Some("bad_version"));

    // the same id twice on one connection
    let dup = PerceptionRequest::health("dup");
    client.call(&dup, Duration::from_secs(2)).unwrap();
    assert_eq!(client.call(&dup, Duration::from_secs(2)).unwrap().error_code(), Some("duplicate_id"));
}

#[test]
fn garbage_gets_bad_frame_and_close() {
    let gw = gateway(0);
    let mut s = TcpStream::connect(gw.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    // a header announcing far more than the frame limit
    s.write_all(&[0xff, 0xff, 0xff, 0xff]).unwrap();
    let text = read_frame(&mut s).unwrap().unwrap();
    let resp: PerceptionResponse = serde_json::from_str(&text).unwrap();
    assert_eq!(resp.error_code(), Some("bad_frame"));
    assert!(matches!(read_frame(&mut s), Ok(None) | Err(_)));

    let mut s = TcpStream::connect(gw.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    s.write_all(&encode_frame("{not json").unwrap()).unwrap();
    let resp: PerceptionResponse = serde_json::from_str(&read_frame(&mut s).unwrap().unwrap()).unwrap();
    assert_eq!(resp.error_code(), Some("bad_frame"));
}

/// Accepts connections and reads requests but never answers.
fn stalling_server() -> (String, std::thread::JoinHandle<()>) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    let t = std::thread::spawn(move || {
        if let Ok((mut s, _)) = l.accept() {
            let _ = read_frame(&mut s);
            std::thread::sleep(Duration::from_millis(600));
        }
    });
    (addr, t)
}

#[test]
fn timeout_is_reported_without_retry() {
    let (addr, t) = stalling_server();
    let mut client = GatewayClient::new(addr);
    let start = Instant::now();
    let err = client.health(Duration::from_millis(100)).unwrap_err();
    let elapsed = start.elapsed();
    assert!(matches!(err, CallError::Timeout), "{err:?}");
    assert!(elapsed >= Duration::from_millis(100) && elapsed < Duration::from_millis(200), "{elapsed:?}");
    t.join().unwrap();
}

#[test]
fn refused_connection_fails_cleanly() {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    drop(l);
    let mut client = GatewayClient::new(addr);
    let err = client.health(Duration::from_millis(300)).unwrap_err();
    assert!(matches!(err, CallError::ConnectionFailed(_)), "{err:?}");
}

#[test]
fn reset_connection_is_retried_once() {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    let t = std::thread::spawn(move || {
        // first connection: read the request and hang up
        let (mut s, _) = l.accept().unwrap();
        let _ = read_frame(&mut s);
        drop(s);
        // second connection: answer properly
        let (mut s, _) = l.accept().unwrap();
        let text = read_frame(&mut s).unwrap().unwrap();
        let req: PerceptionRequest = serde_json::from_str(&text).unwrap();
        let resp = PerceptionResponse::ok(req.id, serde_json::json!({"status": "ok", "kinds": []}), 0.0);
        write_frame(&mut s, &serde_json::to_string(&resp).unwrap()).unwrap();
    });
    let mut client = GatewayClient::new(addr);
    assert_eq!(client.health(Duration::from_secs(2)).unwrap().status, "ok");
    t.join().unwrap();
}

#[test]
fn wrong_id_is_a_protocol_violation() {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    let t = std::thread::spawn(move || {
        let (mut s, _) = l.accept().unwrap();
        let _ = read_frame(&mut s).unwrap();
        let resp = PerceptionResponse::ok("someone-else", serde_json::json!({}), 0.0);
        write_frame(&mut s, &serde_json::to_string(&resp).unwrap()).unwrap();
    });
    let mut client = GatewayClient::new(addr);
    let err = client.health(Duration::from_secs(2)).unwrap_err();
    assert!(matches!(err, CallError::ProtocolViolation(_)), "{err:?}");
    t.join().unwrap();
}

#[test]
fn concurrent_clients_get_their_own_ids() {
    let gw = gateway(1);
    let addr = gw.local_addr().to_string();
    let frame = scene_frame();
    let workers: Vec<_> = (0..2)
        .map(|w| {
            let (addr, frame) = (addr.clone(), frame.clone());
            std::thread::spawn(move || {
                let mut client = GatewayClient::new(addr);
                for i in 0..25 {
                    let id = format!("w{w}-{i}");
                    let resp = client
                        .call(&PerceptionRequest::with_frame(id.clone(), KIND_SCENE, &frame), Duration::from_secs(2))
                        .unwrap();
                    assert_eq!(resp.id, id);
                    assert_eq!(resp.status, Status::Ok);
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
}
