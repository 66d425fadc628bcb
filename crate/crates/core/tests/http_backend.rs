mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::{fast_policy, pattern, StubServer};
use genmix::backend::http::{
    decode_image_b64, encode_image_b64, EditRequestBody, EditResponseBody,
};
use genmix::backend::{EditBackend, EditRequest, HttpEditBackend, RetryPolicy};
use genmix::filter::{EmbedBackend, HttpEmbedBackend};
use genmix::{GenMixError, Image};

fn echo(body: &str) -> (u16, String) {
    let req: EditRequestBody = serde_json::from_str(body).unwrap();
    let resp = EditResponseBody {
        image: req.image,
        model: "echo".into(),
    };
    (200, serde_json::to_string(&resp).unwrap())
}

fn edit_once(backend: &HttpEditBackend, image: &Image) -> genmix::Result<Image> {
    let req = EditRequest::new(
        image,
        "A transformed version of image into sunset",
        5,
        "src",
        "sunset",
    )?;
    backend.edit(&req).map(|e| e.image)
}

#[test]
fn echo_round_trip_is_lossless() {
    let server = StubServer::start(|_, path, body| match path {
        "/healthz" => (200, "{}".into()),
        "/v1/edit" => echo(body),
        _ => (404, String::new()),
    });
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    backend.health().unwrap();
    let img = pattern(4, 4, 17, 29, 5);
    let out = edit_once(&backend, &img).unwrap();
    assert_eq!(out, img);
}

#[test]
fn request_carries_instruction_and_seed() {
    let server = StubServer::start(|_, _, body| {
        let req: EditRequestBody = serde_json::from_str(body).unwrap();
        assert_eq!(
            req.instruction,
            "A transformed version of image into sunset"
        );
        assert_eq!(req.seed, 5);
        echo(body)
    });
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    edit_once(&backend, &pattern(3, 2, 1, 1, 1)).unwrap();
}

fn flaky(status: u16, failures: usize) -> (StubServer, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let server = StubServer::start(move |_, _, body| {
        if seen.fetch_add(1, Ordering::SeqCst) < failures {
            (status, "{\"error\":\"busy\"}".into())
        } else {
            echo(body)
        }
    });
    (server, calls)
}

#[test]
fn retries_503_then_succeeds() {
    let (server, calls) = flaky(503, 2);
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    let img = pattern(4, 4, 9, 9, 9);
    assert_eq!(edit_once(&backend, &img).unwrap(), img);
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn gives_up_after_three_attempts() {
    let (server, calls) = flaky(503, usize::MAX);
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    let err = edit_once(&backend, &pattern(2, 2, 1, 1, 1)).unwrap_err();
    assert!(
        matches!(err, GenMixError::HttpStatus { status: 503, .. }),
        "{err}"
    );
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_429() {
    let (server, calls) = flaky(429, 1);
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    edit_once(&backend, &pattern(2, 2, 1, 1, 1)).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_are_not_retried_and_surface_the_body() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let server = StubServer::start(move |_, _, _| {
        seen.fetch_add(1, Ordering::SeqCst);
        (400, "{\"error\":\"missing field: instruction\"}".into())
    });
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    let err = edit_once(&backend, &pattern(2, 2, 1, 1, 1)).unwrap_err();
    assert!(!err.is_retryable());
    assert!(err.to_string().contains("instruction"), "{err}");
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn timeouts_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let server = StubServer::start(move |_, _, body| {
        if seen.fetch_add(1, Ordering::SeqCst) == 0 {
            std::thread::sleep(Duration::from_millis(800));
        }
        echo(body)
    });
    let policy = RetryPolicy {
        timeout: Duration::from_millis(200),
        ..fast_policy()
    };
    let backend = HttpEditBackend::new(&server.url, policy).unwrap();
    edit_once(&backend, &pattern(2, 2, 1, 1, 1)).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn unreachable_endpoint_is_unhealthy() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let backend = HttpEditBackend::new(&format!("http://{addr}"), fast_policy()).unwrap();
    assert!(matches!(
        backend.health(),
        Err(GenMixError::Unhealthy { .. })
    ));
}

#[test]
fn failing_healthz_is_unhealthy() {
    let server = StubServer::start(|_, _, _| (500, String::new()));
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    assert!(matches!(
        backend.health(),
        Err(GenMixError::Unhealthy { .. })
    ));
}

#[test]
fn malformed_responses_are_protocol_errors() {
    for reply in [
        "not json",
        "{\"image\":\"%%%\",\"model\":\"x\"}",
        "{\"image\":\"aGVsbG8=\",\"model\":\"x\"}",
    ] {
        let reply = reply.to_string();
        let server = StubServer::start(move |_, _, _| (200, reply.clone()));
        let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
        let err = edit_once(&backend, &pattern(2, 2, 1, 1, 1)).unwrap_err();
        assert!(matches!(err, GenMixError::Protocol(_)), "{err}");
    }
}

/// The server answers with a 256x256 horizontal ramp `x / 255` whatever it
/// is sent; the client must resize it to the 224x224 source. Half-pixel
/// bilinear resampling of a linear ramp is exact, so output column `x`
/// holds `((x + 0.5) * 256 / 224 - 0.5) / 255`.
#[test]
fn mismatched_reply_is_resized_to_source() {
    let server = StubServer::start(|_, _, _| {
        let ramp = Image::from_fn(256, 256, |x, _, _| x as f64 / 255.0).unwrap();
        let resp = EditResponseBody {
            image: encode_image_b64(&ramp),
            model: "ramp".into(),
        };
        (200, serde_json::to_string(&resp).unwrap())
    });
    let backend = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    let src = Image::filled(224, 224, 0.5).unwrap();
    let out = edit_once(&backend, &src).unwrap();
    assert_eq!(out.dims(), (224, 224));
    for y in [0, 100, 223] {
        for x in 0..224 {
            let expect = ((x as f64 + 0.5) * 256.0 / 224.0 - 0.5) / 255.0;
            for c in 0..3 {
                assert!((out.get(x, y, c) - expect).abs() < 1e-9, "x={x}");
            }
        }
    }
}

#[test]
fn in_flight_requests_are_bounded() {
    let current = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (c, p) = (Arc::clone(&current), Arc::clone(&peak));
    let server = StubServer::start(move |_, _, body| {
        let now = c.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40));
        c.fetch_sub(1, Ordering::SeqCst);
        echo(body)
    });
    let policy = RetryPolicy {
        max_in_flight: 2,
        ..fast_policy()
    };
    let backend = Arc::new(HttpEditBackend::new(&server.url, policy).unwrap());
    let img = pattern(2, 2, 1, 1, 1);
    std::thread::scope(|s| {
        for _ in 0..8 {
            let b = Arc::clone(&backend);
            let img = &img;
            s.spawn(move || edit_once(&b, img).unwrap());
        }
    });
    assert!(peak.load(Ordering::SeqCst) <= 2);
    assert!(peak.load(Ordering::SeqCst) >= 1);
}

#[test]
fn embed_over_http() {
    let server = StubServer::start(|_, path, body| match path {
        "/healthz" => (200, String::new()),
        "/v1/embed" => {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            let img = decode_image_b64(v["image"].as_str().unwrap()).unwrap();
            let reply =
                serde_json::json!({ "vector": [img.get(0, 0, 0), 3.0, 4.0], "model": "stub" });
            (200, reply.to_string())
        }
        _ => (404, String::new()),
    });
    let backend = HttpEmbedBackend::new(&server.url, fast_policy()).unwrap();
    backend.health().unwrap();
    let e = backend.embed(&Image::filled(2, 2, 0.0).unwrap()).unwrap();
    assert_eq!(e.values(), &[0.0, 3.0, 4.0]);
    assert_eq!(e.norm(), 5.0);
}

#[test]
fn zero_embedding_reply_is_rejected() {
    let server =
        StubServer::start(|_, _, _| (200, "{\"vector\":[0.0,0.0],\"model\":\"z\"}".into()));
    let backend = HttpEmbedBackend::new(&server.url, fast_policy()).unwrap();
    let err = backend
        .embed(&Image::filled(2, 2, 0.1).unwrap())
        .unwrap_err();
    assert!(matches!(err, GenMixError::Protocol(_)), "{err}");
}
