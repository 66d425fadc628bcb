#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use genmix::backend::RetryPolicy;
use genmix::Image;

/// A local HTTP server answering with `handler(method, path, body)`.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    pub url: String,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&str, &str, &str) -> (u16, String) + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind"));
        let url = format!(
            "http://{}",
            server.server_addr().to_ip().expect("ip address")
        );
        let srv = Arc::clone(&server);
        let handler = Arc::new(handler);
        let thread = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let handler = Arc::clone(&handler);
                std::thread::spawn(move || {
                    let mut body = String::new();
                    let _ = std::io::Read::read_to_string(req.as_reader(), &mut body);
                    let (status, text) = handler(req.method().as_str(), req.url(), &body);
                    let header =
                        tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let resp = tiny_http::Response::from_string(text)
                        .with_status_code(status)
                        .with_header(header);
                    let _ = req.respond(resp);
                });
            }
        });
        Self {
            server,
            thread: Some(thread),
            url,
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn fast_policy() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff: Duration::from_millis(5),
        timeout: Duration::from_secs(10),
        max_in_flight: 4,
    }
}

/// `((x * a + y * b + c * k) mod 256) / 255`.
pub fn pattern(w: usize, h: usize, a: usize, b: usize, k: usize) -> Image {
    Image::from_fn(w, h, |x, y, c| {
        ((x * a + y * b + c * k) % 256) as f64 / 255.0
    })
    .unwrap()
}

/// Write `n` distinct PNGs and a manifest listing them; returns the manifest path.
pub fn write_dataset(dir: &Path, n: usize, size: usize, labels: &[&str]) -> PathBuf {
    let mut lines = String::new();
    for i in 0..n {
        let img = pattern(size, size, 3 + 2 * i, 5 + i, 40 + 17 * i);
        let name = format!("img/{i:02}.png");
        img.save_png(&dir.join(&name)).unwrap();
        let label = labels
            .get(i % labels.len().max(1))
            .map(|l| format!(",\"label\":\"{l}\""))
            .unwrap_or_default();
        lines.push_str(&format!(
            "{{\"id\":\"s{i:02}\",\"path\":\"{name}\"{label}}}\n"
        ));
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}
