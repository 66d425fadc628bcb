//! JSON-over-HTTP transport shared by the edit and embed clients.
//!
//! Protocol v1:
//! - `POST {endpoint}/v1/edit` `{"image": <base64 PNG>, "instruction": str, "seed": int}`
//!   -> `200 {"image": <base64 PNG>, "model": str}`
//! - `POST {endpoint}/v1/embed` `{"image": <base64 PNG>}`
//!   -> `200 {"vector": [float; d], "model": str}`
//! - `GET {endpoint}/healthz` -> `200`

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{conform_to, EditBackend, EditRequest, EditedImage};
use crate::error::{GenMixError, Result};
use crate::Image;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    /// Maximum concurrent requests per backend handle.
    pub max_in_flight: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            timeout: DEFAULT_TIMEOUT,
            max_in_flight: 8,
        }
    }
}

impl RetryPolicy {
    /// Run `op` until it succeeds, fails fatally, or attempts run out.
    /// Backoff doubles after each retryable failure.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.attempts.max(1) => {
                    log::warn!("attempt {attempt} failed: {e}; retrying in {backoff:?}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.active.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.active.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpClient {
    endpoint: String,
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    in_flight: InFlight,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("endpoint", &self.endpoint)
            .field("policy", &self.policy)
            .finish()
    }
}

fn transport_error(e: reqwest::Error) -> GenMixError {
    if e.is_timeout() || e.is_connect() || e.is_request() {
        GenMixError::Transient(e.to_string())
    } else {
        GenMixError::Protocol(e.to_string())
    }
}

impl HttpClient {
    pub fn new(endpoint: &str, policy: RetryPolicy) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(policy.timeout)
            .build()
            .map_err(|e| GenMixError::Config(format!("http client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client,
            policy,
            in_flight: InFlight::new(policy.max_in_flight),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn health(&self) -> Result<()> {
        let url = format!("{}/healthz", self.endpoint);
        let resp = self
            .client
            .get(&url)
            .send()
            .map_err(|e| GenMixError::Unhealthy {
                backend: self.endpoint.clone(),
                message: e.to_string(),
            })?;
        if resp.status().as_u16() == 200 {
            Ok(())
        } else {
            Err(GenMixError::Unhealthy {
                backend: self.endpoint.clone(),
                message: format!("healthz returned {}", resp.status()),
            })
        }
    }

    /// POST `body` to `{endpoint}{path}` with retries; decode a 200 JSON reply.
    pub fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R> {
        let url = format!("{}{}", self.endpoint, path);
        let payload = serde_json::to_vec(body)?;
        self.policy.run(|| {
            let _permit = self.in_flight.acquire();
            let resp = self
                .client
                .post(&url)
                .header("content-type", "application/json")
                .body(payload.clone())
                .send()
                .map_err(transport_error)?;
            let status = resp.status().as_u16();
            let text = resp.text().map_err(transport_error)?;
            if status != 200 {
                return Err(GenMixError::HttpStatus {
                    status,
                    body: text.chars().take(BODY_EXCERPT).collect(),
                });
            }
            serde_json::from_str(&text)
                .map_err(|e| GenMixError::Protocol(format!("bad response from {url}: {e}")))
        })
    }
}

pub fn encode_image_b64(image: &Image) -> String {
    BASE64.encode(image.to_png_bytes())
}

pub fn decode_image_b64(data: &str) -> Result<Image> {
    let bytes = BASE64
        .decode(data.trim())
        .map_err(|e| GenMixError::Protocol(format!("invalid base64 image: {e}")))?;
    Image::from_encoded_bytes(&bytes)
        .map_err(|e| GenMixError::Protocol(format!("undecodable image: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EditRequestBody {
    pub image: String,
    pub instruction: String,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EditResponseBody {
    pub image: String,
    pub model: String,
}

pub struct HttpEditBackend {
    client: HttpClient,
    id: String,
}

impl HttpEditBackend {
    pub fn new(endpoint: &str, policy: RetryPolicy) -> Result<Self> {
        let client = HttpClient::new(endpoint, policy)?;
        let id = format!("http:{}", client.endpoint());
        Ok(Self { client, id })
    }
}

impl EditBackend for HttpEditBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn health(&self) -> Result<()> {
        self.client.health()
    }

    fn edit(&self, req: &EditRequest<'_>) -> Result<EditedImage> {
        let body = EditRequestBody {
            image: encode_image_b64(req.image),
            instruction: req.instruction.to_string(),
            seed: req.seed,
        };
        let resp: EditResponseBody = self.client.post_json("/v1/edit", &body)?;
        let image = conform_to(decode_image_b64(&resp.image)?, req.image.dims(), &self.id)?;
        Ok(EditedImage {
            image,
            backend_id: format!("{}#{}", self.id, resp.model),
            prompt_id: req.prompt_id.to_string(),
            source_id: req.source_id.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn fast_policy(attempts: u32) -> RetryPolicy {
        RetryPolicy {
            attempts,
            initial_backoff: Duration::from_millis(1),
            ..RetryPolicy::default()
        }
    }

    #[test]
    fn retries_only_retryable_errors() {
        let calls = AtomicU32::new(0);
        let r: Result<()> = fast_policy(3).run(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(GenMixError::HttpStatus {
                status: 503,
                body: String::new(),
            })
        });
        assert!(r.is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        calls.store(0, Ordering::SeqCst);
        let r: Result<()> = fast_policy(3).run(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(GenMixError::Protocol("bad".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn succeeds_after_transient_failures() {
        let calls = AtomicU32::new(0);
        let r = fast_policy(3).run(|| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(GenMixError::Transient("timeout".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(r.unwrap(), 7);
    }

    #[test]
    fn base64_round_trip_is_byte_exact() {
        let img =
            Image::from_fn(4, 4, |x, y, c| ((x * 64 + y * 16 + c) % 256) as f64 / 255.0).unwrap();
        assert_eq!(decode_image_b64(&encode_image_b64(&img)).unwrap(), img);
        assert!(matches!(
            decode_image_b64("@@@"),
            Err(GenMixError::Protocol(_))
        ));
        assert!(matches!(
            decode_image_b64("aGVsbG8="),
            Err(GenMixError::Protocol(_))
        ));
    }

    #[test]
    fn in_flight_limit_bounds_concurrency() {
        let gate = InFlight::new(2);
        let peak = AtomicU32::new(0);
        let active = AtomicU32::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = gate.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
