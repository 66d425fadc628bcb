//! Shared vectors for the mock editor and embedder. The model service's
//! mock mode is held to the same file, so these pin the wire-visible
//! behaviour on both sides. Expected values were produced by
//! `data/gen_conformance.py`, which re-derives the algorithms in Python.

mod common;

use common::{fast_policy, pattern, StubServer};
use genmix::backend::http::{
    decode_image_b64, encode_image_b64, EditRequestBody, EditResponseBody,
};
use genmix::backend::{mock_edit, mock_edit_params, EditBackend, EditRequest, HttpEditBackend};
use genmix::filter::{EmbedBackend, HttpEmbedBackend, MockEmbedBackend, MOCK_EMBED_DIM};
use genmix::Image;
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Deserialize)]
struct Vector {
    width: usize,
    height: usize,
    pattern: [usize; 3],
    instruction: String,
    seed: u64,
    scale: [f64; 3],
    offset: [f64; 3],
    edited_rgb8_sha256: String,
    embed_head: Vec<f64>,
}

#[derive(Deserialize)]
struct File {
    vectors: Vec<Vector>,
}

fn vectors() -> Vec<Vector> {
    let text = include_str!("data/conformance_vectors.json");
    serde_json::from_str::<File>(text).unwrap().vectors
}

fn source(v: &Vector) -> Image {
    let [a, b, k] = v.pattern;
    pattern(v.width, v.height, a, b, k)
}

fn rgb8_sha(img: &Image) -> String {
    hex::encode(Sha256::digest(img.to_rgb8().as_raw()))
}

#[test]
fn ten_vectors_present() {
    assert_eq!(vectors().len(), 10);
}

#[test]
fn mock_edit_params_match() {
    for v in vectors() {
        let p = mock_edit_params(&v.instruction, v.seed);
        assert_eq!(p.scale, v.scale, "{} / {}", v.instruction, v.seed);
        assert_eq!(p.offset, v.offset, "{} / {}", v.instruction, v.seed);
    }
}

#[test]
fn mock_edit_output_hashes_match() {
    for v in vectors() {
        let out = mock_edit(&source(&v), &v.instruction, v.seed);
        assert_eq!(
            rgb8_sha(&out),
            v.edited_rgb8_sha256,
            "{} / {}",
            v.instruction,
            v.seed
        );
    }
}

#[test]
fn mock_embed_matches_and_is_unit_norm() {
    let m = MockEmbedBackend::new();
    for v in vectors() {
        let e = m.embed(&source(&v)).unwrap();
        assert_eq!(e.dim(), MOCK_EMBED_DIM);
        assert!((e.norm() - 1.0).abs() < 1e-6);
        for (got, want) in e.values().iter().zip(&v.embed_head) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }
}

fn mock_service() -> StubServer {
    StubServer::start(|_, path, body| match path {
        "/healthz" => (200, "{\"status\":\"ok\"}".into()),
        "/v1/edit" => {
            let req: EditRequestBody = serde_json::from_str(body).unwrap();
            let img = decode_image_b64(&req.image).unwrap();
            let resp = EditResponseBody {
                image: encode_image_b64(&mock_edit(&img, &req.instruction, req.seed)),
                model: "mock-edit-v1".into(),
            };
            (200, serde_json::to_string(&resp).unwrap())
        }
        "/v1/embed" => {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            let img = decode_image_b64(v["image"].as_str().unwrap()).unwrap();
            let e = MockEmbedBackend::new().embed(&img).unwrap();
            (
                200,
                serde_json::json!({ "vector": e.values(), "model": "mock-embed-v1" }).to_string(),
            )
        }
        _ => (404, String::new()),
    })
}

#[test]
fn vectors_survive_the_wire() {
    let server = mock_service();
    let edit = HttpEditBackend::new(&server.url, fast_policy()).unwrap();
    let embed = HttpEmbedBackend::new(&server.url, fast_policy()).unwrap();
    edit.health().unwrap();
    for v in vectors() {
        let src = source(&v);
        let req = EditRequest::new(&src, &v.instruction, v.seed, "c", "p").unwrap();
        let out = edit.edit(&req).unwrap();
        assert_eq!(rgb8_sha(&out.image), v.edited_rgb8_sha256);

        let e = embed.embed(&src).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-6);
        assert_eq!(e, MockEmbedBackend::new().embed(&src).unwrap());
    }
}
