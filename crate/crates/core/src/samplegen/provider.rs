//! External annotators: detection, segmentation and prompt paraphrasing.
//!
//! Backends: a fixture transcript keyed by request hash, a live HTTP
//! endpoint, and a memoizing wrapper.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{Mask, RasterError};
use crate::types::Box2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider has no answer for {0}")]
    Miss(String),
    #[error("provider transport failed: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

impl From<RasterError> for ProviderError {
    fn from(e: RasterError) -> Self {
        ProviderError::BadResponse(e.to_string())
    }
}

/// One provider call. Its canonical JSON form is what gets hashed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Detect { image: String, label: String },
    Segment { image: String, bbox: Box2D, width: u32, height: u32 },
    Paraphrase { text: String },
}

impl Request {
    pub fn canonical(&self) -> String {
        let v = serde_json::to_value(self).expect("request serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Hex sha256 of the canonical form.
    pub fn key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn describe(&self) -> String {
        match self {
            Request::Detect { image, label } => format!("detect '{label}' in {image}"),
            Request::Segment { image, bbox, .. } => format!("segment {bbox:?} in {image}"),
            Request::Paraphrase { text } => format!("paraphrase '{text}'"),
        }
    }
}

/// Response payloads as stored in a transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Boxes { boxes: Vec<Box2D> },
    MaskFile { mask_path: String },
    FilledBox { fill_box: Box2D },
    Text { text: String },
}

pub trait Provider: Send + Sync {
    fn detect(&self, image: &str, label: &str) -> Result<Vec<Box2D>, ProviderError>;
    /// Mask of the object inside `bbox`, sized `width x height`.
    fn segment(&self, image: &str, bbox: &Box2D, width: u32, height: u32) -> Result<Mask, ProviderError>;
    fn paraphrase(&self, text: &str) -> Result<String, ProviderError>;
}

fn decode(req: &Request, resp: &Response, base: &Path) -> Result<Decoded, ProviderError> {
    match (req, resp) {
        (Request::Detect { .. }, Response::Boxes { boxes }) => Ok(Decoded::Boxes(boxes.clone())),
        (Request::Segment { .. }, Response::MaskFile { mask_path }) => {
            Ok(Decoded::Mask(Mask::load_png(&base.join(mask_path))?))
        }
        (Request::Segment { width, height, .. }, Response::FilledBox { fill_box }) => {
            Ok(Decoded::Mask(Mask::from_box(*width, *height, fill_box)))
        }
        (Request::Paraphrase { .. }, Response::Text { text }) => Ok(Decoded::Text(text.clone())),
        _ => Err(ProviderError::BadResponse(format!(
            "response shape does not fit {}",
            req.describe()
        ))),
    }
}

enum Decoded {
    Boxes(Vec<Box2D>),
    Mask(Mask),
    Text(String),
}

/// Request/response transcript file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub version: u32,
    /// Request key → response.
    pub entries: BTreeMap<String, TranscriptEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Canonical request, kept for readability; lookups use the key only.
    pub request: String,
    pub response: Response,
}

impl Transcript {
    pub fn insert(&mut self, req: &Request, response: Response) {
        self.entries.insert(
            req.key(),
            TranscriptEntry {
                request: req.canonical(),
                response,
            },
        );
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ProviderError::Transport(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("transcript serializes");
        fs::write(path, text + "\n")
    }
}

/// Replays a transcript. Mask paths resolve against the transcript's
/// directory.
pub struct FixtureProvider {
    transcript: Transcript,
    base: PathBuf,
}

impl FixtureProvider {
    pub fn new(transcript: Transcript, base: PathBuf) -> Self {
        Self { transcript, base }
    }

    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self::new(Transcript::load(path)?, base))
    }

    fn answer(&self, req: &Request) -> Result<Decoded, ProviderError> {
        let entry = self
            .transcript
            .entries
            .get(&req.key())
            .ok_or_else(|| ProviderError::Miss(req.describe()))?;
        decode(req, &entry.response, &self.base)
    }
}

fn want_boxes(d: Decoded) -> Result<Vec<Box2D>, ProviderError> {
    match d {
        Decoded::Boxes(b) => Ok(b),
        _ => Err(ProviderError::BadResponse("expected boxes".into())),
    }
}

fn want_mask(d: Decoded, width: u32, height: u32) -> Result<Mask, ProviderError> {
    match d {
        Decoded::Mask(m) if m.width() == width && m.height() == height => Ok(m),
        Decoded::Mask(m) => Err(ProviderError::BadResponse(format!(
            "mask is {}x{}, expected {width}x{height}",
            m.width(),
            m.height()
        ))),
        _ => Err(ProviderError::BadResponse("expected a mask".into())),
    }
}

fn want_text(d: Decoded) -> Result<String, ProviderError> {
    match d {
        Decoded::Text(t) => Ok(t),
        _ => Err(ProviderError::BadResponse("expected text".into())),
    }
}

impl Provider for FixtureProvider {
    fn detect(&self, image: &str, label: &str) -> Result<Vec<Box2D>, ProviderError> {
        want_boxes(self.answer(&Request::Detect {
            image: image.into(),
            label: label.into(),
        })?)
    }

    fn segment(&self, image: &str, bbox: &Box2D, width: u32, height: u32) -> Result<Mask, ProviderError> {
        let req = Request::Segment {
            image: image.into(),
            bbox: *bbox,
            width,
            height,
        };
        want_mask(self.answer(&req)?, width, height)
    }

    fn paraphrase(&self, text: &str) -> Result<String, ProviderError> {
        want_text(self.answer(&Request::Paraphrase { text: text.into() })?)
    }
}

/// Environment variable holding the bearer token for [`LiveProvider`].
pub const TOKEN_ENV: &str = "VLMFORGE_PROVIDER_TOKEN";

/// Posts canonical requests as JSON to `endpoint` and reads a transcript
/// [`Response`] back. Relative mask paths resolve against `mask_root`.
pub struct LiveProvider {
    endpoint: String,
    token: Option<String>,
    mask_root: PathBuf,
    agent: ureq::Agent,
}

impl LiveProvider {
    pub fn new(endpoint: impl Into<String>, mask_root: PathBuf) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: std::env::var(TOKEN_ENV).ok(),
            mask_root,
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    fn call(&self, req: &Request) -> Result<Decoded, ProviderError> {
        let mut r = self.agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            r = r.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = r
            .send_json(req)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let body: Response = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        decode(req, &body, &self.mask_root)
    }
}

impl Provider for LiveProvider {
    fn detect(&self, image: &str, label: &str) -> Result<Vec<Box2D>, ProviderError> {
        want_boxes(self.call(&Request::Detect {
            image: image.into(),
            label: label.into(),
        })?)
    }

    fn segment(&self, image: &str, bbox: &Box2D, width: u32, height: u32) -> Result<Mask, ProviderError> {
        let req = Request::Segment {
            image: image.into(),
            bbox: *bbox,
            width,
            height,
        };
        want_mask(self.call(&req)?, width, height)
    }

    fn paraphrase(&self, text: &str) -> Result<String, ProviderError> {
        want_text(self.call(&Request::Paraphrase { text: text.into() })?)
    }
}

#[derive(Clone)]
enum Cached {
    Boxes(Result<Vec<Box2D>, ProviderError>),
    Mask(Result<Mask, ProviderError>),
    Text(Result<String, ProviderError>),
}

/// Memoizes another provider per request, so repeated queries from
/// parallel workers see one answer.
pub struct MemoProvider<P> {
    inner: P,
    cache: Mutex<BTreeMap<String, Cached>>,
}

impl<P: Provider> MemoProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    fn get_or(&self, req: &Request, f: impl FnOnce() -> Cached) -> Cached {
        let key = req.key();
        if let Some(c) = self.cache.lock().expect("cache lock").get(&key) {
            return c.clone();
        }
        let v = f();
        self.cache.lock().expect("cache lock").entry(key).or_insert(v).clone()
    }
}

impl<P: Provider> Provider for MemoProvider<P> {
    fn detect(&self, image: &str, label: &str) -> Result<Vec<Box2D>, ProviderError> {
        let req = Request::Detect {
            image: image.into(),
            label: label.into(),
        };
        match self.get_or(&req, || Cached::Boxes(self.inner.detect(image, label))) {
            Cached::Boxes(r) => r,
            _ => unreachable!("key collision across request kinds"),
        }
    }

    fn segment(&self, image: &str, bbox: &Box2D, width: u32, height: u32) -> Result<Mask, ProviderError> {
        let req = Request::Segment {
            image: image.into(),
            bbox: *bbox,
            width,
            height,
        };
        match self.get_or(&req, || Cached::Mask(self.inner.segment(image, bbox, width, height))) {
            Cached::Mask(r) => r,
            _ => unreachable!("key collision across request kinds"),
        }
    }

    fn paraphrase(&self, text: &str) -> Result<String, ProviderError> {
        let req = Request::Paraphrase { text: text.into() };
        match self.get_or(&req, || Cached::Text(self.inner.paraphrase(text))) {
            Cached::Text(r) => r,
            _ => unreachable!("key collision across request kinds"),
        }
    }
}

/// A provider with no answers; every call misses.
pub struct NullProvider;

impl Provider for NullProvider {
    fn detect(&self, image: &str, label: &str) -> Result<Vec<Box2D>, ProviderError> {
        Err(ProviderError::Miss(format!("detect '{label}' in {image}")))
    }

    fn segment(&self, image: &str, bbox: &Box2D, _: u32, _: u32) -> Result<Mask, ProviderError> {
        Err(ProviderError::Miss(format!("segment {bbox:?} in {image}")))
    }

    fn paraphrase(&self, text: &str) -> Result<String, ProviderError> {
        Err(ProviderError::Miss(format!("paraphrase '{text}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_stable_and_content_sensitive() {
        let a = Request::Detect {
            image: "ep/0.png".into(),
            label: "cup".into(),
        };
        assert_eq!(a.canonical(), r#"{"image":"ep/0.png","label":"cup","op":"detect"}"#);
        assert_eq!(a.key().len(), 64);
        let b = Request::Detect {
            image: "ep/0.png".into(),
            label: "cups".into(),
        };
        assert_ne!(a.key(), b.key());
    }

    #[test]
    fn fixture_replays_and_misses() {
        let mut t = Transcript {
            version: 1,
            ..Default::default()
        };
        let bx = Box2D::new(10.0, 10.0, 20.0, 30.0).unwrap();
        t.insert(
            &Request::Detect {
                image: "i".into(),
                label: "cup".into(),
            },
            Response::Boxes { boxes: vec![bx] },
        );
        t.insert(
            &Request::Segment {
                image: "i".into(),
                bbox: bx,
                width: 64,
                height: 48,
            },
            Response::FilledBox { fill_box: bx },
        );
        let json = serde_json::to_string(&t).unwrap();
        let p = MemoProvider::new(FixtureProvider::new(serde_json::from_str(&json).unwrap(), PathBuf::new()));
        assert_eq!(p.detect("i", "cup").unwrap(), vec![bx]);
        let m = p.segment("i", &bx, 64, 48).unwrap();
        assert_eq!(m.count(), 10 * 20);
        assert!(matches!(p.detect("i", "bowl"), Err(ProviderError::Miss(_))));
        assert!(matches!(p.paraphrase("x"), Err(ProviderError::Miss(_))));
    }
}
