//! Caption service client and a deterministic stand-in server.
//!
//! Wire contract: `POST /caption` with a JSON body
//! `{"clip_id": str, "frames": [base64 RVID frame; 4], "prompt": str}`,
//! answered by `{"text": str}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{decode_video, encode_frame, Frame};

const PROMPT: &str = "A chat between a curious user and an artificial intelligence assistant. \
\"The assistant gives helpful, detailed, and polite answers to the user's questions.\" \
Please provide a description of this video.";

pub fn default_prompt() -> &'static str {
    PROMPT
}

/// Number of maximal runs of non-whitespace characters.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub clip_id: String,
    pub text: String,
    pub word_count: usize,
}

impl Caption {
    pub fn new(clip_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            clip_id: clip_id.into(),
            word_count: word_count(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRequest {
    pub clip_id: String,
    /// Clip-local keyframe indices.
    pub frame_refs: [u32; 4],
    pub prompt: String,
}

impl CaptionRequest {
    pub fn new(clip_id: impl Into<String>, clip_len: u32) -> Self {
        Self {
            clip_id: clip_id.into(),
            frame_refs: crate::dedup::keyframe_indices(clip_len),
            prompt: default_prompt().to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireRequest {
    pub clip_id: String,
    pub frames: Vec<String>,
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireResponse {
    pub text: String,
}

pub trait Captioner: Send + Sync {
    fn name(&self) -> &str;
    /// `keyframes` are the frames named by `request.frame_refs`, in order.
    fn caption(&self, request: &CaptionRequest, keyframes: &[Frame]) -> Result<Caption>;
}

pub fn encode_request(request: &CaptionRequest, keyframes: &[Frame]) -> Result<WireRequest> {
    let frames = keyframes
        .iter()
        .map(|f| encode_frame(f).map(|b| BASE64.encode(b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(WireRequest {
        clip_id: request.clip_id.clone(),
        frames,
        prompt: request.prompt.clone(),
    })
}

fn caption_from_text(clip_id: &str, text: String) -> Result<Caption> {
    if text.trim().is_empty() {
        return Err(Error::CaptionResponse(format!("empty caption for {clip_id}")));
    }
    Ok(Caption::new(clip_id, text))
}

/// Client for the HTTP caption service.
pub struct HttpCaptioner {
    url: String,
    agent: ureq::Agent,
}

impl HttpCaptioner {
    /// `endpoint` is the service base URL, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        Self {
            url: format!("{}/caption", endpoint.trim_end_matches('/')),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Captioner for HttpCaptioner {
    fn name(&self) -> &str {
        "http"
    }

    fn caption(&self, request: &CaptionRequest, keyframes: &[Frame]) -> Result<Caption> {
        let body = encode_request(request, keyframes)?;
        let resp = match self.agent.post(&self.url).send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) if code >= 500 || code == 429 => {
                return Err(Error::CaptionTransport(format!(
                    "{}: status {code} {}",
                    self.url,
                    r.status_text()
                )))
            }
            Err(ureq::Error::Status(code, _)) => {
                return Err(Error::CaptionResponse(format!("{}: status {code}", self.url)))
            }
            Err(e) => return Err(Error::CaptionTransport(format!("{}: {e}", self.url))),
        };
        let raw = resp
            .into_string()
            .map_err(|e| Error::CaptionTransport(format!("{}: {e}", self.url)))?;
        let parsed: WireResponse =
            serde_json::from_str(&raw).map_err(|e| Error::CaptionResponse(format!("{e}: {raw}")))?;
        caption_from_text(&request.clip_id, parsed.text)
    }
}

/// One-shot helper around [`HttpCaptioner`].
pub fn request_caption(
    request: &CaptionRequest,
    keyframes: &[Frame],
    endpoint: &str,
    timeout: Duration,
) -> Result<Caption> {
    HttpCaptioner::new(endpoint, timeout).caption(request, keyframes)
}

const VOCAB: &[&str] = &[
    "a", "the", "camera", "slowly", "pans", "across", "bright", "quiet", "street", "scene", "with",
    "people", "walking", "under", "soft", "light", "while", "trees", "sway", "in", "gentle", "wind",
    "and", "cars", "move", "past", "colorful", "buildings", "near", "river", "water", "reflects",
    "sky", "clouds", "drift", "above", "hills", "view", "shows", "close", "detail", "of", "textured",
    "surface", "moving", "square", "pattern", "shifts", "steadily", "toward", "right", "frame",
];

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic pseudo-caption of exactly `words` words for `clip_id`.
pub fn synthetic_caption(clip_id: &str, words: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(clip_id));
    (0..words)
        .map(|_| *VOCAB.choose(&mut rng).expect("vocab"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// In-process captioner answering exactly as [`MockCaptionServer`] would for
/// the same config, without the HTTP hop.
#[derive(Debug, Clone, Default)]
pub struct LocalCaptioner {
    pub config: MockConfig,
}

impl Captioner for LocalCaptioner {
    fn name(&self) -> &str {
        "local"
    }

    fn caption(&self, request: &CaptionRequest, _keyframes: &[Frame]) -> Result<Caption> {
        caption_from_text(&request.clip_id, mock_text(&self.config, &request.clip_id))
    }
}

fn mock_text(config: &MockConfig, clip_id: &str) -> String {
    if config.empty_for.iter().any(|s| clip_id.contains(s.as_str())) {
        String::new()
    } else if let Some(t) = &config.fixed_text {
        t.clone()
    } else {
        synthetic_caption(clip_id, config.words)
    }
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub words: usize,
    /// Returned verbatim for every request when set.
    pub fixed_text: Option<String>,
    /// Clip ids containing any of these substrings get an empty caption.
    pub empty_for: Vec<String>,
    /// The first `fail_first` requests are answered with 503.
    pub fail_first: usize,
    pub delay: Duration,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            words: 84,
            fixed_text: None,
            empty_for: Vec::new(),
            fail_first: 0,
            delay: Duration::ZERO,
        }
    }
}

/// Local HTTP server implementing the caption contract. Stops on drop.
pub struct MockCaptionServer {
    server: Arc<tiny_http::Server>,
    port: u16,
    handle: Option<JoinHandle<()>>,
    served: Arc<AtomicUsize>,
}

impl MockCaptionServer {
    /// Binds an ephemeral localhost port.
    pub fn start(config: MockConfig) -> Result<Self> {
        Self::start_on("127.0.0.1:0", config)
    }

    pub fn start_on(addr: &str, config: MockConfig) -> Result<Self> {
        let server = tiny_http::Server::http(addr)
            .map_err(|e| Error::CaptionTransport(format!("mock server bind {addr}: {e}")))?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| Error::CaptionTransport("mock server has no ip address".into()))?;
        let server = Arc::new(server);
        let served = Arc::new(AtomicUsize::new(0));
        let handle = {
            let server = Arc::clone(&server);
            let served = Arc::clone(&served);
            std::thread::Builder::new()
                .name("mock-caption".into())
                .spawn(move || {
                    for req in server.incoming_requests() {
                        let n = served.fetch_add(1, Ordering::SeqCst);
                        serve_one(req, &config, n);
                    }
                })
                .map_err(|e| Error::CaptionTransport(format!("mock server thread: {e}")))?
        };
        Ok(Self {
            server,
            port,
            handle: Some(handle),
            served,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    pub fn requests_served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }
}

impl Drop for MockCaptionServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn respond(req: tiny_http::Request, code: u16, body: String) {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    let _ = req.respond(
        tiny_http::Response::from_string(body)
            .with_status_code(code)
            .with_header(header),
    );
}

fn serve_one(mut req: tiny_http::Request, config: &MockConfig, n: usize) {
    if !config.delay.is_zero() {
        std::thread::sleep(config.delay);
    }
    if req.method() != &tiny_http::Method::Post || req.url() != "/caption" {
        return respond(req, 404, r#"{"error":"not found"}"#.into());
    }
    if n < config.fail_first {
        return respond(req, 503, r#"{"error":"warming up"}"#.into());
    }
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        return respond(req, 400, r#"{"error":"unreadable body"}"#.into());
    }
    let parsed: WireRequest = match serde_json::from_str(&body) {
        Ok(p) => p,
        Err(_) => return respond(req, 400, r#"{"error":"bad json"}"#.into()),
    };
    let frames_ok = parsed.frames.len() == 4
        && parsed
            .frames
            .iter()
            .all(|f| BASE64.decode(f).ok().and_then(|b| decode_video(&b).ok()).is_some());
    if !frames_ok {
        return respond(req, 400, r#"{"error":"expected 4 RVID frames"}"#.into());
    }
    let text = mock_text(config, &parsed.clip_id);
    let body = serde_json::to_string(&WireResponse { text }).expect("serializable");
    respond(req, 200, body)
}
