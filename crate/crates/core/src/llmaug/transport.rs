use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Sends one JSON POST. `Err` means no HTTP response was obtained
/// (connection failure, timeout); such errors are retried.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, token: Option<&str>, body: &Value, timeout: Duration) -> Result<HttpResponse, String>;

    /// Whether requests need an auth token.
    fn requires_auth(&self) -> bool {
        true
    }
}

/// Blocking HTTP transport.
#[derive(Debug, Default, Clone, Copy)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post(&self, url: &str, token: Option<&str>, body: &Value, timeout: Duration) -> Result<HttpResponse, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// What a [`MockTransport`] answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    /// HTTP 200 with a chat-completion body whose message is this text.
    Text(String),
    /// Any status with a raw body.
    Status(u16, String),
    /// No response at all.
    Fail(String),
}

type Handler = Box<dyn Fn(&str) -> MockReply + Send + Sync>;

/// In-process transport for tests and offline runs. Replies come from a
/// script (consumed in call order) and, once that is exhausted, from a
/// handler that sees the prompt. Records call counts and the peak number
/// of concurrent calls.
pub struct MockTransport {
    script: Mutex<VecDeque<MockReply>>,
    handler: Handler,
    delay: Duration,
    auth: bool,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl std::fmt::Debug for MockTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockTransport")
            .field("calls", &self.calls())
            .field("peak", &self.peak_concurrency())
            .finish_non_exhaustive()
    }
}

impl MockTransport {
    pub fn new(handler: impl Fn(&str) -> MockReply + Send + Sync + 'static) -> Self {
        MockTransport {
            script: Mutex::new(VecDeque::new()),
            handler: Box::new(handler),
            delay: Duration::ZERO,
            auth: false,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Always answers `text`.
    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| MockReply::Text(text.clone()))
    }

    /// Answers with the dialogue of the prompt's final `Input:` line, i.e.
    /// an identity paraphrase.
    pub fn echo() -> Self {
        Self::new(|prompt| {
            let input = prompt.rsplit_once("\nInput: ").map_or(prompt, |(_, s)| s);
            MockReply::Text(input.to_string())
        })
    }

    /// Replies to hand out before the handler takes over.
    pub fn with_script(self, replies: impl IntoIterator<Item = MockReply>) -> Self {
        self.script.lock().expect("lock").extend(replies);
        self
    }

    /// Sleeps this long inside every call.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Makes the client insist on an auth token.
    pub fn requiring_auth(mut self) -> Self {
        self.auth = true;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn post(&self, _url: &str, _token: Option<&str>, body: &Value, _timeout: Duration) -> Result<HttpResponse, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let scripted = self.script.lock().expect("lock").pop_front();
        let reply = scripted.unwrap_or_else(|| {
            let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
            (self.handler)(prompt)
        });
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        match reply {
            MockReply::Text(t) => Ok(HttpResponse {
                status: 200,
                body: json!({"choices": [{"message": {"role": "assistant", "content": t}}]}).to_string(),
            }),
            MockReply::Status(status, body) => Ok(HttpResponse { status, body }),
            MockReply::Fail(e) => Err(e),
        }
    }

    fn requires_auth(&self) -> bool {
        self.auth
    }
}
