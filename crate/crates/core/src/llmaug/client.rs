use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::transport::{HttpResponse, Transport};
use super::{build_prompt, parse_and_validate, AugmentationResult, PromptTemplate};
use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Environment variable holding the endpoint's bearer token.
pub const API_KEY_VAR: &str = "EO_REWRITE_API_KEY";

pub fn token_from_env() -> Option<String> {
    std::env::var(API_KEY_VAR).ok().filter(|t| !t.is_empty())
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn post(&self, url: &str, token: Option<&str>, body: &Value, timeout: Duration) -> Result<HttpResponse, String> {
        (**self).post(url, token, body, timeout)
    }

    fn requires_auth(&self) -> bool {
        (**self).requires_auth()
    }
}

#[derive(Clone)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// First backoff delay; doubled after every failed attempt.
    pub backoff: Duration,
    /// Most requests in flight at once.
    pub cap: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: String::new(),
            model: "gpt-3.5-turbo".into(),
            token: None,
            timeout: Duration::from_secs(60),
            max_retries: 4,
            backoff: Duration::from_millis(500),
            cap: 4,
        }
    }
}

impl std::fmt::Debug for ClientConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff", &self.backoff)
            .field("cap", &self.cap)
            .finish()
    }
}

/// Counting semaphore.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct LlmClient {
    transport: Box<dyn Transport>,
    config: ClientConfig,
    slots: Slots,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("config", &self.config).finish_non_exhaustive()
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl LlmClient {
    pub fn new(transport: impl Transport + 'static, config: ClientConfig) -> Result<Self> {
        if config.cap == 0 {
            return Err(Error::Config("request cap must be positive".into()));
        }
        Ok(LlmClient {
            transport: Box::new(transport),
            slots: Slots {
                free: Mutex::new(config.cap),
                cv: Condvar::new(),
            },
            config,
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Sends `prompt` as a single user message and returns the reply text.
    /// Connection failures, 429 and 5xx responses are retried with
    /// exponential backoff.
    pub fn request_completion(&self, prompt: &str) -> Result<String> {
        let token = self.config.token.as_deref();
        if token.is_none() && self.transport.requires_auth() {
            return Err(Error::Config(format!("no API token: set {API_KEY_VAR}")));
        }
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let attempts = self.config.max_retries + 1;
        let mut delay = self.config.backoff;
        let mut last: (Option<u16>, String) = (None, String::new());
        for attempt in 1..=attempts {
            let outcome = {
                let _permit = self.slots.acquire();
                self.transport.post(&self.config.endpoint, token, &body, self.config.timeout)
            };
            match outcome {
                Ok(r) if r.status == 200 => {
                    return extract_content(&r.body).ok_or_else(|| Error::Request {
                        attempts: attempt,
                        status: Some(200),
                        message: "response has no choices[0].message.content".into(),
                    });
                }
                Ok(r) if retryable(r.status) => last = (Some(r.status), truncate(&r.body)),
                Ok(r) => {
                    return Err(Error::Request {
                        attempts: attempt,
                        status: Some(r.status),
                        message: format!("HTTP {}: {}", r.status, truncate(&r.body)),
                    })
                }
                Err(e) => last = (None, e),
            }
            if attempt < attempts {
                log::warn!("request attempt {attempt} failed ({}), retrying in {delay:?}", last.1);
                std::thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
        }
        let message = match last.0 {
            Some(s) => format!("HTTP {s}: {}", last.1),
            None => last.1,
        };
        Err(Error::Request {
            attempts,
            status: last.0,
            message,
        })
    }

    /// Prompts for and validates a paraphrased history.
    pub fn augment(&self, sample: &Sample, template: &PromptTemplate) -> Result<AugmentationResult> {
        let raw = self.request_completion(&build_prompt(sample, template))?;
        Ok(parse_and_validate(&raw, sample))
    }
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v["choices"][0]["message"]["content"].as_str().map(str::to_string)
}

fn truncate(s: &str) -> String {
    const MAX: usize = 200;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Augments every sample with up to `config.cap` requests in flight.
/// Results come back in input order; a failed request yields `Err` for
/// that sample only.
pub fn augment_samples(
    client: &LlmClient,
    samples: &[Sample],
    template: &PromptTemplate,
) -> Vec<Result<AugmentationResult>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<AugmentationResult>>>> =
        Mutex::new((0..samples.len()).map(|_| None).collect());
    let workers = client.config.cap.min(samples.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= samples.len() {
                    break;
                }
                let r = client.augment(&samples[i], template);
                results.lock().expect("lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("lock")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}
