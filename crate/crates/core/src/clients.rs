//! HTTP clients for the external model services, and the endpoint setting
//! that chooses between them and the bundled offline stubs.
//!
//! Wire formats (JSON over HTTP POST):
//!
//! | service     | request                              | response                        |
//! |-------------|--------------------------------------|---------------------------------|
//! | translation | `{text, source, target[, seed]}`     | `{text}`                        |
//! | generation  | `{prompt, max_length}`               | `{text}`                        |
//! | classifier  | `{text}`                             | `{labels: [..], probabilities: [..]}` |

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::augmentation::{DictionaryTranslator, TranslationClient, TranslationRequest};
use crate::intent::{check_distribution, check_label_set, BackendError, ClassifierBackend, IntentScore};
use crate::qa::{ContextSentenceGenerator, GenerationRequest, GenerativeClient};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("language pair {from} -> {to} is not supported")]
    UnsupportedPair { from: String, to: String },
    #[error("request to {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("{url} responded with HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("malformed response from {url}: {message}")]
    Malformed { url: String, message: String },
    #[error("input text is empty")]
    EmptyInput,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Where a model service lives: the bundled stub, or an HTTP endpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Endpoint {
    #[default]
    Stub,
    Http { url: String },
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Stub => f.write_str("stub"),
            Endpoint::Http { url } => f.write_str(url),
        }
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("stub") {
            Ok(Endpoint::Stub)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Endpoint::Http { url: s.to_string() })
        } else {
            Err(format!("endpoint must be `stub` or an http(s) URL, got {s:?}"))
        }
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> Self {
        e.to_string()
    }
}

impl TryFrom<String> for Endpoint {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Builds the translation client selected by `endpoint`.
pub fn translation_client(endpoint: &Endpoint, timeout: Duration) -> Box<dyn TranslationClient> {
    match endpoint {
        Endpoint::Stub => Box::new(DictionaryTranslator::new()),
        Endpoint::Http { url } => Box::new(HttpTranslationClient::new(url.clone(), timeout)),
    }
}

/// Builds the generative client selected by `endpoint`.
pub fn generative_client(endpoint: &Endpoint, timeout: Duration) -> Box<dyn GenerativeClient> {
    match endpoint {
        Endpoint::Stub => Box::new(ContextSentenceGenerator),
        Endpoint::Http { url } => Box::new(HttpGenerativeClient::new(url.clone(), timeout)),
    }
}

struct JsonPoster {
    url: String,
    http: reqwest::blocking::Client,
}

impl JsonPoster {
    fn new(url: String, timeout: Duration) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        Self { url, http }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, ClientError> {
        let transport = |e: reqwest::Error| ClientError::Transport {
            url: self.url.clone(),
            message: e.to_string(),
        };
        let response = self.http.post(&self.url).json(body).send().map_err(transport)?;
        let status = response.status();
        let text = response.text().map_err(transport)?;
        if !status.is_success() {
            return Err(ClientError::Status {
                url: self.url.clone(),
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Malformed {
            url: self.url.clone(),
            message: e.to_string(),
        })
    }
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

/// Translation service client. Every language pair is attempted; the
/// service reports unsupported pairs as HTTP errors.
pub struct HttpTranslationClient {
    poster: JsonPoster,
}

impl HttpTranslationClient {
    pub fn new(url: String, timeout: Duration) -> Self {
        Self {
            poster: JsonPoster::new(url, timeout),
        }
    }
}

impl TranslationClient for HttpTranslationClient {
    fn translate(&self, request: &TranslationRequest) -> Result<String, ClientError> {
        let resp: TextResponse = self.poster.post(request)?;
        Ok(resp.text)
    }

    fn language_pairs(&self) -> Option<Vec<(String, String)>> {
        None
    }
}

pub struct HttpGenerativeClient {
    poster: JsonPoster,
}

impl HttpGenerativeClient {
    pub fn new(url: String, timeout: Duration) -> Self {
        Self {
            poster: JsonPoster::new(url, timeout),
        }
    }
}

impl GenerativeClient for HttpGenerativeClient {
    fn complete(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let resp: TextResponse = self.poster.post(request)?;
        Ok(resp.text)
    }
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    labels: Vec<String>,
    probabilities: Vec<f64>,
}

/// External intent classifier. Responses must name exactly `labels` and
/// carry a normalized distribution.
pub struct HttpClassifierBackend {
    poster: JsonPoster,
    labels: Vec<String>,
}

impl HttpClassifierBackend {
    pub fn new(url: String, timeout: Duration, labels: Vec<String>) -> Self {
        Self {
            poster: JsonPoster::new(url, timeout),
            labels,
        }
    }
}

impl ClassifierBackend for HttpClassifierBackend {
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn classify(&self, question: &str) -> Result<Vec<IntentScore>, BackendError> {
        let resp: ClassifyResponse = self
            .poster
            .post(&ClassifyRequest { text: question })
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        check_label_set(&self.labels, &resp.labels)?;
        check_distribution(&self.labels, &resp.labels, &resp.probabilities)
    }
}
