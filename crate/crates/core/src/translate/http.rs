//! HTTP machine-translation client.
//!
//! Wire contract: `POST {endpoint}/translate` with body
//! `{"q": text, "source": code, "target": code, "format": "text"}` and
//! response `{"translatedText": text}`. Transient failures (connection
//! errors, timeouts, 5xx) are retried with exponential backoff; 4xx and
//! malformed bodies fail immediately.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::translate::{Lang, Translator};

#[derive(Serialize)]
struct TranslateRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
    format: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

/// Blocking HTTP translator with retry and optional bearer auth.
pub struct HttpTranslator {
    endpoint: String,
    client: reqwest::blocking::Client,
    retries: u32,
    backoff: Duration,
    bearer_token: Option<String>,
}

impl HttpTranslator {
    pub fn new(endpoint: &str) -> Result<HttpTranslator> {
        Self::with_options(endpoint, Duration::from_secs(10), 3, Duration::from_millis(50), None)
    }

    pub fn with_options(
        endpoint: &str,
        timeout: Duration,
        retries: u32,
        backoff: Duration,
        bearer_token: Option<String>,
    ) -> Result<HttpTranslator> {
        if retries == 0 {
            return Err(Error::Config("retries must be >= 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Translate(format!("failed to build http client: {e}")))?;
        Ok(HttpTranslator {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client,
            retries,
            backoff,
            bearer_token,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, src: Lang, dst: Lang) -> Result<String> {
        if src == dst {
            return Err(Error::Translate(format!(
                "source and target language are both {src}"
            )));
        }
        let url = format!("{}/translate", self.endpoint);
        let body = TranslateRequest {
            q: text,
            source: src.as_str(),
            target: dst.as_str(),
            format: "text",
        };
        let mut last_failure = String::new();
        for attempt in 1..=self.retries {
            let mut request = self.client.post(&url).json(&body);
            if let Some(token) = &self.bearer_token {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response.json::<TranslateResponse>().map(|r| r.translated_text).map_err(
                            |e| {
                                Error::Translate(format!(
                                    "malformed response body from {url}: {e}"
                                ))
                            },
                        );
                    }
                    let failure = format!("http status {status} from {url}");
                    if !status.is_server_error() {
                        return Err(Error::Translate(failure));
                    }
                    last_failure = failure;
                }
                Err(e) => {
                    last_failure = format!("request to {url} failed: {e}");
                }
            }
            if attempt < self.retries {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
        }
        Err(Error::Translate(format!(
            "{last_failure} (gave up after {} attempts)",
            self.retries
        )))
    }
}
