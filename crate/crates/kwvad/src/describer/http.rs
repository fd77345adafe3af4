use std::collections::BTreeMap;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{DescribeError, FrameImage, Provider, ProviderConfig, Reply};

/// Client for an OpenAI-compatible `/v1/chat/completions` endpoint.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    url: String,
    config: ProviderConfig,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, DescribeError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| DescribeError::ProviderUnreachable {
                attempts: 0,
                last_error: e.to_string(),
            })?;
        let url = format!("{}/v1/chat/completions", config.endpoint_url.trim_end_matches('/'));
        Ok(Self { client, url, config })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

pub(crate) fn request_body(image: &FrameImage, prompt: &str, model_id: &str) -> Value {
    let data = base64::engine::general_purpose::STANDARD.encode(&image.bytes);
    json!({
        "model": model_id,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": format!("data:{};base64,{data}", image.mime)}},
            ],
        }],
    })
}

/// Pulls `choices[0].message.content` plus whatever generation details the
/// server volunteered.
pub(crate) fn parse_response(frame_id: &str, body: &Value) -> Result<Reply, DescribeError> {
    let choice = &body["choices"][0];
    let text = match &choice["message"]["content"] {
        Value::String(s) => s.clone(),
        // Some servers return content as a list of typed parts.
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => String::new(),
    };
    if text.trim().is_empty() {
        return Err(DescribeError::EmptyResponse(frame_id.to_string()));
    }
    let mut metadata = BTreeMap::new();
    let mut note = |key: &str, v: &Value| {
        if !v.is_null() {
            let s = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
            metadata.insert(key.to_string(), s);
        }
    };
    note("response_model", &body["model"]);
    note("response_id", &body["id"]);
    note("finish_reason", &choice["finish_reason"]);
    note("system_fingerprint", &body["system_fingerprint"]);
    note("usage", &body["usage"]);
    Ok(Reply { text, metadata })
}

fn retryable(status: reqwest::StatusCode) -> bool {
    status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS
}

impl Provider for HttpProvider {
    fn describe(&self, image: &FrameImage, prompt: &str, model_id: &str) -> Result<Reply, DescribeError> {
        let body = request_body(image, prompt, model_id);
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff(attempt - 1);
                log::debug!("retrying frame {} in {wait:?}: {last_error}", image.frame_id);
                std::thread::sleep(wait);
            }
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_success() {
                let value: Value = match resp.json() {
                    Ok(v) => v,
                    Err(e) => {
                        last_error = format!("malformed response: {e}");
                        continue;
                    }
                };
                return parse_response(&image.frame_id, &value);
            }
            let text = resp.text().unwrap_or_default();
            if retryable(status) {
                last_error = format!("HTTP {}: {}", status.as_u16(), text.trim());
                continue;
            }
            return Err(DescribeError::ProviderRejected {
                status: status.as_u16(),
                body: text,
            });
        }
        Err(DescribeError::ProviderUnreachable { attempts, last_error })
    }
}
