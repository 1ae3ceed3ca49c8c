use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{sequence_events, IngestError, SaleEvent};
use crate::wei::Wei;

/// Environment variable holding the explorer API key.
pub const API_KEY_ENV: &str = "NFTPROJ_API_KEY";

/// Connection settings for an Etherscan-compatible explorer.
///
/// Requests are `GET {base_url}?module=..&action=..&contractaddress=..&startblock=..
/// &endblock=..&page=..&offset=..&apikey=..`. The response is expected to be
/// `{"status": "1", "message": "OK", "result": [ {..}, .. ]}` where each
/// record carries `tokenID`, `timeStamp` (unix seconds), `price` (wei, decimal
/// string) and optionally `eventType`.
#[derive(Clone)]
pub struct IngestConfig {
    pub base_url: String,
    pub api_key: String,
    pub page_size: u32,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub module: String,
    pub action: String,
    pub timeout: Duration,
}

impl std::fmt::Debug for IngestConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IngestConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("page_size", &self.page_size)
            .field("max_retries", &self.max_retries)
            .field("retry_backoff_ms", &self.retry_backoff_ms)
            .field("module", &self.module)
            .field("action", &self.action)
            .finish()
    }
}

impl IngestConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        IngestConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            page_size: 1000,
            max_retries: 5,
            retry_backoff_ms: 500,
            module: "nft".into(),
            action: "sales".into(),
            timeout: Duration::from_secs(30),
        }
    }

    /// Builds a config reading the API key from [`API_KEY_ENV`].
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, IngestError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| IngestError::Config(format!("environment variable {API_KEY_ENV} is not set")))?;
        Ok(Self::new(base_url, key))
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.page_size == 0 {
            return Err(IngestError::Config("page_size must be at least 1".into()));
        }
        if self.retry_backoff_ms == 0 {
            return Err(IngestError::Config("retry_backoff_ms must be positive".into()));
        }
        Ok(())
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

/// Fetches every sale of `collection_address` between the two blocks,
/// paginating until the explorer returns an empty page.
pub fn fetch_events(
    config: &IngestConfig,
    collection_address: &str,
    from_block: u64,
    to_block: u64,
) -> Result<Vec<SaleEvent>, IngestError> {
    config.validate()?;
    if from_block > to_block {
        return Err(IngestError::Config(format!(
            "from_block {from_block} is after to_block {to_block}"
        )));
    }
    let collection_id = collection_address.to_ascii_lowercase();
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(config.timeout))
        .build()
        .into();

    let mut events = Vec::new();
    for page in 1u64.. {
        let body = request_page(&agent, config, &collection_id, from_block, to_block, page)?;
        let records = parse_page(&body, page)?;
        if records.is_empty() {
            break;
        }
        for (i, rec) in records.iter().enumerate() {
            events.push(record_to_event(rec, &collection_id, page, i)?);
        }
    }
    Ok(sequence_events(events))
}

fn request_page(
    agent: &ureq::Agent,
    config: &IngestConfig,
    address: &str,
    from_block: u64,
    to_block: u64,
    page: u64,
) -> Result<String, IngestError> {
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let outcome = match agent
            .get(&config.base_url)
            .query("module", &config.module)
            .query("action", &config.action)
            .query("contractaddress", address)
            .query("startblock", from_block.to_string())
            .query("endblock", to_block.to_string())
            .query("page", page.to_string())
            .query("offset", config.page_size.to_string())
            .query("apikey", &config.api_key)
            .call()
        {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if status == 429 || status >= 500 {
                    Attempt::Retry(format!("status {status}"))
                } else if status >= 400 {
                    Attempt::Fatal(format!("status {status}"))
                } else {
                    match resp.body_mut().read_to_string() {
                        Ok(body) if is_rate_limited(&body) => Attempt::Retry("rate limited".into()),
                        Ok(body) => Attempt::Done(body),
                        Err(e) => Attempt::Retry(e.to_string()),
                    }
                }
            }
            Err(e) => Attempt::Retry(e.to_string()),
        };
        match outcome {
            Attempt::Done(body) => return Ok(body),
            Attempt::Fatal(message) => return Err(IngestError::Http { attempts, message }),
            Attempt::Retry(message) => {
                if attempts > config.max_retries {
                    return Err(IngestError::Http { attempts, message });
                }
                let shift = (attempts - 1).min(16);
                thread::sleep(Duration::from_millis(config.retry_backoff_ms << shift));
            }
        }
    }
}

fn is_rate_limited(body: &str) -> bool {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.get("result").and_then(Value::as_str).map(str::to_ascii_lowercase))
        .is_some_and(|r| r.contains("rate limit"))
}

fn parse_page(body: &str, page: u64) -> Result<Vec<Value>, IngestError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| IngestError::Schema(format!("page {page}: invalid json: {e}")))?;
    match v.get("result") {
        Some(Value::Array(items)) => Ok(items.clone()),
        Some(Value::String(msg)) => Err(IngestError::Schema(format!("page {page}: explorer error `{msg}`"))),
        _ => Err(IngestError::Schema(format!("page {page}: missing `result` array"))),
    }
}

fn record_to_event(rec: &Value, collection_id: &str, page: u64, index: usize) -> Result<SaleEvent, IngestError> {
    let schema = |what: &str| IngestError::Schema(format!("page {page} record {index}: {what}"));
    let text = |key: &str| -> Result<String, IngestError> {
        match rec.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            _ => Err(schema(&format!("missing `{key}`"))),
        }
    };
    if let Some(kind) = rec.get("eventType").and_then(Value::as_str) {
        if !kind.eq_ignore_ascii_case("sale") {
            return Err(IngestError::NotASale {
                line: index as u64 + 1,
                kind: kind.to_string(),
            });
        }
    }
    let token_id = text("tokenID")?.parse::<u64>().map_err(|_| schema("bad `tokenID`"))?;
    let timestamp = text("timeStamp")?
        .parse::<u64>()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| schema("bad `timeStamp`"))?;
    let price_wei = text("price")?.parse::<u128>().map(Wei).map_err(|_| schema("bad `price`"))?;
    Ok(SaleEvent {
        collection_id: collection_id.to_string(),
        token_id,
        timestamp,
        price_wei,
        seq: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_block_range() {
        let cfg = IngestConfig::new("http://127.0.0.1:9", "k");
        assert!(matches!(fetch_events(&cfg, "0xabc", 10, 5), Err(IngestError::Config(_))));
    }

    #[test]
    fn rejects_zero_page_size() {
        let mut cfg = IngestConfig::new("http://127.0.0.1:9", "k");
        cfg.page_size = 0;
        assert!(matches!(fetch_events(&cfg, "0xabc", 0, 5), Err(IngestError::Config(_))));
    }

    #[test]
    fn debug_hides_api_key() {
        let cfg = IngestConfig::new("http://x", "supersecret");
        assert!(!format!("{cfg:?}").contains("supersecret"));
    }

    #[test]
    fn record_schema_errors() {
        let rec: Value = serde_json::json!({"tokenID": "1", "timeStamp": "5"});
        assert!(matches!(record_to_event(&rec, "c", 1, 0), Err(IngestError::Schema(_))));
        assert!(matches!(parse_page("{\"status\":\"1\"}", 1), Err(IngestError::Schema(_))));
    }
}
