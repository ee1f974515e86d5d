//! Chat-completion endpoint backend.
//!
//! Speaks the interoperable wire shape: request
//! `{model, messages, temperature}`, response
//! `{choices[0].message.content, usage{prompt_tokens, completion_tokens}}`.
//! Network failures, timeouts, and malformed responses degrade to failed
//! steps; the engine loop never aborts on backend errors.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ExecutionBackend, StepContext, StepOutcome, Task};
use crate::operators::OperatorSpec;

/// A remote chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    /// Base URL, e.g. `http://127.0.0.1:8080/v1`; the client posts to
    /// `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    /// Extra attempts after the first; total attempts = max_retries + 1.
    pub max_retries: u32,
    /// First backoff sleep in seconds; doubles per retry.
    #[serde(default = "default_backoff")]
    pub backoff_base_secs: f64,
}

fn default_backoff() -> f64 {
    1.0
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    temperature: f64,
}

#[derive(Serialize, Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: f64,
    completion_tokens: f64,
}

impl RemoteEndpoint {
    fn attempt(&self, op: &OperatorSpec, task: &Task, context: &StepContext) -> Result<(String, f64), String> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let transcript = context.transcript();
        let user = if transcript.is_empty() {
            task.prompt.clone()
        } else {
            format!("{}\n\nPrior answers:\n{}", task.prompt, transcript)
        };
        let request = ChatRequest {
            model: &self.model,
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: op.prompt_template.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: user,
                },
            ],
            temperature: 0.0,
        };
        let mut response = ureq::post(&url)
            .config()
            .timeout_global(Some(Duration::from_secs_f64(self.timeout_secs)))
            .build()
            .send_json(&request)
            .map_err(|e| format!("request failed: {e}"))?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| format!("malformed response: {e}"))?;
        let content = parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| "malformed response: no choices[0].message.content".to_string())?;
        let tokens = parsed
            .usage
            .map(|u| u.prompt_tokens + u.completion_tokens)
            .unwrap_or(0.0);
        Ok((content, tokens))
    }
}

impl ExecutionBackend for RemoteEndpoint {
    fn execute_step(&self, op: &OperatorSpec, task: &Task, context: &StepContext, _seed: u64) -> StepOutcome {
        let start = Instant::now();
        let mut api_calls = 0u32;
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            api_calls += 1;
            match self.attempt(op, task, context) {
                Ok((answer, tokens)) => {
                    return StepOutcome {
                        operator: op.id.clone(),
                        answer,
                        tokens,
                        api_calls,
                        latency: start.elapsed().as_secs_f64(),
                        success: true,
                        // the wire carries no confidence signal, so remote
                        // steps never trigger early exit
                        confidence: 0.0,
                    };
                }
                Err(e) => {
                    last_error = e;
                    if attempt < self.max_retries {
                        let backoff = self.backoff_base_secs * 2f64.powi(attempt as i32);
                        std::thread::sleep(Duration::from_secs_f64(backoff));
                    }
                }
            }
        }
        StepOutcome {
            operator: op.id.clone(),
            answer: format!("backend error: {last_error}"),
            tokens: 0.0,
            api_calls,
            latency: start.elapsed().as_secs_f64(),
            success: false,
            confidence: 0.0,
        }
    }
}
