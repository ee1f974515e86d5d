//! Scripted mock chat-completion server for executor tests.
//!
//! Fixture format: a `Vec<MockResponse>` consumed one entry per incoming
//! request, in order. Each entry gives an HTTP status, a raw response body,
//! and an optional delay before the response is written (drive client
//! timeouts by setting the delay past the client's timeout). Requests beyond
//! the script get `500` with an `exhausted` body. All received request
//! bodies are captured for assertions.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

/// One scripted response.
#[derive(Debug, Clone)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        MockResponse {
            status: 200,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn error(status: u16) -> Self {
        MockResponse {
            status,
            body: format!("{{\"error\":\"scripted failure {status}\"}}"),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(body: impl Into<String>, delay: Duration) -> Self {
        MockResponse {
            status: 200,
            body: body.into(),
            delay,
        }
    }
}

/// A minimal chat-completion response body with the given content and usage.
pub fn chat_completion_body(content: &str, prompt_tokens: u32, completion_tokens: u32) -> String {
    format!(
        "{{\"choices\":[{{\"message\":{{\"role\":\"assistant\",\"content\":\"{content}\"}}}}],\
         \"usage\":{{\"prompt_tokens\":{prompt_tokens},\"completion_tokens\":{completion_tokens}}}}}"
    )
}

/// The running mock server. Dropping it shuts the listener down.
pub struct MockServer {
    addr: std::net::SocketAddr,
    requests: Arc<Mutex<Vec<String>>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Start serving the script on an ephemeral localhost port.
    pub fn start(script: Vec<MockResponse>) -> std::io::Result<MockServer> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let req_clone = Arc::clone(&requests);
        let stop = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || {
            let mut script = script.into_iter();
            while !stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let response = script.next().unwrap_or_else(|| MockResponse {
                            status: 500,
                            body: "{\"error\":\"mock script exhausted\"}".into(),
                            delay: Duration::ZERO,
                        });
                        let _ = handle_connection(stream, &response, &req_clone);
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(MockServer {
            addr,
            requests,
            shutdown,
            handle: Some(handle),
        })
    }

    /// Base URL to point a `RemoteEndpoint` at.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Raw request bodies received so far, in arrival order.
    pub fn received(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    response: &MockResponse,
    received: &Arc<Mutex<Vec<String>>>,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let mut reader = BufReader::new(stream);

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(v) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(|s| s.trim().to_string())
        {
            content_length = v.parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    // record before responding so callers that saw the response also see
    // the request
    received
        .lock()
        .unwrap()
        .push(String::from_utf8_lossy(&body).to_string());

    if !response.delay.is_zero() {
        std::thread::sleep(response.delay);
    }

    let mut stream = reader.into_inner();
    let reason = match response.status {
        200 => "OK",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let payload = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        reason,
        response.body.len(),
        response.body
    );
    stream.write_all(payload.as_bytes())?;
    stream.flush()?;
    Ok(())
}
