//! JSON-over-HTTP client for out-of-process model services.
//!
//! Every neural component (knowledge model, sentence embedder, NLI model,
//! token embedder) is reached through one POST endpoint that takes a JSON
//! request and answers with a JSON response.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("service {endpoint} unavailable: {reason}")]
    Unavailable { endpoint: String, reason: String },
    #[error("service {endpoint} returned a malformed response: {reason}")]
    Malformed { endpoint: String, reason: String },
}

#[derive(Debug, Clone)]
pub struct ServiceClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl ServiceClient {
    pub fn new(endpoint: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(300))
            .build();
        ServiceClient {
            endpoint: endpoint.to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn call<Req, Resp>(&self, request: &Req) -> Result<Resp, ServiceError>
    where
        Req: Serialize,
        Resp: DeserializeOwned,
    {
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| ServiceError::Unavailable {
                endpoint: self.endpoint.clone(),
                reason: e.to_string(),
            })?;
        response.into_json().map_err(|e| ServiceError::Malformed {
            endpoint: self.endpoint.clone(),
            reason: e.to_string(),
        })
    }
}

/// Minimal single-threaded HTTP responder for exercising service clients in
/// tests. Each request body is passed to `handler`; its return value is sent
/// back as a JSON body.
#[doc(hidden)]
pub mod testing {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    pub fn spawn<F>(handler: F) -> String
    where
        F: Fn(&str) -> String + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test listener");
        let addr = listener.local_addr().expect("local addr");
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((name, value)) = line.split_once(':') {
                        if name.eq_ignore_ascii_case("content-length") {
                            length = value.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                let reply = handler(&String::from_utf8_lossy(&body));
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.len(),
                    reply
                );
            }
        });
        format!("http://{addr}/")
    }
}
