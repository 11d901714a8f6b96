//! A minimal scripted HTTP/1.1 server for provider tests.
//!
//! `serve` takes a list of (status, body) responses and plays them back one
//! connection at a time, capturing each request for later assertions. Every
//! response carries `Connection: close`, so clients open a fresh connection
//! per request and the script index equals the request index.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::JoinHandle;

/// One captured HTTP request.
pub struct CapturedRequest {
    /// Request line and headers, up to the blank line.
    pub head: String,
    /// Decoded request body.
    pub body: String,
}

/// A background server playing a fixed response script.
pub struct ScriptedServer {
    base_url: String,
    handle: JoinHandle<Vec<CapturedRequest>>,
}

impl ScriptedServer {
    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Waits for the whole script to play out and returns the captured
    /// requests in arrival order.
    pub fn finish(self) -> Vec<CapturedRequest> {
        self.handle.join().expect("test server thread panicked")
    }
}

/// Starts a server on an ephemeral localhost port.
pub fn serve(script: Vec<(u16, String)>) -> ScriptedServer {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
    let addr = listener.local_addr().expect("test server address");
    let handle = std::thread::spawn(move || {
        let mut captured = Vec::new();
        for (status, body) in script {
            let (mut stream, _) = listener.accept().expect("accept connection");
            captured.push(read_request(&mut stream));
            let response = format!(
                "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\n\
                 Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                reason(status),
                body.len(),
            );
            stream
                .write_all(response.as_bytes())
                .expect("write response");
            stream.flush().expect("flush response");
        }
        captured
    });
    ScriptedServer {
        base_url: format!("http://{addr}"),
        handle,
    }
}

fn read_request(stream: &mut TcpStream) -> CapturedRequest {
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") {
        let n = stream.read(&mut byte).expect("read request head");
        if n == 0 {
            break;
        }
        head.push(byte[0]);
    }
    let head = String::from_utf8_lossy(&head).to_string();
    let content_length = head
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            if name.eq_ignore_ascii_case("content-length") {
                value.trim().parse::<usize>().ok()
            } else {
                None
            }
        })
        .unwrap_or(0);
    let mut body = vec![0u8; content_length];
    stream.read_exact(&mut body).expect("read request body");
    CapturedRequest {
        head,
        body: String::from_utf8_lossy(&body).to_string(),
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        413 => "Payload Too Large",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Status",
    }
}
