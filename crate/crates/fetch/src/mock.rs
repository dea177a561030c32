//! A loopback HTTP/1.1 file server with fault injection, for tests.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

#[derive(Debug, Clone, Default)]
pub struct MockFile {
    pub body: Vec<u8>,
    /// Send only this many bytes of the first response, then hang up.
    pub truncate_first: Option<usize>,
    /// Answer the first `n` requests with 503.
    pub fail_first: usize,
    /// Honor `Range: bytes=N-` with 206 responses.
    pub ranges: bool,
}

impl MockFile {
    pub fn new(body: impl Into<Vec<u8>>) -> Self {
        Self {
            body: body.into(),
            ranges: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockRequest {
    pub path: String,
    pub headers: Vec<(String, String)>,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Default)]
struct State {
    files: HashMap<String, MockFile>,
    served: HashMap<String, usize>,
    requests: Vec<MockRequest>,
    token: Option<String>,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start() -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let state = Arc::new(Mutex::new(State::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let (st, sp) = (state.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if sp.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = conn {
                    let st = st.clone();
                    std::thread::spawn(move || {
                        let _ = handle(stream, &st);
                    });
                }
            }
        });
        Ok(Self {
            addr,
            state,
            stop,
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url(), path.trim_start_matches('/'))
    }

    pub fn serve(&self, path: &str, file: MockFile) {
        let key = format!("/{}", path.trim_start_matches('/'));
        self.state.lock().unwrap().files.insert(key, file);
    }

    /// Reject requests without `Authorization: Bearer <token>`.
    pub fn require_token(&self, token: &str) {
        self.state.lock().unwrap().token = Some(token.to_string());
    }

    /// Number of GET requests seen for `path`.
    pub fn hits(&self, path: &str) -> usize {
        let key = format!("/{}", path.trim_start_matches('/'));
        self.state.lock().unwrap().requests.iter().filter(|r| r.path == key).count()
    }

    pub fn total_hits(&self) -> usize {
        self.state.lock().unwrap().requests.len()
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.state.lock().unwrap().requests.clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle(mut stream: TcpStream, state: &Mutex<State>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let req = MockRequest { path, headers };

    let (status, extra, body, cut) = {
        let mut st = state.lock().unwrap();
        st.requests.push(req.clone());
        let authorized = match &st.token {
            Some(t) => req.header("authorization") == Some(&format!("Bearer {t}")),
            None => true,
        };
        let n = *st.served.entry(req.path.clone()).or_default();
        *st.served.get_mut(&req.path).unwrap() += 1;
        match st.files.get(&req.path) {
            _ if !authorized => ("401 Unauthorized", String::new(), Vec::new(), None),
            None => ("404 Not Found", String::new(), Vec::new(), None),
            Some(f) if n < f.fail_first => ("503 Service Unavailable", String::new(), Vec::new(), None),
            Some(f) => {
                let cut = if n == f.fail_first { f.truncate_first } else { None };
                let start = req
                    .header("range")
                    .and_then(|r| r.strip_prefix("bytes="))
                    .and_then(|r| r.strip_suffix('-'))
                    .and_then(|r| r.parse::<usize>().ok())
                    .filter(|_| f.ranges);
                match start {
                    Some(s) if s >= f.body.len() => (
                        "416 Range Not Satisfiable",
                        format!("Content-Range: bytes */{}\r\n", f.body.len()),
                        Vec::new(),
                        None,
                    ),
                    Some(s) => (
                        "206 Partial Content",
                        format!("Content-Range: bytes {s}-{}/{}\r\n", f.body.len() - 1, f.body.len()),
                        f.body[s..].to_vec(),
                        cut,
                    ),
                    None => ("200 OK", String::new(), f.body.clone(), cut),
                }
            }
        }
    };
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Length: {}\r\nAccept-Ranges: bytes\r\n{extra}Connection: close\r\n\r\n",
        body.len()
    )?;
    let sent = cut.map_or(body.len(), |c| c.min(body.len()));
    stream.write_all(&body[..sent])?;
    stream.flush()?;
    Ok(())
}
