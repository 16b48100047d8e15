use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use tungstenite::{Message, WebSocket};

use super::session::{handle_session, CheckpointRegistry, Incoming, SessionReport, SessionStore, Transport};
use crate::config::ServiceConfig;
use crate::error::{BvrError, Result};
use crate::mdp::EnvSettings;

fn ws_error(e: tungstenite::Error) -> BvrError {
    match e {
        tungstenite::Error::Io(io) => BvrError::Io(io),
        other => BvrError::Session {
            code: "WEBSOCKET".into(),
            message: other.to_string(),
        },
    }
}

/// Server side of an accepted web-socket connection.
pub struct WsTransport {
    socket: WebSocket<TcpStream>,
}

impl WsTransport {
    pub fn accept(stream: TcpStream) -> Result<Self> {
        let socket = tungstenite::accept(stream).map_err(|e| BvrError::Session {
            code: "HANDSHAKE".into(),
            message: e.to_string(),
        })?;
        Ok(Self { socket })
    }
}

impl Transport for WsTransport {
    fn send(&mut self, text: &str) -> Result<()> {
        self.socket.send(Message::text(text)).map_err(ws_error)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Incoming> {
        let timeout = timeout.max(Duration::from_millis(1));
        self.socket.get_mut().set_read_timeout(Some(timeout))?;
        loop {
            return match self.socket.read() {
                Ok(Message::Text(t)) => Ok(Incoming::Text(t.to_string())),
                Ok(Message::Binary(b)) => Ok(Incoming::Text(String::from_utf8_lossy(&b).into_owned())),
                Ok(Message::Close(_)) => Ok(Incoming::Closed),
                Ok(_) => continue,
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    Ok(Incoming::Idle)
                }
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => Ok(Incoming::Closed),
                Err(e) => Err(ws_error(e)),
            };
        }
    }

    fn close(&mut self) {
        let _ = self.socket.close(None);
        let _ = self.socket.flush();
    }
}

/// Everything a running server shares between connection threads.
pub struct ServerContext {
    pub config: ServiceConfig,
    pub settings: EnvSettings,
    pub registry: CheckpointRegistry,
    pub sessions: SessionStore,
}

/// A bound listener; `spawn` serves it on a background thread.
pub struct Server {
    listener: TcpListener,
    ctx: Arc<ServerContext>,
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    pub ctx: Arc<ServerContext>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn bind(addr: &str, ctx: ServerContext) -> Result<Self> {
        ctx.config.validate()?;
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            ctx: Arc::new(ctx),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn context(&self) -> &Arc<ServerContext> {
        &self.ctx
    }

    /// Accepts connections until `stop` is set, one thread per connection.
    pub fn run(&self, stop: &AtomicBool) -> Result<()> {
        self.listener.set_nonblocking(true)?;
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        while !stop.load(Ordering::SeqCst) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    stream.set_nonblocking(false)?;
                    let ctx = Arc::clone(&self.ctx);
                    workers.push(std::thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, &ctx) {
                            log::warn!("connection from {peer}: {e}");
                        }
                    }));
                    workers.retain(|h| !h.is_finished());
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(e.into()),
            }
        }
        for h in workers {
            let _ = h.join();
        }
        Ok(())
    }

    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let ctx = Arc::clone(&self.ctx);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = std::thread::spawn(move || {
            if let Err(e) = self.run(&flag) {
                log::error!("server stopped: {e}");
            }
        });
        Ok(ServerHandle {
            addr,
            ctx,
            stop,
            thread: Some(thread),
        })
    }
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("ws://{}/", self.addr)
    }

    /// Stops accepting and waits for open sessions to end.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Web-socket upgrades become sessions; plain GETs are answered from the
/// static directory when one is configured.
fn serve_connection(stream: TcpStream, ctx: &ServerContext) -> Result<Option<SessionReport>> {
    let mut head = [0u8; 2048];
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let n = stream.peek(&mut head)?;
    let text = String::from_utf8_lossy(&head[..n]).to_ascii_lowercase();
    if !text.contains("upgrade: websocket") {
        serve_static(stream, ctx.config.static_dir.as_deref())?;
        return Ok(None);
    }
    stream.set_read_timeout(None)?;
    let mut transport = WsTransport::accept(stream)?;
    handle_session(&mut transport, &ctx.registry, &ctx.sessions, &ctx.config, &ctx.settings).map(Some)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

fn resolve_static(root: &Path, target: &str) -> Option<PathBuf> {
    let rel = target.split(['?', '#']).next().unwrap_or("/").trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(rel))
}

fn serve_static(mut stream: TcpStream, root: Option<&str>) -> Result<()> {
    let mut buf = [0u8; 2048];
    let n = stream.read(&mut buf)?;
    let req = String::from_utf8_lossy(&buf[..n]);
    let mut parts = req.lines().next().unwrap_or("").split_whitespace();
    let method = parts.next().unwrap_or("");
    let target = parts.next().unwrap_or("/");
    let file = root
        .filter(|_| method == "GET")
        .and_then(|r| resolve_static(Path::new(r), target))
        .and_then(|p| std::fs::read(&p).ok().map(|b| (p, b)));
    match file {
        Some((path, body)) => {
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                content_type(&path),
                body.len()
            )?;
            stream.write_all(&body)?;
        }
        None => {
            let body = b"not found\n";
            write!(
                stream,
                "HTTP/1.1 404 Not Found\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            )?;
            stream.write_all(body)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_paths_stay_inside_the_root() {
        let root = Path::new("/srv/ui");
        assert_eq!(resolve_static(root, "/"), Some(root.join("index.html")));
        assert_eq!(resolve_static(root, "/app.js?v=2"), Some(root.join("app.js")));
        assert_eq!(resolve_static(root, "/../etc/passwd"), None);
    }
}
