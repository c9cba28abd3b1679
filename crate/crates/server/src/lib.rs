//! Live teleoperation over WebSocket. Each connection owns one
//! [`Session`]; this crate only moves text frames, keeps the 30 Hz clock
//! and appends the session log to `<log_dir>/<session id>.jsonl`.
//!
//! The connection URL may carry `?frame=<kind>` and `?scenario=<kind>` to
//! select the condition.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::{interval, sleep_until, Instant, MissedTickBehavior};
use tokio_tungstenite::tungstenite::handshake::server::{Request, Response};
use tokio_tungstenite::tungstenite::Message;

use teleframe::frames::FrameKind;
use teleframe::scenarios::ScenarioKind;
use teleframe::scene::Scene;
use teleframe::session::{Output, Phase, Session};
use teleframe::sim::TICK_HZ;

pub const LOG_DIR_ENV: &str = "TELEFRAME_LOG_DIR";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub scene: Scene,
    pub log_dir: PathBuf,
}

impl ServerConfig {
    /// Listens on all interfaces; logs go to `$TELEFRAME_LOG_DIR` or `./logs`.
    pub fn new(port: u16, scene: Scene) -> ServerConfig {
        let log_dir = std::env::var_os(LOG_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("logs"));
        ServerConfig { addr: SocketAddr::from(([0, 0, 0, 0], port)), scene, log_dir }
    }
}

pub struct Server {
    listener: TcpListener,
    config: Arc<ServerConfig>,
}

impl Server {
    pub async fn bind(config: ServerConfig) -> std::io::Result<Server> {
        config.scene.validate().map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
        std::fs::create_dir_all(&config.log_dir)?;
        let listener = TcpListener::bind(config.addr).await?;
        Ok(Server { listener, config: Arc::new(config) })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one task per session.
    pub async fn run(self) -> std::io::Result<()> {
        loop {
            let (stream, peer) = self.listener.accept().await?;
            let config = Arc::clone(&self.config);
            tokio::spawn(async move {
                if let Err(e) = serve_connection(stream, config).await {
                    log::warn!("session from {peer} ended with error: {e}");
                }
            });
        }
    }
}

/// Applies `frame` and `scenario` query parameters to the configured scene.
pub fn scene_for_query(base: &Scene, query: Option<&str>) -> Result<Scene, String> {
    let mut scene = base.clone();
    for (key, value) in url::form_urlencoded::parse(query.unwrap_or("").as_bytes()) {
        match key.as_ref() {
            "scenario" => {
                let kind = value.parse::<ScenarioKind>().map_err(|e| e.to_string())?;
                if kind != scene.scenario {
                    let frame = scene.frame;
                    scene = Scene::default_for(kind);
                    scene.frame = frame;
                }
            }
            "frame" => scene.frame = value.parse::<FrameKind>().map_err(|e| e.to_string())?,
            _ => {}
        }
    }
    Ok(scene)
}

struct LogSink {
    path: PathBuf,
    file: Option<BufWriter<File>>,
}

impl LogSink {
    fn new(dir: &Path, id: &str) -> LogSink {
        LogSink { path: dir.join(format!("{id}.jsonl")), file: None }
    }

    fn append(&mut self, lines: &[String]) -> std::io::Result<()> {
        if lines.is_empty() {
            return Ok(());
        }
        if self.file.is_none() {
            self.file = Some(BufWriter::new(File::create(&self.path)?));
        }
        let f = self.file.as_mut().expect("opened above");
        for line in lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match self.file.as_mut() {
            Some(f) => f.flush(),
            None => Ok(()),
        }
    }
}

type Ws = tokio_tungstenite::WebSocketStream<TcpStream>;

async fn deliver(ws: &mut Ws, sink: &mut LogSink, out: Output) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    sink.append(&out.log_lines)?;
    for m in out.messages {
        ws.feed(Message::text(m.to_json())).await?;
    }
    ws.flush().await?;
    Ok(())
}

async fn serve_connection(stream: TcpStream, config: Arc<ServerConfig>) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let mut query = None;
    #[allow(clippy::result_large_err)] // the callback signature is fixed by tungstenite
    let mut ws = tokio_tungstenite::accept_hdr_async(stream, |req: &Request, resp: Response| {
        query = req.uri().query().map(str::to_string);
        Ok(resp)
    })
    .await?;
    let scene = match scene_for_query(&config.scene, query.as_deref()) {
        Ok(s) => s,
        Err(message) => {
            let m = teleframe::session::ServerMessage::Error { code: "bad_query".into(), message };
            ws.send(Message::text(m.to_json())).await?;
            ws.close(None).await?;
            return Ok(());
        }
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let mut session = Session::new(id.clone(), scene);
    let mut sink = LogSink::new(&config.log_dir, &id);
    let start = Instant::now();
    let now_ms = || start.elapsed().as_millis() as u64;

    let mut ticker = interval(Duration::from_nanos(1_000_000_000 / TICK_HZ));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let mut in_trial = false;

    let result = loop {
        if session.phase == Phase::Done {
            break Ok(());
        }
        let next_ping = session
            .next_ping_ms()
            .map(|ms| start + Duration::from_millis(ms))
            .unwrap_or_else(|| Instant::now() + Duration::from_millis(100));
        tokio::select! {
            incoming = ws.next() => {
                let Some(frame) = incoming else { break Ok(()) };
                let out = match frame? {
                    Message::Text(text) => session.handle_text(text.as_str(), now_ms()),
                    Message::Close(_) => break Ok(()),
                    _ => continue,
                };
                deliver(&mut ws, &mut sink, out).await?;
                if !in_trial && session.phase == Phase::InTrial {
                    in_trial = true;
                    ticker.reset();
                }
            }
            _ = ticker.tick(), if session.phase == Phase::InTrial => {
                let out = session.tick();
                deliver(&mut ws, &mut sink, out).await?;
            }
            _ = sleep_until(next_ping), if session.phase == Phase::Qualifying => {
                let out = session.poll_qualification(now_ms());
                deliver(&mut ws, &mut sink, out).await?;
            }
        }
    };
    if session.phase == Phase::InTrial {
        // client vanished mid-trial: close the log with its metrics
        let out = session.handle_message(teleframe::session::ClientMessage::Stop, now_ms());
        sink.append(&out.log_lines)?;
    }
    sink.flush()?;
    if result.is_ok() {
        let _ = ws.close(None).await;
    }
    result
}
