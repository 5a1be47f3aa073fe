use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use hyper_util::rt::TokioIo;
use hyper_util::service::TowerToHyperService;
use log::{info, warn};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use super::score::{OracleScorer, QeScorer};
use super::wire::{ScoreRequest, ScoreResponse, REQUEST_ID_HEADER, SCORE_PATH};
use crate::error::{Error, Result};
use crate::synthdata::LanguageRegistry;

/// Scripted misbehaviour for integration tests.
#[derive(Clone, Debug, Default)]
pub struct FaultPlan {
    /// Close this many incoming connections before reading a byte.
    pub drop_connections: usize,
    /// Answer the first requests with these statuses, in order.
    pub statuses: Vec<u16>,
    /// Reply with this score for every item instead of the oracle's.
    pub fixed_score: Option<f64>,
}

struct ServerState {
    oracle: OracleScorer,
    faults: Mutex<FaultPlan>,
    requests: AtomicU64,
    dropped: AtomicUsize,
}

/// Counters observable while the server runs.
#[derive(Clone)]
pub struct ServerStats(Arc<ServerState>);

impl ServerStats {
    pub fn requests(&self) -> u64 {
        self.0.requests.load(Ordering::SeqCst)
    }

    pub fn dropped_connections(&self) -> usize {
        self.0.dropped.load(Ordering::SeqCst)
    }
}

fn reply(status: StatusCode, request_id: Option<HeaderValue>, body: String) -> Response {
    let mut resp = (status, [("content-type", "application/json")], body).into_response();
    if let Some(id) = request_id {
        resp.headers_mut().insert(REQUEST_ID_HEADER, id);
    }
    resp
}

async fn score(State(state): State<Arc<ServerState>>, headers: HeaderMap, body: Bytes) -> Response {
    let n = state.requests.fetch_add(1, Ordering::SeqCst);
    let request_id = headers.get(REQUEST_ID_HEADER).cloned();
    let (status, fixed) = {
        let mut f = state.faults.lock().expect("fault lock");
        let status = (!f.statuses.is_empty()).then(|| f.statuses.remove(0));
        (status, f.fixed_score)
    };
    if let Some(code) = status {
        warn!("request {n}: scripted status {code}");
        let code = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return reply(code, request_id, r#"{"error":"scripted"}"#.into());
    }
    let bad = |msg: String| {
        reply(
            StatusCode::BAD_REQUEST,
            request_id.clone(),
            serde_json::json!({ "error": msg }).to_string(),
        )
    };
    let req: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad(format!("malformed body: {e}")),
    };
    let items = match req
        .items
        .iter()
        .map(|w| w.to_item())
        .collect::<Result<Vec<_>>>()
    {
        Ok(v) => v,
        Err(e) => return bad(e.to_string()),
    };
    let scores = match fixed {
        Some(s) => vec![s; items.len()],
        None => match state.oracle.score_batch(&items) {
            Ok(s) => s.into_iter().map(|x| x.value()).collect(),
            Err(e) => return bad(e.to_string()),
        },
    };
    info!("request {n}: scored {} items", items.len());
    let body = serde_json::to_string(&ScoreResponse { scores }).expect("response serializes");
    reply(StatusCode::OK, request_id, body)
}

/// A mock QE service answering with oracle scores.
pub struct MockQeServer {
    state: Arc<ServerState>,
}

impl MockQeServer {
    pub fn new(registry: LanguageRegistry, faults: FaultPlan) -> Self {
        MockQeServer {
            state: Arc::new(ServerState {
                oracle: OracleScorer::new(registry),
                faults: Mutex::new(faults),
                requests: AtomicU64::new(0),
                dropped: AtomicUsize::new(0),
            }),
        }
    }

    pub fn stats(&self) -> ServerStats {
        ServerStats(Arc::clone(&self.state))
    }

    /// Serves on `listener` until `shutdown` resolves.
    pub async fn serve(
        self,
        listener: TcpListener,
        shutdown: impl Future<Output = ()>,
    ) -> Result<()> {
        let app = Router::new()
            .route(SCORE_PATH, post(score))
            .with_state(Arc::clone(&self.state));
        tokio::pin!(shutdown);
        loop {
            let (stream, peer) = tokio::select! {
                _ = &mut shutdown => break,
                accepted = listener.accept() => match accepted {
                    Ok(a) => a,
                    Err(e) => {
                        warn!("accept failed: {e}");
                        continue;
                    }
                },
            };
            let drop_it = {
                let mut f = self.state.faults.lock().expect("fault lock");
                if f.drop_connections > 0 {
                    f.drop_connections -= 1;
                    true
                } else {
                    false
                }
            };
            if drop_it {
                self.state.dropped.fetch_add(1, Ordering::SeqCst);
                warn!("dropping connection from {peer} (scripted)");
                drop(stream);
                continue;
            }
            let service = TowerToHyperService::new(app.clone());
            tokio::spawn(async move {
                let conn = hyper::server::conn::http1::Builder::new()
                    .serve_connection(TokioIo::new(stream), service);
                if let Err(e) = conn.await {
                    warn!("connection from {peer}: {e}");
                }
            });
        }
        info!("mock QE server stopped");
        Ok(())
    }

    /// Starts serving on a background thread. Bind to port 0 for a free port.
    pub fn spawn(self, addr: SocketAddr) -> Result<ServerHandle> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| Error::io("<tokio runtime>", e))?;
        let std_listener =
            std::net::TcpListener::bind(addr).map_err(|e| Error::io(addr.to_string(), e))?;
        std_listener
            .set_nonblocking(true)
            .map_err(|e| Error::io(addr.to_string(), e))?;
        let local = std_listener
            .local_addr()
            .map_err(|e| Error::io(addr.to_string(), e))?;
        let stats = self.stats();
        let (tx, rx) = oneshot::channel::<()>();
        let thread = thread::spawn(move || {
            runtime.block_on(async move {
                let listener = TcpListener::from_std(std_listener)
                    .map_err(|e| Error::io(local.to_string(), e))?;
                self.serve(listener, async {
                    let _ = rx.await;
                })
                .await
            })
        });
        info!("mock QE server listening on {local}");
        Ok(ServerHandle {
            addr: local,
            stats,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }
}

/// A running background server; stops on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stats: ServerStats,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &ServerStats {
        &self.stats
    }

    pub fn stop(mut self) -> Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(Error::Protocol("server thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}
