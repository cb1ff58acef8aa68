//! Edge server: the binary camera protocol over TCP, and an HTTP/JSON API
//! for the stateless operations, synthetic replays and per-session cost
//! logs.

mod api;
mod error;
mod state;
mod wire;

use std::net::SocketAddr;

use tokio::net::TcpListener;

pub use api::{router, FlopsRequest, FlopsResponse, IouRequest, MapRequest, MapResponse, ReplayRequest, TraceRequest};
pub use error::ApiError;
pub use state::{AppState, EngineInfo, SessionSummary};
pub use wire::{handle_connection, serve_wire};

/// Binds both listeners and serves until either fails.
pub async fn run(state: AppState, wire_addr: SocketAddr, http_addr: SocketAddr) -> std::io::Result<()> {
    let wire = TcpListener::bind(wire_addr).await?;
    let http = TcpListener::bind(http_addr).await?;
    tracing::info!(wire = %wire.local_addr()?, http = %http.local_addr()?, "edge server listening");
    let app = router(state.clone());
    tokio::select! {
        r = serve_wire(wire, state) => r,
        r = async { axum::serve(http, app).await } => r,
    }
}
