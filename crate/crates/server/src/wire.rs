use std::sync::Arc;
use std::time::Duration;

use arena_core::protocol::{encode_message, ErrorCode, Message, ServerSession, StreamDecoder};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;

use crate::state::AppState;

/// Accepts camera connections forever; one task and one session each.
pub async fn serve_wire(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                // e.g. out of file descriptors; back off instead of dying
                tracing::error!(error = %e, "accept failed");
                tokio::time::sleep(Duration::from_millis(100)).await;
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        let state = state.clone();
        tokio::spawn(async move {
            if let Err(e) = handle_connection(stream, peer.to_string(), state).await {
                tracing::warn!(%peer, error = %e, "connection ended with an I/O error");
            }
        });
    }
}

/// Runs one camera session to completion. Protocol violations are answered
/// with an ERROR message, after which the connection is closed.
pub async fn handle_connection<S>(mut stream: S, peer: String, state: AppState) -> std::io::Result<()>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let id = state.open_session(peer.clone());
    tracing::info!(session = id, %peer, "camera connected");
    let mut session = Some(ServerSession::new(Arc::clone(state.engine()), state.server_config().clone()));
    let outcome = serve_session(&mut stream, &mut session, id, &state).await;
    let log = session.as_ref().map(|s| s.cost_log().to_vec()).unwrap_or_default();
    let error = match &outcome {
        Ok(e) => e.clone(),
        Err(e) => Some(format!("i/o: {e}")),
    };
    // publish before closing so observers of the hang-up see the final log
    state.update_session(id, &log, false, error);
    tracing::info!(session = id, frames = log.len(), "camera disconnected");
    stream.flush().await?;
    let _ = stream.shutdown().await;
    outcome.map(|_| ())
}

/// Returns the protocol error that ended the session, if any.
async fn serve_session<S>(stream: &mut S, slot: &mut Option<ServerSession>, id: u64, state: &AppState) -> std::io::Result<Option<String>>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let mut decoder = StreamDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = stream.read(&mut buf).await?;
        if n == 0 {
            return Ok((decoder.buffered() > 0).then(|| format!("connection closed inside a message ({} bytes buffered)", decoder.buffered())));
        }
        decoder.push(&buf[..n]);
        loop {
            let (msg, len) = match decoder.next_message_with_len() {
                Ok(Some(m)) => m,
                Ok(None) => break,
                Err(e) => {
                    let reply = Message::Error { code: ErrorCode::BadPayload, message: e.to_string() };
                    stream.write_all(&encode_message(&reply)).await?;
                    return Ok(Some(e.to_string()));
                }
            };
            let mut session = slot.take().expect("session present between messages");
            // inference is CPU-bound; keep it off the reactor
            let (session, result) = tokio::task::spawn_blocking(move || {
                let r = session.step(&msg, len);
                (session, r)
            })
            .await
            .map_err(std::io::Error::other)?;
            state.update_session(id, session.cost_log(), true, None);
            *slot = Some(session);
            match result {
                Ok(Some(reply)) => stream.write_all(&encode_message(&reply)).await?,
                Ok(None) => return Ok(None),
                Err(e) => {
                    tracing::warn!(session = id, error = %e, "protocol violation");
                    stream.write_all(&encode_message(&e.to_message())).await?;
                    return Ok(Some(e.to_string()));
                }
            }
        }
    }
}
