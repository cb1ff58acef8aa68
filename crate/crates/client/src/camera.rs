use std::sync::Arc;
use std::time::Instant;

use arena_core::eval::AnnotationStore;
use arena_core::harness::{ReplayConfig, ReplayReport, ReplaySession};
use arena_core::protocol::{encode_message, Message, StreamDecoder, WireError};
use arena_core::Frame;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpStream, ToSocketAddrs};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("server closed the connection mid-session")]
    Closed,
    #[error(transparent)]
    Core(#[from] arena_core::Error),
}

/// A connected camera: request/response over one TCP stream.
pub struct CameraClient {
    stream: TcpStream,
    decoder: StreamDecoder,
    buf: Vec<u8>,
}

impl CameraClient {
    pub async fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        Ok(Self { stream, decoder: StreamDecoder::new(), buf: vec![0; 64 * 1024] })
    }

    pub async fn send(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        Ok(self.stream.write_all(bytes).await?)
    }

    pub async fn recv(&mut self) -> Result<Message, ClientError> {
        loop {
            if let Some(m) = self.decoder.next_message()? {
                return Ok(m);
            }
            let n = self.stream.read(&mut self.buf).await?;
            if n == 0 {
                return Err(ClientError::Closed);
            }
            self.decoder.push(&self.buf[..n]);
        }
    }

    pub async fn round_trip(&mut self, bytes: &[u8]) -> Result<Message, ClientError> {
        self.send(bytes).await?;
        self.recv().await
    }

    pub async fn bye(mut self) -> Result<(), ClientError> {
        self.send(&encode_message(&Message::Bye)).await?;
        self.stream.shutdown().await?;
        Ok(())
    }
}

/// Replays `frames` against a running server. Accounting goes through the
/// same [`ReplaySession`] as the loopback replay, so bytes and detections
/// match it exactly; only `wall_round_trip_us` is added. Connection and
/// protocol failures end the run with an incomplete report.
pub async fn replay_socket<I>(
    addr: impl ToSocketAddrs,
    frames: I,
    annotations: Option<Arc<AnnotationStore>>,
    cfg: &ReplayConfig,
) -> Result<ReplayReport, ClientError>
where
    I: IntoIterator<Item = arena_core::Result<Frame>>,
{
    let mut session = ReplaySession::new(cfg.clone())?;
    let outcome: Result<(), ClientError> = async {
        let mut client = CameraClient::connect(addr).await?;
        let hello = client.round_trip(&encode_message(&session.hello())).await?;
        session.accept_hello(&hello)?;
        for frame in frames {
            let frame = frame?;
            let (_, bytes) = session.request(&frame)?;
            let started = Instant::now();
            let reply = client.round_trip(&bytes).await?;
            let wall = started.elapsed().as_secs_f64() * 1e6;
            session.complete(&reply, Some(wall))?;
            tracing::debug!(frame = frame.frame_id(), bytes = bytes.len(), wall_us = wall, "frame done");
        }
        client.bye().await
    }
    .await;
    if let Err(e) = &outcome {
        tracing::warn!(error = %e, frames = session.frames_done(), "socket replay aborted");
    }
    Ok(session.finish("socket", annotations.as_deref(), outcome.err().map(|e| e.to_string())))
}
