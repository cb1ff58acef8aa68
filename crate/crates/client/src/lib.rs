//! Clients for the edge server: an async camera that speaks the binary
//! protocol, and a typed wrapper around the HTTP/JSON API.

mod api;
mod camera;

pub use api::{ApiClient, ApiClientError};
pub use camera::{replay_socket, CameraClient, ClientError};
