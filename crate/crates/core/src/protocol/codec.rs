//! Length-prefixed binary framing.
//!
//! ```text
//! header   magic "ARNA" | version u8 = 1 | type u8 | payload length u32 (LE)
//! HELLO       0x00  width u16, height u16, channels u8, patch size u16, engine config hash u64
//! KEYFRAME    0x01  frame_id u64, w u16, h u16, c u8, w*h*c pixel bytes
//! NONKEYFRAME 0x02  frame_id u64, count u32, count x (index u32, P*P*C bytes)
//! ERROR       0x80  code u16, UTF-8 message
//! RESULT      0x81  frame_id u64, count u32, count x (x1, y1, x2, y2, score f32; class u16)
//! BYE         0xFF  empty
//! ```
//!
//! Decoding needs no session context: the per-patch block size of a
//! NONKEYFRAME follows from the payload length and the declared count.

use thiserror::Error;

use crate::model::{BBox, Detection};

pub const MAGIC: &[u8; 4] = b"ARNA";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Largest payload a reader will buffer.
pub const MAX_PAYLOAD: usize = 1 << 26;

const DETECTION_LEN: usize = 5 * 4 + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x00,
    Keyframe = 0x01,
    NonKeyframe = 0x02,
    Error = 0x80,
    Result = 0x81,
    Bye = 0xFF,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x00 => Self::Hello,
            0x01 => Self::Keyframe,
            0x02 => Self::NonKeyframe,
            0x80 => Self::Error,
            0x81 => Self::Result,
            0xFF => Self::Bye,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hello {
    pub width: u16,
    pub height: u16,
    pub channels: u8,
    pub patch_size: u16,
    /// Engine configuration hash; 0 means "any".
    pub config_hash: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPayload {
    pub index: u32,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    ProtocolViolation = 1,
    SessionMismatch = 2,
    BadPayload = 3,
    Internal = 4,
}

impl ErrorCode {
    fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            1 => Self::ProtocolViolation,
            2 => Self::SessionMismatch,
            3 => Self::BadPayload,
            4 => Self::Internal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    Keyframe { frame_id: u64, width: u16, height: u16, channels: u8, pixels: Vec<u8> },
    NonKeyframe { frame_id: u64, patches: Vec<PatchPayload> },
    Result { frame_id: u64, detections: Vec<Detection> },
    Error { code: ErrorCode, message: String },
    Bye,
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        match self {
            Message::Hello(_) => MessageType::Hello,
            Message::Keyframe { .. } => MessageType::Keyframe,
            Message::NonKeyframe { .. } => MessageType::NonKeyframe,
            Message::Result { .. } => MessageType::Result,
            Message::Error { .. } => MessageType::Error,
            Message::Bye => MessageType::Bye,
        }
    }

    pub fn frame_id(&self) -> Option<u64> {
        match self {
            Message::Keyframe { frame_id, .. } | Message::NonKeyframe { frame_id, .. } | Message::Result { frame_id, .. } => {
                Some(*frame_id)
            }
            _ => None,
        }
    }

    /// Exact encoded size in bytes, header included.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload_len()
    }

    fn payload_len(&self) -> usize {
        match self {
            Message::Hello(_) => 15,
            Message::Keyframe { pixels, .. } => 13 + pixels.len(),
            Message::NonKeyframe { patches, .. } => 12 + patches.iter().map(|p| 4 + p.pixels.len()).sum::<usize>(),
            Message::Result { detections, .. } => 12 + detections.len() * DETECTION_LEN,
            Message::Error { message, .. } => 2 + message.len(),
            Message::Bye => 0,
        }
    }
}

/// Decoding failures; every malformed input maps to exactly one of these.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload length mismatch: {0}")]
    LengthMismatch(String),
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    TooLarge(usize),
    #[error("invalid field: {0}")]
    InvalidField(String),
}

pub fn encode_message(m: &Message) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.encoded_len());
    encode_into(m, &mut out);
    out
}

pub fn encode_into(m: &Message, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(m.message_type() as u8);
    out.extend_from_slice(&(m.payload_len() as u32).to_le_bytes());
    match m {
        Message::Hello(h) => {
            out.extend_from_slice(&h.width.to_le_bytes());
            out.extend_from_slice(&h.height.to_le_bytes());
            out.push(h.channels);
            out.extend_from_slice(&h.patch_size.to_le_bytes());
            out.extend_from_slice(&h.config_hash.to_le_bytes());
        }
        Message::Keyframe { frame_id, width, height, channels, pixels } => {
            out.extend_from_slice(&frame_id.to_le_bytes());
            out.extend_from_slice(&width.to_le_bytes());
            out.extend_from_slice(&height.to_le_bytes());
            out.push(*channels);
            out.extend_from_slice(pixels);
        }
        Message::NonKeyframe { frame_id, patches } => {
            out.extend_from_slice(&frame_id.to_le_bytes());
            out.extend_from_slice(&(patches.len() as u32).to_le_bytes());
            for p in patches {
                out.extend_from_slice(&p.index.to_le_bytes());
                out.extend_from_slice(&p.pixels);
            }
        }
        Message::Result { frame_id, detections } => {
            out.extend_from_slice(&frame_id.to_le_bytes());
            out.extend_from_slice(&(detections.len() as u32).to_le_bytes());
            for d in detections {
                for v in [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, d.score] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&d.class_id.to_le_bytes());
            }
        }
        Message::Error { code, message } => {
            out.extend_from_slice(&(*code as u16).to_le_bytes());
            out.extend_from_slice(message.as_bytes());
        }
        Message::Bye => {}
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(WireError::LengthMismatch(format!("payload ends before a {n}-byte field at offset {}", self.at))),
        }
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }
}

/// Parses a header; returns `(type, payload length)`.
pub fn decode_header(bytes: &[u8]) -> Result<(MessageType, usize), WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let ty = MessageType::from_byte(bytes[5]).ok_or(WireError::UnknownType(bytes[5]))?;
    let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    Ok((ty, len))
}

fn decode_payload(ty: MessageType, payload: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader { buf: payload, at: 0 };
    let msg = match ty {
        MessageType::Hello => {
            let h = Hello { width: r.u16()?, height: r.u16()?, channels: r.u8()?, patch_size: r.u16()?, config_hash: r.u64()? };
            if h.channels != 1 && h.channels != 3 {
                return Err(WireError::InvalidField(format!("channels {}", h.channels)));
            }
            Message::Hello(h)
        }
        MessageType::Keyframe => {
            let (frame_id, width, height, channels) = (r.u64()?, r.u16()?, r.u16()?, r.u8()?);
            if channels != 1 && channels != 3 {
                return Err(WireError::InvalidField(format!("channels {channels}")));
            }
            let n = width as usize * height as usize * channels as usize;
            if r.remaining() != n {
                return Err(WireError::LengthMismatch(format!("{width}x{height}x{channels} frame needs {n} pixel bytes, payload has {}", r.remaining())));
            }
            Message::Keyframe { frame_id, width, height, channels, pixels: r.take(n)?.to_vec() }
        }
        MessageType::NonKeyframe => {
            let (frame_id, count) = (r.u64()?, r.u32()? as usize);
            let rest = r.remaining();
            let patches = if count == 0 {
                Vec::new()
            } else {
                if rest < count.saturating_mul(5) || rest % count != 0 {
                    return Err(WireError::LengthMismatch(format!("{rest} bytes cannot hold {count} patches")));
                }
                let block = rest / count - 4;
                (0..count).map(|_| Ok(PatchPayload { index: r.u32()?, pixels: r.take(block)?.to_vec() })).collect::<Result<Vec<_>, WireError>>()?
            };
            Message::NonKeyframe { frame_id, patches }
        }
        MessageType::Result => {
            let (frame_id, count) = (r.u64()?, r.u32()? as usize);
            if Some(r.remaining()) != count.checked_mul(DETECTION_LEN) {
                return Err(WireError::LengthMismatch(format!("{} bytes for {count} detections", r.remaining())));
            }
            let mut detections = Vec::with_capacity(count);
            for _ in 0..count {
                let bbox = BBox { x1: r.f32()?, y1: r.f32()?, x2: r.f32()?, y2: r.f32()? };
                let (score, class_id) = (r.f32()?, r.u16()?);
                if !bbox.is_valid() || !(0.0..=1.0).contains(&score) {
                    return Err(WireError::InvalidField(format!("detection {bbox:?} score {score}")));
                }
                detections.push(Detection { bbox, score, class_id });
            }
            Message::Result { frame_id, detections }
        }
        MessageType::Error => {
            let raw = r.u16()?;
            let code = ErrorCode::from_u16(raw).ok_or_else(|| WireError::InvalidField(format!("error code {raw}")))?;
            let text = r.take(r.remaining())?;
            let message = String::from_utf8(text.to_vec()).map_err(|_| WireError::InvalidField("error text is not UTF-8".into()))?;
            Message::Error { code, message }
        }
        MessageType::Bye => Message::Bye,
    };
    if r.remaining() != 0 {
        return Err(WireError::LengthMismatch(format!("{} trailing payload bytes", r.remaining())));
    }
    Ok(msg)
}

/// Decodes the first message in `bytes`; returns it with the bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    let (ty, len) = decode_header(bytes)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(WireError::Truncated { needed: total, available: bytes.len() });
    }
    Ok((decode_payload(ty, &bytes[HEADER_LEN..total])?, total))
}

/// Decodes exactly one message; trailing bytes are a length error.
pub fn decode_message(bytes: &[u8]) -> Result<Message, WireError> {
    let (m, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(WireError::LengthMismatch(format!("{} bytes after the message", bytes.len() - used)));
    }
    Ok(m)
}

/// Incremental decoder for a byte stream.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete message, `Ok(None)` if more bytes are needed.
    pub fn next_message(&mut self) -> Result<Option<Message>, WireError> {
        Ok(self.next_message_with_len()?.map(|(m, _)| m))
    }

    /// Like [`next_message`](Self::next_message), also returning the
    /// message's encoded length.
    pub fn next_message_with_len(&mut self) -> Result<Option<(Message, usize)>, WireError> {
        match decode_prefix(&self.buf) {
            Ok((m, used)) => {
                self.buf.drain(..used);
                Ok(Some((m, used)))
            }
            Err(WireError::Truncated { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}
