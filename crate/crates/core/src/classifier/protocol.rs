//! Framed binary protocol for external gradient providers.
//!
//! Request: `"PGRD"`, version `0x01`, operation `0x01` (forward + gradient),
//! then little-endian `u32` W, H, K, L_d, L_i (`0xFFFFFFFF` when absent),
//! then `W·H·3` little-endian `f32` pixels, row-major, RGB interleaved.
//!
//! Reply: `"PGRR"`, status byte (0 = ok), `K` `f32` probabilities, then
//! `W·H·3` `f32` gradient values. Failed requests still carry the full
//! payload, filled with zeros, so the stream stays in sync.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const REQUEST_MAGIC: &[u8; 4] = b"PGRD";
pub const REPLY_MAGIC: &[u8; 4] = b"PGRR";
pub const VERSION: u8 = 0x01;
pub const OP_FORWARD_GRAD: u8 = 0x01;
pub const NO_LABEL: u32 = 0xFFFF_FFFF;
/// Upper bound on `W·H` accepted from the wire.
pub const MAX_PIXELS: u64 = 1 << 24;
/// Upper bound on `K` accepted from the wire.
pub const MAX_CLASSES: u32 = 1 << 16;

pub const STATUS_OK: u8 = 0;
pub const STATUS_BAD_DIMENSIONS: u8 = 1;
pub const STATUS_BAD_LABEL: u8 = 2;
pub const STATUS_FAILED: u8 = 3;

const HEADER_LEN: usize = 4 + 1 + 1 + 5 * 4;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported version {0:#04x}")]
    Version(u8),
    #[error("unsupported operation {0:#04x}")]
    Operation(u8),
    #[error("frame too large: {0}")]
    TooLarge(String),
    #[error("frame truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRequest {
    pub width: u32,
    pub height: u32,
    pub classes: u32,
    pub decrease: u32,
    pub increase: Option<u32>,
    pub pixels: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReply {
    pub status: u8,
    pub probabilities: Vec<f32>,
    pub gradient: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
struct Header {
    width: u32,
    height: u32,
    classes: u32,
    decrease: u32,
    increase: Option<u32>,
}

impl Header {
    fn values(&self) -> Result<usize, ProtocolError> {
        let pixels = self.width as u64 * self.height as u64;
        if pixels > MAX_PIXELS {
            return Err(ProtocolError::TooLarge(format!("{}x{} pixels", self.width, self.height)));
        }
        if self.classes > MAX_CLASSES {
            return Err(ProtocolError::TooLarge(format!("{} classes", self.classes)));
        }
        Ok(pixels as usize * 3)
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_header(b: &[u8; HEADER_LEN]) -> Result<Header, ProtocolError> {
    let magic = [b[0], b[1], b[2], b[3]];
    if &magic != REQUEST_MAGIC {
        return Err(ProtocolError::Magic(magic));
    }
    if b[4] != VERSION {
        return Err(ProtocolError::Version(b[4]));
    }
    if b[5] != OP_FORWARD_GRAD {
        return Err(ProtocolError::Operation(b[5]));
    }
    let li = u32_at(b, 22);
    let h = Header {
        width: u32_at(b, 6),
        height: u32_at(b, 10),
        classes: u32_at(b, 14),
        decrease: u32_at(b, 18),
        increase: (li != NO_LABEL).then_some(li),
    };
    h.values()?;
    Ok(h)
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn get_f32s(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

pub fn encode_request(r: &GradientRequest) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * r.pixels.len());
    out.extend_from_slice(REQUEST_MAGIC);
    out.push(VERSION);
    out.push(OP_FORWARD_GRAD);
    for v in [r.width, r.height, r.classes, r.decrease, r.increase.unwrap_or(NO_LABEL)] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_f32s(&mut out, &r.pixels);
    out
}

/// Parse exactly one request frame occupying all of `bytes`.
pub fn decode_request(bytes: &[u8]) -> Result<GradientRequest, ProtocolError> {
    let mut cursor = bytes;
    let r = read_request(&mut cursor)?.ok_or(ProtocolError::Truncated { expected: HEADER_LEN, got: 0 })?;
    if !cursor.is_empty() {
        return Err(ProtocolError::Trailing(cursor.len()));
    }
    Ok(r)
}

/// Fill `buf` completely; `Ok(false)` on clean EOF before the first byte.
fn read_full(r: &mut impl Read, buf: &mut [u8], allow_eof: bool) -> Result<bool, ProtocolError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 && allow_eof => return Ok(false),
            Ok(0) => return Err(ProtocolError::Truncated { expected: buf.len(), got }),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Read one request from a stream; `Ok(None)` when the stream ends cleanly
/// between frames.
pub fn read_request(r: &mut impl Read) -> Result<Option<GradientRequest>, ProtocolError> {
    let mut head = [0u8; HEADER_LEN];
    if !read_full(r, &mut head, true)? {
        return Ok(None);
    }
    let h = parse_header(&head)?;
    let mut body = vec![0u8; h.values()? * 4];
    read_full(r, &mut body, false).map_err(|e| match e {
        ProtocolError::Truncated { expected, got } => {
            ProtocolError::Truncated { expected: expected + HEADER_LEN, got: got + HEADER_LEN }
        }
        e => e,
    })?;
    Ok(Some(GradientRequest {
        width: h.width,
        height: h.height,
        classes: h.classes,
        decrease: h.decrease,
        increase: h.increase,
        pixels: get_f32s(&body),
    }))
}

pub fn encode_reply(r: &GradientReply) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 4 * (r.probabilities.len() + r.gradient.len()));
    out.extend_from_slice(REPLY_MAGIC);
    out.push(r.status);
    put_f32s(&mut out, &r.probabilities);
    put_f32s(&mut out, &r.gradient);
    out
}

/// Read a reply for a request with `classes` classes and `values` pixel values.
pub fn read_reply(r: &mut impl Read, classes: usize, values: usize) -> Result<GradientReply, ProtocolError> {
    let mut head = [0u8; 5];
    read_full(r, &mut head, false)?;
    let magic = [head[0], head[1], head[2], head[3]];
    if &magic != REPLY_MAGIC {
        return Err(ProtocolError::Magic(magic));
    }
    let mut body = vec![0u8; 4 * (classes + values)];
    read_full(r, &mut body, false)?;
    let probabilities = get_f32s(&body[..4 * classes]);
    let gradient = get_f32s(&body[4 * classes..]);
    Ok(GradientReply { status: head[4], probabilities, gradient })
}

/// Parse exactly one reply frame occupying all of `bytes`.
pub fn decode_reply(bytes: &[u8], classes: usize, values: usize) -> Result<GradientReply, ProtocolError> {
    let mut cursor = bytes;
    let r = read_reply(&mut cursor, classes, values)?;
    if !cursor.is_empty() {
        return Err(ProtocolError::Trailing(cursor.len()));
    }
    Ok(r)
}

pub fn write_frame(w: &mut impl Write, frame: &[u8]) -> io::Result<()> {
    w.write_all(frame)?;
    w.flush()
}
