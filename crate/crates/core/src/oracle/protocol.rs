//! Framed little-endian messages between an embedding client and server.
//!
//! ```text
//! request   "UDE1" | 0x01 | batch u32 | dim u32  | batch·dim  f32
//! response  "UDE1" | 0x81 | batch u32 | edim u32 | batch·edim f32
//! error     "UDE1" | 0xFF | code u16  | len u16  | len bytes utf-8
//! ```
//!
//! There is no message type for gradients.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"UDE1";
pub const MSG_EMBED: u8 = 0x01;
pub const MSG_EMBEDDING: u8 = 0x81;
pub const MSG_ERROR: u8 = 0xFF;

pub const ERR_DIM_MISMATCH: u16 = 1;
pub const ERR_MALFORMED: u16 = 2;

/// Upper bound on floats in one frame (256 MiB of payload).
pub const MAX_VALUES: usize = 1 << 26;

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Embed(Tensor<f32>),
    Embedding(Tensor<f32>),
    Error { code: u16, message: String },
}

fn put_matrix(out: &mut Vec<u8>, tag: u8, t: &Tensor<f32>) -> Result<()> {
    let (rows, cols) = t.dims2()?;
    let dims = [u32::try_from(rows), u32::try_from(cols)];
    let [Ok(r), Ok(c)] = dims else {
        return Err(Error::Protocol("matrix too large for a frame".into()));
    };
    out.extend_from_slice(MAGIC);
    out.push(tag);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    out.reserve(t.len() * 4);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode(frame: &Frame) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match frame {
        Frame::Embed(t) => put_matrix(&mut out, MSG_EMBED, t)?,
        Frame::Embedding(t) => put_matrix(&mut out, MSG_EMBEDDING, t)?,
        Frame::Error { code, message } => {
            let bytes = message.as_bytes();
            let len = bytes.len().min(u16::MAX as usize);
            // cut on a char boundary
            let len = (0..=len).rev().find(|&i| message.is_char_boundary(i)).unwrap_or(0);
            out.extend_from_slice(MAGIC);
            out.push(MSG_ERROR);
            out.extend_from_slice(&code.to_le_bytes());
            out.extend_from_slice(&(len as u16).to_le_bytes());
            out.extend_from_slice(&bytes[..len]);
        }
    }
    Ok(out)
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<()> {
    w.write_all(&encode(frame)?)?;
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b)
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Protocol("truncated frame".into())
    } else {
        Error::Io(e)
    }
}

/// Read one frame; `Ok(None)` on a clean end of stream before any byte.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("truncated frame".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if &magic != MAGIC {
        return Err(Error::Protocol(format!("bad magic {magic:02x?}")));
    }
    let [tag] = read_array::<1>(r)?;
    match tag {
        MSG_EMBED | MSG_EMBEDDING => {
            let rows = u32::from_le_bytes(read_array(r)?) as usize;
            let cols = u32::from_le_bytes(read_array(r)?) as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|&n| n <= MAX_VALUES)
                .ok_or_else(|| Error::Protocol(format!("frame of {rows}×{cols} values too large")))?;
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes).map_err(truncated)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(vec![rows, cols], data)
                .map_err(|e| Error::Protocol(format!("bad payload: {e}")))?;
            Ok(Some(if tag == MSG_EMBED {
                Frame::Embed(t)
            } else {
                Frame::Embedding(t)
            }))
        }
        MSG_ERROR => {
            let code = u16::from_le_bytes(read_array(r)?);
            let len = u16::from_le_bytes(read_array(r)?) as usize;
            let mut msg = vec![0u8; len];
            r.read_exact(&mut msg).map_err(truncated)?;
            let message = String::from_utf8(msg)
                .map_err(|_| Error::Protocol("error message is not utf-8".into()))?;
            Ok(Some(Frame::Error { code, message }))
        }
        other => Err(Error::Protocol(format!("unknown message type {other:#04x}"))),
    }
}
