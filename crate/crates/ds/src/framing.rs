//! Length-prefixed message framing for socket carriers: a 4-byte big-endian
//! length followed by the canonical JSON message.

use std::io::{self, Read, Write};

use ds_core::canonical::to_canonical_bytes;
use ds_core::runtime::{Message, MAX_PAYLOAD};

/// Base64 inflates payloads by 4/3; the rest is envelope.
pub const MAX_FRAME: usize = MAX_PAYLOAD / 3 * 4 + 4096;

pub fn encode_frame(msg: &Message) -> io::Result<Vec<u8>> {
    let body = to_canonical_bytes(msg);
    if body.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    w.write_all(&encode_frame(msg)?)
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let msg: Message = serde_json::from_slice(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if to_canonical_bytes(&msg) != body {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame is not canonical JSON"));
    }
    Ok(Some(msg))
}
