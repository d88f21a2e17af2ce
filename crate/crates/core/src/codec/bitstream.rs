//! Serialized stream container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LF2D" | version u32 | header_len u32 | header JSON
//! frame_count u32
//! per frame: payload_len u32 | id u32 | qp u8 | entropy-coded data
//! ```
//!
//! The header JSON carries the structure, codec configuration, grid
//! geometry, frame layout and a SHA-256 of the canonical schedule, so a
//! stream is decodable without side files and a mismatched schedule is
//! rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ChromaFormat;
use crate::view_grid::GridGeometry;

use super::{CodecConfig, Structure};

pub const MAGIC: &[u8; 4] = b"LF2D";
pub const VERSION: u32 = 1;

/// Decoder-facing stream metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub structure: Structure,
    pub config: CodecConfig,
    pub geometry: GridGeometry,
    pub view_width: u32,
    pub view_height: u32,
    pub bit_depth: u8,
    pub chroma: ChromaFormat,
    pub schedule_sha256: String,
    /// Digest of the encoder-side reconstruction, frame by frame in id
    /// order, so decoders can prove sample-exact output.
    pub recon_sha256: String,
}

/// One coded frame.
#[derive(Debug, Clone)]
pub struct FramePayload {
    pub id: u32,
    pub qp: u8,
    pub data: Vec<u8>,
    /// Byte offset of `data` within the container; zero until read back.
    pub offset: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_container(header: &StreamHeader, frames: &[FramePayload]) -> Result<Vec<u8>> {
    let header_json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(
        16 + header_json.len() + frames.iter().map(|f| f.data.len() + 13).sum::<usize>(),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        out.extend_from_slice(&((f.data.len() + 5) as u32).to_le_bytes());
        out.extend_from_slice(&f.id.to_le_bytes());
        out.push(f.qp);
        out.extend_from_slice(&f.data);
    }
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::decode(
                self.pos as u64,
                format!("truncated stream while reading {what}"),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_container(bytes: &[u8]) -> Result<(StreamHeader, Vec<FramePayload>)> {
    let mut c = Cursor {
        data: bytes,
        pos: 0,
    };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::decode(0, "not a coded light-field stream"));
    }
    let version = c.take_u32("version")?;
    if version != VERSION {
        return Err(Error::decode(4, format!("unsupported version {version}")));
    }
    let header_len = c.take_u32("header length")? as usize;
    if header_len > 1 << 24 {
        return Err(Error::decode(c.pos as u64, "implausible header length"));
    }
    let header_pos = c.pos as u64;
    let header_bytes = c.take(header_len, "header")?;
    let header: StreamHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::decode(header_pos, format!("malformed header: {e}")))?;
    let frame_count = c.take_u32("frame count")? as usize;
    if frame_count > 1 << 24 {
        return Err(Error::decode(c.pos as u64, "implausible frame count"));
    }
    let mut frames = Vec::with_capacity(frame_count);
    for i in 0..frame_count {
        let payload_len = c.take_u32("payload length")? as usize;
        if payload_len < 5 {
            return Err(Error::decode(
                c.pos as u64,
                format!("frame {i} payload too short"),
            ));
        }
        let body = c.take(payload_len, "frame payload")?;
        let id = u32::from_le_bytes([body[0], body[1], body[2], body[3]]);
        let qp = body[4];
        frames.push(FramePayload {
            id,
            qp,
            data: body[5..].to_vec(),
            offset: (c.pos - payload_len + 5) as u64,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::decode(
            c.pos as u64,
            "trailing bytes after the last frame",
        ));
    }
    Ok((header, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> StreamHeader {
        StreamHeader {
            structure: Structure::TwoD,
            config: CodecConfig::default(),
            geometry: GridGeometry::full(3, 3).unwrap(),
            view_width: 16,
            view_height: 16,
            bit_depth: 8,
            chroma: ChromaFormat::C444,
            schedule_sha256: sha256_hex(b"schedule"),
            recon_sha256: sha256_hex(b"recon"),
        }
    }

    #[test]
    fn container_round_trip() {
        let frames = vec![
            FramePayload {
                id: 0,
                qp: 20,
                data: vec![1, 2, 3],
                offset: 0,
            },
            FramePayload {
                id: 7,
                qp: 24,
                data: vec![],
                offset: 0,
            },
        ];
        let bytes = write_container(&header(), &frames).unwrap();
        let (h, fs) = read_container(&bytes).unwrap();
        assert_eq!(h, header());
        assert_eq!(fs.len(), 2);
        assert_eq!(fs[0].id, 0);
        assert_eq!(fs[0].data, vec![1, 2, 3]);
        assert_eq!(fs[1].id, 7);
        assert_eq!(fs[1].qp, 24);
        // Offsets point into the original buffer.
        assert_eq!(
            &bytes[fs[0].offset as usize..fs[0].offset as usize + 3],
            &[1, 2, 3]
        );
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = write_container(&header(), &[]).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_container(&bad).is_err());
        for cut in [2, 6, 10, bytes.len() - 1] {
            assert!(read_container(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(read_container(&trailing).is_err());
    }
}
