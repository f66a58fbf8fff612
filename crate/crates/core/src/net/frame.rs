//! `payload_len (u32 BE) ‖ payload` stream framing.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAX_FRAME_PAYLOAD: usize = 16 * 1024 * 1024;
pub const FRAME_HEADER_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame shorter than its header")]
    Truncated,
    #[error("length field says {declared} bytes, {actual} present")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("payload of {0} bytes exceeds the 16 MiB limit")]
    TooLarge(usize),
}

pub fn encode_frame(payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_FRAME_PAYLOAD {
        return Err(FrameError::TooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Validates one complete frame and returns its payload.
pub fn decode_frame(frame: &[u8]) -> Result<&[u8], FrameError> {
    let (header, payload) = frame
        .split_at_checked(FRAME_HEADER_LEN)
        .ok_or(FrameError::Truncated)?;
    let declared = u32::from_be_bytes(header.try_into().unwrap()) as usize;
    if declared > MAX_FRAME_PAYLOAD {
        return Err(FrameError::TooLarge(declared));
    }
    if declared != payload.len() {
        return Err(FrameError::LengthMismatch {
            declared,
            actual: payload.len(),
        });
    }
    Ok(payload)
}

/// Reads one frame (header included) from a stream. `Ok(None)` on clean EOF
/// at a frame boundary.
pub fn read_frame<R: Read>(reader: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    match reader.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_PAYLOAD {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            FrameError::TooLarge(len),
        ));
    }
    let mut frame = vec![0u8; FRAME_HEADER_LEN + len];
    frame[..FRAME_HEADER_LEN].copy_from_slice(&header);
    reader.read_exact(&mut frame[FRAME_HEADER_LEN..])?;
    Ok(Some(frame))
}

pub fn write_frame<W: Write>(writer: &mut W, frame: &[u8]) -> io::Result<()> {
    writer.write_all(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_mismatch() {
        let frame = encode_frame(b"abc").unwrap();
        assert_eq!(frame, [0, 0, 0, 3, b'a', b'b', b'c']);
        assert_eq!(decode_frame(&frame).unwrap(), b"abc");
        assert_eq!(
            decode_frame(&frame[..6]),
            Err(FrameError::LengthMismatch {
                declared: 3,
                actual: 2
            })
        );
        assert_eq!(decode_frame(&[0, 0]), Err(FrameError::Truncated));
    }

    #[test]
    fn oversized_length_is_refused() {
        let header = ((MAX_FRAME_PAYLOAD + 1) as u32).to_be_bytes();
        assert!(matches!(decode_frame(&header), Err(FrameError::TooLarge(_))));
        let mut cursor = io::Cursor::new(header.to_vec());
        assert!(read_frame(&mut cursor).is_err());
    }

    #[test]
    fn stream_reading() {
        let mut bytes = encode_frame(b"one").unwrap();
        bytes.extend(encode_frame(b"").unwrap());
        bytes.extend_from_slice(&[0, 0, 0, 9, 1]);
        let mut cursor = io::Cursor::new(bytes);
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), encode_frame(b"one").unwrap());
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), vec![0, 0, 0, 0]);
        assert!(read_frame(&mut cursor).is_err());
        let mut empty = io::Cursor::new(Vec::new());
        assert!(read_frame(&mut empty).unwrap().is_none());
    }
}
