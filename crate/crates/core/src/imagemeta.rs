//! Identity embedding at the container level: the UUID goes into a JPEG
//! APP1/EXIF `ImageUniqueID` field (tag 0xA420) or a PNG `tEXt` chunk with
//! the keyword `ImageUniqueID`. Both paths splice bytes around the
//! compressed pixel data, which therefore stays bit-identical, and
//! re-embedding the same UUID is a byte-level fixed point.

use thiserror::Error;

pub const PNG_KEYWORD: &str = "ImageUniqueID";
const EXIF_HEADER: &[u8; 6] = b"Exif\0\0";
const IMAGE_UNIQUE_ID_TAG: u16 = 0xA420;
const EXIF_IFD_POINTER_TAG: u16 = 0x8769;
const PNG_SIGNATURE: [u8; 8] = [0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetaError {
    #[error("bytes are neither a JPEG nor a PNG stream")]
    UnsupportedFormat,
    #[error("malformed {0} container: {1}")]
    Malformed(&'static str, String),
}

/// Writes the UUID into the image's identity metadata, creating the
/// carrying structure when absent. Returns the input unchanged when the
/// same UUID is already embedded.
pub fn embed_uuid(bytes: &[u8], uuid: &str) -> Result<Vec<u8>, MetaError> {
    if bytes.starts_with(&[0xFF, 0xD8]) {
        embed_jpeg(bytes, uuid)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        embed_png(bytes, uuid)
    } else {
        Err(MetaError::UnsupportedFormat)
    }
}

/// Reads back an embedded UUID, if any.
pub fn read_uuid(bytes: &[u8]) -> Option<String> {
    if bytes.starts_with(&[0xFF, 0xD8]) {
        read_jpeg_uuid(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        read_png_uuid(bytes)
    } else {
        None
    }
}

// ---------------------------------------------------------------- JPEG ----

/// Minimal EXIF payload: a little-endian TIFF with IFD0 pointing at an Exif
/// IFD that holds only ImageUniqueID.
fn build_exif_tiff(uuid: &str) -> Vec<u8> {
    let ascii: Vec<u8> = uuid.bytes().chain(std::iter::once(0)).collect();
    let mut tiff = Vec::with_capacity(44 + ascii.len());
    tiff.extend_from_slice(b"II");
    tiff.extend_from_slice(&42u16.to_le_bytes());
    tiff.extend_from_slice(&8u32.to_le_bytes()); // IFD0 offset

    // IFD0: one entry, the Exif IFD pointer.
    tiff.extend_from_slice(&1u16.to_le_bytes());
    tiff.extend_from_slice(&EXIF_IFD_POINTER_TAG.to_le_bytes());
    tiff.extend_from_slice(&4u16.to_le_bytes()); // LONG
    tiff.extend_from_slice(&1u32.to_le_bytes());
    tiff.extend_from_slice(&26u32.to_le_bytes()); // Exif IFD offset
    tiff.extend_from_slice(&0u32.to_le_bytes()); // no next IFD

    // Exif IFD: one entry, ImageUniqueID as ASCII stored at offset 44.
    tiff.extend_from_slice(&1u16.to_le_bytes());
    tiff.extend_from_slice(&IMAGE_UNIQUE_ID_TAG.to_le_bytes());
    tiff.extend_from_slice(&2u16.to_le_bytes()); // ASCII
    tiff.extend_from_slice(&(ascii.len() as u32).to_le_bytes());
    tiff.extend_from_slice(&44u32.to_le_bytes());
    tiff.extend_from_slice(&0u32.to_le_bytes());

    tiff.extend_from_slice(&ascii);
    tiff
}

fn build_app1_segment(uuid: &str) -> Vec<u8> {
    let tiff = build_exif_tiff(uuid);
    let payload_len = 2 + EXIF_HEADER.len() + tiff.len();
    let mut seg = Vec::with_capacity(2 + payload_len);
    seg.extend_from_slice(&[0xFF, 0xE1]);
    seg.extend_from_slice(&(payload_len as u16).to_be_bytes());
    seg.extend_from_slice(EXIF_HEADER);
    seg.extend_from_slice(&tiff);
    seg
}

/// Walks JPEG segments up to the scan data. Yields (marker, start, end)
/// where start..end spans the whole segment including the FF-marker bytes.
fn jpeg_segments(bytes: &[u8]) -> Result<Vec<(u8, usize, usize)>, MetaError> {
    let mut segs = Vec::new();
    let mut pos = 2usize; // past SOI
    while pos + 1 < bytes.len() {
        if bytes[pos] != 0xFF {
            return Err(MetaError::Malformed(
                "jpeg",
                format!("expected marker at offset {pos}"),
            ));
        }
        let mut marker_pos = pos;
        while marker_pos + 1 < bytes.len() && bytes[marker_pos + 1] == 0xFF {
            marker_pos += 1; // fill bytes
        }
        let marker = bytes[marker_pos + 1];
        match marker {
            0xD8 | 0x01 | 0xD0..=0xD7 => {
                segs.push((marker, pos, marker_pos + 2));
                pos = marker_pos + 2;
            }
            0xD9 => {
                segs.push((marker, pos, marker_pos + 2));
                break;
            }
            0xDA => {
                // Start of scan: entropy-coded data follows; stop walking.
                segs.push((marker, pos, bytes.len()));
                break;
            }
            _ => {
                let len_at = marker_pos + 2;
                if len_at + 2 > bytes.len() {
                    return Err(MetaError::Malformed("jpeg", "truncated segment".into()));
                }
                let len = u16::from_be_bytes([bytes[len_at], bytes[len_at + 1]]) as usize;
                let end = len_at + len;
                if len < 2 || end > bytes.len() {
                    return Err(MetaError::Malformed("jpeg", "bad segment length".into()));
                }
                segs.push((marker, pos, end));
                pos = end;
            }
        }
    }
    Ok(segs)
}

fn is_exif_app1(bytes: &[u8], start: usize, end: usize) -> bool {
    end >= start + 10 && &bytes[start + 4..start + 10] == EXIF_HEADER
}

fn embed_jpeg(bytes: &[u8], uuid: &str) -> Result<Vec<u8>, MetaError> {
    let new_segment = build_app1_segment(uuid);
    let segs = jpeg_segments(bytes)?;

    let existing = segs
        .iter()
        .find(|&&(marker, start, end)| marker == 0xE1 && is_exif_app1(bytes, start, end));

    if let Some(&(_, start, end)) = existing {
        if &bytes[start..end] == new_segment.as_slice() {
            return Ok(bytes.to_vec());
        }
        let mut out = Vec::with_capacity(bytes.len() - (end - start) + new_segment.len());
        out.extend_from_slice(&bytes[..start]);
        out.extend_from_slice(&new_segment);
        out.extend_from_slice(&bytes[end..]);
        return Ok(out);
    }

    // No EXIF yet: insert after a leading APP0 (JFIF) block when present,
    // otherwise right after SOI.
    let insert_at = match segs.first() {
        Some(&(0xE0, _, end)) => end,
        _ => 2,
    };
    let mut out = Vec::with_capacity(bytes.len() + new_segment.len());
    out.extend_from_slice(&bytes[..insert_at]);
    out.extend_from_slice(&new_segment);
    out.extend_from_slice(&bytes[insert_at..]);
    Ok(out)
}

fn read_jpeg_uuid(bytes: &[u8]) -> Option<String> {
    let segs = jpeg_segments(bytes).ok()?;
    let &(_, start, end) = segs
        .iter()
        .find(|&&(marker, start, end)| marker == 0xE1 && is_exif_app1(bytes, start, end))?;
    parse_tiff_unique_id(&bytes[start + 10..end])
}

fn parse_tiff_unique_id(tiff: &[u8]) -> Option<String> {
    if tiff.len() < 8 {
        return None;
    }
    let le = match &tiff[0..2] {
        b"II" => true,
        b"MM" => false,
        _ => return None,
    };
    let rd16 = |at: usize| -> Option<u16> {
        let b = tiff.get(at..at + 2)?;
        Some(if le {
            u16::from_le_bytes([b[0], b[1]])
        } else {
            u16::from_be_bytes([b[0], b[1]])
        })
    };
    let rd32 = |at: usize| -> Option<u32> {
        let b = tiff.get(at..at + 4)?;
        Some(if le {
            u32::from_le_bytes([b[0], b[1], b[2], b[3]])
        } else {
            u32::from_be_bytes([b[0], b[1], b[2], b[3]])
        })
    };
    if rd16(2)? != 42 {
        return None;
    }

    let find_tag = |ifd_at: usize, tag: u16| -> Option<(u16, u32, u32)> {
        let count = rd16(ifd_at)? as usize;
        for i in 0..count {
            let at = ifd_at + 2 + i * 12;
            if rd16(at)? == tag {
                return Some((rd16(at + 2)?, rd32(at + 4)?, rd32(at + 8)?));
            }
        }
        None
    };

    let ifd0 = rd32(4)? as usize;
    let (_, _, exif_ifd_off) = find_tag(ifd0, EXIF_IFD_POINTER_TAG)?;
    let (ty, count, value) = find_tag(exif_ifd_off as usize, IMAGE_UNIQUE_ID_TAG)?;
    if ty != 2 {
        return None;
    }
    let count = count as usize;
    let raw: &[u8] = if count <= 4 {
        // Inline value: reconstruct the raw bytes in file order.
        let inline = if le {
            value.to_le_bytes()
        } else {
            value.to_be_bytes()
        };
        return String::from_utf8(
            inline[..count].iter().copied().take_while(|&b| b != 0).collect(),
        )
        .ok();
    } else {
        tiff.get(value as usize..value as usize + count)?
    };
    let text: Vec<u8> = raw.iter().copied().take_while(|&b| b != 0).collect();
    String::from_utf8(text).ok()
}

// ----------------------------------------------------------------- PNG ----

fn crc32(data: &[u8]) -> u32 {
    // Standard ISO-3309 CRC as used by PNG.
    let mut table = [0u32; 256];
    for (n, slot) in table.iter_mut().enumerate() {
        let mut c = n as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB88320 ^ (c >> 1) } else { c >> 1 };
        }
        *slot = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

fn build_text_chunk(uuid: &str) -> Vec<u8> {
    let mut data = Vec::with_capacity(PNG_KEYWORD.len() + 1 + uuid.len());
    data.extend_from_slice(PNG_KEYWORD.as_bytes());
    data.push(0);
    data.extend_from_slice(uuid.as_bytes());

    let mut chunk = Vec::with_capacity(12 + data.len());
    chunk.extend_from_slice(&(data.len() as u32).to_be_bytes());
    chunk.extend_from_slice(b"tEXt");
    chunk.extend_from_slice(&data);
    let mut crc_input = Vec::with_capacity(4 + data.len());
    crc_input.extend_from_slice(b"tEXt");
    crc_input.extend_from_slice(&data);
    chunk.extend_from_slice(&crc32(&crc_input).to_be_bytes());
    chunk
}

/// Yields (type, start, end) per chunk, spans including length and CRC.
fn png_chunks(bytes: &[u8]) -> Result<Vec<([u8; 4], usize, usize)>, MetaError> {
    let mut out = Vec::new();
    let mut pos = PNG_SIGNATURE.len();
    while pos < bytes.len() {
        if pos + 8 > bytes.len() {
            return Err(MetaError::Malformed("png", "truncated chunk header".into()));
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let ty: [u8; 4] = bytes[pos + 4..pos + 8].try_into().unwrap();
        let end = pos + 12 + len;
        if end > bytes.len() {
            return Err(MetaError::Malformed("png", "truncated chunk body".into()));
        }
        out.push((ty, pos, end));
        if &ty == b"IEND" {
            break;
        }
        pos = end;
    }
    Ok(out)
}

fn text_chunk_keyword(bytes: &[u8], start: usize, end: usize) -> Option<&[u8]> {
    let data = &bytes[start + 8..end - 4];
    let nul = data.iter().position(|&b| b == 0)?;
    Some(&data[..nul])
}

fn embed_png(bytes: &[u8], uuid: &str) -> Result<Vec<u8>, MetaError> {
    let chunk = build_text_chunk(uuid);
    let chunks = png_chunks(bytes)?;

    let existing = chunks.iter().find(|&&(ty, start, end)| {
        &ty == b"tEXt" && text_chunk_keyword(bytes, start, end) == Some(PNG_KEYWORD.as_bytes())
    });
    if let Some(&(_, start, end)) = existing {
        if &bytes[start..end] == chunk.as_slice() {
            return Ok(bytes.to_vec());
        }
        let mut out = Vec::with_capacity(bytes.len() - (end - start) + chunk.len());
        out.extend_from_slice(&bytes[..start]);
        out.extend_from_slice(&chunk);
        out.extend_from_slice(&bytes[end..]);
        return Ok(out);
    }

    let ihdr_end = match chunks.first() {
        Some(&(ty, _, end)) if &ty == b"IHDR" => end,
        _ => return Err(MetaError::Malformed("png", "missing IHDR".into())),
    };
    let mut out = Vec::with_capacity(bytes.len() + chunk.len());
    out.extend_from_slice(&bytes[..ihdr_end]);
    out.extend_from_slice(&chunk);
    out.extend_from_slice(&bytes[ihdr_end..]);
    Ok(out)
}

fn read_png_uuid(bytes: &[u8]) -> Option<String> {
    let chunks = png_chunks(bytes).ok()?;
    let &(_, start, end) = chunks.iter().find(|&&(ty, start, end)| {
        &ty == b"tEXt" && text_chunk_keyword(bytes, start, end) == Some(PNG_KEYWORD.as_bytes())
    })?;
    let data = &bytes[start + 8..end - 4];
    let nul = data.iter().position(|&b| b == 0)?;
    String::from_utf8(data[nul + 1..].to_vec()).ok()
}
