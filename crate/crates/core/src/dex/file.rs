//! Walks a `.dex` container: header -> class_defs -> class_data -> code items.

use super::decode::decode_instruction;
use super::{content_id, DexError, OpcodeHistogram};

const HEADER_SIZE: usize = 0x70;
const CLASS_DEF_SIZE: usize = 32;
const CODE_ITEM_HEADER: usize = 16;

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn need(&self, offset: usize, n: usize) -> Result<&'a [u8], DexError> {
        offset
            .checked_add(n)
            .and_then(|end| self.bytes.get(offset..end))
            .ok_or(DexError::TruncatedFile {
                offset,
                needed: n,
                len: self.bytes.len(),
            })
    }

    fn u32(&self, offset: usize) -> Result<u32, DexError> {
        let b = self.need(offset, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads a uleb128 at `*pos`, advancing it.
    fn uleb128(&self, pos: &mut usize) -> Result<u32, DexError> {
        let mut result: u32 = 0;
        for i in 0..5 {
            let byte = self.need(*pos, 1)?[0];
            *pos += 1;
            result |= ((byte & 0x7f) as u32) << (7 * i);
            if byte & 0x80 == 0 {
                break;
            }
        }
        Ok(result)
    }

    fn check_offset(&self, what: &'static str, offset: usize) -> Result<(), DexError> {
        if offset >= self.bytes.len() {
            return Err(DexError::MalformedOffset {
                what,
                offset,
                len: self.bytes.len(),
            });
        }
        Ok(())
    }
}

fn check_magic(bytes: &[u8]) -> Result<(), DexError> {
    let magic = bytes.get(..8).unwrap_or(bytes);
    let ok = magic.len() == 8
        && &magic[..4] == b"dex\n"
        && magic[4] == b'0'
        && magic[5] == b'3'
        && (b'5'..=b'9').contains(&magic[6])
        && magic[7] == 0;
    if ok {
        Ok(())
    } else {
        Err(DexError::BadMagic(format!("{magic:02x?}")))
    }
}

/// Parses a dex file, identifying the result by the SHA-256 of its bytes.
pub fn parse_dex(bytes: &[u8]) -> Result<OpcodeHistogram, DexError> {
    parse_dex_with_id(bytes, content_id(bytes))
}

/// Sums the opcodes of every method body reachable from the class
/// definitions. Payload pseudo-instructions are skipped.
pub fn parse_dex_with_id(bytes: &[u8], app_id: impl Into<String>) -> Result<OpcodeHistogram, DexError> {
    check_magic(bytes)?;
    let r = Reader { bytes };
    r.need(0, HEADER_SIZE)?;

    let class_defs_size = r.u32(96)? as usize;
    let class_defs_off = r.u32(100)? as usize;
    let mut hist = OpcodeHistogram::new(app_id);
    if class_defs_size == 0 {
        return Ok(hist);
    }

    let table_len = class_defs_size.saturating_mul(CLASS_DEF_SIZE);
    if class_defs_off
        .checked_add(table_len)
        .is_none_or(|end| end > bytes.len())
    {
        return Err(DexError::MalformedOffset {
            what: "class_defs",
            offset: class_defs_off,
            len: bytes.len(),
        });
    }

    for i in 0..class_defs_size {
        let def = class_defs_off + i * CLASS_DEF_SIZE;
        let class_data_off = r.u32(def + 24)? as usize;
        if class_data_off != 0 {
            walk_class_data(&r, class_data_off, &mut hist)?;
        }
    }
    Ok(hist)
}

fn walk_class_data(r: &Reader<'_>, offset: usize, hist: &mut OpcodeHistogram) -> Result<(), DexError> {
    r.check_offset("class_data", offset)?;
    let mut pos = offset;
    let static_fields = r.uleb128(&mut pos)?;
    let instance_fields = r.uleb128(&mut pos)?;
    let direct_methods = r.uleb128(&mut pos)?;
    let virtual_methods = r.uleb128(&mut pos)?;

    for _ in 0..(static_fields as u64 + instance_fields as u64) {
        r.uleb128(&mut pos)?; // field_idx_diff
        r.uleb128(&mut pos)?; // access_flags
    }
    for _ in 0..(direct_methods as u64 + virtual_methods as u64) {
        r.uleb128(&mut pos)?; // method_idx_diff
        r.uleb128(&mut pos)?; // access_flags
        let code_off = r.uleb128(&mut pos)? as usize;
        if code_off != 0 {
            count_code_item(r, code_off, hist)?;
        }
    }
    Ok(())
}

fn count_code_item(r: &Reader<'_>, offset: usize, hist: &mut OpcodeHistogram) -> Result<(), DexError> {
    r.check_offset("code_item", offset)?;
    r.need(offset, CODE_ITEM_HEADER)?;
    let insns_size = r.u32(offset + 12)? as usize;
    let start = offset + CODE_ITEM_HEADER;
    let raw = r.need(start, insns_size.saturating_mul(2))?;
    let units: Vec<u16> = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();

    let mut cursor = 0;
    while cursor < units.len() {
        let decoded = decode_instruction(&units, cursor).map_err(|e| match e {
            DexError::TruncatedStream { width, .. } => DexError::TruncatedStream {
                at: start + cursor * 2,
                width,
                remaining: units.len() - cursor,
            },
            other => other,
        })?;
        if decoded.payload.is_none() {
            hist.add(decoded.opcode);
        }
        cursor += decoded.width;
    }
    Ok(())
}
