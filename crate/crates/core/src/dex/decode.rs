use super::opcodes::opcode_table;
use super::DexError;

/// Payload pseudo-instructions embedded in the instruction stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    PackedSwitch,
    SparseSwitch,
    FillArrayData,
}

/// One decoded instruction: its opcode byte and width in code units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decoded {
    pub opcode: u8,
    pub width: usize,
    /// Set for payload pseudo-instructions; they do not count as opcodes.
    pub payload: Option<PayloadKind>,
}

/// Decodes the instruction starting at `offset` (in code units).
///
/// Panics if `offset >= units.len()`.
pub fn decode_instruction(units: &[u16], offset: usize) -> Result<Decoded, DexError> {
    assert!(offset < units.len(), "offset {offset} past end of stream");
    let unit = units[offset];
    let opcode = (unit & 0xff) as u8;
    let remaining = units.len() - offset;

    let truncated = |width: usize| DexError::TruncatedStream {
        at: offset,
        width,
        remaining,
    };
    let at = |i: usize| -> Result<usize, DexError> {
        units
            .get(offset + i)
            .map(|&u| u as usize)
            .ok_or_else(|| truncated(i + 1))
    };

    let (width, payload) = match (opcode, unit >> 8) {
        (0x00, 0x01) => {
            let size = at(1)?;
            (size * 2 + 4, Some(PayloadKind::PackedSwitch))
        }
        (0x00, 0x02) => {
            let size = at(1)?;
            (size * 4 + 2, Some(PayloadKind::SparseSwitch))
        }
        (0x00, 0x03) => {
            let element_width = at(1)?;
            let size = at(2)? | (at(3)? << 16);
            ((size * element_width).div_ceil(2) + 4, Some(PayloadKind::FillArrayData))
        }
        _ => (opcode_table().get(opcode).width(), None),
    };

    if width > remaining {
        return Err(truncated(width));
    }
    Ok(Decoded { opcode, width, payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn const4_is_one_unit() {
        let d = decode_instruction(&[0x1012], 0).unwrap();
        assert_eq!((d.opcode, d.width, d.payload), (0x12, 1, None));
    }

    #[test]
    fn plain_nop() {
        let d = decode_instruction(&[0x0000], 0).unwrap();
        assert_eq!((d.opcode, d.width, d.payload), (0x00, 1, None));
    }

    #[test]
    fn packed_switch_payload() {
        let units = [0x0100, 0x0002, 0, 0, 4, 0, 6, 0];
        let d = decode_instruction(&units, 0).unwrap();
        assert_eq!(d.opcode, 0x00);
        assert_eq!(d.width, 8);
        assert_eq!(d.payload, Some(PayloadKind::PackedSwitch));
    }

    #[test]
    fn sparse_switch_payload() {
        // two keys, two targets (each 32-bit) -> 2 + 4*2 units
        let units = [0x0200, 0x0002, 1, 0, 5, 0, 10, 0, 20, 0];
        let d = decode_instruction(&units, 0).unwrap();
        assert_eq!((d.width, d.payload), (10, Some(PayloadKind::SparseSwitch)));
    }

    #[test]
    fn fill_array_payload_rounds_up() {
        // 3 one-byte elements -> 2 data units + 4 header units
        let units = [0x0300, 0x0001, 0x0003, 0x0000, 0x0201, 0x0003];
        let d = decode_instruction(&units, 0).unwrap();
        assert_eq!((d.width, d.payload), (6, Some(PayloadKind::FillArrayData)));
    }

    #[test]
    fn truncated_instruction() {
        // const-string needs 2 units
        let err = decode_instruction(&[0x001a], 0).unwrap_err();
        assert!(matches!(err, DexError::TruncatedStream { width: 2, .. }));
        // payload header cut short
        let err = decode_instruction(&[0x0300, 0x0004], 0).unwrap_err();
        assert!(matches!(err, DexError::TruncatedStream { .. }));
    }

    #[test]
    fn nop_with_other_high_byte_is_plain() {
        let d = decode_instruction(&[0x0700], 0).unwrap();
        assert_eq!((d.opcode, d.width, d.payload), (0x00, 1, None));
    }
}
