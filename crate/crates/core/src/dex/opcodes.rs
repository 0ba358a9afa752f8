//! The 256-entry Dalvik opcode table.
//!
//! Mnemonics and formats follow the dex format reference
//! (<https://source.android.com/docs/core/runtime/dalvik-bytecode>), dex
//! versions 035 through 039.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

/// Dalvik instruction formats. The first digit of each id is the width in
/// 16-bit code units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[allow(missing_docs)]
pub enum Format {
    F10x,
    F12x,
    F11n,
    F11x,
    F10t,
    F20t,
    F22x,
    F21t,
    F21s,
    F21h,
    F21c,
    F23x,
    F22b,
    F22t,
    F22s,
    F22c,
    F30t,
    F32x,
    F31i,
    F31t,
    F31c,
    F35c,
    F3rc,
    F45cc,
    F4rcc,
    F51l,
}

impl Format {
    /// Width in 16-bit code units.
    pub const fn width(self) -> usize {
        use Format::*;
        match self {
            F10x | F12x | F11n | F11x | F10t => 1,
            F20t | F22x | F21t | F21s | F21h | F21c | F23x | F22b | F22t | F22s | F22c => 2,
            F30t | F32x | F31i | F31t | F31c | F35c | F3rc => 3,
            F45cc | F4rcc => 4,
            F51l => 5,
        }
    }

    /// The format id as written in the reference, e.g. `"22c"`.
    pub fn id(self) -> &'static str {
        use Format::*;
        match self {
            F10x => "10x",
            F12x => "12x",
            F11n => "11n",
            F11x => "11x",
            F10t => "10t",
            F20t => "20t",
            F22x => "22x",
            F21t => "21t",
            F21s => "21s",
            F21h => "21h",
            F21c => "21c",
            F23x => "23x",
            F22b => "22b",
            F22t => "22t",
            F22s => "22s",
            F22c => "22c",
            F30t => "30t",
            F32x => "32x",
            F31i => "31i",
            F31t => "31t",
            F31c => "31c",
            F35c => "35c",
            F3rc => "3rc",
            F45cc => "45cc",
            F4rcc => "4rcc",
            F51l => "51l",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// One row of the opcode table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpcodeInfo {
    pub byte: u8,
    pub mnemonic: String,
    pub format: Format,
    pub unused: bool,
}

impl OpcodeInfo {
    pub fn width(&self) -> usize {
        self.format.width()
    }
}

/// Byte-indexed opcode table with a reverse mnemonic index.
#[derive(Debug)]
pub struct OpcodeTable {
    entries: Vec<OpcodeInfo>,
    by_mnemonic: HashMap<String, u8>,
}

impl OpcodeTable {
    pub fn get(&self, byte: u8) -> &OpcodeInfo {
        &self.entries[byte as usize]
    }

    pub fn mnemonic(&self, byte: u8) -> &str {
        &self.entries[byte as usize].mnemonic
    }

    pub fn lookup(&self, mnemonic: &str) -> Option<u8> {
        self.by_mnemonic.get(mnemonic).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &OpcodeInfo> {
        self.entries.iter()
    }

    /// Bytes reserved by the format (`unused_XX`).
    pub fn unused_bytes(&self) -> impl Iterator<Item = u8> + '_ {
        self.entries.iter().filter(|e| e.unused).map(|e| e.byte)
    }
}

/// Returns the process-wide opcode table.
pub fn opcode_table() -> &'static OpcodeTable {
    static TABLE: OnceLock<OpcodeTable> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

/// Mnemonics of the 256 opcodes in byte order, e.g. for feature names.
pub fn mnemonics() -> Vec<String> {
    opcode_table().iter().map(|e| e.mnemonic.clone()).collect()
}

fn build_table() -> OpcodeTable {
    use Format::*;

    let mut slots: Vec<Option<(String, Format)>> = vec![None; 256];
    let mut put = |byte: u8, name: &str, format: Format| {
        debug_assert!(slots[byte as usize].is_none(), "duplicate {byte:#04x}");
        slots[byte as usize] = Some((name.to_owned(), format));
    };

    let fixed: &[(u8, &str, Format)] = &[
        (0x00, "nop", F10x),
        (0x01, "move", F12x),
        (0x02, "move/from16", F22x),
        (0x03, "move/16", F32x),
        (0x04, "move-wide", F12x),
        (0x05, "move-wide/from16", F22x),
        (0x06, "move-wide/16", F32x),
        (0x07, "move-object", F12x),
        (0x08, "move-object/from16", F22x),
        (0x09, "move-object/16", F32x),
        (0x0a, "move-result", F11x),
        (0x0b, "move-result-wide", F11x),
        (0x0c, "move-result-object", F11x),
        (0x0d, "move-exception", F11x),
        (0x0e, "return-void", F10x),
        (0x0f, "return", F11x),
        (0x10, "return-wide", F11x),
        (0x11, "return-object", F11x),
        (0x12, "const/4", F11n),
        (0x13, "const/16", F21s),
        (0x14, "const", F31i),
        (0x15, "const/high16", F21h),
        (0x16, "const-wide/16", F21s),
        (0x17, "const-wide/32", F31i),
        (0x18, "const-wide", F51l),
        (0x19, "const-wide/high16", F21h),
        (0x1a, "const-string", F21c),
        (0x1b, "const-string/jumbo", F31c),
        (0x1c, "const-class", F21c),
        (0x1d, "monitor-enter", F11x),
        (0x1e, "monitor-exit", F11x),
        (0x1f, "check-cast", F21c),
        (0x20, "instance-of", F22c),
        (0x21, "array-length", F12x),
        (0x22, "new-instance", F21c),
        (0x23, "new-array", F22c),
        (0x24, "filled-new-array", F35c),
        (0x25, "filled-new-array/range", F3rc),
        (0x26, "fill-array-data", F31t),
        (0x27, "throw", F11x),
        (0x28, "goto", F10t),
        (0x29, "goto/16", F20t),
        (0x2a, "goto/32", F30t),
        (0x2b, "packed-switch", F31t),
        (0x2c, "sparse-switch", F31t),
        (0x2d, "cmpl-float", F23x),
        (0x2e, "cmpg-float", F23x),
        (0x2f, "cmpl-double", F23x),
        (0x30, "cmpg-double", F23x),
        (0x31, "cmp-long", F23x),
        (0x6e, "invoke-virtual", F35c),
        (0x6f, "invoke-super", F35c),
        (0x70, "invoke-direct", F35c),
        (0x71, "invoke-static", F35c),
        (0x72, "invoke-interface", F35c),
        (0x74, "invoke-virtual/range", F3rc),
        (0x75, "invoke-super/range", F3rc),
        (0x76, "invoke-direct/range", F3rc),
        (0x77, "invoke-static/range", F3rc),
        (0x78, "invoke-interface/range", F3rc),
        (0xd1, "rsub-int", F22s),
        (0xd9, "rsub-int/lit8", F22b),
        (0xfa, "invoke-polymorphic", F45cc),
        (0xfb, "invoke-polymorphic/range", F4rcc),
        (0xfc, "invoke-custom", F35c),
        (0xfd, "invoke-custom/range", F3rc),
        (0xfe, "const-method-handle", F21c),
        (0xff, "const-method-type", F21c),
    ];
    for &(byte, name, format) in fixed {
        put(byte, name, format);
    }

    for (i, cond) in ["eq", "ne", "lt", "ge", "gt", "le"].iter().enumerate() {
        put(0x32 + i as u8, &format!("if-{cond}"), F22t);
        put(0x38 + i as u8, &format!("if-{cond}z"), F21t);
    }

    let kinds = ["", "-wide", "-object", "-boolean", "-byte", "-char", "-short"];
    for (i, kind) in kinds.iter().enumerate() {
        let i = i as u8;
        put(0x44 + i, &format!("aget{kind}"), F23x);
        put(0x4b + i, &format!("aput{kind}"), F23x);
        put(0x52 + i, &format!("iget{kind}"), F22c);
        put(0x59 + i, &format!("iput{kind}"), F22c);
        put(0x60 + i, &format!("sget{kind}"), F21c);
        put(0x67 + i, &format!("sput{kind}"), F21c);
    }

    let unary = [
        "neg-int",
        "not-int",
        "neg-long",
        "not-long",
        "neg-float",
        "neg-double",
        "int-to-long",
        "int-to-float",
        "int-to-double",
        "long-to-int",
        "long-to-float",
        "long-to-double",
        "float-to-int",
        "float-to-long",
        "float-to-double",
        "double-to-int",
        "double-to-long",
        "double-to-float",
        "int-to-byte",
        "int-to-char",
        "int-to-short",
    ];
    for (i, name) in unary.iter().enumerate() {
        put(0x7b + i as u8, name, F12x);
    }

    let int_ops = [
        "add", "sub", "mul", "div", "rem", "and", "or", "xor", "shl", "shr", "ushr",
    ];
    let float_ops = ["add", "sub", "mul", "div", "rem"];
    let binops: Vec<String> = int_ops
        .iter()
        .map(|op| format!("{op}-int"))
        .chain(int_ops.iter().map(|op| format!("{op}-long")))
        .chain(float_ops.iter().map(|op| format!("{op}-float")))
        .chain(float_ops.iter().map(|op| format!("{op}-double")))
        .collect();
    debug_assert_eq!(binops.len(), 32);
    for (i, name) in binops.iter().enumerate() {
        put(0x90 + i as u8, name, F23x);
        put(0xb0 + i as u8, &format!("{name}/2addr"), F12x);
    }

    let lit16 = ["add", "", "mul", "div", "rem", "and", "or", "xor"];
    for (i, op) in lit16.iter().enumerate() {
        if !op.is_empty() {
            put(0xd0 + i as u8, &format!("{op}-int/lit16"), F22s);
        }
    }
    let lit8 = ["add", "", "mul", "div", "rem", "and", "or", "xor", "shl", "shr", "ushr"];
    for (i, op) in lit8.iter().enumerate() {
        if !op.is_empty() {
            put(0xd8 + i as u8, &format!("{op}-int/lit8"), F22b);
        }
    }

    let entries: Vec<OpcodeInfo> = slots
        .into_iter()
        .enumerate()
        .map(|(byte, slot)| match slot {
            Some((mnemonic, format)) => OpcodeInfo {
                byte: byte as u8,
                mnemonic,
                format,
                unused: false,
            },
            None => OpcodeInfo {
                byte: byte as u8,
                mnemonic: format!("unused_{byte:02x}"),
                format: F10x,
                unused: true,
            },
        })
        .collect();

    let by_mnemonic = entries.iter().map(|e| (e.mnemonic.clone(), e.byte)).collect();
    OpcodeTable { entries, by_mnemonic }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_from_reference() {
        let t = opcode_table();
        assert_eq!(t.lookup("nop"), Some(0x00));
        assert_eq!(t.lookup("move"), Some(0x01));
        assert_eq!(t.lookup("const-string"), Some(0x1a));
        assert_eq!(t.lookup("monitor-enter"), Some(0x1d));
        assert_eq!(t.lookup("iget-object"), Some(0x54));
        assert_eq!(t.lookup("invoke-virtual"), Some(0x6e));
        assert_eq!(t.lookup("invoke-direct"), Some(0x70));
        assert_eq!(t.lookup("new-instance"), Some(0x22));
        assert_eq!(t.lookup("add-double"), Some(0xab));
        assert_eq!(t.lookup("sub-double"), Some(0xac));
        assert_eq!(t.lookup("rem-double/2addr"), Some(0xcf));
        assert_eq!(t.lookup("add-int/lit16"), Some(0xd0));
        assert_eq!(t.lookup("ushr-int/lit8"), Some(0xe2));
        assert_eq!(t.lookup("int-to-short"), Some(0x8f));
        assert_eq!(t.lookup("if-lez"), Some(0x3d));
        assert_eq!(t.lookup("sput-short"), Some(0x6d));
    }

    #[test]
    fn all_bytes_present_once() {
        let t = opcode_table();
        assert_eq!(t.iter().count(), 256);
        for (i, e) in t.iter().enumerate() {
            assert_eq!(e.byte as usize, i);
            assert_eq!(t.lookup(&e.mnemonic), Some(e.byte));
            assert!(e.width() >= 1);
        }
    }

    #[test]
    fn reserved_entries() {
        let t = opcode_table();
        assert!(t.get(0x3e).unused);
        let unused: Vec<u8> = t.unused_bytes().collect();
        let expected: Vec<u8> = (0x3e..=0x43).chain([0x73, 0x79, 0x7a]).chain(0xe3..=0xf9).collect();
        assert_eq!(unused, expected);
        // The current reference reserves 32 bytes.
        assert_eq!(unused.len(), 32);
        assert_eq!(t.mnemonic(0x3e), "unused_3e");
    }

    #[test]
    fn widths_by_format() {
        let t = opcode_table();
        assert_eq!(t.get(0x12).width(), 1);
        assert_eq!(t.get(0x1a).width(), 2);
        assert_eq!(t.get(0x1b).width(), 3);
        assert_eq!(t.get(0x6e).width(), 3);
        assert_eq!(t.get(0x18).width(), 5);
        assert_eq!(t.get(0xfa).width(), 4);
        assert_eq!(t.get(0x26).width(), 3);
    }
}
