//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

const HEADER_SIZE: usize = 0x70;

fn uleb(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Builds a dex 035 file with one class whose methods hold the given
/// instruction streams (16-bit code units).
pub fn build_dex(methods: &[&[u16]]) -> Vec<u8> {
    let mut b = vec![0u8; HEADER_SIZE];
    b[..8].copy_from_slice(b"dex\n035\0");
    b[0x20..0x24].copy_from_slice(&0u32.to_le_bytes()); // file_size, patched below
    b[0x24..0x28].copy_from_slice(&(HEADER_SIZE as u32).to_le_bytes());
    b[0x28..0x2c].copy_from_slice(&0x1234_5678u32.to_le_bytes());

    let class_defs_off = HEADER_SIZE;
    b[96..100].copy_from_slice(&1u32.to_le_bytes());
    b[100..104].copy_from_slice(&(class_defs_off as u32).to_le_bytes());
    b.resize(class_defs_off + 32, 0);

    // code items first, 4-byte aligned, so their offsets are known
    let mut code_offs = Vec::new();
    for insns in methods {
        while b.len() % 4 != 0 {
            b.push(0);
        }
        code_offs.push(b.len() as u32);
        b.extend_from_slice(&1u16.to_le_bytes()); // registers_size
        b.extend_from_slice(&1u16.to_le_bytes()); // ins_size
        b.extend_from_slice(&0u16.to_le_bytes()); // outs_size
        b.extend_from_slice(&0u16.to_le_bytes()); // tries_size
        b.extend_from_slice(&0u32.to_le_bytes()); // debug_info_off
        b.extend_from_slice(&(insns.len() as u32).to_le_bytes());
        for u in *insns {
            b.extend_from_slice(&u.to_le_bytes());
        }
    }

    let class_data_off = b.len() as u32;
    uleb(&mut b, 0);
    uleb(&mut b, 0);
    uleb(&mut b, methods.len() as u32);
    uleb(&mut b, 0);
    for (i, &off) in code_offs.iter().enumerate() {
        uleb(&mut b, if i == 0 { 0 } else { 1 });
        uleb(&mut b, 0x1);
        uleb(&mut b, off);
    }
    b[class_defs_off + 24..class_defs_off + 28].copy_from_slice(&class_data_off.to_le_bytes());
    let len = b.len() as u32;
    b[0x20..0x24].copy_from_slice(&len.to_le_bytes());
    b
}

/// `nop; nop; return-void`
pub fn minimal_dex() -> Vec<u8> {
    build_dex(&[&[0x0000, 0x0000, 0x000e]])
}

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}
