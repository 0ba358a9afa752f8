//! Inputs for the benchmarks.

use opfreq::corpus::{synth_corpus, SynthProfile};
use opfreq::dex::render_smali;
use opfreq::features::normalize_rows;
use opfreq::rng::seeded;
use opfreq::{FeatureMatrix, OpcodeHistogram};
use rand::Rng;

const HEADER_SIZE: usize = 0x70;

// one-unit instructions: move, return, return-void, const/4, add-int/2addr
const SHORT_OPS: [u8; 5] = [0x01, 0x0f, 0x0e, 0x12, 0xb0];

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

/// A dex 035 image with one class of `methods` methods, each holding
/// `units` random one-unit instructions.
pub fn synthetic_dex(methods: usize, units: usize, seed: u64) -> Vec<u8> {
    let mut rng = seeded(seed);
    let mut b = vec![0u8; HEADER_SIZE];
    b[..8].copy_from_slice(b"dex\n035\0");
    b[0x24..0x28].copy_from_slice(&(HEADER_SIZE as u32).to_le_bytes());
    b[0x28..0x2c].copy_from_slice(&0x1234_5678u32.to_le_bytes());
    b[96..100].copy_from_slice(&1u32.to_le_bytes());
    b[100..104].copy_from_slice(&(HEADER_SIZE as u32).to_le_bytes());
    b.resize(HEADER_SIZE + 32, 0);

    let mut offs = Vec::with_capacity(methods);
    for _ in 0..methods {
        while b.len() % 4 != 0 {
            b.push(0);
        }
        offs.push(b.len() as u32);
        for v in [1u16, 1, 0, 0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&(units as u32).to_le_bytes());
        for _ in 0..units {
            let op = SHORT_OPS[rng.random_range(0..SHORT_OPS.len())];
            b.extend_from_slice(&[op, 0x10]);
        }
    }

    let class_data = b.len() as u32;
    for v in [0, 0, methods as u32, 0] {
        uleb(&mut b, v);
    }
    for (i, &off) in offs.iter().enumerate() {
        uleb(&mut b, u32::from(i != 0));
        uleb(&mut b, 0x1);
        uleb(&mut b, off);
    }
    b[HEADER_SIZE + 24..HEADER_SIZE + 28].copy_from_slice(&class_data.to_le_bytes());
    let len = b.len() as u32;
    b[0x20..0x24].copy_from_slice(&len.to_le_bytes());
    b
}

/// Smali text for a random histogram with roughly `total` instructions.
pub fn synthetic_smali(total: u64, seed: u64) -> String {
    let mut rng = seeded(seed);
    let mut counts = [0u64; 256];
    for _ in 0..total {
        counts[SHORT_OPS[rng.random_range(0..SHORT_OPS.len())] as usize] += 1;
    }
    render_smali(&OpcodeHistogram::from_counts("bench", counts))
}

/// Row-normalized synthetic corpus.
pub fn corpus(per_class: usize, seed: u64) -> FeatureMatrix {
    let raw = synth_corpus(per_class, per_class, &SynthProfile::default_profile(), seed).expect("synthetic corpus");
    normalize_rows(&raw).matrix
}
