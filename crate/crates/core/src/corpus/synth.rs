//! Synthetic opcode corpora drawn from class-conditional profiles.
//!
//! Each app picks a component of its class (by weight), a length uniformly
//! in `[length_min, length_max]`, an app-level opcode distribution from a
//! Dirichlet centred on the component's probabilities (skipped when
//! `concentration` is 0), and finally multinomial counts.
//!
//! Profiles are TOML documents:
//!
//! ```toml
//! concentration = 150.0
//!
//! [[component]]
//! name = "benign"
//! class = "benign"
//! weight = 1.0
//! length_min = 500
//! length_max = 5000
//! [component.probs]
//! op_6e = 0.12
//! op_54 = 0.08
//! # ... bins not listed have probability 0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{CorpusError, FeatureMatrix, Label, Scale};
use crate::dex::{mnemonics, opcode_table};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileComponent {
    pub name: String,
    pub class: Label,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    pub length_min: u64,
    pub length_max: u64,
    /// `op_XX` -> probability.
    pub probs: BTreeMap<String, f64>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProfile {
    #[serde(default)]
    pub concentration: f64,
    #[serde(rename = "component")]
    pub components: Vec<ProfileComponent>,
}

/// Bins never emitted by the built-in profiles: the reserved bytes plus a
/// handful of rare opcodes.
const SILENT_BINS: [u8; 12] = [0x03, 0x06, 0x09, 0x2a, 0xaa, 0xca, 0xfa, 0xfb, 0xfc, 0xfd, 0xfe, 0xff];

/// Bins the default malware profile raises.
pub const MALWARE_UP: [u8; 10] = [0x54, 0x52, 0x1a, 0x62, 0x22, 0x71, 0x13, 0x4f, 0x39, 0xdf];
/// Bins the default malware profile lowers.
pub const MALWARE_DOWN: [u8; 10] = [0x6e, 0x0c, 0x0e, 0x5b, 0x1f, 0x72, 0x11, 0x0a, 0x28, 0x12];

fn bin_key(byte: u8) -> String {
    format!("op_{byte:02x}")
}

fn parse_bin_key(key: &str) -> Option<u8> {
    key.strip_prefix("op_")
        .filter(|h| h.len() == 2)
        .and_then(|h| u8::from_str_radix(h, 16).ok())
}

fn to_map(p: &[f64; 256]) -> BTreeMap<String, f64> {
    p.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(b, &v)| (bin_key(b as u8), v))
        .collect()
}

fn normalized(mut w: [f64; 256]) -> [f64; 256] {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Realistic-looking benign opcode mix.
fn benign_base() -> [f64; 256] {
    let table = opcode_table();
    let mut w = [0.0; 256];
    for e in table.iter() {
        if e.unused || SILENT_BINS.contains(&e.byte) {
            continue;
        }
        // deterministic spread of background mass
        w[e.byte as usize] = 0.2 + ((e.byte as u32 * 131 + 7) % 17) as f64 / 17.0;
    }
    let heavy: [(u8, f64); 24] = [
        (0x6e, 60.0),
        (0x54, 40.0),
        (0x0c, 38.0),
        (0x1a, 30.0),
        (0x0e, 25.0),
        (0x70, 28.0),
        (0x5b, 22.0),
        (0x22, 18.0),
        (0x71, 24.0),
        (0x38, 16.0),
        (0x28, 14.0),
        (0x12, 20.0),
        (0x0a, 12.0),
        (0x52, 15.0),
        (0x11, 12.0),
        (0x1f, 10.0),
        (0x72, 11.0),
        (0x62, 13.0),
        (0x39, 9.0),
        (0x59, 8.0),
        (0x13, 6.0),
        (0x0f, 6.0),
        (0x21, 4.0),
        (0xd8, 5.0),
    ];
    for (b, v) in heavy {
        w[b as usize] = v;
    }
    normalized(w)
}

fn scaled(base: &[f64; 256], factors: &[(u8, f64)]) -> [f64; 256] {
    let mut w = *base;
    for &(b, f) in factors {
        w[b as usize] *= f;
    }
    normalized(w)
}

impl SynthProfile {
    /// Benign vs malware differing on 20 bins (10 raised, 10 lowered by a
    /// relative `strength`).
    pub fn planted(strength: f64, concentration: f64) -> Self {
        let base = benign_base();
        let factors: Vec<(u8, f64)> = MALWARE_UP
            .iter()
            .map(|&b| (b, 1.0 + strength))
            .chain(MALWARE_DOWN.iter().map(|&b| (b, 1.0 - strength)))
            .collect();
        let malware = scaled(&base, &factors);
        SynthProfile {
            concentration,
            components: vec![
                ProfileComponent {
                    name: "benign".into(),
                    class: Label::Benign,
                    weight: 1.0,
                    length_min: 500,
                    length_max: 5000,
                    probs: to_map(&base),
                },
                ProfileComponent {
                    name: "malware".into(),
                    class: Label::Malware,
                    weight: 1.0,
                    length_min: 500,
                    length_max: 5000,
                    probs: to_map(&malware),
                },
            ],
        }
    }

    /// The built-in profile.
    pub fn default_profile() -> Self {
        Self::planted(0.5, 60.0)
    }

    /// Default profile plus a benign-only mode of much larger apps with a
    /// distinct opcode mix; in raw-count space it sits far from everything
    /// else.
    pub fn with_benign_mode() -> Self {
        let mut profile = Self::default_profile();
        let base = benign_base();
        let bulky = scaled(
            &base,
            &[(0x60, 8.0), (0x4b, 10.0), (0x67, 8.0), (0x13, 6.0), (0x90, 6.0)],
        );
        profile.components[0].weight = 0.7;
        profile.components.push(ProfileComponent {
            name: "benign-bulky".into(),
            class: Label::Benign,
            weight: 0.3,
            length_min: 40_000,
            length_max: 60_000,
            probs: to_map(&bulky),
        });
        profile
    }

    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let p: SynthProfile = toml::from_str(text).map_err(|e| CorpusError::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(CorpusError::MissingFile(path.to_owned()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidProfile(m));
        if !(self.concentration >= 0.0 && self.concentration.is_finite()) {
            return bad(format!("concentration {} must be finite and >= 0", self.concentration));
        }
        if self.components.is_empty() {
            return bad("no components".into());
        }
        for c in &self.components {
            c.probabilities()?;
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return bad(format!("{}: weight must be positive", c.name));
            }
            if c.length_min == 0 || c.length_min > c.length_max {
                return bad(format!(
                    "{}: need 1 <= length_min <= length_max, got {}..{}",
                    c.name, c.length_min, c.length_max
                ));
            }
        }
        Ok(())
    }

    fn components_of(&self, class: Label) -> Vec<&ProfileComponent> {
        self.components.iter().filter(|c| c.class == class).collect()
    }

    /// Expected normalized opcode frequencies of a class.
    pub fn class_mean(&self, class: Label) -> Option<[f64; 256]> {
        let comps = self.components_of(class);
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        if comps.is_empty() {
            return None;
        }
        let mut mean = [0.0; 256];
        for c in comps {
            let p = c.probabilities().ok()?;
            for (m, v) in mean.iter_mut().zip(p) {
                *m += c.weight / total * v;
            }
        }
        Some(mean)
    }
}

impl ProfileComponent {
    /// Validated dense probability vector.
    pub fn probabilities(&self) -> Result<[f64; 256], CorpusError> {
        let mut p = [0.0; 256];
        for (key, &v) in &self.probs {
            let byte = parse_bin_key(key)
                .ok_or_else(|| CorpusError::InvalidProfile(format!("{}: bad bin key `{key}`", self.name)))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CorpusError::InvalidProfile(format!(
                    "{}: negative or non-finite mass {v} at {key}",
                    self.name
                )));
            }
            p[byte as usize] = v;
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidProfile(format!(
                "{}: probabilities sum to {sum}",
                self.name
            )));
        }
        Ok(p)
    }
}

fn pick_component<'a>(comps: &[&'a ProfileComponent], rng: &mut Rng) -> &'a ProfileComponent {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    let mut u = rng.random::<f64>() * total;
    for c in comps {
        if u < c.weight {
            return c;
        }
        u -= c.weight;
    }
    comps[comps.len() - 1]
}

fn sample_app(p: &[f64; 256], concentration: f64, length: u64, rng: &mut Rng) -> [u64; 256] {
    let mut q = *p;
    if concentration > 0.0 {
        let mut sum = 0.0;
        for (qj, &pj) in q.iter_mut().zip(p) {
            *qj = if pj > 0.0 {
                Gamma::new(concentration * pj, 1.0).expect("positive shape").sample(rng)
            } else {
                0.0
            };
            sum += *qj;
        }
        if sum > 0.0 {
            q.iter_mut().for_each(|v| *v /= sum);
        } else {
            q = *p;
        }
    }

    let mut counts = [0u64; 256];
    let mut remaining = length;
    let mut mass = 1.0;
    for (j, &qj) in q.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if qj <= 0.0 {
            continue;
        }
        let prob = (qj / mass).clamp(0.0, 1.0);
        let k = if prob >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, prob).expect("valid binomial").sample(rng)
        };
        counts[j] = k;
        remaining -= k;
        mass -= qj;
    }
    if remaining > 0 {
        // rounding left mass unassigned; give it to the heaviest bin
        let j = (0..256).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap();
        counts[j] += remaining;
    }
    counts
}

/// Draws `n_benign` then `n_malware` raw-count rows. Deterministic per seed.
pub fn synth_corpus(
    n_benign: usize,
    n_malware: usize,
    profile: &SynthProfile,
    seed: u64,
) -> Result<FeatureMatrix, CorpusError> {
    profile.validate()?;
    if n_benign + n_malware == 0 {
        return Err(CorpusError::InvalidCounts("no apps requested".into()));
    }
    let benign = profile.components_of(Label::Benign);
    let malware = profile.components_of(Label::Malware);
    if n_benign > 0 && benign.is_empty() {
        return Err(CorpusError::InvalidProfile("no benign component".into()));
    }
    if n_malware > 0 && malware.is_empty() {
        return Err(CorpusError::InvalidProfile("no malware component".into()));
    }

    let mut rng = seeded(seed);
    let n = n_benign + n_malware;
    let mut data = Array2::zeros((n, 256));
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (label, comps, tag, idx) = if i < n_benign {
            (Label::Benign, &benign, 'b', i)
        } else {
            (Label::Malware, &malware, 'm', i - n_benign)
        };
        let comp = pick_component(comps, &mut rng);
        let p = comp.probabilities()?;
        let length = rng.random_range(comp.length_min..=comp.length_max);
        let counts = sample_app(&p, profile.concentration, length, &mut rng);
        for (j, c) in counts.iter().enumerate() {
            data[[i, j]] = *c as f64;
        }
        ids.push(format!("synth-{tag}{idx:05}"));
        labels.push(label);
    }
    FeatureMatrix::new(ids, labels, data, mnemonics(), Scale::RawCounts)
}
