//! Line-based smali reader. Only the leading mnemonic of each instruction
//! line matters; operands are ignored.

use super::opcodes::opcode_table;
use super::{content_id, Diagnostic, OpcodeHistogram};

/// Result of reading a smali document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaliParse {
    pub histogram: OpcodeHistogram,
    /// Lines whose first token was not a known mnemonic.
    pub unknown: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// Directives whose bodies hold data rather than instructions.
const DATA_BLOCKS: &[&str] = &[
    "annotation",
    "subannotation",
    "array-data",
    "packed-switch",
    "sparse-switch",
];

pub fn parse_smali(text: &str) -> SmaliParse {
    let table = opcode_table();
    let mut histogram = OpcodeHistogram::new(content_id(text.as_bytes()));
    let mut unknown = 0;
    let mut diagnostics = Vec::new();
    let mut block_depth = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        let mut first = match tokens.next() {
            Some(t) => t,
            None => continue,
        };
        if first.starts_with('#') {
            continue;
        }
        if let Some(directive) = first.strip_prefix('.') {
            if directive == "end" {
                if let Some(name) = tokens.next() {
                    if DATA_BLOCKS.contains(&name) {
                        block_depth = block_depth.saturating_sub(1);
                    }
                }
            } else if DATA_BLOCKS.contains(&directive) {
                block_depth += 1;
            }
            continue;
        }
        if block_depth > 0 {
            continue;
        }
        if first.starts_with(':') {
            first = match tokens.next() {
                Some(t) if !t.starts_with('#') => t,
                _ => continue,
            };
        }
        let mnemonic = first.split('#').next().unwrap_or(first);
        match table.lookup(mnemonic) {
            Some(byte) => histogram.add(byte),
            None => {
                unknown += 1;
                diagnostics.push(Diagnostic {
                    offset: lineno + 1,
                    message: format!("unknown mnemonic `{mnemonic}`"),
                });
            }
        }
    }

    SmaliParse {
        histogram,
        unknown,
        diagnostics,
    }
}

/// Emits one bare mnemonic line per counted opcode, in byte order.
pub fn render_smali(hist: &OpcodeHistogram) -> String {
    let table = opcode_table();
    let mut out = String::new();
    for (byte, &n) in hist.counts().iter().enumerate() {
        let name = table.mnemonic(byte as u8);
        for _ in 0..n {
            out.push_str("    ");
            out.push_str(name);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn const_string_line() {
        let p = parse_smali("    const-string v0, \"a\"\n");
        assert_eq!(p.histogram.count(0x1a), 1);
        assert_eq!(p.histogram.total(), 1);
    }

    #[test]
    fn directive_only() {
        let p = parse_smali(".method foo()V\n");
        assert_eq!(p.histogram.total(), 0);
        assert_eq!(p.unknown, 0);
    }

    #[test]
    fn repeated_invoke() {
        let line = "invoke-virtual {v0}, La;->b()V\n";
        let p = parse_smali(&line.repeat(3));
        assert_eq!(p.histogram.count(0x6e), 3);
    }

    #[test]
    fn realistic_method() {
        let text = r#"
.class public Lcom/example/Foo;
.super Ljava/lang/Object;

# direct methods
.method public constructor <init>()V
    .registers 1
    .annotation system Ldalvik/annotation/Signature;
        value = {
            "()V"
        }
    .end annotation

    invoke-direct {p0}, Ljava/lang/Object;-><init>()V
    packed-switch p0, :pswitch_data_0
    :cond_0
    return-void # done

    :pswitch_data_0
    .packed-switch 0x1
        :pswitch_0
    .end packed-switch

    :array_0
    .array-data 1
        0x1t
        0x2t
    .end array-data
.end method
"#;
        let p = parse_smali(text);
        assert_eq!(p.histogram.count(0x70), 1);
        assert_eq!(p.histogram.count(0x2b), 1);
        assert_eq!(p.histogram.count(0x0e), 1);
        assert_eq!(p.histogram.total(), 3);
        assert_eq!(p.unknown, 0, "{:?}", p.diagnostics);
    }

    #[test]
    fn unknown_tokens_are_tallied() {
        let p = parse_smali("frobnicate v1\nnop\n");
        assert_eq!(p.unknown, 1);
        assert_eq!(p.histogram.total(), 1);
        assert_eq!(p.diagnostics[0].offset, 1);
    }

    #[test]
    fn label_prefix_is_stripped() {
        let p = parse_smali(":goto_3 goto :goto_3\n");
        assert_eq!(p.histogram.count(0x28), 1);
    }
}
