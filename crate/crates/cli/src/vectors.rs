//! Test-vector files.
//!
//! The first non-comment line is a JSON header carrying the configuration and
//! seed. Every following line is one record of named hex fields:
//!
//! ```text
//! {"format":"fp16","n":4,"seed":7,"subnormal_flush":true,"alignment_bits":64,"fp8_pair_presum":false}
//! a=3c003c00,3c003c00 b=3c003c00,3c003c00 c=00000000 expect=40800000 class=uniform
//! ```
//!
//! Words are 8 hex digits. Blank lines and lines starting with `#` are
//! skipped. A file with no records needs no header.

use std::fmt::Write as _;
use std::str::FromStr;

use fedp_core::{FedpConfig, FedpRequest, FormatKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gen::CaseClass;

#[derive(Debug, Error)]
pub enum VectorFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(#[from] fedp_core::PipelineError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> VectorFileError {
    VectorFileError::Parse { line, msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorHeader {
    pub format: FormatKind,
    pub n: usize,
    pub seed: Option<u64>,
    #[serde(default = "default_true")]
    pub subnormal_flush: bool,
    #[serde(default = "default_alignment")]
    pub alignment_bits: u32,
    #[serde(default)]
    pub fp8_pair_presum: bool,
}

fn default_true() -> bool {
    true
}

fn default_alignment() -> u32 {
    fedp_core::pipeline::DEFAULT_ALIGNMENT_BITS
}

impl VectorHeader {
    pub fn from_config(cfg: &FedpConfig, seed: Option<u64>) -> Self {
        VectorHeader {
            format: cfg.mul_format.kind,
            n: cfg.n_elements,
            seed,
            subnormal_flush: cfg.subnormal_flush,
            alignment_bits: cfg.alignment_bits,
            fp8_pair_presum: cfg.fp8_pair_presum,
        }
    }

    pub fn config(&self) -> Result<FedpConfig, fedp_core::PipelineError> {
        let cfg = FedpConfig::new(self.n, self.format)?
            .with_subnormal_flush(self.subnormal_flush)
            .with_fp8_pair_presum(self.fp8_pair_presum)
            .with_alignment_bits(self.alignment_bits)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVectorRecord {
    pub a_words: Vec<u32>,
    pub b_words: Vec<u32>,
    pub c_word: u32,
    pub expected_word: u32,
    pub class: Option<CaseClass>,
}

impl TestVectorRecord {
    pub fn request(&self, cfg: FedpConfig) -> FedpRequest {
        FedpRequest {
            cfg,
            a_words: self.a_words.clone(),
            b_words: self.b_words.clone(),
            c_word: self.c_word,
        }
    }

    pub fn to_line(&self) -> String {
        let words = |ws: &[u32]| ws.iter().map(|w| format!("{w:08x}")).collect::<Vec<_>>().join(",");
        let mut line = format!(
            "a={} b={} c={:08x} expect={:08x}",
            words(&self.a_words),
            words(&self.b_words),
            self.c_word,
            self.expected_word
        );
        if let Some(class) = self.class {
            let _ = write!(line, " class={class}");
        }
        line
    }

    fn parse(text: &str, line: usize, words_per_operand: usize) -> Result<Self, VectorFileError> {
        let mut a = None;
        let mut b = None;
        let mut c = None;
        let mut expect = None;
        let mut class = None;
        for field in text.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("field `{field}` is not key=value")))?;
            match key {
                "a" => a = Some(parse_words(value, line)?),
                "b" => b = Some(parse_words(value, line)?),
                "c" => c = Some(parse_word(value, line)?),
                "expect" => expect = Some(parse_word(value, line)?),
                "class" => {
                    class = Some(CaseClass::from_str(value).map_err(|e| parse_err(line, e))?);
                }
                _ => return Err(parse_err(line, format!("unknown field `{key}`"))),
            }
        }
        let missing = |name: &str| parse_err(line, format!("missing field `{name}`"));
        let record = TestVectorRecord {
            a_words: a.ok_or_else(|| missing("a"))?,
            b_words: b.ok_or_else(|| missing("b"))?,
            c_word: c.ok_or_else(|| missing("c"))?,
            expected_word: expect.ok_or_else(|| missing("expect"))?,
            class,
        };
        for (name, words) in [("a", &record.a_words), ("b", &record.b_words)] {
            if words.len() != words_per_operand {
                return Err(parse_err(
                    line,
                    format!("operand {name} has {} words, expected {words_per_operand}", words.len()),
                ));
            }
        }
        Ok(record)
    }
}

fn parse_word(text: &str, line: usize) -> Result<u32, VectorFileError> {
    if text.len() != 8 {
        return Err(parse_err(line, format!("`{text}` is not an 8-digit hex word")));
    }
    u32::from_str_radix(text, 16).map_err(|_| parse_err(line, format!("`{text}` is not hex")))
}

fn parse_words(text: &str, line: usize) -> Result<Vec<u32>, VectorFileError> {
    text.split(',').map(|w| parse_word(w, line)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorFile {
    pub header: Option<VectorHeader>,
    /// Records with their 1-based source line.
    pub records: Vec<(usize, TestVectorRecord)>,
}

impl VectorFile {
    pub fn new(header: VectorHeader, records: Vec<TestVectorRecord>) -> Self {
        // header on line 1, records follow
        let records = records.into_iter().enumerate().map(|(i, r)| (i + 2, r)).collect();
        VectorFile { header: Some(header), records }
    }

    pub fn config(&self) -> Result<Option<FedpConfig>, VectorFileError> {
        Ok(match &self.header {
            Some(h) => Some(h.config()?),
            None => None,
        })
    }

    pub fn parse(text: &str) -> Result<Self, VectorFileError> {
        let mut header: Option<(VectorHeader, FedpConfig)> = None;
        let mut records = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match &header {
                None => {
                    if !trimmed.starts_with('{') {
                        return Err(parse_err(line, "expected JSON header before records"));
                    }
                    let h: VectorHeader = serde_json::from_str(trimmed)
                        .map_err(|e| parse_err(line, format!("bad header: {e}")))?;
                    let cfg = h.config().map_err(|e| parse_err(line, e.to_string()))?;
                    header = Some((h, cfg));
                }
                Some((_, cfg)) => {
                    records.push((line, TestVectorRecord::parse(trimmed, line, cfg.words_per_operand())?));
                }
            }
        }
        Ok(VectorFile { header: header.map(|(h, _)| h), records })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            out.push_str(&serde_json::to_string(h).expect("header serializes"));
            out.push('\n');
        }
        for (_, r) in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }
}
