//! On-disk formats.
//!
//! Binary files are little-endian with an 8-byte magic and a version byte.
//! Text files are tab- or comma-separated, unquoted, one record per line;
//! floats are written in shortest round-trip form. Every loader re-checks
//! the invariants of the type it builds.
//!
//! Vector file (`NSAEVEC\0`):
//!
//! | offset | size | field                                 |
//! |--------|------|---------------------------------------|
//! | 0      | 8    | magic `NSAEVEC\0`                     |
//! | 8      | 1    | version (1)                           |
//! | 9      | 1    | dtype: 1 = f64, 2 = f32               |
//! | 10     | 2    | reserved, zero                        |
//! | 12     | 8    | n (u64)                               |
//! | 20     | 8    | dim (u64)                             |
//! | 28     | ...  | n * dim values, row-major             |
//!
//! Checkpoint file (`NSAECKPT`): magic, version byte, 3 reserved bytes,
//! u32 layer count `L + 1`, `L + 1` u64 layer sizes, `L` activation bytes
//! (0 = relu, 1 = linear), u64 epoch, u64 seed, 32-byte config hash, then
//! per layer the `fan_out x fan_in` weights followed by `fan_out` biases,
//! all f64.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{Label, ScoreSet, Trial, TrialList};
use crate::neighbors::{NeighborMap, SelectionMode};
use crate::net::{Activation, AutoencoderParams};
use crate::vecmath::FaceVector;

pub const VECTOR_MAGIC: &[u8; 8] = b"NSAEVEC\0";
pub const VECTOR_VERSION: u8 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSAECKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

const DTYPE_F64: u8 = 1;
const DTYPE_F32: u8 = 2;
const VECTOR_HEADER_LEN: u64 = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Binary,
    Csv,
}

impl VectorFormat {
    /// `.csv` files are text; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => VectorFormat::Csv,
            _ => VectorFormat::Binary,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_vectors(path: &Path, data: &[FaceVector]) -> Result<()> {
    match VectorFormat::from_path(path) {
        VectorFormat::Binary => {
            let mut w = create(path)?;
            w.write_all(&encode_vectors(data)?).map_err(|e| Error::io(path, e))?;
            finish(path, w)
        }
        VectorFormat::Csv => {
            let mut w = create(path)?;
            for v in data {
                let line = v.as_slice().iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
                writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
            }
            finish(path, w)
        }
    }
}

pub fn load_vectors(path: &Path) -> Result<Vec<FaceVector>> {
    match VectorFormat::from_path(path) {
        VectorFormat::Binary => decode_vectors(&read_all(path)?),
        VectorFormat::Csv => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            parse_csv_vectors(BufReader::new(f))
        }
    }
}

/// Serializes vectors to the binary layout (always f64).
pub fn encode_vectors(data: &[FaceVector]) -> Result<Vec<u8>> {
    let dim = data.first().map(FaceVector::dim).unwrap_or(0);
    let mut out = Vec::with_capacity(VECTOR_HEADER_LEN as usize + data.len() * dim * 8);
    out.extend_from_slice(VECTOR_MAGIC);
    out.push(VECTOR_VERSION);
    out.push(DTYPE_F64);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    for (index, v) in data.iter().enumerate() {
        if v.dim() != dim {
            return Err(Error::AtIndex {
                index,
                source: Box::new(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                }),
            });
        }
        for x in v.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptHeader {
                offset: self.offset(),
                reason: format!("file ends inside {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> u64 {
        (self.buf.len() - self.pos) as u64
    }

    fn expect_payload(&self, expected: u64) -> Result<()> {
        let found = self.remaining();
        if found < expected {
            return Err(Error::TruncatedPayload {
                offset: self.offset(),
                expected,
                found,
            });
        }
        if found > expected {
            return Err(Error::CorruptHeader {
                offset: self.offset() + expected,
                reason: format!("{} trailing bytes after payload", found - expected),
            });
        }
        Ok(())
    }

    fn f64s(&mut self, count: usize) -> Vec<f64> {
        let bytes = &self.buf[self.pos..self.pos + count * 8];
        self.pos += count * 8;
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect()
    }
}

fn check_magic(c: &mut Cursor<'_>, magic: &[u8; 8], version: u8) -> Result<()> {
    if c.buf.is_empty() {
        return Err(Error::CorruptHeader {
            offset: 0,
            reason: "empty file".into(),
        });
    }
    if c.take(8, "magic")? != magic {
        return Err(Error::CorruptHeader {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let found = c.u8("version")?;
    if found != version {
        return Err(Error::Version {
            found,
            expected: version,
        });
    }
    Ok(())
}

pub fn decode_vectors(buf: &[u8]) -> Result<Vec<FaceVector>> {
    let mut c = Cursor::new(buf);
    check_magic(&mut c, VECTOR_MAGIC, VECTOR_VERSION)?;
    let dtype_offset = c.offset();
    let dtype = c.u8("dtype")?;
    let width = match dtype {
        DTYPE_F64 => 8u64,
        DTYPE_F32 => 4u64,
        other => {
            return Err(Error::CorruptHeader {
                offset: dtype_offset,
                reason: format!("unknown dtype tag {other}"),
            })
        }
    };
    let reserved_offset = c.offset();
    if c.take(2, "reserved bytes")? != [0, 0] {
        return Err(Error::CorruptHeader {
            offset: reserved_offset,
            reason: "reserved bytes must be zero".into(),
        });
    }
    let n = c.u64("n")?;
    let dim_offset = c.offset();
    let dim = c.u64("dim")?;
    if n > 0 && dim == 0 {
        return Err(Error::CorruptHeader {
            offset: dim_offset,
            reason: "dim is zero".into(),
        });
    }
    let expected = n
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| Error::CorruptHeader {
            offset: dim_offset,
            reason: "n * dim overflows".into(),
        })?;
    c.expect_payload(expected)?;

    let (n, dim) = (n as usize, dim as usize);
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        let values = if dtype == DTYPE_F64 {
            c.f64s(dim)
        } else {
            let bytes = c.take(dim * 4, "payload")?;
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect()
        };
        out.push(FaceVector::new(values).map_err(|_| Error::NonFinite { index })?);
    }
    Ok(out)
}

pub fn parse_csv_vectors<R: BufRead>(reader: R) -> Result<Vec<FaceVector>> {
    let mut out = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    reason: format!("`{}`: {e}", f.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(Error::DimInconsistent {
                line: lineno,
                expected,
                found: values.len(),
            });
        }
        let v = FaceVector::new(values).map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Training metadata stored alongside the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub epoch: u64,
    pub seed: u64,
    pub config_hash: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: AutoencoderParams,
    pub meta: CheckpointMeta,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let p = &ckpt.params;
    let mut out = Vec::with_capacity(64 + p.num_parameters() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(p.layer_sizes().len() as u32).to_le_bytes());
    for &s in p.layer_sizes() {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    for layer in p.layers() {
        out.push(match layer.activation {
            Activation::Relu => 0,
            Activation::Linear => 1,
        });
    }
    out.extend_from_slice(&ckpt.meta.epoch.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.seed.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.config_hash);
    for layer in p.layers() {
        for w in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor::new(buf);
    check_magic(&mut c, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    c.take(3, "reserved bytes")?;
    let count_offset = c.offset();
    let count = c.u32("layer count")? as usize;
    if count < 3 || count as u64 > c.remaining() / 8 {
        return Err(Error::CorruptHeader {
            offset: count_offset,
            reason: format!("implausible layer count {count}"),
        });
    }
    let mut sizes = Vec::with_capacity(count);
    for _ in 0..count {
        let s = c.u64("layer size")?;
        sizes.push(usize::try_from(s).map_err(|_| Error::CorruptHeader {
            offset: c.offset() - 8,
            reason: "layer size overflows".into(),
        })?);
    }
    let mut acts = Vec::with_capacity(count - 1);
    for _ in 0..count - 1 {
        let at = c.offset();
        acts.push(match c.u8("activation")? {
            0 => Activation::Relu,
            1 => Activation::Linear,
            other => {
                return Err(Error::CorruptHeader {
                    offset: at,
                    reason: format!("unknown activation tag {other}"),
                })
            }
        });
    }
    let epoch = c.u64("epoch")?;
    let seed = c.u64("seed")?;
    let config_hash: [u8; 32] = c.take(32, "config hash")?.try_into().expect("32 bytes");

    let expected: u64 = sizes
        .windows(2)
        .map(|w| (w[0] as u64) * (w[1] as u64) + w[1] as u64)
        .sum::<u64>()
        * 8;
    c.expect_payload(expected)?;
    let mut weights = Vec::with_capacity(count - 1);
    let mut biases = Vec::with_capacity(count - 1);
    for w in sizes.windows(2) {
        weights.push(c.f64s(w[0] * w[1]));
        biases.push(c.f64s(w[1]));
    }
    let params = AutoencoderParams::from_parts(sizes, weights, biases, acts)?;
    Ok(Checkpoint {
        params,
        meta: CheckpointMeta {
            epoch,
            seed,
            config_hash,
        },
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_all(path)?)
}

/// `# mode=topk k=5` (or `# mode=threshold t=0.2`), then `i: j1,j2,...`.
pub fn format_neighbor_map(map: &NeighborMap) -> String {
    let mut out = match map.mode() {
        SelectionMode::TopK(k) => format!("# mode=topk k={k}\n"),
        SelectionMode::Threshold(t) => format!("# mode=threshold t={t:?}\n"),
    };
    for (i, row) in map.rows().iter().enumerate() {
        let list = row.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        out.push_str(&format!("{i}: {list}\n"));
    }
    out
}

fn parse_mode(line: &str, lineno: usize) -> Result<SelectionMode> {
    let bad = |reason: String| Error::Parse { line: lineno, reason };
    let body = line.trim_start_matches('#').trim();
    let mut mode = None;
    let mut param = None;
    for tok in body.split_whitespace() {
        match tok.split_once('=') {
            Some(("mode", v)) => mode = Some(v),
            Some((k, v)) if k == "k" || k == "t" => param = Some((k, v)),
            _ => return Err(bad(format!("unexpected header token `{tok}`"))),
        }
    }
    match (mode, param) {
        (Some("topk"), Some(("k", v))) => {
            let k: usize = v.parse().map_err(|e| bad(format!("k: {e}")))?;
            if k < 1 {
                return Err(Error::InvalidK(k));
            }
            Ok(SelectionMode::TopK(k))
        }
        (Some("threshold"), Some(("t", v))) => {
            let t: f64 = v.parse().map_err(|e| bad(format!("t: {e}")))?;
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::InvalidThreshold(t));
            }
            Ok(SelectionMode::Threshold(t))
        }
        _ => Err(bad("expected `# mode=topk k=<k>` or `# mode=threshold t=<t>`".into())),
    }
}

pub fn parse_neighbor_map(text: &str) -> Result<NeighborMap> {
    let mut mode = None;
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if mode.is_some() || !rows.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    reason: "header must come first and only once".into(),
                });
            }
            mode = Some(parse_mode(line, lineno)?);
            continue;
        }
        let bad = |reason: String| Error::Parse { line: lineno, reason };
        let (idx, list) = line.split_once(':').ok_or_else(|| bad("missing `:`".into()))?;
        let idx: usize = idx.trim().parse().map_err(|e| bad(format!("row index: {e}")))?;
        if idx != rows.len() {
            return Err(bad(format!("expected row {}, found {idx}", rows.len())));
        }
        let list = list.trim();
        let row = if list.is_empty() {
            Vec::new()
        } else {
            list.split(',')
                .map(|j| j.trim().parse::<usize>().map_err(|e| bad(format!("`{}`: {e}", j.trim()))))
                .collect::<Result<Vec<usize>>>()?
        };
        if row.contains(&idx) {
            return Err(bad(format!("row {idx} lists itself")));
        }
        rows.push(row);
    }
    let mode = mode.ok_or(Error::Parse {
        line: 1,
        reason: "missing mode header".into(),
    })?;
    if let SelectionMode::TopK(k) = mode {
        let want = k.min(rows.len().saturating_sub(1));
        if let Some(i) = rows.iter().position(|r| r.len() != want) {
            return Err(Error::InvalidNeighborMap(format!(
                "row {i} has {} neighbors, top-k with k={k} over {} vectors needs {want}",
                rows[i].len(),
                rows.len()
            )));
        }
    }
    NeighborMap::new(rows, mode)
}

pub fn save_neighbor_map(path: &Path, map: &NeighborMap) -> Result<()> {
    std::fs::write(path, format_neighbor_map(map)).map_err(|e| Error::io(path, e))
}

pub fn load_neighbor_map(path: &Path) -> Result<NeighborMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_neighbor_map(&text)
}

fn parse_label(s: &str, lineno: usize) -> Result<Label> {
    match s {
        "1" => Ok(Label::Matched),
        "0" => Ok(Label::Mismatched),
        other => Err(Error::Parse {
            line: lineno,
            reason: format!("label must be 1 or 0, found `{other}`"),
        }),
    }
}

fn parse_index(s: &str, lineno: usize) -> Result<usize> {
    s.parse().map_err(|e| Error::Parse {
        line: lineno,
        reason: format!("index `{s}`: {e}"),
    })
}

/// `index_a<TAB>index_b<TAB>{1|0}` per line.
pub fn format_trials(trials: &TrialList) -> String {
    trials
        .trials
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.a, t.b, t.label.as_digit()))
        .collect()
}

pub fn parse_trials(text: &str) -> Result<TrialList> {
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        trials.push(Trial {
            a: parse_index(fields[0], lineno)?,
            b: parse_index(fields[1], lineno)?,
            label: parse_label(fields[2], lineno)?,
        });
    }
    Ok(TrialList::new(trials))
}

pub fn save_trials(path: &Path, trials: &TrialList) -> Result<()> {
    std::fs::write(path, format_trials(trials)).map_err(|e| Error::io(path, e))
}

pub fn load_trials(path: &Path) -> Result<TrialList> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials(&text)
}

/// Loads trials and checks them against a dataset of `n` vectors.
pub fn load_trials_for(path: &Path, n: usize) -> Result<TrialList> {
    let trials = load_trials(path)?;
    trials.validate(n)?;
    Ok(trials)
}

/// `# source=<tag>` then `index_a<TAB>index_b<TAB>{1|0}<TAB>score` per trial.
pub fn format_scores(trials: &TrialList, scores: &ScoreSet) -> Result<String> {
    if trials.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: trials.len(),
            right: scores.len(),
        });
    }
    let mut out = format!("# source={}\n", scores.source.replace(['\n', '\t'], " "));
    for (t, s) in trials.trials.iter().zip(&scores.scores) {
        out.push_str(&format!("{}\t{}\t{}\t{s:?}\n", t.a, t.b, t.label.as_digit()));
    }
    Ok(out)
}

pub fn parse_scores(text: &str) -> Result<(TrialList, ScoreSet)> {
    let mut source = String::new();
    let mut trials = Vec::new();
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(src) = rest.trim().strip_prefix("source=") {
                source = src.to_string();
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        trials.push(Trial {
            a: parse_index(fields[0], lineno)?,
            b: parse_index(fields[1], lineno)?,
            label: parse_label(fields[2], lineno)?,
        });
        let s: f64 = fields[3].parse().map_err(|e| Error::Parse {
            line: lineno,
            reason: format!("score `{}`: {e}", fields[3]),
        })?;
        if !s.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                reason: "score is not finite".into(),
            });
        }
        scores.push(s);
    }
    Ok((TrialList::new(trials), ScoreSet::new(scores, source)?))
}

pub fn save_scores(path: &Path, trials: &TrialList, scores: &ScoreSet) -> Result<()> {
    std::fs::write(path, format_scores(trials, scores)?).map_err(|e| Error::io(path, e))
}

pub fn load_scores(path: &Path) -> Result<(TrialList, ScoreSet)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

/// Identity labels, one integer per line.
pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_index(l.trim(), i + 1))
        .collect()
}
