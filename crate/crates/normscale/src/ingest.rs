//! Dataset I/O: logit files (CSV and binary), manifests, and seeded
//! test-stream construction.
//!
//! The binary format is the fidelity path (bit-exact round trips); CSV is
//! the interchange path, printed with 9 significant digits so `f32` values
//! survive a decimal round trip.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{LogitRecord, Origin};

/// Name pinned into report metadata so the shuffle is reproducible across
/// implementations.
pub const SHUFFLE_ALGORITHM: &str = "chacha8-fisher-yates-v1";

const MAGIC: &[u8; 4] = b"OODL";
const FORMAT_VERSION: u16 = 1;

/// On-disk logit encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Csv,
    Bin,
}

/// Role of a dataset within an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    InTest,
    OodTest,
}

impl Role {
    pub fn origin(self) -> Origin {
        match self {
            Role::Train => Origin::Train,
            Role::InTest => Origin::InTest,
            Role::OodTest => Origin::OodTest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub role: Role,
    pub path: String,
    pub format: FileFormat,
}

/// A set of logit files forming one evaluation: exactly one train entry,
/// one in-distribution test entry, and at least one OoD test entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let count = |role: Role| self.entries.iter().filter(|e| e.role == role).count();
        if count(Role::Train) != 1 {
            return Err(Error::Manifest(format!(
                "expected exactly one train entry, found {}",
                count(Role::Train)
            )));
        }
        if count(Role::InTest) != 1 {
            return Err(Error::Manifest(format!(
                "expected exactly one in_test entry, found {}",
                count(Role::InTest)
            )));
        }
        if count(Role::OodTest) == 0 {
            return Err(Error::Manifest("expected at least one ood_test entry".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn train(&self) -> &ManifestEntry {
        self.entries.iter().find(|e| e.role == Role::Train).unwrap()
    }

    pub fn in_test(&self) -> &ManifestEntry {
        self.entries.iter().find(|e| e.role == Role::InTest).unwrap()
    }

    pub fn ood_tests(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.role == Role::OodTest)
    }

    /// Resolve an entry's path relative to the manifest's own directory.
    pub fn resolve(&self, manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Read a logit file, tagging every record with `origin`.
pub fn read_logits(path: &Path, format: FileFormat, origin: Origin) -> Result<Vec<LogitRecord>> {
    match format {
        FileFormat::Csv => read_csv(path, origin),
        FileFormat::Bin => read_bin(path, origin),
    }
}

/// Write a logit file. Labels are written when every record carries one.
pub fn write_logits(path: &Path, format: FileFormat, records: &[LogitRecord]) -> Result<()> {
    match format {
        FileFormat::Csv => write_csv(path, records),
        FileFormat::Bin => write_bin(path, records),
    }
}

fn read_csv(path: &Path, origin: Origin) -> Result<Vec<LogitRecord>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.first() != Some(&"label") || cols.len() < 2 {
        return Err(parse_err(path, 1, "expected header label,z0,...,z{N-1}"));
    }
    let n = cols.len() - 1;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != n + 1 {
            return Err(Error::Shape {
                expected: n + 1,
                actual: fields.len(),
            });
        }
        let raw_label: i64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad label: {e}")))?;
        let label = match raw_label {
            -1 => None,
            l if l >= 0 && (l as usize) < n => Some(l as usize),
            l => {
                return Err(Error::Label {
                    label: l,
                    num_classes: n,
                })
            }
        };
        let mut logits = Vec::with_capacity(n);
        for f in &fields[1..] {
            let v: f32 = f
                .trim()
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad logit: {e}")))?;
            logits.push(v);
        }
        records.push(LogitRecord::new(logits, label, origin)?);
    }
    if records.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    Ok(records)
}

fn write_csv(path: &Path, records: &[LogitRecord]) -> Result<()> {
    let n = records.first().map(|r| r.width()).unwrap_or(0);
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "label")?;
    for j in 0..n {
        write!(w, ",z{j}")?;
    }
    writeln!(w)?;
    for r in records {
        let label = r.label().map(|l| l as i64).unwrap_or(-1);
        write!(w, "{label}")?;
        for &z in r.logits() {
            // 9 significant digits: exact decimal round trip for f32
            write!(w, ",{z:.8e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_bin(path: &Path, origin: Origin) -> Result<Vec<LogitRecord>> {
    let mut file = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| parse_err(path, 0, "empty or truncated file"))?;
    if &magic != MAGIC {
        return Err(parse_err(path, 0, "bad magic bytes, not an OODL file"));
    }
    let mut buf2 = [0u8; 2];
    file.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != FORMAT_VERSION {
        return Err(parse_err(
            path,
            0,
            format!("unsupported format version {version}"),
        ));
    }
    let mut buf8 = [0u8; 8];
    file.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    let mut buf4 = [0u8; 4];
    file.read_exact(&mut buf4)?;
    let cols = u32::from_le_bytes(buf4) as usize;
    let mut buf1 = [0u8; 1];
    file.read_exact(&mut buf1)?;
    let has_labels = match buf1[0] {
        0 => false,
        1 => true,
        b => return Err(parse_err(path, 0, format!("bad label-presence byte {b}"))),
    };
    if rows == 0 {
        return Err(parse_err(path, 0, "zero rows"));
    }
    let mut logits = vec![0u8; rows * cols * 4];
    file.read_exact(&mut logits)
        .map_err(|_| parse_err(path, 0, "truncated logit payload"))?;
    let mut labels = Vec::new();
    if has_labels {
        let mut raw = vec![0u8; rows * 4];
        file.read_exact(&mut raw)
            .map_err(|_| parse_err(path, 0, "truncated label payload"))?;
        for chunk in raw.chunks_exact(4) {
            labels.push(i32::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    let mut records = Vec::with_capacity(rows);
    for i in 0..rows {
        let row: Vec<f32> = logits[i * cols * 4..(i + 1) * cols * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let label = if has_labels {
            match labels[i] {
                -1 => None,
                l if l >= 0 && (l as usize) < cols => Some(l as usize),
                l => {
                    return Err(Error::Label {
                        label: l as i64,
                        num_classes: cols,
                    })
                }
            }
        } else {
            None
        };
        records.push(LogitRecord::new(row, label, origin)?);
    }
    Ok(records)
}

fn write_bin(path: &Path, records: &[LogitRecord]) -> Result<()> {
    let rows = records.len();
    let cols = records.first().map(|r| r.width()).unwrap_or(0);
    for r in records {
        if r.width() != cols {
            return Err(Error::Shape {
                expected: cols,
                actual: r.width(),
            });
        }
    }
    // label section written if any record is labeled; -1 marks absence
    let has_labels = records.iter().any(|r| r.label().is_some());
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u32).to_le_bytes())?;
    w.write_all(&[u8::from(has_labels)])?;
    for r in records {
        for &z in r.logits() {
            w.write_all(&z.to_le_bytes())?;
        }
    }
    if has_labels {
        for r in records {
            let l = r.label().map(|l| l as i32).unwrap_or(-1);
            w.write_all(&l.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Concatenate the in-distribution test set with the selected OoD sets and
/// shuffle with a seeded Fisher-Yates pass.
///
/// The generator is pinned ([`SHUFFLE_ALGORITHM`]): ChaCha8 seeded with
/// `seed`, swap index drawn as `next_u64() % (i + 1)`. Same seed, same
/// order, on every platform.
pub fn build_test_stream(
    in_test: &[LogitRecord],
    ood_sets: &[&[LogitRecord]],
    seed: u64,
) -> Result<Vec<LogitRecord>> {
    if in_test.is_empty() || ood_sets.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidParam(
            "test stream inputs must be non-empty".into(),
        ));
    }
    let mut stream: Vec<LogitRecord> = in_test.to_vec();
    for set in ood_sets {
        stream.extend(set.iter().cloned());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..stream.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        stream.swap(i, j);
    }
    Ok(stream)
}
