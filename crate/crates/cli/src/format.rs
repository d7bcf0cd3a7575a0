//! Series files and pair manifests.
//!
//! Text: one timestep per line, `D` comma-separated values, `#` comment lines,
//! no header. Binary: `b"SDTW"`, version byte `1`, little-endian `u32` length,
//! feature dim and scalar width (4 or 8), then the values row-major.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use sdtw_core::{Real, SeriesBatch};

pub const MAGIC: &[u8; 4] = b"SDTW";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 12;

/// Reads a single series (batch size 1), detecting binary files by their magic.
pub fn read_series(path: &Path) -> Result<SeriesBatch<f64>> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes).with_context(|| format!("in {}", path.display()))
    } else {
        let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8 text", path.display()))?;
        parse_text(&text).with_context(|| format!("in {}", path.display()))
    }
}

pub fn parse_text(text: &str) -> Result<SeriesBatch<f64>> {
    let mut values = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("line {}: cannot parse {:?} as a number", k + 1, field.trim()))?;
            ensure!(v.is_finite(), "line {}: non-finite value {v}", k + 1);
            values.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => bail!("line {}: expected {d} values, found {count}", k + 1),
            Some(_) => {}
        }
        rows += 1;
    }
    let Some(dim) = dim else { bail!("no data rows") };
    Ok(SeriesBatch::new(values, 1, rows, dim)?)
}

pub fn decode_binary(bytes: &[u8]) -> Result<SeriesBatch<f64>> {
    ensure!(
        bytes.len() >= HEADER_LEN && bytes.starts_with(MAGIC),
        "missing SDTW header"
    );
    ensure!(bytes[4] == VERSION, "unsupported format version {}", bytes[4]);
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as usize;
    let (len, dim, width) = (word(5), word(9), word(13));
    ensure!(width == 4 || width == 8, "unsupported scalar width {width}");
    let count = len.checked_mul(dim).context("header dimensions overflow")?;
    let body = &bytes[HEADER_LEN..];
    ensure!(
        body.len() == count * width,
        "expected {} bytes of data for {len} x {dim} x {width}, found {}",
        count * width,
        body.len()
    );
    let values: Vec<f64> = if width == 4 {
        body.chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
            .collect()
    } else {
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect()
    };
    Ok(SeriesBatch::new(values, 1, len, dim)?)
}

/// Binary encoding of batch element `b` with the scalar width of `T`.
pub fn encode_binary<T: Real>(s: &SeriesBatch<T>, b: usize) -> Result<Vec<u8>> {
    let (len, dim) = (s.len(), s.feature_dim());
    let mut out = Vec::with_capacity(HEADER_LEN + len * dim * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [len, dim, T::BYTES] {
        out.extend_from_slice(&u32::try_from(v).context("dimension exceeds u32")?.to_le_bytes());
    }
    for &v in s.sequence(b) {
        if T::BYTES == 4 {
            out.extend_from_slice(&v.to_f32().expect("f32 value").to_le_bytes());
        } else {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

/// Text encoding of batch element `b`; values use the shortest round-trip form.
pub fn encode_text<T: Real>(s: &SeriesBatch<T>, b: usize) -> String {
    let mut out = String::new();
    for i in 0..s.len() {
        let row: Vec<String> = s.point(b, i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes element `b`: binary for a `.sdtw` or `.bin` extension, text otherwise.
pub fn write_series<T: Real>(path: &Path, s: &SeriesBatch<T>, b: usize) -> Result<()> {
    let binary = matches!(path.extension().and_then(|e| e.to_str()), Some("sdtw" | "bin"));
    let bytes = if binary {
        encode_binary(s, b)?
    } else {
        encode_text(s, b).into_bytes()
    };
    let mut f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Pairs `x_path,y_path` per line; relative paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((x, y)) = line.split_once(',') else {
            bail!("{} line {}: expected \"x_path,y_path\"", path.display(), k + 1);
        };
        pairs.push((base.join(x.trim()), base.join(y.trim())));
    }
    ensure!(!pairs.is_empty(), "{} lists no pairs", path.display());
    Ok(pairs)
}

/// Series files in a directory (`.csv`, `.txt`, `.sdtw`, `.bin`), sorted by name.
pub fn list_series_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let p = entry?.path();
        if p.is_file()
            && matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("csv" | "txt" | "sdtw" | "bin")
            )
        {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}
