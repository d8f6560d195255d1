//! File formats: binary fields and traces, and the per-iteration CSV log.
//!
//! Both binary formats start with an ASCII header line padded with spaces to
//! at least 32 bytes, followed by little-endian `f64` payloads.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::IndexSet;
use crate::operators::BoundaryTrace;
use crate::solvers::{IterationLog, IterationRecord};

pub const FIELD_MAGIC: &str = "PATF64";
pub const TRACE_MAGIC: &str = "PATTRC";
const HEADER_MIN: usize = 32;

fn header_line(fields: &[String]) -> Vec<u8> {
    let mut line = fields.join(" ");
    while line.len() + 1 < HEADER_MIN {
        line.push(' ');
    }
    line.push('\n');
    line.into_bytes()
}

fn read_header(r: &mut impl BufRead, magic: &str) -> Result<Vec<String>> {
    let mut buf = Vec::new();
    r.read_until(b'\n', &mut buf)?;
    if buf.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let text =
        std::str::from_utf8(&buf).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
    if tokens.first().map(String::as_str) != Some(magic) {
        return Err(Error::Format(format!("expected magic {magic}")));
    }
    if tokens.len() != 4 {
        return Err(Error::Format(format!(
            "{magic} header needs 3 values, found {}",
            tokens.len() - 1
        )));
    }
    Ok(tokens)
}

fn parse<T: std::str::FromStr>(token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from `{token}`")))
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("payload too short: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(())
}

pub fn write_field_to(w: &mut impl Write, f: &ScalarField) -> Result<()> {
    w.write_all(&header_line(&[
        FIELD_MAGIC.into(),
        f.rows().to_string(),
        f.cols().to_string(),
        f.step().to_string(),
    ]))?;
    write_f64s(w, f.as_slice())
}

pub fn read_field_from(r: &mut impl BufRead) -> Result<ScalarField> {
    let h = read_header(r, FIELD_MAGIC)?;
    let rows: usize = parse(&h[1], "rows")?;
    let cols: usize = parse(&h[2], "cols")?;
    let hx: f64 = parse(&h[3], "h_x")?;
    let data = read_f64s(r, rows * cols)?;
    expect_eof(r)?;
    ScalarField::from_vec(rows, cols, hx, data)
}

pub fn write_field(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field_to(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    read_field_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_trace_to(w: &mut impl Write, g: &BoundaryTrace) -> Result<()> {
    w.write_all(&header_line(&[
        TRACE_MAGIC.into(),
        g.boundary_count().to_string(),
        g.time_count().to_string(),
        g.ht().to_string(),
    ]))?;
    for [a, b] in g.indices().iter() {
        for v in [a, b] {
            let v =
                u32::try_from(v).map_err(|_| Error::Format(format!("index {v} exceeds u32")))?;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    write_f64s(w, g.values())
}

pub fn read_trace_from(r: &mut impl BufRead) -> Result<BoundaryTrace> {
    let h = read_header(r, TRACE_MAGIC)?;
    let nb: usize = parse(&h[1], "boundary count")?;
    let nt: usize = parse(&h[2], "time count")?;
    let ht: f64 = parse(&h[3], "h_t")?;
    let mut bytes = vec![0u8; nb * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("index table too short: {e}")))?;
    let idx: Vec<[usize; 2]> = bytes
        .chunks_exact(8)
        .map(|c| {
            let a = u32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
            let b = u32::from_le_bytes(c[4..8].try_into().expect("4 bytes"));
            [a as usize, b as usize]
        })
        .collect();
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format(
            "index table must be strictly increasing".into(),
        ));
    }
    let values = read_f64s(r, nb * nt)?;
    expect_eof(r)?;
    BoundaryTrace::new(IndexSet::new(idx), nt, ht, values)
}

pub fn write_trace(path: impl AsRef<Path>, g: &BoundaryTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace_to(&mut w, g)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<BoundaryTrace> {
    read_trace_from(&mut BufReader::new(File::open(path)?))
}

pub const LOG_HEADER: &str = "iter,err_sq,res_sq,seconds";

/// Appends one CSV row per record and flushes after each.
pub struct LogWriter<W: Write> {
    out: W,
}

impl LogWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{LOG_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &IterationRecord) -> Result<()> {
        let err = r.err_sq.map(|e| format!("{e:e}")).unwrap_or_default();
        writeln!(
            self.out,
            "{},{},{:e},{:e}",
            r.iter, err, r.res_sq, r.seconds
        )?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_log(path: impl AsRef<Path>, log: &IterationLog) -> Result<()> {
    let mut w = LogWriter::create(path)?;
    for r in log.records() {
        w.write(r)?;
    }
    Ok(())
}

pub fn read_log_from(r: impl BufRead) -> Result<IterationLog> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != LOG_HEADER {
        return Err(Error::Format(format!("log must start with `{LOG_HEADER}`")));
    }
    let mut log = IterationLog::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!("log row `{line}` needs 4 columns")));
        }
        let err_sq = if cols[1].is_empty() {
            None
        } else {
            Some(parse(cols[1], "err_sq")?)
        };
        log.push(IterationRecord {
            iter: parse(cols[0], "iter")?,
            err_sq,
            res_sq: parse(cols[2], "res_sq")?,
            seconds: parse(cols[3], "seconds")?,
        })?;
    }
    Ok(log)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<IterationLog> {
    read_log_from(BufReader::new(File::open(path)?))
}
