//! The pair-file format: an optional `# n=<n>` header, then one event per
//! line as two 1-based integers. Other `#` lines and blank lines are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use implicit_sketch::StreamEvent;

pub const CHUNK: usize = 65_536;

pub struct PairReader {
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    header: Option<usize>,
    peeked: Option<StreamEvent>,
    n: Option<usize>,
}

impl PairReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let mut r = Self { lines: BufReader::new(file).lines(), line_no: 0, header: None, peeked: None, n: None };
        r.peeked = r.next_event()?;
        Ok(r)
    }

    /// The `n` declared by the header, if any.
    pub fn header(&self) -> Option<usize> {
        self.header
    }

    /// Rejects events outside `[1, n]` from here on.
    pub fn bound(&mut self, n: usize) -> Result<()> {
        if let Some(e) = self.peeked {
            check(e, n, self.line_no)?;
        }
        self.n = Some(n);
        Ok(())
    }

    fn next_event(&mut self) -> Result<Option<StreamEvent>> {
        for line in self.lines.by_ref() {
            self.line_no += 1;
            let line = line.with_context(|| format!("read error at line {}", self.line_no))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("n=") {
                    if self.header.is_some() || self.line_no > 1 {
                        bail!("line {}: header must be the first line", self.line_no);
                    }
                    let n = v.trim().parse::<usize>().ok().filter(|&n| n > 0);
                    self.header = Some(n.ok_or_else(|| anyhow!("line {}: bad header '{t}'", self.line_no))?);
                }
                continue;
            }
            let mut parts = t.split_whitespace();
            let mut field = || -> Option<usize> { parts.next()?.parse().ok() };
            let (Some(i), Some(j)) = (field(), field()) else {
                bail!("line {}: expected two positive integers, got '{t}'", self.line_no);
            };
            if parts.next().is_some() {
                bail!("line {}: trailing fields in '{t}'", self.line_no);
            }
            if i == 0 || j == 0 {
                bail!("line {}: indices are 1-based, got '{t}'", self.line_no);
            }
            let e = StreamEvent::new(i, j);
            if let Some(n) = self.n {
                check(e, n, self.line_no)?;
            }
            return Ok(Some(e));
        }
        Ok(None)
    }

    /// Fills `buf` with up to [`CHUNK`] events; returns false at end of file.
    pub fn next_chunk(&mut self, buf: &mut Vec<StreamEvent>) -> Result<bool> {
        buf.clear();
        while buf.len() < CHUNK {
            match self.peeked.take() {
                Some(e) => buf.push(e),
                None => match self.next_event()? {
                    Some(e) => buf.push(e),
                    None => break,
                },
            }
        }
        Ok(!buf.is_empty())
    }
}

fn check(e: StreamEvent, n: usize, line: usize) -> Result<()> {
    if e.i > n || e.j > n {
        bail!("line {line}: event ({}, {}) outside [1, {n}]", e.i, e.j);
    }
    Ok(())
}

/// The domain size of a file: its header, or the largest index it contains.
pub fn domain_size(path: &Path) -> Result<usize> {
    let mut r = PairReader::open(path)?;
    if let Some(n) = r.header() {
        return Ok(n);
    }
    let mut buf = Vec::new();
    let mut n = 0;
    while r.next_chunk(&mut buf)? {
        n = buf.iter().fold(n, |n, e| n.max(e.i).max(e.j));
    }
    Ok(n)
}

pub fn write_events(out: &mut impl Write, n: usize, events: impl Iterator<Item = StreamEvent>) -> std::io::Result<()> {
    writeln!(out, "# n={n}")?;
    for e in events {
        writeln!(out, "{} {}", e.i, e.j)?;
    }
    out.flush()
}
