use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::ResultRow;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "sweep_value,m_ue,n_tx,p_d,q_used,flagged,mean_gamma_t,mean_min_comm_sinr,wall_time_s,seed";

/// Shortest round-trip decimal, padded with zeros to at least four significant digits.
fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let mut s = format!("{x}");
    let digits = s.trim_start_matches('-').chars().filter(|c| c.is_ascii_digit()).collect::<String>();
    let sig = digits.trim_start_matches('0').len();
    // zero has no significant digits; show it as 0.000
    let missing = if x == 0.0 { 3usize.saturating_sub(s.split('.').nth(1).map_or(0, str::len)) } else { 4usize.saturating_sub(sig) };
    if missing > 0 {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', missing));
    }
    s
}

pub fn format_row(r: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        fmt_f64(r.sweep_value),
        r.m_ue,
        r.n_tx,
        fmt_f64(r.p_d),
        r.q_used,
        r.flagged,
        fmt_f64(r.mean_gamma_t),
        fmt_f64(r.mean_min_comm_sinr),
        fmt_f64(r.wall_time_s),
        r.seed
    )
}

/// Writes the header and all rows.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Experiment("no rows to write".into()));
    }
    let mut sink = CsvSink::create(path)?;
    for r in rows {
        sink.write(r)?;
    }
    Ok(())
}

/// CSV file that is flushed after every row.
pub struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CSV_HEADER.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(CsvSink { out })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        self.out.write_all(format_row(row).as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, line: usize) -> Result<T> {
    parts[i]
        .parse()
        .map_err(|_| Error::Experiment(format!("line {line}: cannot parse column {i} `{}`", parts[i])))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().transpose()?;
    match header.as_deref() {
        Some(CSV_HEADER) => {}
        _ => return Err(Error::Experiment(format!("{} does not start with the result header", path.display()))),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 10 {
            return Err(Error::Experiment(format!("line {}: expected 10 columns", n + 2)));
        }
        let l = n + 2;
        rows.push(ResultRow {
            sweep_value: field(&parts, 0, l)?,
            m_ue: field(&parts, 1, l)?,
            n_tx: field(&parts, 2, l)?,
            p_d: field(&parts, 3, l)?,
            q_used: field(&parts, 4, l)?,
            flagged: field(&parts, 5, l)?,
            mean_gamma_t: field(&parts, 6, l)?,
            mean_min_comm_sinr: field(&parts, 7, l)?,
            wall_time_s: field(&parts, 8, l)?,
            seed: field(&parts, 9, l)?,
        });
    }
    Ok(rows)
}

/// Pretty-printed JSON array of the rows.
pub fn emit_json(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, rows)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
