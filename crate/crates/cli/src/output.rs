use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// Fixed 17-significant-digit rendering, which parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Destination for command output. File output goes to a temporary file in
/// the target directory and is renamed into place by [`Sink::finish`], so an
/// error part-way leaves nothing behind.
pub enum Sink {
    Stdout(BufWriter<io::Stdout>),
    File {
        tmp: BufWriter<NamedTempFile>,
        target: PathBuf,
    },
}

impl Sink {
    pub fn open(out: Option<&Path>) -> io::Result<Self> {
        match out {
            None => Ok(Sink::Stdout(BufWriter::new(io::stdout()))),
            Some(target) => {
                let dir = match target.parent() {
                    Some(p) if !p.as_os_str().is_empty() => p,
                    _ => Path::new("."),
                };
                Ok(Sink::File {
                    tmp: BufWriter::new(NamedTempFile::new_in(dir)?),
                    target: target.to_path_buf(),
                })
            }
        }
    }

    pub fn finish(self) -> io::Result<()> {
        match self {
            Sink::Stdout(mut w) => w.flush(),
            Sink::File { tmp, target } => {
                let tmp = tmp.into_inner().map_err(|e| e.into_error())?;
                tmp.as_file().sync_all()?;
                tmp.persist(&target).map_err(|e| e.error)?;
                Ok(())
            }
        }
    }
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::Stdout(w) => w.write(buf),
            Sink::File { tmp, .. } => tmp.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::Stdout(w) => w.flush(),
            Sink::File { tmp, .. } => tmp.flush(),
        }
    }
}

/// Writes a complete payload to `out` (or stdout).
pub fn emit(out: Option<&Path>, payload: &[u8]) -> io::Result<()> {
    let mut sink = Sink::open(out)?;
    sink.write_all(payload)?;
    sink.finish()
}

/// Renders CSV records (the first one is the header).
pub fn csv_bytes<I, R>(records: I) -> io::Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn json_bytes<T: serde::Serialize>(value: &T) -> io::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
