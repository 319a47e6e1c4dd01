//! Uniformly sampled time series and their on-disk formats.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "NVMS" | version u32 | rate f64 | t0 f64 | unit u8 | count u64 | count × f64
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"NVMS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a sample-stream file (bad magic)")]
    BadMagic,
    #[error("unsupported stream format version {0}")]
    BadVersion(u32),
    #[error("unknown unit code {0}")]
    BadUnit(u8),
    #[error("invalid stream: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Volts,
    Hertz,
    Tesla,
    Dimensionless,
}

impl Unit {
    fn code(self) -> u8 {
        match self {
            Unit::Volts => 0,
            Unit::Hertz => 1,
            Unit::Tesla => 2,
            Unit::Dimensionless => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self, StreamError> {
        Ok(match c {
            0 => Unit::Volts,
            1 => Unit::Hertz,
            2 => Unit::Tesla,
            3 => Unit::Dimensionless,
            _ => return Err(StreamError::BadUnit(c)),
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Volts => "V",
            Unit::Hertz => "Hz",
            Unit::Tesla => "T",
            Unit::Dimensionless => "1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<f64>,
    /// Samples per second.
    pub rate: f64,
    pub unit: Unit,
    /// Time of the first sample, seconds.
    pub t0: f64,
}

impl SampleStream {
    pub fn new(samples: Vec<f64>, rate: f64, unit: Unit) -> Self {
        Self {
            samples,
            rate,
            unit,
            t0: 0.0,
        }
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(StreamError::Invalid(format!("rate must be positive, got {}", self.rate)));
        }
        if !self.t0.is_finite() {
            return Err(StreamError::Invalid("t0 is not finite".into()));
        }
        if let Some(k) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(StreamError::Invalid(format!("sample {k} is not finite")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let n = self.samples.len();
        if n == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    }

    /// Drop the first `n` samples, shifting `t0` accordingly.
    pub fn skip(&self, n: usize) -> SampleStream {
        let n = n.min(self.samples.len());
        SampleStream {
            samples: self.samples[n..].to_vec(),
            rate: self.rate,
            unit: self.unit,
            t0: self.time(n),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.rate.to_le_bytes())?;
        w.write_all(&self.t0.to_le_bytes())?;
        w.write_all(&[self.unit.code()])?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for v in &self.samples {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, StreamError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(StreamError::BadMagic);
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != FORMAT_VERSION {
            return Err(StreamError::BadVersion(version));
        }
        let rate = f64::from_le_bytes(read_array(r)?);
        let t0 = f64::from_le_bytes(read_array(r)?);
        let unit = Unit::from_code(read_array::<1, _>(r)?[0])?;
        let count = u64::from_le_bytes(read_array(r)?);
        let count = usize::try_from(count).map_err(|_| StreamError::Invalid("sample count overflows".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(StreamError::Invalid(format!(
                "header says {count} samples, payload holds {} bytes",
                bytes.len()
            )));
        }
        let samples = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let s = SampleStream { samples, rate, unit, t0 };
        s.validate()?;
        Ok(s)
    }

    /// Write atomically: a temporary file in the target directory is renamed into place.
    pub fn save(&self, path: &Path) -> Result<(), StreamError> {
        write_atomic(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self, StreamError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Write `t, s1, s2, ...` rows for streams sharing a time base.
pub fn write_csv<W: Write>(w: &mut W, names: &[&str], streams: &[&SampleStream]) -> io::Result<()> {
    write!(w, "t_s")?;
    for (n, s) in names.iter().zip(streams) {
        write!(w, ",{}_{}", n, s.unit.symbol())?;
    }
    writeln!(w)?;
    let len = streams.iter().map(|s| s.len()).min().unwrap_or(0);
    for k in 0..len {
        write!(w, "{:.9}", streams[0].time(k))?;
        for s in streams {
            write!(w, ",{:e}", s.samples[k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Run `fill` against a temporary file next to `path`, then rename it into place.
pub fn write_atomic<E, F>(path: &Path, fill: F) -> Result<(), E>
where
    E: From<io::Error>,
    F: FnOnce(&mut BufWriter<&mut File>) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let s = SampleStream::new(vec![1.0, -2.5, 3.25e-9, f64::MIN_POSITIVE], 2704.0, Unit::Tesla).with_t0(0.125);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 1 + 8 + 4 * 8);
        let back = SampleStream::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_corrupt_files() {
        let s = SampleStream::new(vec![1.0, 2.0], 10.0, Unit::Volts);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(SampleStream::read_from(&mut bad.as_slice()), Err(StreamError::BadMagic)));
        let truncated = &buf[..buf.len() - 3];
        assert!(SampleStream::read_from(&mut &truncated[..]).is_err());
        let mut unit = buf.clone();
        unit[24] = 9;
        assert!(matches!(SampleStream::read_from(&mut unit.as_slice()), Err(StreamError::BadUnit(9))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.nvms");
        let s = SampleStream::new((0..100).map(|k| k as f64 * 0.5).collect(), 100.0, Unit::Hertz);
        s.save(&p).unwrap();
        assert_eq!(SampleStream::load(&p).unwrap(), s);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let a = SampleStream::new(vec![1.0, 2.0], 2.0, Unit::Tesla);
        let b = SampleStream::new(vec![3.0, 4.0], 2.0, Unit::Tesla);
        let mut out = Vec::new();
        write_csv(&mut out, &["bx", "by"], &[&a, &b]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t_s,bx_T,by_T");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("0.500000000,"));
    }

    #[test]
    fn stats_and_skip() {
        let s = SampleStream::new(vec![1.0, 3.0, 1.0, 3.0], 4.0, Unit::Volts);
        assert_eq!(s.mean(), 2.0);
        assert_eq!(s.std(), 1.0);
        let t = s.skip(2);
        assert_eq!(t.samples, vec![1.0, 3.0]);
        assert_eq!(t.t0, 0.5);
    }
}
