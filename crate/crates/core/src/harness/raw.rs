use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64;

use super::pipeline::RawReport;
use crate::scene::{synthesize_paths, SceneConfig, SnapshotGenerator};
use crate::srs::{q15_decode, q15_encode, Q15Sample, Q15_STEP};
use crate::{Error, Result};

pub const RAW_MAGIC: &[u8; 6] = b"SRSQ15";
const HEADER_LEN: u64 = 6 + 4 * 4;

/// Header of a raw Q15 file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawQ15Header {
    pub layers: usize,
    pub beams: usize,
    pub prbs: usize,
    pub records: usize,
}

impl RawQ15Header {
    fn samples(&self) -> usize {
        self.layers * self.beams * self.prbs
    }

    fn record_len(&self) -> u64 {
        8 + 4 * self.samples() as u64
    }
}

/// Quantizes a reported (mask-true) value. A reported value that would
/// round to `0 + 0j` is nudged one LSB away from zero on the imaginary
/// axis, since an all-zero sample means "not reported".
fn encode_reported(c: Complex64) -> Q15Sample {
    let mut s = q15_encode(c);
    if s.is_zero() {
        s.imag_q15 = if c.im < 0.0 { -1 } else { 1 };
    }
    s
}

/// Streams records into a raw Q15 file.
pub struct RawQ15Writer<W: Write> {
    inner: BufWriter<W>,
    header: RawQ15Header,
    written: usize,
    scale: f64,
}

impl<W: Write> RawQ15Writer<W> {
    /// Values are multiplied by `scale` before quantization.
    pub fn new(w: W, header: RawQ15Header, scale: f64) -> Result<Self> {
        let mut inner = BufWriter::new(w);
        inner.write_all(RAW_MAGIC)?;
        for v in [header.layers, header.beams, header.prbs, header.records] {
            inner.write_all(&(v as u32).to_le_bytes())?;
        }
        Ok(RawQ15Writer { inner, header, written: 0, scale })
    }

    pub fn write(&mut self, report: &RawReport) -> Result<()> {
        let dims = (self.header.layers, self.header.beams, self.header.prbs);
        if report.ctf.dim() != dims || report.mask.dim() != dims {
            return Err(Error::shape("raw report", format!("{dims:?}"), format!("{:?}", report.ctf.dim())));
        }
        if self.written == self.header.records {
            return Err(Error::OutOfRange(format!("more than {} records", self.header.records)));
        }
        self.inner.write_all(&report.timestamp.to_le_bytes())?;
        for (&c, &m) in report.ctf.iter().zip(report.mask.iter()) {
            let v = c * self.scale;
            let s = if m {
                if v.re.abs() > 1.0 || v.im.abs() > 1.0 {
                    return Err(Error::OutOfRange(format!(
                        "sample {v} exceeds the Q15 range at t = {}; lower the export scale",
                        report.timestamp
                    )));
                }
                encode_reported(v)
            } else {
                Q15Sample::default()
            };
            self.inner.write_all(&s.real_q15.to_le_bytes())?;
            self.inner.write_all(&s.imag_q15.to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.records {
            return Err(Error::shape("raw record count", self.header.records, self.written));
        }
        self.inner.flush()?;
        Ok(())
    }
}

/// Streams records out of a raw Q15 file; all-zero samples are unreported.
pub struct RawQ15Reader<R: Read> {
    inner: BufReader<R>,
    header: RawQ15Header,
    read: usize,
    buf: Vec<u8>,
}

impl RawQ15Reader<File> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let reader = Self::new(file)?;
        let expected = HEADER_LEN + reader.header.records as u64 * reader.header.record_len();
        if len != expected {
            let complete = (len.saturating_sub(HEADER_LEN)) / reader.header.record_len();
            return Err(Error::Format {
                offset: len,
                reason: format!(
                    "expected {} records ({expected} bytes), file holds {complete} complete records ({len} bytes)",
                    reader.header.records
                ),
            });
        }
        Ok(reader)
    }
}

impl<R: Read> RawQ15Reader<R> {
    pub fn new(r: R) -> Result<Self> {
        let mut inner = BufReader::new(r);
        let mut head = [0u8; HEADER_LEN as usize];
        let mut got = 0;
        while got < head.len() {
            match inner.read(&mut head[got..])? {
                0 => break,
                n => got += n,
            }
        }
        if got < 6 || &head[..6] != RAW_MAGIC {
            return Err(Error::Format { offset: 0, reason: "not an SRSQ15 file (bad or missing magic)".into() });
        }
        if got < head.len() {
            return Err(Error::Format { offset: got as u64, reason: "truncated SRSQ15 header".into() });
        }
        let u = |i: usize| u32::from_le_bytes(head[6 + 4 * i..10 + 4 * i].try_into().expect("4 bytes")) as usize;
        let header = RawQ15Header { layers: u(0), beams: u(1), prbs: u(2), records: u(3) };
        if header.samples() == 0 {
            return Err(Error::Format { offset: 6, reason: "zero layer, beam or PRB count".into() });
        }
        Ok(RawQ15Reader { inner, header, read: 0, buf: vec![0u8; header.record_len() as usize] })
    }

    pub fn header(&self) -> RawQ15Header {
        self.header
    }

    pub fn next_report(&mut self) -> Result<Option<RawReport>> {
        if self.read == self.header.records {
            return Ok(None);
        }
        let offset = HEADER_LEN + self.read as u64 * self.header.record_len();
        self.inner.read_exact(&mut self.buf).map_err(|_| Error::Format {
            offset,
            reason: format!("expected {} records, file ends in record {}", self.header.records, self.read),
        })?;
        let timestamp = f64::from_le_bytes(self.buf[..8].try_into().expect("8 bytes"));
        let h = self.header;
        let mut ctf = Array3::zeros((h.layers, h.beams, h.prbs));
        let mut mask = Array3::from_elem((h.layers, h.beams, h.prbs), false);
        for (i, (c, m)) in ctf.iter_mut().zip(mask.iter_mut()).enumerate() {
            let b = &self.buf[8 + 4 * i..12 + 4 * i];
            let s = Q15Sample {
                real_q15: i16::from_le_bytes([b[0], b[1]]),
                imag_q15: i16::from_le_bytes([b[2], b[3]]),
            };
            *c = q15_decode(s);
            *m = !s.is_zero();
        }
        self.read += 1;
        Ok(Some(RawReport { timestamp, ctf, mask }))
    }
}

/// Power-of-two scale that keeps every simulated sample inside the Q15
/// range, from a geometric bound on the channel magnitude plus an 8-sigma
/// noise margin.
pub fn export_scale(scene: &SceneConfig, generator: &SnapshotGenerator) -> Result<f64> {
    let beam_gain = (scene.array_geometry.rows * scene.array_geometry.cols) as f64;
    let mut bound: f64 = 0.0;
    for k in 0..generator.len() {
        let paths = synthesize_paths(scene, generator.ue_position(k))?;
        let sum: f64 = paths
            .paths
            .iter()
            .map(|p| p.gains.iter().map(|g| g.norm()).fold(0.0, f64::max))
            .sum();
        bound = bound.max(sum * beam_gain);
    }
    bound += 8.0 * (scene.noise_variance / 2.0).sqrt();
    if !(bound > 0.0) {
        return Err(Error::ZeroEnergy("scene has no signal to export"));
    }
    // headroom for the round-to-nearest step
    Ok(2f64.powi(-((bound / (1.0 - Q15_STEP)).log2().ceil() as i32)))
}
