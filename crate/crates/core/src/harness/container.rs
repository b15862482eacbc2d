use std::io::{BufRead, BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use num_complex::{Complex32, Complex64};

use crate::srs::{PrsgCtf, Verdict};
use crate::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"BEAMDS01";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub num_snapshots: usize,
    pub layers: usize,
    pub beams: usize,
    pub prsgs: usize,
    /// Scalar applied to the raw PRSG values.
    pub normalization: f64,
    pub config_hash: [u8; 32],
}

/// Normalized per-PRSG uplink CTF as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredCtf {
    pub values: Array3<Complex32>,
    pub mask: Array3<bool>,
}

impl StoredCtf {
    pub fn to_prsg(&self, timestamp: f64) -> Result<PrsgCtf> {
        PrsgCtf::new(self.values.mapv(|c| Complex64::new(c.re as f64, c.im as f64)), self.mask.clone(), timestamp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub timestamp: f64,
    pub verdict: Verdict,
    /// Absent when read with [`read_features`].
    pub ctf: Option<StoredCtf>,
    /// `|G_t|`, `[beam, delay]`.
    pub cir: Array2<f32>,
    /// Downlink beam energies; zero for invalid snapshots.
    pub eta: Array1<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.records.iter().filter(|r| r.verdict == verdict).count()
    }
}

fn mask_bytes(n: usize) -> usize {
    n.div_ceil(8)
}

/// Writes the container. Every record must carry its CTF.
pub fn write_dataset<W: Write>(w: W, ds: &Dataset) -> Result<()> {
    let h = &ds.header;
    if h.num_snapshots != ds.records.len() {
        return Err(Error::shape("dataset records", h.num_snapshots, ds.records.len()));
    }
    let mut w = BufWriter::new(w);
    w.write_all(CONTAINER_MAGIC)?;
    for v in [h.version, h.num_snapshots as u32, h.layers as u32, h.beams as u32, h.prsgs as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&h.normalization.to_le_bytes())?;
    w.write_all(&h.config_hash)?;

    let dims = (h.layers, h.beams, h.prsgs);
    for (k, r) in ds.records.iter().enumerate() {
        let ctf = r.ctf.as_ref().ok_or(Error::Empty("record CTF (dataset was read without values)"))?;
        if ctf.values.dim() != dims || ctf.mask.dim() != dims {
            return Err(Error::shape("record CTF", format!("{dims:?}"), format!("{:?} at record {k}", ctf.values.dim())));
        }
        if r.cir.dim() != (h.beams, h.prsgs) || r.eta.len() != h.beams {
            return Err(Error::shape("record features", format!("{}x{}", h.beams, h.prsgs), format!("{:?} at record {k}", r.cir.dim())));
        }
        w.write_all(&r.timestamp.to_le_bytes())?;
        w.write_all(&[r.verdict.code()])?;
        for c in ctf.values.iter() {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        let mut bits = vec![0u8; mask_bytes(ctf.mask.len())];
        for (i, &m) in ctf.mask.iter().enumerate() {
            if m {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&bits)?;
        for v in r.cir.iter().chain(r.eta.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead + Seek> Cursor<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Format {
            offset: self.offset,
            reason: format!("truncated while reading {what}"),
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().expect("4 bytes")))
    }

    fn skip(&mut self, n: usize) -> Result<()> {
        self.inner.seek_relative(n as i64)?;
        self.offset += n as u64;
        Ok(())
    }
}

fn f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
}

fn read_impl<R: Read + Seek>(r: R, with_values: bool) -> Result<Dataset> {
    let mut c = Cursor { inner: BufReader::new(r), offset: 0 };
    if c.bytes(8, "magic")? != CONTAINER_MAGIC {
        return Err(Error::Format { offset: 0, reason: "not a dataset container (bad magic)".into() });
    }
    let version = c.u32("version")?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format { offset: 8, reason: format!("unsupported container version {version}") });
    }
    let num_snapshots = c.u32("snapshot count")? as usize;
    let layers = c.u32("layer count")? as usize;
    let beams = c.u32("beam count")? as usize;
    let prsgs = c.u32("prsg count")? as usize;
    let normalization = f64::from_le_bytes(c.bytes(8, "normalization")?.try_into().expect("8 bytes"));
    let config_hash: [u8; 32] = c.bytes(32, "config hash")?.try_into().expect("32 bytes");
    let header = DatasetHeader { version, num_snapshots, layers, beams, prsgs, normalization, config_hash };

    let n = layers * beams * prsgs;
    let mut records = Vec::with_capacity(num_snapshots);
    for k in 0..num_snapshots {
        let start = c.offset;
        let truncated = |_| Error::Format {
            offset: start,
            reason: format!("expected {num_snapshots} records, file ends in record {k}"),
        };
        let timestamp = f64::from_le_bytes(c.bytes(8, "timestamp").map_err(truncated)?.try_into().expect("8 bytes"));
        let code = c.bytes(1, "verdict").map_err(truncated)?[0];
        let verdict = Verdict::from_code(code).ok_or(Error::Format {
            offset: c.offset - 1,
            reason: format!("unknown verdict code {code}"),
        })?;
        let ctf = if with_values {
            let raw = c.bytes(8 * n, "values").map_err(truncated)?;
            let v: Vec<f32> = f32s(&raw).collect();
            let values = Array3::from_shape_fn((layers, beams, prsgs), |(l, b, f)| {
                let i = 2 * ((l * beams + b) * prsgs + f);
                Complex32::new(v[i], v[i + 1])
            });
            let bits = c.bytes(mask_bytes(n), "mask").map_err(truncated)?;
            let mask = Array3::from_shape_fn((layers, beams, prsgs), |(l, b, f)| {
                let i = (l * beams + b) * prsgs + f;
                bits[i / 8] >> (i % 8) & 1 == 1
            });
            Some(StoredCtf { values, mask })
        } else {
            c.skip(8 * n + mask_bytes(n))?;
            None
        };
        let feats = c.bytes(4 * (beams * prsgs + beams), "features").map_err(truncated)?;
        let f: Vec<f32> = f32s(&feats).collect();
        let cir = Array2::from_shape_vec((beams, prsgs), f[..beams * prsgs].to_vec()).expect("sized");
        let eta = Array1::from(f[beams * prsgs..].to_vec());
        records.push(DatasetRecord { timestamp, verdict, ctf, cir, eta });
    }
    let mut probe = [0u8; 1];
    if c.inner.read(&mut probe)? != 0 {
        return Err(Error::Format {
            offset: c.offset,
            reason: format!("trailing bytes after {num_snapshots} records"),
        });
    }
    Ok(Dataset { header, records })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_impl(std::fs::File::open(path)?, true)
}

/// Reads timestamps, verdicts, features and targets, skipping the CTFs.
pub fn read_features(path: &Path) -> Result<Dataset> {
    read_impl(std::fs::File::open(path)?, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Dataset {
        let records = (0..n)
            .map(|k| {
                let values = Array3::from_shape_fn((2, 3, 5), |(l, b, f)| {
                    Complex32::new((l + b + f + k) as f32 * 0.5, -(f as f32))
                });
                let mask = Array3::from_shape_fn((2, 3, 5), |(l, b, f)| (l + b * f + k) % 3 != 0);
                DatasetRecord {
                    timestamp: k as f64 * 0.02,
                    verdict: Verdict::from_code((k % 3) as u8).unwrap(),
                    ctf: Some(StoredCtf { values, mask }),
                    cir: Array2::from_shape_fn((3, 5), |(b, f)| (b * 5 + f) as f32),
                    eta: Array1::from(vec![1.0, 2.0, k as f32]),
                }
            })
            .collect();
        Dataset {
            header: DatasetHeader {
                version: CONTAINER_VERSION,
                num_snapshots: n,
                layers: 2,
                beams: 3,
                prsgs: 5,
                normalization: 123.25,
                config_hash: [7; 32],
            },
            records,
        }
    }

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(&mut buf, ds).unwrap();
        buf
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let ds = sample(4);
        let a = bytes(&ds);
        let back = read_impl(std::io::Cursor::new(&a), true).unwrap();
        assert_eq!(back, ds);
        assert_eq!(bytes(&back), a);
    }

    #[test]
    fn features_only_read_skips_values() {
        let ds = sample(3);
        let f = read_impl(std::io::Cursor::new(bytes(&ds)), false).unwrap();
        assert_eq!(f.header, ds.header);
        for (a, b) in f.records.iter().zip(&ds.records) {
            assert!(a.ctf.is_none());
            assert_eq!((a.timestamp, a.verdict, &a.cir, &a.eta), (b.timestamp, b.verdict, &b.cir, &b.eta));
        }
    }

    #[test]
    fn truncation_names_the_record() {
        let mut buf = bytes(&sample(3));
        buf.truncate(buf.len() - 10);
        match read_impl(std::io::Cursor::new(buf), true) {
            Err(Error::Format { reason, .. }) => assert!(reason.contains("expected 3 records"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_trailing_bytes_are_rejected() {
        let mut buf = bytes(&sample(1));
        buf.push(0);
        assert!(matches!(read_impl(std::io::Cursor::new(&buf), true), Err(Error::Format { .. })));
        buf[0] = b'X';
        assert!(matches!(read_impl(std::io::Cursor::new(&buf), true), Err(Error::Format { offset: 0, .. })));
    }
}
