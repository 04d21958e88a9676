//! Binary snapshot files.
//!
//! Little-endian layout: magic `CHSN`, `u32` version, `u32` dimension, one
//! `u32` cell count per axis, `f64` time, then `u` and `v` as `f64`
//! row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::State;

pub const MAGIC: [u8; 4] = *b"CHSN";
pub const VERSION: u32 = 1;

/// Decoded snapshot; `counts` has one entry per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub counts: Vec<usize>,
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Snapshot {
    /// Attaches the data to `g`, which must have the same cell counts.
    pub fn into_state(self, g: &Grid) -> Result<State> {
        let expected: Vec<usize> = (0..g.dim()).map(|a| g.cells(a)).collect();
        if expected != self.counts {
            return Err(Error::InvalidInitialData(format!(
                "snapshot has cell counts {:?}, grid has {:?}",
                self.counts, expected
            )));
        }
        Ok(State::new(Field::new(g, self.u)?, Field::new(g, self.v)?, self.t))
    }
}

pub fn encode(state: &State, g: &Grid) -> Vec<u8> {
    let n = g.total_cells();
    let mut out = Vec::with_capacity(16 + 4 * g.dim() + 8 + 16 * n);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for a in 0..g.dim() {
        out.extend_from_slice(&(g.cells(a) as u32).to_le_bytes());
    }
    out.extend_from_slice(&state.t.to_le_bytes());
    for x in state.u.values().iter().chain(state.v.values()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Snapshot {
                offset: self.bytes.len() as u64,
                message: format!("truncated while reading {what}: need {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Snapshot {
            offset: 0,
            message: format!("bad magic {magic:?}, expected \"CHSN\""),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Snapshot {
            offset: 4,
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let dim = r.u32("dimension")?;
    if !(1..=2).contains(&dim) {
        return Err(Error::Snapshot {
            offset: 8,
            message: format!("dimension {dim} is not 1 or 2"),
        });
    }
    let mut counts = Vec::new();
    for a in 0..dim as usize {
        let at = r.pos as u64;
        let n = r.u32("cell count")? as usize;
        if n < crate::grid::MIN_CELLS {
            return Err(Error::Snapshot {
                offset: at,
                message: format!("axis {a} has {n} cells"),
            });
        }
        counts.push(n);
    }
    let at = r.pos as u64;
    let t = r.f64("time")?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Snapshot {
            offset: at,
            message: format!("time {t} is not finite and nonnegative"),
        });
    }
    let n: usize = counts.iter().product();
    let expected_end = r.pos + 16 * n;
    if bytes.len() != expected_end {
        let offset = bytes.len().min(expected_end) as u64;
        return Err(Error::Snapshot {
            offset,
            message: format!("file has {} bytes, header implies {expected_end}", bytes.len()),
        });
    }
    let mut read_field = |name: &str| -> Result<Vec<f64>> {
        (0..n)
            .map(|_| {
                let at = r.pos as u64;
                let x = r.f64(name)?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Snapshot {
                        offset: at,
                        message: format!("non-finite value in {name}"),
                    })
                }
            })
            .collect()
    };
    let u = read_field("u")?;
    let v = read_field("v")?;
    Ok(Snapshot { counts, t, u, v })
}

pub fn write_snapshot(state: &State, g: &Grid, path: &Path) -> Result<()> {
    fs::write(path, encode(state, g))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use proptest::prelude::*;

    fn sample() -> (Grid, State) {
        let g = build_grid(2, &[(0.0, 1.0), (0.0, 2.0)], &[4, 5]).unwrap();
        let u = Field::from_fn(&g, |x| x[0] * x[1] + 0.1);
        let v = Field::from_fn(&g, |x| 1.0 / (1.0 + x[0]));
        (g, State::new(u, v, 0.375))
    }

    #[test]
    fn round_trip_through_file() {
        let (g, s) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.chsn");
        write_snapshot(&s, &g, &path).unwrap();
        let back = read_snapshot(&path).unwrap().into_state(&g).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let (g, s) = sample();
        let bytes = encode(&s, &g);
        for cut in [0, 3, 10, 20, bytes.len() - 1] {
            let err = decode(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Snapshot { .. }), "{err}");
        }
    }

    #[test]
    fn wrong_magic_names_expected() {
        let (g, s) = sample();
        let mut bytes = encode(&s, &g);
        bytes[0] = b'X';
        let err = decode(&bytes).unwrap_err().to_string();
        assert!(err.contains("CHSN") && err.contains("offset 0"), "{err}");
    }

    #[test]
    fn bad_version_and_nan_report_offsets() {
        let (g, s) = sample();
        let mut bytes = encode(&s, &g);
        bytes[4] = 9;
        assert!(decode(&bytes).unwrap_err().to_string().contains("offset 4"));

        let mut bytes = encode(&s, &g);
        let first_v = 4 + 4 + 4 + 8 + 8 + 8 * 20;
        bytes[first_v..first_v + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        let msg = decode(&bytes).unwrap_err().to_string();
        assert!(msg.contains(&format!("offset {first_v}")), "{msg}");
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let (g, s) = sample();
        let other = build_grid(2, &[(0.0, 1.0), (0.0, 2.0)], &[5, 4]).unwrap();
        assert!(decode(&encode(&s, &g)).unwrap().into_state(&other).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            vals in prop::collection::vec((-1e300f64..1e300, 1e-300f64..1e300), 6),
            t in 0.0f64..1e6,
        ) {
            let g = build_grid(1, &[(0.0, 1.0)], &[6]).unwrap();
            let (u, v): (Vec<_>, Vec<_>) = vals.into_iter().unzip();
            let s = State::new(Field::new(&g, u).unwrap(), Field::new(&g, v).unwrap(), t);
            let bytes = encode(&s, &g);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(encode(&back.into_state(&g).unwrap(), &g), bytes);
        }
    }
}
