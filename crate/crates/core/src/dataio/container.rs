//! Versioned, checksummed binary container for label grids.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "ATGT"
//! version u32
//! crc32   u32      CRC-32 of everything after this field
//! payload:
//!   image_id       u32 length + UTF-8 bytes
//!   alpha          f64
//!   n_grids        u32
//!   grid manifest  n_grids x (size u32, r_a f64)
//!   per grid, row-major:
//!     classes      size^2 bytes (0 negative, 1 text, 2 ambiguous)
//!     scores       size^2 f64
//!     vertical     size^2 bytes (meaningful for text cells, else 0)
//!     regression   size^2 x 5 f64 (dx, dy, da, dr, dtheta;
//!                  zero-filled for non-text cells)
//! ```
//!
//! `load(save(x)) == x` bit-exactly.

use super::DataError;
use crate::anchor::{DeltaRegression, GridSpec};
use crate::target::{CellClass, CellLabel, LabelGrid};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"ATGT";
pub const CONTAINER_VERSION: u32 = 1;

/// A stored set of label grids plus the manifest fields.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFile {
    pub image_id: String,
    pub alpha: f64,
    pub grids: Vec<LabelGrid>,
}

fn write_payload(t: &TargetFile) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    buf.write_u32::<LittleEndian>(t.image_id.len() as u32)?;
    buf.extend_from_slice(t.image_id.as_bytes());
    buf.write_f64::<LittleEndian>(t.alpha)?;
    buf.write_u32::<LittleEndian>(t.grids.len() as u32)?;
    for g in &t.grids {
        buf.write_u32::<LittleEndian>(g.spec.size as u32)?;
        buf.write_f64::<LittleEndian>(g.spec.r_a)?;
    }
    for g in &t.grids {
        for c in &g.cells {
            buf.push(c.class as u8);
        }
        for c in &g.cells {
            buf.write_f64::<LittleEndian>(c.score)?;
        }
        for c in &g.cells {
            buf.push(c.vertical.unwrap_or(0));
        }
        for c in &g.cells {
            let reg = c.regression.unwrap_or_default();
            for v in reg.as_array() {
                buf.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    Ok(buf)
}

pub fn save_targets(t: &TargetFile, path: &Path) -> Result<(), DataError> {
    let payload = write_payload(t)?;
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&payload);
    let crc = hasher.finalize();
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(CONTAINER_VERSION)?;
    out.write_u32::<LittleEndian>(crc)?;
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.data.len() {
            return Err(DataError::CorruptFile("truncated payload".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(self.take(4)?.read_u32::<LittleEndian>().unwrap())
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(self.take(8)?.read_f64::<LittleEndian>().unwrap())
    }
}

pub fn load_targets(path: &Path) -> Result<TargetFile, DataError> {
    let mut data = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut data)?;
    if data.len() < 12 || &data[0..4] != MAGIC {
        return Err(DataError::CorruptFile("bad magic".into()));
    }
    let version = (&data[4..8]).read_u32::<LittleEndian>().unwrap();
    if version != CONTAINER_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            expected: CONTAINER_VERSION,
        });
    }
    let stored_crc = (&data[8..12]).read_u32::<LittleEndian>().unwrap();
    let payload = &data[12..];
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(payload);
    if hasher.finalize() != stored_crc {
        return Err(DataError::CorruptFile("checksum mismatch".into()));
    }

    let mut cur = Cursor {
        data: payload,
        pos: 0,
    };
    let id_len = cur.u32()? as usize;
    let image_id = String::from_utf8(cur.take(id_len)?.to_vec())
        .map_err(|_| DataError::CorruptFile("image id is not UTF-8".into()))?;
    let alpha = cur.f64()?;
    let n_grids = cur.u32()? as usize;
    let mut specs = Vec::with_capacity(n_grids);
    for _ in 0..n_grids {
        let size = cur.u32()? as usize;
        let r_a = cur.f64()?;
        if size == 0 || !(r_a > 0.0) {
            return Err(DataError::CorruptFile("invalid grid manifest".into()));
        }
        specs.push(GridSpec::new(size, r_a));
    }
    let mut grids = Vec::with_capacity(n_grids);
    for spec in specs {
        let n = spec.cells();
        let class_bytes = cur.take(n)?.to_vec();
        let mut scores = Vec::with_capacity(n);
        for _ in 0..n {
            scores.push(cur.f64()?);
        }
        let vertical_bytes = cur.take(n)?.to_vec();
        let mut cells = Vec::with_capacity(n);
        for k in 0..n {
            let class = CellClass::from_u8(class_bytes[k])
                .ok_or_else(|| DataError::CorruptFile(format!("class byte {}", class_bytes[k])))?;
            cells.push(CellLabel {
                class,
                score: scores[k],
                regression: None,
                vertical: None,
            });
        }
        for cell in cells.iter_mut() {
            let mut reg = [0.0f64; 5];
            for v in reg.iter_mut() {
                *v = cur.f64()?;
            }
            if cell.class == CellClass::Text {
                cell.regression = Some(DeltaRegression::from_array(reg));
            }
        }
        for (k, cell) in cells.iter_mut().enumerate() {
            if cell.class == CellClass::Text {
                let v = vertical_bytes[k];
                if v > 1 {
                    return Err(DataError::CorruptFile(format!("vertical byte {v}")));
                }
                cell.vertical = Some(v);
            }
        }
        grids.push(LabelGrid { spec, cells });
    }
    if cur.pos != payload.len() {
        return Err(DataError::CorruptFile("trailing bytes".into()));
    }
    Ok(TargetFile {
        image_id,
        alpha,
        grids,
    })
}
