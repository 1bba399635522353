//! Binary cache of encoded examples.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "MCTRDATA"
//! version u8       1
//! rows    u64
//! n_cat   u32
//! n_num   u32
//! rows × { label u8, n_cat × u32 index, n_num × f64 value }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::schema::Example;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MCTRDATA";
pub const CACHE_VERSION: u8 = 1;

pub fn write_cache(path: &Path, examples: &[Example]) -> Result<()> {
    let (n_cat, n_num) = examples.first().map_or((0, 0), |e| (e.cat.len(), e.num.len()));
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[CACHE_VERSION])?;
    w.write_all(&(examples.len() as u64).to_le_bytes())?;
    w.write_all(&(n_cat as u32).to_le_bytes())?;
    w.write_all(&(n_num as u32).to_le_bytes())?;
    for e in examples {
        if e.cat.len() != n_cat || e.num.len() != n_num {
            return Err(Error::Data("examples disagree on field counts".into()));
        }
        w.write_all(&[e.label])?;
        for i in &e.cat {
            w.write_all(&i.to_le_bytes())?;
        }
        for v in &e.num {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Data(format!("truncated example cache: {e}")))?;
    Ok(buf)
}

pub fn read_cache(path: &Path) -> Result<Vec<Example>> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_array::<8>(&mut r)? != MAGIC {
        return Err(Error::Data(format!("{} is not an example cache", path.display())));
    }
    let [version] = read_array::<1>(&mut r)?;
    if version != CACHE_VERSION {
        return Err(Error::Data(format!("unsupported cache version {version}")));
    }
    let rows = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let n_cat = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let n_num = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let [label] = read_array::<1>(&mut r)?;
        let cat = (0..n_cat)
            .map(|_| read_array(&mut r).map(u32::from_le_bytes))
            .collect::<Result<_>>()?;
        let num = (0..n_num)
            .map(|_| read_array(&mut r).map(f64::from_le_bytes))
            .collect::<Result<_>>()?;
        out.push(Example { label, cat, num });
    }
    Ok(out)
}
