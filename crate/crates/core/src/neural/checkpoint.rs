//! Binary checkpoint: `PRAGCKPT`, a `u32` version, a length-prefixed JSON
//! header, then named little-endian `f64` arrays in store order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;

use super::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PRAGCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: Value,
    pub arrays: Vec<(String, usize, usize, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_store(header: Value, store: &ParamStore) -> Checkpoint {
        let arrays = store
            .entries()
            .iter()
            .map(|(n, p)| (n.clone(), p.rows, p.cols, store.get(*p).to_vec()))
            .collect();
        Checkpoint { header, arrays }
    }

    /// Copy arrays into a store built with the same layout.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.arrays.len() != store.entries().len() {
            return Err(Error::Checkpoint(format!(
                "{} arrays in file, model has {}",
                self.arrays.len(),
                store.entries().len()
            )));
        }
        for ((name, rows, cols, data), (sn, p)) in self.arrays.iter().zip(store.entries().to_vec()) {
            if *name != sn || *rows != p.rows || *cols != p.cols {
                return Err(Error::Checkpoint(format!(
                    "array {name} ({rows}x{cols}) does not match {sn} ({}x{})",
                    p.rows, p.cols
                )));
            }
            store.data[p.range()].copy_from_slice(data);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, rows, cols, data) in &self.arrays {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(*rows as u32).to_le_bytes())?;
            w.write_all(&(*cols as u32).to_le_bytes())?;
            for x in data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Checkpoint> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: Value = serde_json::from_slice(&header)?;
        let count = read_u32(r)? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let mut name = vec![0u8; read_u32(r)? as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
            let rows = read_u32(r)? as usize;
            let cols = read_u32(r)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            arrays.push((name, rows, cols, data));
        }
        Ok(Checkpoint { header, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn store() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = ParamStore::new();
        s.add_glorot("a", 3, 4, &mut rng);
        s.add("b", 3, 1);
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = store();
        let c = Checkpoint::from_store(json!({"kind": "listener", "hidden": 4}), &s);
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, c);
        let mut t = store();
        t.data.iter_mut().for_each(|x| *x = 0.0);
        back.load_into(&mut t).unwrap();
        assert_eq!(t.data, s.data);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_garbage_and_layout_mismatch() {
        assert!(Checkpoint::read_from(&mut &b"NOTACKPTxxxxxxxxxxxx"[..]).is_err());
        let c = Checkpoint::from_store(json!({}), &store());
        let mut other = ParamStore::new();
        other.add("a", 4, 3);
        other.add("b", 3, 1);
        assert!(matches!(c.load_into(&mut other), Err(Error::Checkpoint(_))));
    }
}
