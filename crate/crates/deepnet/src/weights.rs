//! Binary weight blob: for each parameter in store order, a little-endian `u32`
//! rank, `u64` dimensions, then `f64` values.

use crate::error::{NetError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(store.scalar_count() * 8 + store.len() * 16);
    for e in store.entries() {
        let shape = e.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| NetError::BadBlob(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length is N"))
    }
}

/// Overwrites every value in `store` from `bytes`; shapes must match exactly.
pub fn decode_into(store: &mut ParamStore, bytes: &[u8]) -> Result<()> {
    let mut r = Reader { bytes, pos: 0 };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let rank = u32::from_le_bytes(r.take::<4>()?) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(r.take::<8>()?) as usize);
        }
        if shape != store.get(id).shape() {
            return Err(NetError::BadBlob(format!(
                "parameter {} has shape {:?}, blob holds {shape:?}",
                store.entry(id).name,
                store.get(id).shape()
            )));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take::<8>()?));
        }
        *store.get_mut(id) = Tensor::new(shape, data)?;
    }
    if r.pos != bytes.len() {
        return Err(NetError::BadBlob(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(())
}
