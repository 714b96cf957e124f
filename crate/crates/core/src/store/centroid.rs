use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::LayerMatrix;

use super::codec::{self, Reader, Writer};

pub const CENTROID_MAGIC: &[u8; 8] = b"CLUECENT";

/// Success and failure reference matrices plus their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidPair {
    pub v_succ: LayerMatrix,
    pub v_fail: LayerMatrix,
    pub n_succ: u64,
    pub n_fail: u64,
    pub model_tag: String,
    pub source_description: String,
}

impl CentroidPair {
    pub fn validate(&self) -> Result<()> {
        if self.n_succ == 0 || self.n_fail == 0 {
            return Err(Error::InvalidCentroids(format!(
                "class counts must be positive (n_succ={}, n_fail={})",
                self.n_succ, self.n_fail
            )));
        }
        self.v_succ.check_same_shape(&self.v_fail)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.v_succ.shape()
    }
}

// Layout: magic, version, u32 metadata length, metadata (model_tag,
// source_description), u64 n_succ, u64 n_fail, u32 L, u32 D, u8 dtype,
// v_succ, v_fail.
pub fn encode_centroids(c: &CentroidPair) -> Result<Vec<u8>> {
    c.validate()?;
    let mut meta = Vec::new();
    codec::put_str(&mut meta, &c.model_tag)?;
    codec::put_str(&mut meta, &c.source_description)?;

    let mut w = Writer::new(CENTROID_MAGIC);
    w.u32(u32::try_from(meta.len()).map_err(|_| Error::Metadata("metadata too long".into()))?);
    w.bytes(&meta);
    w.u64(c.n_succ);
    w.u64(c.n_fail);
    codec::put_shape(&mut w, &c.v_succ)?;
    codec::put_matrix(&mut w, &c.v_succ);
    codec::put_matrix(&mut w, &c.v_fail);
    Ok(w.into_inner())
}

pub fn decode_centroids(bytes: &[u8]) -> Result<CentroidPair> {
    let mut r = Reader::new(bytes);
    r.magic(CENTROID_MAGIC)?;
    let meta_len = r.u32("metadata length")? as usize;
    let mut meta = r.sub(meta_len, "metadata")?;
    let model_tag = meta.string("model_tag")?;
    let source_description = meta.string("source_description")?;
    meta.finish()
        .map_err(|_| Error::Metadata("metadata block has extra bytes".into()))?;
    let n_succ = r.u64("counts")?;
    let n_fail = r.u64("counts")?;
    let (layers, dim) = r.shape()?;
    let v_succ = r.matrix(layers, dim)?;
    let v_fail = r.matrix(layers, dim)?;
    r.finish()?;
    let pair = CentroidPair {
        v_succ,
        v_fail,
        n_succ,
        n_fail,
        model_tag,
        source_description,
    };
    pair.validate()?;
    Ok(pair)
}

pub fn write_centroids(c: &CentroidPair, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_centroids(c)?;
    codec::write_atomic(path.as_ref(), &bytes)
}

pub fn read_centroids(path: impl AsRef<Path>) -> Result<CentroidPair> {
    decode_centroids(&codec::read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> CentroidPair {
        CentroidPair {
            v_succ: LayerMatrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0]]).unwrap(),
            v_fail: LayerMatrix::from_rows(&[[-1.0f32, 0.5], [0.0, 1e-7]]).unwrap(),
            n_succ: 10,
            n_fail: 7,
            model_tag: "m".into(),
            source_description: "unit".into(),
        }
    }

    #[test]
    fn round_trip() {
        let c = pair();
        assert_eq!(decode_centroids(&encode_centroids(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn zero_count_rejected() {
        let mut c = pair();
        c.n_succ = 0;
        assert!(matches!(encode_centroids(&c), Err(Error::InvalidCentroids(_))));
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut c = pair();
        c.v_fail = LayerMatrix::zeros(1, 2).unwrap();
        assert!(matches!(encode_centroids(&c), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_count_rejected_on_read() {
        let mut bytes = encode_centroids(&pair()).unwrap();
        // metadata: 4 + (4 + 1) + (4 + 4) = 17 bytes after the 10-byte preamble
        let counts = 10 + 4 + 13;
        bytes[counts..counts + 8].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(decode_centroids(&bytes), Err(Error::InvalidCentroids(_))));
    }

    #[test]
    fn record_magic_is_not_a_centroid() {
        let mut bytes = encode_centroids(&pair()).unwrap();
        bytes[..8].copy_from_slice(b"CLUETRAJ");
        assert!(matches!(decode_centroids(&bytes), Err(Error::BadMagic { .. })));
    }
}
