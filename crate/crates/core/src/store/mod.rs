//! On-disk trajectory and centroid formats, plus the manifest index.
//!
//! Both binary formats are little-endian and start with an 8-byte magic and
//! a `u16` version. Matrices follow a `u32 L, u32 D, u8 dtype` header and are
//! stored row-major as `f32`.

mod centroid;
mod codec;
mod manifest;
mod record;

pub use centroid::{
    decode_centroids, encode_centroids, read_centroids, write_centroids, CentroidPair,
    CENTROID_MAGIC,
};
pub use codec::{DTYPE_F32, FORMAT_VERSION};
pub use manifest::{
    format_manifest, group_by_problem, parse_manifest, scan_manifest, write_manifest, LabelCounts,
    Manifest, ManifestEntry, MANIFEST_FILE, RECORD_EXTENSION,
};
pub use record::{
    decode_record, encode_record, read_record, read_record_header, write_record, Label,
    RecordHeader, TrajectoryRecord, RECORD_MAGIC,
};

pub(crate) use codec::write_atomic;
