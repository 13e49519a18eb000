//! `SLT1` streaming layout, all integers and floats little-endian.
//!
//! ```text
//! header       magic "SLT1", version, tau_s, subtree_count, node_count, root_sid   (6 × u32)
//! descriptors  per subtree: size u16, parent_node u32, reserved u16               (8 B each)
//! records      per subtree: tau_s records of 40 B, unused slots zero-filled
//! payloads     per node, by nid: mean, scale, rot (w,x,y,z), opacity, color       (14 × f32)
//! ```
//!
//! A record is `nid u32, aabb 6×f32, remaining u16, child_sid_first u32,
//! child_sid_count u16, flags u16, pad u16`. Flags: bit 0 boundary, bit 1
//! leaf. Absent ids are `u32::MAX`. The descriptor table sits ahead of the
//! records so that every subtree starts at a fixed stride from the record
//! base. Boxes are already `f32`-exact; Gaussian payloads are stored at `f32`
//! precision.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use super::{SlTree, Subtree, SubtreeId, SubtreeRecord};
use crate::error::{Error, Result};
use crate::scene::{Aabb, Gaussian, NodeId};

pub const MAGIC: &[u8; 4] = b"SLT1";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 24;
pub const SUBTREE_DESCRIPTOR_BYTES: usize = 8;
pub const NODE_RECORD_BYTES: usize = 40;
pub const GAUSSIAN_RECORD_BYTES: usize = 56;

const NONE_ID: u32 = u32::MAX;
const FLAG_BOUNDARY: u16 = 1;
const FLAG_LEAF: u16 = 2;

/// Byte offset of subtree `sid`'s first record.
pub fn subtree_offset(tau_s: usize, subtree_count: usize, sid: SubtreeId) -> usize {
    HEADER_BYTES + subtree_count * SUBTREE_DESCRIPTOR_BYTES + sid.idx() * tau_s * NODE_RECORD_BYTES
}

fn payload_offset(tau_s: usize, subtree_count: usize) -> usize {
    subtree_offset(tau_s, subtree_count, SubtreeId(subtree_count as u32))
}

pub fn serialize(st: &SlTree) -> Vec<u8> {
    let tau = st.tau_s();
    let count = st.len();
    let total = payload_offset(tau, count) + st.node_count() * GAUSSIAN_RECORD_BYTES;
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        tau as u32,
        count as u32,
        st.node_count() as u32,
        st.root_sid().0,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in st.subtrees() {
        out.extend_from_slice(&(s.len() as u16).to_le_bytes());
        out.extend_from_slice(&s.parent_node.map_or(NONE_ID, |p| p.0).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    for s in st.subtrees() {
        for r in &s.records {
            out.extend_from_slice(&r.nid.0.to_le_bytes());
            for v in r.aabb.min.iter().chain(r.aabb.max.iter()) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            out.extend_from_slice(&r.remaining.to_le_bytes());
            out.extend_from_slice(&r.child_sid_first.map_or(NONE_ID, |s| s.0).to_le_bytes());
            out.extend_from_slice(&r.child_sid_count.to_le_bytes());
            let flags = if r.is_boundary { FLAG_BOUNDARY } else { 0 } | if r.is_leaf { FLAG_LEAF } else { 0 };
            out.extend_from_slice(&flags.to_le_bytes());
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out.resize(out.len() + (tau - s.len()) * NODE_RECORD_BYTES, 0);
    }
    for g in st.gaussians() {
        let q = &g.rotation;
        let vals = g
            .mean
            .iter()
            .chain(g.scale.iter())
            .copied()
            .chain([q.w, q.i, q.j, q.k, g.opacity])
            .chain(g.color.iter().copied());
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), total);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn at(buf: &'a [u8], pos: usize) -> Self {
        Self { buf, pos }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or(Error::Truncated {
            offset: self.pos,
            needed: N,
            len: self.buf.len(),
        })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice has length N"))
    }

    fn u16(&mut self) -> Result<u16> {
        self.take().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f64> {
        self.take().map(|b| f32::from_le_bytes(b) as f64)
    }

    fn vec3(&mut self) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.f32()?, self.f32()?, self.f32()?))
    }
}

fn opt_id(v: u32) -> Option<u32> {
    (v != NONE_ID).then_some(v)
}

pub fn deserialize(bytes: &[u8]) -> Result<SlTree> {
    let mut r = Reader::at(bytes, 0);
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Format("bad magic, expected \"SLT1\"".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let tau = r.u32()? as usize;
    let count = r.u32()? as usize;
    let node_count = r.u32()? as usize;
    let root_sid = SubtreeId(r.u32()?);
    if tau == 0 || tau > u16::MAX as usize {
        return Err(Error::Format(format!("tau_s {tau} out of range")));
    }
    if count == 0 || node_count == 0 {
        return Err(Error::Format("empty SLTree".into()));
    }
    let expected = (payload_offset(tau, count) as u128) + node_count as u128 * GAUSSIAN_RECORD_BYTES as u128;
    if (bytes.len() as u128) < expected {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: (expected - bytes.len() as u128) as usize,
            len: bytes.len(),
        });
    }
    if bytes.len() as u128 > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after the payload section",
            bytes.len() as u128 - expected
        )));
    }

    let mut descriptors = Vec::with_capacity(count);
    for _ in 0..count {
        let size = r.u16()? as usize;
        let parent = opt_id(r.u32()?).map(NodeId);
        r.u16()?;
        descriptors.push((size, parent));
    }

    let mut subtrees = Vec::with_capacity(count);
    for (k, &(size, parent_node)) in descriptors.iter().enumerate() {
        let sid = SubtreeId(k as u32);
        let base = subtree_offset(tau, count, sid);
        if size == 0 || size > tau {
            return Err(Error::subtree(sid, format!("size {size} outside [1, {tau}]")));
        }
        let mut r = Reader::at(bytes, base);
        let mut records = Vec::with_capacity(size);
        for _ in 0..size {
            let nid = NodeId(r.u32()?);
            let aabb = Aabb {
                min: r.vec3()?,
                max: r.vec3()?,
            };
            let remaining = r.u16()?;
            let child_sid_first = opt_id(r.u32()?).map(SubtreeId);
            let child_sid_count = r.u16()?;
            let flags = r.u16()?;
            r.u16()?;
            if flags & !(FLAG_BOUNDARY | FLAG_LEAF) != 0 {
                return Err(Error::subtree(sid, format!("unknown flag bits {flags:#x}")));
            }
            records.push(SubtreeRecord {
                nid,
                aabb,
                remaining,
                child_sid_first,
                child_sid_count,
                is_boundary: flags & FLAG_BOUNDARY != 0,
                is_leaf: flags & FLAG_LEAF != 0,
            });
        }
        let pad = &bytes[base + size * NODE_RECORD_BYTES..base + tau * NODE_RECORD_BYTES];
        if pad.iter().any(|&b| b != 0) {
            return Err(Error::subtree(sid, "padding records are not zero"));
        }
        subtrees.push(Subtree {
            sid,
            records,
            parent_node,
        });
    }

    let mut r = Reader::at(bytes, payload_offset(tau, count));
    let mut gaussians = Vec::with_capacity(node_count);
    for i in 0..node_count {
        let mean = r.vec3()?;
        let scale = r.vec3()?;
        let rotation = Quaternion::new(r.f32()?, r.f32()?, r.f32()?, r.f32()?);
        let opacity = r.f32()?;
        let color = r.vec3()?;
        let g = Gaussian {
            mean,
            scale,
            rotation,
            opacity,
            color,
        };
        g.check().map_err(|m| Error::node(NodeId(i as u32), m))?;
        gaussians.push(g);
    }
    SlTree::from_raw(tau, root_sid, subtrees, gaussians)
}

pub fn write_sltree(path: impl AsRef<Path>, st: &SlTree) -> Result<()> {
    fs::write(path, serialize(st))?;
    Ok(())
}

pub fn read_sltree(path: impl AsRef<Path>) -> Result<SlTree> {
    deserialize(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain, figure_tree};
    use crate::scene::{gen_synthetic_tree, GenParams};
    use crate::sltree::build_sltree;

    #[test]
    fn round_trip_is_byte_identical() {
        let t = gen_synthetic_tree(&GenParams::new(4, 800)).unwrap();
        let st = build_sltree(&t, 8).unwrap();
        let bytes = serialize(&st);
        let back = deserialize(&bytes).unwrap();
        assert_eq!(back, st);
        assert_eq!(serialize(&back), bytes);
    }

    #[test]
    fn small_subtree_is_zero_padded() {
        let st = build_sltree(&chain(2), 32).unwrap();
        let bytes = serialize(&st);
        let base = subtree_offset(32, 1, SubtreeId(0));
        assert_eq!(bytes.len(), base + 32 * 40 + 2 * 56);
        let pad = &bytes[base + 2 * 40..base + 32 * 40];
        assert_eq!(pad.len(), 30 * 40);
        assert!(pad.iter().all(|&b| b == 0));
    }

    #[test]
    fn subtree_offset_uses_fixed_stride() {
        let count = 9;
        let record_base = HEADER_BYTES + count * SUBTREE_DESCRIPTOR_BYTES;
        assert_eq!(subtree_offset(32, count, SubtreeId(5)), record_base + 5 * 32 * 40);
        let st = build_sltree(&figure_tree(), 4).unwrap();
        let bytes = serialize(&st);
        for s in st.subtrees() {
            let off = st.byte_range(s.sid).start;
            let nid = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            assert_eq!(nid, s.records[0].nid.0);
        }
    }

    #[test]
    fn header_fields() {
        let st = build_sltree(&figure_tree(), 4).unwrap();
        let bytes = serialize(&st);
        assert_eq!(&bytes[..4], b"SLT1");
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        assert_eq!([word(1), word(2), word(3), word(4), word(5)], [1, 4, 4, 11, 0]);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let st = build_sltree(&figure_tree(), 4).unwrap();
        let bytes = serialize(&st);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(deserialize(&bad), Err(Error::Format(_))));

        for cut in [0, 3, 10, HEADER_BYTES + 4, bytes.len() - 1] {
            assert!(
                matches!(deserialize(&bytes[..cut]), Err(Error::Truncated { .. })),
                "cut at {cut}"
            );
        }

        let mut long = bytes;
        long.push(0);
        assert!(matches!(deserialize(&long), Err(Error::Format(_))));
    }

    #[test]
    fn corrupted_record_fails_validation() {
        let st = build_sltree(&figure_tree(), 4).unwrap();
        let mut bytes = serialize(&st);
        let off = st.byte_range(SubtreeId(0)).start;
        // remaining of the root record
        bytes[off + 28] = 200;
        assert!(deserialize(&bytes).is_err());
    }
}
