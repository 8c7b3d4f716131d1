//! Flat parameter layout shared by the network, the basis streams and the
//! packet format.

use std::ops::Range;

use crate::error::{PrancError, Result};

/// What a contiguous run of the flat parameter vector holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    DenseWeight,
    DenseBias,
    ConvWeight,
    ConvBias,
    BnGamma,
    BnBeta,
}

impl SegmentKind {
    pub fn tag(self) -> u8 {
        match self {
            SegmentKind::DenseWeight => 0,
            SegmentKind::DenseBias => 1,
            SegmentKind::ConvWeight => 2,
            SegmentKind::ConvBias => 3,
            SegmentKind::BnGamma => 4,
            SegmentKind::BnBeta => 5,
        }
    }

    /// Number of shape dimensions a segment of this kind carries.
    pub fn rank(self) -> usize {
        match self {
            SegmentKind::DenseWeight => 2,
            SegmentKind::ConvWeight => 4,
            _ => 1,
        }
    }

    pub fn is_weight(self) -> bool {
        matches!(self, SegmentKind::DenseWeight | SegmentKind::ConvWeight)
    }
}

/// Half-width `b` of the Uniform(-b, b) distribution basis entries are drawn
/// from: Kaiming-uniform `sqrt(6 / fan_in)` for weights, zero for biases and
/// batchnorm affine parameters (those sit at their prior).
pub fn init_bound_for(kind: SegmentKind, shape: &[usize]) -> Result<f32> {
    if shape.len() != kind.rank() {
        return Err(PrancError::InvalidSchema(format!(
            "{kind:?} expects {} dims, got {shape:?}",
            kind.rank()
        )));
    }
    if !kind.is_weight() {
        return Ok(0.0);
    }
    let fan_in: usize = shape[1..].iter().product();
    if fan_in == 0 {
        return Err(PrancError::InvalidSchema(format!(
            "zero fan-in for {kind:?} {shape:?}"
        )));
    }
    Ok((6.0 / fan_in as f64).sqrt() as f32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub layer_id: u32,
    pub kind: SegmentKind,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    pub init_bound: f32,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }

    /// Constant added to every entry of this segment on reconstruction.
    pub fn prior(&self) -> f32 {
        if self.kind == SegmentKind::BnGamma {
            1.0
        } else {
            0.0
        }
    }
}

/// Running-statistic slot of one batchnorm layer (mean and variance, not
/// part of the trained vector).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BnStatSlot {
    pub layer_id: u32,
    pub channels: usize,
}

impl BnStatSlot {
    pub fn stat_len(&self) -> usize {
        2 * self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSchema {
    segments: Vec<Segment>,
    bn_stats: Vec<BnStatSlot>,
    d: usize,
    fingerprint: u64,
}

impl ParameterSchema {
    /// Lays segments out back to back in the given order.
    pub fn new(
        segments: impl IntoIterator<Item = (u32, SegmentKind, Vec<usize>)>,
        bn_stats: Vec<BnStatSlot>,
    ) -> Result<Self> {
        let mut laid = Vec::new();
        let mut offset = 0usize;
        for (layer_id, kind, shape) in segments {
            let init_bound = init_bound_for(kind, &shape)?;
            let len: usize = shape.iter().product();
            if len == 0 {
                return Err(PrancError::InvalidSchema(format!(
                    "empty segment {kind:?} {shape:?} in layer {layer_id}"
                )));
            }
            laid.push(Segment {
                layer_id,
                kind,
                shape,
                offset,
                len,
                init_bound,
            });
            offset += len;
        }
        if laid.is_empty() {
            return Err(PrancError::InvalidSchema("no parameter segments".into()));
        }
        let mut schema = Self {
            segments: laid,
            bn_stats,
            d: offset,
            fingerprint: 0,
        };
        schema.fingerprint = fnv1a64(&schema.canonical_bytes());
        Ok(schema)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn bn_stats(&self) -> &[BnStatSlot] {
        &self.bn_stats
    }

    /// Total running-statistic floats (means plus variances).
    pub fn bn_total(&self) -> usize {
        self.bn_stats.iter().map(BnStatSlot::stat_len).sum()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn max_bound(&self) -> f32 {
        self.segments
            .iter()
            .map(|s| s.init_bound)
            .fold(0.0, f32::max)
    }

    /// Index of the segment holding flat index `i`.
    pub fn segment_index_at(&self, i: usize) -> usize {
        debug_assert!(i < self.d);
        self.segments.partition_point(|s| s.offset + s.len <= i)
    }

    /// The constant prior vector theta0 (ones at batchnorm gamma slots).
    pub fn prior_vector(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.d];
        for seg in &self.segments {
            out[seg.range()].fill(seg.prior());
        }
        out
    }

    /// Writes theta0 entries for `range` into `out`.
    pub fn prior_into(&self, range: Range<usize>, out: &mut [f32]) {
        debug_assert_eq!(out.len(), range.len());
        if range.is_empty() {
            return;
        }
        let first = self.segment_index_at(range.start);
        for seg in &self.segments[first..] {
            if seg.offset >= range.end {
                break;
            }
            let lo = seg.offset.max(range.start);
            let hi = (seg.offset + seg.len).min(range.end);
            out[lo - range.start..hi - range.start].fill(seg.prior());
        }
    }

    /// Little-endian canonical encoding hashed into the fingerprint.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.segments.len() as u32).to_le_bytes());
        for seg in &self.segments {
            out.push(seg.kind.tag());
            for &dim in &seg.shape {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            out.extend_from_slice(&seg.init_bound.to_le_bytes());
        }
        out.extend_from_slice(&(self.bn_stats.len() as u32).to_le_bytes());
        for slot in &self.bn_stats {
            out.extend_from_slice(&slot.layer_id.to_le_bytes());
            out.extend_from_slice(&(slot.stat_len() as u32).to_le_bytes());
        }
        out
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp() -> ParameterSchema {
        ParameterSchema::new(
            [
                (0, SegmentKind::DenseWeight, vec![16, 2]),
                (0, SegmentKind::DenseBias, vec![16]),
                (1, SegmentKind::DenseWeight, vec![3, 16]),
                (1, SegmentKind::DenseBias, vec![3]),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn dense_bound_is_kaiming_uniform() {
        let b = init_bound_for(SegmentKind::DenseWeight, &[16, 2]).unwrap();
        assert_eq!(b, 3f64.sqrt() as f32);
        assert_eq!(b, 1.732_050_8);
    }

    #[test]
    fn conv_bound_uses_fan_in() {
        let b = init_bound_for(SegmentKind::ConvWeight, &[8, 3, 3, 3]).unwrap();
        assert_eq!(b, (6.0f64 / 27.0).sqrt() as f32);
    }

    #[test]
    fn bias_and_affine_bounds_are_zero() {
        assert_eq!(init_bound_for(SegmentKind::DenseBias, &[4]).unwrap(), 0.0);
        assert_eq!(init_bound_for(SegmentKind::BnGamma, &[4]).unwrap(), 0.0);
        assert_eq!(init_bound_for(SegmentKind::BnBeta, &[4]).unwrap(), 0.0);
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(init_bound_for(SegmentKind::DenseWeight, &[4, 0]).is_err());
    }

    #[test]
    fn layout_is_contiguous() {
        let s = mlp();
        assert_eq!(s.d(), 99);
        let mut next = 0;
        for seg in s.segments() {
            assert_eq!(seg.offset, next);
            next += seg.len;
        }
        assert_eq!(next, s.d());
        assert_eq!(s.segment_index_at(0), 0);
        assert_eq!(s.segment_index_at(31), 0);
        assert_eq!(s.segment_index_at(32), 1);
        assert_eq!(s.segment_index_at(98), 3);
    }

    #[test]
    fn fingerprint_tracks_layout() {
        assert_eq!(mlp().fingerprint(), mlp().fingerprint());
        let other = ParameterSchema::new(
            [
                (0, SegmentKind::DenseWeight, vec![16, 2]),
                (0, SegmentKind::DenseBias, vec![16]),
            ],
            vec![],
        )
        .unwrap();
        assert_ne!(mlp().fingerprint(), other.fingerprint());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn prior_marks_gamma() {
        let s = ParameterSchema::new(
            [
                (0, SegmentKind::ConvWeight, vec![2, 1, 3, 3]),
                (1, SegmentKind::BnGamma, vec![2]),
                (1, SegmentKind::BnBeta, vec![2]),
            ],
            vec![BnStatSlot {
                layer_id: 1,
                channels: 2,
            }],
        )
        .unwrap();
        let p = s.prior_vector();
        assert_eq!(&p[18..], &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.bn_total(), 4);
    }
}
