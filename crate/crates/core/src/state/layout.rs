use std::fmt;

use super::StateError;

/// Identifies one block of the error state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockId {
    GyroBias,
    AccelBias,
    Velocity,
    Feature(u64),
    TimeSync,
    Pose(u64),
    Intrinsics,
    Extrinsics,
}

impl BlockId {
    /// Error-state dimension. Rotations are minimal (3), so a pose is
    /// position (3) followed by orientation (3).
    pub fn dim(self) -> usize {
        match self {
            BlockId::GyroBias | BlockId::AccelBias | BlockId::Velocity | BlockId::Feature(_) => 3,
            BlockId::TimeSync => 1,
            BlockId::Pose(_) | BlockId::Extrinsics => 6,
            BlockId::Intrinsics => 4,
        }
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::GyroBias => write!(f, "gyro_bias"),
            BlockId::AccelBias => write!(f, "accel_bias"),
            BlockId::Velocity => write!(f, "velocity"),
            BlockId::Feature(id) => write!(f, "feature[{id}]"),
            BlockId::TimeSync => write!(f, "t_sync"),
            BlockId::Pose(id) => write!(f, "pose[{id}]"),
            BlockId::Intrinsics => write!(f, "intrinsics"),
            BlockId::Extrinsics => write!(f, "extrinsics"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub id: BlockId,
    pub offset: usize,
    pub dim: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.dim
    }
}

/// Ordered error-state blocks.
///
/// The order is always gyro bias, accel bias, velocity, SLAM features,
/// time offset, poses, intrinsics, extrinsics. Visual measurements never
/// touch the first three blocks, which form the `n1` part of the update
/// partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorStateLayout {
    blocks: Vec<Block>,
    n: usize,
}

/// Size of the leading block (biases and velocity) that visual updates skip.
pub const N1: usize = 9;

impl ErrorStateLayout {
    pub fn new(feature_ids: &[u64], pose_ids: &[u64]) -> Self {
        let mut ids = vec![BlockId::GyroBias, BlockId::AccelBias, BlockId::Velocity];
        ids.extend(feature_ids.iter().map(|&i| BlockId::Feature(i)));
        ids.push(BlockId::TimeSync);
        ids.extend(pose_ids.iter().map(|&i| BlockId::Pose(i)));
        ids.push(BlockId::Intrinsics);
        ids.push(BlockId::Extrinsics);
        let mut offset = 0;
        let blocks = ids
            .into_iter()
            .map(|id| {
                let b = Block {
                    id,
                    offset,
                    dim: id.dim(),
                };
                offset += b.dim;
                b
            })
            .collect();
        Self { blocks, n: offset }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n1(&self) -> usize {
        N1
    }

    pub fn n2(&self) -> usize {
        self.n - N1
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn offset(&self, id: BlockId) -> Result<usize, StateError> {
        self.block(id)
            .map(|b| b.offset)
            .ok_or_else(|| StateError::UnknownBlock(id.to_string()))
    }

    pub fn pose_ids(&self) -> Vec<u64> {
        self.blocks
            .iter()
            .filter_map(|b| match b.id {
                BlockId::Pose(i) => Some(i),
                _ => None,
            })
            .collect()
    }

    pub fn feature_ids(&self) -> Vec<u64> {
        self.blocks
            .iter()
            .filter_map(|b| match b.id {
                BlockId::Feature(i) => Some(i),
                _ => None,
            })
            .collect()
    }

    /// Offsets of every pose block, in window order.
    pub fn pose_offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter(|b| matches!(b.id, BlockId::Pose(_)))
            .map(|b| b.offset)
            .collect()
    }

    /// All scalar indices covered by `ids`, ascending.
    pub fn reorder_for_marginalization(&self, ids: &[BlockId]) -> Result<Vec<usize>, StateError> {
        let mut out = Vec::new();
        for &id in ids {
            let b = self
                .block(id)
                .ok_or_else(|| StateError::UnknownBlock(id.to_string()))?;
            out.extend(b.range());
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Layout for a full window of `l` poses and `s_max` SLAM features, with
/// placeholder ids `0..`.
pub fn build_layout(l: usize, s_max: usize) -> Result<ErrorStateLayout, StateError> {
    if l < 2 {
        return Err(StateError::InvalidConfig(format!(
            "window size must be at least 2, got {l}"
        )));
    }
    let features: Vec<u64> = (0..s_max as u64).collect();
    let poses: Vec<u64> = (0..l as u64).collect();
    Ok(ErrorStateLayout::new(&features, &poses))
}
