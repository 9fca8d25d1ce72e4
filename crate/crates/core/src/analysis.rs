//! Operation classes, boundary dependency types, and fusible segments.

use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::halo::Halo;
use crate::kernel::{DependencyType, KernelDesc, OperationType, Scope};
use crate::pipeline::{KernelInterval, Pipeline};

/// Primary operation class plus the single-frame flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OperationClass {
    pub primary: OperationType,
    pub single_frame: bool,
}

pub fn classify_operation(halo: &Halo, multi_frame: bool) -> OperationClass {
    let [dx, dy, dt] = halo.totals();
    let primary = if dx == 0 && dy == 0 && dt == 0 {
        OperationType::SinglePoint
    } else if dt == 0 {
        OperationType::Rectangular
    } else if dx > 0 && dy > 0 {
        OperationType::SpatioTemporal
    } else {
        OperationType::MultiFrame
    };
    OperationClass {
        primary,
        single_frame: dt == 0 && !multi_frame,
    }
}

impl OperationClass {
    /// Whether a declared class is consistent with this classification.
    /// The overlay classes are accepted when their condition holds.
    pub fn admits(&self, declared: OperationType, halo: &Halo, multi_frame: bool) -> bool {
        match declared {
            d if d == self.primary => true,
            OperationType::SingleFrame => self.single_frame,
            OperationType::MultiFrame => multi_frame || halo.dt() > 0,
            _ => false,
        }
    }
}

/// Dependency of `consumer` on its predecessor's output.
pub fn classify_dependency(consumer: &KernelDesc) -> DependencyType {
    dependency_with_reason(consumer).0
}

fn dependency_with_reason(consumer: &KernelDesc) -> (DependencyType, &'static str) {
    if consumer.scope == Scope::GlobalAggregation {
        (
            DependencyType::KK,
            "global aggregation: a block needs the output of many blocks",
        )
    } else if consumer.halo.is_zero() {
        (
            DependencyType::TT,
            "zero halo: each element needs only its own input element",
        )
    } else {
        (
            DependencyType::TMT,
            "non-zero halo: each element needs a neighborhood within the block",
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryClassification {
    pub consumer_id: u32,
    pub dep_type: DependencyType,
    pub reason: String,
}

/// One classification per kernel boundary (`n − 1` entries).
pub fn classify_boundaries(pipeline: &Pipeline) -> Vec<BoundaryClassification> {
    pipeline
        .kernels()
        .iter()
        .skip(1)
        .map(|k| {
            let (dep_type, reason) = dependency_with_reason(k);
            BoundaryClassification {
                consumer_id: k.id,
                dep_type,
                reason: String::from(reason),
            }
        })
        .collect()
}

/// A maximal run of kernels with no KK boundary inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct FusibleSegment {
    pub interval: KernelInterval,
    pub kernels: Vec<KernelDesc>,
}

impl FusibleSegment {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Kernels of a sub-interval given in pipeline ids.
    pub fn slice(&self, interval: KernelInterval) -> &[KernelDesc] {
        let off = self.interval.first;
        &self.kernels[(interval.first - off) as usize..=(interval.last - off) as usize]
    }
}

/// Cuts the chain at every KK boundary; a KK kernel starts a new segment.
pub fn fusible_segments(pipeline: &Pipeline) -> Vec<FusibleSegment> {
    let mut segments: Vec<FusibleSegment> = Vec::new();
    for (pos, k) in pipeline.kernels().iter().enumerate() {
        let cut = pos == 0 || classify_dependency(k) == DependencyType::KK;
        match segments.last_mut() {
            Some(seg) if !cut => {
                seg.interval.last = k.id;
                seg.kernels.push(k.clone());
            }
            _ => segments.push(FusibleSegment {
                interval: KernelInterval::single(k.id),
                kernels: alloc::vec![k.clone()],
            }),
        }
    }
    segments
}
