use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients of the linear execution-time model (abstract time units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub gmem_cost_per_elem: f64,
    pub smem_cost_per_elem: f64,
    pub compute_cost_unit: f64,
    pub launch_overhead: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            gmem_cost_per_elem: 100.0,
            smem_cost_per_elem: 1.0,
            compute_cost_unit: 1.0,
            launch_overhead: 10_000.0,
        }
    }
}

impl CostParams {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.gmem_cost_per_elem,
            self.smem_cost_per_elem,
            self.compute_cost_unit,
            self.launch_overhead,
        ]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        CostParams {
            gmem_cost_per_elem: v[0],
            smem_cost_per_elem: v[1],
            compute_cost_unit: v[2],
            launch_overhead: v[3],
        }
    }

    pub fn zero() -> Self {
        CostParams::from_array([0.0; 4])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub name: String,
    pub smem_bytes: u64,
    pub sm_count: u32,
    pub warp_size: u32,
    pub max_threads_per_block: u32,
    pub max_blocks_per_sm: u32,
    pub max_warps_per_sm: u32,
    pub cost: CostParams,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("device field {0} must be positive")]
    NonPositive(&'static str),
    #[error("cost.{0} must be finite and non-negative")]
    BadCost(&'static str),
}

impl Device {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.smem_bytes == 0 {
            return Err(DeviceError::NonPositive("smem_bytes"));
        }
        let caps = [
            ("sm_count", self.sm_count),
            ("warp_size", self.warp_size),
            ("max_threads_per_block", self.max_threads_per_block),
            ("max_blocks_per_sm", self.max_blocks_per_sm),
            ("max_warps_per_sm", self.max_warps_per_sm),
        ];
        for (field, v) in caps {
            if v == 0 {
                return Err(DeviceError::NonPositive(field));
            }
        }
        let costs = [
            ("gmem_cost_per_elem", self.cost.gmem_cost_per_elem),
            ("smem_cost_per_elem", self.cost.smem_cost_per_elem),
            ("compute_cost_unit", self.cost.compute_cost_unit),
            ("launch_overhead", self.cost.launch_overhead),
        ];
        for (field, v) in costs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DeviceError::BadCost(field));
            }
        }
        Ok(())
    }

    /// 48 KiB shared memory per block, Kepler-class limits.
    pub fn k20_like() -> Self {
        Device {
            name: String::from("k20_like"),
            smem_bytes: 49_152,
            sm_count: 13,
            warp_size: 32,
            max_threads_per_block: 1024,
            max_blocks_per_sm: 16,
            max_warps_per_sm: 64,
            cost: CostParams::default(),
        }
    }

    /// 16 KiB shared memory, Tesla-class limits.
    pub fn c1060_like() -> Self {
        Device {
            name: String::from("c1060_like"),
            smem_bytes: 16_384,
            sm_count: 30,
            warp_size: 32,
            max_threads_per_block: 512,
            max_blocks_per_sm: 8,
            max_warps_per_sm: 32,
            cost: CostParams::default(),
        }
    }
}
