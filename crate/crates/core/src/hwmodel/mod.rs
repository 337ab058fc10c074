//! Bit-accurate model of a streaming hardware implementation: fixed-point
//! arithmetic, CORDIC polar conversion, line buffers, the guided line
//! filter and stage pipelines for both traits.
//!
//! | quantity                      | format                         |
//! |-------------------------------|--------------------------------|
//! | ridge angle                   | 8-bit code, 256 steps over pi  |
//! | CORDIC input                  | Q1.15                          |
//! | CORDIC radius / angle         | Q2.29                          |
//! | guided filter weights         | Q8.8, 24-bit signed accumulator|
//! | fingerprint pixel between stages | `32 * g * M`, signed Q8.8   |
//! | filter accumulator            | 24 bit signed; sign = binary   |
//! | iris detail / contrast        | 16 fraction bits               |
//! | pupil centre, radius          | Q16.16                         |

pub mod cordic;
pub mod enhance;
pub mod fingerprint;
pub mod fixed;
pub mod guided;
pub mod iris;
pub mod line_buffer;
pub mod pipeline;

use serde::{Deserialize, Serialize};

pub use cordic::{cordic_polar, CordicPolar, DEFAULT_ITERATIONS};
pub use enhance::ContrastEstimator;
pub use fixed::{Fixed, Q1_15, Q2_29, Q8_8};
pub use pipeline::{ExecMode, PipelineRun, StageReport, QUEUE_ROWS};

pub const ANGLE_BITS: u32 = 8;
pub const ANGLE_STEPS: usize = 1 << ANGLE_BITS;
/// Gain applied to the normalized fingerprint `g * M`.
pub const NORM_SCALE: i64 = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwParams {
    pub cordic_iterations: u32,
    pub contrast: ContrastEstimator,
    pub exec: ExecMode,
    pub queue_rows: usize,
}

impl Default for HwParams {
    fn default() -> Self {
        Self {
            cordic_iterations: DEFAULT_ITERATIONS,
            contrast: ContrastEstimator::Rms,
            exec: ExecMode::Pipelined,
            queue_rows: QUEUE_ROWS,
        }
    }
}
