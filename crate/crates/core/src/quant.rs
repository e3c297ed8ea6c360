//! Fitting-aware quantization.
//!
//! Grid centers, scales and values use 8-bit uniform codes over fixed ranges.
//! Orientations are stored as three ZYX Euler angles in steps of pi/60.
//! During refinement the forward pass sees `dequantize(quantize(v))` while
//! updates go to full-precision master values (straight-through estimation).

use std::f64::consts::{PI, TAU};

use nalgebra::UnitQuaternion;

/// Closed value interval mapped onto `2^bits` codes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeRange {
    pub lo: f64,
    pub hi: f64,
    pub bits: u32,
}

/// Grid values share the SDF truncation range.
pub const VALUE_RANGE: CodeRange = CodeRange {
    lo: -0.1,
    hi: 0.1,
    bits: 8,
};

/// Grid centers live in the normalized object box.
pub const CENTER_RANGE: CodeRange = CodeRange {
    lo: -0.5,
    hi: 0.5,
    bits: 8,
};

/// Per-axis grid half-scales.
pub const SCALE_RANGE: CodeRange = CodeRange {
    lo: 0.0,
    hi: 0.1,
    bits: 8,
};

/// Smallest scale code; code 0 would collapse the grid to zero width.
pub const MIN_SCALE_CODE: u8 = 1;

/// Orientation quantum.
pub const EULER_STEP: f64 = PI / 60.0;
/// Codes per full turn.
pub const EULER_CODES: u32 = 120;

impl CodeRange {
    pub fn max_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.max_code() as f64
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    /// Half-away-from-zero rounding of the clamped value.
    pub fn quantize(&self, v: f64) -> u32 {
        let t = (self.clamp(v) - self.lo) / (self.hi - self.lo);
        (t * self.max_code() as f64).round() as u32
    }

    pub fn dequantize(&self, code: u32) -> f64 {
        self.lo + (self.hi - self.lo) * code as f64 / self.max_code() as f64
    }

    /// Forward value seen by the straight-through estimator.
    pub fn fake_quantize(&self, v: f64) -> f64 {
        self.dequantize(self.quantize(v))
    }
}

pub fn quantize(value: f64, lo: f64, hi: f64, bits: u32) -> u32 {
    CodeRange { lo, hi, bits }.quantize(value)
}

pub fn dequantize(code: u32, lo: f64, hi: f64, bits: u32) -> f64 {
    CodeRange { lo, hi, bits }.dequantize(code)
}

pub fn quantize_scale(v: f64) -> u8 {
    (SCALE_RANGE.quantize(v) as u8).max(MIN_SCALE_CODE)
}

pub fn quantize_angle(angle: f64) -> u8 {
    let wrapped = angle.rem_euclid(TAU);
    ((wrapped / EULER_STEP).round() as u32 % EULER_CODES) as u8
}

pub fn dequantize_angle(code: u8) -> f64 {
    code as f64 * EULER_STEP
}

/// `[yaw, pitch, roll]` for `R = Rz(yaw) Ry(pitch) Rx(roll)`, pitch in `[-pi/2, pi/2]`.
pub fn quaternion_to_euler_zyx(q: &UnitQuaternion<f64>) -> [f64; 3] {
    let (roll, pitch, yaw) = q.euler_angles();
    [yaw, pitch, roll]
}

pub fn euler_zyx_to_quaternion(angles: [f64; 3]) -> UnitQuaternion<f64> {
    let [yaw, pitch, roll] = angles;
    UnitQuaternion::from_euler_angles(roll, pitch, yaw)
}

pub fn quantize_rotation(q: &UnitQuaternion<f64>) -> [u8; 3] {
    quaternion_to_euler_zyx(q).map(quantize_angle)
}

pub fn dequantize_rotation(codes: [u8; 3]) -> UnitQuaternion<f64> {
    euler_zyx_to_quaternion(codes.map(dequantize_angle))
}

/// Euler codes that the ZYX extraction reproduces: pitch strictly inside
/// `(-pi/2, pi/2)`. Other triples decode to valid rotations but re-encode to
/// an equivalent canonical triple.
pub fn is_canonical_euler(codes: [u8; 3]) -> bool {
    let quarter = (EULER_CODES / 4) as u8;
    codes.iter().all(|&c| (c as u32) < EULER_CODES)
        && (codes[1] < quarter || codes[1] > 3 * quarter)
}
