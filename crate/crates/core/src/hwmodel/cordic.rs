//! Vectoring-mode CORDIC: magnitude and angle by shift-and-add.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::fixed::{round_shift, Q1_15, Q2_29};
use crate::fp_match::PolarConverter;

pub const DEFAULT_ITERATIONS: u32 = 16;
/// Beyond this many micro-rotations the shifts underflow the datapath.
pub const MAX_ITERATIONS: u32 = 40;

/// Datapath width after normalization: operands lie in `[2^(W-1), 2^W)`.
const DATAPATH_BITS: u32 = 39;
/// Fraction bits of the angle accumulator.
const Z_FRAC: u32 = 40;
const GAIN_FRAC: u32 = 40;

struct Tables {
    atan: Vec<i64>,
    /// `1 / K_n` for every iteration count `n`.
    inv_gain: Vec<i64>,
    pi: i64,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let z = (1u64 << Z_FRAC) as f64;
        let atan = (0..MAX_ITERATIONS)
            .map(|i| ((0.5f64).powi(i as i32).atan() * z).round() as i64)
            .collect();
        let mut inv_gain = Vec::with_capacity(MAX_ITERATIONS as usize + 1);
        let mut k = 1.0f64;
        inv_gain.push(1i64 << GAIN_FRAC);
        for i in 0..MAX_ITERATIONS {
            k *= (1.0 + 0.25f64.powi(i as i32)).sqrt();
            inv_gain.push(((1u64 << GAIN_FRAC) as f64 / k).round() as i64);
        }
        Tables {
            atan,
            inv_gain,
            pi: (PI * z).round() as i64,
        }
    })
}

/// Magnitude `r * 2^-exp` (input units) and angle in `Z_FRAC` fixed point.
fn vector(x: i64, y: i64, iterations: u32) -> (i64, i32, i64) {
    let t = tables();
    let n = iterations.min(MAX_ITERATIONS);
    let m = x.unsigned_abs().max(y.unsigned_abs());
    debug_assert!(m > 0);
    let exp = DATAPATH_BITS as i32 - 1 - m.ilog2() as i32;
    let norm = |v: i64| if exp >= 0 { v << exp } else { v >> -exp };
    let (mut x, mut y) = (norm(x), norm(y));
    let mut z = 0i64;
    if x < 0 {
        z = if y >= 0 { t.pi } else { -t.pi };
        x = -x;
        y = -y;
    }
    for i in 0..n {
        let (dx, dy) = (y >> i, x >> i);
        if y >= 0 {
            x += dx;
            y -= dy;
            z += t.atan[i as usize];
        } else {
            x -= dx;
            y += dy;
            z -= t.atan[i as usize];
        }
    }
    // the last micro-rotation may overshoot the branch cut
    z = z.clamp(-t.pi, t.pi);
    // x >= 0 throughout; the product stays below 2^(W+2+GAIN_FRAC)
    let r = ((x as i128 * t.inv_gain[n as usize] as i128) >> GAIN_FRAC) as i64;
    (r, exp, z)
}

fn z_to_q2_29(z: i64) -> Q2_29 {
    Q2_29::from_raw(round_shift(z, Z_FRAC - 29))
}

/// `(hypot(x, y), atan2(y, x))` with the angle in `(-pi, pi]`; `(0, 0)` maps
/// to `(0, 0)`.
pub fn cordic_polar(x: Q1_15, y: Q1_15, iterations: u32) -> (Q2_29, Q2_29) {
    if x.raw() == 0 && y.raw() == 0 {
        return (Q2_29::ZERO, Q2_29::ZERO);
    }
    let (r, exp, z) = vector(i64::from(x.raw()), i64::from(y.raw()), iterations);
    // input LSB is 2^-15, output LSB 2^-29
    let shift = exp - 14;
    let r = if shift >= 0 {
        round_shift(r, shift as u32)
    } else {
        r << -shift
    };
    (Q2_29::from_raw(r), z_to_q2_29(z))
}

/// Angle of an integer vector of any scale, `(-pi, pi]`; zero for `(0, 0)`.
pub fn atan2_int(y: i64, x: i64, iterations: u32) -> Q2_29 {
    if x == 0 && y == 0 {
        return Q2_29::ZERO;
    }
    z_to_q2_29(vector(x, y, iterations).2)
}

/// Polar conversion for the matcher: pixel offsets are scaled by `2^-shift`
/// into Q1.15, converted, and scaled back.
#[derive(Clone, Copy, Debug)]
pub struct CordicPolar {
    pub iterations: u32,
    pub shift: u32,
}

impl Default for CordicPolar {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            // +-2048 px at 1/16 px resolution
            shift: 11,
        }
    }
}

impl CordicPolar {
    pub fn new(iterations: u32) -> Self {
        Self {
            iterations,
            ..Self::default()
        }
    }
}

impl PolarConverter for CordicPolar {
    fn polar(&self, dx: f64, dy: f64) -> (f64, f64) {
        let scale = (1u64 << self.shift) as f64;
        let (r, theta) = cordic_polar(
            Q1_15::from_f64(dx / scale),
            Q1_15::from_f64(dy / scale),
            self.iterations,
        );
        (r.to_f64() * scale, theta.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polar(x: f64, y: f64) -> (f64, f64) {
        let (r, t) = cordic_polar(Q1_15::from_f64(x), Q1_15::from_f64(y), DEFAULT_ITERATIONS);
        (r.to_f64(), t.to_f64())
    }

    #[test]
    fn axis_and_origin() {
        let (r, t) = polar(1.0, 0.0);
        assert!((r - 1.0).abs() < 1e-6 && t.abs() < 1e-4);
        assert_eq!(polar(0.0, 0.0), (0.0, 0.0));
        let (_, t) = polar(-0.5, 0.0);
        assert!((t - PI).abs() < 1e-4);
        let (_, t) = polar(0.0, -0.5);
        assert!((t + PI / 2.0).abs() < 1e-4);
    }

    #[test]
    fn three_four_five() {
        let (r, t) = polar(0.3, 0.4);
        let tol = 2f64.powi(-10);
        assert!((r - 0.5).abs() <= tol * 0.5, "r = {r}");
        assert!((t - 0.4f64.atan2(0.3)).abs() <= tol, "t = {t}");
    }

    #[test]
    fn extreme_inputs_stay_in_range() {
        let (r, t) = cordic_polar(Q1_15::MIN, Q1_15::MIN, DEFAULT_ITERATIONS);
        assert!((r.to_f64() - 2f64 * 2f64.sqrt()).abs() < 1e-6);
        assert!((t.to_f64() + 3.0 * PI / 4.0).abs() < 1e-4);
        let (r, _) = cordic_polar(Q1_15::EPSILON, Q1_15::ZERO, DEFAULT_ITERATIONS);
        assert!((r.to_f64() - 2f64.powi(-15)).abs() < 2f64.powi(-25));
    }

    #[test]
    fn integer_atan2_any_scale() {
        for (y, x) in [(1i64, 1i64), (-3, 7), (1 << 50, -(1 << 49)), (0, -5)] {
            let t = atan2_int(y, x, DEFAULT_ITERATIONS).to_f64();
            assert!((t - (y as f64).atan2(x as f64)).abs() < 2e-4, "{y} {x}");
        }
    }
}
