//! Fingerprint chain as streaming stages: normalize, orientation, isotropic
//! pre-filter, guided line Gaussian with binarization, thinning.

use std::collections::VecDeque;
use std::f64::consts::PI;

use super::cordic::atan2_int;
use super::fixed::{div_round, isqrt, round_shift};
use super::guided::{angle_of, GuidedTables, WEIGHT_FRAC};
use super::line_buffer::{IntKernel, LineBuffer};
use super::pipeline::{image_rows, run_pipeline, rows_to_image, PipelineRun, Row, Stage, StageList};
use super::{HwParams, ANGLE_STEPS, NORM_SCALE};
use crate::error::Result;
use crate::fp_enhance::{FilterParams, OrientationField, VARIANCE_FLOOR};
use crate::fp_minutiae::{extract_minutiae, thin, MinutiaeSet};
use crate::raster::{Border, GrayImage, Kernel1D};

const STATS_FRAC: u32 = 16;
const GRAD_FRAC: u32 = 12;
/// Mask-factor table: 257 entries over variances `0..=16384` (levels^2).
const MASK_STEP_BITS: u32 = 6;
const MASK_FRAC: u32 = 16;
/// Pixel intermediates between stages are signed Q8.8.
pub const PIXEL_FRAC: u32 = 8;
/// Bits dropped from the Q8.8 input before gradient estimation.
const GRAD_INPUT_SHIFT: u32 = 4;

/// Channel layout of the rows leaving [`ThinStage`].
pub mod ch {
    pub const SKELETON: usize = 0;
    pub const ANGLE: usize = 1;
    pub const FILTERED: usize = 2;
    pub const NORMALIZED: usize = 3;
    pub const BINARY: usize = 4;
}

fn to_i64(v: &[i32]) -> Vec<i64> {
    v.iter().map(|&x| i64::from(x)).collect()
}

/// Signed Q8.8 sample to an 8-bit level centred at 128.
pub fn pixel_level(raw: i32) -> i32 {
    (128 + round_shift(i64::from(raw), PIXEL_FRAC)).clamp(0, 255) as i32
}

fn clamp_q8_8(v: i128) -> i32 {
    v.clamp(i128::from(i16::MIN), i128::from(i16::MAX)) as i32
}

struct StatsRow {
    x: Vec<i64>,
    h1: Vec<i64>,
    h2: Vec<i64>,
}

struct NormCore {
    kernel: IntKernel,
    mask_table: Vec<i64>,
    var_floor: i64,
}

impl NormCore {
    /// Interpolated mask factor (Q0.16) for a variance with 32 fraction bits.
    fn mask_factor(&self, var_q32: i64) -> i64 {
        let shift = 2 * STATS_FRAC + MASK_STEP_BITS;
        let step = var_q32 >> shift;
        if step >= 256 {
            return self.mask_table[256];
        }
        let frac = (var_q32 >> (shift - 16)) & 0xFFFF;
        let (a, b) = (self.mask_table[step as usize], self.mask_table[step as usize + 1]);
        a + round_shift((b - a) * frac, 16)
    }

    fn output(&self, window: &[&StatsRow]) -> Vec<i32> {
        let m1 = self.kernel.filter_window(&window.iter().map(|r| &r.h1).collect::<Vec<_>>());
        let m2 = self.kernel.filter_window(&window.iter().map(|r| &r.h2).collect::<Vec<_>>());
        let centre = window[window.len() / 2];
        let one = 2 * STATS_FRAC;
        centre
            .x
            .iter()
            .zip(m1.iter().zip(&m2))
            .map(|(&x, (&m1, &m2))| {
                let sq = ((m1 as i128 * m1 as i128 + (1i128 << (one - 1))) >> one) as i64;
                let var = (m2 - sq).max(0);
                let sd = i128::from(isqrt(var.max(self.var_floor) as u64));
                let d = i128::from((x << one) - m1);
                // (d / 2^32) / (sd / 2^16) * (M / 2^16) * 32, in Q8.8
                let num = (d * i128::from(self.mask_factor(var)) * i128::from(NORM_SCALE)) << PIXEL_FRAC;
                let den = sd << (one + MASK_FRAC - STATS_FRAC);
                let v = if num >= 0 {
                    (num + den / 2) / den
                } else {
                    -((-num + den / 2) / den)
                };
                clamp_q8_8(v)
            })
            .collect()
    }
}

/// Local normalization with the variance-driven mask factor; emits
/// `32 * g * M` in Q8.8.
pub struct NormalizeStage {
    core: NormCore,
    buf: LineBuffer<StatsRow>,
}

impl NormalizeStage {
    pub fn new(params: &FilterParams) -> Self {
        let kernel = IntKernel::gaussian(params.stats_sigma, STATS_FRAC);
        let scale = 255.0 * 255.0;
        let mask_table = (0..=256u32)
            .map(|i| {
                let var = f64::from(i << MASK_STEP_BITS) / scale;
                let m = -(-var / (2.0 * params.c * params.c)).exp_m1();
                (m * f64::from(1u32 << MASK_FRAC)).round() as i64
            })
            .collect();
        Self {
            buf: LineBuffer::new(kernel.radius()),
            core: NormCore {
                var_floor: (VARIANCE_FLOOR * scale * 2f64.powi(2 * STATS_FRAC as i32)).round() as i64,
                kernel,
                mask_table,
            },
        }
    }
}

impl Stage for NormalizeStage {
    fn name(&self) -> &str {
        "normalize"
    }

    fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let x = to_i64(&row.channels[0]);
        let x2: Vec<i64> = x.iter().map(|v| v * v).collect();
        let core = &self.core;
        let h1 = core.kernel.filter_row(&x, Border::Replicate);
        let h2 = core.kernel.filter_row(&x2, Border::Replicate);
        self.buf
            .push(StatsRow { x, h1, h2 }, |j, w| emit(Row::new(j, vec![core.output(w)])));
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let core = &self.core;
        self.buf.finish(|j, w| emit(Row::new(j, vec![core.output(w)])));
        Ok(())
    }
}

struct GradRow {
    hx: Vec<i64>,
    hy: Vec<i64>,
}

struct TensorRow {
    xx: Vec<i64>,
    xy: Vec<i64>,
    yy: Vec<i64>,
}

struct AngleRow {
    c: Vec<i64>,
    s: Vec<i64>,
}

struct OrientCore {
    deriv: IntKernel,
    smooth: IntKernel,
    cov: IntKernel,
    angle: IntKernel,
    iterations: u32,
}

impl OrientCore {
    fn shifted_row(k: &IntKernel, row: &[i64]) -> Vec<i64> {
        k.filter_row(row, Border::Replicate)
            .into_iter()
            .map(|v| round_shift(v, k.frac))
            .collect()
    }

    fn gradients(&self, w: &[&GradRow]) -> TensorRow {
        let gx = self.smooth.filter_window(&w.iter().map(|r| &r.hx).collect::<Vec<_>>());
        let gy = self.deriv.filter_window(&w.iter().map(|r| &r.hy).collect::<Vec<_>>());
        let gx: Vec<i64> = gx.into_iter().map(|v| round_shift(v, GRAD_FRAC)).collect();
        let gy: Vec<i64> = gy.into_iter().map(|v| round_shift(v, GRAD_FRAC)).collect();
        let prod = |a: &[i64], b: &[i64]| -> Vec<i64> {
            let p: Vec<i64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            Self::shifted_row(&self.cov, &p)
        };
        TensorRow {
            xx: prod(&gx, &gx),
            xy: prod(&gx, &gy),
            yy: prod(&gy, &gy),
        }
    }

    fn components(&self, w: &[&TensorRow]) -> AngleRow {
        let xx = self.cov.filter_window_shifted(&w.iter().map(|r| &r.xx).collect::<Vec<_>>());
        let xy = self.cov.filter_window_shifted(&w.iter().map(|r| &r.xy).collect::<Vec<_>>());
        let yy = self.cov.filter_window_shifted(&w.iter().map(|r| &r.yy).collect::<Vec<_>>());
        let c: Vec<i64> = xx.iter().zip(&yy).map(|(a, b)| a - b).collect();
        let s: Vec<i64> = xy.iter().map(|a| 2 * a).collect();
        AngleRow {
            c: Self::shifted_row(&self.angle, &c),
            s: Self::shifted_row(&self.angle, &s),
        }
    }

    fn codes(&self, w: &[&AngleRow]) -> Vec<i32> {
        let c = self.angle.filter_window_shifted(&w.iter().map(|r| &r.c).collect::<Vec<_>>());
        let s = self.angle.filter_window_shifted(&w.iter().map(|r| &r.s).collect::<Vec<_>>());
        let pi = (PI * f64::from(1u32 << 29)).round() as i64;
        c.iter()
            .zip(&s)
            .map(|(&c, &s)| {
                if c == 0 && s == 0 {
                    return 0;
                }
                let phi = i64::from(atan2_int(s, c, self.iterations).raw());
                let theta = (pi / 2 + round_shift(phi, 1)).rem_euclid(pi);
                (div_round(theta * ANGLE_STEPS as i64, pi) % ANGLE_STEPS as i64) as i32
            })
            .collect()
    }
}

/// Gradient structure tensor with doubled-angle smoothing; the angle of
/// the smoothed vector comes from CORDIC and is quantized to 8 bits.
/// Emits `[normalized, angle code]`.
pub struct OrientationStage {
    core: OrientCore,
    grad: LineBuffer<GradRow>,
    tensor: LineBuffer<TensorRow>,
    angle: LineBuffer<AngleRow>,
    pending: VecDeque<Vec<i32>>,
}

impl OrientationStage {
    pub fn new(params: &FilterParams, iterations: u32) -> Self {
        let deriv = IntKernel::quantize_raw(&Kernel1D::gaussian_derivative(params.sigma_grad), GRAD_FRAC);
        let smooth = IntKernel::gaussian(params.sigma_grad, GRAD_FRAC);
        let cov = IntKernel::gaussian(params.sigma_cov, GRAD_FRAC);
        let angle = IntKernel::gaussian(params.sigma_angle, GRAD_FRAC);
        Self {
            grad: LineBuffer::new(deriv.radius()),
            tensor: LineBuffer::new(cov.radius()),
            angle: LineBuffer::new(angle.radius()),
            core: OrientCore {
                deriv,
                smooth,
                cov,
                angle,
                iterations,
            },
            pending: VecDeque::new(),
        }
    }

    fn drain(&mut self, grads: Vec<TensorRow>, flush: bool, emit: &mut dyn FnMut(Row)) {
        let core = &self.core;
        let mut comps = Vec::new();
        for t in grads {
            self.tensor.push(t, |_, w| comps.push(core.components(w)));
        }
        if flush {
            self.tensor.finish(|_, w| comps.push(core.components(w)));
        }
        let mut codes = Vec::new();
        for a in comps {
            self.angle.push(a, |j, w| codes.push((j, core.codes(w))));
        }
        if flush {
            self.angle.finish(|j, w| codes.push((j, core.codes(w))));
        }
        for (j, code) in codes {
            let q = self.pending.pop_front().expect("normalized row queued");
            emit(Row::new(j, vec![q, code]));
        }
    }
}

impl Stage for OrientationStage {
    fn name(&self) -> &str {
        "orientation"
    }

    fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let q = row.channels[0].clone();
        let s: Vec<i64> = q.iter().map(|&v| round_shift(i64::from(v), GRAD_INPUT_SHIFT)).collect();
        self.pending.push_back(q);
        let core = &self.core;
        let hx = core.deriv.filter_row(&s, Border::Replicate);
        let hy = core.smooth.filter_row(&s, Border::Replicate);
        let mut grads = Vec::new();
        self.grad.push(GradRow { hx, hy }, |_, w| grads.push(core.gradients(w)));
        self.drain(grads, false, emit);
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let core = &self.core;
        let mut grads = Vec::new();
        self.grad.finish(|_, w| grads.push(core.gradients(w)));
        self.drain(grads, true, emit);
        Ok(())
    }
}

struct IsoRow {
    h: Vec<i64>,
    passthrough: Vec<Vec<i32>>,
}

/// Separable isotropic Gaussian (7x7 at the defaults) with Q8.8 taps over
/// Q8.8 samples. Emits `[smoothed, angle code, normalized]`.
pub struct IsoStage {
    kernel: IntKernel,
    buf: LineBuffer<IsoRow>,
}

impl IsoStage {
    pub fn new(params: &FilterParams) -> Self {
        let kernel = IntKernel::quantize(&params.iso_kernel(), 8);
        Self {
            buf: LineBuffer::new(kernel.radius()),
            kernel,
        }
    }
}

fn iso_output(k: &IntKernel, j: usize, w: &[&IsoRow]) -> Row {
    let v = k.filter_window(&w.iter().map(|r| &r.h).collect::<Vec<_>>());
    let smoothed: Vec<i32> = v
        .into_iter()
        .map(|v| clamp_q8_8(i128::from(round_shift(v, 2 * k.frac))))
        .collect();
    let centre = w[w.len() / 2];
    Row::new(j, vec![smoothed, centre.passthrough[1].clone(), centre.passthrough[0].clone()])
}

impl Stage for IsoStage {
    fn name(&self) -> &str {
        "iso-filter"
    }

    fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let h = self.kernel.filter_row(&to_i64(&row.channels[0]), Border::Replicate);
        let k = &self.kernel;
        self.buf.push(
            IsoRow {
                h,
                passthrough: row.channels,
            },
            |j, w| emit(iso_output(k, j, w)),
        );
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let k = &self.kernel;
        self.buf.finish(|j, w| emit(iso_output(k, j, w)));
        Ok(())
    }
}

/// Guided line Gaussian; the binary output is the sign of the 24-bit
/// accumulator, the filtered output its 8-bit rounding. Emits
/// `[binary, angle code, filtered, normalized]` with ridge = 0.
pub struct GuidedStage {
    tables: GuidedTables,
    buf: LineBuffer<Row>,
}

impl GuidedStage {
    pub fn new(params: &FilterParams) -> Self {
        Self {
            tables: GuidedTables::new(params.sigma_theta()),
            buf: LineBuffer::new(super::guided::RADIUS),
        }
    }
}

fn guided_output(t: &GuidedTables, j: usize, w: &[&Row]) -> Row {
    let r = super::guided::RADIUS as i32;
    let centre = w[w.len() / 2];
    let width = centre.channels[0].len() as i32;
    let mut filtered = Vec::with_capacity(width as usize);
    let mut binary = Vec::with_capacity(width as usize);
    for x in 0..width {
        let code = centre.channels[1][x as usize] as u8;
        let acc = t.accumulate(code, |dx, dy| {
            let xx = (x + dx).clamp(0, width - 1) as usize;
            w[(r + dy) as usize].channels[0][xx]
        });
        filtered.push((128 + round_shift(acc, WEIGHT_FRAC + PIXEL_FRAC)).clamp(0, 255) as i32);
        binary.push(i32::from(acc >= 0));
    }
    Row::new(
        j,
        vec![binary, centre.channels[1].clone(), filtered, centre.channels[2].clone()],
    )
}

impl Stage for GuidedStage {
    fn name(&self) -> &str {
        "guided-line"
    }

    fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let t = &self.tables;
        self.buf.push(row, |j, w| emit(guided_output(t, j, w)));
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let t = &self.tables;
        self.buf.finish(|j, w| emit(guided_output(t, j, w)));
        Ok(())
    }
}

/// Frame stage: thinning needs the whole binary image. Emits
/// `[skeleton, angle code, filtered, normalized, binary]`.
#[derive(Default)]
pub struct ThinStage {
    rows: Vec<Row>,
}

impl Stage for ThinStage {
    fn name(&self) -> &str {
        "thin"
    }

    fn push(&mut self, row: Row, _emit: &mut dyn FnMut(Row)) -> Result<()> {
        self.rows.push(row);
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        if self.rows.is_empty() {
            return Ok(());
        }
        let binary = rows_to_image(&self.rows, 0)?;
        let skeleton = thin(&binary);
        for (y, row) in std::mem::take(&mut self.rows).into_iter().enumerate() {
            let mut channels = row.channels;
            let bin = channels[0].clone();
            channels[0] = skeleton.row(y).iter().map(|&p| i32::from(p)).collect();
            channels.push(bin);
            emit(Row::new(y, channels));
        }
        Ok(())
    }
}

pub fn fingerprint_stages(params: &FilterParams, hw: &HwParams) -> StageList {
    vec![
        Box::new(NormalizeStage::new(params)),
        Box::new(OrientationStage::new(params, hw.cordic_iterations)),
        Box::new(IsoStage::new(params)),
        Box::new(GuidedStage::new(params)),
        Box::<ThinStage>::default(),
    ]
}

#[derive(Clone, Debug)]
pub struct HwFingerprint {
    pub normalized: GrayImage,
    pub angle_codes: Vec<u8>,
    pub field: OrientationField,
    pub filtered: GrayImage,
    pub binary: GrayImage,
    pub skeleton: GrayImage,
    pub minutiae: MinutiaeSet,
    pub run: PipelineRun,
}

pub fn hw_fingerprint(image: &GrayImage, params: &FilterParams, hw: &HwParams, border_margin: usize) -> Result<HwFingerprint> {
    let run = run_pipeline(fingerprint_stages(params, hw), image_rows(image), hw.exec, hw.queue_rows)?;
    let angle_codes: Vec<u8> = run
        .rows
        .iter()
        .flat_map(|r| r.channels[ch::ANGLE].iter().map(|&c| c as u8))
        .collect();
    let (w, h) = (image.width(), image.height());
    let field = OrientationField {
        width: w,
        height: h,
        theta: angle_codes.iter().map(|&c| angle_of(c)).collect(),
        coherence: vec![1.0; w * h],
    };
    let skeleton = rows_to_image(&run.rows, ch::SKELETON)?;
    let normalized: Vec<u8> = run
        .rows
        .iter()
        .flat_map(|r| r.channels[ch::NORMALIZED].iter().map(|&v| pixel_level(v) as u8))
        .collect();
    let minutiae = extract_minutiae(&skeleton, &field, border_margin);
    Ok(HwFingerprint {
        normalized: GrayImage::new(w, h, normalized)?,
        filtered: rows_to_image(&run.rows, ch::FILTERED)?,
        binary: rows_to_image(&run.rows, ch::BINARY)?,
        angle_codes,
        field,
        skeleton,
        minutiae,
        run,
    })
}
