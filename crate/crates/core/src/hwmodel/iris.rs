//! Iris chain as stages: dark-residual mask (streaming), segmentation and
//! unwrapping (frame), enhancement (streaming), bitplane slicing.

use std::f64::consts::TAU;

use super::enhance::{ContrastEstimator, EnhanceStream};
use super::fixed::{div_round, round_shift};
use super::line_buffer::{IntKernel, LineBuffer};
use super::pipeline::{image_rows, run_pipeline, rows_to_image, PipelineRun, Row, Stage, StageList};
use super::HwParams;
use crate::error::{Error, Result};
use crate::iris_code::{slice_value, IrisCode};
use crate::iris_segment::{pupil_from_mask, PupilCircle, SegmentParams, UnwrappedIris};
use crate::raster::{Border, GrayImage};
use crate::regions::Mask;

const KERNEL_FRAC: u32 = 16;
/// Fraction bits of positions and radii.
pub const POS_FRAC: u32 = 16;
const TRIG_FRAC: u32 = 29;

/// Channel layout of the rows leaving [`BitplaneStage`].
pub mod ch {
    pub const PLANES: usize = 0;
    pub const ENHANCED: usize = 1;
    pub const CODE_VALID: usize = 2;
    pub const UNWRAPPED: usize = 3;
    pub const UNWRAP_VALID: usize = 4;
    /// `[cx, cy, r, radial scale]` in Q16.16, then limbic row and fallback flag.
    pub const SIDEBAND: usize = 5;
}

struct ResidualRow {
    x: Vec<i64>,
    h: Vec<i64>,
}

/// Pixels strictly darker than their Gaussian surround, by exact integer
/// comparison. Emits `[eye, dark]`.
pub struct ResidualStage {
    kernel: IntKernel,
    buf: LineBuffer<ResidualRow>,
}

impl ResidualStage {
    pub fn new(params: &SegmentParams) -> Self {
        let kernel = IntKernel::gaussian(params.pupil_sigma, KERNEL_FRAC);
        Self {
            buf: LineBuffer::new(kernel.radius()),
            kernel,
        }
    }
}

fn residual_output(k: &IntKernel, j: usize, w: &[&ResidualRow]) -> Row {
    let blurred = k.filter_window(&w.iter().map(|r| &r.h).collect::<Vec<_>>());
    let centre = w[w.len() / 2];
    let dark = centre
        .x
        .iter()
        .zip(&blurred)
        .map(|(&x, &b)| i32::from((x << (2 * KERNEL_FRAC)) < b))
        .collect();
    Row::new(j, vec![centre.x.iter().map(|&v| v as i32).collect(), dark])
}

impl Stage for ResidualStage {
    fn name(&self) -> &str {
        "dark-residual"
    }

    fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let x: Vec<i64> = row.channels[0].iter().map(|&v| i64::from(v)).collect();
        let h = self.kernel.filter_row(&x, Border::Replicate);
        let k = &self.kernel;
        self.buf.push(ResidualRow { x, h }, |j, w| emit(residual_output(k, j, w)));
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let k = &self.kernel;
        self.buf.finish(|j, w| emit(residual_output(k, j, w)));
        Ok(())
    }
}

/// Pupil circle in Q16.16.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedPupil {
    pub cx: i64,
    pub cy: i64,
    pub r: i64,
}

impl FixedPupil {
    pub fn quantize(p: &PupilCircle) -> Self {
        let q = |v: f64| (v * f64::from(1u32 << POS_FRAC)).round() as i64;
        Self {
            cx: q(p.cx),
            cy: q(p.cy),
            r: q(p.radius),
        }
    }

    pub fn to_circle(self) -> PupilCircle {
        let f = |v: i64| v as f64 / f64::from(1u32 << POS_FRAC);
        PupilCircle {
            cx: f(self.cx),
            cy: f(self.cy),
            radius: f(self.r),
        }
    }
}

/// Bilinear sample at Q16.16 coordinates; `None` outside the image.
pub fn bilinear_fixed(img: &GrayImage, x: i64, y: i64) -> Option<u8> {
    let one = 1i64 << POS_FRAC;
    let (w, h) = (img.width() as i64, img.height() as i64);
    if x < 0 || y < 0 || x > (w - 1) * one || y > (h - 1) * one {
        return None;
    }
    let (x0, y0) = (x >> POS_FRAC, y >> POS_FRAC);
    let (fx, fy) = (x & (one - 1), y & (one - 1));
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let p = |xx: i64, yy: i64| i64::from(img.get(xx as usize, yy as usize));
    let top = p(x0, y0) * (one - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (one - fx) + p(x1, y1) * fx;
    let v = top * (one - fy) + bottom * fy;
    Some(round_shift(v, 2 * POS_FRAC).clamp(0, 255) as u8)
}

/// Radial step in Q16.16 so the last ring reaches `min(multiple * r, edge)`.
pub fn radial_scale_fixed(eye: &GrayImage, p: FixedPupil, rows: usize, outer_multiple: f64) -> Result<i64> {
    let one = 1i64 << POS_FRAC;
    let edge = p
        .cx
        .min(p.cy)
        .min((eye.width() as i64 - 1) * one - p.cx)
        .min((eye.height() as i64 - 1) * one - p.cy);
    let mult = (outer_multiple * one as f64).round() as i64;
    let outer = round_shift(mult * p.r, POS_FRAC).min(edge);
    if outer <= p.r {
        let c = p.to_circle();
        return Err(Error::UnwrapFailed(format!(
            "pupil (r = {:.1}) at ({:.1}, {:.1}) leaves no iris band inside the image",
            c.radius, c.cx, c.cy
        )));
    }
    Ok(div_round(outer - p.r, rows as i64))
}

/// Cosine / sine table for the angular columns (Q2.29).
pub fn trig_table(cols: usize) -> Vec<(i64, i64)> {
    let one = f64::from(1u32 << TRIG_FRAC);
    (0..cols)
        .map(|j| {
            let (s, c) = (j as f64 * TAU / cols as f64).sin_cos();
            ((c * one).round() as i64, (s * one).round() as i64)
        })
        .collect()
}

pub fn unwrap_fixed(eye: &GrayImage, p: FixedPupil, rows: usize, cols: usize, scale: i64) -> Result<UnwrappedIris> {
    if rows == 0 || cols == 0 || scale <= 0 {
        return Err(Error::UnwrapFailed("empty sampling grid".into()));
    }
    let trig = trig_table(cols);
    let point = |i: usize, j: usize| {
        let rho = p.r + i as i64 * scale;
        let (c, s) = trig[j];
        (p.cx + round_shift(rho * c, TRIG_FRAC), p.cy + round_shift(rho * s, TRIG_FRAC))
    };
    if let Some(j) = (0..cols).find(|&j| {
        let (x, y) = point(1, j);
        bilinear_fixed(eye, x, y).is_none()
    }) {
        let (x, y) = point(1, j);
        let f = |v: i64| v as f64 / f64::from(1u32 << POS_FRAC);
        return Err(Error::UnwrapFailed(format!(
            "innermost ring leaves the image near ({:.1}, {:.1})",
            f(x),
            f(y)
        )));
    }
    let mut values = vec![0u8; rows * cols];
    let mut valid = vec![false; rows * cols];
    for i in 1..=rows {
        for j in 0..cols {
            let (x, y) = point(i, j);
            if let Some(v) = bilinear_fixed(eye, x, y) {
                values[(i - 1) * cols + j] = v;
                valid[(i - 1) * cols + j] = true;
            }
        }
    }
    Ok(UnwrappedIris {
        rows,
        cols,
        values,
        valid,
        radial_scale: scale as f64 / f64::from(1u32 << POS_FRAC),
        limbic_row: None,
        limbic_fallback: false,
    })
}

/// Integer form of the limbic search: angular box smoothing, mean radial
/// difference per row pair in Q16.16, strongest positive step in
/// `[R/4, R-1]`, else `R` with the fallback flag.
pub fn find_limbic_fixed(u: &mut UnwrappedIris, smoothing: usize) -> usize {
    let (rows, cols) = (u.rows, u.cols);
    let half = smoothing as isize / 2;
    let mut smooth = vec![None::<i64>; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if !u.valid[r * cols + c] {
                continue;
            }
            let (mut acc, mut n) = (0i64, 0i64);
            for d in -half..=(smoothing as isize - 1 - half) {
                let cc = Border::Wrap.index(c as isize + d, cols);
                if u.valid[r * cols + cc] {
                    acc += i64::from(u.values[r * cols + cc]);
                    n += 1;
                }
            }
            smooth[r * cols + c] = Some(div_round(acc << POS_FRAC, n));
        }
    }
    let lo = (rows / 4).max(1);
    let mut best: Option<(usize, i64)> = None;
    for i in lo..rows {
        let (mut acc, mut n) = (0i64, 0i64);
        for c in 0..cols {
            if let (Some(a), Some(b)) = (smooth[(i - 1) * cols + c], smooth[i * cols + c]) {
                acc += b - a;
                n += 1;
            }
        }
        if n == 0 {
            continue;
        }
        let g = div_round(acc, n);
        if g > 0 && best.is_none_or(|(_, b)| g > b) {
            best = Some((i, g));
        }
    }
    let row = match best {
        Some((i, _)) => i,
        None => {
            log::warn!("no positive radial gradient; using the full unwrap");
            rows
        }
    };
    u.limbic_fallback = best.is_none();
    u.limbic_row = Some(row);
    row
}

/// Frame stage: opening, hole filling, labeling, pupil selection, fixed
/// unwrap and limbic search. Emits all `R` unwrapped rows as
/// `[values, valid, sideband]`.
pub struct SegmentStage {
    params: SegmentParams,
    eye: Vec<Row>,
}

impl SegmentStage {
    pub fn new(params: &SegmentParams) -> Self {
        Self {
            params: params.clone(),
            eye: Vec::new(),
        }
    }
}

impl Stage for SegmentStage {
    fn name(&self) -> &str {
        "segment-unwrap"
    }

    fn push(&mut self, row: Row, _emit: &mut dyn FnMut(Row)) -> Result<()> {
        self.eye.push(row);
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let rows = std::mem::take(&mut self.eye);
        let eye = rows_to_image(&rows, 0)?;
        if eye.width() < 64 || eye.height() < 64 {
            return Err(Error::InvalidImage(format!(
                "eye image {}x{} is smaller than 64x64",
                eye.width(),
                eye.height()
            )));
        }
        let mut mask = Mask::new(eye.width(), eye.height());
        for (b, v) in mask.bits.iter_mut().zip(rows.iter().flat_map(|r| r.channels[1].iter())) {
            *b = *v != 0;
        }
        let mask = mask.open().fill_holes();
        let pupil = FixedPupil::quantize(&pupil_from_mask(&eye, &mask, &self.params)?);
        let p = &self.params;
        let scale = radial_scale_fixed(&eye, pupil, p.radial_samples, p.outer_multiple)?;
        let mut u = unwrap_fixed(&eye, pupil, p.radial_samples, p.angular_samples, scale)?;
        let limbic = find_limbic_fixed(&mut u, p.limbic_smoothing);
        let side = vec![
            pupil.cx as i32,
            pupil.cy as i32,
            pupil.r as i32,
            scale as i32,
            limbic as i32,
            i32::from(u.limbic_fallback),
        ];
        for r in 0..u.rows {
            let span = r * u.cols..(r + 1) * u.cols;
            emit(Row::new(
                r,
                vec![
                    u.values[span.clone()].iter().map(|&v| i32::from(v)).collect(),
                    u.valid[span].iter().map(|&v| i32::from(v)).collect(),
                    side.clone(),
                ],
            ));
        }
        Ok(())
    }
}

/// Streams the rows above the limbic boundary through the fixed-point
/// enhancement; rows from the boundary outward leave as invalid padding.
/// Emits `[enhanced, code valid, unwrapped, unwrap valid, sideband]`.
pub struct EnhanceStage {
    sigma1: f64,
    estimator: ContrastEstimator,
    stream: Option<EnhanceStream>,
    limbic: Option<usize>,
    held: Vec<Row>,
    next_out: usize,
}

impl EnhanceStage {
    pub fn new(sigma1: f64, estimator: ContrastEstimator) -> Self {
        Self {
            sigma1,
            estimator,
            stream: None,
            limbic: None,
            held: Vec::new(),
            next_out: 0,
        }
    }

    fn emit_enhanced(&mut self, done: Vec<(Vec<u8>, Vec<bool>)>, emit: &mut dyn FnMut(Row)) {
        for (values, valid) in done {
            let src = &self.held[self.next_out];
            emit(Row::new(
                self.next_out,
                vec![
                    values.iter().map(|&v| i32::from(v)).collect(),
                    valid.iter().map(|&v| i32::from(v)).collect(),
                    src.channels[0].clone(),
                    src.channels[1].clone(),
                    src.channels[2].clone(),
                ],
            ));
            self.next_out += 1;
        }
    }

    fn close(&mut self, emit: &mut dyn FnMut(Row)) {
        if let Some(mut s) = self.stream.take() {
            let done = s.finish();
            self.emit_enhanced(done, emit);
        }
    }
}

fn padding_row(row: &Row) -> Row {
    let cols = row.channels[0].len();
    Row::new(
        row.y,
        vec![
            vec![0; cols],
            vec![0; cols],
            row.channels[0].clone(),
            row.channels[1].clone(),
            row.channels[2].clone(),
        ],
    )
}

impl Stage for EnhanceStage {
    fn name(&self) -> &str {
        "enhance"
    }

    fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let limbic = *self.limbic.get_or_insert(row.channels[2][4] as usize);
        if row.y >= limbic {
            self.close(emit);
            emit(padding_row(&row));
            return Ok(());
        }
        let stream = self
            .stream
            .get_or_insert_with(|| EnhanceStream::new(self.sigma1, self.estimator));
        let values: Vec<u8> = row.channels[0].iter().map(|&v| v as u8).collect();
        let valid: Vec<bool> = row.channels[1].iter().map(|&v| v != 0).collect();
        let done = stream.push(&values, &valid);
        self.held.push(row);
        self.emit_enhanced(done, emit);
        Ok(())
    }

    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
        self.close(emit);
        Ok(())
    }
}

/// Planes 1..=6 of each enhanced sample, prepended as a new channel.
#[derive(Default)]
pub struct BitplaneStage;

impl Stage for BitplaneStage {
    fn name(&self) -> &str {
        "bitplane"
    }

    fn push(&mut self, mut row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        let planes = row.channels[0].iter().map(|&v| i32::from(slice_value(v as u8))).collect();
        row.channels.insert(ch::PLANES, planes);
        emit(row);
        Ok(())
    }

    fn finish(&mut self, _emit: &mut dyn FnMut(Row)) -> Result<()> {
        Ok(())
    }
}

pub fn iris_stages(params: &SegmentParams, sigma1: f64, hw: &HwParams) -> StageList {
    vec![
        Box::new(ResidualStage::new(params)),
        Box::new(SegmentStage::new(params)),
        Box::new(EnhanceStage::new(sigma1, hw.contrast)),
        Box::new(BitplaneStage),
    ]
}

#[derive(Clone, Debug)]
pub struct HwIris {
    pub pupil: PupilCircle,
    pub unwrapped: UnwrappedIris,
    /// Enhanced samples above the limbic row; padding rows are zero.
    pub enhanced: GrayImage,
    pub code: IrisCode,
    pub run: PipelineRun,
}

pub fn hw_iris(eye: &GrayImage, params: &SegmentParams, sigma1: f64, hw: &HwParams) -> Result<HwIris> {
    let run = run_pipeline(iris_stages(params, sigma1, hw), image_rows(eye), hw.exec, hw.queue_rows)?;
    let first = run
        .rows
        .first()
        .ok_or_else(|| Error::Pipeline("iris chain produced no rows".into()))?;
    let side = &first.channels[ch::SIDEBAND];
    let pupil = FixedPupil {
        cx: i64::from(side[0]),
        cy: i64::from(side[1]),
        r: i64::from(side[2]),
    };
    let (rows, cols) = (run.rows.len(), first.channels[ch::PLANES].len());
    let flat = |c: usize| -> Vec<i32> { run.rows.iter().flat_map(|r| r.channels[c].iter().copied()).collect() };
    let unwrapped = UnwrappedIris {
        rows,
        cols,
        values: flat(ch::UNWRAPPED).into_iter().map(|v| v as u8).collect(),
        valid: flat(ch::UNWRAP_VALID).into_iter().map(|v| v != 0).collect(),
        radial_scale: f64::from(side[3]) / f64::from(1u32 << POS_FRAC),
        limbic_row: Some(side[4] as usize),
        limbic_fallback: side[5] != 0,
    };
    let code = IrisCode::new(
        rows,
        cols,
        flat(ch::PLANES).into_iter().map(|v| v as u8).collect(),
        flat(ch::CODE_VALID).into_iter().map(|v| v != 0).collect(),
    )?;
    Ok(HwIris {
        pupil: pupil.to_circle(),
        unwrapped,
        enhanced: rows_to_image(&run.rows, ch::ENHANCED)?,
        code,
        run,
    })
}
