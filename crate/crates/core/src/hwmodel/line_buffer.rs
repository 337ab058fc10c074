//! Line buffers and integer convolution kernels for streamed rows.

use std::collections::VecDeque;

use super::fixed::round_shift;
use crate::raster::{Border, Kernel1D};

/// Integer kernel whose taps sum to exactly `2^frac`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntKernel {
    pub taps: Vec<i64>,
    pub frac: u32,
}

impl IntKernel {
    /// Rounds each tap and moves the residual into the centre tap, so a
    /// constant input passes through unchanged.
    pub fn quantize(kernel: &Kernel1D, frac: u32) -> Self {
        let one = 1i64 << frac;
        let mut taps: Vec<i64> = kernel.taps.iter().map(|t| (t * one as f64).round() as i64).collect();
        let residual = one - taps.iter().sum::<i64>();
        let c = taps.len() / 2;
        taps[c] += residual;
        Self { taps, frac }
    }

    /// Rounds each tap without forcing a unit sum (derivative kernels).
    pub fn quantize_raw(kernel: &Kernel1D, frac: u32) -> Self {
        let one = (1i64 << frac) as f64;
        Self {
            taps: kernel.taps.iter().map(|t| (t * one).round() as i64).collect(),
            frac,
        }
    }

    pub fn gaussian(sigma: f64, frac: u32) -> Self {
        Self::quantize(&Kernel1D::gaussian(sigma), frac)
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    /// Horizontal correlation of one row; sums are left unshifted.
    pub fn filter_row(&self, row: &[i64], border: Border) -> Vec<i64> {
        let w = row.len();
        let r = self.radius() as isize;
        (0..w as isize)
            .map(|x| {
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| t * row[border.index(x + k as isize - r, w)])
                    .sum()
            })
            .collect()
    }

    /// Vertical correlation across a window of `2r + 1` rows.
    pub fn filter_window(&self, window: &[&Vec<i64>]) -> Vec<i64> {
        debug_assert_eq!(window.len(), self.taps.len());
        let w = window[0].len();
        let mut out = vec![0i64; w];
        for (&t, row) in self.taps.iter().zip(window) {
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o += t * v;
            }
        }
        out
    }

    /// [`Self::filter_window`] followed by a rounding shift of `frac` bits.
    pub fn filter_window_shifted(&self, window: &[&Vec<i64>]) -> Vec<i64> {
        let mut out = self.filter_window(window);
        out.iter_mut().for_each(|v| *v = round_shift(*v, self.frac));
        out
    }
}

/// Holds the most recent rows of a stream and hands out, for each centre
/// row, the `2r + 1` rows a dense vertical operator would read, with
/// replicated top and bottom borders.
#[derive(Debug)]
pub struct LineBuffer<R> {
    radius: usize,
    rows: VecDeque<R>,
    /// Stream index of `rows[0]`.
    base: usize,
    received: usize,
    next: usize,
}

impl<R> LineBuffer<R> {
    pub fn new(radius: usize) -> Self {
        Self {
            radius,
            rows: VecDeque::with_capacity(2 * radius + 2),
            base: 0,
            received: 0,
            next: 0,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Rows currently stored; never exceeds `2r + 1`.
    pub fn occupancy(&self) -> usize {
        self.rows.len()
    }

    fn emit_ready(&mut self, height: Option<usize>, f: &mut impl FnMut(usize, &[&R])) {
        loop {
            let j = self.next;
            let ready = match height {
                Some(h) => j < h,
                None => j + self.radius < self.received,
            };
            if !ready {
                break;
            }
            let last = self.received - 1;
            let window: Vec<&R> = (0..=2 * self.radius)
                .map(|k| {
                    let src = (j + k).saturating_sub(self.radius).min(last);
                    &self.rows[src - self.base]
                })
                .collect();
            f(j, &window);
            self.next += 1;
            // rows above the next window's top edge are no longer needed
            while self.base + self.radius < self.next && self.base < last {
                self.rows.pop_front();
                self.base += 1;
            }
        }
    }

    /// Accepts the next row and calls `f(centre, window)` for every row
    /// whose window is now complete.
    pub fn push(&mut self, row: R, mut f: impl FnMut(usize, &[&R])) {
        self.rows.push_back(row);
        self.received += 1;
        self.emit_ready(None, &mut f);
    }

    /// End of stream: flushes the remaining rows with the bottom border
    /// replicated.
    pub fn finish(&mut self, mut f: impl FnMut(usize, &[&R])) {
        if self.received == 0 {
            return;
        }
        let h = self.received;
        self.emit_ready(Some(h), &mut f);
    }
}
