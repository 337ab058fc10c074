//! Ridge-map thinning and crossing-number minutiae extraction.
//!
//! Binary images at this module's boundary use the inverted convention of
//! the binarizer: `0` is ridge, `1` is background. Internally everything is
//! flipped so ridge pixels are `true`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_enhance::OrientationField;
use crate::raster::GrayImage;

pub const DEFAULT_BORDER_MARGIN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MinutiaKind {
    Termination,
    Bifurcation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minutia {
    pub x: u32,
    pub y: u32,
    /// Ridge orientation, radians in [0, pi).
    pub angle: f64,
    pub kind: MinutiaKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MinutiaeSet {
    pub minutiae: Vec<Minutia>,
    pub width: u32,
    pub height: u32,
}

impl MinutiaeSet {
    pub fn new(minutiae: Vec<Minutia>, width: u32, height: u32) -> Self {
        Self {
            minutiae,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }
}

/// Neighbour offsets in cyclic order starting north, clockwise:
/// P2 (N), P3 (NE), P4 (E), P5 (SE), P6 (S), P7 (SW), P8 (W), P9 (NW).
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

struct RidgeMap {
    w: usize,
    h: usize,
    ridge: Vec<bool>,
}

impl RidgeMap {
    fn from_binary(img: &GrayImage) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            ridge: img.pixels().iter().map(|&p| p == 0).collect(),
        }
    }

    fn to_binary(&self) -> GrayImage {
        GrayImage::new(self.w, self.h, self.ridge.iter().map(|&r| u8::from(!r)).collect())
            .expect("dimensions preserved")
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.w
            && (y as usize) < self.h
            && self.ridge[y as usize * self.w + x as usize]
    }

    /// The 8 neighbours as a bit pattern, bit k = RING[k].
    #[inline]
    fn pattern(&self, x: usize, y: usize) -> u8 {
        let mut bits = 0u8;
        for (k, (dx, dy)) in RING.iter().enumerate() {
            if self.at(x as isize + dx, y as isize + dy) {
                bits |= 1 << k;
            }
        }
        bits
    }
}

#[inline]
fn bit(pattern: u8, k: usize) -> bool {
    pattern & (1 << (k % 8)) != 0
}

/// Crossing number of a neighbourhood pattern: half the number of value
/// changes walking once around the ring.
#[inline]
pub fn crossing_number_of_pattern(pattern: u8) -> u8 {
    let changes: u32 = (0..8)
        .map(|k| u32::from(bit(pattern, k) != bit(pattern, k + 1)))
        .sum();
    (changes / 2) as u8
}

/// Yokoi 8-connectivity number; 1 means removing the centre pixel
/// preserves local 8-connectivity.
#[inline]
fn connectivity_number(pattern: u8) -> i32 {
    // complement values, indexed from east going counter-clockwise:
    // E, NE, N, NW, W, SW, S, SE
    let ring_index = [2usize, 1, 0, 7, 6, 5, 4, 3];
    let c = |i: usize| i32::from(!bit(pattern, ring_index[i % 8]));
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| c(k) - c(k) * c(k + 1) * c(k + 2))
        .sum()
}

#[inline]
fn is_deletable(pattern: u8) -> bool {
    let b = pattern.count_ones();
    b >= 2 && connectivity_number(pattern) == 1
}

fn zhang_suen_subpass(map: &mut RidgeMap, first: bool) -> bool {
    let (w, h) = (map.w, map.h);
    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !map.ridge[y * w + x] {
                continue;
            }
            let p = map.pattern(x, y);
            let b = p.count_ones();
            if !(2..=6).contains(&b) || crossing_number_of_pattern(p) != 1 {
                continue;
            }
            let (p2, p4, p6, p8) = (bit(p, 0), bit(p, 2), bit(p, 4), bit(p, 6));
            let ok = if first {
                !(p2 && p4 && p6) && !(p4 && p6 && p8)
            } else {
                !(p2 && p4 && p8) && !(p2 && p6 && p8)
            };
            if ok {
                candidates.push((x, y));
            }
        }
    }
    // Deleting every flagged pixel at once can erase small components
    // (a 2x2 block vanishes entirely), so each deletion is re-checked
    // against the partially updated map.
    let mut changed = false;
    for (x, y) in candidates {
        if is_deletable(map.pattern(x, y)) {
            map.ridge[y * w + x] = false;
            changed = true;
        }
    }
    changed
}

/// Removes staircase corners left on diagonal runs: simple pixels whose
/// ridge neighbours form two runs joined through a corner.
fn staircase_pass(map: &mut RidgeMap) -> bool {
    let mut changed = false;
    for y in 0..map.h {
        for x in 0..map.w {
            if !map.ridge[y * map.w + x] {
                continue;
            }
            let p = map.pattern(x, y);
            if crossing_number_of_pattern(p) == 2 && is_deletable(p) {
                map.ridge[y * map.w + x] = false;
                changed = true;
            }
        }
    }
    changed
}

/// Zhang-Suen thinning with per-pixel topology re-checks. Input and output
/// use ridge = 0, background = 1.
pub fn thin(binary: &GrayImage) -> GrayImage {
    let mut map = RidgeMap::from_binary(binary);
    loop {
        let mut any = false;
        loop {
            let a = zhang_suen_subpass(&mut map, true);
            let b = zhang_suen_subpass(&mut map, false);
            if !(a || b) {
                break;
            }
            any = true;
        }
        if staircase_pass(&mut map) {
            any = true;
        }
        if !any {
            break;
        }
    }
    map.to_binary()
}

/// Crossing number at `(x, y)` of a skeleton in ridge = 0 convention.
pub fn crossing_number(skeleton: &GrayImage, x: usize, y: usize) -> Result<u8> {
    if x == 0 || y == 0 || x + 1 >= skeleton.width() || y + 1 >= skeleton.height() {
        return Err(Error::FramePixel { x, y });
    }
    let map = RidgeMap::from_binary(skeleton);
    Ok(crossing_number_of_pattern(map.pattern(x, y)))
}

fn touches_edge(map: &RidgeMap, x: usize, y: usize, margin: usize) -> bool {
    const DIRS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, -1), (0, 1)];
    DIRS.iter().any(|&(dx, dy)| {
        for step in 1..=margin as isize {
            let (px, py) = (x as isize + dx * step, y as isize + dy * step);
            if px < 0 || py < 0 || px as usize >= map.w || py as usize >= map.h {
                return true;
            }
            if map.at(px, py) {
                return false;
            }
        }
        false
    })
}

pub fn extract_minutiae(skeleton: &GrayImage, field: &OrientationField, border_margin: usize) -> MinutiaeSet {
    let map = RidgeMap::from_binary(skeleton);
    let (w, h) = (map.w, map.h);
    let mut minutiae = Vec::new();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if !map.ridge[y * w + x] {
                continue;
            }
            let kind = match crossing_number_of_pattern(map.pattern(x, y)) {
                1 => MinutiaKind::Termination,
                3 => MinutiaKind::Bifurcation,
                _ => continue,
            };
            if touches_edge(&map, x, y, border_margin) {
                continue;
            }
            minutiae.push(Minutia {
                x: x as u32,
                y: y as u32,
                angle: field.theta_at(x, y),
                kind,
            });
        }
    }
    MinutiaeSet::new(minutiae, w as u32, h as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_ascii(rows: &[&str]) -> GrayImage {
        let h = rows.len();
        let w = rows[0].len();
        GrayImage::from_fn(w, h, |x, y| u8::from(rows[y].as_bytes()[x] != b'#'))
    }

    #[test]
    fn all_background_is_a_fixpoint() {
        let img = GrayImage::filled(10, 8, 1);
        assert_eq!(thin(&img), img);
    }

    #[test]
    fn isolated_pixel_survives() {
        let img = from_ascii(&[".....", "..#..", "....."]);
        assert_eq!(thin(&img), img);
    }

    #[test]
    fn two_by_two_block_keeps_a_pixel() {
        let img = from_ascii(&["....", ".##.", ".##.", "...."]);
        let t = thin(&img);
        assert!(t.pixels().contains(&0));
    }

    #[test]
    fn crossing_number_cases() {
        let end = from_ascii(&[".....", ".##..", "....."]);
        assert_eq!(crossing_number(&end, 1, 1).unwrap(), 1);
        let line = from_ascii(&[".....", "#####", "....."]);
        assert_eq!(crossing_number(&line, 2, 1).unwrap(), 2);
        let y = from_ascii(&["#...#", ".#.#.", "..#..", "..#..", "..#.."]);
        assert_eq!(crossing_number(&y, 2, 2).unwrap(), 3);
        assert!(matches!(crossing_number(&y, 0, 2), Err(Error::FramePixel { .. })));
    }

    #[test]
    fn connectivity_number_basics() {
        // isolated: 0 components of background breaks -> Yokoi gives 0
        assert_eq!(connectivity_number(0), 0);
        // N and S opposite: removing centre splits the line
        assert_eq!(connectivity_number(0b0001_0001), 2);
        // N and E (staircase corner): simple
        assert_eq!(connectivity_number(0b0000_0101), 1);
    }

    #[test]
    fn full_width_line_yields_nothing() {
        let mut rows = vec![".".repeat(40); 21];
        rows[10] = "#".repeat(40);
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let skel = from_ascii(&refs);
        let field = OrientationField::uniform(40, 21, 0.0);
        assert!(extract_minutiae(&skel, &field, 12).is_empty());
    }

    #[test]
    fn empty_skeleton_yields_nothing() {
        let field = OrientationField::uniform(20, 20, 0.0);
        assert!(extract_minutiae(&GrayImage::filled(20, 20, 1), &field, 12).is_empty());
    }
}
