//! Binary morphology, hole filling, 8-connected component labeling and
//! region properties.

use std::collections::VecDeque;

use crate::raster::GrayImage;

/// Boolean mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> bool {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn window_op(&self, all: bool) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = all;
                'win: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let v = self.get_clamped(x as isize + dx, y as isize + dy);
                        if all && !v {
                            acc = false;
                            break 'win;
                        }
                        if !all && v {
                            acc = true;
                            break 'win;
                        }
                    }
                }
                out.bits[y * self.width + x] = acc;
            }
        }
        out
    }

    /// 3x3 square erosion, replicate borders.
    pub fn erode(&self) -> Mask {
        self.window_op(true)
    }

    /// 3x3 square dilation, replicate borders.
    pub fn dilate(&self) -> Mask {
        self.window_op(false)
    }

    pub fn open(&self) -> Mask {
        self.erode().dilate()
    }

    /// Sets every background pixel not 4-connected to the image border.
    pub fn fill_holes(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        let mut outside = vec![false; w * h];
        let mut queue = VecDeque::new();
        let seed = |x: usize, y: usize, outside: &mut Vec<bool>, q: &mut VecDeque<(usize, usize)>| {
            let i = y * w + x;
            if !self.bits[i] && !outside[i] {
                outside[i] = true;
                q.push_back((x, y));
            }
        };
        for x in 0..w {
            seed(x, 0, &mut outside, &mut queue);
            seed(x, h - 1, &mut outside, &mut queue);
        }
        for y in 0..h {
            seed(0, y, &mut outside, &mut queue);
            seed(w - 1, y, &mut outside, &mut queue);
        }
        while let Some((x, y)) = queue.pop_front() {
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                seed(nx as usize, ny as usize, &mut outside, &mut queue);
            }
        }
        Mask {
            width: w,
            height: h,
            bits: outside.iter().map(|&o| !o).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub label: u32,
    pub area: usize,
    pub centroid: (f64, f64),
    /// Central second moments (mu20, mu11, mu02), normalized by area.
    pub moments: (f64, f64, f64),
    pub eccentricity: f64,
    pub equivalent_radius: f64,
    pub mean_intensity: f64,
}

/// Labels 8-connected components; label 0 is background, components are
/// numbered from 1 in raster order of their first pixel.
pub fn label_components(mask: &Mask) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Eccentricity of the moment ellipse, `sqrt(1 - l_min / l_max)`.
pub fn eccentricity(mu20: f64, mu11: f64, mu02: f64) -> f64 {
    let common = ((mu20 - mu02).powi(2) + 4.0 * mu11 * mu11).sqrt();
    let l_max = 0.5 * (mu20 + mu02 + common);
    let l_min = 0.5 * (mu20 + mu02 - common);
    if l_max <= 0.0 {
        return 0.0;
    }
    (1.0 - (l_min / l_max).max(0.0)).sqrt().clamp(0.0, 1.0)
}

pub fn region_properties(labels: &[u32], count: u32, width: usize, intensity: &GrayImage) -> Vec<Region> {
    let n = count as usize;
    let mut area = vec![0usize; n];
    let mut sx = vec![0f64; n];
    let mut sy = vec![0f64; n];
    let mut sum_i = vec![0f64; n];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let k = l as usize - 1;
        area[k] += 1;
        sx[k] += (i % width) as f64;
        sy[k] += (i / width) as f64;
        sum_i[k] += f64::from(intensity.pixels()[i]);
    }
    let centroids: Vec<(f64, f64)> = (0..n)
        .map(|k| (sx[k] / area[k] as f64, sy[k] / area[k] as f64))
        .collect();
    let mut mom = vec![(0f64, 0f64, 0f64); n];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let k = l as usize - 1;
        let dx = (i % width) as f64 - centroids[k].0;
        let dy = (i / width) as f64 - centroids[k].1;
        mom[k].0 += dx * dx;
        mom[k].1 += dx * dy;
        mom[k].2 += dy * dy;
    }
    (0..n)
        .map(|k| {
            let a = area[k] as f64;
            // pixel-square variance (1/12) keeps single pixels well-defined
            let moments = (mom[k].0 / a + 1.0 / 12.0, mom[k].1 / a, mom[k].2 / a + 1.0 / 12.0);
            Region {
                label: k as u32 + 1,
                area: area[k],
                centroid: centroids[k],
                moments,
                eccentricity: eccentricity(moments.0, moments.1, moments.2),
                equivalent_radius: (a / std::f64::consts::PI).sqrt(),
                mean_intensity: sum_i[k] / a,
            }
        })
        .collect()
}
