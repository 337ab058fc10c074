//! Image files, dataset layout and the binary template format.
//!
//! Template layout (little-endian), format version 1:
//!
//! ```text
//! "MBIO"                          magic
//! u16                             format version
//! u16 + bytes                     subject id, UTF-8
//! u16, u16                        fingerprint source width, height
//! u16                             minutiae count
//!   u16 x, u16 y, u16 angle (centidegrees), u8 kind    per minutia
//! u32                             iris code rows (M samples)
//! u16                             angular columns of the code layout
//!   u8                            per sample: bits 0..=5 planes 1..=6,
//!                                 bit 6 validity, bit 7 zero
//! u32                             CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::fp_minutiae::{Minutia, MinutiaKind, MinutiaeSet};
use crate::iris_code::IrisCode;
use crate::raster::GrayImage;

pub const TEMPLATE_MAGIC: &[u8; 4] = b"MBIO";
pub const TEMPLATE_VERSION: u16 = 1;
const VALID_BIT: u8 = 1 << 6;

/// BT.601 luma with round-half-up, in exact integer arithmetic.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8
}

fn pgm_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

pub fn decode_pgm(data: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 0;
    if pgm_token(data, &mut pos) != Some(b"P5") {
        return Err("not a binary PGM".into());
    }
    let mut number = |what: &str| -> std::result::Result<usize, String> {
        let tok = pgm_token(data, &mut pos).ok_or_else(|| format!("missing {what}"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what}"))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} (only 255 is supported)"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width.checked_mul(height).ok_or("dimensions overflow")?;
    if width == 0 || height == 0 {
        return Err(format!("zero dimension {width}x{height}"));
    }
    let raster = data.get(pos..pos + n).ok_or("truncated raster")?;
    GrayImage::new(width, height, raster.to_vec()).map_err(|e| e.to_string())
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

fn decode_png(data: &[u8]) -> std::result::Result<GrayImage, String> {
    let img = image::load_from_memory_with_format(data, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<u8> = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw(),
        image::DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0]).collect(),
        image::DynamicImage::ImageRgb8(b) => b.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        image::DynamicImage::ImageRgba8(b) => b.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        other => return Err(format!("{:?} PNG (only 8-bit channels are supported)", other.color())),
    };
    GrayImage::new(w, h, pixels).map_err(|e| e.to_string())
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let unsupported = |reason: String| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason,
    };
    if data.starts_with(b"P5") {
        decode_pgm(&data).map_err(unsupported)
    } else if data.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(&data).map_err(unsupported)
    } else {
        Err(unsupported("expected P5 PGM or PNG".into()))
    }
}

pub fn save_gray(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubjectEntry {
    pub id: String,
    pub fingerprints: Vec<PathBuf>,
    pub irises: Vec<PathBuf>,
}

/// `<root>/<subject-id>/fp_<k>.pgm` and `<root>/<subject-id>/iris_<k>.pgm`
/// (`.png` also accepted), subjects sorted by id, samples by `k`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub subjects: Vec<SubjectEntry>,
}

fn sample_index(name: &str, prefix: &str) -> Option<u32> {
    let stem = name.strip_prefix(prefix)?;
    let (k, ext) = stem.split_once('.')?;
    matches!(ext, "pgm" | "png").then_some(())?;
    k.parse().ok()
}

impl DatasetIndex {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut subjects = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if !entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
                continue;
            }
            let id = entry
                .file_name()
                .into_string()
                .map_err(|n| Error::Dataset(format!("subject directory {n:?} is not UTF-8")))?;
            let mut fps = Vec::new();
            let mut irises = Vec::new();
            for f in fs::read_dir(entry.path()).map_err(|e| Error::io(entry.path(), e))? {
                let f = f.map_err(|e| Error::io(entry.path(), e))?;
                let name = f.file_name().to_string_lossy().into_owned();
                if let Some(k) = sample_index(&name, "fp_") {
                    fps.push((k, f.path()));
                } else if let Some(k) = sample_index(&name, "iris_") {
                    irises.push((k, f.path()));
                }
            }
            fps.sort();
            irises.sort();
            subjects.push(SubjectEntry {
                id,
                fingerprints: fps.into_iter().map(|(_, p)| p).collect(),
                irises: irises.into_iter().map(|(_, p)| p).collect(),
            });
        }
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { subjects })
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectEntry> {
        self.subjects.iter().find(|s| s.id == id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateRecord {
    pub subject_id: String,
    pub fingerprint: MinutiaeSet,
    pub iris: IrisCode,
    /// Seconds since the Unix epoch. Not part of the byte layout: filled
    /// from the file's modification time when read back.
    pub created_at: Option<u64>,
}

/// Centidegree quantization used by the template layout.
pub fn quantize_angle(angle: f64) -> u16 {
    ((angle.to_degrees() * 100.0).round() as i64).rem_euclid(18_000) as u16
}

pub fn dequantize_angle(centideg: u16) -> f64 {
    (f64::from(centideg) / 100.0).to_radians()
}

fn u16_field(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::TemplateInvalid(format!("{what} {v} exceeds u16")))
}

pub fn encode_template(record: &TemplateRecord) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(TEMPLATE_MAGIC);
    out.extend_from_slice(&TEMPLATE_VERSION.to_le_bytes());
    let id = record.subject_id.as_bytes();
    out.extend_from_slice(&u16_field(id.len(), "subject id length")?.to_le_bytes());
    out.extend_from_slice(id);
    let fp = &record.fingerprint;
    out.extend_from_slice(&u16_field(fp.width as usize, "fingerprint width")?.to_le_bytes());
    out.extend_from_slice(&u16_field(fp.height as usize, "fingerprint height")?.to_le_bytes());
    out.extend_from_slice(&u16_field(fp.len(), "minutiae count")?.to_le_bytes());
    for m in &fp.minutiae {
        out.extend_from_slice(&u16_field(m.x as usize, "minutia x")?.to_le_bytes());
        out.extend_from_slice(&u16_field(m.y as usize, "minutia y")?.to_le_bytes());
        out.extend_from_slice(&quantize_angle(m.angle).to_le_bytes());
        out.push(match m.kind {
            MinutiaKind::Termination => 0,
            MinutiaKind::Bifurcation => 1,
        });
    }
    let iris = &record.iris;
    let m = u32::try_from(iris.len()).map_err(|_| Error::TemplateInvalid("iris code too long".into()))?;
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&u16_field(iris.cols, "iris columns")?.to_le_bytes());
    for (&p, &valid) in iris.planes.iter().zip(&iris.mask) {
        out.push(p | if valid { VALID_BIT } else { 0 });
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let s = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or(Error::TemplateTruncated(what))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_template(data: &[u8]) -> Result<TemplateRecord> {
    if data.len() < 4 || &data[..4] != TEMPLATE_MAGIC {
        return Err(Error::TemplateInvalid("bad magic".into()));
    }
    if data.len() < 10 {
        return Err(Error::TemplateTruncated("header"));
    }
    let mut r = Reader { data, pos: 4 };
    let version = r.u16("version")?;
    if version != TEMPLATE_VERSION {
        return Err(Error::TemplateVersion {
            found: version,
            expected: TEMPLATE_VERSION,
        });
    }
    let body = &data[..data.len() - 4];
    let stored = u32::from_le_bytes(data[data.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::TemplateChecksum { stored, computed });
    }
    let mut r = Reader { data: body, pos: r.pos };

    let id_len = r.u16("subject id length")? as usize;
    let subject_id = std::str::from_utf8(r.take(id_len, "subject id")?)
        .map_err(|_| Error::TemplateInvalid("subject id is not UTF-8".into()))?
        .to_owned();
    let width = u32::from(r.u16("fingerprint width")?);
    let height = u32::from(r.u16("fingerprint height")?);
    let count = r.u16("minutiae count")? as usize;
    let mut minutiae = Vec::with_capacity(count);
    for _ in 0..count {
        let x = u32::from(r.u16("minutia")?);
        let y = u32::from(r.u16("minutia")?);
        let angle = dequantize_angle(r.u16("minutia")?);
        let kind = match r.u8("minutia")? {
            0 => MinutiaKind::Termination,
            1 => MinutiaKind::Bifurcation,
            k => return Err(Error::TemplateInvalid(format!("unknown minutia kind {k}"))),
        };
        minutiae.push(Minutia { x, y, angle, kind });
    }
    let m = r.u32("iris rows")? as usize;
    let cols = r.u16("iris columns")? as usize;
    if cols == 0 || !m.is_multiple_of(cols) {
        return Err(Error::TemplateInvalid(format!("{m} samples do not fill {cols} columns")));
    }
    let samples = r.take(m, "iris samples")?;
    if samples.iter().any(|&b| b & 0x80 != 0) {
        return Err(Error::TemplateInvalid("reserved iris bit set".into()));
    }
    if r.pos != body.len() {
        return Err(Error::TemplateInvalid(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let iris = IrisCode::new(
        m / cols,
        cols,
        samples.iter().map(|&b| b & !VALID_BIT).collect(),
        samples.iter().map(|&b| b & VALID_BIT != 0).collect(),
    )?;
    Ok(TemplateRecord {
        subject_id,
        fingerprint: MinutiaeSet::new(minutiae, width, height),
        iris,
        created_at: None,
    })
}

pub fn write_template(record: &TemplateRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_template(record)?).map_err(|e| Error::io(path, e))
}

pub fn read_template(path: impl AsRef<Path>) -> Result<TemplateRecord> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut record = decode_template(&data)?;
    record.created_at = fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map(|d| d.as_secs());
    Ok(record)
}

pub fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
