//! Digit datasets: IDX and USPS text ingestion, bilinear resizing onto the
//! common 28×28 frame, and seeded mini-batch ordering.
//!
//! USPS text layout: one image per line, whitespace separated. The first
//! token is the label (0–9) and the next 256 tokens are the 16×16 pixels in
//! row-major order. Pixel values may be given in [0, 1], [0, 255] or [-1, 1];
//! the range is detected over the whole file. Lines in LIBSVM sparse form
//! (`label idx:value ...`, labels 1–10) are also accepted, with label `k`
//! mapped to digit `k - 1`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::math::Matrix;
use crate::rng::Rng;

pub const NUM_CLASSES: usize = 10;
pub const FRAME_SIDE: usize = 28;
pub const USPS_SIDE: usize = 16;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Matrix,
    labels: Vec<u8>,
    height: usize,
    width: usize,
    pub name: String,
    pub split: Split,
}

impl Dataset {
    /// Validates pixel range, label range and the image/label count.
    pub fn new(
        images: Matrix,
        labels: Vec<u8>,
        height: usize,
        width: usize,
        name: impl Into<String>,
        split: Split,
    ) -> Result<Self> {
        ensure!(
            images.rows() == labels.len(),
            Contract,
            "{} images but {} labels",
            images.rows(),
            labels.len()
        );
        ensure!(
            images.cols() == height * width,
            Contract,
            "image rows have {} pixels, expected {height}x{width}",
            images.cols()
        );
        ensure!(
            images.as_slice().iter().all(|p| (0.0..=1.0).contains(p)),
            Contract,
            "pixel values must lie in [0, 1]"
        );
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Contract(format!("label {bad} is not a digit class")));
        }
        Ok(Dataset {
            images,
            labels,
            height,
            width,
            name: name.into(),
            split,
        })
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            height: self.height,
            width: self.width,
            name: self.name.clone(),
            split: self.split,
        }
    }

    /// Bilinearly resizes every image to `side × side`.
    pub fn resized(&self, side: usize) -> Result<Dataset> {
        if self.height == side && self.width == side {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.len() * side * side);
        for i in 0..self.len() {
            let img = Matrix::from_vec(self.height, self.width, self.images.row(i).to_vec())?;
            data.extend(resize_bilinear(&img, side, side).into_vec());
        }
        Dataset::new(
            Matrix::from_vec(self.len(), side * side, data)?,
            self.labels.clone(),
            side,
            side,
            self.name.clone(),
            self.split,
        )
    }

    /// Mini-batch index lists for one epoch; see [`shuffle_batches`].
    pub fn shuffle_split(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
        shuffle_batches(self.len(), batch_size, rng)
    }

    /// Writes the dataset as an IDX image/label pair, quantizing pixels to bytes.
    pub fn write_idx(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        let mut img = Vec::with_capacity(16 + self.images.as_slice().len());
        for v in [
            IDX_IMAGES_MAGIC,
            self.len() as u32,
            self.height as u32,
            self.width as u32,
        ] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend(
            self.images
                .as_slice()
                .iter()
                .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
        let mut lab = Vec::with_capacity(8 + self.len());
        lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(self.len() as u32).to_be_bytes());
        lab.extend_from_slice(&self.labels);
        fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))
    }
}

/// A seeded permutation of `0..n` cut into consecutive batches; the last
/// batch keeps the remainder.
pub fn shuffle_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    ensure!(batch_size > 0, Config, "batch size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Bilinear interpolation with corner-aligned sampling: output pixel `(r, c)`
/// samples the input at `(r·(h−1)/(H−1), c·(w−1)/(W−1))`.
pub fn resize_bilinear(img: &Matrix, out_h: usize, out_w: usize) -> Matrix {
    let (in_h, in_w) = img.shape();
    let scale = |out: usize, inp: usize| {
        if out > 1 {
            (inp.saturating_sub(1)) as f64 / (out - 1) as f64
        } else {
            0.0
        }
    };
    let (sy, sx) = (scale(out_h, in_h), scale(out_w, in_w));
    Matrix::from_fn(out_h, out_w, |r, c| {
        let y = r as f64 * sy;
        let x = c as f64 * sx;
        let y0 = (y.floor() as usize).min(in_h - 1);
        let x0 = (x.floor() as usize).min(in_w - 1);
        let y1 = (y0 + 1).min(in_h - 1);
        let x1 = (x0 + 1).min(in_w - 1);
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
        let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
        (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0)
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

struct IdxReader<'a> {
    name: String,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> IdxReader<'a> {
    fn new(path: &Path, bytes: &'a [u8]) -> Self {
        IdxReader {
            name: path.display().to_string(),
            bytes,
            pos: 0,
        }
    }

    fn err(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::parse(&self.name, format!("byte offset {offset}"), msg)
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.err(self.pos, "truncated header"))?;
        self.pos = end;
        Ok(u32::from_be_bytes(slice.try_into().unwrap()))
    }

    fn expect_magic(&mut self, magic: u32) -> Result<()> {
        let found = self.u32()?;
        if found != magic {
            return Err(self.err(0, format!("magic {found:#010x}, expected {magic:#010x}")));
        }
        Ok(())
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(self.err(
                self.bytes.len(),
                format!(
                    "truncated payload: need {len} bytes from offset {}",
                    self.pos
                ),
            ));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

/// Parses a big-endian IDX image/label pair. Pixels are divided by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = read_file(images_path)?;
    let mut img = IdxReader::new(images_path, &img_bytes);
    img.expect_magic(IDX_IMAGES_MAGIC)?;
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;
    let pixels = img.payload(count * rows * cols)?;

    let lab_bytes = read_file(labels_path)?;
    let mut lab = IdxReader::new(labels_path, &lab_bytes);
    lab.expect_magic(IDX_LABELS_MAGIC)?;
    let label_count = lab.u32()? as usize;
    if label_count != count {
        return Err(lab.err(
            4,
            format!("label count {label_count} does not match image count {count}"),
        ));
    }
    let labels = lab.payload(count)?.to_vec();
    if let Some(pos) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(lab.err(8 + pos, format!("label {} out of range", labels[pos])));
    }

    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        Matrix::from_vec(count, rows * cols, data)?,
        labels,
        rows,
        cols,
        name,
        Split::Train,
    )
}

enum PixelRange {
    Unit,
    Byte,
    Symmetric,
}

/// Loads USPS digits from the text layout described in the module docs and
/// resizes them to 28×28.
pub fn load_usps(path: &Path, split: Split) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let pixels_per_image = USPS_SIDE * USPS_SIDE;
    let mut labels = Vec::new();
    let mut raw = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |msg: String| Error::parse(&name, format!("line {}", lineno + 1), msg);
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| at(format!("invalid label {label_tok:?}")))?;
        let rest: Vec<&str> = tokens.collect();
        let sparse = rest.first().is_some_and(|t| t.contains(':'));
        let mut pix = vec![0.0f64; pixels_per_image];
        let digit = if sparse {
            for tok in &rest {
                let (idx, val) = tok
                    .split_once(':')
                    .ok_or_else(|| at(format!("expected index:value, found {tok:?}")))?;
                let idx: usize = idx
                    .parse()
                    .map_err(|_| at(format!("invalid feature index {idx:?}")))?;
                ensure_index(idx, pixels_per_image).map_err(at)?;
                pix[idx - 1] = val
                    .parse()
                    .map_err(|_| at(format!("invalid pixel value {val:?}")))?;
            }
            label - 1.0
        } else {
            if rest.len() != pixels_per_image {
                return Err(at(format!(
                    "expected {pixels_per_image} pixel values, found {}",
                    rest.len()
                )));
            }
            for (p, tok) in pix.iter_mut().zip(&rest) {
                *p = tok
                    .parse()
                    .map_err(|_| at(format!("invalid pixel value {tok:?}")))?;
            }
            label
        };
        if digit.fract() != 0.0 || !(0.0..NUM_CLASSES as f64).contains(&digit) {
            return Err(at(format!("label {label_tok} out of range")));
        }
        if let Some(bad) = pix.iter().find(|p| !p.is_finite()) {
            return Err(at(format!("non-finite pixel value {bad}")));
        }
        labels.push(digit as u8);
        raw.extend(pix);
    }

    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if min < 0.0 {
        PixelRange::Symmetric
    } else if max > 1.0 {
        PixelRange::Byte
    } else {
        PixelRange::Unit
    };
    let (lo, hi) = match range {
        PixelRange::Unit => (0.0, 1.0),
        PixelRange::Byte => (0.0, 255.0),
        PixelRange::Symmetric => (-1.0, 1.0),
    };
    if min < lo || max > hi {
        return Err(Error::parse(
            &name,
            "whole file",
            format!("pixel values span [{min}, {max}], outside every supported range"),
        ));
    }
    raw.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));

    let n = labels.len();
    let ds = Dataset::new(
        Matrix::from_vec(n, pixels_per_image, raw)?,
        labels,
        USPS_SIDE,
        USPS_SIDE,
        "usps",
        split,
    )?;
    ds.resized(FRAME_SIDE)
}

fn ensure_index(idx: usize, len: usize) -> std::result::Result<(), String> {
    if idx == 0 || idx > len {
        Err(format!("feature index {idx} outside 1..={len}"))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, count, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn parses_tiny_idx() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_bytes(dir.path(), "i", &idx_images(1, 2, 2, &[0, 255, 128, 64]));
        let lab = write_bytes(dir.path(), "l", &idx_labels(&[7]));
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!((ds.height(), ds.width()), (2, 2));
        assert_eq!(ds.images().row(0), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(ds.labels(), &[7]);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_bytes(dir.path(), "i", &idx_images(2, 2, 2, &[0; 8]));
        let lab = write_bytes(dir.path(), "l", &idx_labels(&[1, 2]));
        // labels file in the images slot
        let err = load_idx(&lab, &lab).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("byte offset"));
        // truncated payload
        let short = write_bytes(dir.path(), "s", &idx_images(2, 2, 2, &[0; 5]));
        assert!(matches!(load_idx(&short, &lab), Err(Error::Parse { .. })));
        // count mismatch
        let lab1 = write_bytes(dir.path(), "l1", &idx_labels(&[1]));
        let err = load_idx(&img, &lab1).unwrap_err();
        assert!(err.to_string().contains("does not match"), "{err}");
        // truncated header
        let tiny = write_bytes(dir.path(), "t", &[0, 0, 8]);
        assert!(matches!(load_idx(&tiny, &lab), Err(Error::Parse { .. })));
        assert!(matches!(
            load_idx(&dir.path().join("missing"), &lab),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn idx_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..=255u8).chain(0..=255u8).take(3 * 4 * 5).collect();
        let img_bytes = idx_images(3, 4, 5, &pixels);
        let lab_bytes = idx_labels(&[0, 9, 4]);
        let img = write_bytes(dir.path(), "i", &img_bytes);
        let lab = write_bytes(dir.path(), "l", &lab_bytes);
        let ds = load_idx(&img, &lab).unwrap();
        let (img2, lab2) = (dir.path().join("i2"), dir.path().join("l2"));
        ds.write_idx(&img2, &lab2).unwrap();
        assert_eq!(fs::read(img2).unwrap(), img_bytes);
        assert_eq!(fs::read(lab2).unwrap(), lab_bytes);
    }

    fn usps_line(label: &str, value: &str) -> String {
        let mut s = label.to_string();
        for _ in 0..256 {
            s.push(' ');
            s.push_str(value);
        }
        s.push('\n');
        s
    }

    #[test]
    fn usps_constant_image_stays_constant() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.txt");
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(usps_line("3", "0.25").as_bytes()).unwrap();
        f.write_all(usps_line("5", "0.25").as_bytes()).unwrap();
        drop(f);
        let ds = load_usps(&p, Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.images().cols(), 784);
        assert!(ds
            .images()
            .as_slice()
            .iter()
            .all(|&v| (v - 0.25).abs() < 1e-15));
        assert_eq!(ds.labels(), &[3, 5]);
    }

    #[test]
    fn usps_symmetric_range_and_sparse_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.txt");
        let mut line = "10".to_string();
        for i in 1..=256 {
            line.push_str(&format!(" {i}:{}", if i % 2 == 0 { 1 } else { -1 }));
        }
        fs::write(&p, format!("{line}\n1 1:0.0\n")).unwrap();
        let ds = load_usps(&p, Split::Test).unwrap();
        assert_eq!(ds.labels(), &[9, 0]);
        let row = ds.images().row(1);
        assert!(row.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn usps_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.txt");
        fs::write(
            &p,
            format!("{}{}", usps_line("1", "0"), usps_line("12", "0")),
        )
        .unwrap();
        let err = load_usps(&p, Split::Train).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        fs::write(&p, "3 0.1 0.2\n").unwrap();
        let err = load_usps(&p, Split::Train).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        fs::write(&p, usps_line("3", "abc")).unwrap();
        assert!(load_usps(&p, Split::Train).is_err());
        fs::write(&p, usps_line("3", "300")).unwrap();
        assert!(load_usps(&p, Split::Train).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = Matrix::from_fn(28, 28, |r, c| ((r * 28 + c) % 256) as f64 / 255.0);
        assert_eq!(resize_bilinear(&img, 28, 28), img);
        let flat = Matrix::filled(16, 16, 0.375);
        let out = resize_bilinear(&flat, 28, 28);
        assert!(out.as_slice().iter().all(|&v| (v - 0.375).abs() < 1e-15));
    }

    #[test]
    fn resize_checkerboard_by_hand() {
        // samples at 0, 1/3, 2/3, 1 on each axis; f(u, v) = u + v - 2uv
        let img = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let out = resize_bilinear(&img, 4, 4);
        let t: f64 = 1.0 / 3.0;
        let pos = [0.0, t, 2.0 * t, 1.0];
        let expected: [[f64; 4]; 4] = [
            [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
            [1.0 / 3.0, 4.0 / 9.0, 5.0 / 9.0, 2.0 / 3.0],
            [2.0 / 3.0, 5.0 / 9.0, 4.0 / 9.0, 1.0 / 3.0],
            [1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                let (v, u) = (pos[r], pos[c]);
                assert!((expected[r][c] - (u + v - 2.0 * u * v)).abs() < 1e-15);
                assert!((out.get(r, c) - expected[r][c]).abs() < 1e-12, "({r},{c})");
            }
        }
    }

    #[test]
    fn shuffle_is_seeded_bijection() {
        let a = shuffle_batches(25, 10, &mut Rng::new(1)).unwrap();
        let b = shuffle_batches(25, 10, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(Vec::len).collect::<Vec<_>>(), vec![10, 10, 5]);
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..25).collect::<Vec<_>>());

        let mut rng = Rng::new(2);
        let e1 = shuffle_batches(50, 50, &mut rng).unwrap();
        let e2 = shuffle_batches(50, 50, &mut rng).unwrap();
        assert_ne!(e1, e2);
        assert!(shuffle_batches(5, 0, &mut rng).is_err());
    }

    #[test]
    fn dataset_validates() {
        assert!(Dataset::new(Matrix::zeros(2, 4), vec![1], 2, 2, "x", Split::Train).is_err());
        assert!(Dataset::new(Matrix::zeros(1, 4), vec![10], 2, 2, "x", Split::Train).is_err());
        assert!(Dataset::new(Matrix::filled(1, 4, 1.5), vec![1], 2, 2, "x", Split::Train).is_err());
        assert!(Dataset::new(Matrix::zeros(1, 4), vec![1], 2, 3, "x", Split::Train).is_err());
    }
}
