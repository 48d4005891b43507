//! Figures and tables as plain files: PGM weight tiles, activation
//! histograms, activation densities and accuracy/CPU-time tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dbn::Dbn;
use crate::error::{ensure, Error, Result};
use crate::math::Matrix;
use crate::rbm::Rbm;

/// Anything that maps a batch of inputs to hidden activation probabilities.
pub trait HiddenActivations {
    fn hidden_activations(&self, batch: &Matrix) -> Result<Matrix>;
}

impl HiddenActivations for Rbm {
    fn hidden_activations(&self, batch: &Matrix) -> Result<Matrix> {
        self.hidden_probs(batch)
    }
}

/// Top-layer activations of the stack.
impl HiddenActivations for Dbn {
    fn hidden_activations(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward_batch(batch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Parses binary PGM with maxval 255.
pub fn read_pgm(name: &str, bytes: &[u8]) -> Result<Pgm> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(
                name,
                format!("byte offset {pos}"),
                "truncated header",
            ));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let bad = |msg: String| Error::parse(name, "header", msg);
    if fields[0] != "P5" {
        return Err(bad(format!("expected P5, found {}", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("bad number {s}")))
    };
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    let pixels = bytes.get(pos..).unwrap_or_default().to_vec();
    if pixels.len() != width * height {
        return Err(Error::parse(
            name,
            format!("byte offset {pos}"),
            format!("expected {} pixels, found {}", width * height, pixels.len()),
        ));
    }
    Ok(Pgm {
        width,
        height,
        pixels,
    })
}

/// Min-max maps `values` to 0..=255; a constant tile becomes 127.
fn normalize_tile(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![127; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Renders hidden unit `k`'s weight column as tile `k` of a `rows × cols`
/// grid, row by row. Units beyond the grid are dropped; unused cells stay
/// black.
pub fn weight_tiles(m: &Rbm, rows: usize, cols: usize) -> Result<Pgm> {
    let side = (m.visible() as f64).sqrt().round() as usize;
    ensure!(
        side * side == m.visible(),
        Config,
        "visible size {} is not a perfect square",
        m.visible()
    );
    ensure!(rows > 0 && cols > 0, Config, "tile grid must be non-empty");
    let (width, height) = (cols * side, rows * side);
    let mut pixels = vec![0u8; width * height];
    for k in 0..m.hidden().min(rows * cols) {
        let tile = normalize_tile(&m.weights().column(k));
        let (gr, gc) = (k / cols, k % cols);
        for r in 0..side {
            let dst = (gr * side + r) * width + gc * side;
            pixels[dst..dst + side].copy_from_slice(&tile[r * side..(r + 1) * side]);
        }
    }
    Ok(Pgm {
        width,
        height,
        pixels,
    })
}

/// Smallest square grid holding `n` tiles.
pub fn square_grid(n: usize) -> usize {
    let mut g = (n as f64).sqrt().floor() as usize;
    while g * g < n {
        g += 1;
    }
    g.max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins on [0, 1]; 1.0 falls in the last bin.
    pub fn unit_interval(values: impl IntoIterator<Item = f64>, bins: usize) -> Result<Self> {
        ensure!(bins >= 2, Contract, "need at least 2 bins, got {bins}");
        let mut counts = vec![0usize; bins];
        for v in values {
            ensure!(v.is_finite(), Numeric, "non-finite activation {v}");
            let idx = ((v.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Ok(Histogram { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Mean estimated from bin centres.
    pub fn centre_mean(&self) -> f64 {
        let total = self.total() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| 0.5 * (self.edges[i] + self.edges[i + 1]) * c as f64)
            .sum::<f64>()
            / total
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{:.6},{:.6},{}\n",
                self.edges[i],
                self.edges[i + 1],
                c
            ));
        }
        out
    }

    /// Normalized density per bin and its natural log (empty bins give `-inf`).
    pub fn to_density_csv(&self) -> String {
        let total = self.total() as f64;
        let mut out = String::from("bin_low,bin_high,count,density,log_density\n");
        for (i, &c) in self.counts.iter().enumerate() {
            let width = self.edges[i + 1] - self.edges[i];
            let density = c as f64 / (total * width);
            out.push_str(&format!(
                "{:.6},{:.6},{},{:.10},{:.10}\n",
                self.edges[i],
                self.edges[i + 1],
                c,
                density,
                density.ln()
            ));
        }
        out
    }
}

/// Per-unit mean activation over `batch`, histogrammed; counts sum to the
/// number of hidden units.
pub fn activation_histogram<M: HiddenActivations + ?Sized>(
    model: &M,
    batch: &Matrix,
    bins: usize,
) -> Result<Histogram> {
    ensure!(
        batch.rows() > 0,
        Contract,
        "activation histogram needs a non-empty batch"
    );
    let probs = model.hidden_activations(batch)?;
    Histogram::unit_interval(probs.column_means(), bins)
}

/// Histogram of every `p(h_j = 1 | x)` entry over the batch.
pub fn activation_density<M: HiddenActivations + ?Sized>(
    model: &M,
    batch: &Matrix,
    bins: usize,
) -> Result<Histogram> {
    ensure!(
        batch.rows() > 0,
        Contract,
        "activation density needs a non-empty batch"
    );
    let probs = model.hidden_activations(batch)?;
    Histogram::unit_interval(probs.as_slice().iter().copied(), bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub architecture: String,
    pub dataset: String,
    /// Fraction in [0, 1].
    pub accuracy: f64,
    pub wall_seconds: f64,
}

/// Published accuracies (%) and CPU times for each architecture/dataset.
pub const REFERENCE: &[(&str, &str, f64, &str)] = &[
    ("DBN", "MNIST", 98.83, "167.90h"),
    ("DBN", "RIMES", 99.30, ">60h"),
    ("DBN", "USPS", 94.85, "31.15h"),
    ("MN DBN(5)", "MNIST", 97.28, "62.14h"),
    ("MN DBN(5)", "RIMES", 99.24, "33.70h"),
    ("MN DBN(5)", "USPS", 92.90, "8.62h"),
    ("MN DBN(10)", "MNIST", 98.83, "66.10h"),
    ("MN DBN(10)", "RIMES", 99.33, "40.70h"),
    ("MN DBN(10)", "USPS", 94.70, "10.00h"),
    ("MN DBN(20)", "MNIST", 98.77, "70.10h"),
    ("MN DBN(20)", "RIMES", 99.38, "69.80h"),
    ("MN DBN(20)", "USPS", 94.65, "12.75h"),
    ("MN DBN(100)", "MNIST", 98.80, "71.50h"),
    ("MN DBN(100)", "RIMES", 99.40, "85.80h"),
    ("MN DBN(100)", "USPS", 94.35, "15.85h"),
    ("MN w/O DBN(20/20%)", "MNIST", 95.10, ">60h"),
    ("MN w/O DBN(20/20%)", "RIMES", 95.70, "39.27h"),
    ("MN w/O DBN(20/20%)", "USPS", 85.05, "10.40h"),
    ("MN w/O DBN(20/50%)", "MNIST", 93.50, ">60h"),
    ("MN w/O DBN(20/50%)", "RIMES", 93.62, ">45h"),
    ("MN w/O DBN(20/50%)", "USPS", 80.90, "22.90h"),
    ("MN w/O DBN(50/20%)", "MNIST", 96.50, ">60h"),
    ("MN w/O DBN(50/20%)", "RIMES", 97.60, "35.60h"),
    ("MN w/O DBN(50/20%)", "USPS", 92.95, "9.56h"),
    ("MN w/O DBN(50/50%)", "MNIST", 95.84, ">70h"),
    ("MN w/O DBN(50/50%)", "RIMES", 96.27, ">45h"),
    ("MN w/O DBN(50/50%)", "USPS", 91.35, "24.00h"),
];

pub fn reference_for(architecture: &str, dataset: &str) -> Option<(f64, &'static str)> {
    let dataset = dataset.to_ascii_uppercase();
    let dataset = if dataset == "UPS" {
        "USPS".to_string()
    } else {
        dataset
    };
    REFERENCE
        .iter()
        .find(|(a, d, _, _)| *a == architecture && *d == dataset)
        .map(|&(_, _, acc, cpu)| (acc, cpu))
}

/// Architecture tag in the published naming: `DBN`, `MN DBN(g)` or
/// `MN w/O DBN(g/p%)`.
pub fn architecture_tag(lambda: f64, group_size: usize, overlap_fraction: f64) -> String {
    if lambda == 0.0 {
        "DBN".to_string()
    } else if overlap_fraction == 0.0 {
        format!("MN DBN({group_size})")
    } else {
        format!(
            "MN w/O DBN({group_size}/{}%)",
            (overlap_fraction * 100.0).round()
        )
    }
}

pub const TABLE_HEADER: [&str; 6] = [
    "architecture",
    "dataset",
    "accuracy_pct",
    "wall_hours",
    "paper_accuracy_pct",
    "paper_cpu_time",
];

fn table_rows(records: &[RunRecord]) -> Vec<[String; 6]> {
    records
        .iter()
        .map(|r| {
            let (pa, pc) = match reference_for(&r.architecture, &r.dataset) {
                Some((a, c)) => (format!("{a:.2}"), c.to_string()),
                None => ("-".to_string(), "-".to_string()),
            };
            [
                r.architecture.clone(),
                r.dataset.clone(),
                format!("{:.2}", 100.0 * r.accuracy),
                format!("{:.2}", r.wall_seconds / 3600.0),
                pa,
                pc,
            ]
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per record with the matching published numbers alongside.
pub fn results_table_csv(records: &[RunRecord]) -> String {
    let mut out = TABLE_HEADER.join(",");
    out.push('\n');
    for row in table_rows(records) {
        let fields: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn results_table_text(records: &[RunRecord]) -> String {
    let rows = table_rows(records);
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, f) in widths.iter_mut().zip(row) {
            *w = (*w).max(f.chars().count());
        }
    }
    let line = |fields: Vec<&str>| -> String {
        let cells: Vec<String> = fields
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (f, &w))| {
                if i < 2 {
                    format!("{f:<w$}")
                } else {
                    format!("{f:>w$}")
                }
            })
            .collect();
        cells.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(TABLE_HEADER.to_vec());
    out.push_str(&line(
        widths
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    ));
    for row in &rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}
