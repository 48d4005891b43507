//! Shared helpers for CLI tests: a synthetic digit set written in the USPS
//! text layout, and a runner for the built binary.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mndbn_core::Rng;

const SIDE: usize = 16;

// Seven-segment masks: a (top), b (upper right), c (lower right), d (bottom),
// e (lower left), f (upper left), g (middle).
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// One noisy 16×16 glyph with values in [-1, 1].
pub fn glyph(digit: usize, rng: &mut Rng) -> Vec<f64> {
    let mut img = vec![0.0f64; SIDE * SIDE];
    let dx = (rng.uniform() * 5.0) as i64 - 2;
    let dy = (rng.uniform() * 5.0) as i64 - 2;
    let thick = if rng.uniform() < 0.5 { 1 } else { 2 };
    let (l, r, t, m, b) = (4i64, 11i64, 2i64, 7i64, 13i64);
    let mut paint = |x: i64, y: i64| {
        for ox in 0..thick {
            for oy in 0..thick {
                let (px, py) = (x + dx + ox, y + dy + oy);
                if (0..SIDE as i64).contains(&px) && (0..SIDE as i64).contains(&py) {
                    img[py as usize * SIDE + px as usize] = 1.0;
                }
            }
        }
    };
    let seg = SEGMENTS[digit];
    let hline = |y: i64, paint: &mut dyn FnMut(i64, i64)| (l..=r).for_each(|x| paint(x, y));
    let vline = |x: i64, y0: i64, y1: i64, paint: &mut dyn FnMut(i64, i64)| {
        (y0..=y1).for_each(|y| paint(x, y))
    };
    if seg[0] {
        hline(t, &mut paint);
    }
    if seg[1] {
        vline(r, t, m, &mut paint);
    }
    if seg[2] {
        vline(r, m, b, &mut paint);
    }
    if seg[3] {
        hline(b, &mut paint);
    }
    if seg[4] {
        vline(l, m, b, &mut paint);
    }
    if seg[5] {
        vline(l, t, m, &mut paint);
    }
    if seg[6] {
        hline(m, &mut paint);
    }
    img.iter()
        .map(|&v| {
            let noisy = v + 0.15 * rng.gaussian();
            (2.0 * noisy.clamp(0.0, 1.0) - 1.0).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Writes `n` glyphs with balanced labels to `path` in USPS text layout.
pub fn write_synthetic_usps(path: &Path, n: usize, seed: u64) {
    let mut rng = Rng::new(seed);
    let mut text = String::new();
    for i in 0..n {
        let digit = i % 10;
        write!(text, "{digit}").unwrap();
        for v in glyph(digit, &mut rng) {
            write!(text, " {v:.4}").unwrap();
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_mndbn"))
}

pub fn mndbn(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn write_json(path: &Path, value: &serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// CSV text with the named columns blanked on every data row.
pub fn without_columns(csv: &str, names: &[&str]) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let drop: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| names.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut out = header.join(",") + "\n";
    for line in lines {
        let cells: Vec<&str> = line
            .split(',')
            .enumerate()
            .map(|(i, c)| if drop.contains(&i) { "" } else { c })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
