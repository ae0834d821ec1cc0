//! Blocked full-frame search and direct windowed search.
//!
//! Full-frame: targets are packed into tiles of `TILE` pixels laid out
//! dimension-major, sources into blocks of `ROWS` pixels. A register-tiled
//! micro-kernel produces a `ROWS x TILE` block of dot products, each
//! accumulated sequentially over the feature dimension (the same order as
//! the brute-force reference, so values are bit-identical). Target tiles are
//! grouped into cache-sized spans visited in increasing target order, which
//! together with strict `>` updates keeps the first-maximizer tie rule.

use rayon::prelude::*;

use super::{Coord, Matches, SearchConfig, UnitFeatures, INFEASIBLE_CORRELATION};
use crate::error::{Error, Result};

const ROWS: usize = 4;
const TILE: usize = 8;
/// Target tiles per cache span.
const SPAN_TILES: usize = 32;
/// Source pixels per parallel task.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy)]
struct Best {
    value: f64,
    index: u32,
}

impl Best {
    const NONE: Best = Best {
        value: f64::NEG_INFINITY,
        index: u32::MAX,
    };

    #[inline(always)]
    fn offer(&mut self, value: f64, index: u32) {
        if value > self.value {
            self.value = value;
            self.index = index;
        }
    }
}

type Labels<'a> = Option<(&'a [u32], &'a [u32])>;

pub(super) fn search(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    labels: Labels<'_>,
    cfg: &SearchConfig,
) -> Result<(Matches, Option<Matches>)> {
    let (star, dagger) = match cfg.window_radius {
        None => full_frame(src, tgt, labels),
        Some(r) => windowed(src, tgt, labels, r),
    };
    let width = tgt.width();
    let unconstrained = finish(&star, width);
    if unconstrained.argmax.iter().any(Option::is_none) {
        return Err(Error::Internal("empty search window".into()));
    }
    let constrained = labels.map(|_| finish(&dagger, width));
    Ok((unconstrained, constrained))
}

fn finish(best: &[Best], width: usize) -> Matches {
    let (correlation, argmax) = best
        .iter()
        .map(|b| {
            if b.index == u32::MAX {
                (INFEASIBLE_CORRELATION, None)
            } else {
                (b.value, Some(Coord::from_index(b.index as usize, width)))
            }
        })
        .unzip();
    Matches {
        correlation,
        argmax,
    }
}

#[inline]
pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn windowed(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    labels: Labels<'_>,
    radius: usize,
) -> (Vec<Best>, Vec<Best>) {
    let (h, w) = (tgt.height(), tgt.width());
    (0..src.pixel_count())
        .into_par_iter()
        .map(|s| {
            let (i, j) = (s / w, s % w);
            let a = src.pixel(s);
            let mut star = Best::NONE;
            let mut dagger = Best::NONE;
            for ti in i.saturating_sub(radius)..=(i + radius).min(h - 1) {
                for tj in j.saturating_sub(radius)..=(j + radius).min(w - 1) {
                    let t = ti * w + tj;
                    let v = dot(a, tgt.pixel(t));
                    star.offer(v, t as u32);
                    if let Some((ls, lt)) = labels {
                        if ls[s] == lt[t] {
                            dagger.offer(v, t as u32);
                        }
                    }
                }
            }
            (star, dagger)
        })
        .unzip()
}

/// Target features regrouped as `[tile][dim][TILE]`, zero padded.
fn pack_targets(tgt: &UnitFeatures) -> Vec<f64> {
    let (n, dim) = (tgt.pixel_count(), tgt.dim());
    let tiles = n.div_ceil(TILE);
    let mut packed = vec![0.0; tiles * dim * TILE];
    for t in 0..n {
        let (tile, lane) = (t / TILE, t % TILE);
        let base = tile * dim * TILE + lane;
        for (d, &x) in tgt.pixel(t).iter().enumerate() {
            packed[base + d * TILE] = x;
        }
    }
    packed
}

/// Source features for one block regrouped as `[dim][ROWS]`, zero padded.
fn pack_sources(src: &UnitFeatures, first: usize, out: &mut [f64]) {
    out.fill(0.0);
    for r in 0..ROWS.min(src.pixel_count() - first) {
        for (d, &x) in src.pixel(first + r).iter().enumerate() {
            out[d * ROWS + r] = x;
        }
    }
}

#[inline(always)]
fn micro_kernel_body(a: &[f64], b: &[f64], dim: usize) -> [[f64; TILE]; ROWS] {
    let mut acc = [[0.0f64; TILE]; ROWS];
    let a = &a[..dim * ROWS];
    let b = &b[..dim * TILE];
    for (av, bv) in a.chunks_exact(ROWS).zip(b.chunks_exact(TILE)) {
        for r in 0..ROWS {
            let x = av[r];
            for k in 0..TILE {
                acc[r][k] += x * bv[k];
            }
        }
    }
    acc
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn micro_kernel_avx2(a: &[f64], b: &[f64], dim: usize) -> [[f64; TILE]; ROWS] {
    // Only widens the registers: multiply and add stay separate instructions,
    // so the results equal the portable path bit for bit.
    micro_kernel_body(a, b, dim)
}

fn micro_kernel_portable(a: &[f64], b: &[f64], dim: usize) -> [[f64; TILE]; ROWS] {
    micro_kernel_body(a, b, dim)
}

type MicroKernel = fn(&[f64], &[f64], usize) -> [[f64; TILE]; ROWS];

fn select_kernel() -> MicroKernel {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return |a, b, dim| unsafe { micro_kernel_avx2(a, b, dim) };
        }
    }
    micro_kernel_portable
}

fn full_frame(src: &UnitFeatures, tgt: &UnitFeatures, labels: Labels<'_>) -> (Vec<Best>, Vec<Best>) {
    let dim = src.dim();
    let n_src = src.pixel_count();
    let n_tgt = tgt.pixel_count();
    let packed = pack_targets(tgt);
    let tiles = n_tgt.div_ceil(TILE);
    let kernel = select_kernel();

    let starts: Vec<usize> = (0..n_src).step_by(CHUNK).collect();
    let chunks: Vec<(Vec<Best>, Vec<Best>)> = starts
        .into_par_iter()
        .map(|start| {
            let len = CHUNK.min(n_src - start);
            let blocks = len.div_ceil(ROWS);
            let mut src_pack = vec![0.0; blocks * dim * ROWS];
            for (b, out) in src_pack.chunks_exact_mut(dim * ROWS).enumerate() {
                pack_sources(src, start + b * ROWS, out);
            }
            let mut star = vec![Best::NONE; len];
            let mut dagger = vec![Best::NONE; len];
            for span in (0..tiles).step_by(SPAN_TILES) {
                let span_end = (span + SPAN_TILES).min(tiles);
                for (b, a) in src_pack.chunks_exact(dim * ROWS).enumerate() {
                    let rows = ROWS.min(len - b * ROWS);
                    for tile in span..span_end {
                        let bt = &packed[tile * dim * TILE..(tile + 1) * dim * TILE];
                        let acc = kernel(a, bt, dim);
                        let lanes = TILE.min(n_tgt - tile * TILE);
                        for (r, row) in acc.iter().enumerate().take(rows) {
                            let local = b * ROWS + r;
                            let s = start + local;
                            let best = &mut star[local];
                            for (lane, &v) in row.iter().enumerate().take(lanes) {
                                best.offer(v, (tile * TILE + lane) as u32);
                            }
                            if let Some((ls, lt)) = labels {
                                let want = ls[s];
                                let best = &mut dagger[local];
                                for (lane, &v) in row.iter().enumerate().take(lanes) {
                                    let t = tile * TILE + lane;
                                    if lt[t] == want {
                                        best.offer(v, t as u32);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (star, dagger)
        })
        .collect();

    let mut star = Vec::with_capacity(n_src);
    let mut dagger = Vec::with_capacity(n_src);
    for (s, d) in chunks {
        star.extend(s);
        dagger.extend(d);
    }
    (star, dagger)
}

pub(super) fn top_k(src: &UnitFeatures, tgt: &UnitFeatures, k: usize) -> Vec<Vec<(Coord, f64)>> {
    let width = tgt.width();
    (0..src.pixel_count())
        .into_par_iter()
        .map(|s| {
            let a = src.pixel(s);
            let mut scored: Vec<(f64, usize)> = (0..tgt.pixel_count())
                .map(|t| (dot(a, tgt.pixel(t)), t))
                .collect();
            let order = |x: &(f64, usize), y: &(f64, usize)| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1));
            if k < scored.len() {
                scored.select_nth_unstable_by(k - 1, order);
                scored.truncate(k);
            }
            scored.sort_unstable_by(order);
            scored
                .into_iter()
                .map(|(v, t)| (Coord::from_index(t, width), v))
                .collect()
        })
        .collect()
}
