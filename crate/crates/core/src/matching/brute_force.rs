//! Reference matcher: a direct double loop over source and target pixels.
//!
//! Defines the exact semantics (window shape, tie rule, infeasible value)
//! that the optimized search must reproduce. Intended for small grids.

use super::{
    check_dims, check_labels, Coord, Matches, SearchConfig, UnitFeatures, INFEASIBLE_CORRELATION,
};
use crate::error::Result;
use crate::maps::SegMap;

fn in_window(cfg: &SearchConfig, s: (usize, usize), t: (usize, usize)) -> bool {
    match cfg.window_radius {
        None => true,
        Some(r) => s.0.abs_diff(t.0) <= r && s.1.abs_diff(t.1) <= r,
    }
}

fn run(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    labels: Option<(&[u32], &[u32])>,
    cfg: &SearchConfig,
) -> Matches {
    let (sw, tw) = (src.width(), tgt.width());
    let mut correlation = Vec::with_capacity(src.pixel_count());
    let mut argmax = Vec::with_capacity(src.pixel_count());
    for s in 0..src.pixel_count() {
        let mut best: Option<(f64, usize)> = None;
        for t in 0..tgt.pixel_count() {
            if !in_window(cfg, (s / sw, s % sw), (t / tw, t % tw)) {
                continue;
            }
            if let Some((ls, lt)) = labels {
                if ls[s] != lt[t] {
                    continue;
                }
            }
            let mut v = 0.0;
            for d in 0..src.dim() {
                v += src.pixel(s)[d] * tgt.pixel(t)[d];
            }
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, t));
            }
        }
        match best {
            Some((v, t)) => {
                correlation.push(v);
                argmax.push(Some(Coord::from_index(t, tw)));
            }
            None => {
                correlation.push(INFEASIBLE_CORRELATION);
                argmax.push(None);
            }
        }
    }
    Matches {
        correlation,
        argmax,
    }
}

pub fn match_unconstrained(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    cfg: &SearchConfig,
) -> Result<Matches> {
    check_dims(src, tgt, cfg)?;
    Ok(run(src, tgt, None, cfg))
}

pub fn match_constrained(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    src_seg: &SegMap,
    tgt_seg: &SegMap,
    cfg: &SearchConfig,
) -> Result<Matches> {
    check_dims(src, tgt, cfg)?;
    check_labels(src, src_seg, "source")?;
    check_labels(tgt, tgt_seg, "target")?;
    Ok(run(src, tgt, Some((src_seg.labels(), tgt_seg.labels())), cfg))
}
