//! Flow-warp baseline: warp the next frame's segmentation back onto the
//! current frame and score agreement with mean IoU.

use crate::error::{Error, Result};
use crate::maps::{FlowField, SegMap};

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    pub warped: SegMap,
    /// `false` where the displaced position leaves the frame.
    pub valid: Vec<bool>,
}

impl WarpResult {
    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

/// Backward gather: `warped(i, j) = next(round(i + dy), round(j + dx))` with
/// the flow sampled at `(i, j)`. Invalid pixels carry label 0.
pub fn warp_seg(next: &SegMap, flow: &FlowField) -> Result<WarpResult> {
    let (h, w) = (next.height(), next.width());
    if (flow.height(), flow.width()) != (h, w) {
        return Err(Error::Shape(format!(
            "flow {}x{} vs segmentation {h}x{w}",
            flow.height(),
            flow.width()
        )));
    }
    let mut labels = Vec::with_capacity(h * w);
    let mut valid = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (dx, dy) = flow.at(i, j);
            let r = (i as f64 + dy).round();
            let c = (j as f64 + dx).round();
            if r >= 0.0 && c >= 0.0 && r < h as f64 && c < w as f64 {
                labels.push(next.get(r as usize, c as usize));
                valid.push(true);
            } else {
                labels.push(0);
                valid.push(false);
            }
        }
    }
    Ok(WarpResult {
        warped: SegMap::new(h, w, next.num_classes(), labels)?,
        valid,
    })
}

/// Mean IoU over classes present in either map within `mask`.
pub fn miou(a: &SegMap, b: &SegMap, mask: &[bool], num_classes: u32) -> Result<f64> {
    if !a.same_grid(b.height(), b.width()) || mask.len() != a.labels().len() {
        return Err(Error::Shape(format!(
            "mIoU inputs disagree: {}x{}, {}x{}, mask of {}",
            a.height(),
            a.width(),
            b.height(),
            b.width(),
            mask.len()
        )));
    }
    let k = num_classes as usize;
    let mut intersection = vec![0u64; k];
    let mut union = vec![0u64; k];
    let mut any = false;
    for ((&la, &lb), _) in a.labels().iter().zip(b.labels()).zip(mask).filter(|(_, &m)| m) {
        let (la, lb) = (la as usize, lb as usize);
        if la >= k || lb >= k {
            return Err(Error::Validation(format!("label outside [0, {k})")));
        }
        any = true;
        union[la] += 1;
        if la == lb {
            intersection[la] += 1;
        } else {
            union[lb] += 1;
        }
    }
    if !any {
        return Err(Error::Undefined("mIoU over an empty mask".into()));
    }
    let (sum, count) = intersection
        .iter()
        .zip(&union)
        .filter(|(_, &u)| u > 0)
        .fold((0.0, 0usize), |(s, n), (&i, &u)| (s + i as f64 / u as f64, n + 1));
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowPair {
    pub miou: f64,
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTcResult {
    pub per_pair: Vec<FlowPair>,
    pub mean: f64,
}

/// Flow-warp temporal consistency over consecutive frames. `flows[t]` maps
/// frame `t` to frame `t + 1`; the last entry is unused.
pub fn flow_tc(segs: &[SegMap], flows: &[Option<FlowField>]) -> Result<FlowTcResult> {
    if segs.len() < 2 {
        return Err(Error::InsufficientFrames(format!(
            "flow consistency needs at least 2 frames, got {}",
            segs.len()
        )));
    }
    let mut per_pair = Vec::with_capacity(segs.len() - 1);
    for t in 0..segs.len() - 1 {
        let flow = flows.get(t).and_then(Option::as_ref).ok_or_else(|| {
            Error::Validation(format!("frame {} has no flow to the next frame", t + 1))
        })?;
        let warp = warp_seg(&segs[t + 1], flow)?;
        let k = segs[t].num_classes().max(segs[t + 1].num_classes());
        per_pair.push(FlowPair {
            miou: miou(&segs[t], &warp.warped, &warp.valid, k)?,
            invalid: warp.invalid_count(),
        });
    }
    let mean = per_pair.iter().map(|p| p.miou).sum::<f64>() / per_pair.len() as f64;
    Ok(FlowTcResult { per_pair, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(h: usize, w: usize, labels: &[u32]) -> SegMap {
        SegMap::new(h, w, 4, labels.to_vec()).unwrap()
    }

    #[test]
    fn zero_flow_is_identity() {
        let y = seg(2, 3, &[0, 1, 2, 3, 2, 1]);
        let r = warp_seg(&y, &FlowField::uniform(2, 3, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.warped, y);
        assert!(r.valid.iter().all(|&v| v));
    }

    #[test]
    fn shift_one_column() {
        let y = seg(2, 2, &[1, 2, 3, 0]);
        let r = warp_seg(&y, &FlowField::uniform(2, 2, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.valid, vec![true, false, true, false]);
        assert_eq!(r.warped.get(0, 0), 2);
        assert_eq!(r.warped.get(1, 0), 0);
    }

    #[test]
    fn everything_out_of_bounds() {
        let y = seg(2, 2, &[1, 2, 3, 0]);
        let r = warp_seg(&y, &FlowField::uniform(2, 2, 0.0, -5.0).unwrap()).unwrap();
        assert_eq!(r.invalid_count(), 4);
    }

    #[test]
    fn miou_examples() {
        let full = vec![true; 4];
        let a = seg(2, 2, &[0, 0, 1, 1]);
        let b = seg(2, 2, &[0, 1, 1, 1]);
        assert_eq!(miou(&a, &a, &full, 4).unwrap(), 1.0);
        assert!((miou(&a, &b, &full, 4).unwrap() - 7.0 / 12.0).abs() < 1e-12);
        assert!((miou(&b, &a, &full, 4).unwrap() - 7.0 / 12.0).abs() < 1e-12);
        let zeros = seg(2, 2, &[0; 4]);
        let ones = seg(2, 2, &[1; 4]);
        assert_eq!(miou(&zeros, &ones, &full, 4).unwrap(), 0.0);
        assert!(matches!(miou(&a, &b, &[false; 4], 4), Err(Error::Undefined(_))));
    }

    #[test]
    fn masked_pixels_are_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a: Vec<u32> = (0..20).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<u32> = (0..20).map(|_| rng.gen_range(0..4)).collect();
            let mut mask: Vec<bool> = (0..20).map(|_| rng.gen_bool(0.7)).collect();
            mask[0] = true;
            let base = miou(&seg(4, 5, &a), &seg(4, 5, &b), &mask, 4).unwrap();
            let (mut a2, mut b2) = (a.clone(), b.clone());
            for i in (0..20).filter(|&i| !mask[i]) {
                a2[i] = rng.gen_range(0..4);
                b2[i] = rng.gen_range(0..4);
            }
            assert_eq!(miou(&seg(4, 5, &a2), &seg(4, 5, &b2), &mask, 4).unwrap(), base);
            assert!((0.0..=1.0).contains(&base));
        }
    }

    #[test]
    fn video_examples() {
        let y = seg(2, 2, &[0, 0, 1, 1]);
        let zero = || Some(FlowField::uniform(2, 2, 0.0, 0.0).unwrap());
        let r = flow_tc(&[y.clone(), y.clone(), y.clone()], &[zero(), zero(), None]).unwrap();
        assert_eq!(r.per_pair.len(), 2);
        assert_eq!(r.mean, 1.0);

        let b = seg(2, 2, &[0, 1, 1, 1]);
        let r = flow_tc(&[y.clone(), b], &[zero(), None]).unwrap();
        assert!((r.mean - 7.0 / 12.0).abs() < 1e-12);

        assert!(matches!(flow_tc(&[y.clone()], &[None]), Err(Error::InsufficientFrames(_))));
        let err = flow_tc(&[y.clone(), y], &[None, None]).unwrap_err();
        assert!(err.to_string().contains("frame 1"));
    }
}
