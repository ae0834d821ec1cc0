//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use percon::correctness::{nearest_labeled_frame, predict_correctness, correctness_labels};
use percon::flow::{flow_tc, miou};
use percon::matching::{
    align_seg_to_features, brute_force, match_pair, match_unconstrained, MatchResult,
};
use percon::pc::{pc_loss, pc_map_directional, pc_pair, pc_video};
use percon::stats::{kendall, pearson, roc_pr, spearman};
use percon::{normalize_features, FeatureMap, FlowField, ScoreMap, SearchConfig, SegFrame, SegMap, UnitFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let elapsed = start.elapsed();
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))?;
    Ok(elapsed)
}

fn random_unit(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> UnitFeatures {
    let data = (0..h * w * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize_features(&FeatureMap::new(h, w, d, data).unwrap())
}

fn random_seg(rng: &mut ChaCha8Rng, h: usize, w: usize, k: u32) -> SegMap {
    SegMap::new(h, w, k, (0..h * w).map(|_| rng.gen_range(0..k)).collect()).unwrap()
}

fn line_frame(px: &[[f64; 2]], labels: &[u32]) -> SegFrame {
    let pixels: Vec<Vec<f64>> = px.iter().map(|p| p.to_vec()).collect();
    let f = normalize_features(&FeatureMap::from_pixels(1, px.len(), &pixels).unwrap());
    SegFrame::new(f, SegMap::new(1, labels.len(), 2, labels.to_vec()).unwrap()).unwrap()
}

const FA: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [0.8, 0.6]];
const FB: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]];

fn gt_self_consistency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let mut worst: f64 = 0.0;
    for v in 0..50 {
        let features = random_unit(&mut rng, 12, 16, 16);
        let gt = random_seg(&mut rng, 12, 16, 5);
        let frames: Vec<SegFrame> = (0..4)
            .map(|_| SegFrame::new(features.clone(), gt.clone()).unwrap())
            .collect();
        let r = pc_video(&frames, &SearchConfig::full_frame()).map_err(|e| e.to_string())?;
        worst = worst.max((r.rho_tilde - 1.0).abs());
        ensure((r.rho_tilde - 1.0).abs() <= 1e-9, || {
            format!("video {v}: rho_tilde = {}", r.rho_tilde)
        })?;
    }
    let t = within_time(start, Duration::from_secs(5))?;
    Ok(format!("50 videos, max |rho_tilde - 1| = {worst:e}, {t:.2?}"))
}

fn compare_with_oracle(
    fast: &MatchResult,
    a: &UnitFeatures,
    b: &UnitFeatures,
    ya: &SegMap,
    yb: &SegMap,
    cfg: &SearchConfig,
) -> Result<f64, String> {
    let star = brute_force::match_unconstrained(a, b, cfg).map_err(|e| e.to_string())?;
    let dagger = brute_force::match_constrained(a, b, ya, yb, cfg).map_err(|e| e.to_string())?;
    let only_star = match_unconstrained(a, b, cfg).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (got, want) in [
        (&fast.unconstrained, &star),
        (&only_star, &star),
        (&fast.constrained, &dagger),
    ] {
        ensure(got.argmax == want.argmax, || "argmax differs from brute force".into())?;
        for (x, y) in got.correlation.iter().zip(&want.correlation) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("value gap {worst:e}"))?;
    Ok(worst)
}

fn matching_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0a11);
    let mut worst: f64 = 0.0;
    for instance in 0..200 {
        let (h, w, d) = (rng.gen_range(1..=32), rng.gen_range(1..=32), rng.gen_range(1..=16));
        let k = rng.gen_range(1..=6);
        let (a, b) = if instance % 4 == 0 {
            // Coarsely quantized features produce many exact ties.
            let q = |rng: &mut ChaCha8Rng| {
                let data = (0..h * w * d).map(|_| rng.gen_range(-1..=1) as f64).collect();
                normalize_features(&FeatureMap::new(h, w, d, data).unwrap())
            };
            (q(&mut rng), q(&mut rng))
        } else {
            (random_unit(&mut rng, h, w, d), random_unit(&mut rng, h, w, d))
        };
        let (ya, yb) = (random_seg(&mut rng, h, w, k), random_seg(&mut rng, h, w, k));
        for cfg in [SearchConfig::window(1), SearchConfig::window(3), SearchConfig::full_frame()] {
            let fast = match_pair(&a, &b, &ya, &yb, &cfg).map_err(|e| e.to_string())?;
            worst = worst.max(
                compare_with_oracle(&fast, &a, &b, &ya, &yb, &cfg)
                    .map_err(|e| format!("instance {instance} ({h}x{w}x{d}, {cfg:?}): {e}"))?,
            );
        }
    }
    let t = within_time(start, Duration::from_secs(60))?;
    Ok(format!("200 instances x 3 windows, max value gap {worst:e}, {t:.2?}"))
}

fn perturb(rng: &mut ChaCha8Rng, px: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    px.map(|[x, y]| [x + rng.gen_range(-0.01..=0.01), y + rng.gen_range(-0.01..=0.01)])
}

fn fixture_pc1() -> Outcome {
    let cfg = SearchConfig::full_frame();
    let rho = |fa: &[[f64; 2]], fb: &[[f64; 2]], yb: &[u32]| {
        pc_pair(&line_frame(fa, &[0, 1, 0]), &line_frame(fb, yb), &cfg).map(|r| r.rho)
    };
    let consistent = rho(&FA, &FB, &[0, 1, 1]).map_err(|e| e.to_string())?;
    let flipped = rho(&FA, &FB, &[1, 0, 0]).map_err(|e| e.to_string())?;
    ensure((consistent - 5.0).abs() <= 1e-6, || format!("consistent rho = {consistent}"))?;
    ensure((flipped + 16.5).abs() <= 1e-6, || format!("flipped rho = {flipped}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xf1c5);
    for trial in 0..100 {
        let (fa, fb) = (perturb(&mut rng, &FA), perturb(&mut rng, &FB));
        let c = rho(&fa, &fb, &[0, 1, 1]).map_err(|e| e.to_string())?;
        let f = rho(&fa, &fb, &[1, 0, 0]).map_err(|e| e.to_string())?;
        ensure(c > f, || format!("perturbation {trial}: consistent {c} <= flipped {f}"))?;
    }
    Ok(format!("rho = {consistent:.9} / {flipped:.9}; ordering held on 100 perturbations"))
}

fn vacuous_constraint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7ac0);
    for seed in 0..100 {
        let (h, w, d) = (rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=12));
        let y = SegMap::new(h, w, 3, vec![rng.gen_range(0..3); h * w]).unwrap();
        let a = SegFrame::new(random_unit(&mut rng, h, w, d), y.clone()).unwrap();
        let b = SegFrame::new(random_unit(&mut rng, h, w, d), y).unwrap();
        let rho = pc_pair(&a, &b, &SearchConfig::full_frame()).map_err(|e| e.to_string())?.rho;
        ensure((rho - 1.0).abs() <= 1e-9, || format!("seed {seed}: rho = {rho}"))?;
    }
    Ok("rho = 1 on 100 single-class instances".into())
}

fn loss_matches_video_tc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1055);
    let cfg = SearchConfig::full_frame();
    let mut worst: f64 = 0.0;
    for v in 0..20 {
        let frames: Vec<SegFrame> = (0..5)
            .map(|_| {
                SegFrame::new(random_unit(&mut rng, 8, 10, 6), random_seg(&mut rng, 8, 10, 3)).unwrap()
            })
            .collect();
        let tc = pc_video(&frames, &cfg).map_err(|e| e.to_string())?;
        let loss = pc_loss(&[(format!("v{v}"), frames)], 1, &cfg).map_err(|e| e.to_string())?;
        let gap = (loss.value - (1.0 - tc.rho_tilde)).abs();
        worst = worst.max(gap);
        ensure(gap <= 1e-9, || format!("video {v}: loss {} vs 1 - rho_tilde {}", loss.value, 1.0 - tc.rho_tilde))?;
    }
    Ok(format!("20 videos, max gap {worst:e}"))
}

fn flow_baseline() -> Outcome {
    let full = vec![true; 4];
    let a = SegMap::new(2, 2, 2, vec![0, 0, 1, 1]).unwrap();
    let b = SegMap::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
    let m = miou(&a, &b, &full, 2).map_err(|e| e.to_string())?;
    ensure((m - 7.0 / 12.0).abs() <= 1e-12, || format!("mIoU = {m}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xf10e);
    for _ in 0..10 {
        let y = random_seg(&mut rng, 6, 7, 4);
        let zero = || Some(FlowField::uniform(6, 7, 0.0, 0.0).unwrap());
        let r = flow_tc(&[y.clone(), y.clone(), y], &[zero(), zero(), None]).map_err(|e| e.to_string())?;
        ensure(r.mean == 1.0, || format!("zero-flow identical video scored {}", r.mean))?;
    }

    for seed in 0..100 {
        let (h, w) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let (x, y) = (random_seg(&mut rng, h, w, 4), random_seg(&mut rng, h, w, 4));
        let mut mask: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.6)).collect();
        mask[0] = true;
        let base = miou(&x, &y, &mask, 4).map_err(|e| e.to_string())?;
        let scramble = |s: &SegMap, rng: &mut ChaCha8Rng| {
            let labels = s
                .labels()
                .iter()
                .zip(&mask)
                .map(|(&l, &m)| if m { l } else { rng.gen_range(0..4) })
                .collect();
            SegMap::new(h, w, 4, labels).unwrap()
        };
        let (x2, y2) = (scramble(&x, &mut rng), scramble(&y, &mut rng));
        let again = miou(&x2, &y2, &mask, 4).map_err(|e| e.to_string())?;
        ensure(again == base, || format!("seed {seed}: masked labels changed mIoU {base} -> {again}"))?;
    }
    Ok(format!("mIoU = {m:.12}; zero-flow = 1.0; masking held on 100 seeds"))
}

fn pair_statistic(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn statistics() -> Outcome {
    let e = |r: percon::Result<f64>| r.map_err(|e| e.to_string());
    let p = e(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 4.0]))?;
    let s = e(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]))?;
    let k = e(kendall(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]))?;
    ensure((p - 0.5).abs() <= 1e-12, || format!("pearson {p}"))?;
    ensure((s - 0.8).abs() <= 1e-12, || format!("spearman {s}"))?;
    ensure((k - 1.0 / 3.0).abs() <= 1e-12, || format!("kendall {k}"))?;
    let (roc, _) = roc_pr(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).map_err(|e| e.to_string())?;
    ensure((roc.auc - 0.75).abs() <= 1e-12, || format!("fixture AUC {}", roc.auc))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x57a7);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.gen_range(2..=200);
        let levels = rng.gen_range(2..50);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / 7.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let (roc, _) = roc_pr(&scores, &labels).map_err(|e| e.to_string())?;
        let reference = pair_statistic(&scores, &labels);
        ensure((roc.auc - reference).abs() <= 1e-12, || {
            format!("set {checked}: AUC {} vs pair statistic {reference}", roc.auc)
        })?;
        checked += 1;
    }
    Ok(format!("pearson {p}, spearman {s}, kendall {k:.12}, AUC {}; 100 pair checks", roc.auc))
}

/// Static four-region scene on a 24x32 feature grid with labels at twice that
/// resolution. A fifth of the pixels are unstable (their appearance changes
/// every frame); the rest keep a persistent texture. Predicted labels on the
/// unlabeled frames are wrong on a tenth of the stable pixels, where the
/// features still match the true class's region in the labeled frame.
fn correctness_discrimination() -> Outcome {
    const FH: usize = 24;
    const FW: usize = 32;
    const D: usize = 32;
    const K: u32 = 4;
    let (h, w) = (2 * FH, 2 * FW);
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let gauss = |rng: &mut ChaCha8Rng, n: usize, scale: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                // Box-Muller.
                let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen_range(0.0..1.0));
                scale * (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
            })
            .collect()
    };
    let protos: Vec<Vec<f64>> = (0..K).map(|_| gauss(&mut rng, D, 1.0 / (D as f64).sqrt())).collect();
    let region = |i: usize, j: usize| (i * 2 / FH) as u32 * 2 + (j * 2 / FW) as u32;
    let unstable: Vec<bool> = (0..FH * FW).map(|_| rng.gen_bool(0.2)).collect();
    let textures: Vec<Vec<f64>> = (0..FH * FW).map(|_| gauss(&mut rng, D, 0.6 / (D as f64).sqrt())).collect();

    let gt_fine = SegMap::new(
        h,
        w,
        K,
        (0..h * w).map(|p| region(p / w / 2, p % w / 2)).collect(),
    )
    .unwrap();

    let mut frames = Vec::new();
    for _ in 0..5 {
        let mut data = Vec::with_capacity(FH * FW * D);
        for p in 0..FH * FW {
            let class = region(p / FW, p % FW) as usize;
            let texture = if unstable[p] {
                gauss(&mut rng, D, 0.6 / (D as f64).sqrt())
            } else {
                textures[p].clone()
            };
            let noise = gauss(&mut rng, D, 0.05 / (D as f64).sqrt());
            data.extend((0..D).map(|d| protos[class][d] + texture[d] + noise[d]));
        }
        frames.push(normalize_features(&FeatureMap::new(FH, FW, D, data).unwrap()));
    }

    let labeled = [1usize, 5];
    let cfg = SearchConfig::full_frame();
    let (mut fused, mut conf_only, mut is_error) = (Vec::new(), Vec::new(), Vec::new());
    for t_u in 2..=4 {
        let t_l = nearest_labeled_frame(t_u, &labeled).map_err(|e| e.to_string())?;
        let mut pred = gt_fine.labels().to_vec();
        let mut z = Vec::with_capacity(h * w);
        let wrong: Vec<bool> = (0..FH * FW).map(|p| !unstable[p] && rng.gen_bool(0.1)).collect();
        let shift: Vec<u32> = (0..FH * FW).map(|_| rng.gen_range(1..K)).collect();
        for p in 0..h * w {
            let cell = (p / w / 2) * FW + p % w / 2;
            if wrong[cell] {
                pred[p] = (pred[p] + shift[cell]) % K;
                z.push(rng.gen_range(0.35..0.85));
            } else {
                z.push(rng.gen_range(0.5..1.0));
            }
        }
        let pred = SegMap::new(h, w, K, pred).unwrap();
        let z = ScoreMap::new(h, w, z).unwrap();
        let unl = SegFrame::new(
            frames[t_u - 1].clone(),
            align_seg_to_features(&pred, FH, FW).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let lab = SegFrame::new(
            frames[t_l - 1].clone(),
            align_seg_to_features(&gt_fine, FH, FW).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let rho_hat = pc_map_directional(&unl, &lab, &cfg).map_err(|e| e.to_string())?;
        let prediction = predict_correctness(&z, &rho_hat, 1.0).map_err(|e| e.to_string())?;
        fused.extend(prediction.error_scores());
        conf_only.extend(z.values().iter().map(|v| -v));
        is_error.extend(correctness_labels(&pred, &gt_fine).map_err(|e| e.to_string())?);
    }
    let auc = |scores: &[f64]| roc_pr(scores, &is_error).map(|(roc, _)| roc.auc).map_err(|e| e.to_string());
    let (auc_fused, auc_conf) = (auc(&fused)?, auc(&conf_only)?);
    ensure(auc_fused >= auc_conf + 0.05, || {
        format!("AUC(-alpha) = {auc_fused:.4} vs AUC(-z) = {auc_conf:.4}")
    })?;
    Ok(format!("AUC(-alpha) = {auc_fused:.4}, AUC(-z) = {auc_conf:.4}"))
}

fn performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e4f);
    let (h, w, d) = (64, 128, 64);
    let (a, b) = (random_unit(&mut rng, h, w, d), random_unit(&mut rng, h, w, d));
    let (ya, yb) = (random_seg(&mut rng, h, w, 8), random_seg(&mut rng, h, w, 8));
    let run = |threads: usize| -> Result<(MatchResult, Duration), String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let start = Instant::now();
        let r = pool
            .install(|| match_pair(&a, &b, &ya, &yb, &SearchConfig::full_frame()))
            .map_err(|e| e.to_string())?;
        Ok((r, start.elapsed()))
    };
    let (single, elapsed) = run(1)?;
    ensure(elapsed < Duration::from_secs(2), || {
        format!("single-threaded 64x128x64 match took {elapsed:?}")
    })?;
    let bits = |m: &MatchResult| -> Vec<u64> {
        m.unconstrained
            .correlation
            .iter()
            .chain(&m.constrained.correlation)
            .map(|v| v.to_bits())
            .collect()
    };
    for threads in [4, 8] {
        let (other, _) = run(threads)?;
        ensure(
            bits(&other) == bits(&single)
                && other.unconstrained.argmax == single.unconstrained.argmax
                && other.constrained.argmax == single.constrained.argmax,
            || format!("{threads}-thread result differs from single-threaded"),
        )?;
    }
    Ok(format!("single-threaded {elapsed:.2?}; identical bits at 1/4/8 threads"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gt-self-consistency", gt_self_consistency),
        ("matching-oracle", matching_oracle),
        ("fixture-pc1", fixture_pc1),
        ("vacuous-constraint", vacuous_constraint),
        ("loss-vs-video-tc", loss_matches_video_tc),
        ("flow-baseline", flow_baseline),
        ("statistics", statistics),
        ("correctness-discrimination", correctness_discrimination),
        ("performance", performance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
