use std::fs;
use std::path::Path;

use percon::correctness::{
    correctness_labels, nearest_labeled_frame, predict_correctness, CorrectnessPrediction,
};
use percon::flow::{flow_tc as flow_consistency, miou};
use percon::manifest::{load_manifest, FrameData, Video, VideoManifest};
use percon::matching::align_seg_to_features;
use percon::pc::{pc_loss, pc_map_directional, pc_pair as pair_consistency, pc_video as video_consistency};
use percon::stats::{class_agreement, correlation_report, roc_pr, CurveReport};
use percon::tensor::write_tensor;
use percon::{normalize_features, FeatureMap, ScoreMap, SearchConfig, SegFrame, SegMap};
use rayon::prelude::*;
use serde_json::json;

use crate::report::{fmt_num, read_series, read_xy, render_svg, Table};
use crate::{CliError, Globals, Input};

type Result<T> = std::result::Result<T, CliError>;

fn search_config(input: &Input) -> SearchConfig {
    match input.window {
        Some(r) => SearchConfig::window(r),
        None => SearchConfig::full_frame(),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write_run_config(g: &Globals, input: &Input, command: &str, extra: serde_json::Value) -> Result<()> {
    let mut config = json!({
        "command": command,
        "manifest": input.manifest.display().to_string(),
        "video": input.video,
        "window_radius": input.window,
        "threads": g.threads,
        "lambda": g.lambda,
        "version": env!("CARGO_PKG_VERSION"),
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (config.as_object_mut(), extra) {
        obj.extend(more);
    }
    let path = input.out.join("run_config.json");
    let text = serde_json::to_string_pretty(&config).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))
}

fn select_video<'a>(manifest: &'a VideoManifest, name: Option<&str>) -> Result<&'a Video> {
    match name {
        Some(name) => Ok(manifest.video(name)?),
        None if manifest.videos.len() == 1 => Ok(&manifest.videos[0]),
        None => Err(CliError::Input(format!(
            "manifest holds {} videos; choose one with --video",
            manifest.videos.len()
        ))),
    }
}

fn load_frames(video: &Video, num_classes: u32) -> Result<Vec<FrameData>> {
    Ok(video
        .frames
        .par_iter()
        .map(|f| f.load(num_classes))
        .collect::<percon::Result<Vec<_>>>()?)
}

/// Normalizes the features and resamples the segmentation onto their grid.
fn seg_frame(features: &FeatureMap, seg: &SegMap) -> Result<SegFrame> {
    let unit = normalize_features(features);
    let aligned = align_seg_to_features(seg, unit.height(), unit.width())?;
    Ok(SegFrame::new(unit, aligned)?)
}

fn require_gt(frame: &FrameData, t: usize, video: &str) -> Result<SegMap> {
    frame
        .gt
        .clone()
        .ok_or_else(|| CliError::Input(format!("video '{video}' frame {t} has no ground truth")))
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}

pub fn pc_pair(g: &Globals, input: &Input, t_a: usize, t_b: usize) -> Result<()> {
    let manifest = load_manifest(&input.manifest)?;
    let video = select_video(&manifest, input.video.as_deref())?;
    let a = video.frame(t_a)?.load(manifest.num_classes)?;
    let b = video.frame(t_b)?.load(manifest.num_classes)?;
    let result = pair_consistency(
        &seg_frame(&a.features, &a.pred)?,
        &seg_frame(&b.features, &b.pred)?,
        &search_config(input),
    )?;

    prepare_out(&input.out)?;
    let mut table = Table::new(&[
        "video",
        "t_a",
        "t_b",
        "rho",
        "rho_ab",
        "rho_ba",
        "mean_c_star_ab",
        "mean_c_dagger_ab",
        "mean_c_star_ba",
        "mean_c_dagger_ba",
    ]);
    table.row([
        video.name.clone(),
        t_a.to_string(),
        t_b.to_string(),
        fmt_num(result.rho),
        fmt_num(result.rho_ab()),
        fmt_num(result.rho_ba()),
        fmt_num(result.ab.mean_c_star),
        fmt_num(result.ab.mean_c_dagger),
        fmt_num(result.ba.mean_c_star),
        fmt_num(result.ba.mean_c_dagger),
    ]);
    table.save(&input.out.join("pair_report.csv"))?;
    for (name, map) in [("ratio_ab.npy", &result.ab.ratios), ("ratio_ba.npy", &result.ba.ratios)] {
        write_tensor(&map.to_tensor(), input.out.join(name))?;
    }
    write_run_config(g, input, "pc-pair", json!({ "frames": [t_a, t_b] }))?;
    println!(
        "{} frames {t_a},{t_b}: rho = {} (ab {}, ba {})",
        video.name,
        fmt_num(result.rho),
        fmt_num(result.rho_ab()),
        fmt_num(result.rho_ba())
    );
    Ok(())
}

pub fn pc_video(g: &Globals, input: &Input, alternate_gt: bool) -> Result<()> {
    let manifest = load_manifest(&input.manifest)?;
    let video = select_video(&manifest, input.video.as_deref())?;
    let frames = load_frames(video, manifest.num_classes)?;
    let mut segs = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let t = i + 1;
        let seg = if alternate_gt && t % 2 == 0 {
            require_gt(f, t, &video.name)?
        } else {
            f.pred.clone()
        };
        segs.push(seg_frame(&f.features, &seg)?);
    }
    let result = video_consistency(&segs, &search_config(input))?;

    // True quality of the predicted frame in each alternating pair.
    let gt_tc = if alternate_gt {
        let mut scores = Vec::with_capacity(result.per_pair.len());
        for p in 0..result.per_pair.len() {
            let t = if p % 2 == 0 { p + 1 } else { p + 2 };
            let f = &frames[t - 1];
            let gt = require_gt(f, t, &video.name)?;
            let mask = vec![true; gt.labels().len()];
            scores.push(miou(&f.pred, &gt, &mask, manifest.num_classes)?);
        }
        Some(scores)
    } else {
        None
    };

    prepare_out(&input.out)?;
    let mut header = vec!["t", "rho_ab", "rho_ba", "rho"];
    if gt_tc.is_some() {
        header.push("gt_tc");
    }
    let mut table = Table::new(&header);
    for (p, pair) in result.per_pair.iter().enumerate() {
        let mut row = vec![
            (p + 1).to_string(),
            fmt_num(pair.rho_ab()),
            fmt_num(pair.rho_ba()),
            fmt_num(pair.rho),
        ];
        if let Some(scores) = &gt_tc {
            row.push(fmt_num(scores[p]));
        }
        table.row(row);
    }
    let mut summary = vec![
        "mean".to_string(),
        fmt_num(mean(result.per_pair.iter().map(|p| p.rho_ab()))),
        fmt_num(mean(result.per_pair.iter().map(|p| p.rho_ba()))),
        fmt_num(result.rho_tilde),
    ];
    if let Some(scores) = &gt_tc {
        summary.push(fmt_num(mean(scores.iter().copied())));
    }
    table.row(summary);
    table.save(&input.out.join("pc_video.csv"))?;
    write_run_config(g, input, "pc-video", json!({ "alternate_gt": alternate_gt }))?;
    println!(
        "{}: {} pairs, temporal consistency = {}",
        video.name,
        result.per_pair.len(),
        fmt_num(result.rho_tilde)
    );
    Ok(())
}

struct HeldOut {
    errors: Vec<bool>,
    fused: Vec<f64>,
    confidence: Vec<f64>,
    pc: Vec<f64>,
}

impl HeldOut {
    fn push(&mut self, labels: Vec<bool>, pred: &CorrectnessPrediction) {
        self.errors.extend(labels);
        self.fused.extend(pred.error_scores());
        self.confidence.extend(pred.z.values().iter().map(|v| -v));
        self.pc.extend(pred.rho_hat.values().iter().map(|v| -v));
    }
}

fn write_curves(out: &Path, suffix: &str, roc: &CurveReport, pr: &CurveReport) -> Result<()> {
    let mut table = Table::new(&["threshold", "fpr", "tpr"]);
    for p in &roc.points {
        table.row([fmt_num(p.threshold), fmt_num(p.x), fmt_num(p.y)]);
    }
    table.save(&out.join(format!("roc{suffix}.csv")))?;
    let mut table = Table::new(&["threshold", "recall", "precision"]);
    for p in &pr.points {
        table.row([fmt_num(p.threshold), fmt_num(p.x), fmt_num(p.y)]);
    }
    table.save(&out.join(format!("pr{suffix}.csv")))
}

pub fn predict(g: &Globals, input: &Input, weight: f64, label_every: Option<usize>) -> Result<()> {
    let manifest = load_manifest(&input.manifest)?;
    let video = select_video(&manifest, input.video.as_deref())?;
    let labeled: Vec<usize> = match label_every {
        Some(0) => return Err(CliError::Input("--label-every must be at least 1".into())),
        Some(n) => (1..=video.len()).step_by(n).collect(),
        None => video.labeled_frames(),
    };
    if labeled.is_empty() {
        return Err(CliError::Input(format!(
            "video '{}' has no labeled frames",
            video.name
        )));
    }
    let unlabeled: Vec<usize> = (1..=video.len()).filter(|t| !labeled.contains(t)).collect();
    if unlabeled.is_empty() {
        return Err(CliError::Input(format!(
            "video '{}' has no unlabeled frames",
            video.name
        )));
    }
    let frames = load_frames(video, manifest.num_classes)?;
    let labeled_frames = labeled
        .iter()
        .map(|&t| {
            let f = &frames[t - 1];
            Ok((t, seg_frame(&f.features, &require_gt(f, t, &video.name)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for &t in &unlabeled {
        if frames[t - 1].confidence.is_none() {
            return Err(CliError::Input(format!(
                "video '{}' frame {t} has no confidence map",
                video.name
            )));
        }
    }

    prepare_out(&input.out)?;
    let cfg = search_config(input);
    let mut summary = Table::new(&[
        "t",
        "labeled_frame",
        "mean_alpha",
        "mean_confidence",
        "mean_rho_hat",
    ]);
    let mut held_out = HeldOut {
        errors: Vec::new(),
        fused: Vec::new(),
        confidence: Vec::new(),
        pc: Vec::new(),
    };
    for &t in &unlabeled {
        let f = &frames[t - 1];
        let z = f.confidence.as_ref().expect("checked above");
        let t_l = nearest_labeled_frame(t, &labeled)?;
        let reference = &labeled_frames
            .iter()
            .find(|(l, _)| *l == t_l)
            .expect("nearest frame is labeled")
            .1;
        let rho_hat = pc_map_directional(&seg_frame(&f.features, &f.pred)?, reference, &cfg)?;
        let pred = predict_correctness(z, &rho_hat, weight)?;
        write_tensor(&pred.alpha.to_tensor(), input.out.join(format!("alpha_t{t}.npy")))?;
        summary.row([
            t.to_string(),
            t_l.to_string(),
            fmt_num(mean_of(&pred.alpha)),
            fmt_num(mean_of(&pred.z)),
            fmt_num(mean_of(&pred.rho_hat)),
        ]);
        if let Some(gt) = &f.gt {
            held_out.push(correctness_labels(&f.pred, gt)?, &pred);
        }
    }
    summary.save(&input.out.join("predict.csv"))?;
    write_run_config(
        g,
        input,
        "predict",
        json!({ "fusion_weight": weight, "label_every": label_every, "labeled_frames": labeled }),
    )?;

    let positives = held_out.errors.iter().filter(|&&e| e).count();
    if positives == 0 || positives == held_out.errors.len() {
        println!(
            "{}: scored {} unlabeled frames; no held-out ground truth with both correct and wrong pixels, curves skipped",
            video.name,
            unlabeled.len()
        );
        return Ok(());
    }
    let mut auc = Table::new(&["score", "roc_auc", "average_precision", "errors", "correct"]);
    let mut line = Vec::new();
    for (name, suffix, scores) in [
        ("fused", "", &held_out.fused),
        ("confidence", "_confidence", &held_out.confidence),
        ("pc", "_pc", &held_out.pc),
    ] {
        let (roc, pr) = roc_pr(scores, &held_out.errors)?;
        write_curves(&input.out, suffix, &roc, &pr)?;
        auc.row([
            name.to_string(),
            fmt_num(roc.auc),
            fmt_num(pr.auc),
            roc.positive_count.to_string(),
            roc.negative_count.to_string(),
        ]);
        line.push(format!("{name} {}", fmt_num(roc.auc)));
    }
    auc.save(&input.out.join("auc.txt"))?;
    println!(
        "{}: scored {} unlabeled frames; error-detection AUROC {}",
        video.name,
        unlabeled.len(),
        line.join(", ")
    );
    Ok(())
}

fn mean_of(map: &ScoreMap) -> f64 {
    mean(map.values().iter().copied())
}

pub fn flow_tc(g: &Globals, input: &Input, on_gt: bool) -> Result<()> {
    let manifest = load_manifest(&input.manifest)?;
    let video = select_video(&manifest, input.video.as_deref())?;
    let frames = load_frames(video, manifest.num_classes)?;
    let segs = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if on_gt {
                require_gt(f, i + 1, &video.name)
            } else {
                Ok(f.pred.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let flows: Vec<_> = frames.into_iter().map(|f| f.flow_to_next).collect();
    let result = flow_consistency(&segs, &flows)?;

    prepare_out(&input.out)?;
    let mut table = Table::new(&["t", "miou", "invalid_pixels"]);
    for (p, pair) in result.per_pair.iter().enumerate() {
        table.row([(p + 1).to_string(), fmt_num(pair.miou), pair.invalid.to_string()]);
    }
    let invalid: usize = result.per_pair.iter().map(|p| p.invalid).sum();
    table.row(["mean".to_string(), fmt_num(result.mean), invalid.to_string()]);
    table.save(&input.out.join("flow_tc.csv"))?;
    write_run_config(g, input, "flow-tc", json!({ "on_gt": on_gt }))?;
    println!(
        "{}: {} pairs, flow consistency mIoU = {}",
        video.name,
        result.per_pair.len(),
        fmt_num(result.mean)
    );
    Ok(())
}

pub fn eval_corr(a: &Path, b: &Path, col_a: Option<&str>, col_b: Option<&str>, out: &Path) -> Result<()> {
    let x = read_series(a, col_a)?;
    let y = read_series(b, col_b)?;
    let report = correlation_report(&x, &y)?;
    prepare_out(out)?;
    let mut table = Table::new(&["n", "pearson", "spearman", "kendall"]);
    table.row([
        report.n.to_string(),
        fmt_num(report.pearson),
        fmt_num(report.spearman),
        fmt_num(report.kendall),
    ]);
    table.save(&out.join("correlation.csv"))?;
    println!(
        "n = {}: pearson {}, spearman {}, kendall {}",
        report.n,
        fmt_num(report.pearson),
        fmt_num(report.spearman),
        fmt_num(report.kendall)
    );
    Ok(())
}

pub fn loss(g: &Globals, input: &Input, span: usize) -> Result<()> {
    let manifest = load_manifest(&input.manifest)?;
    let selected: Vec<&Video> = match &input.video {
        Some(name) => vec![manifest.video(name)?],
        None => manifest.videos.iter().collect(),
    };
    let mut videos = Vec::with_capacity(selected.len());
    for video in selected {
        let frames = load_frames(video, manifest.num_classes)?
            .iter()
            .map(|f| seg_frame(&f.features, &f.pred))
            .collect::<Result<Vec<_>>>()?;
        videos.push((video.name.clone(), frames));
    }
    let result = pc_loss(&videos, span, &search_config(input))?;

    prepare_out(&input.out)?;
    let mut table = Table::new(&["video", "pairs", "loss"]);
    for v in &result.per_video {
        table.row([v.name.clone(), v.pairs.to_string(), fmt_num(v.loss)]);
    }
    let pairs: usize = result.per_video.iter().map(|v| v.pairs).sum();
    table.row(["mean".to_string(), pairs.to_string(), fmt_num(result.value)]);
    table.save(&input.out.join("loss.csv"))?;
    write_run_config(g, input, "loss", json!({ "span": span }))?;
    println!(
        "{} videos, {pairs} pairs: loss = {}",
        result.per_video.len(),
        fmt_num(result.value)
    );
    Ok(())
}

pub fn agreement(g: &Globals, input: &Input, k: usize) -> Result<()> {
    let manifest = load_manifest(&input.manifest)?;
    let video = select_video(&manifest, input.video.as_deref())?;
    let labeled = video.labeled_frames();
    if labeled.len() < 2 {
        return Err(CliError::Input(format!(
            "video '{}' needs at least 2 frames with ground truth, has {}",
            video.name,
            labeled.len()
        )));
    }
    let frames = labeled
        .par_iter()
        .map(|&t| {
            let f = video.frame(t)?.load(manifest.num_classes)?;
            let gt = f.gt.expect("frame listed as labeled");
            seg_frame(&f.features, &gt)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(&["t_a", "t_b", "top1_rate", "topk_rate", "corr_gap"]);
    let mut rows = Vec::new();
    for (p, pair) in frames.windows(2).enumerate() {
        let r = class_agreement(pair[0].features(), pair[1].features(), pair[0].seg(), pair[1].seg(), k)?;
        table.row([
            labeled[p].to_string(),
            labeled[p + 1].to_string(),
            fmt_num(r.top1_rate),
            fmt_num(r.topk_rate),
            fmt_num(r.corr_gap),
        ]);
        rows.push(r);
    }
    let top1 = mean(rows.iter().map(|r| r.top1_rate));
    let topk = mean(rows.iter().map(|r| r.topk_rate));
    table.row([
        "mean".to_string(),
        String::new(),
        fmt_num(top1),
        fmt_num(topk),
        fmt_num(mean(rows.iter().map(|r| r.corr_gap))),
    ]);
    prepare_out(&input.out)?;
    table.save(&input.out.join("agreement.csv"))?;
    write_run_config(g, input, "agreement", json!({ "topk": k }))?;
    println!(
        "{}: {} pairs, top-1 agreement {}, top-{k} agreement {}",
        video.name,
        rows.len(),
        fmt_num(top1),
        fmt_num(topk)
    );
    Ok(())
}

pub fn plot(csv: &Path, out: &Path, x_col: Option<&str>, y_col: Option<&str>) -> Result<()> {
    let points = read_xy(csv, x_col, y_col)?;
    let mut reader = csv::Reader::from_path(csv).map_err(|e| CliError::Input(e.to_string()))?;
    let headers = reader.headers().map_err(|e| CliError::Input(e.to_string()))?;
    let n = headers.len();
    let x_label = x_col.unwrap_or(&headers[n - 2]).to_string();
    let y_label = y_col.unwrap_or(&headers[n - 1]).to_string();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_out(dir)?;
    }
    fs::write(out, render_svg(&points, &x_label, &y_label)).map_err(|e| CliError::output(out, e))?;
    println!("{} points plotted to {}", points.len(), out.display());
    Ok(())
}
