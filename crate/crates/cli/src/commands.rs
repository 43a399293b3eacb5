use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use palf_core::dataset::{ensure_dir, parse_frame_selection, DatasetLayout};
use palf_core::evaluation::{evaluate_frames, match_to_ground_truth, FrameInput, MetricsReport};
use palf_core::fusion::fuse_frame;
use palf_core::io::{load_box_list, load_detections, load_session, save_detections, write_atomic, Loaded};
use palf_core::preannotate::{preannotate_frame, FitOutcome};
use palf_core::synth::{generate_frame, write_frame, SceneConfig};
use palf_core::{Detection3D, DetectionFile, FusionConfig, LabeledBox, PreannotateConfig};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{EvaluateArgs, FrameArgs, FuseArgs, PreannotateArgs, ServeArgs, SynthArgs};
use crate::CliError;

fn layout(args: &FrameArgs) -> Result<DatasetLayout, CliError> {
    if !args.dataset_root.is_dir() {
        return Err(CliError::Usage(format!(
            "dataset root {} is not a directory",
            args.dataset_root.display()
        )));
    }
    let mut l = DatasetLayout::new(&args.dataset_root);
    l.camera_key = args.camera.clone();
    Ok(l)
}

fn selected_frames(layout: &DatasetLayout, args: &FrameArgs) -> Result<Vec<String>, CliError> {
    let ids = match &args.frames {
        Some(sel) => parse_frame_selection(sel)?,
        None => layout.frame_ids()?,
    };
    if let Some(missing) = ids.iter().find(|id| !layout.has_frame(id)) {
        return Err(CliError::Usage(format!(
            "frame `{missing}` has no scan at {}",
            layout.velodyne(missing).display()
        )));
    }
    Ok(ids)
}

/// Runs `f` over the frames on a pool of `workers` threads, keeping frame
/// order. Every frame runs even when some fail; the first failure is returned.
fn per_frame<R: Send>(
    workers: usize,
    ids: &[String],
    f: impl Fn(&str) -> Result<R, CliError> + Sync + Send,
) -> Result<Vec<R>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<Result<R, CliError>> = pool.install(|| ids.par_iter().map(|id| f(id)).collect());
    let mut out = Vec::with_capacity(results.len());
    let mut first_err = None;
    for (id, r) in ids.iter().zip(results) {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                eprintln!("frame {id}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn log_warnings(id: &str, what: &str, warnings: &[String]) {
    for w in warnings {
        tracing::warn!("frame {id}: {what}: {w}");
    }
}

fn print_summary<S: Serialize>(json: bool, summary: &S, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(summary).expect("summary serializes"));
    } else {
        print!("{}", text());
    }
}

fn preannotate_config(args: &PreannotateArgs) -> Result<PreannotateConfig, CliError> {
    let mut cfg = PreannotateConfig::default();
    if let Some(v) = args.point_threshold {
        cfg.point_threshold = v;
    }
    if let Some(v) = args.crop_margin {
        cfg.crop_margin_m = v;
    }
    if let Some(v) = args.yaw_halfwidth {
        cfg.yaw_search_halfwidth_rad = v.to_radians();
    }
    if let Some(v) = args.yaw_step {
        cfg.yaw_step_rad = v.to_radians();
    }
    if let Some(v) = args.ground_band {
        cfg.ground_band_m = v;
    }
    if let Some(v) = args.min_score {
        cfg.min_score = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct PreannotateSummary {
    frame_id: String,
    detections: usize,
    boxes: usize,
    fitted: usize,
    below_threshold: usize,
    degenerate: usize,
    output: PathBuf,
}

/// Pre-annotated boxes as a detection file: the fitted box replaces the
/// detector's, class and score carry over.
pub fn preannotation_file(frame_id: &str, detections: &DetectionFile, cfg: &PreannotateConfig, cloud: &palf_core::PointCloud) -> (DetectionFile, Vec<FitOutcome>) {
    let boxes = preannotate_frame(cloud, &detections.boxes3d, cfg);
    let outcomes = boxes.iter().map(|b| b.outcome).collect();
    let file = DetectionFile {
        frame_id: Some(frame_id.to_string()),
        boxes3d: boxes
            .into_iter()
            .map(|b| Detection3D {
                bbox: b.bbox,
                class_label: b.class_label,
                score: b.score,
            })
            .collect(),
        boxes2d: Vec::new(),
    };
    (file, outcomes)
}

pub fn preannotate(args: &PreannotateArgs) -> Result<(), CliError> {
    let cfg = preannotate_config(args)?;
    let layout = layout(&args.frames)?;
    let ids = selected_frames(&layout, &args.frames)?;
    let out_dir = args.out.clone().unwrap_or_else(|| layout.root.join("preannotations"));
    ensure_dir(&out_dir)?;

    let summaries = per_frame(args.frames.workers, &ids, |id| {
        let Loaded { value: cloud, warnings } = layout.load_cloud(id)?;
        log_warnings(id, "point cloud", &warnings);
        let Loaded { value: dets, warnings } = load_detections(layout.detections(id))?;
        log_warnings(id, "detections", &warnings);
        let (file, outcomes) = preannotation_file(id, &dets, &cfg, &cloud);
        let output = out_dir.join(format!("{id}.json"));
        save_detections(&output, &file)?;
        let count = |o: FitOutcome| outcomes.iter().filter(|&&x| x == o).count();
        Ok(PreannotateSummary {
            frame_id: id.to_string(),
            detections: dets.boxes3d.len(),
            boxes: file.boxes3d.len(),
            fitted: count(FitOutcome::Fitted),
            below_threshold: count(FitOutcome::BelowThreshold),
            degenerate: count(FitOutcome::Degenerate),
            output,
        })
    })?;
    print_summary(args.frames.json, &json!({ "frames": summaries }), || {
        summaries
            .iter()
            .map(|s| {
                format!(
                    "{}: {} of {} detections kept, {} fitted, {} below threshold, {} degenerate -> {}\n",
                    s.frame_id,
                    s.boxes,
                    s.detections,
                    s.fitted,
                    s.below_threshold,
                    s.degenerate,
                    s.output.display()
                )
            })
            .collect()
    });
    Ok(())
}

#[derive(Serialize)]
struct FuseSummary {
    frame_id: String,
    boxes: usize,
    confirmed: usize,
    wrong: usize,
    missed: usize,
    out_of_view: usize,
    calibration_mismatch: bool,
    output: Option<PathBuf>,
}

fn fusion_config(args: &FuseArgs) -> Result<FusionConfig, CliError> {
    let mut cfg = FusionConfig::default();
    if let Some(v) = args.iou2d_threshold {
        cfg.iou2d_threshold = v;
    }
    if let Some(v) = args.max_center_distance {
        cfg.max_center_distance_px = Some(v);
    }
    if let Some(v) = args.min_2d_score {
        cfg.min_2d_score = v;
    }
    cfg.missed_check = !args.no_missed_check;
    cfg.validate()?;
    Ok(cfg)
}

pub fn fuse(args: &FuseArgs) -> Result<(), CliError> {
    let cfg = fusion_config(args)?;
    let layout = layout(&args.frames)?;
    let ids = selected_frames(&layout, &args.frames)?;
    let pre_dir = args.preannotations.clone().unwrap_or_else(|| layout.root.join("preannotations"));
    let out_dir = args.out.clone().unwrap_or_else(|| layout.root.join("fusion"));
    if args.disabled {
        print_summary(
            args.frames.json,
            &json!({ "disabled": true, "frames": ids }),
            || format!("checks disabled; {} frame(s) left as pre-annotated, no reports written\n", ids.len()),
        );
        return Ok(());
    }
    ensure_dir(&out_dir)?;

    let summaries = per_frame(args.frames.workers, &ids, |id| {
        let Loaded { value: cloud, warnings } = layout.load_cloud(id)?;
        log_warnings(id, "point cloud", &warnings);
        let calib = layout.load_calibration(id)?;
        let Loaded { value: boxes, warnings } = load_box_list(pre_dir.join(format!("{id}.json")))?;
        log_warnings(id, "boxes", &warnings);
        let Loaded { value: dets, warnings } = load_detections(layout.detections(id))?;
        log_warnings(id, "detections", &warnings);
        let labeled: Vec<LabeledBox> = boxes
            .into_iter()
            .map(|d| LabeledBox {
                bbox: d.bbox,
                class_label: d.class_label,
            })
            .collect();
        let mut report = fuse_frame(&cloud, &calib, &labeled, &dets.boxes2d, &cfg);
        report.frame_id = id.to_string();
        for w in &report.warnings {
            tracing::warn!("frame {id}: {w}");
        }
        let output = out_dir.join(format!("{id}.json"));
        write_atomic(&output, &report.to_json_bytes())?;
        Ok(FuseSummary {
            frame_id: id.to_string(),
            boxes: labeled.len(),
            confirmed: report.confirmed.len(),
            wrong: report.wrong.len(),
            missed: report.missed.len(),
            out_of_view: report.out_of_view.len(),
            calibration_mismatch: report.calibration_mismatch,
            output: Some(output),
        })
    })?;
    print_summary(args.frames.json, &json!({ "disabled": false, "frames": summaries }), || {
        summaries
            .iter()
            .map(|s| {
                format!(
                    "{}: {} boxes: {} confirmed, {} wrong, {} out of view; {} missed{}\n",
                    s.frame_id,
                    s.boxes,
                    s.confirmed,
                    s.wrong,
                    s.out_of_view,
                    s.missed,
                    if s.calibration_mismatch { " (calibration mismatch?)" } else { "" }
                )
            })
            .collect()
    });
    Ok(())
}

/// Frame name to file: a single file maps its stem, a directory maps every
/// `*.json` inside.
fn json_files(path: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|e| palf_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        for e in entries.filter_map(|e| e.ok()) {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "json") {
                if let Some(stem) = p.file_stem() {
                    out.insert(stem.to_string_lossy().into_owned(), p);
                }
            }
        }
    } else if path.is_file() {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.insert(stem, path.to_path_buf());
    } else {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    Ok(out)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.min_iou) {
        return Err(CliError::Usage("--min-iou must lie in [0, 1]".into()));
    }
    let single = args.pred.is_file() && args.gt.is_file();
    let preds = json_files(&args.pred)?;
    let gts = json_files(&args.gt)?;
    let sessions = match &args.session {
        Some(p) => json_files(p)?,
        None => BTreeMap::new(),
    };
    let pairs: Vec<(String, Option<PathBuf>, PathBuf)> = if single {
        let (name, gt) = gts.into_iter().next().expect("one file");
        vec![(name, preds.into_values().next(), gt)]
    } else {
        for name in preds.keys().filter(|n| !gts.contains_key(*n)) {
            tracing::warn!("{name}: no ground truth, skipped");
        }
        gts.into_iter().map(|(name, gt)| (name.clone(), preds.get(&name).cloned(), gt)).collect()
    };
    let mut frames = Vec::with_capacity(pairs.len());
    for (name, pred, gt) in pairs {
        let load = |p: &Path| -> Result<Vec<palf_core::Box3D>, CliError> {
            let Loaded { value, warnings } = load_box_list(p)?;
            log_warnings(&name, &p.display().to_string(), &warnings);
            Ok(value.into_iter().map(|d| d.bbox).collect())
        };
        let gt_boxes = load(&gt)?;
        let pred_boxes = match &pred {
            Some(p) => load(p)?,
            None => {
                tracing::warn!("{name}: no prediction, counted as empty");
                Vec::new()
            }
        };
        let session = match (single, sessions.len(), sessions.get(&name)) {
            (_, _, Some(p)) => Some(p),
            (true, 1, None) => sessions.values().next(),
            _ => None,
        };
        let total_time_s = match session {
            Some(p) => load_session::<f64>(p)?.timing_span(),
            None => None,
        };
        frames.push(FrameInput {
            frame_id: name,
            matched: match_to_ground_truth(&pred_boxes, &gt_boxes, args.min_iou),
            total_time_s,
        });
    }
    let report = evaluate_frames(&frames);
    let bytes = {
        let mut v = serde_json::to_vec_pretty(&report).expect("report serializes");
        v.push(b'\n');
        v
    };
    if let Some(out) = &args.out {
        write_atomic(out, &bytes)?;
    }
    if args.json {
        print!("{}", String::from_utf8(bytes).expect("utf-8"));
    } else {
        println!("{}", MetricsReport::render_table(&[(args.label.as_str(), &report)]));
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let mut cfg = palf_service::ServiceConfig::load(args.config.as_deref())?;
    if let Some(root) = &args.dataset_root {
        cfg.dataset_root = root.clone();
    }
    if let Some(port) = args.port {
        cfg.port = port;
    }
    if let Some(bind) = args.bind {
        cfg.bind = bind;
    }
    if !cfg.dataset_root.is_dir() {
        return Err(CliError::Usage(format!(
            "dataset root {} is not a directory",
            cfg.dataset_root.display()
        )));
    }
    let addr = cfg.socket_addr();
    if args.json {
        println!("{}", json!({ "listening": addr.to_string(), "dataset_root": cfg.dataset_root }));
    } else {
        println!("listening on http://{addr}");
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(format!("cannot start runtime: {e}")))?;
    rt.block_on(palf_service::serve(cfg))?;
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let layout = DatasetLayout::new(&args.out);
    let cfg = if args.clean {
        SceneConfig::clean()
    } else {
        SceneConfig::default()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut ids = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let frame = generate_frame(&format!("{i:06}"), &cfg, &mut rng);
        write_frame(&layout, &frame)?;
        ids.push(frame.frame_id);
    }
    print_summary(args.json, &json!({ "root": args.out, "frames": ids }), || {
        format!("wrote {} frame(s) to {}\n", ids.len(), args.out.display())
    });
    Ok(())
}
