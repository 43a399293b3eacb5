//! Annotation-quality metrics against a reference annotation: 3D IoU over
//! matched pairs, precision, recall, miss rate and annotator timing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::geometry::{iou3d, Box3};
use crate::io::AnnotationSession;
use crate::scalar::Real;

/// Default minimum 3D IoU for a candidate to count as a true positive.
pub const DEFAULT_MIN_IOU3D: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub candidate: usize,
    pub gt: usize,
    pub iou3d: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GtMatch {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_candidates: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

impl GtMatch {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn false_positives(&self) -> usize {
        self.unmatched_candidates.len()
    }

    pub fn false_negatives(&self) -> usize {
        self.unmatched_gt.len()
    }

    /// Candidate and reference roles exchanged.
    pub fn swapped(&self) -> GtMatch {
        GtMatch {
            pairs: self
                .pairs
                .iter()
                .map(|p| MatchedPair {
                    candidate: p.gt,
                    gt: p.candidate,
                    iou3d: p.iou3d,
                })
                .collect(),
            unmatched_candidates: self.unmatched_gt.clone(),
            unmatched_gt: self.unmatched_candidates.clone(),
        }
    }
}

/// Maximum-total-IoU one-to-one matching; pairs below `min_iou3d` are demoted
/// to unmatched on both sides.
pub fn match_to_ground_truth<T: Real>(candidates: &[Box3<T>], gt: &[Box3<T>], min_iou3d: T) -> GtMatch {
    let mut ious = Vec::with_capacity(candidates.len() * gt.len());
    for c in candidates {
        for g in gt {
            ious.push(iou3d(c, g));
        }
    }
    let costs = CostMatrix::new(
        candidates.len(),
        gt.len(),
        ious.iter().map(|&v| T::one() - v).collect(),
    )
    .expect("1 - IoU lies in [0, 1]");
    let m = solve_assignment(&costs, None);

    let mut out = GtMatch::default();
    let mut cand_free = vec![true; candidates.len()];
    let mut gt_free = vec![true; gt.len()];
    for (r, c) in m.pairs {
        let iou = ious[r * gt.len() + c];
        if iou >= min_iou3d && iou > T::zero() {
            out.pairs.push(MatchedPair {
                candidate: r,
                gt: c,
                iou3d: iou.to_f64_lossy(),
            });
            cand_free[r] = false;
            gt_free[c] = false;
        }
    }
    out.unmatched_candidates = (0..candidates.len()).filter(|&i| cand_free[i]).collect();
    out.unmatched_gt = (0..gt.len()).filter(|&i| gt_free[i]).collect();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame_id: String,
    pub mean_iou3d: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub miss_rate: f64,
    pub num_objects: usize,
    pub num_gt: usize,
    pub true_positives: usize,
    pub total_time_s: Option<f64>,
}

/// One row of the quality table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean IoU over true-positive pairs; absent when there are none.
    pub mean_iou3d: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    /// `1 − recall`.
    pub miss_rate: f64,
    /// Number of candidate boxes.
    pub num_objects: usize,
    pub num_gt: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub total_time_s: Option<f64>,
    pub time_per_object_s: Option<f64>,
    pub per_frame: Vec<FrameMetrics>,
}

/// `num / den`, with the empty-denominator case resolved to 1 when the
/// opposite side is also empty and 0 otherwise. The rule is symmetric, so
/// exchanging candidates and reference exchanges precision and recall.
fn ratio(num: usize, den: usize, other_side_empty: bool) -> f64 {
    if den == 0 {
        if other_side_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
    iou_sum: f64,
}

impl Counts {
    fn of(m: &GtMatch) -> Self {
        Counts {
            tp: m.true_positives(),
            fp: m.false_positives(),
            fn_: m.false_negatives(),
            iou_sum: m.pairs.iter().map(|p| p.iou3d).sum(),
        }
    }

    fn candidates(&self) -> usize {
        self.tp + self.fp
    }

    fn gt(&self) -> usize {
        self.tp + self.fn_
    }

    fn precision(&self) -> f64 {
        ratio(self.tp, self.candidates(), self.gt() == 0)
    }

    fn recall(&self) -> f64 {
        ratio(self.tp, self.gt(), self.candidates() == 0)
    }

    fn mean_iou(&self) -> Option<f64> {
        (self.tp > 0).then(|| self.iou_sum / self.tp as f64)
    }
}

/// Metrics for a single frame.
pub fn compute_metrics<T: Real>(m: &GtMatch, timing: Option<&AnnotationSession<T>>) -> MetricsReport {
    evaluate_frames(&[FrameInput {
        frame_id: String::new(),
        matched: m.clone(),
        total_time_s: timing.and_then(AnnotationSession::timing_span),
    }])
    .without_breakdown()
}

/// A matched frame ready for aggregation.
#[derive(Clone, Debug)]
pub struct FrameInput {
    pub frame_id: String,
    pub matched: GtMatch,
    /// Annotator time spent on the frame, if recorded.
    pub total_time_s: Option<f64>,
}

/// Pools counts over frames (micro-average) and sums recorded time.
pub fn evaluate_frames(frames: &[FrameInput]) -> MetricsReport {
    let mut total = Counts {
        tp: 0,
        fp: 0,
        fn_: 0,
        iou_sum: 0.0,
    };
    let mut time: Option<f64> = None;
    let mut per_frame = Vec::with_capacity(frames.len());
    for f in frames {
        let c = Counts::of(&f.matched);
        let recall = c.recall();
        per_frame.push(FrameMetrics {
            frame_id: f.frame_id.clone(),
            mean_iou3d: c.mean_iou(),
            precision: c.precision(),
            recall,
            miss_rate: 1.0 - recall,
            num_objects: c.candidates(),
            num_gt: c.gt(),
            true_positives: c.tp,
            total_time_s: f.total_time_s,
        });
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn_ += c.fn_;
        total.iou_sum += c.iou_sum;
        if let Some(t) = f.total_time_s {
            time = Some(time.unwrap_or(0.0) + t);
        }
    }
    let recall = total.recall();
    let num_objects = total.candidates();
    MetricsReport {
        mean_iou3d: total.mean_iou(),
        precision: total.precision(),
        recall,
        miss_rate: 1.0 - recall,
        num_objects,
        num_gt: total.gt(),
        true_positives: total.tp,
        false_positives: total.fp,
        false_negatives: total.fn_,
        total_time_s: time,
        time_per_object_s: time.filter(|_| num_objects > 0).map(|t| t / num_objects as f64),
        per_frame,
    }
}

impl MetricsReport {
    fn without_breakdown(mut self) -> Self {
        self.per_frame.clear();
        self
    }

    /// Plain-text table with one row per labelled report.
    pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
        const HEADERS: [&str; 8] = [
            "Method",
            "Time (s)",
            "3D IoU (%)",
            "Precision (%)",
            "Recall (%)",
            "Miss Rate (%)",
            "Number of objects",
            "Time per object (s)",
        ];
        let pct = |v: f64| format!("{:.1}", 100.0 * v);
        let opt = |v: Option<f64>, f: &dyn Fn(f64) -> String| v.map(f).unwrap_or_else(|| "-".into());
        let body: Vec<[String; 8]> = rows
            .iter()
            .map(|(name, r)| {
                [
                    name.to_string(),
                    opt(r.total_time_s, &|t| format!("{t:.1}")),
                    opt(r.mean_iou3d, &pct),
                    pct(r.precision),
                    pct(r.recall),
                    pct(r.miss_rate),
                    r.num_objects.to_string(),
                    opt(r.time_per_object_s, &|t| format!("{t:.1}")),
                ]
            })
            .collect();
        let mut widths = HEADERS.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 {
                        format!("{c:<w$}", w = widths[k])
                    } else {
                        format!("{c:>w$}", w = widths[k])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
        };
        line(&mut out, &HEADERS.map(String::from));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("-+-"));
        for row in &body {
            line(&mut out, row);
        }
        out
    }
}
