//! Tracking evaluation metrics: success curve, AUC, precision, normalized
//! precision, average overlap and success rates.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// Number of points on the default success-curve grid `{0.00, 0.05, ..., 1.00}`.
pub const SUCCESS_GRID_LEN: usize = 21;
/// Center-error threshold for precision, in pixels.
pub const PRECISION_THRESHOLD_PX: f64 = 20.0;
/// Number of points on the normalized-precision grid `{0, 0.01, ..., 0.5}`.
pub const NORM_PRECISION_GRID_LEN: usize = 51;

pub fn default_thresholds() -> Vec<f64> {
    (0..SUCCESS_GRID_LEN).map(|k| k as f64 / 20.0).collect()
}

fn norm_precision_thresholds() -> Vec<f64> {
    (0..NORM_PRECISION_GRID_LEN).map(|k| k as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuccessCurve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl SuccessCurve {
    /// Mean of the curve over its threshold grid.
    pub fn area(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_ious(ious: &[f64]) -> Result<()> {
    if ious.is_empty() {
        return Err(Error::invalid("empty IoU list"));
    }
    if let Some(bad) = ious.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("IoU {bad} outside [0, 1]")));
    }
    Ok(())
}

/// `S(rho) = fraction of frames with IoU > rho` (strict).
pub fn success_curve(ious: &[f64], thresholds: &[f64]) -> Result<SuccessCurve> {
    check_ious(ious)?;
    let n = ious.len() as f64;
    let values = thresholds
        .iter()
        .map(|&rho| ious.iter().filter(|&&v| v > rho).count() as f64 / n)
        .collect();
    Ok(SuccessCurve {
        thresholds: thresholds.to_vec(),
        values,
    })
}

/// Area under the success curve on the default 21-point grid.
pub fn auc(ious: &[f64]) -> Result<f64> {
    Ok(success_curve(ious, &default_thresholds())?.area())
}

/// Returns `(ao, sr_0.5, sr_0.75)`.
pub fn ao_sr(ious: &[f64]) -> Result<(f64, f64, f64)> {
    check_ious(ious)?;
    let n = ious.len() as f64;
    let ao = ious.iter().sum::<f64>() / n;
    let sr = |rho: f64| ious.iter().filter(|&&v| v > rho).count() as f64 / n;
    Ok((ao, sr(0.5), sr(0.75)))
}

fn check_lengths(pred: &[BBox], gt: &[BBox]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} ground-truth boxes",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty box list"));
    }
    Ok(())
}

fn center_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Fraction of frames whose centre error is at most `threshold_px`.
pub fn precision(pred: &[BBox], gt: &[BBox], threshold_px: f64) -> Result<f64> {
    check_lengths(pred, gt)?;
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| center_distance(p, g) <= threshold_px)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Result of [`norm_precision`]: the curve mean plus how many frames were skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormPrecision {
    pub value: f64,
    pub skipped: usize,
}

/// Centre error scaled by the ground-truth size, averaged over the 0..0.5 grid.
/// Frames with zero-size ground truth are skipped and counted.
pub fn norm_precision(pred: &[BBox], gt: &[BBox]) -> Result<NormPrecision> {
    check_lengths(pred, gt)?;
    let mut errors = Vec::with_capacity(pred.len());
    let mut skipped = 0;
    for (p, g) in pred.iter().zip(gt) {
        if g.width() <= 0.0 || g.height() <= 0.0 {
            skipped += 1;
            continue;
        }
        let (px, py) = p.center();
        let (gx, gy) = g.center();
        let dx = (px - gx) / g.width();
        let dy = (py - gy) / g.height();
        errors.push((dx * dx + dy * dy).sqrt());
    }
    if errors.is_empty() {
        return Ok(NormPrecision {
            value: 0.0,
            skipped,
        });
    }
    let n = errors.len() as f64;
    let grid = norm_precision_thresholds();
    let total: f64 = grid
        .iter()
        .map(|&th| errors.iter().filter(|&&e| e <= th).count() as f64 / n)
        .sum();
    Ok(NormPrecision {
        value: total / grid.len() as f64,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceScore {
    pub name: String,
    pub frames: usize,
    pub auc: f64,
    pub precision: f64,
    pub norm_precision: f64,
    pub ao: f64,
    pub sr_05: f64,
    pub sr_075: f64,
    pub success: SuccessCurve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub precision: f64,
    pub norm_precision: f64,
    pub ao: f64,
    pub sr_05: f64,
    pub sr_075: f64,
    pub success: SuccessCurve,
    pub sequences: Vec<SequenceScore>,
    pub skipped_frames: usize,
}

/// Scores one sequence. Frames flagged absent are excluded.
pub fn evaluate_sequence(
    name: &str,
    pred: &[BBox],
    gt: &[BBox],
    absent: &[bool],
) -> Result<(SequenceScore, usize)> {
    if pred.len() != gt.len() || gt.len() != absent.len() {
        return Err(Error::Shape(format!(
            "sequence {name}: {} predictions, {} ground-truth boxes, {} absent flags",
            pred.len(),
            gt.len(),
            absent.len()
        )));
    }
    let (p, g): (Vec<BBox>, Vec<BBox>) = pred
        .iter()
        .zip(gt)
        .zip(absent)
        .filter(|(_, &a)| !a)
        .map(|((p, g), _)| (*p, *g))
        .unzip();
    if p.is_empty() {
        return Err(Error::invalid(format!("sequence {name} has no visible frames")));
    }
    let ious = p
        .iter()
        .zip(&g)
        .map(|(a, b)| iou(a, b))
        .collect::<Result<Vec<_>>>()?;
    let success = success_curve(&ious, &default_thresholds())?;
    let (ao, sr_05, sr_075) = ao_sr(&ious)?;
    let np = norm_precision(&p, &g)?;
    Ok((
        SequenceScore {
            name: name.to_string(),
            frames: ious.len(),
            auc: success.area(),
            precision: precision(&p, &g, PRECISION_THRESHOLD_PX)?,
            norm_precision: np.value,
            ao,
            sr_05,
            sr_075,
            success,
        },
        np.skipped,
    ))
}

/// Averages per-sequence scores. Sequences are sorted by name first, so the
/// aggregate does not depend on input order.
pub fn aggregate(mut sequences: Vec<SequenceScore>, skipped_frames: usize) -> Result<EvalReport> {
    if sequences.is_empty() {
        return Err(Error::invalid("no sequences to aggregate"));
    }
    sequences.sort_by(|a, b| a.name.cmp(&b.name));
    let n = sequences.len() as f64;
    let mean = |f: &dyn Fn(&SequenceScore) -> f64| sequences.iter().map(f).sum::<f64>() / n;
    let thresholds = default_thresholds();
    let values = (0..thresholds.len())
        .map(|k| mean(&|s| s.success.values[k]))
        .collect();
    Ok(EvalReport {
        auc: mean(&|s| s.auc),
        precision: mean(&|s| s.precision),
        norm_precision: mean(&|s| s.norm_precision),
        ao: mean(&|s| s.ao),
        sr_05: mean(&|s| s.sr_05),
        sr_075: mean(&|s| s.sr_075),
        success: SuccessCurve { thresholds, values },
        sequences,
        skipped_frames,
    })
}

impl EvalReport {
    /// Flat `key=value` rendering.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sequences={}", self.sequences.len());
        let _ = writeln!(out, "auc={}", self.auc);
        let _ = writeln!(out, "precision={}", self.precision);
        let _ = writeln!(out, "norm_precision={}", self.norm_precision);
        let _ = writeln!(out, "ao={}", self.ao);
        let _ = writeln!(out, "sr_05={}", self.sr_05);
        let _ = writeln!(out, "sr_075={}", self.sr_075);
        let _ = writeln!(out, "skipped_frames={}", self.skipped_frames);
        for s in &self.sequences {
            let _ = writeln!(
                out,
                "seq.{}=frames:{} auc:{} precision:{} norm_precision:{} ao:{} sr_05:{} sr_075:{}",
                s.name, s.frames, s.auc, s.precision, s.norm_precision, s.ao, s.sr_05, s.sr_075
            );
        }
        out
    }

    /// `threshold,success` CSV with a header row.
    pub fn success_csv(&self) -> String {
        let mut out = String::from("threshold,success\n");
        for (t, v) in self.success.thresholds.iter().zip(&self.success.values) {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join("report.txt");
        std::fs::write(&report, self.to_kv()).map_err(|e| Error::io(&report, e))?;
        let csv = dir.join("success.csv");
        std::fs::write(&csv, self.success_csv()).map_err(|e| Error::io(&csv, e))?;
        let svg = dir.join("success.svg");
        std::fs::write(&svg, crate::plot::success_svg(&[("tracker", &self.success)]))
            .map_err(|e| Error::io(&svg, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn success_curve_examples() {
        let th = default_thresholds();
        let c = success_curve(&[1.0, 1.0], &th).unwrap();
        assert!(c.values[..20].iter().all(|&v| v == 1.0));
        assert_eq!(c.values[20], 0.0);
        let c = success_curve(&[0.6, 0.4], &[0.5]).unwrap();
        assert_eq!(c.values, vec![0.5]);
        let c = success_curve(&[0.0], &th).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
        assert!(success_curve(&[], &th).is_err());
    }

    #[test]
    fn auc_examples() {
        assert!((auc(&[1.0; 5]).unwrap() - 20.0 / 21.0).abs() < 1e-15);
        assert_eq!(auc(&[0.0; 5]).unwrap(), 0.0);
        assert!((auc(&[0.5]).unwrap() - 10.0 / 21.0).abs() < 1e-15);
        assert!(auc(&[]).is_err());
    }

    #[test]
    fn precision_examples() {
        let g = vec![BBox::new(0., 0., 10., 10.)];
        assert_eq!(precision(&g, &g, 20.0).unwrap(), 1.0);
        let far = vec![BBox::new(15., 20., 25., 30.)];
        assert_eq!(precision(&far, &g, 20.0).unwrap(), 0.0);
        let edge = vec![BBox::new(12., 16., 22., 26.)];
        assert_eq!(precision(&edge, &g, 20.0).unwrap(), 1.0);
        assert!(precision(&g, &[], 20.0).is_err());
    }

    #[test]
    fn norm_precision_examples() {
        let g = vec![BBox::new(0., 0., 10., 10.); 2];
        assert_eq!(norm_precision(&g, &g).unwrap().value, 1.0);
        let off = vec![BBox::new(6., 0., 16., 10.); 2];
        assert_eq!(norm_precision(&off, &g).unwrap().value, 0.0);
        let half = vec![g[0], off[0]];
        assert!((norm_precision(&half, &g).unwrap().value - 0.5).abs() < 1e-15);
        let zero = vec![BBox::new(0., 0., 0., 10.)];
        let np = norm_precision(&zero, &zero).unwrap();
        assert_eq!(np.skipped, 1);
    }

    #[test]
    fn ao_sr_examples() {
        let (ao, s5, s75) = ao_sr(&[0.6, 0.8]).unwrap();
        assert!((ao - 0.7).abs() < 1e-15);
        assert_eq!((s5, s75), (1.0, 0.5));
        assert_eq!(ao_sr(&[1.0, 1.0]).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(ao_sr(&[0.0, 0.0]).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn aggregate_is_order_independent() {
        let g = vec![BBox::new(0., 0., 10., 10.); 3];
        let p = vec![BBox::new(1., 0., 11., 10.), g[0], BBox::new(3., 3., 13., 13.)];
        let a = evaluate_sequence("a", &p, &g, &[false; 3]).unwrap().0;
        let b = evaluate_sequence("b", &g, &g, &[false, true, false]).unwrap().0;
        let r1 = aggregate(vec![a.clone(), b.clone()], 0).unwrap();
        let r2 = aggregate(vec![b, a], 0).unwrap();
        assert_eq!(r1.to_kv(), r2.to_kv());
        assert_eq!(r1.success_csv().lines().count(), 22);
    }

    proptest! {
        #[test]
        fn curve_is_monotone_and_auc_bounded(ious in prop::collection::vec(0.0..=1.0f64, 1..50)) {
            let c = success_curve(&ious, &default_thresholds()).unwrap();
            prop_assert!(c.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(c.area() <= 20.0 / 21.0 + 1e-15);
        }

        #[test]
        fn auc_is_permutation_invariant(mut ious in prop::collection::vec(0.0..=1.0f64, 1..50)) {
            let before = auc(&ious).unwrap();
            ious.reverse();
            prop_assert_eq!(before, auc(&ious).unwrap());
        }
    }
}
