//! Result summaries: per-panel areas, seam lengths, mirror errors, triangle
//! quality and the loss log, plus the text table printed by `report`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::losses::{loss_boundary_curvature, LossBreakdown};
use crate::mesh::{assemble_sim_mesh, TargetDrape};
use crate::pattern::{
    mirror_error, pair_reflection, panel_area, GarmentSpec, QualityReport,
};
use crate::refit::{HistoryRow, RefitResult, RefitTermination};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub shape_match: f64,
    pub curvature: f64,
    pub pattern_match: f64,
    pub total_area: f64,
}

impl From<&LossBreakdown> for LossTerms {
    fn from(l: &LossBreakdown) -> Self {
        LossTerms {
            total: l.total,
            shape_match: l.shape_match,
            curvature: l.curvature,
            pattern_match: l.pattern_match,
            total_area: l.total_area,
        }
    }
}

impl From<&HistoryRow> for LossTerms {
    fn from(h: &HistoryRow) -> Self {
        LossTerms {
            total: h.total,
            shape_match: h.shape_match,
            curvature: h.curvature,
            pattern_match: h.pattern_match,
            total_area: h.total_area,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelArea {
    pub panel: String,
    pub pattern_area: f64,
    pub target_area: f64,
    /// |pattern − target| / target.
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamLength {
    pub seam: String,
    pub length_a: f64,
    pub length_b: f64,
    /// |a − b| / max(a, b).
    pub relative_mismatch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirrorCheck {
    pub panel_a: String,
    pub panel_b: String,
    /// Largest vertex distance after the best-fit reflection, meters.
    pub max_error: f64,
}

/// Everything `report` prints, stored as `quality_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub quality_before: QualityReport,
    pub quality_after: QualityReport,
    pub initial_loss: LossTerms,
    pub final_loss: LossTerms,
    /// 1 − final/initial total loss.
    pub loss_reduction: f64,
    pub panel_areas: Vec<PanelArea>,
    pub seams: Vec<SeamLength>,
    pub mirror: Vec<MirrorCheck>,
    /// Boundary-curvature loss of the result measured against the design.
    pub curvature_residual: f64,
    pub termination: RefitTermination,
    pub best_iteration: usize,
    pub global_scale: f64,
}

impl RunReport {
    /// Summarize a refit of `design` towards `target`.
    pub fn new(result: &RefitResult, design: &GarmentSpec, target: &TargetDrape) -> Result<Self> {
        let initial_loss = result
            .history
            .first()
            .map(LossTerms::from)
            .ok_or_else(|| Error::Validation("refit produced no iterations".into()))?;
        let final_loss = LossTerms::from(&result.best);
        let mesh = assemble_sim_mesh(&result.spec)?;
        let (curvature_residual, _) = loss_boundary_curvature(
            &result.spec.flat_vertices(),
            &design.flat_vertices(),
            &mesh,
        )?;
        Ok(RunReport {
            quality_before: result.quality_before,
            quality_after: result.quality_after,
            initial_loss,
            final_loss,
            loss_reduction: reduction(initial_loss.total, final_loss.total),
            panel_areas: panel_areas(&result.spec, target)?,
            seams: seam_lengths(&result.spec),
            mirror: mirror_checks(&result.spec),
            curvature_residual,
            termination: result.termination,
            best_iteration: result.best_iteration,
            global_scale: result.global_scale,
        })
    }

    pub fn max_area_error(&self) -> f64 {
        self.panel_areas.iter().map(|a| a.relative_error).fold(0.0, f64::max)
    }

    pub fn max_seam_mismatch(&self) -> f64 {
        self.seams.iter().map(|s| s.relative_mismatch).fold(0.0, f64::max)
    }

    pub fn max_mirror_error(&self) -> f64 {
        self.mirror.iter().map(|m| m.max_error).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    /// Human-readable table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<28}{:>14}{:>14}", "triangle quality", "before", "after");
        let _ = writeln!(
            s,
            "{:<28}{:>14.6}{:>14.6}",
            "  min", self.quality_before.min, self.quality_after.min
        );
        let _ = writeln!(
            s,
            "{:<28}{:>14.6}{:>14.6}",
            "  mean", self.quality_before.mean, self.quality_after.mean
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28}{:>14}{:>14}", "loss", "initial", "final");
        let rows = [
            ("  total", self.initial_loss.total, self.final_loss.total),
            ("  shape match", self.initial_loss.shape_match, self.final_loss.shape_match),
            ("  boundary curvature", self.initial_loss.curvature, self.final_loss.curvature),
            ("  pattern match", self.initial_loss.pattern_match, self.final_loss.pattern_match),
            ("  total area", self.initial_loss.total_area, self.final_loss.total_area),
        ];
        for (name, a, b) in rows {
            let _ = writeln!(s, "{name:<28}{a:>14.6e}{b:>14.6e}");
        }
        let _ = writeln!(s, "{:<28}{:>27.2}%", "  reduction", 100.0 * self.loss_reduction);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28}{:>14}{:>14}{:>10}", "panel area [m²]", "pattern", "target", "error");
        for a in &self.panel_areas {
            let _ = writeln!(
                s,
                "  {:<26}{:>14.6}{:>14.6}{:>9.3}%",
                a.panel,
                a.pattern_area,
                a.target_area,
                100.0 * a.relative_error
            );
        }
        let _ = writeln!(s, "{:<28}{:>14}{:>14}{:>10}", "seam length [m]", "side a", "side b", "mismatch");
        for m in &self.seams {
            let _ = writeln!(
                s,
                "  {:<26}{:>14.6}{:>14.6}{:>9.3}%",
                m.seam,
                m.length_a,
                m.length_b,
                100.0 * m.relative_mismatch
            );
        }
        for m in &self.mirror {
            let _ = writeln!(
                s,
                "mirror {} / {}: max error {:.3e} m",
                m.panel_a, m.panel_b, m.max_error
            );
        }
        let _ = writeln!(s, "boundary curvature vs design: {:.6e}", self.curvature_residual);
        let _ = writeln!(s, "global scale: {:.6}", self.global_scale);
        let reason = match self.termination {
            RefitTermination::Converged { iterations } => {
                format!("converged after {iterations} iterations")
            }
            RefitTermination::MaxIterations { iterations } => {
                format!("stopped at the iteration limit ({iterations})")
            }
        };
        let _ = writeln!(s, "termination: {reason}; best iterate {}", self.best_iteration);
        s
    }
}

fn reduction(initial: f64, last: f64) -> f64 {
    if initial > 0.0 {
        1.0 - last / initial
    } else {
        0.0
    }
}

pub fn panel_areas(spec: &GarmentSpec, target: &TargetDrape) -> Result<Vec<PanelArea>> {
    spec.panels
        .iter()
        .map(|p| {
            let target_area = *target.total_area_per_panel.get(&p.id).ok_or_else(|| {
                Error::Validation(format!("no target area for panel '{}'", p.id))
            })?;
            let pattern_area = panel_area(p);
            Ok(PanelArea {
                panel: p.id.clone(),
                pattern_area,
                target_area,
                relative_error: (pattern_area - target_area).abs() / target_area,
            })
        })
        .collect()
}

fn polyline_length(points: &[Vec2], idx: &[usize]) -> f64 {
    idx.windows(2).map(|w| (points[w[1]] - points[w[0]]).norm()).sum()
}

pub fn seam_lengths(spec: &GarmentSpec) -> Vec<SeamLength> {
    spec.seams
        .iter()
        .filter_map(|s| {
            let a = spec.panel(&s.side_a.panel)?;
            let b = spec.panel(&s.side_b.panel)?;
            let length_a = polyline_length(&a.vertices, &s.side_a.vertices);
            let length_b = polyline_length(&b.vertices, &s.side_b.vertices);
            let longest = length_a.max(length_b);
            Some(SeamLength {
                seam: s.id.clone(),
                length_a,
                length_b,
                relative_mismatch: if longest > 0.0 {
                    (length_a - length_b).abs() / longest
                } else {
                    0.0
                },
            })
        })
        .collect()
}

pub fn mirror_checks(spec: &GarmentSpec) -> Vec<MirrorCheck> {
    spec.effective_symmetry_pairs()
        .iter()
        .map(|pair| MirrorCheck {
            panel_a: pair.panel_a.clone(),
            panel_b: pair.panel_b.clone(),
            max_error: mirror_error(spec, pair, &pair_reflection(spec, pair)),
        })
        .collect()
}

/// Loss history as CSV text, one row per iteration.
pub fn loss_csv_string(history: &[HistoryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in history {
        w.serialize(row).expect("history rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn write_loss_csv(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, loss_csv_string(history)).map_err(|e| Error::io(path, e))
}

pub fn read_loss_csv(path: impl AsRef<Path>) -> Result<Vec<HistoryRow>> {
    let path = path.as_ref();
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_slice());
    let rows: Vec<HistoryRow> = r
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(path, e))?;
    if rows.is_empty() {
        return Err(Error::parse(path, "loss log has no rows"));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{grid_panel, mirror_panel};
    use crate::pattern::{Seam, SeamSide, SymmetryPair};

    fn row(i: usize, total: f64) -> HistoryRow {
        HistoryRow {
            iteration: i,
            total,
            shape_match: total,
            curvature: 0.0,
            pattern_match: 0.0,
            total_area: 0.0,
            gradient_norm: 1.0,
            sim_steps: 10,
            sim_converged: true,
            seconds: 0.5,
        }
    }

    #[test]
    fn loss_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let rows = vec![row(0, 1.0), row(1, 0.25)];
        write_loss_csv(&path, &rows).unwrap();
        assert_eq!(read_loss_csv(&path).unwrap(), rows);
    }

    #[test]
    fn corrupted_csv_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss_history.csv");
        write_loss_csv(&path, &[row(0, 1.0)]).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("1,not-a-number\n");
        std::fs::write(&path, text).unwrap();
        let msg = read_loss_csv(&path).unwrap_err().to_string();
        assert!(msg.contains("loss_history.csv"), "{msg}");
    }

    #[test]
    fn seam_and_mirror_measures() {
        let a = grid_panel("a", Vec2::zeros(), 1.0, 2.0, 2, 2);
        let b = mirror_panel("b", &a, -0.1);
        let left: Vec<usize> = (0..=2).map(|j| j * 3).collect();
        let spec = GarmentSpec {
            seams: vec![Seam {
                id: "s".into(),
                side_a: SeamSide {
                    panel: "a".into(),
                    vertices: left.clone(),
                },
                side_b: SeamSide {
                    panel: "b".into(),
                    vertices: left,
                },
            }],
            symmetry_pairs: vec![SymmetryPair {
                panel_a: "a".into(),
                panel_b: "b".into(),
                correspondence: (0..9).collect(),
            }],
            panels: vec![a, b],
            material: Default::default(),
            reference_drape3d: None,
            cages: Default::default(),
        };
        let seams = seam_lengths(&spec);
        assert!((seams[0].length_a - 2.0).abs() < 1e-12);
        assert_eq!(seams[0].relative_mismatch, 0.0);
        assert!(mirror_checks(&spec)[0].max_error < 1e-12);
    }
}
