//! Report emission: JSON, a Markdown results table, PR/sweep CSVs, and an
//! SVG line plot of the mAP-versus-IoU-threshold sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::metrics::SweepPoint;

use super::run::{report_json, report_json_path, RunReport};
use super::PipelineError;

#[derive(Debug, Clone, Copy)]
pub struct ReportFormats {
    pub json: bool,
    pub markdown: bool,
    pub csv: bool,
    pub svg: bool,
}

impl Default for ReportFormats {
    fn default() -> Self {
        Self {
            json: true,
            markdown: true,
            csv: true,
            svg: true,
        }
    }
}

/// Write the requested report files into `out_dir`, returning the paths.
///
/// The SVG is only produced when the report carries a non-empty sweep; its
/// absence is recorded in the JSON (`artifacts.sweep_svg: null`).
pub fn emit_report(
    report: &mut RunReport,
    out_dir: &Path,
    formats: &ReportFormats,
) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::Output(format!("{}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    let write = |path: &Path, body: &str| -> Result<(), PipelineError> {
        fs::write(path, body).map_err(|e| PipelineError::Output(format!("{}: {e}", path.display())))
    };

    if formats.svg {
        match &report.eval.sweep {
            Some(sweep) if !sweep.is_empty() => {
                let path = out_dir.join("sweep.svg");
                write(&path, &sweep_svg(&report.method, sweep))?;
                report.artifacts.sweep_svg = Some("sweep.svg".to_string());
                written.push(path);
            }
            _ => report.artifacts.sweep_svg = None,
        }
    }
    if formats.json {
        let path = report_json_path(out_dir);
        write(&path, &report_json(report))?;
        written.push(path);
    }
    if formats.markdown {
        let path = out_dir.join("report.md");
        write(&path, &markdown_report(report))?;
        written.push(path);
    }
    if formats.csv {
        for (name, curve) in [
            ("pr_curve_iou.csv", &report.eval.iou.pr_curve),
            ("pr_curve_chebyshev.csv", &report.eval.chebyshev.pr_curve),
        ] {
            let mut body = String::from("recall,precision\n");
            for p in curve {
                let _ = writeln!(body, "{},{}", p.recall, p.precision);
            }
            let path = out_dir.join(name);
            write(&path, &body)?;
            written.push(path);
        }
        if let Some(sweep) = &report.eval.sweep {
            let mut body = String::from("iou_threshold,map\n");
            for p in sweep {
                let _ = writeln!(body, "{},{}", p.threshold, p.map);
            }
            let path = out_dir.join("sweep.csv");
            write(&path, &body)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Results table in the survey-benchmark column layout.
pub fn markdown_report(report: &RunReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Evaluation report\n");
    let _ = writeln!(md, "| Method | Operational Resolution | mAP(IoU) | mAP(Che) |");
    let _ = writeln!(md, "|---|---|---|---|");
    let _ = writeln!(
        md,
        "| {} | {} | {:.3} | {:.3} |",
        report.method, report.operational_resolution, report.eval.iou.ap, report.eval.chebyshev.ap
    );
    let _ = writeln!(md);
    let _ = writeln!(
        md,
        "- IoU criterion: threshold {}, TP {}, FP {}, FN {}, ground truth {}",
        report.eval.iou.threshold,
        report.eval.iou.tp,
        report.eval.iou.fp,
        report.eval.iou.false_negatives,
        report.eval.iou.total_gt
    );
    let _ = writeln!(
        md,
        "- Chebyshev criterion: threshold {} px, TP {}, FP {}, FN {}",
        report.eval.chebyshev.threshold,
        report.eval.chebyshev.tp,
        report.eval.chebyshev.fp,
        report.eval.chebyshev.false_negatives
    );
    let _ = writeln!(
        md,
        "- Frames evaluated: {}; frames aborted: {}",
        report.frames_evaluated, report.frames_failed
    );
    if let Some(sweep) = &report.eval.sweep {
        let _ = writeln!(md, "\n## IoU threshold sweep\n");
        let _ = writeln!(md, "| IoU threshold | mAP |");
        let _ = writeln!(md, "|---|---|");
        for p in sweep {
            let _ = writeln!(md, "| {:.2} | {:.3} |", p.threshold, p.map);
        }
    }
    let _ = writeln!(md, "\n## Notes\n");
    for note in &report.notes {
        let _ = writeln!(md, "- {note}");
    }
    md
}

/// Minimal standalone line plot: mAP against IoU threshold.
pub fn sweep_svg(label: &str, sweep: &[SweepPoint]) -> String {
    let (width, height) = (560.0f64, 360.0f64);
    let (left, right, top, bottom) = (70.0f64, 20.0f64, 30.0f64, 50.0f64);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let x_of = |t: f64| left + t.clamp(0.0, 1.0) * plot_w;
    let y_of = |m: f64| top + (1.0 - m.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>",
        top + plot_h
    );
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let x = x_of(v);
        let y = y_of(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{v:.1}</text>",
            top + plot_h,
            top + plot_h + 5.0,
            top + plot_h + 20.0
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.1}</text>",
            left - 5.0,
            left - 9.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">IoU threshold</text>",
        left + plot_w / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">mAP</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    // series
    let points: Vec<String> = sweep
        .iter()
        .map(|p| format!("{:.2},{:.2}", x_of(p.threshold), y_of(p.map)))
        .collect();
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"{}\"/>",
        points.join(" ")
    );
    for p in sweep {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f6fb2\"/>",
            x_of(p.threshold),
            y_of(p.map)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" fill=\"#1f6fb2\">{}</text>",
        left + 10.0,
        top + 14.0,
        xml_escape(label)
    );
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_marker_per_point() {
        let sweep: Vec<SweepPoint> = (1..=5)
            .map(|i| SweepPoint {
                threshold: i as f64 / 10.0,
                map: 1.0 - i as f64 / 10.0,
            })
            .collect();
        let svg = sweep_svg("blob-oracle", &sweep);
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.contains("IoU threshold"));
        assert!(svg.contains("mAP"));
    }
}
