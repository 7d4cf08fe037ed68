//! Hand-written SVG: trade-off line plots and schedule Gantt charts.

use std::fmt::Write;

use crate::analytic::SweepRow;
use crate::schedule::{ScheduleTimeline, MAIN_PROCESS};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputeAxis {
    PerTimeUnit,
    PerToken,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Line plot of per-token latency (y) against compute (x), one series per `k`.
pub fn tradeoff_svg(rows: &[SweepRow], axis: ComputeAxis) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 120.0, 30.0, 55.0);
    let x_of = |r: &SweepRow| match axis {
        ComputeAxis::PerTimeUnit => r.compute_per_time_unit,
        ComputeAxis::PerToken => r.compute_per_token,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if rows.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }

    let xs = rows.iter().map(x_of);
    let (x0, x1) = nice_range(xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let ys = rows.iter().map(|r| r.latency_per_token_norm);
    let (y0, y1) = nice_range(ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let pw = w - left - right;
    let ph = h - top - bottom;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} V{yb} H{xr}" fill="none" stroke="black"/>"#,
        yb = top + ph,
        xr = left + pw
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * f64::from(i) / 5.0;
        let fy = y0 + (y1 - y0) * f64::from(i) / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.2}</text>"#,
            px(fx),
            top + ph + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.3}</text>"#,
            left - 6.0,
            py(fy) + 4.0
        );
    }
    let xlabel = match axis {
        ComputeAxis::PerTimeUnit => "average compute units per time unit",
        ComputeAxis::PerToken => "average compute per token (normalized)",
    };
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">normalized latency per token</text>"#,
        top + ph / 2.0
    );

    let mut ks: Vec<u32> = rows.iter().map(|r| r.k).collect();
    ks.dedup();
    for (i, k) in ks.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| r.k == *k)
            .map(|r| format!("{:.2},{:.2}", px(x_of(r)), py(r.latency_per_token_norm)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted above");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
        let ly = top + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">k = {}</text>"#,
            w - right + 15.0,
            w - right + 35.0,
            w - right + 40.0,
            ly + 4.0,
            escape(&k.to_string())
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Gantt chart of a schedule: one lane per process, one rect per event.
pub fn gantt_svg(timeline: &ScheduleTimeline) -> String {
    let lanes = timeline.config.sub_processes + 1;
    let span = timeline.makespan.max(1) as f64;
    let left = 60.0;
    let lane_h = 24.0;
    let plot_w = 720.0;
    let w = left + plot_w + 20.0;
    let h = 40.0 + lane_h * f64::from(lanes) + 30.0;
    let scale = plot_w / span;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let c = &timeline.config;
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="18">d={} d_bar={} k={} ell={} matches={} makespan={}</text>"#,
        c.depth,
        c.early_layer,
        c.sub_processes,
        c.tokens,
        escape(&timeline.matches.to_tf_string()),
        timeline.makespan
    );
    for lane in 0..lanes {
        let y = 30.0 + lane_h * f64::from(lane);
        let label = if lane == MAIN_PROCESS { "main".to_string() } else { format!("sub {lane}") };
        let _ = writeln!(svg, r#"<text x="6" y="{:.1}">{label}</text>"#, y + 16.0);
    }
    for e in &timeline.events {
        let y = 30.0 + lane_h * f64::from(e.process_id) + 3.0;
        let fill = match (e.process_id, e.discarded) {
            (MAIN_PROCESS, _) => "#1f77b4",
            (_, false) => "#2ca02c",
            (_, true) => "#d3d3d3",
        };
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{y:.1}" width="{:.2}" height="{:.1}" fill="{fill}" stroke="white" stroke-width="0.5"><title>pid {} token {} layers {}-{} t [{}, {})</title></rect>"#,
            left + e.t_start as f64 * scale,
            e.duration() as f64 * scale,
            lane_h - 6.0,
            e.process_id,
            e.token_index,
            e.layer_start,
            e.layer_end,
            e.t_start,
            e.t_end
        );
    }
    let axis_y = 30.0 + lane_h * f64::from(lanes) + 14.0;
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{axis_y:.1}">0</text><text x="{:.1}" y="{axis_y:.1}" text-anchor="end">{} time units</text>"#,
        left + plot_w,
        timeline.makespan
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::tradeoff_sweep;
    use crate::schedule::build_schedule;
    use crate::{DecodingConfig, MatchSequence};

    #[test]
    fn tradeoff_plot_has_one_series_per_k() {
        let ps: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
        let rows = tradeoff_sweep(40, 20, None, &[1, 3, 5], &ps).unwrap();
        let svg = tradeoff_svg(&rows, ComputeAxis::PerTimeUnit);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("<circle").count(), 33);
        assert!(tradeoff_svg(&rows, ComputeAxis::PerToken).contains("per token"));
        assert!(tradeoff_svg(&[], ComputeAxis::PerToken).ends_with("</svg>\n"));
    }

    #[test]
    fn gantt_has_one_rect_per_event() {
        let m = MatchSequence::parse("TT").unwrap();
        let t = build_schedule(&DecodingConfig::new(40, 30, 3, 3), &m).unwrap();
        let svg = gantt_svg(&t);
        assert_eq!(svg.matches("<rect x=").count(), t.events.len());
        assert!(svg.contains("makespan=100"));
    }
}
