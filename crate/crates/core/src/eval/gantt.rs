//! Gantt rendering: one lane per machine, transport, setup and processing
//! segments drawn distinctly. Output is a pure function of its inputs.

use std::fmt::Write;

use super::{IntervalKind, Schedule, ScheduledInterval};
use crate::model::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanttFormat {
    Svg,
    Text,
}

const PALETTE: [&str; 8] = ["#4e79a7", "#59a14f", "#e15759", "#b07aa1", "#76b7b2", "#edc948", "#ff9da7", "#9c755f"];
const LANE_H: f64 = 28.0;
const LABEL_W: f64 = 60.0;
const PLOT_W: f64 = 800.0;

fn lanes<'a>(instance: &Instance, schedule: &'a Schedule) -> Vec<Vec<&'a ScheduledInterval>> {
    let mut lanes: Vec<Vec<&ScheduledInterval>> = vec![Vec::new(); instance.n_machines()];
    for iv in &schedule.intervals {
        if iv.machine < lanes.len() {
            lanes[iv.machine].push(iv);
        }
    }
    for lane in &mut lanes {
        lane.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.kind.cmp(&b.kind)).then(a.job.cmp(&b.job)));
    }
    lanes
}

fn label(instance: &Instance, iv: &ScheduledInterval) -> String {
    let setup = instance.machines[iv.machine].setups.get(iv.setup.0).cloned().unwrap_or_else(|| iv.setup.to_string());
    match (iv.job, iv.op_index) {
        (Some(j), Some(o)) => format!("{} op{} {}", instance.jobs[j].name, o + 1, setup),
        _ => format!("pre-setup {setup}"),
    }
}

pub fn render_gantt(instance: &Instance, schedule: &Schedule, format: GanttFormat) -> String {
    match format {
        GanttFormat::Text => render_text(instance, schedule),
        GanttFormat::Svg => render_svg(instance, schedule),
    }
}

fn render_text(instance: &Instance, schedule: &Schedule) -> String {
    let mut out = String::new();
    for (m, lane) in lanes(instance, schedule).iter().enumerate() {
        writeln!(out, "{}", instance.machines[m].name).unwrap();
        for iv in lane {
            writeln!(out, "  [{}, {}) {} {}", iv.start, iv.end, iv.kind.as_str(), label(instance, iv)).unwrap();
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn render_svg(instance: &Instance, schedule: &Schedule) -> String {
    let horizon = schedule.end_time();
    let scale = if horizon > 0.0 { PLOT_W / horizon } else { 1.0 };
    let lanes = lanes(instance, schedule);
    let height = LANE_H * lanes.len() as f64 + 30.0;
    let width = LABEL_W + PLOT_W + 20.0;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (m, lane) in lanes.iter().enumerate() {
        let y = LANE_H * m as f64 + 4.0;
        writeln!(
            out,
            r#"<g class="lane" data-machine="{}"><text x="4" y="{:.2}">{}</text>"#,
            m,
            y + LANE_H / 2.0 + 3.0,
            escape(&instance.machines[m].name)
        )
        .unwrap();
        for iv in lane {
            let x = LABEL_W + iv.start * scale;
            let w = (iv.duration() * scale).max(0.0);
            let fill = match iv.kind {
                IntervalKind::Transport => "#bdbdbd",
                IntervalKind::Setup => "#f28e2b",
                IntervalKind::Process => PALETTE[iv.job.unwrap_or(0) % PALETTE.len()],
            };
            let text = escape(&label(instance, iv));
            let pattern = if iv.kind == IntervalKind::Transport { r#" stroke-dasharray="3,2""# } else { "" };
            writeln!(
                out,
                r#"<rect class="{}" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}" fill="{fill}" stroke="black" stroke-width="0.5"{pattern}><title>{} [{}, {}) {}</title></rect>"#,
                iv.kind.as_str().to_lowercase(),
                LANE_H - 8.0,
                iv.kind.as_str(),
                iv.start,
                iv.end,
                text
            )
            .unwrap();
            if iv.kind == IntervalKind::Process && w > 24.0 {
                if let Some(j) = iv.job {
                    writeln!(out, r#"<text x="{:.2}" y="{:.2}" fill="white">{}</text>"#, x + 3.0, y + LANE_H / 2.0 + 1.0, escape(&instance.jobs[j].name)).unwrap();
                }
            }
        }
        writeln!(out, "</g>").unwrap();
    }
    let axis_y = LANE_H * lanes.len() as f64 + 12.0;
    writeln!(
        out,
        r#"<line x1="{LABEL_W:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        axis_y - 6.0,
        LABEL_W + PLOT_W,
        axis_y - 6.0
    )
    .unwrap();
    writeln!(out, r#"<text x="{LABEL_W:.2}" y="{:.2}">0</text>"#, axis_y + 6.0).unwrap();
    writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LABEL_W + PLOT_W, axis_y + 6.0, horizon).unwrap();
    out.push_str("</svg>\n");
    out
}
