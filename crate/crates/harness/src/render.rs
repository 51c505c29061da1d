//! SVG output: Gantt charts of schedules and search-tree width profiles.

use std::collections::BTreeSet;
use std::fmt::Write;

use bbplan_core::{JobSet, Schedule, Time};

const PALETTE: [&str; 10] =
    ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"];

const LEFT: f64 = 60.0;
const TOP: f64 = 20.0;
const WIDTH: f64 = 800.0;
const ROW: f64 = 24.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GanttOptions {
    /// Draws a black vertical rule at this time (usually a lower bound).
    pub bound: Option<Time>,
    /// Draws a vertical line at every job deadline, coloured like the job.
    pub deadlines: bool,
}

fn colour(job_type: u32) -> &'static str {
    PALETTE[job_type as usize % PALETTE.len()]
}

/// One row per machine, one bar per scheduled interval.
pub fn render_gantt(schedule: &Schedule, jobs: &JobSet, opts: &GanttOptions) -> String {
    let rows = jobs.n_machines().max(1);
    let mut horizon: Time = schedule.iter().flat_map(|(_, ivs)| ivs.iter().map(|iv| iv.end)).max().unwrap_or(0);
    horizon = horizon.max(opts.bound.unwrap_or(0));
    if opts.deadlines {
        horizon = horizon.max(jobs.jobs().iter().filter_map(|j| j.deadline).max().unwrap_or(0));
    }
    let scale = WIDTH / horizon.max(1) as f64;
    let x = |t: Time| LEFT + t as f64 * scale;
    let bottom = TOP + rows as f64 * ROW;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        LEFT + WIDTH + 20.0,
        bottom + 30.0
    );
    let _ = writeln!(s, r#"<line class="axis" x1="{LEFT}" y1="{bottom}" x2="{}" y2="{bottom}" stroke="black"/>"#, LEFT + WIDTH);
    let _ = writeln!(s, r#"<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bottom}" stroke="black"/>"#);
    for k in 0..=4 {
        let t = horizon * k / 4;
        let _ = writeln!(s, r#"<text class="tick" x="{:.1}" y="{}" text-anchor="middle">{t}</text>"#, x(t), bottom + 14.0);
    }
    for m in 0..jobs.n_machines() {
        let y = TOP + m as f64 * ROW + ROW * 0.65;
        let _ = writeln!(s, r#"<text class="machine" x="{}" y="{y:.1}" text-anchor="end">m{m}</text>"#, LEFT - 6.0);
    }
    for (j, ivs) in schedule.iter() {
        let fill = jobs.get(j).map_or(PALETTE[0], |job| colour(job.job_type));
        for iv in ivs {
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{fill}" stroke="white"><title>job {j} [{}, {})</title></rect>"#,
                x(iv.start),
                TOP + iv.machine as f64 * ROW + 2.0,
                (iv.end - iv.start) as f64 * scale,
                ROW - 4.0,
                iv.start,
                iv.end
            );
        }
    }
    if opts.deadlines {
        let marks: BTreeSet<(Time, &str)> =
            jobs.jobs().iter().filter_map(|j| j.deadline.map(|d| (d, colour(j.job_type)))).collect();
        for (d, c) in marks {
            let _ = writeln!(
                s,
                r#"<line class="deadline" x1="{0:.1}" y1="{TOP}" x2="{0:.1}" y2="{bottom}" stroke="{c}" stroke-dasharray="3,2"/>"#,
                x(d)
            );
        }
    }
    if let Some(b) = opts.bound {
        let _ = writeln!(
            s,
            r#"<line class="bound" x1="{0:.1}" y1="{TOP}" x2="{0:.1}" y2="{bottom}" stroke="black" stroke-width="2"/>"#,
            x(b)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Width profile of a search tree: row `d` holds one cell per node seen at
/// depth `d`, shaded by how wide that level is. An empty profile is drawn
/// as the lone root.
pub fn render_tree_density(widths: &[usize]) -> String {
    let widths: Vec<usize> = if widths.is_empty() { vec![1] } else { widths.iter().map(|&w| w.max(1)).collect() };
    let cols = *widths.iter().max().expect("non-empty");
    let cell = (WIDTH / cols as f64).clamp(1.0, 16.0);
    let height = (400.0 / widths.len() as f64).clamp(1.0, 16.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}">"#,
        cols as f64 * cell + 2.0 * TOP,
        widths.len() as f64 * height + 2.0 * TOP
    );
    for (d, &w) in widths.iter().enumerate() {
        let shade = 0.15 + 0.85 * w as f64 / cols as f64;
        // centre each level so the overall shape reads like the tree
        let offset = (cols - w) as f64 * cell / 2.0;
        for k in 0..w {
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{:.2}" y="{:.2}" width="{cell:.2}" height="{height:.2}" fill="#08519c" fill-opacity="{shade:.3}"/>"##,
                TOP + offset + k as f64 * cell,
                TOP + d as f64 * height
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use bbplan_core::schedulers::online_dispatch;
    use bbplan_core::{Interval, Job, Machine, Plan, Stage};

    fn count(svg: &str, class: &str) -> usize {
        svg.matches(&format!(r#"class="{class}""#)).count()
    }

    /// Three machines; two jobs visit all of them, the third skips the
    /// middle one.
    fn three_job_shop() -> JobSet {
        let st = |m, d| Stage { machine: m, duration: d };
        let jobs = vec![
            Job::new(0, 0, vec![st(0, 2), st(1, 3), st(2, 2)], Some(12), None).unwrap(),
            Job::new(1, 1, vec![st(0, 3), st(1, 2), st(2, 3)], Some(14), None).unwrap(),
            Job::new(2, 2, vec![st(0, 2), st(2, 4)], Some(10), None).unwrap(),
        ];
        JobSet::new(jobs, (0..3).map(|id| Machine { id, group: id }).collect()).unwrap()
    }

    #[test]
    fn empty_schedule_has_axes_only() {
        let svg = render_gantt(&Schedule::new(), &three_job_shop(), &GanttOptions::default());
        assert_eq!(count(&svg, "axis"), 2);
        assert_eq!(count(&svg, "bar"), 0);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn one_bar_per_interval() {
        let jobs = three_job_shop();
        let s = online_dispatch(&Plan::identity(3), &jobs).unwrap();
        let svg = render_gantt(&s, &jobs, &GanttOptions::default());
        assert_eq!(count(&svg, "machine"), 3);
        assert_eq!(count(&svg, "bar"), 8);
    }

    #[test]
    fn bound_and_deadline_rules() {
        let jobs = three_job_shop();
        let mut s = Schedule::new();
        s.insert(0, vec![Interval { machine: 0, start: 0, end: 2 }]);
        let svg = render_gantt(&s, &jobs, &GanttOptions { bound: Some(9), deadlines: true });
        assert_eq!(count(&svg, "bound"), 1);
        assert_eq!(count(&svg, "deadline"), 3);
        // the bound sits at 9/14 of the chart width
        assert!(svg.contains(&format!(r#"class="bound" x1="{:.1}""#, LEFT + 9.0 * WIDTH / 14.0)));
    }

    #[test]
    fn tree_density_shapes() {
        assert_eq!(count(&render_tree_density(&[]), "cell"), 1);
        assert_eq!(count(&render_tree_density(&[1]), "cell"), 1);
        let path = render_tree_density(&[1, 1, 1, 1]);
        assert_eq!(count(&path, "cell"), 4);
        // single column: every cell at the same x
        let xs: BTreeSet<&str> = path.lines().filter(|l| l.contains("cell")).map(|l| l.split('"').nth(3).unwrap()).collect();
        assert_eq!(xs.len(), 1);
        assert_eq!(count(&render_tree_density(&[1, 4, 3, 2, 1]), "cell"), 11);
    }
}
