//! SVG rendering of a run: obstacles, robot path, people and goal.

use std::fmt::Write;

use crate::costmap::LETHAL;
use crate::geometry::Point2;

use super::runner::RunOutput;
use super::scenario::Scenario;

const PX_PER_M: f64 = 60.0;
const HUMAN_COLORS: [&str; 4] = ["#d62728", "#9467bd", "#ff7f0e", "#8c564b"];

fn polyline(out: &mut String, pts: impl Iterator<Item = Point2>, color: &str, width: f64, dash: bool) {
    let coords: Vec<String> = pts.map(|p| format!("{:.3},{:.3}", p.x, p.y)).collect();
    if coords.len() < 2 {
        return;
    }
    let dash = if dash { r#" stroke-dasharray="0.08 0.06""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"{dash}/>"#,
        coords.join(" ")
    );
}

pub fn trajectory_svg(scenario: &Scenario, run: &RunOutput) -> String {
    let spec = run.static_layer.spec();
    let lo = spec.origin;
    let hi = spec.upper_corner();
    let (w, h) = (hi.x - lo.x, hi.y - lo.y);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{} {} {} {}">"#,
        w * PX_PER_M,
        h * PX_PER_M,
        lo.x,
        -hi.y,
        w,
        h
    );
    // flip y so the world's +y points up
    s.push_str("<g transform=\"scale(1,-1)\">\n");
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{w}" height="{h}" fill="#ffffff" stroke="#000000" stroke-width="0.02"/>"##,
        lo.x, lo.y
    );

    // lethal static cells, merged into horizontal runs
    let res = spec.resolution;
    for iy in 0..spec.height {
        let mut ix = 0;
        while ix < spec.width {
            if run.static_layer.get(ix, iy) != LETHAL {
                ix += 1;
                continue;
            }
            let start = ix;
            while ix < spec.width && run.static_layer.get(ix, iy) == LETHAL {
                ix += 1;
            }
            let _ = writeln!(
                s,
                r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#404040"/>"##,
                lo.x + start as f64 * res,
                lo.y + iy as f64 * res,
                (ix - start) as f64 * res,
                res
            );
        }
    }

    let ticks = &run.log.ticks;
    let people = ticks.first().map_or(0, |t| t.humans.len());
    for i in 0..people {
        let color = HUMAN_COLORS[i % HUMAN_COLORS.len()];
        polyline(&mut s, ticks.iter().map(|t| t.humans[i].position()), color, 0.03, true);
        if let Some(last) = ticks.last() {
            let p = last.humans[i].position();
            let _ = writeln!(
                s,
                r#"<circle cx="{:.3}" cy="{:.3}" r="{}" fill="{color}" fill-opacity="0.4"/>"#,
                p.x, p.y, scenario.social.disk_radius
            );
        }
    }
    polyline(&mut s, ticks.iter().map(|t| t.pose.position()), "#1f77b4", 0.04, false);

    let st = scenario.robot.start;
    let _ = writeln!(
        s,
        r##"<circle cx="{:.3}" cy="{:.3}" r="{}" fill="none" stroke="#1f77b4" stroke-width="0.02"/>"##,
        st.x, st.y, scenario.robot.limits.radius
    );
    let g = scenario.robot.goal;
    let _ = writeln!(
        s,
        r##"<circle cx="{:.3}" cy="{:.3}" r="{}" fill="none" stroke="#2ca02c" stroke-width="0.03"/>"##,
        g.x, g.y, scenario.robot.goal_tolerance
    );
    s.push_str("</g>\n</svg>\n");
    s
}
