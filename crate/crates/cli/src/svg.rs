//! Plain SVG writers. Semantic elements carry a `class` so tests can count
//! them: mask cells are `hidden`/`visible`/`invalid`, loss curves are
//! `curve`, trajectory plots use `map`, `history`, `truth` and `pred`.

use std::fmt::Write;

use trajmask::masking::MaskGrid;
use trajmask::model::Forecast;
use trajmask::scene::Scenario;
use trajmask::training::TrainLog;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Agents as rows, timesteps as columns; hidden cells shaded.
pub fn mask_svg(title: &str, mask: &MaskGrid, valid: &[bool], t_obs: usize) -> String {
    let cell = 18.0;
    let (left, top) = (64.0, 40.0);
    let w = left + cell * mask.t as f64 + 20.0;
    let h = top + cell * mask.n as f64 + 30.0;
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"{left}\" y=\"18\">{}</text>", escape(title));
    for a in 0..mask.n {
        let y = top + a as f64 * cell;
        let _ = writeln!(s, "<text x=\"8\" y=\"{:.1}\">agent {a}</text>", y + cell * 0.7);
        for t in 0..mask.t {
            let x = left + t as f64 * cell;
            let (class, fill) = if mask.is_hidden(a, t) {
                ("hidden", "#3b6fb6")
            } else if valid[a * mask.t + t] {
                ("visible", "#c8c8c8")
            } else {
                ("invalid", "#ffffff")
            };
            let _ = writeln!(
                s,
                "<rect class=\"{class}\" x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"#666\" stroke-width=\"0.5\"/>"
            );
        }
    }
    let xo = left + t_obs as f64 * cell;
    let yb = top + mask.n as f64 * cell;
    let _ = writeln!(s, "<line x1=\"{xo}\" y1=\"{}\" x2=\"{xo}\" y2=\"{}\" stroke=\"black\" stroke-width=\"2\"/>", top - 4.0, yb + 4.0);
    let _ = writeln!(s, "<text x=\"{left}\" y=\"{:.1}\">time &#8594; (line marks end of history)</text>", yb + 20.0);
    s.push_str("</svg>\n");
    s
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    px: f64,
    py: f64,
    pw: f64,
    ph: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>, px: f64, py: f64, pw: f64, ph: f64, equal: bool) -> Frame {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for [x, y] in points.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-9 {
            (x0, x1) = (x0 - 0.5, x1 + 0.5);
        }
        if y1 - y0 < 1e-9 {
            (y0, y1) = (y0 - 0.5, y1 + 0.5);
        }
        if equal {
            let span = (x1 - x0).max(y1 - y0);
            let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
            (x0, x1, y0, y1) = (cx - span / 2.0, cx + span / 2.0, cy - span / 2.0, cy + span / 2.0);
        }
        Frame { x0, x1, y0, y1, px, py, pw, ph }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            self.px + (p[0] - self.x0) / (self.x1 - self.x0) * self.pw,
            self.py + self.ph - (p[1] - self.y0) / (self.y1 - self.y0) * self.ph,
        )
    }

    fn polyline(&self, pts: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(s, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
        }
        s
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let (l, b) = (self.px, self.py + self.ph);
        let _ = writeln!(
            s,
            "<rect x=\"{l}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            self.py, self.pw, self.ph
        );
        let _ = writeln!(s, "<text x=\"{l}\" y=\"{:.1}\">{:.3}</text>", b + 14.0, self.x0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>", l + self.pw, b + 14.0, self.x1);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", l + self.pw / 2.0, b + 28.0, escape(xlabel));
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{b:.1}\" text-anchor=\"end\">{:.4}</text>", l - 4.0, self.y0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.4}</text>", l - 4.0, self.py + 10.0, self.y1);
        let _ = writeln!(s, "<text x=\"{l}\" y=\"{:.1}\">{}</text>", self.py - 6.0, escape(ylabel));
    }
}

/// Two panels: loss against step and against wall time in seconds. The
/// y-axis is log10 when every loss is positive.
pub fn loss_curve_svg(logs: &[(String, TrainLog)]) -> String {
    let log_scale = logs.iter().flat_map(|(_, l)| &l.rows).all(|r| r.loss > 0.0);
    let y = |v: f64| if log_scale { v.log10() } else { v };
    let ylabel = if log_scale { "log10 loss" } else { "loss" };
    let (pw, ph) = (360.0, 260.0);
    let mut s = header(2.0 * pw + 200.0, ph + 120.0 + 16.0 * logs.len() as f64);
    let panels: [(&str, Box<dyn Fn(&trajmask::training::LogRow) -> f64>); 2] = [
        ("step", Box::new(|r| r.step as f64)),
        ("wall time (s)", Box::new(|r| r.wall_ms as f64 / 1000.0)),
    ];
    for (p, (xlabel, xf)) in panels.iter().enumerate() {
        let px = 70.0 + p as f64 * (pw + 80.0);
        let all = logs.iter().flat_map(|(_, l)| l.rows.iter().map(|r| [xf(r), y(r.loss)]));
        let frame = Frame::fit(all, px, 30.0, pw, ph, false);
        frame.axes(&mut s, xlabel, ylabel);
        for (i, (name, log)) in logs.iter().enumerate() {
            let pts: Vec<[f64; 2]> = log.rows.iter().map(|r| [xf(r), y(r.loss)]).collect();
            let _ = writeln!(
                s,
                "<polyline class=\"curve\" data-name=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                escape(name),
                frame.polyline(&pts),
                PALETTE[i % PALETTE.len()]
            );
        }
    }
    for (i, (name, _)) in logs.iter().enumerate() {
        let ly = ph + 80.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"70\" y1=\"{ly}\" x2=\"95\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"/><text x=\"100\" y=\"{:.1}\">{}</text>",
            PALETTE[i % PALETTE.len()],
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Map, history, ground truth and every predicted mode of each focal agent.
pub fn trajectory_svg(scenario: &Scenario, forecast: &Forecast, focal: &[usize]) -> String {
    let scene = &scenario.scene;
    let valid_xy = |a: usize, r: std::ops::Range<usize>| -> Vec<[f64; 2]> {
        r.filter(|&t| scene.get(a, t).valid)
            .map(|t| [scene.get(a, t).x, scene.get(a, t).y])
            .collect()
    };
    let fut = scene.t_obs..scene.t_total;
    let mut pts: Vec<[f64; 2]> = (0..scene.n_agents).flat_map(|a| valid_xy(a, 0..scene.t_total)).collect();
    for &a in focal {
        for m in 0..forecast.k {
            pts.extend(fut.clone().map(|t| forecast.at(m, a, t)));
        }
    }
    let size = 640.0;
    let frame = Frame::fit(pts.iter().copied(), 20.0, 20.0, size - 40.0, size - 40.0, true);
    let mut s = header(size + 180.0, size);
    for poly in &scenario.map {
        let _ = writeln!(
            s,
            "<polyline class=\"map\" points=\"{}\" fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>",
            frame.polyline(poly.valid_points())
        );
    }
    let pmax = forecast.mode_probs.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    for a in 0..scene.n_agents {
        let color = if a == scene.ego_index { "#000000" } else { PALETTE[a % PALETTE.len()] };
        let _ = writeln!(
            s,
            "<polyline class=\"history\" data-agent=\"{a}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2.5\"/>",
            frame.polyline(&valid_xy(a, 0..scene.t_obs))
        );
        let _ = writeln!(
            s,
            "<polyline class=\"truth\" data-agent=\"{a}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"/>",
            frame.polyline(&valid_xy(a, fut.clone()))
        );
    }
    for &a in focal {
        let color = PALETTE[a % PALETTE.len()];
        for m in 0..forecast.k {
            let line: Vec<[f64; 2]> = fut.clone().map(|t| forecast.at(m, a, t)).collect();
            let opacity = 0.25 + 0.75 * forecast.mode_probs[m] / pmax;
            let _ = writeln!(
                s,
                "<polyline class=\"pred\" data-agent=\"{a}\" data-mode=\"{m}\" data-prob=\"{:.4}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-opacity=\"{opacity:.3}\" stroke-width=\"1\"/>",
                forecast.mode_probs[m],
                frame.polyline(&line)
            );
        }
    }
    let legend = [
        ("map", "#bbbbbb", ""),
        ("history", "#444444", ""),
        ("ground truth", "#444444", " stroke-dasharray=\"5,3\""),
        ("predicted modes", "#444444", " stroke-opacity=\"0.5\""),
        ("ego", "#000000", ""),
    ];
    for (i, (name, color, extra)) in legend.iter().enumerate() {
        let ly = 30.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{:.0}\" y1=\"{ly}\" x2=\"{:.0}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"{extra}/><text x=\"{:.0}\" y=\"{:.1}\">{name}</text>",
            size + 10.0,
            size + 35.0,
            size + 40.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_cells_are_counted_by_class() {
        let mask = trajmask::masking::prediction_mask(3, 10, 4);
        let svg = mask_svg("prediction", &mask, &[true; 30], 4);
        assert_eq!(svg.matches("class=\"hidden\"").count(), 18);
        assert_eq!(svg.matches("class=\"visible\"").count(), 12);
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }
}
