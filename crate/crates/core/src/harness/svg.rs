//! Hand-rolled SVG line chart for effect trajectories: mean lines with
//! one-standard-error bands per estimator, plus the ground-truth series.

use super::{mean_and_se, SeedRun, ESTIMATOR_ORDER};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

const COLORS: [(&str, &str); 7] = [
    ("ground_truth", "#000000"),
    ("alg1", "#d62728"),
    ("dim", "#1f77b4"),
    ("dim_filtered", "#2ca02c"),
    ("ht_q", "#9467bd"),
    ("cmp_basic", "#8c564b"),
    ("cmp", "#e377c2"),
];

fn color_for(name: &str) -> &'static str {
    COLORS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .unwrap_or("#7f7f7f")
}

struct Series {
    name: String,
    mean: Vec<f64>,
    se: Vec<f64>,
}

fn collect_series(runs: &[SeedRun]) -> Vec<Series> {
    let t_total = runs[0].truth.len_rounds();
    let mut out = Vec::new();
    let mut push = |name: &str, per_seed: Vec<&Vec<f64>>| {
        let mut mean = Vec::with_capacity(t_total + 1);
        let mut se = Vec::with_capacity(t_total + 1);
        for t in 0..=t_total {
            let vals: Vec<f64> = per_seed.iter().map(|v| v[t]).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                mean.push(f64::NAN);
                se.push(0.0);
            } else {
                let (m, s) = mean_and_se(&vals);
                mean.push(m);
                se.push(s);
            }
        }
        out.push(Series {
            name: name.to_string(),
            mean,
            se,
        });
    };
    push(
        "ground_truth",
        runs.iter().map(|r| &r.truth.values).collect(),
    );
    for name in ESTIMATOR_ORDER {
        let per_seed: Vec<&Vec<f64>> = runs
            .iter()
            .filter_map(|r| r.effects.iter().find(|(n, _)| n == name).map(|(_, s)| &s.values))
            .collect();
        if !per_seed.is_empty() {
            push(name, per_seed);
        }
    }
    out
}

/// Render the chart. `t_warmup` is marked with a vertical divider.
pub fn effect_chart(runs: &[SeedRun], t_warmup: usize) -> String {
    let series = collect_series(runs);
    let t_total = runs[0].truth.len_rounds();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &series {
        for t in 0..=t_total {
            if s.mean[t].is_finite() {
                lo = lo.min(s.mean[t] - s.se[t]);
                hi = hi.max(s.mean[t] + s.se[t]);
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = 0.08 * (hi - lo).max(0.2);
    lo -= pad;
    hi += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |t: f64| MARGIN_L + t / t_total as f64 * plot_w;
    let y = |v: f64| MARGIN_T + (hi - v) / (hi - lo) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Axes, ticks, zero line, warmup divider.
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\" stroke-width=\"1\"/>\n<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#333\" stroke-width=\"1\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    ));
    if lo < 0.0 && hi > 0.0 {
        let y0 = y(0.0);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y0:.2}\" x2=\"{}\" y2=\"{y0:.2}\" stroke=\"#bbb\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
            MARGIN_L,
            WIDTH - MARGIN_R
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{x:.2}\" y1=\"{t}\" x2=\"{x:.2}\" y2=\"{b}\" stroke=\"#ddd\" stroke-width=\"1\"/>\n",
        x = x(t_warmup as f64),
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    ));
    for t in 0..=t_total {
        let tx = x(t as f64);
        svg.push_str(&format!(
            "<line x1=\"{tx:.2}\" y1=\"{b}\" x2=\"{tx:.2}\" y2=\"{b2}\" stroke=\"#333\"/>\n<text x=\"{tx:.2}\" y=\"{ty}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">{t}</text>\n",
            b = HEIGHT - MARGIN_B,
            b2 = HEIGHT - MARGIN_B + 5.0,
            ty = HEIGHT - MARGIN_B + 18.0
        ));
    }
    let n_yticks = 6;
    for i in 0..=n_yticks {
        let v = lo + (hi - lo) * i as f64 / n_yticks as f64;
        let ty = y(v);
        svg.push_str(&format!(
            "<line x1=\"{l2}\" y1=\"{ty:.2}\" x2=\"{l}\" y2=\"{ty:.2}\" stroke=\"#333\"/>\n<text x=\"{lx}\" y=\"{tyt:.2}\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">{v:.2}</text>\n",
            l = MARGIN_L,
            l2 = MARGIN_L - 5.0,
            lx = MARGIN_L - 8.0,
            tyt = ty + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{cx}\" y=\"{cy}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\">round</text>\n",
        cx = MARGIN_L + plot_w / 2.0,
        cy = HEIGHT - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{cy}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\" transform=\"rotate(-90 16 {cy})\">estimated human effect</text>\n",
        cy = MARGIN_T + plot_h / 2.0
    ));

    // Bands first, then lines on top.
    for s in &series {
        if s.name == "ground_truth" {
            continue;
        }
        let mut fwd = Vec::new();
        let mut back = Vec::new();
        for t in 0..=t_total {
            if s.mean[t].is_finite() {
                fwd.push(format!("{:.2},{:.2}", x(t as f64), y(s.mean[t] + s.se[t])));
                back.push(format!("{:.2},{:.2}", x(t as f64), y(s.mean[t] - s.se[t])));
            }
        }
        back.reverse();
        if fwd.len() > 1 {
            svg.push_str(&format!(
                "<polygon points=\"{} {}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                fwd.join(" "),
                back.join(" "),
                color_for(&s.name)
            ));
        }
    }
    for s in &series {
        let pts: Vec<String> = (0..=t_total)
            .filter(|&t| s.mean[t].is_finite())
            .map(|t| format!("{:.2},{:.2}", x(t as f64), y(s.mean[t])))
            .collect();
        let width = if s.name == "ground_truth" { 2.5 } else { 1.8 };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{width}\"/>\n",
            pts.join(" "),
            color_for(&s.name)
        ));
    }

    // Legend.
    let lx = WIDTH - MARGIN_R + 12.0;
    for (i, s) in series.iter().enumerate() {
        let ly = MARGIN_T + 14.0 + i as f64 * 20.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly:.2}\" x2=\"{x2}\" y2=\"{ly:.2}\" stroke=\"{c}\" stroke-width=\"2.5\"/>\n<text x=\"{tx}\" y=\"{ty:.2}\" font-size=\"12\" fill=\"#111\">{n}</text>\n",
            x2 = lx + 22.0,
            c = color_for(&s.name),
            tx = lx + 28.0,
            ty = ly + 4.0,
            n = s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
