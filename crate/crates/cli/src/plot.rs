//! Static SVG rendering of a privacy-utility trade-off.

use std::fmt::Write;

use sanitizer_core::TradeoffPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Pareto curve drawn from `(chance_leakage, chance_utility)` through the
/// front to `(1, max utility)`, with the two extrapolated segments dashed.
pub struct PlotInput<'a> {
    pub points: &'a [TradeoffPoint],
    pub front: &'a [TradeoffPoint],
    pub chance_leakage: f64,
    pub chance_utility: f64,
    pub auc: f64,
}

fn sx(x: f64) -> f64 {
    MARGIN + x.clamp(0.0, 1.0) * (WIDTH - 2.0 * MARGIN)
}

fn sy(y: f64) -> f64 {
    HEIGHT - MARGIN - y.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN)
}

fn dashed(svg: &mut String, a: (f64, f64), b: (f64, f64)) {
    let _ = writeln!(
        svg,
        r#"<line class="anchor" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
        sx(a.0),
        sy(a.1),
        sx(b.0),
        sy(b.1)
    );
}

pub fn render_svg(input: &PlotInput<'_>) -> String {
    let (cl, cu) = (input.chance_leakage, input.chance_utility);
    let lift = |y: f64| y.clamp(cu.min(1.0), 1.0f64.max(cu));
    let mut curve: Vec<(f64, f64)> = input
        .front
        .iter()
        .map(|p| (p.leakage_acc.clamp(cl, 1.0), lift(p.utility_acc)))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_util = curve.iter().map(|p| p.1).fold(cu, f64::max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axes with ticks every 0.2
    let _ = writeln!(
        svg,
        r#"<path d="M{:.2} {:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        sx(0.0),
        sy(1.0),
        sy(0.0),
        sx(1.0)
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.1}</text>"#, sx(t), sy(0.0) + 18.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.1}</text>"#, sx(0.0) - 6.0, sy(t) + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">leakage (attacker accuracy)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">utility accuracy</text>"#,
        HEIGHT / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">AuC {:.4}</text>"#,
        sx(1.0),
        sy(1.0) - 10.0,
        input.auc
    );

    for p in input.points {
        let _ = writeln!(
            svg,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="4" fill="steelblue" fill-opacity="0.6"><title>config {} ({})</title></circle>"#,
            sx(p.leakage_acc),
            sy(p.utility_acc),
            p.config_id,
            p.mechanism
        );
    }
    if let (Some(&first), Some(&last)) = (curve.first(), curve.last()) {
        dashed(&mut svg, (cl, cu), first);
        if curve.len() > 1 {
            let pts: Vec<String> = curve.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="pareto" points="{}" fill="none" stroke="crimson" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        dashed(&mut svg, last, (1.0, max_util));
    } else {
        dashed(&mut svg, (cl, cu), (1.0, cu));
    }
    svg.push_str("</svg>\n");
    svg
}
