// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;

use super::TestReport;

/// Maximal cliques of the graph joining `i != j` whenever
/// `reject[i][j]` is false. Cliques are sorted, and listed in sorted order.
pub fn maximal_cliques(reject: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = reject.len();
    if n == 0 {
        return Vec::new();
    }
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i != j && !reject[i][j]).collect())
        .collect();
    let mut out = Vec::new();
    bron_kerbosch(&adj, &mut Vec::new(), (0..n).collect(), Vec::new(), &mut out);
    for c in &mut out {
        c.sort_unstable();
    }
    out.sort();
    out
}

fn bron_kerbosch(
    adj: &[Vec<bool>],
    r: &mut Vec<usize>,
    p: Vec<usize>,
    mut x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r.clone());
        return;
    }
    let pivot = p
        .iter()
        .chain(&x)
        .copied()
        .max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count())
        .expect("p or x nonempty");
    let mut p = p;
    let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
    for v in candidates {
        r.push(v);
        let np = p.iter().copied().filter(|&u| adj[v][u]).collect();
        let nx = x.iter().copied().filter(|&u| adj[v][u]).collect();
        bron_kerbosch(adj, r, np, nx, out);
        r.pop();
        p.retain(|&u| u != v);
        x.push(v);
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Critical-difference diagram as an SVG 1.1 document.
///
/// The axis runs over mean ranks with rank 1 on the left. The better half
/// of the methods is labelled on the left, the rest on the right, and each
/// group in `report.groups` is drawn as one horizontal bar spanning its
/// members' mean ranks.
pub fn cd_diagram(report: &TestReport) -> String {
    const WIDTH: f64 = 720.0;
    const MARGIN: f64 = 150.0;
    const AXIS_Y: f64 = 40.0;
    const ROW: f64 = 22.0;
    const BAR_GAP: f64 = 8.0;

    let l = report.methods.len();
    let lo = 1.0;
    let hi = (l.max(2)) as f64;
    let x = |rank: f64| MARGIN + (rank - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);

    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| {
        report.mean_ranks[a]
            .total_cmp(&report.mean_ranks[b])
            .then(a.cmp(&b))
    });
    let left = l.div_ceil(2);
    let bars_top = AXIS_Y + 14.0;
    let labels_top = bars_top + report.groups.len() as f64 * BAR_GAP + 16.0;
    let height = labels_top + left.max(l - left) as f64 * ROW + 10.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<title>Critical difference diagram ({}, alpha = {})</title>"#,
        escape(&report.metric),
        report.alpha
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{:.2}" y1="{AXIS_Y}" x2="{:.2}" y2="{AXIS_Y}" stroke="black"/>"#,
        x(lo),
        x(hi)
    );
    for t in 1..=(hi as usize) {
        let tx = x(t as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{:.2}" x2="{tx:.2}" y2="{AXIS_Y}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            AXIS_Y - 5.0,
            AXIS_Y - 9.0
        );
    }

    for (g, group) in report.groups.iter().enumerate() {
        let ranks = group.iter().map(|&i| report.mean_ranks[i]);
        let min = ranks.clone().fold(f64::INFINITY, f64::min);
        let max = ranks.fold(f64::NEG_INFINITY, f64::max);
        let y = bars_top + g as f64 * BAR_GAP;
        let members: Vec<String> = group.iter().map(|&i| escape(&report.methods[i])).collect();
        let _ = writeln!(
            s,
            r#"<line class="clique" data-members="{}" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="4"/>"#,
            members.join(","),
            x(min) - 3.0,
            x(max) + 3.0
        );
    }

    for (pos, &i) in order.iter().enumerate() {
        let rx = x(report.mean_ranks[i]);
        let (row, lx, anchor) = if pos < left {
            (pos, MARGIN - 10.0, "end")
        } else {
            (l - 1 - pos, WIDTH - MARGIN + 10.0, "start")
        };
        let ly = labels_top + row as f64 * ROW;
        let _ = writeln!(
            s,
            r#"<polyline class="leader" points="{rx:.2},{AXIS_Y} {rx:.2},{ly:.2} {lx:.2},{ly:.2}" fill="none" stroke="black"/>"#
        );
        let tx = if anchor == "end" { lx - 4.0 } else { lx + 4.0 };
        let _ = writeln!(
            s,
            r#"<text class="method" x="{tx:.2}" y="{:.2}" text-anchor="{anchor}">{} ({:.2})</text>"#,
            ly + 4.0,
            escape(&report.methods[i]),
            report.mean_ranks[i]
        );
    }
    s.push_str("</svg>\n");
    s
}
