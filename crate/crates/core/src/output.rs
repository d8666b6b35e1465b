//! Writers for run artifacts: a CSV table, a metadata file, a text summary
//! and an SVG plot.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scenario::RunArtifact;

/// Column-oriented table: `t, mean_mc, var_mc, q05, q95`, then the closed
/// forms when present, then one column per retained path.
pub fn write_csv(art: &RunArtifact) -> String {
    let st = &art.stats;
    let mut out = String::from("t,mean_mc,var_mc,q05,q95");
    if art.mean_cf.is_some() {
        out.push_str(",mean_cf");
    }
    if art.var_cf.is_some() {
        out.push_str(",var_cf");
    }
    for i in 0..art.paths.len() {
        let _ = write!(out, ",path_{i}");
    }
    out.push('\n');
    let last = st.quantiles.len() - 1;
    for (j, t) in st.times.iter().enumerate() {
        let mut row = vec![*t, st.mean[j], st.variance[j], st.quantiles[0][j], st.quantiles[last][j]];
        row.extend(art.mean_cf.as_ref().map(|v| v[j]));
        row.extend(art.var_cf.as_ref().map(|v| v[j]));
        row.extend(art.paths.iter().map(|p| p[j]));
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// The effective config followed by `#` lines describing the outcome; it
/// parses back as a [`Scenario`](crate::scenario::Scenario).
pub fn write_metadata(art: &RunArtifact) -> String {
    let mut out = art.scenario.to_config();
    let st = &art.stats;
    let neg = &art.negative;
    let _ = writeln!(out, "# paths used: {} of {}", st.n_used, st.n_paths);
    let _ = writeln!(out, "# excluded: {} blow-up or singular, {} domain", st.blown_up, st.domain_failures);
    let _ = writeln!(out, "# well-posedness: {}", art.well_posedness);
    let _ = writeln!(out, "# ever negative: {:.6}", neg.ever_negative_fraction);
    let _ = writeln!(out, "# mean time below zero: {:.6}", neg.mean_time_below_zero_fraction);
    for notice in &art.notices {
        let _ = writeln!(out, "# notice: {notice}");
    }
    out
}

/// Human-readable digest of a run.
pub fn summary(art: &RunArtifact) -> String {
    let st = &art.stats;
    let n = st.times.len() - 1;
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} ({})", art.scenario.name, art.scenario.analytics);
    let _ = writeln!(out, "paths used {} of {}, seed {}", st.n_used, st.n_paths, st.master_seed);
    let _ = writeln!(out, "well-posedness {}", art.well_posedness);
    let _ = writeln!(
        out,
        "at t = {:.4}: mean {:.6e} ± {:.1e}, variance {:.6e}",
        st.times[n],
        st.mean[n],
        st.std_error(n),
        st.variance[n]
    );
    if let (Some(m), Some(v)) = (&art.mean_cf, &art.var_cf) {
        let _ = writeln!(out, "closed form: mean {:.6e}, variance {:.6e}", m[n], v[n]);
    }
    let _ = writeln!(
        out,
        "negative rates: {:.1}% of paths, {:.1}% of time on average",
        100.0 * art.negative.ever_negative_fraction,
        100.0 * art.negative.mean_time_below_zero_fraction
    );
    for notice in &art.notices {
        let _ = writeln!(out, "notice: {notice}");
    }
    out
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 50.0;

/// Retained paths in grey, the mean in black (closed form when available,
/// otherwise the ensemble mean), and a dashed zero line when any plotted
/// value is negative.
pub fn emit_plot(art: &RunArtifact) -> Result<String> {
    let times = &art.stats.times;
    if times.is_empty() || art.stats.mean.is_empty() {
        return Err(Error::InvalidParameter("nothing to plot".into()));
    }
    let mean = art.mean_cf.as_ref().unwrap_or(&art.stats.mean);
    let all = art.paths.iter().flatten().chain(mean.iter()).copied().filter(|x| x.is_finite());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !lo.is_finite() {
        return Err(Error::InvalidParameter("nothing finite to plot".into()));
    }
    let negative = lo < 0.0;
    if hi - lo < 1e-300 {
        lo -= 0.5;
        hi += 0.5;
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let tspan = if t1 > t0 { t1 - t0 } else { 1.0 };
    let x = |t: f64| MARGIN + (t - t0) / tspan * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);
    let polyline = |vals: &[f64], style: &str| {
        let pts: Vec<String> = times
            .iter()
            .zip(vals)
            .filter(|(_, v)| v.is_finite())
            .map(|(t, v)| format!("{:.2},{:.2}", x(*t), y(*v)))
            .collect();
        format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", pts.join(" "))
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<path d=\"M{MARGIN} {} H{} M{MARGIN} {} V{MARGIN}\" stroke=\"black\"/>",
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">t</text>", WIDTH / 2.0, HEIGHT - 15.0);
    let _ = writeln!(svg, "<text x=\"15\" y=\"{}\" text-anchor=\"middle\">r_t</text>", HEIGHT / 2.0);
    let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"11\">{t0}</text>", HEIGHT - MARGIN + 15.0);
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{t1}</text>",
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 15.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{hi:.3e}</text>",
        MARGIN - 4.0,
        MARGIN
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{lo:.3e}</text>",
        MARGIN - 4.0,
        HEIGHT - MARGIN
    );
    if negative {
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN}\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"red\" stroke-dasharray=\"4 4\"/>",
            y(0.0),
            WIDTH - MARGIN
        );
    }
    for p in &art.paths {
        svg.push_str(&polyline(p, "stroke=\"grey\" stroke-width=\"0.6\" class=\"path\""));
    }
    svg.push_str(&polyline(mean, "stroke=\"black\" stroke-width=\"2\" class=\"mean\""));
    svg.push_str("</svg>\n");
    Ok(svg)
}
