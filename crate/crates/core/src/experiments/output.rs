use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::optimizers::OptimizerTrace;
use crate::validation::SweepReport;

/// Columns of a trace file as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub coord_names: Vec<String>,
    pub iterates: Vec<Vec<f64>>,
    pub objective_values: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    /// `steps_taken[k]` sits on row `k`; the last row has no step.
    pub steps_taken: Vec<f64>,
}

impl TraceTable {
    /// Whether every column equals the trace bit for bit.
    pub fn matches(&self, trace: &OptimizerTrace) -> bool {
        let same =
            |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.iterates.len() == trace.iterates.len()
            && self
                .iterates
                .iter()
                .zip(&trace.iterates)
                .all(|(a, b)| same(a, b.as_slice()))
            && same(&self.objective_values, &trace.objective_values)
            && same(&self.gradient_norms, &trace.gradient_norms)
            && same(&self.steps_taken, &trace.steps_taken)
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn default_names(trace: &OptimizerTrace) -> Vec<String> {
    (0..trace.dim().unwrap_or(1)).map(|i| format!("x{i}")).collect()
}

/// CSV text with header `iter,<coords>,objective,grad_norm,alpha`.
pub fn trace_csv(trace: &OptimizerTrace, coord_names: Option<&[&str]>) -> Result<String> {
    let names: Vec<String> = match coord_names {
        Some(n) => n.iter().map(|s| s.to_string()).collect(),
        None => default_names(trace),
    };
    if let Some(d) = trace.dim() {
        if d != names.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: names.len(),
            });
        }
    }
    let mut out = format!("iter,{},objective,grad_norm,alpha\n", names.join(","));
    for (k, x) in trace.iterates.iter().enumerate() {
        let coords: Vec<String> = x.iter().map(|v| num(*v)).collect();
        let alpha = trace.steps_taken.get(k).map(|a| num(*a)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{k},{},{},{},{alpha}",
            coords.join(","),
            num(trace.objective_values[k]),
            num(trace.gradient_norms[k]),
        );
    }
    Ok(out)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write [`trace_csv`] to `path`.
pub fn emit_csv(trace: &OptimizerTrace, coord_names: Option<&[&str]>, path: &Path) -> Result<()> {
    write(path, &trace_csv(trace, coord_names)?)
}

/// Write the `param,error,location` table of a sweep.
pub fn emit_sweep_csv(report: &SweepReport, path: &Path) -> Result<()> {
    write(path, &report.to_csv())
}

/// Parse text produced by [`trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<TraceTable> {
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n');
    let header = lines
        .next()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| parse_err(1, "empty input".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[0] != "iter" || cols[cols.len() - 3..] != ["objective", "grad_norm", "alpha"] {
        return Err(parse_err(1, format!("unexpected header `{header}`")));
    }
    let dim = cols.len() - 4;
    let mut table = TraceTable {
        coord_names: cols[1..=dim].iter().map(|s| s.to_string()).collect(),
        iterates: Vec::new(),
        objective_values: Vec::new(),
        gradient_norms: Vec::new(),
        steps_taken: Vec::new(),
    };
    let mut missing_alpha = false;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            return Err(parse_err(lineno, "empty line".into()));
        }
        if missing_alpha {
            return Err(parse_err(lineno, "row after a row without a step".into()));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let k: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad iteration index: {e}")))?;
        if k != table.iterates.len() {
            return Err(parse_err(lineno, format!("iteration {k} out of order")));
        }
        let f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("bad number `{s}`: {e}")))
        };
        table
            .iterates
            .push(fields[1..=dim].iter().map(|s| f(s)).collect::<Result<_>>()?);
        table.objective_values.push(f(fields[dim + 1])?);
        table.gradient_norms.push(f(fields[dim + 2])?);
        match fields[dim + 3] {
            "" => missing_alpha = true,
            a => table.steps_taken.push(f(a)?),
        }
    }
    if !table.iterates.is_empty() && !missing_alpha {
        return Err(parse_err(
            table.iterates.len() + 1,
            "last row must not carry a step".into(),
        ));
    }
    Ok(table)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
/// Errors below this are drawn at this level on the log axis.
const LOG_FLOOR: f64 = 1e-16;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG of `‖x^k - target‖` against `k` on a log scale, one polyline per trace.
pub fn plot_svg(traces: &[&OptimizerTrace], labels: &[&str], target: &Point) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    if traces.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} traces but {} labels",
            traces.len(),
            labels.len()
        )));
    }
    let series: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            t.errors_to(target)
                .into_iter()
                .map(|e| e.max(LOG_FLOOR).log10())
                .collect()
        })
        .collect();
    let max_len = series.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let all = series.iter().flatten();
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 0.0);
    }
    lo = lo.floor();
    hi = hi.ceil();
    if hi - lo < 1.0 {
        lo -= 1.0;
    }
    let px = |k: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * k as f64 / (max_len - 1) as f64;
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let decades = (hi - lo).round() as i32;
    for i in 0..=decades {
        let v = lo + i as f64;
        let y = py(v);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">1e{}</text>"#,
            MARGIN - 6.0,
            y + 4.0,
            v as i32
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">iteration</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
        x1,
        y0 + 16.0,
        max_len - 1
    );
    for (i, (pts, label)) in series.iter().zip(labels).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{:.2},{:.2}", px(k), py(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text></g>"#,
            x1 - 150.0,
            x1 - 130.0,
            x1 - 125.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Write [`plot_svg`] to `path`.
pub fn emit_plot_svg(traces: &[&OptimizerTrace], labels: &[&str], target: &Point, path: &Path) -> Result<()> {
    write(path, &plot_svg(traces, labels, target)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Termination;

    fn trace(values: &[(f64, f64)]) -> OptimizerTrace {
        let mut t = OptimizerTrace::new();
        for (k, (x, f)) in values.iter().enumerate() {
            if k > 0 {
                t.steps_taken.push(0.1 * k as f64 + 1.0 / 3.0);
            }
            t.push(Point::from_element(1, *x), *f, f.sqrt() / 7.0);
        }
        t
    }

    #[test]
    fn empty_trace_is_header_only() {
        let t = OptimizerTrace::new();
        let csv = trace_csv(&t, Some(&["theta"])).unwrap();
        assert_eq!(csv, "iter,theta,objective,grad_norm,alpha\n");
        let back = parse_trace_csv(&csv).unwrap();
        assert!(back.iterates.is_empty());
    }

    #[test]
    fn three_iterations_four_lines() {
        let t = trace(&[(0.1, 0.5), (0.2, 0.4), (0.3, 0.3)]);
        let csv = trace_csv(&t, None).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(!csv.contains('\r'));
        assert!(csv.ends_with(",\n"));
        assert!(csv.starts_with("iter,x0,objective,grad_norm,alpha\n0,1.0000000000000001e-1,"));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = trace(&[
            (0.1, 0.5),
            (std::f64::consts::PI / 10.0, 1e-300),
            (0.7, f64::MIN_POSITIVE),
        ]);
        let back = parse_trace_csv(&trace_csv(&t, Some(&["theta"])).unwrap()).unwrap();
        assert!(back.matches(&t));
        assert_eq!(back.coord_names, vec!["theta"]);
    }

    #[test]
    fn malformed_input_names_the_line() {
        let t = trace(&[(0.1, 0.5), (0.2, 0.4)]);
        let csv = trace_csv(&t, None).unwrap();
        let broken = csv.replace("2.0000000000000001e-1", "zz");
        assert!(matches!(parse_trace_csv(&broken), Err(Error::Parse { line: 3, .. })));
        assert!(parse_trace_csv("a,b\n").is_err());
        assert!(parse_trace_csv("").is_err());
    }

    #[test]
    fn emit_surfaces_path_errors() {
        let t = trace(&[(0.1, 0.5)]);
        let err = emit_csv(&t, None, Path::new("/nonexistent/dir/t.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/t.csv"));
    }

    #[test]
    fn svg_is_well_formed_with_one_polyline_per_trace() {
        let a = trace(&[(0.1, 0.5), (0.3, 0.2), (0.45, 0.1), (0.5, 0.0)]);
        let b = trace(&[(0.1, 0.5), (0.4, 0.2)]);
        let svg = plot_svg(&[&a, &b], &["gaussian n=1", "bump <n=3>"], &Point::from_element(1, 0.5)).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        assert_eq!(lines.len(), 2);
        let legend: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("legend"))
            .collect();
        assert_eq!(legend.len(), 2);
        assert!(svg.contains("bump &lt;n=3&gt;"));
    }

    #[test]
    fn constant_error_gives_horizontal_line() {
        let mut t = trace(&[(0.2, 0.1), (0.2, 0.1), (0.2, 0.1)]);
        t.termination = Termination::MaxIters;
        let svg = plot_svg(&[&t], &["flat"], &Point::from_element(1, 0.5)).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let pts = doc
            .descendants()
            .find(|n| n.has_tag_name("polyline"))
            .unwrap()
            .attribute("points")
            .unwrap();
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        assert!(plot_svg(&[], &[], &Point::from_element(1, 0.5)).is_err());
    }
}
