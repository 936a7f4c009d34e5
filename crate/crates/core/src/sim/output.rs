//! CSV and SVG output for a finished run.
//!
//! `trajectory.csv` is the authoritative record; `errors.csv`, `rates.csv`
//! and the plots are derived from it. Agent and component indices in column
//! names are 1-based.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::config::SimConfig;
use crate::sim::diagnostics::{compute_v, fit_rate, RateFit, FIT_FLOOR};
use crate::sim::log::{StepRecord, TrajectoryLog};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const RATES_CSV: &str = "rates.csv";
pub const PLOT_FILES: [&str; 4] = [
    "leader_states.svg",
    "xhat_errors.svg",
    "what_errors.svg",
    "tracking_errors.svg",
];

/// Upper bound on points per plotted series.
const MAX_PLOT_POINTS: usize = 2000;

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Column names of `trajectory.csv` for `n` agents with state order `r`,
/// leader dimension `q` and regressor dimensions `m`.
pub fn trajectory_header(q: usize, r: usize, m: &[usize]) -> Vec<String> {
    let n = m.len();
    let mut h = vec!["t".to_string(), "sigma".to_string()];
    h.extend((1..=q).map(|k| format!("v[{k}]")));
    for i in 1..=n {
        h.extend((1..=r).map(|k| format!("x{i}[{k}]")));
    }
    for i in 1..=n {
        h.extend((1..=q).map(|k| format!("vhat{i}[{k}]")));
    }
    h.extend((1..=n).map(|i| format!("Stilde_norm{i}")));
    h.extend((1..=n).map(|i| format!("s{i}")));
    h.extend((1..=n).map(|i| format!("u{i}")));
    for (i, &mi) in m.iter().enumerate() {
        h.extend((1..=mi).map(|k| format!("thetahat{}[{k}]", i + 1)));
    }
    h.push("V".to_string());
    h
}

pub fn write_trajectory_csv(path: &Path, log: &TrajectoryLog, config: &SimConfig) -> Result<()> {
    let m: Vec<usize> = config.agents.iter().map(|a| a.m()).collect();
    let mut w = writer(path)?;
    w.write_record(trajectory_header(config.exosystem.q(), config.exosystem.r(), &m))?;
    let v_series = compute_v(log, config);
    for (rec, v) in log.records.iter().zip(v_series) {
        let mut row = vec![fmt(rec.t), rec.sigma.to_string()];
        row.extend(rec.v.iter().map(|&x| fmt(x)));
        row.extend(rec.agents.iter().flat_map(|a| a.x.iter().map(|&x| fmt(x))));
        row.extend(rec.agents.iter().flat_map(|a| a.v_hat.iter().map(|&x| fmt(x))));
        row.extend(rec.agents.iter().map(|a| fmt(a.s_tilde_norm)));
        row.extend(rec.agents.iter().map(|a| fmt(a.s)));
        row.extend(rec.agents.iter().map(|a| fmt(a.u)));
        row.extend(rec.agents.iter().flat_map(|a| a.theta_hat.iter().map(|&x| fmt(x))));
        row.push(fmt(v));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Componentwise `x̂ᵢ − x₀`, `ŵᵢ − w` and `xᵢ − x₀` for every follower.
struct ErrorRow {
    x_hat: Vec<Vec<f64>>,
    w_hat: Vec<Vec<f64>>,
    track: Vec<Vec<f64>>,
}

fn error_row(rec: &StepRecord, r: usize) -> ErrorRow {
    let mut row = ErrorRow {
        x_hat: Vec::new(),
        w_hat: Vec::new(),
        track: Vec::new(),
    };
    for a in &rec.agents {
        let e = &a.v_hat - &rec.v;
        row.x_hat.push(e.rows(0, r).iter().copied().collect());
        row.w_hat.push(e.rows(r, e.len() - r).iter().copied().collect());
        row.track
            .push(a.x.iter().zip(rec.v.iter()).map(|(x, x0)| x - x0).collect());
    }
    row
}

pub fn write_errors_csv(path: &Path, log: &TrajectoryLog, config: &SimConfig) -> Result<()> {
    let (r, n_w, n) = (config.exosystem.r(), config.exosystem.n_w(), config.agent_count());
    let mut header = vec!["t".to_string()];
    for (name, dim) in [("xhat_err", r), ("what_err", n_w), ("track_err", r)] {
        for i in 1..=n {
            header.extend((1..=dim).map(|k| format!("{name}{i}[{k}]")));
        }
    }
    header.extend(["vtilde_norm", "Stilde_norm", "track_norm"].map(String::from));
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for rec in &log.records {
        let e = error_row(rec, r);
        let mut row = vec![fmt(rec.t)];
        for block in [&e.x_hat, &e.w_hat, &e.track] {
            row.extend(block.iter().flatten().map(|&x| fmt(x)));
        }
        let track_norm = e.track.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        row.extend([rec.stacked_v_error(), rec.stacked_s_error(), track_norm].map(fmt));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// The window `[T/2, T]`, shortened to the second half of the span where the
/// signal stays above the fit floor when it decays to the floor earlier.
pub fn tail_window(times: &[f64], norms: &[f64]) -> (f64, f64) {
    let end = times.last().copied().unwrap_or(0.0);
    let above = times
        .iter()
        .zip(norms)
        .filter(|&(_, &y)| y > FIT_FLOOR)
        .map(|(&t, _)| t);
    let last_above = above.fold(f64::NEG_INFINITY, f64::max);
    if last_above >= end || !last_above.is_finite() {
        (end / 2.0, end)
    } else {
        (last_above / 2.0, last_above)
    }
}

/// One row of `rates.csv`.
#[derive(Debug, Clone)]
pub struct RateRow {
    pub quantity: &'static str,
    pub fit: std::result::Result<RateFit, String>,
}

/// Tail rate fits of the stacked error norms.
pub fn tail_rates(log: &TrajectoryLog) -> Vec<RateRow> {
    let times = log.times();
    let quantities: [(&'static str, Vec<f64>); 3] = [
        ("Stilde_norm", log.series(StepRecord::stacked_s_error)),
        ("vtilde_norm", log.series(StepRecord::stacked_v_error)),
        ("track_norm", log.series(StepRecord::max_tracking_error)),
    ];
    quantities
        .into_iter()
        .map(|(quantity, norms)| {
            let window = tail_window(&times, &norms);
            RateRow {
                quantity,
                fit: fit_rate(&times, &norms, window).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

pub fn write_rates_csv(path: &Path, rows: &[RateRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["quantity", "lambda", "r_squared", "from", "to", "samples", "status"])?;
    for row in rows {
        match &row.fit {
            Ok(f) => w.write_record([
                row.quantity.to_string(),
                fmt(f.lambda),
                fmt(f.r_squared),
                fmt(f.window.0),
                fmt(f.window.1),
                f.samples.to_string(),
                "ok".to_string(),
            ])?,
            Err(msg) => w.write_record([row.quantity, "", "", "", "", "0", msg.as_str()])?,
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A named polyline for [`line_chart`].
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// A plain SVG line chart with axes, tick labels and a legend.
pub fn line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (900.0, 500.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{}" stroke="#ddd"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
            top + ph,
            top + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            left + pw,
            left - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, y)) in s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .enumerate()
        {
            let _ = write!(d, "{}{:.2},{:.2}", if j == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2"/>"#
        );
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn decimated(log: &TrajectoryLog) -> Vec<&StepRecord> {
    let stride = log.len().div_ceil(MAX_PLOT_POINTS).max(1);
    let mut picked: Vec<&StepRecord> = log.records.iter().step_by(stride).collect();
    if let Some(last) = log.records.last() {
        if !std::ptr::eq(*picked.last().unwrap(), last) {
            picked.push(last);
        }
    }
    picked
}

/// The four standard plots: leader states, `x̂ᵢ − x₀`, `ŵᵢ − w` and
/// `xᵢ − x₀`, keyed by file name.
pub fn plots(log: &TrajectoryLog, config: &SimConfig) -> Vec<(&'static str, String)> {
    let (r, n_w, q) = (config.exosystem.r(), config.exosystem.n_w(), config.exosystem.q());
    let recs = decimated(log);
    let rows: Vec<ErrorRow> = recs.iter().map(|rec| error_row(rec, r)).collect();
    let leader: Vec<Series> = (0..q)
        .map(|k| Series {
            name: format!("v{}", k + 1),
            points: recs.iter().map(|rec| (rec.t, rec.v[k])).collect(),
        })
        .collect();
    let per_agent = |pick: fn(&ErrorRow) -> &Vec<Vec<f64>>, dim: usize, label: &str| -> Vec<Series> {
        let mut out = Vec::new();
        for i in 0..config.agent_count() {
            for k in 0..dim {
                out.push(Series {
                    name: format!("{label}{},{}", k + 1, i + 1),
                    points: recs.iter().zip(&rows).map(|(rec, e)| (rec.t, pick(e)[i][k])).collect(),
                });
            }
        }
        out
    };
    vec![
        (PLOT_FILES[0], line_chart("Leader states", "v", &leader)),
        (
            PLOT_FILES[1],
            line_chart("Estimation errors x̂ᵢ − x₀", "x̂ − x₀", &per_agent(|e| &e.x_hat, r, "x̂")),
        ),
        (
            PLOT_FILES[2],
            line_chart("Estimation errors ŵᵢ − w", "ŵ − w", &per_agent(|e| &e.w_hat, n_w, "ŵ")),
        ),
        (
            PLOT_FILES[3],
            line_chart("Tracking errors xᵢ − x₀", "x − x₀", &per_agent(|e| &e.track, r, "x")),
        ),
    ]
}

/// Writes every output file into `dir`, creating it if needed, and returns
/// the written paths together with the tail rate fits.
pub fn write_outputs(dir: &Path, log: &TrajectoryLog, config: &SimConfig) -> Result<(Vec<PathBuf>, Vec<RateRow>)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join(TRAJECTORY_CSV);
    write_trajectory_csv(&path, log, config)?;
    written.push(path);
    let path = dir.join(ERRORS_CSV);
    write_errors_csv(&path, log, config)?;
    written.push(path);
    let rates = tail_rates(log);
    let path = dir.join(RATES_CSV);
    write_rates_csv(&path, &rates)?;
    written.push(path);
    for (name, svg) in plots(log, config) {
        let path = dir.join(name);
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok((written, rates))
}

/// Reads the `t` column and one named column from a CSV file.
pub fn read_csv_column(path: &Path, column: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::param("csv", format!("{other:?}")),
    })?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::param("column", format!("`{name}` not found in {}", path.display())))
    };
    let (ti, ci) = (find("t")?, find(column)?);
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |idx: usize| -> Result<f64> {
            rec.get(idx).unwrap_or("").trim().parse::<f64>().map_err(|_| {
                Error::param(
                    "csv",
                    format!("row {}: `{}` is not a number", line + 2, rec.get(idx).unwrap_or("")),
                )
            })
        };
        times.push(parse(ti)?);
        values.push(parse(ci)?);
    }
    Ok((times, values))
}
