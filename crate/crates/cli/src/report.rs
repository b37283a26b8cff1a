use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;

use boardball_core::analysis::Metric;
use boardball_core::report::{build_report, read_csv, write_csv, BinRow, DyadRow, Report, SegmentRow, StrategyRow, TrialRow};

use crate::analyze::{DYAD_CSV, SEGMENTS_CSV, STRATEGY_CSV, TRIALS_CSV};
use crate::svg::Plot;
use crate::{write_file, DataError};

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Directory written by `analyze`.
    pub metrics: PathBuf,
    /// Output directory; defaults to `<metrics>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

fn read<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_csv(file).map_err(|e| DataError(format!("{}: {e}", path.display())).into())
}

/// Loads the analyze outputs; every missing file is listed in the error.
pub fn load(metrics: &Path) -> anyhow::Result<Report> {
    let missing: Vec<String> = [TRIALS_CSV, SEGMENTS_CSV, STRATEGY_CSV, DYAD_CSV]
        .iter()
        .filter(|f| !metrics.join(f).is_file())
        .map(|f| metrics.join(f).display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DataError(format!("missing metric files: {}", missing.join(", "))).into());
    }
    let trials: Vec<TrialRow> = read(&metrics.join(TRIALS_CSV))?;
    let segments: Vec<SegmentRow> = read(&metrics.join(SEGMENTS_CSV))?;
    let strategy: Vec<StrategyRow> = read(&metrics.join(STRATEGY_CSV))?;
    let dyad: Vec<DyadRow> = read(&metrics.join(DYAD_CSV))?;
    Ok(build_report(&trials, &segments, strategy, dyad))
}

fn fmt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.decimals$}"),
        _ => "-".into(),
    }
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn bin_rows(bins: &[BinRow], decimals: usize) -> Vec<Vec<String>> {
    bins.iter()
        .map(|b| {
            vec![
                b.condition.clone(),
                b.bin.to_string(),
                format!("{}-{}", b.first_trial, b.last_trial),
                b.n.to_string(),
                format!("{} ± {}", fmt(b.mean, decimals), fmt(b.std, decimals)),
            ]
        })
        .collect()
}

/// Markdown rendering of every table.
pub fn markdown(r: &Report) -> String {
    let mut s = String::from("# Aggregate report\n\n## Conditions\n\n");
    let rows: Vec<Vec<String>> = r
        .conditions
        .iter()
        .map(|c| {
            vec![
                c.condition.clone(),
                c.n_trials.to_string(),
                c.n_succeeded.to_string(),
                c.n_aborted.to_string(),
                format!("{} ± {}", fmt(c.completion_time.mean, 3), fmt(c.completion_time.std, 3)),
                format!("{} ± {}", fmt(c.np.mean, 2), fmt(c.np.std, 2)),
                fmt(c.n_failures.mean, 3),
            ]
        })
        .collect();
    table(&mut s, &["condition", "trials", "succeeded", "aborted", "completion time (s)", "NP", "failures/trial"], &rows);

    s.push_str("## Completion time by bins of 30 trials (s)\n\n");
    table(&mut s, &["condition", "bin", "trials", "n", "mean ± std"], &bin_rows(&r.completion_time_bins, 3));
    s.push_str("## Ball speed peaks (NP) by bins of 30 trials\n\n");
    table(&mut s, &["condition", "bin", "trials", "n", "mean ± std"], &bin_rows(&r.np_bins, 2));

    s.push_str("## Movement class shares\n\n");
    let rows: Vec<Vec<String>> = r
        .shares
        .iter()
        .map(|x| {
            vec![
                x.condition.clone(),
                x.n_trials.to_string(),
                format!("{:.4}", x.cooperative),
                format!("{:.4}", x.competitive),
                format!("{:.4}", x.single),
                format!("{:.4}", x.still),
            ]
        })
        .collect();
    table(&mut s, &["condition", "trials", "cooperative", "competitive", "single", "still"], &rows);

    s.push_str("## Absolute inter-handle delay over cooperative segments (ms)\n\n");
    let rows: Vec<Vec<String>> = r
        .delay
        .iter()
        .map(|d| {
            let ms = |v: Option<f64>| fmt(v.map(|v| v * 1e3), 1);
            vec![d.condition.clone(), d.n_segments.to_string(), ms(d.delay_10), ms(d.delay_20), ms(d.delay_30), ms(d.delay_40)]
        })
        .collect();
    let pct: Vec<String> = r.delay_fractions.iter().map(|f| format!("{:.0}%", f * 100.0)).collect();
    let mut header = vec!["condition", "segments"];
    header.extend(pct.iter().map(String::as_str));
    table(&mut s, &header, &rows);

    s.push_str("## Braking strategy ellipses\n\n");
    let rows: Vec<Vec<String>> = r
        .strategy
        .iter()
        .map(|e| {
            vec![
                e.session.clone(),
                e.performer.label().into(),
                e.condition.clone(),
                e.group.to_string(),
                e.n_points.to_string(),
                format!("{:.4}", e.center_distance),
                format!("{:.4}", e.center_velocity),
                format!("{:.1}", e.rotation_deg),
                format!("{:.4}", e.half_width),
                format!("{:.4}", e.half_height),
                format!("{:.3e}", e.area),
                flags(e),
            ]
        })
        .collect();
    table(
        &mut s,
        &["session", "performer", "condition", "group", "points", "distance (m)", "velocity (m/s)", "rotation (deg)", "half width", "half height", "area", "flags"],
        &rows,
    );

    s.push_str("## Individual versus dyad\n\n");
    let rows: Vec<Vec<String>> = r
        .dyad
        .iter()
        .map(|d| {
            vec![
                d.session.clone(),
                if d.haptic { "on" } else { "off" }.into(),
                d.participant.label().into(),
                metric_label(d.metric).into(),
                format!("{:.3}", d.v_self),
                format!("{:.3}", d.v_partner),
                format!("{:.3}", d.v_dyad),
                format!("{:.3}", d.x),
                format!("{:.3}", d.y),
                if d.below_diagonal { "yes" } else { "no" }.into(),
            ]
        })
        .collect();
    table(&mut s, &["session", "haptic", "participant", "metric", "self", "partner", "dyad", "x", "y", "dyad better"], &rows);
    s
}

fn flags(e: &StrategyRow) -> String {
    let mut f = Vec::new();
    if e.short_group {
        f.push("short");
    }
    if e.degenerate {
        f.push("degenerate");
    }
    if e.unstable_rotation {
        f.push("unstable rotation");
    }
    f.join(", ")
}

fn metric_label(m: Metric) -> &'static str {
    match m {
        Metric::CompletionTime => "completion_time",
        Metric::Np => "np",
    }
}

fn bins_plot(title: &str, y: &str, bins: &[BinRow]) -> Plot {
    let mut p = Plot::new(title, "bin of 30 trials", y);
    let mut labels: Vec<&str> = bins.iter().map(|b| b.condition.as_str()).collect();
    labels.dedup();
    for label in labels {
        let rows: Vec<&BinRow> = bins.iter().filter(|b| b.condition == label).collect();
        let pts: Vec<(f64, f64)> = rows.iter().map(|b| (b.bin as f64, b.mean.unwrap_or(f64::NAN))).collect();
        let err: Vec<f64> = rows.iter().map(|b| b.std.unwrap_or(0.0)).collect();
        p.line(label, &pts, Some(&err));
    }
    p
}

/// SVG plots keyed by file name.
pub fn plots(r: &Report) -> Vec<(String, String)> {
    let mut out = vec![
        ("completion_time.svg".into(), bins_plot("Completion time", "s", &r.completion_time_bins).render()),
        ("np.svg".into(), bins_plot("Ball speed peaks", "NP", &r.np_bins).render()),
    ];

    let mut delay = Plot::new("Absolute delay, cooperative segments", "threshold (% of peak speed)", "ms");
    for d in &r.delay {
        let v = [d.delay_10, d.delay_20, d.delay_30, d.delay_40];
        let pts: Vec<(f64, f64)> = r
            .delay_fractions
            .iter()
            .zip(v)
            .map(|(f, v)| (f * 100.0, v.map_or(f64::NAN, |v| v * 1e3)))
            .collect();
        delay.line(&d.condition, &pts, None);
    }
    out.push(("delay.svg".into(), delay.render()));

    let mut shares = Plot::new("Movement class shares", "class (cooperative, competitive, single, still)", "share");
    for s in &r.shares {
        let v = [s.cooperative, s.competitive, s.single, s.still];
        let pts: Vec<(f64, f64)> = v.iter().enumerate().map(|(i, v)| (i as f64 + 1.0, *v)).collect();
        shares.points(&s.condition, &pts);
    }
    out.push(("shares.svg".into(), shares.render()));

    let mut cells: Vec<(String, String, String)> = r
        .strategy
        .iter()
        .map(|e| (e.session.clone(), e.performer.label().to_string(), e.condition.clone()))
        .collect();
    cells.dedup();
    for (session, performer, condition) in cells {
        let mut p = Plot::new(
            &format!("Braking strategy, {session} {performer} {condition}"),
            "distance to target center (m)",
            "velocity toward target (m/s)",
        );
        for e in r
            .strategy
            .iter()
            .filter(|e| e.session == session && e.performer.label() == performer && e.condition == condition)
        {
            p.ellipse(
                Some(&format!("group {}", e.group)),
                (e.center_distance, e.center_velocity),
                (e.half_width, e.half_height),
                e.rotation_deg.to_radians(),
                e.group - 1,
            );
        }
        out.push((format!("strategy_{session}_{performer}_{condition}.svg"), p.render()));
    }

    for metric in [Metric::CompletionTime, Metric::Np] {
        let mut p = Plot::new(&format!("Individual versus dyad: {}", metric_label(metric)), "(partner - self) / 2", "dyad - self");
        let rows: Vec<&DyadRow> = r.dyad.iter().filter(|d| d.metric == metric).collect();
        let lim = rows.iter().map(|d| d.x.abs().max(d.y.abs())).fold(0.0, f64::max).max(1e-3);
        p.reference(&[(-lim, -lim), (lim, lim)]);
        for haptic in [true, false] {
            let pts: Vec<(f64, f64)> = rows.iter().filter(|d| d.haptic == haptic).map(|d| (d.x, d.y)).collect();
            p.points(if haptic { "haptic on" } else { "haptic off" }, &pts);
        }
        out.push((format!("dyad_{}.svg", metric_label(metric)), p.render()));
    }
    out
}

pub fn write_report(r: &Report, out: &Path, svg: bool) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv = |name: &str, buf: Vec<u8>| write_file(&out.join(name), buf);
    let mut b = Vec::new();
    write_csv(&r.completion_time_bins, &mut b)?;
    csv("completion_time_bins.csv", b)?;
    let mut b = Vec::new();
    write_csv(&r.np_bins, &mut b)?;
    csv("np_bins.csv", b)?;
    let mut b = Vec::new();
    write_csv(&r.shares, &mut b)?;
    csv("shares.csv", b)?;
    let mut b = Vec::new();
    write_csv(&r.delay, &mut b)?;
    csv("delay.csv", b)?;
    let mut b = Vec::new();
    write_csv(&r.strategy, &mut b)?;
    csv("strategy_ellipses.csv", b)?;
    let mut b = Vec::new();
    write_csv(&r.dyad, &mut b)?;
    csv("dyad_points.csv", b)?;
    write_file(&out.join("report.json"), serde_json::to_string_pretty(r)? + "\n")?;
    write_file(&out.join("report.md"), markdown(r))?;
    if svg {
        for (name, body) in plots(r) {
            write_file(&out.join(name), body)?;
        }
    }
    Ok(())
}

pub fn run(args: &ReportArgs) -> anyhow::Result<Report> {
    let report = load(&args.metrics)?;
    let out = args.out.clone().unwrap_or_else(|| args.metrics.join("report"));
    write_report(&report, &out, args.svg)?;
    print!("{}", markdown(&report));
    eprintln!("report written to {}", out.display());
    Ok(report)
}
