//! SVG line charts over epoch records: one polyline per instance, epochs of
//! one type on the x axis. Dominance charts carry a dashed reference line at
//! 0.5; undefined dominance values split an instance's polyline into
//! segments rather than being interpolated through.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::{read_csv, EpochRow};
use crate::stats::EpochRecord;
use crate::trainer::Mode;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Which epoch statistic to chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKey {
    Dominance,
    Bounces,
}

impl SeriesKey {
    fn label(self) -> &'static str {
        match self {
            SeriesKey::Dominance => "dominance",
            SeriesKey::Bounces => "bounces",
        }
    }
}

impl FromStr for SeriesKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<SeriesKey> {
        match s {
            "dominance" => Ok(SeriesKey::Dominance),
            "bounces" => Ok(SeriesKey::Bounces),
            other => Err(Error::Config(format!(
                "unknown series {other:?}; expected dominance or bounces"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub input: PathBuf,
    pub series: SeriesKey,
    pub epoch_type: Mode,
    pub output: PathBuf,
}

/// Reads an epochs CSV, renders the chart, and writes standalone SVG.
pub fn cmd_plot(spec: &ChartSpec) -> Result<()> {
    let rows: Vec<EpochRow> = read_csv(&spec.input)?;
    let records: Vec<EpochRecord> = rows
        .into_iter()
        .map(|r| EpochRecord {
            instance: r.instance,
            epoch: r.epoch,
            epoch_type: r.epoch_type,
            bounces: r.bounces,
            left_moves: r.left_moves,
            right_moves: r.right_moves,
            sessions: 0,
        })
        .collect();
    let svg = render_chart(&records, spec.series, spec.epoch_type)?;
    if let Some(parent) = spec.output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(&spec.output, svg).map_err(|e| Error::io(&spec.output, e))?;
    println!("wrote {}", spec.output.display());
    Ok(())
}

/// Builds the SVG text: one polyline per instance over the epochs of the
/// requested type (x = 1-based ordinal within the type).
pub fn render_chart(records: &[EpochRecord], series: SeriesKey, epoch_type: Mode) -> Result<String> {
    let filtered: Vec<&EpochRecord> = records
        .iter()
        .filter(|r| r.epoch_type == epoch_type)
        .collect();
    if filtered.is_empty() {
        return Err(Error::DataIntegrity(format!(
            "no {epoch_type} epochs to plot"
        )));
    }

    let mut epochs: Vec<usize> = filtered.iter().map(|r| r.epoch).collect();
    epochs.sort_unstable();
    epochs.dedup();
    let ordinal: BTreeMap<usize, usize> = epochs.iter().enumerate().map(|(i, &e)| (e, i + 1)).collect();

    // Per instance: ordinal -> optional value, in epoch order.
    let mut per_instance: BTreeMap<u32, Vec<(usize, Option<f64>)>> = BTreeMap::new();
    for r in &filtered {
        let value = match series {
            SeriesKey::Bounces => Some(r.bounces as f64),
            SeriesKey::Dominance => r.dominance(),
        };
        per_instance
            .entry(r.instance)
            .or_default()
            .push((ordinal[&r.epoch], value));
    }
    for points in per_instance.values_mut() {
        points.sort_unstable_by_key(|(x, _)| *x);
    }

    let (y_min, y_max) = match series {
        SeriesKey::Dominance => (0.0, 1.0),
        SeriesKey::Bounces => {
            let max = filtered.iter().map(|r| r.bounces).max().unwrap_or(0) as f64;
            (0.0, if max > 0.0 { max * 1.05 } else { 1.0 })
        }
    };
    let x_min = 1.0;
    let x_max = (epochs.len().max(2)) as f64;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = move |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        svg,
        "<line class=\"axis\" x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>",
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        svg,
        "<line class=\"axis\" x1=\"{x0}\" y1=\"{MARGIN_TOP}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>"
    );

    // Ticks and tick labels.
    let x_ticks = 5.min(epochs.len());
    for k in 0..x_ticks {
        let frac = if x_ticks == 1 { 0.0 } else { k as f64 / (x_ticks - 1) as f64 };
        let value = x_min + frac * ((epochs.len() as f64) - x_min);
        let x = sx(value);
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>",
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            y0 + 20.0,
            value.round() as usize
        );
    }
    for k in 0..=4 {
        let value = y_min + k as f64 / 4.0 * (y_max - y_min);
        let y = sy(value);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{x0}\" y2=\"{y}\" stroke=\"black\"/>",
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{value:.2}</text>",
            x0 - 8.0,
            y + 4.0
        );
    }

    // Axis labels.
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">{epoch_type} epoch</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        series.label()
    );

    // Reference line at 0.5 for dominance charts.
    if series == SeriesKey::Dominance {
        let y = sy(0.5);
        let _ = writeln!(
            svg,
            "<line class=\"ref\" x1=\"{x0}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#555\" stroke-dasharray=\"6,4\"/>",
            WIDTH - MARGIN_RIGHT
        );
    }

    // One polyline per instance; gaps split into extra polylines.
    for (idx, (instance, points)) in per_instance.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let flush = |segment: &mut Vec<(f64, f64)>, svg: &mut String| {
            if segment.len() >= 2 {
                let pts: Vec<String> = segment
                    .iter()
                    .map(|(x, y)| format!("{:.2},{:.2}", x, y))
                    .collect();
                let _ = writeln!(
                    svg,
                    "<polyline data-instance=\"{instance}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                    pts.join(" ")
                );
            } else if segment.len() == 1 {
                let (x, y) = segment[0];
                let _ = writeln!(
                    svg,
                    "<circle data-instance=\"{instance}\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"{color}\"/>"
                );
            }
            segment.clear();
        };
        for &(x, value) in points {
            match value {
                Some(v) => segment.push((sx(x as f64), sy(v))),
                None => flush(&mut segment, &mut svg),
            }
        }
        flush(&mut segment, &mut svg);
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(instance: u32, epoch: usize, epoch_type: Mode, bounces: u64, left: u64, right: u64) -> EpochRecord {
        EpochRecord {
            instance,
            epoch,
            epoch_type,
            bounces,
            left_moves: left,
            right_moves: right,
            sessions: 100,
        }
    }

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn dominance_chart_has_one_polyline_per_instance_plus_ref() {
        let mut records = Vec::new();
        for instance in 0..10 {
            for k in 0..4 {
                records.push(record(instance, 2 * k + 1, Mode::Greedy, 10, 5 + instance as u64, 5));
            }
        }
        let svg = render_chart(&records, SeriesKey::Dominance, Mode::Greedy).unwrap();
        assert_eq!(count(&svg, "<polyline"), 10);
        assert_eq!(count(&svg, "class=\"ref\""), 1);
        assert!(svg.contains("xmlns=\"http://www.w3.org/2000/svg\""));
    }

    #[test]
    fn single_instance_chart_has_one_polyline() {
        let records: Vec<EpochRecord> = (0..5)
            .map(|k| record(3, k, Mode::Exploratory, k as u64, 1, 1))
            .collect();
        let svg = render_chart(&records, SeriesKey::Bounces, Mode::Exploratory).unwrap();
        assert_eq!(count(&svg, "<polyline"), 1);
        assert_eq!(count(&svg, "class=\"ref\""), 0, "bounce charts have no 0.5 line");
    }

    #[test]
    fn absent_dominance_splits_polyline() {
        // Epochs 0..4 with epoch 2 undefined: two segments, never a line
        // bridging the gap.
        let records = vec![
            record(0, 0, Mode::Greedy, 1, 3, 1),
            record(0, 1, Mode::Greedy, 1, 2, 2),
            record(0, 2, Mode::Greedy, 1, 0, 0), // no movement: undefined
            record(0, 3, Mode::Greedy, 1, 1, 3),
            record(0, 4, Mode::Greedy, 1, 1, 1),
        ];
        let svg = render_chart(&records, SeriesKey::Dominance, Mode::Greedy).unwrap();
        assert_eq!(count(&svg, "<polyline"), 2);
    }

    #[test]
    fn empty_filter_is_data_integrity_error() {
        let records = vec![record(0, 0, Mode::Greedy, 1, 1, 1)];
        assert!(matches!(
            render_chart(&records, SeriesKey::Bounces, Mode::Exploratory),
            Err(Error::DataIntegrity(_))
        ));
    }

    #[test]
    fn series_key_parses() {
        assert_eq!("dominance".parse::<SeriesKey>().unwrap(), SeriesKey::Dominance);
        assert_eq!("bounces".parse::<SeriesKey>().unwrap(), SeriesKey::Bounces);
        assert!("other".parse::<SeriesKey>().is_err());
    }
}
