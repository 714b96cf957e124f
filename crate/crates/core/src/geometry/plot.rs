//! Comma-separated plot data.
//!
//! Curve files have a `layer,distance` header followed by one row per
//! layer. Projection files have one `#` header line carrying the layer,
//! explained variances, total variance and source, then `x,y,label` rows.
//! Reals are printed with 9 significant digits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::store::{write_atomic, Label};

use super::{LayerSeparabilityCurve, ProjectedPoint, ProjectionResult};

const CURVE_HEADER: &str = "layer,distance";

fn real(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn format_curve_csv(curve: &LayerSeparabilityCurve) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for (i, d) in curve.distances.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, real(*d)));
    }
    out
}

pub fn format_projection_csv(p: &ProjectionResult) -> String {
    let source: String = p
        .source
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    let mut out = format!(
        "# layer={} explained_variance={},{} total_variance={} source={}\n",
        p.layer_index,
        real(p.explained_variance[0]),
        real(p.explained_variance[1]),
        real(p.total_variance),
        source
    );
    for pt in &p.points {
        out.push_str(&format!("{},{},{}\n", real(pt.x), real(pt.y), pt.label));
    }
    out
}

pub fn write_curve_csv(curve: &LayerSeparabilityCurve, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_curve_csv(curve).as_bytes())
}

pub fn write_projection_csv(p: &ProjectionResult, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_projection_csv(p).as_bytes())
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::PlotParse(format!("not a number: {s:?}")))
}

pub fn parse_curve_csv(text: &str) -> Result<LayerSeparabilityCurve> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::PlotParse("missing curve header".into()));
    }
    let mut distances = Vec::new();
    for (i, line) in lines.enumerate() {
        let (layer, d) = line
            .split_once(',')
            .ok_or_else(|| Error::PlotParse(format!("bad row {line:?}")))?;
        if layer.trim().parse::<usize>().ok() != Some(i + 1) {
            return Err(Error::PlotParse(format!("layers out of order at {line:?}")));
        }
        distances.push(parse_real(d)?);
    }
    Ok(LayerSeparabilityCurve { distances })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProjection {
    pub layer_index: usize,
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
    pub source: String,
    pub points: Vec<ProjectedPoint>,
}

pub fn parse_projection_csv(text: &str) -> Result<ParsedProjection> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|h| h.strip_prefix("# "))
        .ok_or_else(|| Error::PlotParse("missing projection header".into()))?;
    let (fields, source) = header
        .split_once(" source=")
        .ok_or_else(|| Error::PlotParse("header lacks source".into()))?;
    let mut layer = None;
    let mut ev = None;
    let mut total = None;
    for kv in fields.split(' ') {
        match kv.split_once('=') {
            Some(("layer", v)) => layer = v.parse::<usize>().ok(),
            Some(("explained_variance", v)) => {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| Error::PlotParse("bad explained_variance".into()))?;
                ev = Some([parse_real(a)?, parse_real(b)?]);
            }
            Some(("total_variance", v)) => total = Some(parse_real(v)?),
            _ => return Err(Error::PlotParse(format!("unknown header field {kv:?}"))),
        }
    }
    let mut points = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::PlotParse(format!("bad row {line:?}")));
        }
        points.push(ProjectedPoint {
            x: parse_real(cols[0])?,
            y: parse_real(cols[1])?,
            label: cols[2].parse::<Label>().map_err(|e| Error::PlotParse(e.to_string()))?,
        });
    }
    Ok(ParsedProjection {
        layer_index: layer.ok_or_else(|| Error::PlotParse("header lacks layer".into()))?,
        explained_variance: ev.ok_or_else(|| Error::PlotParse("header lacks variances".into()))?,
        total_variance: total.ok_or_else(|| Error::PlotParse("header lacks total".into()))?,
        source: source.to_string(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 5e-9 * b.abs()
    }

    #[test]
    fn curve_has_one_header_and_a_row_per_layer() {
        let curve = LayerSeparabilityCurve {
            distances: vec![0.1, 2.0 / 3.0, 12345.678901234],
        };
        let text = format_curve_csv(&curve);
        assert_eq!(text.lines().count(), 4);
        let back = parse_curve_csv(&text).unwrap();
        for (a, b) in back.distances.iter().zip(&curve.distances) {
            assert!(close(*a, *b), "{a} vs {b}");
        }
    }

    #[test]
    fn projection_round_trip() {
        let p = ProjectionResult {
            layer_index: 4,
            components: [vec![1.0, 0.0], vec![0.0, 1.0]],
            explained_variance: [3.0 / 7.0, 1e-12],
            total_variance: 0.5,
            points: vec![
                ProjectedPoint { x: -1.0 / 3.0, y: 1e10, label: Label::Success },
                ProjectedPoint { x: 0.0, y: -2.5, label: Label::Unlabeled },
            ],
            source: "deltas from a/b c".into(),
            iterations: 1,
            converged: true,
        };
        let text = format_projection_csv(&p);
        assert_eq!(text.lines().count(), 3);
        let back = parse_projection_csv(&text).unwrap();
        assert_eq!(back.layer_index, 4);
        assert_eq!(back.source, p.source);
        assert!(close(back.explained_variance[0], p.explained_variance[0]));
        assert!(close(back.explained_variance[1], p.explained_variance[1]));
        for (a, b) in back.points.iter().zip(&p.points) {
            assert!(close(a.x, b.x) && close(a.y, b.y));
            assert_eq!(a.label, b.label);
        }
    }
}
