//! Classical multidimensional scaling to the plane, a Euclidean silhouette
//! over the result, and CSV/SVG scatter output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::metrics::ClusterAssignment;
use crate::ncd::DistanceMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub id: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    /// Sorted by id.
    pub points: Vec<Point>,
    /// Kruskal stress-1 of the planar distances against the input.
    pub stress: f64,
}

/// Classical (Torgerson) scaling: double-centre the squared distances and
/// keep the two leading eigenvectors. Each axis is flipped so that its
/// first nonzero coordinate, in id order, is positive.
pub fn mds_project(m: &DistanceMatrix, labels: &ClusterAssignment) -> Result<Projection2D> {
    m.validate()?;
    let m = m.sorted_by_id();
    let n = m.len();
    if n < 3 {
        return Err(Error::input("projection needs at least 3 points"));
    }
    let label_of = |id: &str| {
        labels
            .class_of(id)
            .map(str::to_string)
            .ok_or_else(|| Error::input(format!("no class label for {id:?}")))
    };
    let sq = DMatrix::from_fn(n, n, |i, j| m.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let scale = m.values.iter().flatten().fold(0.0f64, |a, &v| a.max(v));
    let tiny = 1e-12 * scale.max(1.0);
    let mut axes = [vec![0.0; n], vec![0.0; n]];
    for (axis, &k) in axes.iter_mut().zip(&order) {
        let lambda = eig.eigenvalues[k];
        if lambda <= tiny * tiny {
            continue;
        }
        let root = lambda.sqrt();
        for (i, cell) in axis.iter_mut().enumerate() {
            *cell = eig.eigenvectors[(i, k)] * root;
        }
        if let Some(first) = axis.iter().find(|v| v.abs() > tiny) {
            if *first < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    if axes.iter().flatten().all(|v| *v == 0.0) {
        log::warn!("distance matrix is degenerate; all points placed at the origin");
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = axes[0][i] - axes[0][j];
            let dy = axes[1][i] - axes[1][j];
            let fit = (dx * dx + dy * dy).sqrt();
            num += (m.get(i, j) - fit).powi(2);
            den += m.get(i, j).powi(2);
        }
    }
    let stress = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    let points = (0..n)
        .map(|i| {
            Ok(Point {
                id: m.ids[i].clone(),
                label: label_of(&m.ids[i])?,
                x: axes[0][i],
                y: axes[1][i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Projection2D { points, stress })
}

/// Classical silhouette on planar Euclidean distances: `b(i)` is the
/// smallest mean distance to another class.
pub fn silhouette_euclidean(p: &Projection2D) -> Result<f64> {
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, pt) in p.points.iter().enumerate() {
        classes.entry(pt.label.as_str()).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::Undefined("silhouette needs at least two classes".into()));
    }
    let dist = |a: &Point, b: &Point| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    let mut total = 0.0;
    for (i, pi) in p.points.iter().enumerate() {
        let own = &classes[pi.label.as_str()];
        if own.len() < 2 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| dist(pi, &p.points[j])).sum::<f64>() / (own.len() - 1) as f64;
        let b = classes
            .iter()
            .filter(|(c, _)| **c != pi.label)
            .map(|(_, idx)| idx.iter().map(|&j| dist(pi, &p.points[j])).sum::<f64>() / idx.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let top = a.max(b);
        if top > 0.0 {
            total += (b - a) / top;
        }
    }
    Ok(total / p.points.len() as f64)
}

/// `id,label,x,y` rows.
pub fn projection_csv(p: &Projection2D) -> String {
    let mut out = String::from("id,label,x,y\n");
    for pt in &p.points {
        let _ = writeln!(out, "{},{},{:.9},{:.9}", pt.id, pt.label, pt.x, pt.y);
    }
    out
}

const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

fn glyph(out: &mut String, shape: usize, x: f64, y: f64, colour: &str) {
    let r = 4.0;
    let _ = match shape % 4 {
        0 => writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{colour}"/>"#),
        1 => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{colour}"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        2 => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{colour}"/>"#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        _ => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{colour}"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
    };
}

/// Standalone SVG scatter with one glyph and colour per class.
pub fn projection_svg(p: &Projection2D) -> String {
    let (w, h, pad) = (640.0, 480.0, 40.0);
    let xs = p.points.iter().map(|q| q.x);
    let ys = p.points.iter().map(|q| q.y);
    let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let sx = if x1 > x0 { (w - 2.0 * pad) / (x1 - x0) } else { 0.0 };
    let sy = if y1 > y0 { (h - 2.0 * pad) / (y1 - y0) } else { 0.0 };
    let classes: Vec<&str> = {
        let mut c: Vec<&str> = p.points.iter().map(|q| q.label.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for q in &p.points {
        let k = classes.binary_search(&q.label.as_str()).expect("class listed");
        let x = if sx > 0.0 { pad + (q.x - x0) * sx } else { w / 2.0 };
        let y = if sy > 0.0 { h - pad - (q.y - y0) * sy } else { h / 2.0 };
        glyph(&mut out, k, x, y, COLOURS[k % COLOURS.len()]);
    }
    for (k, c) in classes.iter().enumerate() {
        let y = 16.0 + 14.0 * k as f64;
        glyph(&mut out, k, 12.0, y - 4.0, COLOURS[k % COLOURS.len()]);
        let _ = writeln!(out, r#"<text x="22" y="{y}" font-size="11" font-family="sans-serif">{}</text>"#, xml_escape(c));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write `<stem>.csv` and `<stem>.svg`; returns both paths.
pub fn emit_plot(p: &Projection2D, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if let Some(bad) = p.points.iter().find(|q| q.label.is_empty()) {
        return Err(Error::input(format!("point {:?} has an empty class label", bad.id)));
    }
    if p.points.iter().any(|q| !q.x.is_finite() || !q.y.is_finite()) {
        return Err(Error::input("non-finite coordinate"));
    }
    let csv = stem.with_extension("csv");
    let svg = stem.with_extension("svg");
    std::fs::write(&csv, projection_csv(p)).map_err(|e| Error::io(&csv, e))?;
    std::fs::write(&svg, projection_svg(p)).map_err(|e| Error::io(&svg, e))?;
    Ok((csv, svg))
}
