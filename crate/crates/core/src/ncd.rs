//! Normalized compression distance and pairwise distance matrices.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::BufRead;

use log::warn;
use rayon::prelude::*;

use crate::codec::{compressed_size, CodecSpec, PpmModel};
use crate::error::{Error, Result};

/// Values above `1 + NCD_EPSILON` indicate a broken compressor.
pub const NCD_EPSILON: f64 = 0.1;

/// A labeled text unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub class_label: String,
    pub body: Vec<u8>,
}

impl Document {
    pub fn new(id: impl Into<String>, class_label: impl Into<String>, body: impl Into<Vec<u8>>) -> Self {
        Document {
            id: id.into(),
            class_label: class_label.into(),
            body: body.into(),
        }
    }
}

/// Symmetric matrix of pairwise distances, rows and columns ordered as `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Codec that produced the values; unknown when read back from CSV.
    pub codec: Option<CodecSpec>,
}

impl DistanceMatrix {
    pub fn new(ids: Vec<String>, values: Vec<Vec<f64>>, codec: Option<CodecSpec>) -> Result<Self> {
        let m = DistanceMatrix { ids, values, codec };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Shape, uniqueness, exact symmetry and non-negativity.
    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        let mut seen = HashSet::new();
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::input(format!("duplicate id {id:?}")));
            }
        }
        if self.values.len() != n || self.values.iter().any(|r| r.len() != n) {
            return Err(Error::input("distance matrix is not square with one row per id"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = self.values[i][j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::input(format!("invalid distance {v} at ({i},{j})")));
                }
                if v != self.values[j][i] {
                    return Err(Error::input(format!("asymmetric distance at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    /// Rows and columns reordered so ids ascend.
    pub fn sorted_by_id(&self) -> DistanceMatrix {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        DistanceMatrix {
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            values: order
                .iter()
                .map(|&i| order.iter().map(|&j| self.values[i][j]).collect())
                .collect(),
            codec: self.codec.clone(),
        }
    }

    /// CSV: a header `id,<ids...>`, then one row per id with six fractional digits.
    pub fn to_csv(&self) -> String {
        self.csv_with(|out, v| {
            let _ = write!(out, ",{v:.6}");
        })
    }

    /// Like [`to_csv`](Self::to_csv) but with shortest round-trip digits, so
    /// reading it back reproduces every value exactly.
    pub fn to_csv_exact(&self) -> String {
        self.csv_with(|out, v| {
            let _ = write!(out, ",{v}");
        })
    }

    fn csv_with(&self, cell: impl Fn(&mut String, f64)) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.values) {
            out.push_str(id);
            for v in row {
                cell(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| Error::io("<matrix>", e))?,
            None => return Err(Error::input("empty matrix file")),
        };
        let mut cols = header.trim_end().split(',');
        if cols.next() != Some("id") {
            return Err(Error::Parse {
                line: 1,
                msg: "header must start with \"id\"".into(),
            });
        }
        let ids: Vec<String> = cols.map(str::to_string).collect();
        let mut values = Vec::with_capacity(ids.len());
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::io("<matrix>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.trim_end().split(',');
            let id = fields.next().unwrap_or_default();
            if ids.get(values.len()).map(String::as_str) != Some(id) {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("row id {id:?} does not match header order"),
                });
            }
            let row = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        msg: format!("bad number {f:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        DistanceMatrix::new(ids, values, None)
    }
}

/// The distance from the four compressed sizes (in bits).
pub fn ncd_from_sizes(cx: f64, cy: f64, cxy: f64, cyx: f64) -> Result<f64> {
    let den = cx.max(cy);
    if den <= 0.0 {
        return Err(Error::Undefined("NCD of two empty inputs".into()));
    }
    let v = (cxy - cx).max(cyx - cy) / den;
    if v > 1.0 {
        warn!("NCD {v:.4} exceeds 1 (compressor imperfection)");
    }
    Ok(v)
}

/// `max{C(xy)-C(x), C(yx)-C(y)} / max{C(x), C(y)}` with all four sizes measured.
pub fn ncd(x: &[u8], y: &[u8], codec: &CodecSpec) -> Result<f64> {
    if x.is_empty() && y.is_empty() {
        return Err(Error::Undefined("NCD of two empty inputs".into()));
    }
    let cx = compressed_size(x, codec)?.bits;
    let cy = compressed_size(y, codec)?.bits;
    let cxy = compressed_size(&[x, y].concat(), codec)?.bits;
    let cyx = compressed_size(&[y, x].concat(), codec)?.bits;
    ncd_from_sizes(cx, cy, cxy, cyx)
}

/// `C(x_i)` and the row of `C(x_i x_j)` for all `j`.
fn row_sizes(docs: &[Document], i: usize, codec: &CodecSpec) -> Result<(f64, Vec<f64>)> {
    let x = &docs[i].body;
    match codec {
        CodecSpec::Ppm { order } => {
            // Continue a snapshot of the model after x instead of recompressing x.
            let mut model = PpmModel::new(*order)?;
            model.feed(x);
            let row = docs
                .iter()
                .map(|d| {
                    let mut m = model.clone();
                    m.feed(&d.body);
                    m.bits()
                })
                .collect();
            Ok((model.bits(), row))
        }
        _ => {
            let cx = compressed_size(x, codec)?.bits;
            let row = docs
                .iter()
                .map(|d| compressed_size(&[&x[..], &d.body[..]].concat(), codec).map(|c| c.bits))
                .collect::<Result<Vec<_>>>()?;
            Ok((cx, row))
        }
    }
}

/// All pairwise distances, diagonal included. Independent of input order and
/// of the rayon schedule.
pub fn ncd_matrix(docs: &[Document], codec: &CodecSpec) -> Result<DistanceMatrix> {
    codec.validate()?;
    if docs.len() < 2 {
        return Err(Error::input("need at least two documents"));
    }
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::input(format!("duplicate document id {:?}", d.id)));
        }
    }
    let rows: Vec<(f64, Vec<f64>)> = (0..docs.len())
        .into_par_iter()
        .map(|i| row_sizes(docs, i, codec))
        .collect::<Result<_>>()?;

    let n = docs.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = ncd_from_sizes(rows[i].0, rows[j].0, rows[i].1[j], rows[j].1[i])?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    DistanceMatrix::new(
        docs.iter().map(|d| d.id.clone()).collect(),
        values,
        Some(codec.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<Document> {
        vec![
            Document::new("a", "x", "the cat sat on the mat and the cat was happy"),
            Document::new("b", "x", "the cat sat on the hat and the cat was sad"),
            Document::new("c", "y", "colorless green ideas sleep furiously tonight"),
            Document::new("d", "y", "green ideas are colorless and sleep furiously"),
        ]
    }

    #[test]
    fn both_empty_is_undefined() {
        let err = ncd(b"", b"", &CodecSpec::Ppm { order: 3 }).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
    }

    #[test]
    fn one_empty_is_defined() {
        let v = ncd(b"", b"abc", &CodecSpec::Ppm { order: 3 }).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn matrix_matches_pointwise_ncd() {
        let d = docs();
        for codec in [CodecSpec::Ppm { order: 3 }, CodecSpec::Lz, CodecSpec::Bwt] {
            let m = ncd_matrix(&d, &codec).unwrap();
            for i in 0..d.len() {
                for j in 0..d.len() {
                    let v = ncd(&d[i].body, &d[j].body, &codec).unwrap();
                    assert_eq!(m.get(i, j), v, "{codec} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn similar_documents_are_closer() {
        let m = ncd_matrix(&docs(), &CodecSpec::Ppm { order: 2 }).unwrap();
        assert!(m.get(0, 1) < m.get(0, 2));
        assert!(m.get(2, 3) < m.get(1, 3));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut d = docs();
        d[1].id = "a".into();
        assert!(matches!(
            ncd_matrix(&d, &CodecSpec::Lz),
            Err(Error::Input(_))
        ));
        assert!(ncd_matrix(&d[..1], &CodecSpec::Lz).is_err());
    }

    #[test]
    fn csv_layout_and_parse() {
        let m = DistanceMatrix::new(
            vec!["p".into(), "q".into()],
            vec![vec![0.01, 0.5], vec![0.5, 0.02]],
            None,
        )
        .unwrap();
        let csv = m.to_csv();
        assert_eq!(csv, "id,p,q\np,0.010000,0.500000\nq,0.500000,0.020000\n");
        let back = DistanceMatrix::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_rejects_garbage() {
        let err = DistanceMatrix::from_csv("id,p,q\np,0,x\nq,1,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = DistanceMatrix::from_csv("id,p,q\np,0,1\nq,0.5,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }
}
