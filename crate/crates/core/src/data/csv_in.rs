use std::path::Path;

use super::{bucketize, Dataset};
use crate::error::{Error, Result};

/// Reads the named numeric columns and bucketizes each into `target_d`
/// equi-width buckets over its observed range. Integer columns spanning no
/// more than `target_d` values keep their native size.
pub fn ingest_csv(path: &Path, columns: &[&str], target_d: &[usize]) -> Result<Dataset> {
    if columns.len() != target_d.len() {
        return Err(Error::InvalidConfig(format!(
            "{} columns but {} target sizes",
            columns.len(),
            target_d.len()
        )));
    }
    if let Some(&d) = target_d.iter().find(|&&d| d == 0) {
        return Err(Error::InvalidConfig(format!("target domain size {d}")));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let idx = columns
        .iter()
        .map(|name| {
            headers.iter().position(|h| h.trim() == *name).ok_or_else(|| Error::Ingestion {
                row: 0,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut raw = vec![Vec::new(); columns.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (c, &i) in idx.iter().enumerate() {
            let cell = record.get(i).unwrap_or("").trim();
            let x: f64 = cell.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| Error::Ingestion {
                row,
                column: columns[c].to_string(),
                message: format!("non-numeric value {cell:?}"),
            })?;
            raw[c].push(x);
        }
    }
    if raw.first().is_none_or(Vec::is_empty) {
        return Err(Error::Ingestion {
            row: 0,
            column: String::new(),
            message: "file has no data rows".into(),
        });
    }
    let mut domains = Vec::with_capacity(columns.len());
    let mut out = Vec::with_capacity(columns.len());
    for (xs, &target) in raw.iter().zip(target_d) {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let integral = xs.iter().all(|x| x.fract() == 0.0);
        if integral && hi - lo + 1.0 <= target as f64 {
            let d = (hi - lo) as usize + 1;
            domains.push(d);
            out.push(xs.iter().map(|x| (x - lo) as usize + 1).collect());
        } else {
            domains.push(target);
            out.push(xs.iter().map(|&x| bucketize(x, lo, hi, target)).collect());
        }
    }
    Dataset::new(domains, out, format!("csv:{}", path.display()))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Ingestion {
            row: 0,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn native_discrete_kept() {
        let body: String = std::iter::once("a,b\n".to_string())
            .chain((0..10).map(|i| format!("{i},{}\n", i as f64 * 0.37)))
            .collect();
        let f = file(&body);
        let ds = ingest_csv(f.path(), &["a", "b"], &[256, 4]).unwrap();
        assert_eq!(ds.domains, vec![10, 4]);
        assert_eq!(ds.column(0)[9], 10);
        assert_eq!(ds.column(1)[9], 4);
        assert_eq!(ds.column(1)[0], 1);
    }

    #[test]
    fn constant_column_single_bucket() {
        let f = file("x\n2.5\n2.5\n2.5\n");
        let ds = ingest_csv(f.path(), &["x"], &[16]).unwrap();
        assert!(ds.column(0).iter().all(|&v| v == 1));
    }

    #[test]
    fn errors_carry_context() {
        let f = file("x,y\n1,2\n3,abc\n");
        match ingest_csv(f.path(), &["y"], &[8]) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(ingest_csv(f.path(), &["z"], &[8]), Err(Error::Ingestion { .. })));
        let empty = file("x\n");
        assert!(ingest_csv(empty.path(), &["x"], &[8]).is_err());
    }
}
