//! Numeric CSV tables: comma separated, mandatory header row, '.' decimals.

use std::path::Path;

use crate::cavity::{from_db, to_db};
use crate::dynamics::DecayTrace;
use crate::ensemble::SweepTrajectory;
use crate::error::{Error, Result};
use crate::fitkit::TransmissionMap;
use crate::spinham::LevelDiagram;

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::Data(format!("{source}: unreadable header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.iter().all(|h| h.is_empty()) {
            return Err(Error::Data(format!("{source}: header row is missing")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Data(format!("{source}: row {line}: {e}"))
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let row = rec
                .iter()
                .zip(&header)
                .map(|(v, h)| {
                    v.parse::<f64>().map_err(|_| {
                        Error::Data(format!(
                            "{source}: row {line}: column `{h}`: `{v}` is not a number"
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
            _ => Error::Io(format!("{}: {e}", path.display())),
        })?;
        Table::parse(&text, &path.display().to_string())
    }
}

/// `B_mT, E1_GHz[label], ...` with one column per tracked branch.
pub fn levels_table(d: &LevelDiagram) -> Table {
    let mut header = vec!["B_mT".to_string()];
    header.extend(
        d.labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("E{}_GHz[{l}]", i + 1)),
    );
    let mut t = Table::new(header);
    for (b, e) in d.b_grid.iter().zip(&d.energies) {
        let mut row = vec![*b];
        row.extend(e);
        t.rows.push(row);
    }
    t
}

/// `B_mT` then the occupation fraction of every label.
pub fn trajectory_table(tr: &SweepTrajectory) -> Table {
    let labels = &tr.populations[0].labels;
    let mut header = vec!["B_mT".to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    let mut t = Table::new(header);
    for (b, p) in tr.b_mt.iter().zip(&tr.populations) {
        let mut row = vec![*b];
        row.extend(
            p.counts
                .iter()
                .map(|c| if p.total > 0.0 { c / p.total } else { 0.0 }),
        );
        t.rows.push(row);
    }
    t
}

pub fn trace_table(tr: &DecayTrace) -> Table {
    let mut header = vec!["t_s".to_string(), "n1_fraction".to_string()];
    if tr.s21.is_some() {
        header.push("s21_abs".into());
    }
    let mut t = Table::new(header);
    for k in 0..tr.t.len() {
        let mut row = vec![tr.t[k], tr.n1[k]];
        if let Some(s) = &tr.s21 {
            row.push(s[k]);
        }
        t.rows.push(row);
    }
    t
}

/// Time, optional occupation and optional |S21| columns of a trace table.
pub struct TraceColumns {
    pub t: Vec<f64>,
    pub n1: Option<Vec<f64>>,
    pub s21: Option<Vec<f64>>,
}

pub fn trace_columns(t: &Table) -> Result<TraceColumns> {
    let time = t.column("t_s")?;
    let n1 = t.column("n1_fraction").ok();
    let s21 = match (t.column("s21_abs"), t.column("s21_db")) {
        (Ok(a), _) => Some(a),
        (Err(_), Ok(db)) => Some(db.into_iter().map(from_db).collect()),
        _ => None,
    };
    if n1.is_none() && s21.is_none() {
        return Err(Error::Data(
            "trace needs an n1_fraction, s21_abs or s21_db column".into(),
        ));
    }
    Ok(TraceColumns { t: time, n1, s21 })
}

/// Long format `B_mT, f_GHz, s21_db`.
pub fn map_table(m: &TransmissionMap) -> Table {
    let mut t = Table::new(vec!["B_mT".into(), "f_GHz".into(), "s21_db".into()]);
    for (b, col) in m.b_grid.iter().zip(&m.values) {
        for (f, v) in m.f_grid.iter().zip(col) {
            t.rows.push(vec![*b, *f, to_db(*v)]);
        }
    }
    t
}

pub fn map_from_table(t: &Table) -> Result<TransmissionMap> {
    let b = t.column("B_mT")?;
    let f = t.column("f_GHz")?;
    let v: Vec<f64> = match (t.column("s21_db"), t.column("s21_abs")) {
        (Ok(db), _) => db.into_iter().map(from_db).collect(),
        (Err(_), Ok(abs)) => abs,
        _ => return Err(Error::Data("map needs an s21_db or s21_abs column".into())),
    };
    let samples: Vec<(f64, f64, f64)> = (0..b.len()).map(|k| (b[k], f[k], v[k])).collect();
    TransmissionMap::from_samples(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_values() {
        let mut t = Table::new(vec!["a".into(), "b".into()]);
        t.rows.push(vec![0.1, -3.25e-17]);
        t.rows.push(vec![1e300, 7.0]);
        assert_eq!(Table::parse(&t.to_csv_string(), "mem").unwrap(), t);
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let err = Table::parse("x,y\n1,2\n3,abc\n", "data.csv").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("row 3") && msg.contains("`y`") && msg.contains("abc"),
            "{msg}"
        );
    }

    #[test]
    fn ragged_row_is_rejected() {
        let err = Table::parse("x,y\n1,2\n3\n", "data.csv").unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn missing_file_is_distinct() {
        let err = Table::read(Path::new("/nonexistent/never.csv")).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }
}
