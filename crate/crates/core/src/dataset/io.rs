use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{CaseRecord, Dataset, StationRecord};
use crate::error::{Error, Result};
use crate::model::EnsembleLayout;

const MAX_REPORTED: usize = 50;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn ingestion(path: &str, problems: Vec<String>) -> Error {
    Error::Ingestion {
        path: path.to_string(),
        problems,
    }
}

fn parse_real(field: &str, what: &str, line: u64, problems: &mut Vec<String>) -> Option<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            problems.push(format!("row {line}: {what} '{field}' is not a finite number"));
            None
        }
    }
}

/// Read a stations table with header `station_id,x,y`.
pub fn read_stations<R: Read>(reader: R, source: &str) -> Result<Vec<StationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["station_id", "x", "y"] {
        return Err(ingestion(
            source,
            vec![format!(
                "expected header 'station_id,x,y', got '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            )],
        ));
    }
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            problems.push(format!("row {line}: expected 3 fields, got {}", row.len()));
            continue;
        }
        let x = parse_real(&row[1], "x", line, &mut problems);
        let y = parse_real(&row[2], "y", line, &mut problems);
        if row[0].is_empty() {
            problems.push(format!("row {line}: empty station_id"));
            continue;
        }
        if let (Some(x), Some(y)) = (x, y) {
            out.push(StationRecord {
                station_id: row[0].to_string(),
                x,
                y,
            });
        }
    }
    let mut ids: Vec<&str> = out.iter().map(|s| s.station_id.as_str()).collect();
    ids.sort();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            problems.push(format!("duplicate station_id '{}'", w[0]));
        }
    }
    if !problems.is_empty() {
        problems.truncate(MAX_REPORTED);
        return Err(ingestion(source, problems));
    }
    Ok(out)
}

/// Read a cases table with header `station_id,date,obs,m_<sub>_<role>...`.
///
/// Every row is checked; all offending rows are reported together.
pub fn read_cases<R: Read>(reader: R, source: &str, stations: &[StationRecord]) -> Result<(EnsembleLayout, Vec<CaseRecord>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols[..3] != ["station_id", "date", "obs"] {
        return Err(ingestion(
            source,
            vec![format!("expected header 'station_id,date,obs,m_...', got '{}'", cols.join(","))],
        ));
    }
    let layout = EnsembleLayout::from_column_names(&cols[3..]).map_err(|e| ingestion(source, vec![format!("header: {e}")]))?;
    let known: std::collections::HashSet<&str> = stations.iter().map(|s| s.station_id.as_str()).collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != cols.len() {
            problems.push(format!("row {line}: expected {} fields, got {}", cols.len(), row.len()));
            continue;
        }
        let before = problems.len();
        let station_id = &row[0];
        if !known.contains(station_id) {
            problems.push(format!("row {line}: unknown station '{station_id}'"));
        }
        let date = NaiveDate::parse_from_str(&row[1], "%Y-%m-%d")
            .map_err(|_| problems.push(format!("row {line}: bad date '{}'", &row[1])))
            .ok();
        let obs = parse_real(&row[2], "obs", line, &mut problems);
        if let Some(o) = obs.filter(|o| *o < 0.0) {
            problems.push(format!("row {line}: negative observation {o}"));
        }
        let members: Vec<f64> = (3..row.len())
            .filter_map(|k| {
                let v = parse_real(&row[k], cols[k], line, &mut problems)?;
                if v < 0.0 {
                    problems.push(format!("row {line}: negative forecast {v} in {}", cols[k]));
                }
                Some(v)
            })
            .collect();
        if let Some(d) = date {
            if !seen.insert((station_id.to_string(), d)) {
                problems.push(format!("row {line}: duplicate case for '{station_id}' on {d}"));
            }
        }
        if problems.len() == before {
            out.push(CaseRecord {
                station_id: station_id.to_string(),
                date: date.expect("checked"),
                members,
                observation: obs.expect("checked"),
            });
        }
    }
    if !problems.is_empty() {
        problems.truncate(MAX_REPORTED);
        return Err(ingestion(source, problems));
    }
    Ok((layout, out))
}

/// Load and validate a dataset from a stations file and a cases file.
pub fn load_csv(stations_path: impl AsRef<Path>, cases_path: impl AsRef<Path>) -> Result<Dataset> {
    let (sp, cp) = (stations_path.as_ref(), cases_path.as_ref());
    let stations = read_stations(open(sp)?, &sp.display().to_string())?;
    let (layout, records) = read_cases(open(cp)?, &cp.display().to_string(), &stations)?;
    Dataset::new(stations, records, layout)
}

pub fn write_stations<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["station_id", "x", "y"])?;
    for s in ds.stations() {
        w.write_record([s.station_id.clone(), s.x.to_string(), s.y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<stations>", e))?;
    Ok(())
}

pub fn write_cases<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["station_id".to_string(), "date".into(), "obs".into()];
    header.extend(ds.layout().column_names());
    w.write_record(&header)?;
    for c in ds.cases() {
        let mut row = Vec::with_capacity(header.len());
        row.push(ds.station_id(c.station).to_string());
        row.push(c.date.format("%Y-%m-%d").to_string());
        row.push(c.observation.to_string());
        row.extend(c.members.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<cases>", e))?;
    Ok(())
}

/// Write the dataset as a stations file and a cases file.
pub fn write_csv(ds: &Dataset, stations_path: impl AsRef<Path>, cases_path: impl AsRef<Path>) -> Result<()> {
    let (sp, cp) = (stations_path.as_ref(), cases_path.as_ref());
    write_stations(ds, File::create(sp).map_err(|e| Error::io(sp, e))?)?;
    write_cases(ds, File::create(cp).map_err(|e| Error::io(cp, e))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const STATIONS: &str = "station_id,x,y\nA,0,0\nB,3,4\n";

    fn cases(rows: &str) -> String {
        format!("station_id,date,obs,m_E_p1,m_E_p2,m_E_p3,m_E_p4\n{rows}")
    }

    fn parse(rows: &str) -> Result<Dataset> {
        let st = read_stations(STATIONS.as_bytes(), "stations")?;
        let (layout, recs) = read_cases(cases(rows).as_bytes(), "cases", &st)?;
        Dataset::new(st, recs, layout)
    }

    #[test]
    fn loads_well_formed_file() {
        let mut rows = String::new();
        for s in ["A", "B"] {
            for d in 1..=3 {
                rows.push_str(&format!("{s},2014-03-0{d},4.5,1,2,3,4\n"));
            }
        }
        let ds = parse(&rows).unwrap();
        assert_eq!(ds.cases().len(), 6);
        assert_eq!(ds.n_members(), 4);
    }

    #[test]
    fn names_negative_observation_row() {
        let err = parse("A,2014-03-01,4.5,1,2,3,4\nB,2014-03-01,-0.5,1,2,3,4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("negative observation"), "{msg}");
    }

    #[test]
    fn reports_every_offender() {
        let err = parse("A,2014-03-01,x,1,2,3,4\nA,2014-13-01,1,1,2,3,4\nC,2014-03-02,1,1,2,3,4\nA,2014-03-03,1,1,2,3\n").unwrap_err();
        let Error::Ingestion { problems, .. } = err else { panic!() };
        assert_eq!(problems.len(), 4, "{problems:?}");
    }

    #[test]
    fn duplicate_case_rejected() {
        let err = parse("A,2014-03-01,1,1,2,3,4\nA,2014-03-01,2,1,2,3,4\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn gap_loads() {
        let ds = parse("A,2014-03-01,1,1,2,3,4\nA,2014-03-05,1,1,2,3,4\n").unwrap();
        assert_eq!(ds.station_cases(0).len(), 2);
    }

    #[test]
    fn bad_headers() {
        assert!(read_stations("id,x,y\n".as_bytes(), "s").is_err());
        let st = read_stations(STATIONS.as_bytes(), "s").unwrap();
        assert!(read_cases("station_id,date,obs,e1\n".as_bytes(), "c", &st).is_err());
        assert!(read_cases("station,date,obs,m_E_p1\n".as_bytes(), "c", &st).is_err());
    }
}
