//! CSV and JSON reading and writing.
//!
//! Observed data: `unit_id,<factor>...,y_obs` with factor levels `-1`/`1`.
//! Science: a header of combination tokens (`"-1,1"`, quoted) followed by one
//! row per unit. Floats are written in shortest round-trip form.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::assignment::{ObservedExperiment, UnitRecord};
use crate::design::{Design, TreatmentCombination};
use crate::error::{Error, Result};
use crate::science::ScienceMatrix;

fn ingestion(line: usize, message: impl Into<String>) -> Error {
    Error::Ingestion {
        line,
        message: message.into(),
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        ingestion(
            line,
            format!("column {column}: cannot parse {field:?} as a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(ingestion(
            line,
            format!("column {column}: non-finite value"),
        ));
    }
    Ok(v)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader)
}

fn record_line(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Reads observed data, checking the column layout, factor levels and balance.
pub fn read_observed<R: Read>(reader: R, design: &Design) -> Result<ObservedExperiment> {
    let k = design.factors();
    let mut rdr = csv_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| ingestion(1, e.to_string()))?
        .clone();
    if header.len() != k + 2 {
        return Err(ingestion(
            1,
            format!(
                "expected {} columns (unit_id, {k} factor columns, y_obs), found {}",
                k + 2,
                header.len()
            ),
        ));
    }
    let mut records = Vec::new();
    for (index, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| ingestion(index + 2, e.to_string()))?;
        let line = record_line(&row, index + 2);
        if row.len() != k + 2 {
            return Err(ingestion(
                line,
                format!("expected {} fields, found {}", k + 2, row.len()),
            ));
        }
        let levels = (1..=k)
            .map(|c| match row[c].trim() {
                "1" | "+1" => Ok(1),
                "-1" => Ok(-1),
                other => Err(ingestion(
                    line,
                    format!(
                        "column {}: factor level must be -1 or 1, found {other:?}",
                        &header[c]
                    ),
                )),
            })
            .collect::<Result<Vec<i8>>>()?;
        let z = TreatmentCombination::new(levels)?;
        let arm = design.combination_index(&z).expect("K levels");
        let y = parse_f64(&row[k + 1], line, &header[k + 1])?;
        records.push(UnitRecord {
            id: row[0].to_string(),
            arm,
            y,
        });
    }
    ObservedExperiment::new(design, records)
}

pub fn read_observed_file(path: &Path, design: &Design) -> Result<ObservedExperiment> {
    read_observed(std::fs::File::open(path)?, design)
}

/// Number of factor columns in an observed-data header.
pub fn observed_factor_count<R: Read>(reader: R) -> Result<usize> {
    let mut rdr = csv_reader(reader);
    let n = rdr
        .headers()
        .map_err(|e| ingestion(1, e.to_string()))?
        .len();
    if n < 3 {
        return Err(ingestion(
            1,
            "observed data needs unit_id, factor columns and y_obs",
        ));
    }
    Ok(n - 2)
}

pub fn write_observed<W: Write>(
    writer: W,
    obs: &ObservedExperiment,
    design: &Design,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["unit_id".to_string()];
    header.extend((0..design.factors()).map(|f| ((b'A' + f as u8) as char).to_string()));
    header.push("y_obs".into());
    w.write_record(&header)?;
    for rec in obs.records() {
        let mut row = vec![rec.id.clone()];
        row.extend(
            design
                .combination(rec.arm)
                .levels()
                .iter()
                .map(|v| v.to_string()),
        );
        row.push(rec.y.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_science<R: Read>(reader: R) -> Result<(Design, ScienceMatrix)> {
    let mut rdr = csv_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| ingestion(1, e.to_string()))?
        .clone();
    let combos = header
        .iter()
        .map(TreatmentCombination::parse_token)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| ingestion(1, e.to_string()))?;
    let k = combos.first().map(|c| c.factors()).unwrap_or(0);
    let design = Design::new(k).map_err(|e| ingestion(1, e.to_string()))?;
    if combos.len() != design.combinations_count()
        || combos
            .iter()
            .enumerate()
            .any(|(l, z)| design.combination_index(z) != Some(l))
    {
        return Err(ingestion(
            1,
            "science header must list every combination once, in Yates order",
        ));
    }
    let mut data = Vec::new();
    for (index, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| ingestion(index + 2, e.to_string()))?;
        let line = record_line(&row, index + 2);
        if row.len() != header.len() {
            return Err(ingestion(
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        for (c, field) in row.iter().enumerate() {
            data.push(parse_f64(field, line, &header[c])?);
        }
    }
    let science = ScienceMatrix::new(&design, data)?;
    Ok((design, science))
}

pub fn read_science_file(path: &Path) -> Result<(Design, ScienceMatrix)> {
    read_science(std::fs::File::open(path)?)
}

pub fn write_science<W: Write>(writer: W, science: &ScienceMatrix, design: &Design) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    w.write_record(design.combinations().iter().map(|z| z.token()))?;
    for row in science.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes rows of numbers under a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::science::{simulate_gaussian_science, CorrelationStructure};

    #[test]
    fn table2_fixture_loads() {
        let d = Design::new(2).unwrap();
        let obs = read_observed(crate::fixtures::TABLE2_CSV.as_bytes(), &d).unwrap();
        assert_eq!(obs.units(), 20);
        assert_eq!(obs.replications(), 5);
        assert_eq!(obs.records()[7].y, 10.1216);
        assert_eq!(obs.records()[7].arm, 0);
        assert_eq!(
            observed_factor_count(crate::fixtures::TABLE2_CSV.as_bytes()).unwrap(),
            2
        );
    }

    #[test]
    fn ingestion_errors_name_lines_and_arms() {
        let d = Design::new(1).unwrap();
        let ragged = "unit_id,A,y_obs\n1,1,2.0\n2,-1\n";
        match read_observed(ragged.as_bytes(), &d).unwrap_err() {
            Error::Ingestion { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
        let bad_level = "unit_id,A,y_obs\n1,0,2.0\n2,-1,1\n";
        assert!(matches!(
            read_observed(bad_level.as_bytes(), &d),
            Err(Error::Ingestion { line: 2, .. })
        ));
        let bad_number = "unit_id,A,y_obs\n1,1,x\n2,-1,1\n";
        assert!(matches!(
            read_observed(bad_number.as_bytes(), &d),
            Err(Error::Ingestion { line: 2, .. })
        ));
        let unbalanced = "unit_id,A,y_obs\n1,1,1\n2,1,1\n3,1,1\n4,-1,1\n";
        match read_observed(unbalanced.as_bytes(), &d).unwrap_err() {
            Error::Unbalanced { arm, count, .. } => assert_eq!((arm.as_str(), count), ("-1", 1)),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn science_round_trip() {
        let d = Design::new(3).unwrap();
        let s = simulate_gaussian_science(
            &d,
            16,
            &[0.1; 8],
            &[1.0 / 3.0; 8],
            &CorrelationStructure::CompoundSymmetry(0.2),
            4,
            Execution::Sequential,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_science(&mut buf, &s, &d).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("\"-1,-1,-1\",\"-1,-1,1\""));
        let (d2, s2) = read_science(buf.as_slice()).unwrap();
        assert_eq!(d2, d);
        assert_eq!(s2, s);
    }

    #[test]
    fn observed_round_trip() {
        let d = Design::new(2).unwrap();
        let obs = read_observed(crate::fixtures::TABLE2_CSV.as_bytes(), &d).unwrap();
        let mut buf = Vec::new();
        write_observed(&mut buf, &obs, &d).unwrap();
        assert_eq!(read_observed(buf.as_slice(), &d).unwrap(), obs);
    }
}
