//! CSV interchange: `ch1,...,ch12,stimulus,repetition`, one sample per row.

use std::path::Path;

use super::Recording;
use crate::{io::write_atomic, Error, Result, MAX_GESTURE, N_CHANNELS};

fn expected_header() -> Vec<String> {
    let mut h: Vec<String> = (1..=N_CHANNELS).map(|c| format!("ch{c}")).collect();
    h.push("stimulus".into());
    h.push("repetition".into());
    h
}

/// Reads a recording from CSV. The subject id is the file stem.
///
/// Parse errors report the 1-based data row (the header is not counted).
pub fn load_recording(path: &Path, sample_rate: f64) -> Result<Recording> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Load { path: path.to_path_buf(), msg: e.to_string() })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != expected_header() {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            expected_header().join(","),
            header.join(",")
        )));
    }

    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); N_CHANNELS];
    let mut stimulus = Vec::new();
    let mut repetition = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if record.len() != N_CHANNELS + 2 {
            return Err(Error::Parse { row, msg: format!("expected {} fields, found {}", N_CHANNELS + 2, record.len()) });
        }
        for (c, field) in record.iter().take(N_CHANNELS).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { row, msg: format!("ch{} value `{field}` is not a number", c + 1) })?;
            channels[c].push(v);
        }
        let label = |idx: usize, name: &str| -> Result<i64> {
            let field = record[idx].trim();
            field.parse::<i64>().or_else(|_| {
                // some exporters write integral labels as floats
                field.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64).ok_or_else(|| Error::Parse {
                    row,
                    msg: format!("{name} value `{field}` is not an integer"),
                })
            })
        };
        let s = label(N_CHANNELS, "stimulus")?;
        if !(0..=MAX_GESTURE as i64).contains(&s) {
            return Err(Error::domain(format!("row {row}: stimulus {s} outside 0..={MAX_GESTURE}")));
        }
        let r = label(N_CHANNELS + 1, "repetition")?;
        if !(0..=u8::MAX as i64).contains(&r) {
            return Err(Error::domain(format!("row {row}: repetition {r} out of range")));
        }
        stimulus.push(s as u8);
        repetition.push(r as u8);
    }
    let subject = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Recording::new(subject, sample_rate, channels, stimulus, repetition)
}

/// Writes a recording in the CSV interchange format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_recording(recording: &Recording, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    writer.write_record(expected_header()).map_err(to_io)?;
    let mut row: Vec<String> = Vec::with_capacity(N_CHANNELS + 2);
    for i in 0..recording.len() {
        row.clear();
        row.extend(recording.channels().iter().map(|c| c[i].to_string()));
        row.push(recording.stimulus()[i].to_string());
        row.push(recording.repetition()[i].to_string());
        writer.write_record(&row).map_err(to_io)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn header() -> String {
        expected_header().join(",")
    }

    #[test]
    fn minimal_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s07.csv");
        let zeros = ["0.0"; N_CHANNELS].join(",");
        fs::write(&p, format!("{}\n{zeros},0,1\n{zeros},1,1\n{zeros},1,1\n", header())).unwrap();
        let rec = load_recording(&p, 2000.0).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.stimulus(), &[0, 1, 1]);
        assert_eq!(rec.subject_id(), "s07");
    }

    #[test]
    fn missing_repetition_column_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        let mut h = expected_header();
        h.pop();
        let zeros = ["0.0"; N_CHANNELS].join(",");
        fs::write(&p, format!("{}\n{zeros},0\n", h.join(","))).unwrap();
        assert!(matches!(load_recording(&p, 2000.0), Err(Error::Format(_))));
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        let zeros = ["0.0"; N_CHANNELS].join(",");
        let mut bad = ["0.0"; N_CHANNELS];
        bad[4] = "abc";
        fs::write(&p, format!("{}\n{zeros},0,1\n{},0,1\n", header(), bad.join(","))).unwrap();
        match load_recording(&p, 2000.0) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_stimulus_is_a_domain_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        let zeros = ["0.0"; N_CHANNELS].join(",");
        fs::write(&p, format!("{}\n{zeros},19,1\n", header())).unwrap();
        assert!(matches!(load_recording(&p, 2000.0), Err(Error::Domain(_))));
    }
}
