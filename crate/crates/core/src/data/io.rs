use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use nalgebra::DMatrix;

use super::{ChannelSpec, DataError, Result, SignalFrame, MISSING, RAW_PERIOD_S};

/// Reads a benchmark CSV file and reorders its columns to `schema`.
///
/// Timestamp gaps that are whole multiples of the sampling period are filled
/// with rows of [`MISSING`].
pub fn load_frame(path: impl AsRef<Path>, schema: &[ChannelSpec]) -> Result<SignalFrame> {
    let file = std::fs::File::open(path)?;
    read_frame(std::io::BufReader::new(file), schema)
}

pub fn read_frame<R: Read>(reader: R, schema: &[ChannelSpec]) -> Result<SignalFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(DataError::Parse {
            line: 1,
            msg: "first column must be `timestamp`".into(),
        });
    }
    // file column -> schema column
    let mut mapping = Vec::with_capacity(headers.len() - 1);
    for name in headers.iter().skip(1) {
        let j = schema
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))?;
        if mapping.contains(&j) {
            return Err(DataError::DuplicateChannel(name.to_string()));
        }
        mapping.push(j);
    }
    if let Some(c) = schema
        .iter()
        .enumerate()
        .find(|(j, _)| !mapping.contains(j))
    {
        return Err(DataError::MissingColumn(c.1.name.clone()));
    }

    let mut times: Vec<(usize, DateTime<Utc>)> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(DataError::Parse {
                line,
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|e| DataError::Parse {
                line,
                msg: format!("bad timestamp `{}`: {e}", &rec[0]),
            })?
            .with_timezone(&Utc);
        if let Some((_, prev)) = times.last() {
            if ts <= *prev {
                return Err(DataError::NonMonotonic { line });
            }
        }
        let mut row = vec![MISSING; schema.len()];
        for (k, field) in rec.iter().skip(1).enumerate() {
            if field.is_empty() {
                continue;
            }
            row[mapping[k]] = field.parse::<f64>().map_err(|_| DataError::Parse {
                line,
                msg: format!("bad number `{field}` in column `{}`", &headers[k + 1]),
            })?;
        }
        times.push((line, ts));
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }

    let period_s = times
        .windows(2)
        .map(|w| (w[1].1 - w[0].1).num_seconds())
        .min()
        .unwrap_or(RAW_PERIOD_S);
    let start = times[0].1;
    let mut grid_idx = Vec::with_capacity(times.len());
    for &(line, t) in &times {
        let dt = (t - start).num_seconds();
        if dt % period_s != 0 {
            return Err(DataError::OffGrid { line, period_s });
        }
        grid_idx.push((dt / period_s) as usize);
    }
    let n = grid_idx.last().copied().unwrap_or(0) + 1;
    let mut values = DMatrix::from_element(n, schema.len(), MISSING);
    for (row, &r) in rows.iter().zip(&grid_idx) {
        for (c, v) in row.iter().enumerate() {
            values[(r, c)] = *v;
        }
    }
    SignalFrame::new(start, period_s, schema.to_vec(), values)
}

pub fn write_frame(path: impl AsRef<Path>, frame: &SignalFrame) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(path)?;
    write_frame_to(std::io::BufWriter::new(file), frame)
}

pub fn write_frame_to<W: Write>(writer: W, frame: &SignalFrame) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(frame.channels.iter().map(|c| c.name.clone()));
    wtr.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in 0..frame.n_samples() {
        record.clear();
        record.push(
            frame
                .time_at(r)
                .to_rfc3339_opts(SecondsFormat::Secs, true),
        );
        for c in 0..frame.n_channels() {
            let v = frame.values[(r, c)];
            record.push(if v.is_nan() {
                String::new()
            } else {
                format!("{v}")
            });
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{benchmark_schema, Role};

    fn eleven_channel_schema() -> Vec<ChannelSpec> {
        (0..11)
            .map(|i| {
                ChannelSpec::new(
                    &format!("c{i}"),
                    "",
                    if i < 9 { Role::Input } else { Role::Output },
                )
            })
            .collect()
    }

    #[test]
    fn three_row_eleven_columns() {
        let schema = eleven_channel_schema();
        let mut s = String::from("timestamp");
        for c in &schema {
            s.push(',');
            s.push_str(&c.name);
        }
        s.push('\n');
        for m in 0..3 {
            s.push_str(&format!("2019-09-01T00:0{m}:00Z"));
            for k in 0..11 {
                s.push_str(&format!(",{}", m * 100 + k));
            }
            s.push('\n');
        }
        let f = read_frame(s.as_bytes(), &schema).unwrap();
        assert_eq!(f.n_samples(), 3);
        assert_eq!(f.n_channels(), 11);
        assert_eq!(f.period_s, 60);
        assert_eq!(f.values[(2, 10)], 210.0);
    }

    #[test]
    fn gap_filled_with_missing_row() {
        let schema = vec![
            ChannelSpec::new("u", "", Role::Input),
            ChannelSpec::new("y", "", Role::Output),
        ];
        let s = "timestamp,u,y\n\
                 2019-09-01T00:00:00Z,1,2\n\
                 2019-09-01T00:01:00Z,1,2\n\
                 2019-09-01T00:03:00Z,3,4\n";
        let f = read_frame(s.as_bytes(), &schema).unwrap();
        assert_eq!(f.n_samples(), 4);
        assert!(f.values[(2, 0)].is_nan() && f.values[(2, 1)].is_nan());
        assert_eq!(f.values[(3, 1)], 4.0);
    }

    #[test]
    fn shuffled_columns_follow_schema() {
        let schema = vec![
            ChannelSpec::new("a", "", Role::Input),
            ChannelSpec::new("b", "", Role::Input),
            ChannelSpec::new("y", "", Role::Output),
        ];
        let s = "timestamp,y,a,b\n\
                 2019-09-01T00:00:00Z,10,1,100\n\
                 2019-09-01T00:01:00Z,11,2,101\n\
                 2019-09-01T00:02:00Z,12,,102\n\
                 2019-09-01T00:03:00Z,13,4,103\n\
                 2019-09-01T00:04:00Z,14,5,104\n";
        let f = read_frame(s.as_bytes(), &schema).unwrap();
        // parsed by hand from the fixture above
        let expected = [
            [1.0, 100.0, 10.0],
            [2.0, 101.0, 11.0],
            [f64::NAN, 102.0, 12.0],
            [4.0, 103.0, 13.0],
            [5.0, 104.0, 14.0],
        ];
        for (r, row) in expected.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let got = f.values[(r, c)];
                assert!(got == *v || (got.is_nan() && v.is_nan()), "({r},{c})");
            }
        }
    }

    #[test]
    fn errors_are_reported() {
        let schema = vec![ChannelSpec::new("y", "", Role::Output)];
        let unknown = "timestamp,y,zz\n2019-09-01T00:00:00Z,1,2\n";
        assert!(matches!(
            read_frame(unknown.as_bytes(), &schema),
            Err(DataError::UnknownColumn(c)) if c == "zz"
        ));
        let back = "timestamp,y\n2019-09-01T00:01:00Z,1\n2019-09-01T00:00:00Z,1\n";
        assert!(matches!(
            read_frame(back.as_bytes(), &schema),
            Err(DataError::NonMonotonic { line: 3 })
        ));
        let bad = "timestamp,y\n2019-09-01T00:00:00Z,1\n2019-09-01T00:01:00Z,x\n";
        assert!(matches!(
            read_frame(bad.as_bytes(), &schema),
            Err(DataError::Parse { line: 3, .. })
        ));
        let missing = "timestamp\n2019-09-01T00:00:00Z\n";
        assert!(matches!(
            read_frame(missing.as_bytes(), &schema),
            Err(DataError::MissingColumn(_))
        ));
    }

    #[test]
    fn write_then_read_is_exact() {
        let schema = benchmark_schema();
        let start = "2019-09-01T00:00:00Z".parse::<DateTime<Utc>>().unwrap();
        let mut values = DMatrix::from_fn(5, schema.len(), |r, c| {
            (r as f64 + 0.1) * (c as f64 + 1.0 / 3.0)
        });
        values[(1, 4)] = MISSING;
        let f = SignalFrame::new(start, 60, schema.clone(), values).unwrap();
        let mut buf = Vec::new();
        write_frame_to(&mut buf, &f).unwrap();
        let g = read_frame(buf.as_slice(), &schema).unwrap();
        assert_eq!(g.start_time, f.start_time);
        for (a, b) in f.values.iter().zip(g.values.iter()) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
}
