use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_annotation, CorpusError, CorpusSplit, Report, Result, NORMAL_MARKER};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct Record {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    indication: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    findings: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    impression: Option<String>,
    annotations: Vec<String>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.trim().is_empty())
}

/// Parses one corpus line. `line_no` is 1-based and only used in errors.
pub fn parse_report_line(line: &str, line_no: usize) -> Result<Report> {
    let malformed = |message: String| CorpusError::MalformedRecord {
        line: line_no,
        message,
    };
    let record: Record = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if record.id.trim().is_empty() {
        return Err(malformed("missing report id".into()));
    }
    let mut is_normal = false;
    let mut annotations = Vec::with_capacity(record.annotations.len());
    for raw in &record.annotations {
        if raw.trim().eq_ignore_ascii_case(NORMAL_MARKER) {
            is_normal = true;
            continue;
        }
        annotations.push(parse_annotation(raw).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(Report {
        id: record.id,
        comparison: non_empty(record.comparison),
        indication: non_empty(record.indication),
        findings_text: non_empty(record.findings),
        impression_text: non_empty(record.impression),
        annotations,
        is_normal,
    })
}

/// Serializes a report back to the line format.
pub fn render_report_line(report: &Report) -> String {
    let mut annotations: Vec<String> = report.annotations.iter().map(|a| a.raw.clone()).collect();
    if report.is_normal {
        annotations.push(NORMAL_MARKER.to_string());
    }
    let record = Record {
        id: report.id.clone(),
        comparison: report.comparison.clone(),
        indication: report.indication.clone(),
        findings: report.findings_text.clone(),
        impression: report.impression_text.clone(),
        annotations,
    };
    serde_json::to_string(&record).expect("record serializes")
}

/// Reads a line-delimited corpus; blank lines are skipped.
pub fn read_corpus_from<R: BufRead>(reader: R) -> Result<Vec<Report>> {
    let mut reports = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        reports.push(parse_report_line(&line, i + 1)?);
    }
    Ok(reports)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Report>> {
    read_corpus_from(BufReader::new(File::open(path)?))
}

pub fn write_corpus(path: &Path, reports: &[Report]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in reports {
        writeln!(out, "{}", render_report_line(r))?;
    }
    out.flush()?;
    Ok(())
}

const SECTIONS: [&str; 3] = ["[train]", "[val]", "[test]"];

/// Writes the three id lists under `[train]`, `[val]` and `[test]` headers.
pub fn write_splits(path: &Path, split: &CorpusSplit) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# seed={} ratios={},{},{}",
        split.seed, split.ratios[0], split.ratios[1], split.ratios[2]
    )?;
    for (header, ids) in SECTIONS
        .iter()
        .zip([&split.train_ids, &split.val_ids, &split.test_ids])
    {
        writeln!(out, "{header}")?;
        for id in ids {
            writeln!(out, "{id}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_splits(path: &Path) -> Result<CorpusSplit> {
    let reader = BufReader::new(File::open(path)?);
    let mut split = CorpusSplit {
        train_ids: Vec::new(),
        val_ids: Vec::new(),
        test_ids: Vec::new(),
        seed: 0,
        ratios: [0.0; 3],
    };
    let mut section: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                match kv.split_once('=') {
                    Some(("seed", v)) => split.seed = v.parse().unwrap_or(0),
                    Some(("ratios", v)) => {
                        for (slot, r) in split.ratios.iter_mut().zip(v.split(',')) {
                            *slot = r.parse().unwrap_or(0.0);
                        }
                    }
                    _ => {}
                }
            }
            continue;
        }
        if let Some(pos) = SECTIONS.iter().position(|h| *h == line) {
            section = Some(pos);
            continue;
        }
        let target = match section {
            Some(0) => &mut split.train_ids,
            Some(1) => &mut split.val_ids,
            Some(_) => &mut split.test_ids,
            None => {
                return Err(CorpusError::MalformedRecord {
                    line: i + 1,
                    message: "report id before any section header".into(),
                })
            }
        };
        target.push(line.to_string());
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_record_and_normal_marker() {
        let r = parse_report_line(
            r#"{"id":"CXR1","findings":"Low lung volumes.","annotations":["Lung/hypoinflation"]}"#,
            1,
        )
        .unwrap();
        assert_eq!(r.id, "CXR1");
        assert!(r.impression_text.is_none());
        assert_eq!(r.annotations[0].heading, "lung");
        assert!(!r.is_normal);

        let n = parse_report_line(
            r#"{"id":"CXR2","impression":"No acute disease.","annotations":["normal"]}"#,
            1,
        )
        .unwrap();
        assert!(n.is_normal);
        assert!(n.annotations.is_empty());
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let text =
            "{\"id\":\"a\",\"findings\":\"x.\"}\n\n{\"id\":\"b\",\"annotations\":[\"a//b\"]}\n";
        match read_corpus_from(text.as_bytes()) {
            Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_report_line("{not json", 7),
            Err(CorpusError::MalformedRecord { line: 7, .. })
        ));
        assert!(matches!(
            parse_report_line(r#"{"findings":"x."}"#, 2),
            Err(CorpusError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn corpus_and_split_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reports = read_corpus_from(
            concat!(
                "{\"id\":\"a\",\"comparison\":\"None.\",\"findings\":\"Low lung volumes.\",\"annotations\":[\"Lung/hypoinflation\"]}\n",
                "{\"id\":\"b\",\"impression\":\"No acute disease.\",\"annotations\":[\"normal\"]}\n",
            )
            .as_bytes(),
        )
        .unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &reports).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), reports);

        let split = super::super::make_splits(&reports, [0.5, 0.5, 0.0], 3).unwrap();
        let spath = dir.path().join("splits.txt");
        write_splits(&spath, &split).unwrap();
        assert_eq!(read_splits(&spath).unwrap(), split);
    }
}
