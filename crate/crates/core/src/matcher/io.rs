use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{MatchError, MatchedPair, Provenance, Result, SynonymDict};

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn skip(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn parse_dictionary<R: BufRead>(reader: R) -> Result<SynonymDict> {
    let mut dict = SynonymDict::new();
    for (line_no, line) in content_lines(reader) {
        let line = line?;
        if skip(&line) {
            continue;
        }
        let Some((term, syn)) = line.split_once('\t') else {
            return Err(MatchError::MalformedLine {
                line: line_no,
                message: "expected term<TAB>synonym".into(),
            });
        };
        dict.insert(term, syn);
    }
    Ok(dict)
}

pub fn read_dictionary(path: &Path) -> Result<SynonymDict> {
    parse_dictionary(BufReader::new(File::open(path)?))
}

/// Writes each unordered pair once as term<TAB>synonym.
pub fn write_dictionary(path: &Path, dict: &SynonymDict) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (a, b) in dict.pairs() {
        writeln!(w, "{a}\t{b}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads manual matches (3 columns) or matcher output (4 columns, with
/// provenance). Rows without a provenance column are manual.
pub fn parse_matches<R: BufRead>(reader: R) -> Result<Vec<MatchedPair>> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(reader) {
        let line = line?;
        if skip(&line) {
            continue;
        }
        let bad = |message: String| MatchError::MalformedLine {
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(bad(format!(
                "expected 3 or 4 columns, found {}",
                cols.len()
            )));
        }
        let index = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("{s:?}: {e}")))
        };
        let provenance = match cols.get(3) {
            Some(p) => p.trim().parse().map_err(bad)?,
            None => Provenance::Manual,
        };
        out.push(MatchedPair {
            report_id: cols[0].trim().to_string(),
            annotation_index: index(cols[1])?,
            sentence_index: index(cols[2])?,
            label: 1,
            provenance,
        });
    }
    Ok(out)
}

pub fn read_matches(path: &Path) -> Result<Vec<MatchedPair>> {
    parse_matches(BufReader::new(File::open(path)?))
}

pub fn write_matches(path: &Path, pairs: &[MatchedPair], with_provenance: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs.iter().filter(|p| p.label == 1) {
        write!(
            w,
            "{}\t{}\t{}",
            p.report_id, p.annotation_index, p.sentence_index
        )?;
        if with_provenance {
            write!(w, "\t{}", p.provenance)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_round_trip() {
        let d: SynonymDict = [
            ("scarring", "cicatrix"),
            ("copd", "chronic obstructive pulmonary disease"),
        ]
        .into_iter()
        .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        write_dictionary(&p, &d).unwrap();
        assert_eq!(read_dictionary(&p).unwrap(), d);
    }

    #[test]
    fn dictionary_file() {
        let text = "# synonyms\nscarring\tcicatrix\n\nLow lung volumes\thypoinflation\n";
        let d = parse_dictionary(text.as_bytes()).unwrap();
        assert_eq!(d.synonyms("cicatrix"), ["scarring"]);
        assert_eq!(d.synonyms("hypoinflation"), ["low lung volumes"]);
        assert!(matches!(
            parse_dictionary("no tab here\n".as_bytes()),
            Err(MatchError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn match_files_round_trip() {
        let pairs = vec![
            MatchedPair {
                report_id: "CXR1".into(),
                annotation_index: 0,
                sentence_index: 2,
                label: 1,
                provenance: Provenance::Encoder,
            },
            MatchedPair {
                report_id: "CXR2".into(),
                annotation_index: 1,
                sentence_index: 0,
                label: 1,
                provenance: Provenance::Rule,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        write_matches(&path, &pairs, true).unwrap();
        assert_eq!(read_matches(&path).unwrap(), pairs);
        write_matches(&path, &pairs, false).unwrap();
        let back = read_matches(&path).unwrap();
        assert!(back.iter().all(|p| p.provenance == Provenance::Manual));
        assert!(parse_matches("a\tx\t1\n".as_bytes()).is_err());
        assert!(parse_matches("a\t1\n".as_bytes()).is_err());
    }
}
