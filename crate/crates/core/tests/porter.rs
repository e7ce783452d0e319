//! Stems checked against a reference implementation of the original algorithm.

use radnote::textproc::porter_stem;

const FIXTURE: &str = include_str!("fixtures/porter_original.tsv");

#[test]
fn matches_reference_stems() {
    let mut checked = 0;
    let mut wrong = Vec::new();
    for line in FIXTURE.lines().filter(|l| !l.is_empty()) {
        let (word, stem) = line.split_once('\t').expect("word<TAB>stem");
        // the reference leaves some one-letter words with an empty stem
        if stem.is_empty() {
            continue;
        }
        checked += 1;
        let got = porter_stem(word);
        if got != stem {
            wrong.push(format!("{word}: expected {stem}, got {got}"));
        }
    }
    assert!(checked > 1000, "only {checked} fixture rows");
    assert!(
        wrong.is_empty(),
        "{} mismatches:\n{}",
        wrong.len(),
        wrong.join("\n")
    );
}
