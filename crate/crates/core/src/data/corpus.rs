use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::rng;

/// Gold verdict of a judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Petitioner,
    Respondent,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Petitioner, Label::Respondent];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Petitioner => "petitioner",
            Label::Respondent => "respondent",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "petitioner" => Ok(Label::Petitioner),
            "respondent" => Ok(Label::Respondent),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub title: String,
    pub context: String,
    pub judgment: Label,
}

pub fn ingest_csv(path: &Path) -> Result<Vec<JudgmentRecord>, DataError> {
    read_csv(std::fs::File::open(path)?)
}

/// Reads records from CSV with a header naming `title`, `context` and
/// `judgment` in any order and any letter case.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<JudgmentRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or(DataError::MissingColumn(name))
    };
    let (title_col, context_col, judgment_col) =
        (column("title")?, column("context")?, column("judgment")?);

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let n = i + 1;
        let field = |c: usize| row.get(c).unwrap_or("");
        let context = field(context_col).trim();
        if context.is_empty() {
            return Err(DataError::EmptyContext { row: n });
        }
        let judgment = field(judgment_col)
            .parse::<Label>()
            .map_err(|value| DataError::UnknownLabel { row: n, value })?;
        records.push(JudgmentRecord {
            title: field(title_col).trim().to_string(),
            context: context.to_string(),
            judgment,
        });
    }
    Ok(records)
}

pub fn write_csv<W: Write>(records: &[JudgmentRecord], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["title", "context", "judgment"])?;
    for r in records {
        w.write_record([r.title.as_str(), r.context.as_str(), r.judgment.name()])?;
    }
    w.flush()?;
    Ok(())
}

const SURNAMES: [&str; 16] = [
    "Sharma", "Mehta", "Rao", "Iyer", "Kapoor", "Nair", "Das", "Reddy", "Singh", "Gupta", "Bose",
    "Pillai", "Menon", "Joshi", "Patel", "Khan",
];
const AUTHORITIES: [&str; 6] = [
    "State of Kerala",
    "Union of India",
    "Municipal Corporation",
    "Revenue Board",
    "State of Punjab",
    "Housing Board",
];
const TOPICS: [&str; 12] = [
    "land acquisition",
    "service seniority",
    "tax assessment",
    "tenancy rights",
    "pension arrears",
    "contract termination",
    "electricity tariff",
    "bail conditions",
    "customs duty",
    "a mining lease",
    "an election dispute",
    "property partition",
];
const OPENINGS: [&str; 4] = [
    "The petitioner challenged the order of the tribunal concerning {}.",
    "This appeal arises from a dispute over {}.",
    "The parties contested the findings on {} before the lower court.",
    "The writ petition questions the decision on {}.",
];
const FILLERS: [&str; 6] = [
    "Counsel for both sides made detailed submissions.",
    "The records of the case were examined carefully.",
    "Several precedents were cited during the hearing.",
    "The matter was heard over multiple dates.",
    "Written statements were filed within time.",
    "The trial court had framed three issues.",
];
const FOR_PETITIONER: [&str; 4] = [
    "Accordingly the appeal is allowed.",
    "The petition is therefore granted.",
    "The impugned order is set aside.",
    "Relief is granted to the petitioner.",
];
const FOR_RESPONDENT: [&str; 4] = [
    "Accordingly the appeal is dismissed.",
    "The petition is therefore rejected.",
    "The impugned order is upheld.",
    "Relief is refused to the petitioner.",
];
const UNDECIDED: [&str; 3] = [
    "The matter is disposed of with no order as to costs.",
    "Both parties are directed to bear their own costs.",
    "The matter is remitted for fresh consideration.",
];

/// Deterministic template corpus. Labels alternate before shuffling, so the
/// classes are balanced within one. Records at indices 19 and 20 of every 40
/// (one of each class) carry a verdict sentence that does not reveal the
/// outcome, which keeps held-out accuracy below 1 and gives small runs
/// something to overfit.
pub fn synth_corpus(n: usize, seed: u64) -> Vec<JudgmentRecord> {
    let mut rng = rng::stream(seed, &[0x5e_ed]);
    let mut records: Vec<JudgmentRecord> = (0..n)
        .map(|i| {
            let judgment = if i % 2 == 0 {
                Label::Petitioner
            } else {
                Label::Respondent
            };
            let undecided = matches!(i % 40, 19 | 20);
            synth_record(judgment, undecided, &mut rng)
        })
        .collect();
    records.shuffle(&mut rng);
    records
}

fn synth_record<R: Rng>(judgment: Label, undecided: bool, rng: &mut R) -> JudgmentRecord {
    let pick = |xs: &[&'static str], rng: &mut R| *xs.choose(rng).expect("non-empty");
    let first = pick(&SURNAMES, rng);
    let second = if rng.random_bool(0.5) {
        pick(&AUTHORITIES, rng)
    } else {
        pick(&SURNAMES, rng)
    };
    let opening = pick(&OPENINGS, rng).replace("{}", pick(&TOPICS, rng));
    let filler = pick(&FILLERS, rng);
    let verdict = if undecided {
        pick(&UNDECIDED, rng)
    } else {
        match judgment {
            Label::Petitioner => pick(&FOR_PETITIONER, rng),
            Label::Respondent => pick(&FOR_RESPONDENT, rng),
        }
    };
    let context = if rng.random_bool(0.5) {
        format!("{opening} {filler} {verdict}")
    } else {
        format!("{opening} {verdict} {filler}")
    };
    JudgmentRecord {
        title: format!("{first} v. {second}"),
        context,
        judgment,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_labels_normalized_any_column_order() {
        let text = "Judgment,TITLE,context\nPetitioner,A v. B,\"The appeal, at last, is allowed.\"\nrespondent,C v. D,The appeal is dismissed.\n";
        let recs = read_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].judgment, Label::Petitioner);
        assert_eq!(recs[0].context, "The appeal, at last, is allowed.");
        assert_eq!(recs[1].judgment, Label::Respondent);
    }

    #[test]
    fn csv_missing_column_named() {
        let err = read_csv("title,context\na,b\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn("judgment")));
        assert!(err.to_string().contains("judgment"));
    }

    #[test]
    fn csv_bad_rows_report_row_number() {
        let err = read_csv("title,context,judgment\na,x,petitioner\nb,y,plaintiff\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, DataError::UnknownLabel { row: 2, .. }));
        let err = read_csv("title,context,judgment\na,  ,petitioner\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::EmptyContext { row: 1 }));
    }

    #[test]
    fn csv_embedded_newlines_round_trip() {
        let recs = vec![JudgmentRecord {
            title: "X, Y".into(),
            context: "line one.\nline \"two\", three.".into(),
            judgment: Label::Respondent,
        }];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn synth_deterministic_and_balanced() {
        let a = synth_corpus(40, 7);
        assert_eq!(a, synth_corpus(40, 7));
        assert_ne!(a, synth_corpus(40, 8));
        let p = a.iter().filter(|r| r.judgment == Label::Petitioner).count();
        assert_eq!(p, 20);
        let odd = synth_corpus(41, 1);
        let p = odd.iter().filter(|r| r.judgment == Label::Petitioner).count();
        assert!(p.abs_diff(41 - p) <= 1);
    }
}
