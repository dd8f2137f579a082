use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};

pub const CUE_NAMES: [&str; 5] = ["auth", "urg", "fin", "cur", "intr"];
pub const FORMAT_NAMES: [&str; 2] = ["trans_template", "attach_lure"];
pub const EDUCATION_NAMES: [&str; 5] = ["ann_email", "ann_land", "report_pitch", "emot_heur", "scen_theme"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioCode {
    pub scenario_id: String,
    pub cues: [bool; 5],
    pub format: [bool; 2],
    pub education: [bool; 5],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Cues,
    Education,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Jaccard,
    Smc,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Cues => "cues",
            Layer::Education => "education",
        }
    }
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Jaccard => "jaccard",
            Metric::Smc => "smc",
        }
    }
}

impl ScenarioCode {
    pub fn layer(&self, layer: Layer) -> &[bool; 5] {
        match layer {
            Layer::Cues => &self.cues,
            Layer::Education => &self.education,
        }
    }

    /// Value of a named indicator: one of the cue, format or education columns.
    pub fn feature(&self, name: &str) -> Option<bool> {
        if let Some(i) = CUE_NAMES.iter().position(|n| *n == name) {
            return Some(self.cues[i]);
        }
        if let Some(i) = FORMAT_NAMES.iter().position(|n| *n == name) {
            return Some(self.format[i]);
        }
        EDUCATION_NAMES.iter().position(|n| *n == name).map(|i| self.education[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCounts {
    pub shared: usize,
    pub union: usize,
    pub matches: usize,
}

pub fn pair_counts(a: &ScenarioCode, b: &ScenarioCode, layer: Layer) -> PairCounts {
    let (x, y) = (a.layer(layer), b.layer(layer));
    let mut c = PairCounts { shared: 0, union: 0, matches: 0 };
    for k in 0..5 {
        c.shared += (x[k] && y[k]) as usize;
        c.union += (x[k] || y[k]) as usize;
        c.matches += (x[k] == y[k]) as usize;
    }
    c
}

/// Two empty indicator sets count as identical (1.0).
pub fn jaccard(a: &ScenarioCode, b: &ScenarioCode, layer: Layer) -> f64 {
    let c = pair_counts(a, b, layer);
    if c.union == 0 {
        1.0
    } else {
        c.shared as f64 / c.union as f64
    }
}

pub fn smc(a: &ScenarioCode, b: &ScenarioCode, layer: Layer) -> f64 {
    pair_counts(a, b, layer).matches as f64 / 5.0
}

pub fn similarity(a: &ScenarioCode, b: &ScenarioCode, metric: Metric, layer: Layer) -> f64 {
    match metric {
        Metric::Jaccard => jaccard(a, b, layer),
        Metric::Smc => smc(a, b, layer),
    }
}

pub fn empty_union(a: &ScenarioCode, b: &ScenarioCode, layer: Layer) -> bool {
    pair_counts(a, b, layer).union == 0
}

#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub ids: Vec<String>,
    pub metric: Metric,
    pub layer: Layer,
    pub values: Vec<Vec<f64>>,
    pub shared: Vec<Vec<usize>>,
    pub union: Vec<Vec<usize>>,
    /// Pairs whose Jaccard value came from the empty-union convention.
    pub empty_union_pairs: Vec<(usize, usize)>,
}

impl SimilarityMatrix {
    pub fn tag(&self) -> String {
        format!("{}-{}", self.metric.as_str(), self.layer.as_str())
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.ids.iter().position(|x| x == a)?;
        let j = self.ids.iter().position(|x| x == b)?;
        Some(self.values[i][j])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "scenario")?;
        for id in &self.ids {
            write!(w, ",{id}")?;
        }
        writeln!(w)?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(w, "{id}")?;
            for v in &self.values[i] {
                write!(w, ",{v:.2}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn similarity_matrix(codes: &[ScenarioCode], metric: Metric, layer: Layer) -> Result<SimilarityMatrix> {
    if codes.len() < 2 {
        return Err(Error::Validation("similarity matrix needs at least two scenarios".into()));
    }
    let n = codes.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut shared = vec![vec![0; n]; n];
    let mut union = vec![vec![0; n]; n];
    let mut empty_union_pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let c = pair_counts(&codes[i], &codes[j], layer);
            values[i][j] = similarity(&codes[i], &codes[j], metric, layer);
            shared[i][j] = c.shared;
            union[i][j] = c.union;
            if metric == Metric::Jaccard && c.union == 0 && i <= j {
                empty_union_pairs.push((i, j));
            }
        }
    }
    Ok(SimilarityMatrix {
        ids: codes.iter().map(|c| c.scenario_id.clone()).collect(),
        metric,
        layer,
        values,
        shared,
        union,
        empty_union_pairs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPair {
    pub a: String,
    pub b: String,
    pub similarity: f64,
    pub shared: usize,
    pub union: usize,
}

fn id_key(id: &str) -> (u8, i64, &str) {
    match id.parse::<i64>() {
        Ok(v) => (0, v, id),
        Err(_) => (1, 0, id),
    }
}

/// Off-diagonal pairs ranked by similarity, then shared count, then ids.
pub fn top_pairs(m: &SimilarityMatrix, k: usize) -> Vec<RankedPair> {
    let n = m.ids.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = if id_key(&m.ids[i]) <= id_key(&m.ids[j]) { (i, j) } else { (j, i) };
            pairs.push(RankedPair {
                a: m.ids[a].clone(),
                b: m.ids[b].clone(),
                similarity: m.values[i][j],
                shared: m.shared[i][j],
                union: m.union[i][j],
            });
        }
    }
    pairs.sort_by(|p, q| {
        q.similarity
            .total_cmp(&p.similarity)
            .then(q.shared.cmp(&p.shared))
            .then(id_key(&p.a).cmp(&id_key(&q.a)))
            .then(id_key(&p.b).cmp(&id_key(&q.b)))
    });
    pairs.truncate(k.max(1));
    pairs
}

#[derive(Debug, Deserialize)]
struct CodeRow {
    scenario_id: String,
    auth: u8,
    urg: u8,
    fin: u8,
    cur: u8,
    intr: u8,
    trans_template: u8,
    attach_lure: u8,
    ann_email: u8,
    ann_land: u8,
    report_pitch: u8,
    emot_heur: u8,
    scen_theme: u8,
}

fn bit(v: u8, row: usize, col: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Parse { row, msg: format!("{col} must be 0 or 1, got {v}") }),
    }
}

pub fn read_codes<R: Read>(r: R) -> Result<Vec<ScenarioCode>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<CodeRow>().enumerate() {
        let row = i + 2;
        let c = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if c.scenario_id.is_empty() {
            return Err(Error::Parse { row, msg: "empty scenario_id".into() });
        }
        if seen.insert(c.scenario_id.clone(), row).is_some() {
            return Err(Error::Parse { row, msg: format!("scenario `{}` listed twice", c.scenario_id) });
        }
        out.push(ScenarioCode {
            cues: [
                bit(c.auth, row, "auth")?,
                bit(c.urg, row, "urg")?,
                bit(c.fin, row, "fin")?,
                bit(c.cur, row, "cur")?,
                bit(c.intr, row, "intr")?,
            ],
            format: [bit(c.trans_template, row, "trans_template")?, bit(c.attach_lure, row, "attach_lure")?],
            education: [
                bit(c.ann_email, row, "ann_email")?,
                bit(c.ann_land, row, "ann_land")?,
                bit(c.report_pitch, row, "report_pitch")?,
                bit(c.emot_heur, row, "emot_heur")?,
                bit(c.scen_theme, row, "scen_theme")?,
            ],
            scenario_id: c.scenario_id,
        });
    }
    Ok(out)
}

pub fn write_codes<W: Write>(codes: &[ScenarioCode], mut w: W) -> Result<()> {
    let names: Vec<&str> = CUE_NAMES.iter().chain(&FORMAT_NAMES).chain(&EDUCATION_NAMES).copied().collect();
    writeln!(w, "scenario_id,{}", names.join(","))?;
    for c in codes {
        write!(w, "{}", c.scenario_id)?;
        for b in c.cues.iter().chain(&c.format).chain(&c.education) {
            write!(w, ",{}", *b as u8)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

// scenario, cue bits (auth urg fin cur intr), format bits, education bits
const PUBLISHED: [(&str, &str, &str, &str); 17] = [
    ("28", "00110", "10", "00000"),
    ("29", "00110", "10", "00000"),
    ("30", "11001", "00", "10000"),
    ("32", "11001", "00", "10000"),
    ("33", "11001", "00", "01000"),
    ("39", "00110", "10", "10000"),
    ("47", "11100", "00", "10001"),
    ("48", "01010", "00", "10000"),
    ("52", "11010", "00", "10100"),
    ("56", "11011", "00", "11010"),
    ("59", "10101", "00", "10100"),
    ("61", "00110", "10", "10100"),
    ("63", "00011", "01", "10110"),
    ("65", "10011", "00", "11010"),
    ("67", "11011", "00", "10110"),
    ("69", "00110", "10", "10110"),
    ("71", "01011", "00", "10110"),
];

/// Start dates of campaigns 1..=17.
pub const PUBLISHED_CAMPAIGN_DATES: [&str; 17] = [
    "2016-06-07",
    "2016-07-11",
    "2016-08-02",
    "2016-08-17",
    "2016-11-15",
    "2017-08-01",
    "2018-02-14",
    "2018-03-15",
    "2018-06-12",
    "2018-11-13",
    "2019-01-30",
    "2019-05-15",
    "2019-06-12",
    "2019-07-24",
    "2019-10-02",
    "2019-12-11",
    "2020-02-11",
];

fn bits<const N: usize>(s: &str) -> [bool; N] {
    let mut out = [false; N];
    for (o, ch) in out.iter_mut().zip(s.bytes()) {
        *o = ch == b'1';
    }
    out
}

/// The 17 coded scenarios in campaign order.
pub fn published_codes() -> Vec<ScenarioCode> {
    PUBLISHED
        .iter()
        .map(|(id, c, f, e)| ScenarioCode {
            scenario_id: id.to_string(),
            cues: bits(c),
            format: bits(f),
            education: bits(e),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(id: &str) -> ScenarioCode {
        published_codes().into_iter().find(|c| c.scenario_id == id).unwrap()
    }

    #[test]
    fn spot_values() {
        assert_eq!(jaccard(&code("30"), &code("47"), Layer::Cues), 0.5);
        assert_eq!(jaccard(&code("48"), &code("59"), Layer::Cues), 0.0);
        assert!((smc(&code("28"), &code("48"), Layer::Cues) - 0.6).abs() < 1e-12);
        assert!((smc(&code("33"), &code("63"), Layer::Cues) - 0.4).abs() < 1e-12);
        assert_eq!(jaccard(&code("56"), &code("65"), Layer::Education), 1.0);
        assert_eq!(jaccard(&code("56"), &code("56"), Layer::Cues), 1.0);
    }

    #[test]
    fn empty_sets_are_identical() {
        let a = code("28");
        assert!(empty_union(&a, &code("29"), Layer::Education));
        assert_eq!(jaccard(&a, &code("29"), Layer::Education), 1.0);
        let m = similarity_matrix(&published_codes(), Metric::Jaccard, Layer::Education).unwrap();
        assert_eq!(m.empty_union_pairs.len(), 3);
    }

    #[test]
    fn top_pairs_truncates_and_orders() {
        let m = similarity_matrix(&published_codes(), Metric::Jaccard, Layer::Cues).unwrap();
        let all = top_pairs(&m, 10_000);
        assert_eq!(all.len(), 17 * 16 / 2);
        let first = &all[0];
        assert_eq!((first.a.as_str(), first.b.as_str(), first.shared, first.union), ("56", "67", 4, 4));
    }

    #[test]
    fn csv_round_trip() {
        let codes = published_codes();
        let mut buf = Vec::new();
        write_codes(&codes, &mut buf).unwrap();
        assert_eq!(read_codes(&buf[..]).unwrap(), codes);
    }

    #[test]
    fn rejects_non_binary() {
        let text = "scenario_id,auth,urg,fin,cur,intr,trans_template,attach_lure,ann_email,ann_land,report_pitch,emot_heur,scen_theme\nx,2,0,0,0,0,0,0,0,0,0,0,0\n";
        assert!(matches!(read_codes(text.as_bytes()), Err(Error::Parse { row: 2, .. })));
    }
}
