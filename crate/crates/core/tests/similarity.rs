use std::path::PathBuf;
use std::time::Instant;

use phishpanel::similarity::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read_matrix(name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(fixture(name)).unwrap();
    let ids: Vec<String> = rdr.headers().unwrap().iter().skip(1).map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    (ids, rows)
}

const CASES: [(Metric, Layer, &str); 4] = [
    (Metric::Jaccard, Layer::Cues, "jaccard_cues"),
    (Metric::Jaccard, Layer::Education, "jaccard_education"),
    (Metric::Smc, Layer::Cues, "smc_cues"),
    (Metric::Smc, Layer::Education, "smc_education"),
];

#[test]
fn published_matrices_reproduce_entry_for_entry() {
    let codes = published_codes();
    let start = Instant::now();
    for (metric, layer, name) in CASES {
        let m = similarity_matrix(&codes, metric, layer).unwrap();
        let (ids, want) = read_matrix(&format!("{name}.csv"));
        assert_eq!(m.ids, ids, "{name}");
        for i in 0..ids.len() {
            for j in 0..ids.len() {
                let got = m.values[i][j];
                assert!(
                    (got - want[i][j]).abs() <= 0.005 + 1e-12,
                    "{name}[{},{}]: {got} vs {}",
                    ids[i],
                    ids[j],
                    want[i][j]
                );
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn written_matrices_match_fixture_text() {
    let codes = published_codes();
    for (metric, layer, name) in CASES {
        let m = similarity_matrix(&codes, metric, layer).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let want = std::fs::read_to_string(fixture(&format!("{name}.csv"))).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), want.trim_end(), "{name}");
    }
}

#[test]
fn top_ten_pairs_match_published_tables() {
    let codes = published_codes();
    for (metric, layer, name) in CASES {
        let m = similarity_matrix(&codes, metric, layer).unwrap();
        let got = top_pairs(&m, 10);
        let mut rdr = csv::Reader::from_path(fixture(&format!("top_{name}.csv"))).unwrap();
        let want: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((g.a.as_str(), g.b.as_str()), (&w[0], &w[1]), "{name}");
            assert!((g.similarity - w[2].parse::<f64>().unwrap()).abs() <= 0.005);
            if w.len() > 3 {
                assert_eq!(g.shared.to_string(), &w[3]);
                assert_eq!(g.union.to_string(), &w[4]);
            }
        }
    }
}

#[test]
fn matrices_are_symmetric_with_unit_diagonal() {
    let codes = published_codes();
    for (metric, layer, _) in CASES {
        let m = similarity_matrix(&codes, metric, layer).unwrap();
        for i in 0..m.ids.len() {
            assert_eq!(m.values[i][i], 1.0);
            for j in 0..m.ids.len() {
                assert_eq!(m.values[i][j], m.values[j][i]);
                assert!((0.0..=1.0).contains(&m.values[i][j]));
            }
        }
    }
}

#[test]
fn codes_round_trip_through_csv() {
    let codes = published_codes();
    let mut buf = Vec::new();
    write_codes(&codes, &mut buf).unwrap();
    let back = read_codes(buf.as_slice()).unwrap();
    assert_eq!(back, codes);
}

#[test]
fn malformed_code_file_names_the_row() {
    let text = "scenario_id,auth,urg,fin,cur,intr,trans_template,attach_lure,ann_email,ann_land,report_pitch,emot_heur,scen_theme\n\
                1,1,0,0,0,0,0,0,0,0,0,0,0\n\
                2,1,0,2,0,0,0,0,0,0,0,0,0\n";
    let err = read_codes(text.as_bytes()).unwrap_err().to_string();
    assert!(err.contains("row 3"), "{err}");
}

#[test]
fn empty_union_is_flagged_for_jaccard() {
    let text = "scenario_id,auth,urg,fin,cur,intr,trans_template,attach_lure,ann_email,ann_land,report_pitch,emot_heur,scen_theme\n\
                a,0,0,0,0,0,0,0,1,0,0,0,0\n\
                b,0,0,0,0,0,1,0,0,1,0,0,0\n";
    let codes = read_codes(text.as_bytes()).unwrap();
    let m = similarity_matrix(&codes, Metric::Jaccard, Layer::Cues).unwrap();
    assert_eq!(m.values[0][1], 1.0);
    assert!(m.empty_union_pairs.contains(&(0, 1)));
    let e = similarity_matrix(&codes, Metric::Jaccard, Layer::Education).unwrap();
    assert_eq!(e.values[0][1], 0.0);
}
