use mflab::chaos::{qualifying_pairs, IndexTuple};
use serde_json::Value;

fn fixture() -> Vec<Value> {
    serde_json::from_str(include_str!("fixtures/index_sets.json")).unwrap()
}

fn as_tuple(v: &Value) -> Vec<usize> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect()
}

#[test]
fn reduced_sets_match_fixture() {
    for case in fixture() {
        let n = case["n"].as_u64().unwrap() as usize;
        let k = case["k"].as_u64().unwrap() as usize;
        let all = IndexTuple::all(n, 2 * k);
        assert_eq!(all.len(), case["tuples"].as_u64().unwrap() as usize);
        let reduced: Vec<Vec<usize>> = all.iter().filter(|t| t.in_reduced_set()).map(|t| t.entries().to_vec()).collect();
        let expected: Vec<Vec<usize>> = case["reduced"].as_array().unwrap().iter().map(|r| as_tuple(&r["i"])).collect();
        assert_eq!(reduced, expected, "N = {n}");
    }
}

#[test]
fn qualifying_pairs_match_fixture() {
    for case in fixture() {
        let n = case["n"].as_u64().unwrap() as usize;
        let k = case["k"].as_u64().unwrap() as usize;
        let got: Vec<(Vec<usize>, Vec<usize>)> =
            qualifying_pairs(n, k).iter().map(|(i, j)| (i.entries().to_vec(), j.entries().to_vec())).collect();
        let mut expected = Vec::new();
        for r in case["reduced"].as_array().unwrap() {
            let i = as_tuple(&r["i"]);
            let t = IndexTuple::new(i.clone(), n).unwrap();
            assert_eq!(t.singles() as u64, r["singles"].as_u64().unwrap());
            assert_eq!(t.repeated() as u64, r["repeated"].as_u64().unwrap());
            for j in r["non_partners"].as_array().unwrap() {
                expected.push((i.clone(), as_tuple(j)));
            }
        }
        assert_eq!(got, expected, "N = {n}");
    }
}
