use proptest::prelude::*;
use rtlfl_core::harness::{evaluate_topn, EvalRecord};

fn recount(ranks: &[Option<usize>], n: usize) -> usize {
    let mut c = 0;
    for k in ranks.iter().flatten() {
        if *k <= n {
            c += 1;
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn topn_matches_recount(ranks in prop::collection::vec(prop::option::of(1usize..20), 1..40), ns in prop::collection::vec(1usize..25, 1..5)) {
        let recs: Vec<EvalRecord> = ranks
            .iter()
            .enumerate()
            .map(|(i, r)| EvalRecord { bug_id: i.to_string(), ground_truth: vec![], ranked: vec![], rank: *r })
            .collect();
        let got = evaluate_topn(&recs, &ns);
        for (i, n) in ns.iter().enumerate() {
            prop_assert_eq!(got[i], (*n, recount(&ranks, *n)));
        }
    }
}
