mod common;

use common::oracles::uf_partition;
use common::{merged_partition, random_network};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtlfl_core::blocks::{merge_assign_blocks, AssignUnit};

fn unit(i: usize, ins: &[usize], out: usize) -> AssignUnit {
    AssignUnit {
        statement: i,
        lines: [i as u32 + 1].into(),
        v_in: ins.iter().copied().collect(),
        v_out: [out].into(),
    }
}

#[test]
fn chain_of_any_length_is_one_block() {
    for k in 1..=20 {
        let units: Vec<AssignUnit> = (0..k).map(|i| unit(i, &[i], i + 1)).collect();
        let m = merge_assign_blocks(&units);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].v_in, (0..k).collect());
        assert_eq!(m[0].v_out, (1..=k).collect());
    }
}

#[test]
fn unrelated_assigns_stay_apart() {
    let m = merge_assign_blocks(&[unit(0, &[10], 1), unit(1, &[11], 2)]);
    assert_eq!(m.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn merge_equals_union_find(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units = random_network(&mut rng, 30);
        prop_assert_eq!(merged_partition(&units), uf_partition(&units));
    }

    #[test]
    fn merge_ignores_input_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units = random_network(&mut rng, 30);
        let want = merged_partition(&units);
        let mut shuffled = units.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(merged_partition(&shuffled), want.clone());
        // merging a merged result changes nothing
        let again = merge_assign_blocks(&merge_assign_blocks(&units));
        prop_assert_eq!(again.len(), want.len());
    }
}
