mod common;

use proptest::prelude::*;

#[test]
fn oracles_on_hand_cases() {
    let scores = [0.1, 0.4, 0.4, 0.8];
    let pos = [false, true, false, true];
    assert_eq!(common::pairwise_auc(&scores, &pos), 0.875);
    assert_eq!(common::scan_best_f1(&scores, &pos), (0.8, 0.4));
    assert_eq!(common::scan_fpr_at_tpr(&scores, &pos, 1.0), 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_equal_exhaustive_oracles(seed in any::<u64>()) {
        if let Err(msg) = common::metrics_agree(seed) {
            prop_assert!(false, "{}", msg);
        }
    }
}
