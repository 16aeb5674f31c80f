use std::path::Path;

use gapbench::config::FiniteGap;
use gapbench::{Experiment, ExperimentConfig};
use proptest::prelude::*;

fn config(seed: u64, trials: usize, slack: f64) -> ExperimentConfig {
    let exp = FiniteGap {
        trials,
        slack,
        ..FiniteGap::default()
    };
    ExperimentConfig {
        seed,
        ..ExperimentConfig::new(Experiment::FiniteGap(exp))
    }
}

proptest! {
    #[test]
    fn hash_ignores_threads_output_and_format(
        seed in 0..=i64::MAX as u64,
        trials in 30usize..1000,
        slack in 0.0..1.0f64,
        threads in 0usize..64,
        out in "[a-z]{1,8}",
    ) {
        let base = config(seed, trials, slack);
        let mut moved = base.clone();
        moved.threads = threads;
        moved.output = Some(out.into());
        prop_assert_eq!(base.hash(), moved.hash());

        let from_toml = ExperimentConfig::parse(&moved.to_toml().unwrap(), Path::new("c.toml")).unwrap();
        let json = serde_json::to_string_pretty(&moved).unwrap();
        let from_json = ExperimentConfig::parse(&json, Path::new("c.json")).unwrap();
        prop_assert_eq!(from_toml.hash(), base.hash());
        prop_assert_eq!(from_json.hash(), base.hash());
    }

    #[test]
    fn hash_separates_experiments(seed in any::<u64>(), trials in 30usize..1000) {
        let a = config(seed, trials, 0.15);
        prop_assert_ne!(a.hash(), config(seed.wrapping_add(1), trials, 0.15).hash());
        prop_assert_ne!(a.hash(), config(seed, trials + 1, 0.15).hash());
    }

    #[test]
    fn seeds_beyond_toml_range_are_rejected(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let c = config(seed, 30, 0.15);
        prop_assert!(c.validate().is_err());
        prop_assert!(c.to_toml().is_err());
    }
}
