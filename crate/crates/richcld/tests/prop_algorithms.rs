//! Online and offline learners on small instances.

use proptest::prelude::*;
use richcld::criee::{criee_run, CrieeConfig};
use richcld::decoder::{DecoderClass, DistractorKind};
use richcld::golf::write_diagnostics_csv;
use richcld::harness::commands::{golf_seed, golf_setup, offline_seed};
use richcld::harness::{Command, ExperimentConfig};
use richcld::offline::exploratory_records;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn version_space_only_shrinks(seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::preset(Command::Golf);
        cfg.golf.run.rounds = 40;
        let setup = golf_setup(&cfg).unwrap();
        let out = golf_seed(&setup, &cfg, seed).unwrap();
        let rounds = &out.outcome.rounds;
        prop_assert!(rounds.windows(2).all(|w| w[1].alive <= w[0].alive));
        // Once eliminated, the tracked member stays out.
        let first_out = rounds.iter().position(|r| r.survivor == Some(false));
        if let Some(i) = first_out {
            prop_assert!(rounds[i..].iter().all(|r| r.survivor == Some(false)));
        }
        prop_assert_eq!(out.outcome.alive.iter().filter(|&&a| a).count() <= rounds[0].alive, true);
        let csv = |o: &richcld::golf::GolfOutcome| {
            let mut buf = Vec::new();
            write_diagnostics_csv(&o.rounds, &mut buf).unwrap();
            buf
        };
        let again = golf_seed(&setup, &cfg, seed).unwrap();
        prop_assert_eq!(csv(&out.outcome), csv(&again.outcome));
    }

    #[test]
    fn criee_datasets_grow_by_one_per_iteration(seed in any::<u64>(), iterations in 1usize..5) {
        let cfg = ExperimentConfig::preset(Command::Criee);
        let mdp = cfg.env.build().unwrap();
        let class = DecoderClass::with_distractors(&mdp, &cfg.class.distractors).unwrap();
        let run = CrieeConfig { iterations, seed, eval_rollouts: 2, ..cfg.criee.run.clone() };
        let out = criee_run(&mdp, &class, &run).unwrap();
        prop_assert_eq!(out.metrics.len(), iterations);
        for h in 0..mdp.horizon {
            prop_assert_eq!(out.d1[h].len(), iterations);
            prop_assert_eq!(out.d2[h].len(), iterations);
        }
    }

    #[test]
    fn adp_with_the_true_decoder_is_optimal_on_exhaustive_data(seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::preset(Command::Offline);
        cfg.class.distractors = vec![DistractorKind::Constant];
        cfg.offline.samples_per_layer = vec![400];
        let mdp = cfg.env.build().unwrap();
        let records = exploratory_records(&mdp, 400, seed);
        let out = offline_seed(&cfg, &records, seed).unwrap();
        let adp = &out.evaluations[0];
        prop_assert_eq!(adp.label.as_str(), "adp");
        prop_assert!((adp.optimal.unwrap() - adp.value).abs() <= 1e-12);
    }
}
