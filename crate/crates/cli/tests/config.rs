use basinscope_cli::ExperimentConfig;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_toml_and_manifest_json(
        seed in 0u64..1_000_000,
        batch in 1usize..512,
        epochs in 1usize..200,
        lr in 1e-4f64..1.0,
        eps in 1e-3f64..0.5,
        samples in 100usize..10_000,
        n_train in 10usize..5000,
    ) {
        let mut c = ExperimentConfig::default();
        c.train.seed = seed;
        c.train.batch_size = batch;
        c.train.finetune_epochs = epochs;
        c.train.finetune_lr_schedule = vec![(0, lr)];
        c.train.finetune_checkpoints = vec![];
        c.basin.epsilon = eps;
        c.basin.samples = samples;
        c.data.n_train = n_train;
        c.validate().unwrap();
        let text = c.to_text();
        prop_assert_eq!(&ExperimentConfig::parse(&text).unwrap(), &c);
        let json: ExperimentConfig = serde_json::from_value(c.to_json()).unwrap();
        prop_assert_eq!(json, c);
    }
}
