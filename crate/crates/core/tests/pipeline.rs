//! Cross-module integration: the full library pipeline from synthetic data
//! through sweep output to rendered report, plus the recorded U1/U2
//! population comparison.

use std::collections::BTreeMap;

use hierfault::classifier::{train, ArchSpec, ClassifierModel, LabelMode, TrainConfig};
use hierfault::config::{derive_seed, ExperimentConfig};
use hierfault::dataset::{generate_synthetic, leave_out_class, stratified_split, GeneratorSpec};
use hierfault::evaluation::u1u2_summary;
use hierfault::harness::Harness;
use hierfault::report::render_report;
use hierfault::taxonomy::{default_fault_taxonomy, SoftLabelMatrix};

fn tiny_config() -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.scenarios = vec!["A12".into(), "A40".into()];
    config.seeds = vec![0, 1];
    config.learning_rates = vec![0.01];
    config.betas = vec![10.0];
    config.train.epochs = 8;
    config.train.hidden = vec![16, 8];
    config.generator.counts = Some(
        default_fault_taxonomy()
            .leaf_names()
            .into_iter()
            .map(|n| (n, 12))
            .collect(),
    );
    config
}

#[test]
fn sweep_to_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let harness = Harness::from_config(tiny_config(), None).unwrap();
    let outcome = harness.sweep(&out).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    // 2 scenarios x 3 methods x (flat + hier@10) x 2 seeds.
    assert_eq!(outcome.results.len(), 24);

    let report_dir = dir.path().join("report");
    let written = render_report(&out, &report_dir).unwrap();
    assert!(written.iter().any(|p| p.ends_with("boxplot_data.csv")));
    for scenario in ["A12", "A40"] {
        let svg_path = report_dir.join(format!("{}.svg", scenario));
        assert!(svg_path.exists());
        let svg = std::fs::read_to_string(&svg_path).unwrap();
        // The curve panel renders because the sweep wrote the diagnostics.
        assert!(svg.contains("prediction rank"), "{} lacks curves", scenario);
    }

    // Box-plot data covers all six groups for both scenarios.
    let mut groups: BTreeMap<String, usize> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(report_dir.join("boxplot_data.csv")).unwrap();
    for record in reader.records() {
        let record = record.unwrap();
        *groups.entry(record[0].to_string()).or_default() += 1;
    }
    assert_eq!(groups["A12"], 6);
    assert_eq!(groups["A40"], 6);
}

/// The population comparison behind the U1/U2 diagnostic, recorded over ten
/// seeds. The direction itself is data-dependent at desk scale and is
/// reported, not asserted.
#[test]
fn u1_u2_population_summary_is_recorded_over_ten_seeds() {
    let tree = default_fault_taxonomy();
    let mut u1_direction = 0;
    let mut u2_direction = 0;
    for seed in 0..10u64 {
        let mut spec = GeneratorSpec::steel_defaults(derive_seed(seed, "u1u2"));
        for c in spec.counts.values_mut() {
            *c = (*c / 4).max(4);
        }
        let ds = generate_synthetic(&tree, &spec).unwrap();
        let split = leave_out_class(&ds, &tree, tree.leaf_index("A12").unwrap()).unwrap();
        let (train_ds, val_ds, test_ds) =
            stratified_split(&split.known, (0.6, 0.2, 0.2), seed).unwrap();
        let config = TrainConfig {
            epochs: 60,
            label_mode: LabelMode::Hierarchical { beta: 10.0 },
            seed,
            ..TrainConfig::default()
        };
        let arch = ArchSpec::new(16, vec![16, 8], 13);
        let model = ClassifierModel::new(&arch, seed);
        let (model, _) = train(model, &train_ds, &val_ds, &split.pruned_tree, &config).unwrap();
        let soft = SoftLabelMatrix::build(&split.pruned_tree, 10.0).unwrap();
        let summary = u1u2_summary(&model, &test_ds, &split.novel, 1000.0, &soft).unwrap();

        assert!(summary.known_u1.mean.is_finite());
        assert!(summary.novel_u1.mean.is_finite());
        assert!(summary.known_u1.mean <= 0.0);
        assert!(summary.novel_u1.mean <= 0.0);
        assert_eq!(summary.bound_violations, 0);
        assert_eq!(summary.known_u1.n, test_ds.num_samples());
        assert_eq!(summary.novel_u1.n, split.novel.num_samples());

        if summary.known_u1.mean < summary.novel_u1.mean {
            u1_direction += 1;
        }
        if summary.known_u2.mean < summary.novel_u2.mean {
            u2_direction += 1;
        }
        println!(
            "seed {}: U1 known {:.6} vs novel {:.6}; U2 known {:.6} vs novel {:.6}",
            seed,
            summary.known_u1.mean,
            summary.novel_u1.mean,
            summary.known_u2.mean,
            summary.novel_u2.mean
        );
    }
    println!(
        "recorded: mean U1(known) < mean U1(novel) in {}/10 seeds; mean U2(known) < mean U2(novel) in {}/10 seeds",
        u1_direction, u2_direction
    );
}
