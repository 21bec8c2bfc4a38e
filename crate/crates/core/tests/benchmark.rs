use logitshift::eval::{
    report, run_benchmark, ArchResults, BenchmarkPlan, MethodOutcome, ReportOptions, ReportStyle,
    ResultsTree, SeedOutcome,
};

fn small_plan() -> BenchmarkPlan {
    let mut plan = BenchmarkPlan::demo();
    plan.datasets[0].n_per_subclass = 60;
    plan.datasets[0].test_per_subclass = 40;
    plan
}

fn layout(tree: &ResultsTree) -> String {
    let mut out = String::new();
    for (path, file) in tree.files() {
        out.push_str(&format!("results/{}\n", path.display()));
        for (arch, body) in file {
            let (wrapped, results) = match body {
                ArchResults::Wrapped { results, .. } => (true, results),
                ArchResults::Flat(results) => (false, results),
            };
            out.push_str(&format!(
                "  {arch}{}\n",
                if wrapped { " {meta, results}" } else { "" }
            ));
            for (sub_key, seeds) in results {
                out.push_str(&format!("    {sub_key}: {} seed entries\n", seeds.len()));
            }
        }
    }
    out
}

#[test]
fn demo_plan_is_deterministic_and_matches_layout() {
    let plan = small_plan();
    let a = run_benchmark(&plan, 2).unwrap();
    let b = run_benchmark(&plan, 1).unwrap();
    assert_eq!(a.canonical_json(), b.canonical_json());
    assert_eq!(a.canonical_hash(), b.canonical_hash());

    let golden = include_str!("golden/demo_layout.txt");
    assert_eq!(layout(&a), golden);

    for (_, file) in a.files() {
        for body in file.values() {
            for seeds in body.results().values() {
                for s in seeds {
                    let SeedOutcome::Done(entry) = s else {
                        panic!("cell failed: {s:?}");
                    };
                    assert_eq!(entry.methods.len(), plan.methods.len());
                    for (name, m) in &entry.methods {
                        match m {
                            MethodOutcome::Done(e) => assert_eq!(e.seed, entry.seed),
                            MethodOutcome::Failed(e) => panic!("{name} failed: {e:?}"),
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn results_round_trip_through_json_and_disk() {
    let mut plan = small_plan();
    plan.seeds = vec![3];
    plan.datasets[0].scenarios.truncate(1);
    let tree = run_benchmark(&plan, 1).unwrap();
    assert_eq!(ResultsTree::from_json(&tree.to_json()).unwrap(), tree);

    let dir = tempfile::tempdir().unwrap();
    let written = tree.write(dir.path()).unwrap();
    assert_eq!(written.len(), 1);
    assert!(written[0].ends_with("subclass/raw/subclass_mlp1_raw.json"));
    assert_eq!(ResultsTree::read(dir.path()).unwrap(), tree);
}

#[test]
fn single_method_plan_has_reference_rows_and_one_entry() {
    let mut plan = small_plan();
    plan.seeds = vec![1];
    plan.methods = vec!["FT".parse().unwrap()];
    plan.datasets[0].scenarios.truncate(1);
    let tree = run_benchmark(&plan, 1).unwrap();
    let json: serde_json::Value = serde_json::from_str(&tree.to_json()).unwrap();
    let entry = &json["subclass"]["raw"]["subclass_mlp1"]["mlp1"]["results"]["0-1"][0];
    let mut keys: Vec<&str> = entry
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    keys.sort();
    assert_eq!(keys, ["FT", "initial", "retrained", "seed"]);

    let csv = report(&tree, ReportStyle::Csv, ReportOptions::default());
    assert_eq!(csv.lines().count(), 1 + 1);
    let table = report(
        &tree,
        ReportStyle::Table,
        ReportOptions {
            include_references: true,
        },
    );
    assert!(table.contains("± 0.00"));
    assert_eq!(table.lines().count(), 2 + 3);
}

#[test]
fn failing_cells_are_recorded() {
    let mut plan = small_plan();
    plan.seeds = vec![1];
    plan.methods = vec!["FT".parse().unwrap()];
    plan.datasets[0].scenarios = vec!["subclass:0:7".parse().unwrap()];
    let tree = run_benchmark(&plan, 1).unwrap();
    let (_, file) = &tree.files()[0];
    let seeds = &file["mlp1"].results()["0-7"];
    assert!(matches!(&seeds[0], SeedOutcome::Failed(e) if e.error.origin == "datagen"));
}

#[test]
fn aggregation_matches_a_hand_computation() {
    let mut plan = small_plan();
    plan.seeds = vec![42, 0, 1, 2, 3];
    plan.methods = vec!["LDA-2C".parse().unwrap(), "DIR-2C".parse().unwrap()];
    plan.datasets[0].scenarios.truncate(1);
    let tree = run_benchmark(&plan, 4).unwrap();
    let json: serde_json::Value = serde_json::from_str(&tree.to_json()).unwrap();
    let seeds = json["subclass"]["raw"]["subclass_mlp1"]["mlp1"]["results"]["0-1"]
        .as_array()
        .unwrap();
    assert_eq!(seeds.len(), 5);

    let csv = report(&tree, ReportStyle::Csv, ReportOptions::default());
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    for method in ["LDA-2C", "DIR-2C"] {
        let kl: Vec<f64> = seeds
            .iter()
            .map(|s| s[method]["best"]["kl_t"].as_f64().unwrap())
            .collect();
        let mean = kl.iter().sum::<f64>() / 5.0;
        let std = (kl.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        let row: Vec<&str> = csv
            .lines()
            .find(|l| l.split(',').nth(5) == Some(method))
            .unwrap()
            .split(',')
            .collect();
        let col = |name: &str| {
            row[header.iter().position(|h| *h == name).unwrap()]
                .parse::<f64>()
                .unwrap()
        };
        assert!((col("kl_t_mean") - mean).abs() < 1e-12);
        assert!((col("kl_t_std") - std).abs() < 1e-12);
    }
}
