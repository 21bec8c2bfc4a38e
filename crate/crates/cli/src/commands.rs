use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use logitshift::datagen::{
    build_scenario, generate_train_test, ForgetSplit, GaussianMixtureSpec, LabeledDataset,
};
use logitshift::eval::{
    report, run_benchmark, stein_queries, BenchmarkPlan, ReportOptions, ResultsTree,
};
use logitshift::io::{read_text, write_atomic};
use logitshift::model::LogitModel;
use logitshift::nets::{baseline, distill, train_ce, AscentConfig, MlpModel, TrainTrace};
use logitshift::numkit::{kl_categorical, ProbVec};
use logitshift::proxies::{fit, FitOptions, ProxyPair, SigmaConvention};
use logitshift::unlearn::{
    check_admissibility, find_eta_max, h_curve, h_curve_csv, SignalTable, ZeroBracket,
};
use logitshift::{Error, Result};

use crate::{Command, DEFAULT_OUT, OUT_ENV};

/// Target probits of one dataset, row-aligned by id.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Targets {
    eta: f64,
    dataset: String,
    ids: Vec<u64>,
    probits: Vec<Vec<f64>>,
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn out_path(given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| out_dir().join(name))
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_data(path: &Path) -> Result<LabeledDataset> {
    LabeledDataset::from_text(&read_text(path)?)
}

fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::from_text(&read_text(path)?)
}

fn load_proxy(path: &Path) -> Result<ProxyPair> {
    ProxyPair::from_json(&read_text(path)?)
}

fn load_split(path: &Path, ds: &LabeledDataset) -> Result<ForgetSplit> {
    let split = ForgetSplit::from_json(&read_text(path)?)?;
    split.check_against(ds)?;
    Ok(split)
}

fn save_trace(path: Option<PathBuf>, trace: &TrainTrace) -> Result<()> {
    match path {
        Some(p) => write(&p, &trace.to_json()),
        None => Ok(()),
    }
}

fn bracket_name(b: &ZeroBracket) -> &'static str {
    match b {
        ZeroBracket::Interval { .. } => "interval",
        ZeroBracket::CappedAtOne => "capped-at-1",
        ZeroBracket::None => "none",
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => {
            let mut spec = match &a.spec {
                Some(p) => GaussianMixtureSpec::from_toml_str(&read_text(p)?)?,
                None => a.preset.spec(a.seed),
            };
            spec.seed = a.seed;
            let (train, test) = generate_train_test(&spec, a.n_per_subclass, a.test_per_subclass)?;
            let split = match a.scenario {
                Some(s) => build_scenario(&train, s.with_seed(a.seed))?,
                None => ForgetSplit::from_forget_ids(&train, std::iter::empty())?,
            };
            let dir = out_path(a.out, "");
            write(&dir.join("train.txt"), &train.to_text())?;
            write(&dir.join("test.txt"), &test.to_text())?;
            write(&dir.join("split.json"), &split.to_json())?;
            write(&dir.join("spec.toml"), &spec.to_toml_string())?;
            println!(
                "train {} rows, test {} rows, forget {} rows",
                train.len(),
                test.len(),
                split.forget_ids.len()
            );
        }
        Command::Train(a) => {
            let ds = load_data(&a.data)?;
            let dims = a.arch.dims(ds.dim(), a.hidden, ds.n_classes());
            let mut model = MlpModel::new(&dims, a.seed)?;
            let trace = train_ce(&mut model, &ds, &a.train.config(a.seed), None)?;
            if let Some(last) = trace.last() {
                println!("epoch {} loss {:.6}", last.epoch, last.loss);
            }
            write(&out_path(a.out, "model.txt"), &model.to_text())?;
            save_trace(a.trace, &trace)?;
        }
        Command::FitProxy(a) => {
            let ds = load_data(&a.data)?;
            let split = match &a.split {
                Some(p) => load_split(p, &ds)?,
                None => ForgetSplit::from_forget_ids(&ds, std::iter::empty())?,
            };
            let opts = FitOptions {
                ridge: a.ridge,
                sigma: if a.per_support_sigma {
                    SigmaConvention::PerSupport
                } else {
                    SigmaConvention::SharedFromFull
                },
                qda_full_cov: a.qda_full_cov,
                sketch_dim: a.sketch_dim,
                sketch_seed: a.seed,
            };
            let pair = fit(a.kind, &ds, &split, &opts)?;
            println!(
                "fitted {} on {} rows ({} forget)",
                a.kind,
                ds.len(),
                split.forget_ids.len()
            );
            write(&out_path(a.out, "proxy.json"), &pair.to_json())?;
        }
        Command::EtaSearch(a) => {
            let ds = load_data(&a.data)?;
            let model = load_model(&a.model)?;
            let pair = load_proxy(&a.proxy)?;
            let table = SignalTable::from_model(&pair, &ds, &model)?;
            let r = find_eta_max(&table, a.tol)?;
            println!("eta_max = {}", r.eta_max);
            println!("admissible = {}", r.admissible);
            println!("zero_bracket = {}", bracket_name(&r.zero_bracket));
            println!("slope_at_zero = {:e}", r.slope_at_zero);
            write(
                &out_path(a.out, "eta.json"),
                &serde_json::to_string_pretty(&r)?,
            )?;
            if let Some(p) = a.curve {
                write(&p, &h_curve_csv(&h_curve(&table, a.curve_steps)?))?;
            }
        }
        Command::Unlearn(a) => {
            let ds = load_data(&a.data)?;
            let model = load_model(&a.model)?;
            let pair = load_proxy(&a.proxy)?;
            let table = SignalTable::from_model(&pair, &ds, &model)?;
            let eta = match a.eta {
                Some(e) if (0.0..=1.0).contains(&e) => e,
                Some(e) => return Err(Error::InvalidArgument(format!("eta = {e} outside [0, 1]"))),
                None => find_eta_max(&table, a.tol)?.eta_max,
            };
            let base = model.probits_on(&ds)?;
            let probits: Vec<ProbVec> = (0..ds.len())
                .map(|i| table.probits(i, eta))
                .collect::<Result<_>>()?;
            let mut moved = 0.0;
            for (t, p) in probits.iter().zip(&base) {
                moved += kl_categorical(t, p)?;
            }
            println!("eta = {eta}");
            println!("mean KL(target || model) = {:.6}", moved / ds.len() as f64);
            if let Ok(adm) = check_admissibility(&base, &pair, &ds) {
                println!("admissibility gap = {:.6} (holds = {})", adm.gap, adm.holds);
            }
            let targets = Targets {
                eta,
                dataset: ds.fingerprint(),
                ids: ds.ids().to_vec(),
                probits: probits.into_iter().map(ProbVec::into_inner).collect(),
            };
            write(
                &out_path(a.out, "targets.json"),
                &serde_json::to_string(&targets)?,
            )?;
        }
        Command::Distill(a) => {
            let ds = load_data(&a.data)?;
            let mut model = load_model(&a.model)?;
            let targets: Targets = serde_json::from_str(&read_text(&a.targets)?)?;
            if targets.ids != ds.ids() {
                return Err(Error::Config(format!(
                    "targets in {} were computed on a different dataset",
                    a.targets.display()
                )));
            }
            let teacher: Vec<ProbVec> = targets
                .probits
                .into_iter()
                .map(ProbVec::new)
                .collect::<Result<_>>()?;
            let trace = distill(&mut model, &teacher, &ds, &a.train.config(a.seed), None)?;
            if let Some(last) = trace.last() {
                println!("epoch {} loss {:.6}", last.epoch, last.loss);
            }
            write(&out_path(a.out, "distilled.txt"), &model.to_text())?;
            save_trace(a.trace, &trace)?;
        }
        Command::Baseline(a) => {
            let ds = load_data(&a.data)?;
            let split = load_split(&a.split, &ds)?;
            let initial = load_model(&a.model)?;
            let ascent = AscentConfig {
                lr_factor: a.ascent_lr_factor,
                max_epochs: a.ascent_max_epochs,
            };
            let (model, trace) = baseline(
                a.kind,
                &initial,
                &ds,
                &split,
                &a.train.config(a.seed),
                &ascent,
                None,
            )?;
            if let Some(last) = trace.last() {
                println!("epoch {} loss {:.6}", last.epoch, last.loss);
            }
            let name = format!("{}.txt", a.kind.name().to_lowercase().replace('+', "-"));
            write(&out_path(a.out, &name), &model.to_text())?;
            save_trace(a.trace, &trace)?;
        }
        Command::Benchmark(a) => {
            let mut plan = match &a.config {
                Some(p) => BenchmarkPlan::from_toml_str(&read_text(p)?)?,
                None => BenchmarkPlan::demo(),
            };
            if let Some(seed) = a.seed {
                plan.seeds = vec![seed];
            }
            let tree = run_benchmark(&plan, a.jobs)?;
            let root = out_path(a.out, "results");
            for path in tree.write(&root)? {
                println!("wrote {}", path.display());
            }
            println!("canonical hash {}", tree.canonical_hash());
        }
        Command::Report(a) => {
            let tree = ResultsTree::read(&a.results)?;
            let opts = ReportOptions {
                include_references: a.include_references,
            };
            let text = report(&tree, a.style, opts);
            match a.out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Stein(a) => println!("{}", stein_queries(a.alpha, a.kl)?),
    }
    Ok(())
}
