use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datagen::{
    build_scenario, generate_train_test, ForgetSplit, LabeledDataset, Preset, Scenario,
};
use crate::error::{Error, Result};
use crate::model::LogitModel;
use crate::nets::{
    baseline, distill, select_best_epoch, train_ce, Arch, AscentConfig, BaselineKind, MlpModel,
    Monitor, Snapshot, TrainConfig, TrainTrace,
};
use crate::numkit::{kl_to_log, log_softmax, ProbVec};
use crate::proxies::{fit, FitOptions, ProxyKind};
use crate::unlearn::{check_admissibility, find_eta_max, SignalTable, ZeroBracket, DEFAULT_TOL};

use super::results::{
    ArchResults, ErrorEntry, ErrorInfo, FileMeta, MethodEntry, MethodOutcome, ResultsTree,
    SeedEntry, SeedOutcome, TargetBlock,
};
use super::{MetricsReport, DEFAULT_ALPHAS};

/// Directory level naming the feature extractor; synthetic features are
/// used as drawn.
pub const ARCH_KIND: &str = "raw";

/// A method compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Proxy(ProxyKind),
    Baseline(BaselineKind),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proxy(k) => k.name(),
            Method::Baseline(k) => k.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(k) = s.parse::<ProxyKind>() {
            return Ok(Method::Proxy(k));
        }
        match s.parse::<BaselineKind>() {
            Ok(BaselineKind::Retrain) => Err(Error::InvalidArgument(
                "`Retrain` is always run as the reference and cannot be listed as a method".into(),
            )),
            Ok(k) => Ok(Method::Baseline(k)),
            Err(_) => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Serde for lists of values written as their display strings.
mod as_strings {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|t| t.to_string()))
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Vec<T>, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPlan {
    #[serde(with = "preset_name")]
    pub preset: Preset,
    pub n_per_subclass: usize,
    pub test_per_subclass: usize,
    #[serde(with = "as_strings")]
    pub scenarios: Vec<Scenario>,
}

mod preset_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::datagen::Preset;

    pub fn serialize<S: Serializer>(p: &Preset, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(p.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Preset, D::Error> {
        Preset::parse(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPlan {
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetPlan>,
    pub archs: Vec<Arch>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_tol")]
    pub eta_tol: f64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Recipe of the initial model and of the retrained reference.
    #[serde(default)]
    pub train: TrainConfig,
    /// Recipe shared by the baselines and by distillation.
    #[serde(default)]
    pub unlearn: TrainConfig,
    #[serde(default)]
    pub ascent: AscentConfig,
    #[serde(default)]
    pub proxy: FitOptions,
}

fn default_hidden() -> usize {
    32
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_alphas() -> Vec<f64> {
    DEFAULT_ALPHAS.to_vec()
}

impl BenchmarkPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.datasets.is_empty() || self.archs.is_empty() || self.seeds.is_empty() {
            return bad("a plan needs at least one dataset, architecture and seed");
        }
        if self.datasets.iter().any(|d| d.scenarios.is_empty()) {
            return bad("every dataset needs at least one scenario");
        }
        if self
            .datasets
            .iter()
            .any(|d| d.n_per_subclass < 2 || d.test_per_subclass == 0)
        {
            return bad("sample counts are too small");
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        if !(self.eta_tol > 0.0 && self.eta_tol < 1.0) {
            return bad("eta_tol must be in (0, 1)");
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 0.5)) {
            return bad("alphas must be in (0, 0.5)");
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.seeds.iter().all(|s| seen.insert(*s)) {
            return bad("seeds must be distinct");
        }
        self.train.validate()?;
        self.unlearn.validate()?;
        if self.train.epochs == 0 {
            return bad("train.epochs must be at least 1");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    /// Small plan used by the demo command and the determinism check.
    pub fn demo() -> Self {
        Self {
            datasets: vec![DatasetPlan {
                preset: Preset::Subclass,
                n_per_subclass: 150,
                test_per_subclass: 100,
                scenarios: vec![
                    Scenario::Subclass {
                        class: 0,
                        subclass: 1,
                    },
                    Scenario::Class { class: 0 },
                ],
            }],
            archs: vec![Arch::Mlp1],
            hidden: 16,
            methods: ["LDA", "LDA-2C", "DIR-2C", "FT", "GA+FT"]
                .iter()
                .map(|m| m.parse().unwrap())
                .collect(),
            seeds: vec![42, 0],
            eta_tol: DEFAULT_TOL,
            alphas: DEFAULT_ALPHAS.to_vec(),
            train: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            unlearn: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            ascent: AscentConfig::default(),
            proxy: FitOptions::default(),
        }
    }
}

/// Shared state of one (dataset, arch, scenario, seed) cell.
struct Cell<'a> {
    plan: &'a BenchmarkPlan,
    seed: u64,
    train: LabeledDataset,
    test: LabeledDataset,
    split: ForgetSplit,
    initial: MlpModel,
    base_train: Vec<crate::numkit::LogitVec>,
    base_test: Vec<crate::numkit::LogitVec>,
    monitor: Monitor,
    retrain_seconds: f64,
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.clone()
    }
}

fn snapshot_of(trace: &TrainTrace, epoch: usize) -> Snapshot {
    let e = &trace.epochs[epoch];
    Snapshot {
        acc_t: e.acc_t,
        acc_f: e.acc_f,
        kl_t: e.kl_t,
        kl_f: e.kl_f,
        ce_t: e.ce_t,
        ce_f: e.ce_f,
    }
}

fn mean_kl_to_logits(targets: &[ProbVec], logits: &[Vec<f64>]) -> Result<f64> {
    let mut acc = 0.0;
    for (t, z) in targets.iter().zip(logits) {
        acc += kl_to_log(t, &log_softmax(z)?)?;
    }
    Ok(acc / targets.len().max(1) as f64)
}

impl Cell<'_> {
    fn entry(
        &self,
        trace: TrainTrace,
        seconds: f64,
        target: Option<TargetBlock>,
    ) -> Result<MethodEntry> {
        let best_epoch = select_best_epoch(&trace)?;
        let mut best =
            MetricsReport::from_snapshot(&snapshot_of(&trace, best_epoch), &self.plan.alphas)?
                .with_rte(seconds, Some(self.retrain_seconds));
        best.kl_last = trace.last().and_then(|e| e.kl_t);
        Ok(MethodEntry {
            seed: self.seed,
            best_epoch,
            best,
            epochs: trace.epochs,
            target,
        })
    }

    fn run_baseline(&self, kind: BaselineKind) -> Result<MethodEntry> {
        let start = Instant::now();
        let cfg = with_seed(&self.plan.unlearn, self.seed);
        let (_, trace) = baseline(
            kind,
            &self.initial,
            &self.train,
            &self.split,
            &cfg,
            &self.plan.ascent,
            Some(&self.monitor),
        )?;
        self.entry(trace, start.elapsed().as_secs_f64(), None)
    }

    fn run_proxy(&self, kind: ProxyKind) -> Result<MethodEntry> {
        let start = Instant::now();
        let pair = fit(kind, &self.train, &self.split, &self.plan.proxy)?;
        let table = SignalTable::new(&pair, &self.train, self.base_train.clone())?;
        let (eta, admissible, bracket) = if pair.is_dirac() {
            (1.0, table.h(1.0)? <= self.plan.eta_tol, "fixed".to_string())
        } else {
            let r = find_eta_max(&table, self.plan.eta_tol)?;
            let bracket = match r.zero_bracket {
                ZeroBracket::Interval { .. } => "interval",
                ZeroBracket::CappedAtOne => "capped-at-1",
                ZeroBracket::None => "none",
            };
            (r.eta_max, r.admissible, bracket.to_string())
        };
        let n = self.train.len();
        let target: Vec<ProbVec> = (0..n)
            .map(|i| table.probits(i, eta))
            .collect::<Result<_>>()?;
        let admissibility_gap = if pair.is_dirac() {
            None
        } else {
            let base: Vec<ProbVec> = self.initial.probits_on(&self.train)?;
            check_admissibility(&base, &pair, &self.train)
                .ok()
                .map(|a| a.gap)
                .filter(|g| g.is_finite())
        };

        let test_table = SignalTable::new(&pair, &self.test, self.base_test.clone())?;
        let test_logits: Vec<Vec<f64>> = (0..self.test.len())
            .map(|i| test_table.shifted(i, eta))
            .collect::<Result<_>>()?;
        let forget_logits: Vec<Vec<f64>> = (0..n)
            .filter(|&i| self.split.is_forget(self.train.id(i)))
            .map(|i| table.shifted(i, eta))
            .collect::<Result<_>>()?;
        let snap = self
            .monitor
            .snapshot_from_logits(&test_logits, &forget_logits)?;
        let need = |v: Option<f64>| v.ok_or(Error::MissingReference);
        let base_logits: Vec<Vec<f64>> = self.base_train.iter().map(|z| z.to_vec()).collect();
        let before = mean_kl_to_logits(&target, &base_logits)?;

        let mut student = self.initial.clone();
        let cfg = with_seed(&self.plan.unlearn, self.seed);
        let trace = distill(
            &mut student,
            &target,
            &self.train,
            &cfg,
            Some(&self.monitor),
        )?;
        let student_logits: Vec<Vec<f64>> = student
            .logits_on(&self.train)?
            .into_iter()
            .map(|z| z.into_inner())
            .collect();
        let after = mean_kl_to_logits(&target, &student_logits)?;
        let block = TargetBlock {
            eta_max: eta,
            admissible,
            zero_bracket: bracket,
            admissibility_gap,
            kl_t: Some(need(snap.kl_t)?).filter(|v| v.is_finite()),
            kl_f: Some(need(snap.kl_f)?).filter(|v| v.is_finite()),
            acc_t: need(snap.acc_t)?,
            acc_f: need(snap.acc_f)?,
            kl_net_to_proxy_before: before,
            kl_net_to_proxy_after: after,
        };
        self.entry(trace, start.elapsed().as_secs_f64(), Some(block))
    }
}

fn run_cell(
    plan: &BenchmarkPlan,
    ds: &DatasetPlan,
    arch: Arch,
    scenario: Scenario,
    seed: u64,
) -> Result<SeedEntry> {
    let spec = ds.preset.spec(seed);
    let (train, test) = generate_train_test(&spec, ds.n_per_subclass, ds.test_per_subclass)?;
    let split = build_scenario(&train, scenario.with_seed(seed))?;
    let dims = arch.dims(train.dim(), plan.hidden, train.n_classes());
    let cfg = with_seed(&plan.train, seed);
    let mut initial = MlpModel::new(&dims, seed)?;
    train_ce(&mut initial, &train, &cfg, None)?;
    let (retrained, retrain_trace) = baseline(
        BaselineKind::Retrain,
        &initial,
        &train,
        &split,
        &cfg,
        &plan.ascent,
        None,
    )?;
    let retrain_seconds = retrain_trace.seconds();
    let monitor = Monitor::new(test.clone(), split.forget_set(&train), Some(&retrained))?;
    let initial_row = MetricsReport::from_snapshot(&monitor.snapshot(&initial)?, &plan.alphas)?;
    let retrained_row = MetricsReport::from_snapshot(&monitor.snapshot(&retrained)?, &plan.alphas)?
        .with_rte(retrain_seconds, Some(retrain_seconds));
    let cell = Cell {
        plan,
        seed,
        base_train: initial.logits_on(&train)?,
        base_test: initial.logits_on(&test)?,
        train,
        test,
        split,
        initial,
        monitor,
        retrain_seconds,
    };
    let mut methods = std::collections::BTreeMap::new();
    for &m in &plan.methods {
        let outcome = match m {
            Method::Proxy(k) => cell.run_proxy(k),
            Method::Baseline(k) => cell.run_baseline(k),
        };
        let outcome = match outcome {
            Ok(e) => MethodOutcome::Done(Box::new(e)),
            Err(e) => MethodOutcome::Failed(ErrorEntry {
                seed,
                error: ErrorInfo::from(&e),
            }),
        };
        methods.insert(m.name().to_string(), outcome);
    }
    Ok(SeedEntry {
        seed,
        initial: initial_row,
        retrained: retrained_row,
        methods,
    })
}

struct CellKey<'a> {
    ds: &'a DatasetPlan,
    arch: Arch,
    scenario: Scenario,
    seed: u64,
}

/// Runs every (dataset, architecture, scenario, seed) cell of `plan` on up
/// to `jobs` threads. A failing cell or method is recorded as an error entry
/// and the run goes on. The tree is the same for any `jobs`.
pub fn run_benchmark(plan: &BenchmarkPlan, jobs: usize) -> Result<ResultsTree> {
    plan.validate()?;
    let mut keys = Vec::new();
    for ds in &plan.datasets {
        for &arch in &plan.archs {
            for &scenario in &ds.scenarios {
                for &seed in &plan.seeds {
                    keys.push(CellKey {
                        ds,
                        arch,
                        scenario,
                        seed,
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        keys.par_iter()
            .map(|k| match run_cell(plan, k.ds, k.arch, k.scenario, k.seed) {
                Ok(e) => SeedOutcome::Done(Box::new(e)),
                Err(e) => SeedOutcome::Failed(ErrorEntry {
                    seed: k.seed,
                    error: ErrorInfo::from(&e),
                }),
            })
            .collect()
    });

    let mut tree = ResultsTree::default();
    for (k, outcome) in keys.iter().zip(outcomes) {
        let stem = format!("{}_{}", k.scenario.name(), k.arch.name());
        let file = tree.file_mut(k.ds.preset.name(), ARCH_KIND, &stem);
        let body = file
            .entry(k.arch.name().to_string())
            .or_insert_with(|| match k.scenario {
                Scenario::Subclass { .. } => ArchResults::Wrapped {
                    meta: FileMeta {
                        dataset: k.ds.preset.name().to_string(),
                        scenario: k.scenario.name().to_string(),
                        arch: k.arch.name().to_string(),
                        n_per_subclass: k.ds.n_per_subclass,
                        test_per_subclass: k.ds.test_per_subclass,
                        seeds: plan.seeds.clone(),
                        methods: plan.methods.iter().map(|m| m.name().to_string()).collect(),
                    },
                    results: Default::default(),
                },
                _ => ArchResults::Flat(Default::default()),
            });
        body.results_mut()
            .entry(k.scenario.sub_key())
            .or_default()
            .push(outcome);
    }
    Ok(tree)
}
