use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::*;
use super::{ModelTemplate, SuiteConfig, TestKind};
use crate::dataset::{standardize, Dataset, Instance};
use crate::error::Result;
use crate::metrics::{Family, MetricCache, MetricContext, MetricId};
use crate::model::{train, Model, TrainConfig};
use crate::numerics::NumericsConfig;
use crate::seed::{derive, Stream};

/// Mean ± std of one (metric, test) pair over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub metric: MetricId,
    pub test: TestKind,
    /// `None` when no repetition succeeded.
    pub mean: Option<f64>,
    /// Population standard deviation; 0 for a single value.
    pub std: Option<f64>,
    /// One value per successful repetition, in repetition order.
    pub values: Vec<f64>,
    pub degenerate_count: usize,
    /// First failure message, when some repetition failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionMeta {
    pub repetition: usize,
    pub split_seed: u64,
    pub init_seed: u64,
    pub train_seed: u64,
    pub random_init_seed: u64,
    pub test_sample_seed: u64,
    pub superclass_seed: u64,
    pub train_size: usize,
    pub test_pool_size: usize,
    /// Realized size of the sample shared by every metric.
    pub test_sample_size: usize,
    /// Realized size of the correctly predicted superclass sample.
    pub subclass_sample_size: Option<usize>,
    pub final_train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub superclass_train_accuracy: Option<f64>,
    pub superclass_test_accuracy: Option<f64>,
    pub hessian_damping: Option<f64>,
    pub fisher_damping: Option<f64>,
    pub if_solver: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub master_seed: u64,
    pub repetitions: usize,
    pub test_sample_size: usize,
    pub k: usize,
    pub train_fraction: f64,
    pub standardize: bool,
    pub model: ModelTemplate,
    pub train: TrainConfig,
    pub numerics: NumericsConfig,
    pub dataset_digest: String,
    pub dataset_size: usize,
    pub class_count: usize,
    /// One test sample per repetition is shared by every metric.
    pub shared_test_sample: bool,
    pub per_repetition: Vec<RepetitionMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub repetition: usize,
    pub metric: MetricId,
    pub analysis: NormAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub repetition: usize,
    pub analysis: ResidualAnalysis,
}

/// Raw diagnostic output kept alongside the report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub norms: Vec<NormRecord>,
    pub residuals: Vec<ResidualRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: ReportMeta,
    pub cells: Vec<Cell>,
    #[serde(skip)]
    pub artifacts: Artifacts,
}

impl EvaluationReport {
    pub fn cell(&self, metric: MetricId, test: TestKind) -> Option<&Cell> {
        self.cells.iter().find(|c| c.metric == metric && c.test == test)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Split, standardized train/test and a model trained on the train part.
struct Prepared {
    train: Dataset,
    test: Dataset,
    model: Model,
    final_loss: f64,
}

fn prepare(
    data: &Dataset,
    cfg: &SuiteConfig,
    split_seed: u64,
    init_seed: u64,
    train_seed: u64,
) -> Result<Prepared> {
    let (tr, te) = data.split(cfg.train_fraction, split_seed)?;
    let (tr, te) = if cfg.standardize {
        let (a, b, _) = standardize(&tr, &te)?;
        (a, b)
    } else {
        (tr, te)
    };
    let spec = cfg.model.spec(data.dim(), data.class_count());
    let init = Model::init_random(spec, init_seed)?;
    let tc = TrainConfig {
        seed: train_seed,
        ..cfg.train.clone()
    };
    let (model, summary) = train(&init, &tr, &tc)?;
    Ok(Prepared {
        train: tr,
        test: te,
        model,
        final_loss: summary.final_loss,
    })
}

type CellResult = std::result::Result<TestOutcome, String>;

struct RepetitionOutput {
    /// Aligned with the suite's cell list.
    cells: Vec<Option<CellResult>>,
    norms: Vec<NormRecord>,
    residual: Option<ResidualRecord>,
    meta: RepetitionMeta,
}

/// The split and trained model of one repetition, exactly as the suite
/// builds them.
#[derive(Debug, Clone)]
pub struct TrainedRepetition {
    pub train: Dataset,
    pub test: Dataset,
    pub model: Model,
    pub final_loss: f64,
}

pub fn train_repetition(cfg: &SuiteConfig, data: &Dataset, repetition: usize) -> Result<TrainedRepetition> {
    cfg.validate()?;
    let s = |stream| derive(cfg.master_seed, repetition as u64, stream);
    let p = prepare(data, cfg, s(Stream::Split), s(Stream::Init), s(Stream::Train))?;
    Ok(TrainedRepetition {
        train: p.train,
        test: p.test,
        model: p.model,
        final_loss: p.final_loss,
    })
}

/// Runs every enabled (metric, test) pair over `cfg.repetitions`
/// repetitions of split, train and sample.
pub fn run_suite(cfg: &SuiteConfig, data: &Dataset) -> Result<EvaluationReport> {
    cfg.validate()?;
    let mut metrics: Vec<MetricId> = Vec::new();
    for m in &cfg.metrics {
        if !metrics.contains(m) {
            metrics.push(*m);
        }
    }
    let mut tests: Vec<TestKind> = Vec::new();
    for t in &cfg.tests {
        if !tests.contains(t) {
            tests.push(*t);
        }
    }
    let layout = cell_layout(&metrics, &tests);

    let mut reps = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        log::info!("repetition {}/{}", r + 1, cfg.repetitions);
        reps.push(run_repetition(cfg, data, r, &metrics, &tests, &layout)?);
    }

    let cells = layout
        .iter()
        .enumerate()
        .map(|(c, &(metric, test))| {
            let mut values = Vec::new();
            let mut degenerate = 0;
            let mut error = None;
            for rep in &reps {
                match &rep.cells[c] {
                    Some(Ok(o)) => {
                        values.push(o.value);
                        degenerate += o.degenerate;
                    }
                    Some(Err(e)) => {
                        error.get_or_insert_with(|| format!("repetition {}: {e}", rep.meta.repetition));
                    }
                    None => {}
                }
            }
            let (mean, std) = mean_std(&values);
            Cell {
                metric,
                test,
                mean,
                std,
                values,
                degenerate_count: degenerate,
                error,
            }
        })
        .collect();

    let mut artifacts = Artifacts::default();
    let mut per_repetition = Vec::new();
    for rep in reps {
        artifacts.norms.extend(rep.norms);
        artifacts.residuals.extend(rep.residual);
        per_repetition.push(rep.meta);
    }
    Ok(EvaluationReport {
        meta: ReportMeta {
            master_seed: cfg.master_seed,
            repetitions: cfg.repetitions,
            test_sample_size: cfg.test_sample_size,
            k: cfg.k,
            train_fraction: cfg.train_fraction,
            standardize: cfg.standardize,
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            numerics: cfg.numerics.clone(),
            dataset_digest: data.digest(),
            dataset_size: data.len(),
            class_count: data.class_count(),
            shared_test_sample: true,
            per_repetition,
        },
        cells,
        artifacts,
    })
}

/// Metric-major cell order; the residual analysis is metric-free and is
/// filed once under grad-cos, whose factorization it examines.
fn cell_layout(metrics: &[MetricId], tests: &[TestKind]) -> Vec<(MetricId, TestKind)> {
    let mut out = Vec::new();
    for m in metrics {
        for t in tests {
            if *t != TestKind::ResidualAnalysis {
                out.push((*m, *t));
            }
        }
    }
    if tests.contains(&TestKind::ResidualAnalysis) {
        out.push((MetricId::gradient(Family::Gc).expect("gc"), TestKind::ResidualAnalysis));
    }
    out
}

pub(crate) fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn run_repetition(
    cfg: &SuiteConfig,
    data: &Dataset,
    r: usize,
    metrics: &[MetricId],
    tests: &[TestKind],
    layout: &[(MetricId, TestKind)],
) -> Result<RepetitionOutput> {
    let rep = r as u64;
    let s = |stream| derive(cfg.master_seed, rep, stream);
    let main = prepare(data, cfg, s(Stream::Split), s(Stream::Init), s(Stream::Train))?;
    let sample = sample_test_instances(&main.model, &main.test, cfg.test_sample_size, s(Stream::TestSample), false)?;
    let randomized = if tests.contains(&TestKind::Randomization) {
        Some(Model::init_random(main.model.spec().clone(), s(Stream::RandomInit))?)
    } else {
        None
    };

    let needs_sub = tests.iter().any(|t| t.needs_subclasses());
    let sub_owned: Option<std::result::Result<Prepared, String>> = (needs_sub && !data.has_subclasses())
        .then(|| {
            data.make_superclass(s(Stream::Superclass))
                .and_then(|sup| prepare(&sup, cfg, s(Stream::SuperSplit), s(Stream::SuperInit), s(Stream::SuperTrain)))
                .map_err(|e| format!("superclass setup: {e}"))
        });
    let sub: Option<std::result::Result<&Prepared, String>> = if !needs_sub {
        None
    } else if data.has_subclasses() {
        Some(Ok(&main))
    } else {
        sub_owned.as_ref().map(|p| p.as_ref().map_err(Clone::clone))
    };
    let sub_sample: Option<std::result::Result<Vec<Instance>, String>> = sub.as_ref().map(|p| match p {
        Ok(p) => sample_test_instances(&p.model, &p.test, cfg.test_sample_size, s(Stream::SuperTestSample), true)
            .map_err(|e| e.to_string()),
        Err(e) => Err(e.clone()),
    });

    let main_ctx = MetricContext::new(&main.model, &main.train, &cfg.numerics)?;
    let rand_ctx = match &randomized {
        Some(m) => Some(MetricContext::new(m, &main.train, &cfg.numerics)?),
        None => None,
    };
    let sub_ctx: Option<std::result::Result<MetricContext<'_>, String>> = sub.as_ref().map(|p| match p {
        Ok(p) => MetricContext::new(&p.model, &p.train, &cfg.numerics).map_err(|e| e.to_string()),
        Err(e) => Err(e.clone()),
    });

    let env = Env {
        cfg,
        tests,
        main: &main,
        sample: &sample,
        main_ctx: &main_ctx,
        rand_ctx: rand_ctx.as_ref(),
        sub: sub.as_ref().and_then(|p| p.as_ref().ok().copied()),
        sub_sample: sub_sample.as_ref(),
        sub_ctx: sub_ctx.as_ref(),
    };
    let per_metric: Vec<Vec<(TestKind, CellResult, Option<NormAnalysis>)>> =
        metrics.par_iter().map(|m| env.metric_cells(*m)).collect();

    let mut cells: Vec<Option<CellResult>> = vec![None; layout.len()];
    let mut norms = Vec::new();
    for (m, results) in metrics.iter().zip(per_metric) {
        for (t, res, norm) in results {
            let idx = layout.iter().position(|c| *c == (*m, t)).expect("cell in layout");
            cells[idx] = Some(res);
            if let Some(analysis) = norm {
                norms.push(NormRecord {
                    repetition: r,
                    metric: *m,
                    analysis,
                });
            }
        }
    }

    let mut residual = None;
    if tests.contains(&TestKind::ResidualAnalysis) {
        let idx = layout.len() - 1;
        let res = residual_cosine_analysis(&main.model, &sample, &main.train, s(Stream::Residual));
        cells[idx] = Some(match res {
            Ok(a) => {
                let out = Ok(TestOutcome {
                    value: a.gc_gap(),
                    degenerate: a.degenerate,
                    evaluated: a.same_gc.len(),
                });
                residual = Some(ResidualRecord {
                    repetition: r,
                    analysis: a,
                });
                out
            }
            Err(e) => Err(e.to_string()),
        });
    }

    let (hessian_damping, fisher_damping) = main_ctx.computed_damping();
    let if_solver = metrics
        .iter()
        .any(|m| m.family() == Family::If)
        .then(|| format!("{:?}", main_ctx.resolved_inverse_solver()).to_lowercase());
    let sub_prepared = sub.as_ref().and_then(|p| p.as_ref().ok());
    let meta = RepetitionMeta {
        repetition: r,
        split_seed: s(Stream::Split),
        init_seed: s(Stream::Init),
        train_seed: s(Stream::Train),
        random_init_seed: s(Stream::RandomInit),
        test_sample_seed: s(Stream::TestSample),
        superclass_seed: s(Stream::Superclass),
        train_size: main.train.len(),
        test_pool_size: main.test.len(),
        test_sample_size: sample.len(),
        subclass_sample_size: sub_sample.as_ref().and_then(|s| s.as_ref().ok()).map(Vec::len),
        final_train_loss: main.final_loss,
        train_accuracy: main.model.accuracy(&main.train)?,
        test_accuracy: main.model.accuracy(&main.test)?,
        superclass_train_accuracy: sub_prepared.map(|p| p.model.accuracy(&p.train)).transpose()?,
        superclass_test_accuracy: sub_prepared.map(|p| p.model.accuracy(&p.test)).transpose()?,
        hessian_damping,
        fisher_damping,
        if_solver,
    };
    Ok(RepetitionOutput {
        cells,
        norms,
        residual,
        meta,
    })
}

struct Env<'a> {
    cfg: &'a SuiteConfig,
    tests: &'a [TestKind],
    main: &'a Prepared,
    sample: &'a [Instance],
    main_ctx: &'a MetricContext<'a>,
    rand_ctx: Option<&'a MetricContext<'a>>,
    sub: Option<&'a Prepared>,
    sub_sample: Option<&'a std::result::Result<Vec<Instance>, String>>,
    sub_ctx: Option<&'a std::result::Result<MetricContext<'a>, String>>,
}

impl Env<'_> {
    fn metric_cells(&self, metric: MetricId) -> Vec<(TestKind, CellResult, Option<NormAnalysis>)> {
        let needs_main = self.tests.iter().any(|t| !t.needs_subclasses() && *t != TestKind::ResidualAnalysis);
        let main_cache: Option<std::result::Result<MetricCache, String>> =
            needs_main.then(|| self.main_ctx.precompute(metric).map_err(|e| e.to_string()));
        let needs_sub = self.tests.iter().any(|t| t.needs_subclasses());
        let sub_cache: Option<std::result::Result<MetricCache, String>> = needs_sub.then(|| match self.sub_ctx {
            Some(Ok(ctx)) => ctx.precompute(metric).map_err(|e| e.to_string()),
            Some(Err(e)) => Err(e.clone()),
            None => Err("no superclass setting".into()),
        });

        let mut out = Vec::new();
        for &test in self.tests {
            if test == TestKind::ResidualAnalysis {
                continue;
            }
            let cache = if test.needs_subclasses() { &sub_cache } else { &main_cache };
            let cache = match cache.as_ref().expect("cache requested") {
                Ok(c) => c,
                Err(e) => {
                    out.push((test, Err(e.clone()), None));
                    continue;
                }
            };
            let mut norm = None;
            let res = match test {
                TestKind::Randomization => self.randomization(metric, cache),
                TestKind::IdenticalClass => {
                    identical_class_test(cache, self.sample, &self.main.train).map_err(|e| e.to_string())
                }
                TestKind::TopkClass => topk_identical_class_test(cache, self.sample, &self.main.train, self.cfg.k)
                    .map_err(|e| e.to_string()),
                TestKind::IdenticalSubclass | TestKind::TopkSubclass => {
                    let k = if test == TestKind::TopkSubclass { self.cfg.k } else { 1 };
                    match (self.sub, self.sub_sample) {
                        (Some(p), Some(Ok(sample))) => {
                            topk_identical_subclass_test(cache, sample, &p.train, k).map_err(|e| e.to_string())
                        }
                        (_, Some(Err(e))) => Err(e.clone()),
                        _ => Err("no superclass setting".into()),
                    }
                }
                TestKind::NormAnalysis => match norm_analysis(cache, self.sample) {
                    Ok((a, degenerate)) => {
                        let o = TestOutcome {
                            value: a.mean_selected_percentile(),
                            degenerate,
                            evaluated: a.selected.len(),
                        };
                        norm = Some(a);
                        Ok(o)
                    }
                    Err(e) => Err(e.to_string()),
                },
                TestKind::ResidualAnalysis => unreachable!(),
            };
            out.push((test, res, norm));
        }
        out
    }

    fn randomization(&self, metric: MetricId, cache: &MetricCache) -> CellResult {
        let ctx = self.rand_ctx.ok_or("no randomized model")?;
        let other = ctx.precompute(metric).map_err(|e| e.to_string())?;
        model_randomization_test(cache, &other, self.sample).map_err(|e| e.to_string())
    }
}
