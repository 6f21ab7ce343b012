//! Resolution of settings into jobs, and the jobs themselves.

use std::time::Instant;

use rayon::prelude::*;
use rhm::analytics::{
    bifurcation, class_entropy_l2, grammatical_fraction, length_distribution_with,
    predicted_sample_complexity, topology_count,
};
use rhm::inside::{
    class_posterior, expected_class_entropy, inside_with, EntropySweep, InsideOptions,
    Representation,
};
use rhm::io::{grammar_to_json, load_dataset, read_grammar, write_dataset};
use rhm::learner::curve::replicate_seed;
use rhm::learner::{
    curve_p_star, learn_report, learning_curve, log_grid, rules_match, summarize, Discard,
    LearnerConfig, Whitening,
};
use rhm::snr::{empirical_snr, log_fit, Crossing, PStar};
use rhm::splits::SplitTables;
use rhm::{Example, Grammar, GrammarParams, SeedStream, StreamKind};
use serde_json::{json, Value};

use crate::config::{overlay, resolved_json, Failure, Repr, Settings, Source, WhiteningArg};
use crate::output::{float, opt_float, Out, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Gen,
    Sample,
    Parse,
    EntropySweep,
    Analytics,
    Learn,
    LearningCurve,
    Snr,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Gen => "gen",
            Kind::Sample => "sample",
            Kind::Parse => "parse",
            Kind::EntropySweep => "entropy-sweep",
            Kind::Analytics => "analytics",
            Kind::Learn => "learn",
            Kind::LearningCurve => "learning-curve",
            Kind::Snr => "snr",
        }
    }
}

/// Loads the config, resolves it, runs the job and writes the manifest.
pub fn execute(kind: Kind, flags: Settings) -> Result<(), Failure> {
    let start = Instant::now();
    let (src, file) = Source::load(flags.config.as_deref())?;
    let mut s = overlay(&file, &flags);
    if let Some(k) = &s.kind {
        if k != kind.name() {
            return Err(src.error(
                "kind",
                format!("config is for `{k}`, not `{}`", kind.name()),
            ));
        }
    }
    s.kind = Some(kind.name().to_string());
    s.derived_seeds = None;
    let dir = s
        .out
        .take()
        .ok_or_else(|| Failure::Config("`out`: an output directory is required".into()))?;
    let workers = match s.workers.take() {
        Some(0) => return Err(src.error("workers", "must be at least 1")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Experiment(format!("thread pool: {e}")))?;
    let job = pool.install(|| resolve(kind, &mut s, &src))?;
    let mut out = Out::create(dir)?;
    out.json("resolved_config.json", &resolved_json(&s))?;
    let result = pool.install(|| job.run(&mut out));
    let status = if result.is_ok() { "ok" } else { "failed" };
    out.manifest(kind.name(), workers, start.elapsed(), status)?;
    result
}

struct Curve {
    params: Vec<GrammarParams>,
    grid: Vec<u64>,
    seed: u64,
    threshold: f64,
}

enum Job {
    Gen(Grammar),
    Sample {
        grammar: Grammar,
        generated: bool,
        data: Vec<Example>,
    },
    Parse {
        grammar: Grammar,
        data: Vec<Example>,
        repr: Representation,
    },
    EntropySweep {
        sweeps: Vec<EntropySweep>,
        f_grid: Vec<f64>,
    },
    Analytics {
        depths: Vec<usize>,
        f_grid: Vec<f64>,
        complexity: Vec<GrammarParams>,
    },
    Learn {
        truth: Option<Grammar>,
        train: Vec<Example>,
        test: Option<Vec<Example>>,
        v: usize,
        depth: usize,
        cfg: LearnerConfig,
    },
    LearningCurve {
        curve: Curve,
        n_test: usize,
        replicates: usize,
        cfg: LearnerConfig,
    },
    Snr {
        curve: Curve,
        reference_factor: f64,
        thresholds: Vec<f64>,
    },
}

fn need<T: Clone>(src: &Source, x: &Option<T>, key: &str) -> Result<T, Failure> {
    x.clone()
        .ok_or_else(|| src.error(key, "required for this experiment"))
}

fn nonempty<T>(src: &Source, xs: &[T], key: &str) -> Result<(), Failure> {
    if xs.is_empty() {
        Err(src.error(key, "grid must not be empty"))
    } else {
        Ok(())
    }
}

fn fraction(src: &Source, x: f64, key: &str) -> Result<f64, Failure> {
    if x > 0.0 && x <= 1.0 {
        Ok(x)
    } else {
        Err(src.error(key, format!("must lie in (0, 1], got {x}")))
    }
}

/// Rule counts from `m2`/`m3`, `f_inverse_v`, or `f`/`f2`/`f3`.
fn rule_params(
    s: &mut Settings,
    src: &Source,
    v: usize,
    seed: u64,
) -> Result<GrammarParams, Failure> {
    let depth = need(src, &s.depth, "L")?;
    let p2 = *s.p2.get_or_insert(0.5);
    let by_fraction = s.f.is_some() || s.f2.is_some() || s.f3.is_some();
    let params = match (s.m2, s.m3) {
        (Some(_), Some(_)) if by_fraction || s.f_inverse_v == Some(true) => {
            return Err(src.error("m2", "set rule counts or fractions, not both"))
        }
        (Some(m2), Some(m3)) => GrammarParams::new(v, depth, m2, m3, seed),
        (Some(_), None) => return Err(src.error("m3", "m2 and m3 must be set together")),
        (None, Some(_)) => return Err(src.error("m2", "m2 and m3 must be set together")),
        (None, None) => {
            let (f2, f3) = if s.f_inverse_v == Some(true) {
                if by_fraction {
                    return Err(src.error("f_inverse_v", "conflicts with f, f2 or f3"));
                }
                (1.0 / v as f64, 1.0 / v as f64)
            } else {
                let f2 = s
                    .f2
                    .or(s.f)
                    .ok_or_else(|| src.error("f", "set m2 and m3, f, f2 and f3, or f_inverse_v"))?;
                let f3 =
                    s.f3.or(s.f)
                        .ok_or_else(|| src.error("f3", "set together with f2"))?;
                let key = |own: Option<f64>, name| if own.is_some() { name } else { "f" };
                (
                    fraction(src, f2, key(s.f2, "f2"))?,
                    fraction(src, f3, key(s.f3, "f3"))?,
                )
            };
            GrammarParams::from_fractions(v, depth, f2, f3, seed).map_err(|e| src.error("v", e))?
        }
    };
    if !(p2 > 0.0 && p2 < 1.0) {
        return Err(src.error("p2", "must lie in (0, 1)"));
    }
    let params = params.with_branching(p2);
    params.validate().map_err(|e| src.error("v", e))?;
    Ok(params)
}

/// The grammar file if given, otherwise one generated with `seed`.
fn grammar(s: &mut Settings, src: &Source, seed: u64) -> Result<(Grammar, bool), Failure> {
    if let Some(path) = s.grammar.clone() {
        let g = read_grammar(&path)
            .map_err(|e| src.error("grammar", format!("{}: {e}", path.display())))?;
        return Ok((g, false));
    }
    let v = need(src, &s.v, "v")?;
    let params = rule_params(s, src, v, seed)?;
    let g = Grammar::generate(&params).map_err(|e| Failure::Experiment(e.to_string()))?;
    Ok((g, true))
}

fn dataset(g: &Grammar, n: usize, seed: u64, kind: StreamKind) -> Result<Vec<Example>, Failure> {
    rhm::grammar::make_dataset(g, n, &SeedStream::new(seed, kind))
        .map_err(|e| Failure::Experiment(e.to_string()))
}

fn load_data(s: &Settings, src: &Source) -> Result<Option<Vec<Example>>, Failure> {
    let Some(path) = &s.data else { return Ok(None) };
    let data =
        load_dataset(path).map_err(|e| src.error("data", format!("{}: {e}", path.display())))?;
    match s.n {
        Some(n) if n > data.len() => {
            Err(src.error("n", format!("dataset has only {} sentences", data.len())))
        }
        Some(n) => Ok(Some(data[..n].to_vec())),
        None => Ok(Some(data)),
    }
}

fn representation(r: Repr) -> Representation {
    match r {
        Repr::Auto => Representation::Auto,
        Repr::Linear => Representation::Linear,
        Repr::Log => Representation::Log,
    }
}

fn learner_config(s: &mut Settings, src: &Source) -> Result<LearnerConfig, Failure> {
    let mut cfg = LearnerConfig::default();
    cfg.tau = *s.tau.get_or_insert(cfg.tau);
    if !(-1.0..=1.0).contains(&cfg.tau) {
        return Err(src.error("tau", "must lie in [-1, 1]"));
    }
    cfg.strict = *s.strict.get_or_insert(cfg.strict);
    cfg.whitening = match s.whitening.get_or_insert(WhiteningArg::Fitted) {
        WhiteningArg::InverseV => Whitening::InverseV,
        WhiteningArg::Fitted => Whitening::Fitted,
        WhiteningArg::Off => Whitening::Off,
    };
    if let Some(t) = s.discard {
        if !(t > 0.0) {
            return Err(src.error("discard", "must be positive"));
        }
        cfg.pair_discard = Discard::Absolute(t);
        cfg.triple_discard = Discard::Absolute(t);
    }
    Ok(cfg)
}

fn p_grid(s: &mut Settings, src: &Source, default: (u64, u64, usize)) -> Result<Vec<u64>, Failure> {
    let grid = match s.p_grid.clone() {
        Some(g) => g,
        None => {
            let lo = *s.p_min.get_or_insert(default.0);
            let hi = *s.p_max.get_or_insert(default.1);
            let n = *s.p_points.get_or_insert(default.2);
            if lo == 0 || hi < lo {
                return Err(src.error("p_min", "need 0 < p_min <= p_max"));
            }
            log_grid(lo, hi, n)
        }
    };
    nonempty(src, &grid, "p_grid")?;
    if grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(src.error("p_grid", "must be positive and strictly increasing"));
    }
    s.p_grid = Some(grid.clone());
    (s.p_min, s.p_max, s.p_points) = (None, None, None);
    Ok(grid)
}

/// Grammar parameters per `v` of a matched sweep, seeded as replicate 0.
fn sweep_params(s: &mut Settings, src: &Source, seed: u64) -> Result<Vec<GrammarParams>, Failure> {
    let v_grid = match (&s.v_grid, s.v) {
        (Some(g), _) => g.clone(),
        (None, Some(v)) => vec![v],
        (None, None) => vec![8, 12, 16],
    };
    nonempty(src, &v_grid, "v_grid")?;
    s.v_grid = Some(v_grid.clone());
    s.v = None;
    s.depth.get_or_insert(2);
    let any_rules =
        s.m2.is_some() || s.m3.is_some() || s.f.is_some() || s.f2.is_some() || s.f3.is_some();
    if !any_rules {
        s.f_inverse_v.get_or_insert(true);
    }
    v_grid
        .iter()
        .map(|&v| rule_params(s, src, v, replicate_seed(seed, 0)))
        .collect()
}

fn threshold(s: &mut Settings, src: &Source) -> Result<f64, Failure> {
    let t = *s.threshold.get_or_insert(0.5);
    if t > 0.0 {
        Ok(t)
    } else {
        Err(src.error("threshold", "must be positive"))
    }
}

fn resolve(kind: Kind, s: &mut Settings, src: &Source) -> Result<Job, Failure> {
    match kind {
        Kind::Gen => {
            let seed = *s.seed.get_or_insert(0);
            let (g, _) = grammar(s, src, seed)?;
            if s.grammar.is_some() {
                return Err(src.error("grammar", "`gen` generates a grammar; drop the input file"));
            }
            s.derived_seeds = Some(json!({ "grammar": seed }));
            Ok(Job::Gen(g))
        }
        Kind::Sample => {
            let seed = *s.seed.get_or_insert(0);
            let n = need(src, &s.n, "n")?;
            let (g, generated) = grammar(s, src, seed)?;
            s.derived_seeds =
                Some(json!({ "grammar": generated.then_some(seed), "data_stream": seed }));
            let data = dataset(&g, n, seed, StreamKind::Data)?;
            Ok(Job::Sample {
                grammar: g,
                generated,
                data,
            })
        }
        Kind::Parse => {
            let seed = *s.seed.get_or_insert(0);
            let (g, generated) = grammar(s, src, seed)?;
            let repr = representation(*s.representation.get_or_insert(Repr::Auto));
            let data = match load_data(s, src)? {
                Some(d) => d,
                None => dataset(&g, need(src, &s.n, "n")?, seed, StreamKind::Data)?,
            };
            s.derived_seeds = Some(json!({
                "grammar": generated.then_some(seed),
                "data_stream": s.data.is_none().then_some(seed),
            }));
            Ok(Job::Parse {
                grammar: g,
                data,
                repr,
            })
        }
        Kind::EntropySweep => {
            let seed = *s.seed.get_or_insert(0);
            let v = need(src, &s.v, "v")?;
            let depths = s.l_grid.get_or_insert_with(|| vec![2, 3, 4]).clone();
            let f_grid = s
                .f_grid
                .get_or_insert_with(|| (1..=9).map(|k| k as f64 / 10.0).collect())
                .clone();
            nonempty(src, &depths, "l_grid")?;
            nonempty(src, &f_grid, "f_grid")?;
            for &f in &f_grid {
                fraction(src, f, "f_grid")?;
            }
            if depths.contains(&0) {
                return Err(src.error("l_grid", "depths must be positive"));
            }
            let n_grammars = *s.grammars.get_or_insert(100);
            let n_sentences = *s.sentences.get_or_insert(20);
            let p2 = *s.p2.get_or_insert(0.5);
            let repr = representation(*s.representation.get_or_insert(Repr::Auto));
            let master = SeedStream::new(seed, StreamKind::Experiment);
            let sweeps: Vec<EntropySweep> = depths
                .iter()
                .map(|&depth| EntropySweep {
                    v,
                    depth,
                    p2,
                    n_grammars,
                    n_sentences,
                    seed: master.derive(depth as u64),
                    representation: repr,
                })
                .collect();
            let seeds: Vec<Value> = sweeps
                .iter()
                .map(|w| json!({ "L": w.depth, "sweep_seed": w.seed }))
                .collect();
            s.derived_seeds = Some(Value::Array(seeds));
            Ok(Job::EntropySweep { sweeps, f_grid })
        }
        Kind::Analytics => {
            let depths = match (&s.l_grid, s.depth) {
                (Some(g), _) => g.clone(),
                (None, Some(l)) => vec![l],
                (None, None) => vec![2, 3, 4],
            };
            s.l_grid = Some(depths.clone());
            s.depth = None;
            let f_grid = s
                .f_grid
                .get_or_insert_with(|| (1..=19).map(|k| k as f64 / 20.0).collect())
                .clone();
            let v_grid = s
                .v_grid
                .get_or_insert_with(|| vec![8, 12, 16, 24, 32])
                .clone();
            nonempty(src, &depths, "l_grid")?;
            nonempty(src, &f_grid, "f_grid")?;
            if depths.contains(&0) {
                return Err(src.error("l_grid", "depths must be positive"));
            }
            for &f in &f_grid {
                fraction(src, f, "f_grid")?;
            }
            let mut complexity = Vec::new();
            for &depth in &depths {
                for &v in &v_grid {
                    s.depth = Some(depth);
                    if s.f.is_none() && s.f2.is_none() && s.m2.is_none() {
                        s.f_inverse_v.get_or_insert(true);
                    }
                    complexity.push(rule_params(s, src, v, 0)?);
                }
            }
            s.depth = None;
            Ok(Job::Analytics {
                depths,
                f_grid,
                complexity,
            })
        }
        Kind::Learn => {
            let seed = *s.seed.get_or_insert(0);
            let cfg = learner_config(s, src)?;
            let loaded = load_data(s, src)?;
            let (truth, train, generated) = match loaded {
                Some(train) => {
                    let truth = match s.grammar.clone() {
                        Some(_) => Some(grammar(s, src, seed)?.0),
                        None => None,
                    };
                    (truth, train, false)
                }
                None => {
                    let n = need(src, &s.n, "n")?;
                    let (g, generated) = grammar(s, src, seed)?;
                    let train = dataset(&g, n, seed, StreamKind::Data)?;
                    (Some(g), train, generated)
                }
            };
            let (v, depth) = match &truth {
                Some(g) => (g.v(), g.depth()),
                None => (need(src, &s.v, "v")?, need(src, &s.depth, "L")?),
            };
            let test = match &truth {
                Some(g) => Some(dataset(
                    g,
                    *s.n_test.get_or_insert(10_000),
                    seed,
                    StreamKind::Test,
                )?),
                None => None,
            };
            s.derived_seeds = Some(json!({
                "grammar": generated.then_some(seed),
                "data_stream": s.data.is_none().then_some(seed),
                "test_stream": test.is_some().then_some(seed),
            }));
            Ok(Job::Learn {
                truth,
                train,
                test,
                v,
                depth,
                cfg,
            })
        }
        Kind::LearningCurve => {
            let seed = *s.seed.get_or_insert(0);
            let cfg = learner_config(s, src)?;
            let grid = p_grid(s, src, (250, 64_000, 17))?;
            let params = sweep_params(s, src, seed)?;
            let threshold = threshold(s, src)?;
            let n_test = *s.n_test.get_or_insert(4000);
            let replicates = *s.replicates.get_or_insert(10);
            if replicates == 0 || n_test == 0 {
                return Err(src.error("replicates", "replicates and n_test must be positive"));
            }
            let seeds: Vec<u64> = (0..replicates).map(|r| replicate_seed(seed, r)).collect();
            s.derived_seeds = Some(json!({ "replicate_grammars": seeds }));
            Ok(Job::LearningCurve {
                curve: Curve {
                    params,
                    grid,
                    seed,
                    threshold,
                },
                n_test,
                replicates,
                cfg,
            })
        }
        Kind::Snr => {
            let seed = *s.seed.get_or_insert(0);
            let grid = p_grid(s, src, (250, 256_000, 11))?;
            let params = sweep_params(s, src, seed)?;
            let threshold = threshold(s, src)?;
            let reference_factor = *s.reference_factor.get_or_insert(100.0);
            if !(reference_factor >= 1.0) {
                return Err(src.error("reference_factor", "must be at least 1"));
            }
            let thresholds = s
                .thresholds
                .get_or_insert_with(|| vec![0.25, 0.5, 1.0])
                .clone();
            s.derived_seeds = Some(json!({ "grammar": replicate_seed(seed, 0) }));
            Ok(Job::Snr {
                curve: Curve {
                    params,
                    grid,
                    seed,
                    threshold,
                },
                reference_factor,
                thresholds,
            })
        }
    }
}

fn p_star_json(p: &PStar) -> Value {
    json!({
        "threshold": p.threshold,
        "p_star": p.p_star,
        "crossing": p.crossing,
        "below_grid": p.crossing == Crossing::BelowGrid,
        "above_grid": p.crossing == Crossing::AboveGrid,
    })
}

/// Slope of `ln P*` against `ln v` over the curves crossing inside the grid.
fn scaling_slope(rows: &[(usize, PStar)]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, p)| p.crossing == Crossing::Within)
        .filter_map(|(v, p)| p.p_star.map(|x| ((*v as f64).ln(), x.ln())))
        .collect();
    (xy.len() >= 2).then(|| log_fit(&xy).0)
}

fn experiment_error(e: impl std::fmt::Display) -> Failure {
    Failure::Experiment(e.to_string())
}

impl Job {
    fn run(self, out: &mut Out) -> Result<(), Failure> {
        match self {
            Job::Gen(g) => out.write("grammar.json", grammar_to_json(&g).as_bytes()),
            Job::Sample {
                grammar,
                generated,
                data,
            } => {
                if generated {
                    out.write("grammar.json", grammar_to_json(&grammar).as_bytes())?;
                }
                let mut buf = Vec::new();
                write_dataset(&mut buf, &data).map_err(experiment_error)?;
                out.write("dataset.tsv", &buf)
            }
            Job::Parse {
                grammar,
                data,
                repr,
            } => run_parse(out, &grammar, &data, repr),
            Job::EntropySweep { sweeps, f_grid } => {
                let mut t = Table::new(&["f", "L", "mean", "stderr", "n_samples", "analytic_l2"]);
                for sweep in &sweeps {
                    let points =
                        expected_class_entropy(sweep, &f_grid).map_err(experiment_error)?;
                    for p in points {
                        let analytic =
                            (p.depth == 2).then(|| class_entropy_l2(p.f) / (sweep.v as f64).ln());
                        t.push(vec![
                            float(p.f),
                            p.depth.to_string(),
                            float(p.mean),
                            float(p.stderr),
                            p.n_samples.to_string(),
                            opt_float(analytic),
                        ]);
                    }
                }
                out.csv("entropy.csv", &t)
            }
            Job::Analytics {
                depths,
                f_grid,
                complexity,
            } => run_analytics(out, &depths, &f_grid, &complexity),
            Job::Learn {
                truth,
                train,
                test,
                v,
                depth,
                cfg,
            } => run_learn(out, truth.as_ref(), &train, test.as_deref(), v, depth, &cfg),
            Job::LearningCurve {
                curve,
                n_test,
                replicates,
                cfg,
            } => {
                let mut rows = Vec::new();
                let mut per_v = Vec::new();
                for params in &curve.params {
                    let points =
                        learning_curve(params, &curve.grid, n_test, replicates, curve.seed, &cfg)
                            .map_err(experiment_error)?;
                    let summary = summarize(&points);
                    let mut t = Table::new(&[
                        "P",
                        "normalized_loss",
                        "accuracy",
                        "abstain_rate",
                        "recovery_flag",
                        "recovery_rate",
                        "failures",
                        "replicates",
                    ]);
                    for r in &summary {
                        t.push(vec![
                            r.p.to_string(),
                            float(r.normalized_loss),
                            float(r.accuracy),
                            float(r.abstain_rate),
                            u8::from(r.recovery_rate == 1.0).to_string(),
                            float(r.recovery_rate),
                            r.failures.to_string(),
                            r.replicates.to_string(),
                        ]);
                    }
                    out.csv(&format!("curve_v{}.csv", params.v), &t)?;
                    let mut t = Table::new(&[
                        "P",
                        "replicate",
                        "grammar_seed",
                        "normalized_loss",
                        "accuracy",
                        "abstain_rate",
                        "recovered",
                        "failure",
                    ]);
                    for q in &points {
                        t.push(vec![
                            q.p.to_string(),
                            q.replicate.to_string(),
                            q.grammar_seed.to_string(),
                            float(q.metrics.normalized_loss),
                            float(q.metrics.accuracy),
                            float(q.metrics.abstain_rate),
                            u8::from(q.recovered).to_string(),
                            q.failure.clone().unwrap_or_default(),
                        ]);
                    }
                    out.csv(&format!("points_v{}.csv", params.v), &t)?;
                    let p = curve_p_star(&summary, curve.threshold);
                    let predicted = predicted_sample_complexity(
                        params.v,
                        params.m2,
                        params.m3,
                        params.depth,
                        params.p2,
                    );
                    per_v.push(json!({
                        "v": params.v,
                        "m2": params.m2,
                        "m3": params.m3,
                        "predicted_scale": predicted,
                        "p_star": p_star_json(&p),
                    }));
                    rows.push((params.v, p));
                }
                out.json("p_star.json", &json!({ "threshold": curve.threshold, "slope": scaling_slope(&rows), "curves": per_v }))
            }
            Job::Snr {
                curve,
                reference_factor,
                thresholds,
            } => {
                let mut rows = Vec::new();
                for params in &curve.params {
                    let g = Grammar::generate(params).map_err(experiment_error)?;
                    let c = empirical_snr(&g, &curve.grid, reference_factor, params.seed)
                        .map_err(experiment_error)?;
                    let mut t = Table::new(&[
                        "P",
                        "mean_inv_snr",
                        "stderr",
                        "n_triples_included",
                        "n_triples_excluded",
                    ]);
                    for p in &c.points {
                        t.push(vec![
                            p.p.to_string(),
                            float(p.mean_inv_snr),
                            float(p.stderr),
                            p.n_triples_included.to_string(),
                            p.n_triples_excluded.to_string(),
                        ]);
                    }
                    out.csv(&format!("snr_v{}.csv", params.v), &t)?;
                    let p = c.p_star(curve.threshold);
                    let mut summary = p_star_json(&p);
                    let sensitivity: Vec<Value> = thresholds
                        .iter()
                        .map(|&t| p_star_json(&c.p_star(t)))
                        .collect();
                    let extra = json!({
                        "v": params.v,
                        "m2": params.m2,
                        "m3": params.m3,
                        "grammar_seed": params.seed,
                        "anchor": c.anchor,
                        "n_reference": c.n_reference,
                        "n_unseen_reference": c.n_unseen_reference,
                        "n_uniform_reference": c.n_uniform_reference,
                        "log_slope": c.log_slope(),
                        "sensitivity": sensitivity,
                    });
                    if let (Value::Object(m), Value::Object(e)) = (&mut summary, extra) {
                        m.extend(e);
                    }
                    out.json(&format!("snr_v{}.json", params.v), &summary)?;
                    rows.push((params.v, p));
                }
                out.json(
                    "p_star.json",
                    &json!({ "threshold": curve.threshold, "slope": scaling_slope(&rows) }),
                )
            }
        }
    }
}

fn run_parse(
    out: &mut Out,
    g: &Grammar,
    data: &[Example],
    repr: Representation,
) -> Result<(), Failure> {
    let splits = SplitTables::new(g.depth());
    let opts = InsideOptions {
        representation: repr,
        ..InsideOptions::default()
    };
    let ln_v = (g.v() as f64).ln();
    let rows: Vec<Vec<String>> = data
        .par_iter()
        .enumerate()
        .map(|(k, ex)| {
            let post = inside_with(g, &ex.tokens, &splits, opts)
                .ok()
                .and_then(|c| class_posterior(&c));
            let (n, h, ll) = match &post {
                Some(p) => (p.n_support(), p.entropy(), p.log_likelihood),
                None => (0, f64::NAN, f64::NEG_INFINITY),
            };
            vec![
                k.to_string(),
                ex.label.to_string(),
                ex.tokens.len().to_string(),
                n.to_string(),
                float(h),
                float(h / ln_v),
                float(ll),
            ]
        })
        .collect();
    let mut t = Table::new(&[
        "index",
        "label",
        "d",
        "n_root_labels",
        "entropy",
        "normalized_entropy",
        "loglik",
    ]);
    rows.into_iter().for_each(|r| t.push(r));
    out.csv("parse.csv", &t)
}

fn run_analytics(
    out: &mut Out,
    depths: &[usize],
    f_grid: &[f64],
    complexity: &[GrammarParams],
) -> Result<(), Failure> {
    let mut lengths = Table::new(&["L", "d", "P"]);
    let mut topo = Table::new(&["L", "d", "N_t"]);
    let mut frac = Table::new(&["L", "f", "d", "F", "ln_F"]);
    for &depth in depths {
        for (d, p) in length_distribution_with(depth, 0.5).iter() {
            lengths.push(vec![depth.to_string(), d.to_string(), float(p)]);
        }
        let table = topology_count(depth).map_err(experiment_error)?;
        for (d, n) in table.iter() {
            topo.push(vec![depth.to_string(), d.to_string(), n.to_string()]);
        }
        for &f in f_grid {
            let ft = grammatical_fraction(depth, f).map_err(experiment_error)?;
            for (d, _) in table.iter() {
                frac.push(vec![
                    depth.to_string(),
                    float(f),
                    d.to_string(),
                    float(ft.fraction(d)),
                    float(ft.ln_fraction(d)),
                ]);
            }
        }
    }
    let mut entropy = Table::new(&["f", "H2"]);
    let mut bif = Table::new(&["f", "corrected", "verdict", "level", "n_final"]);
    for &f in f_grid {
        entropy.push(vec![float(f), float(class_entropy_l2(f))]);
        for corrected in [false, true] {
            let b = bifurcation(f, f, corrected).map_err(experiment_error)?;
            bif.push(vec![
                float(f),
                u8::from(corrected).to_string(),
                b.verdict.as_str().to_string(),
                b.level.to_string(),
                float(b.n_final),
            ]);
        }
    }
    let mut scale = Table::new(&["v", "L", "m2", "m3", "p2", "P_star"]);
    for p in complexity {
        scale.push(vec![
            p.v.to_string(),
            p.depth.to_string(),
            p.m2.to_string(),
            p.m3.to_string(),
            float(p.p2),
            float(predicted_sample_complexity(p.v, p.m2, p.m3, p.depth, p.p2)),
        ]);
    }
    out.csv("length_distribution.csv", &lengths)?;
    out.csv("topology_count.csv", &topo)?;
    out.csv("grammatical_fraction.csv", &frac)?;
    out.csv("class_entropy_l2.csv", &entropy)?;
    out.csv("bifurcation.csv", &bif)?;
    out.csv("sample_complexity.csv", &scale)
}

fn run_learn(
    out: &mut Out,
    truth: Option<&Grammar>,
    train: &[Example],
    test: Option<&[Example]>,
    v: usize,
    depth: usize,
    cfg: &LearnerConfig,
) -> Result<(), Failure> {
    let report = learn_report(train, v, depth, cfg);
    let levels: Vec<Value> = report
        .binary
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let t = report.ternary.get(k);
            json!({
                "level": depth - k,
                "n_binary": b.items.len(),
                "binary_threshold": b.threshold,
                "n_ternary": t.map(|t| t.items.len()),
                "ternary_threshold": t.map(|t| t.threshold),
            })
        })
        .collect();
    let learned = report.grammar.as_ref();
    let failure = report.failure.as_ref().map(|(level, f)| json!({ "level": level, "reason": f.reason, "norms": f.norms, "similarities": f.similarities }));
    let metrics = json!({
        "P": train.len(),
        "v": v,
        "L": depth,
        "learner": cfg,
        "train": learned.map(|g| g.evaluate(train)),
        "test": learned.zip(test).map(|(g, t)| g.evaluate(t)),
        "recovered": learned.zip(truth).map(|(g, t)| rules_match(g.levels(), t)),
        "levels": levels,
        "failure": failure,
    });
    if let Some(g) = learned {
        out.write("learned.json", g.to_json().as_bytes())?;
    }
    out.json("metrics.json", &metrics)?;
    match report.failure {
        Some((level, f)) => Err(Failure::Experiment(format!(
            "rule inference failed at level {level}: {}",
            f.reason
        ))),
        None => Ok(()),
    }
}
