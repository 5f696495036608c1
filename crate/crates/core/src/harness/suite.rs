use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CceError, Result};
use crate::explainer::{cce_explain, cce_univariate, css_ranking, ConceptRanking, OptimConfig};
use crate::numerics::RngState;
use crate::scenarios::{collect_ood_mistakes, generate_world, ScenarioSpec, ScenarioWorld};

use super::metrics::{precision_from_ranks, stats_from_ranks};

/// Largest K reported by the summaries.
pub const MAX_K: usize = 10;
const RANDOM_STREAM: u64 = 0x5241_4e44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cce,
    CceUnivariate,
    Css,
    Random,
    Control,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cce, Method::CceUnivariate, Method::Css, Method::Random, Method::Control];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cce => "cce",
            Method::CceUnivariate => "cce_univariate",
            Method::Css => "css",
            Method::Random => "random",
            Method::Control => "control",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CceError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CceError::invalid(format!("unknown method {s:?}")))
    }
}

/// Rankings stored as index lists into a shared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSet {
    pub vocabulary: Vec<String>,
    pub rankings: Vec<Vec<u32>>,
}

impl RankingSet {
    fn new(vocabulary: Vec<String>, rankings: &[ConceptRanking]) -> Self {
        let rankings = rankings
            .iter()
            .map(|r| r.order.iter().map(|&i| i as u32).collect())
            .collect();
        RankingSet { vocabulary, rankings }
    }

    pub fn names(&self) -> Vec<Vec<String>> {
        self.rankings
            .iter()
            .map(|r| r.iter().map(|&i| self.vocabulary[i as usize].clone()).collect())
            .collect()
    }

    /// 1-based rank of `target` in every ranking.
    pub fn target_ranks(&self, target: &str) -> Result<Vec<usize>> {
        let missing = || CceError::InvalidTarget(format!("{target} is not in the ranked vocabulary"));
        let idx = self.vocabulary.iter().position(|n| n == target).ok_or_else(missing)? as u32;
        self.rankings
            .iter()
            .map(|r| r.iter().position(|&i| i == idx).map(|p| p + 1).ok_or_else(missing))
            .collect()
    }
}

/// Everything needed to rebuild a summary without rerunning scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario: usize,
    pub spec: ScenarioSpec,
    pub target: String,
    pub n_mistakes: usize,
    pub rankings: BTreeMap<Method, RankingSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub config: OptimConfig,
    pub methods: Vec<Method>,
    pub scenarios: Vec<ScenarioRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    /// Entry `k - 1` is Precision@k.
    pub precision_at_k: Vec<f64>,
    pub median_rank: f64,
    pub q1_rank: f64,
    pub q3_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEval {
    pub scenario: usize,
    pub seed: u64,
    pub target: String,
    pub n_mistakes: usize,
    /// `None` for vacuous scenarios.
    pub metrics: Option<ScenarioMetrics>,
}

/// Means over the non-vacuous scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenarios_used: usize,
    pub mean_precision_at_k: Vec<f64>,
    pub mean_median_rank: f64,
    pub mean_q1_rank: f64,
    pub mean_q3_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub scenarios: Vec<ScenarioEval>,
    pub aggregate: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub methods: Vec<MethodSummary>,
    /// Scenarios without any mistake to explain.
    pub vacuous: Vec<usize>,
    pub warnings: Vec<String>,
}

impl EvalSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Aggregate Precision@k of `m`, if it has any non-vacuous scenario.
    pub fn precision(&self, m: Method, k: usize) -> Option<f64> {
        let agg = self.method(m)?.aggregate.as_ref()?;
        agg.mean_precision_at_k.get(k.checked_sub(1)?).copied()
    }

    /// Tab-separated table: one row per method.
    pub fn to_table(&self) -> String {
        let mut out = String::from("method\tscenarios\tprec@1\tprec@3\tprec@5\tprec@10\tmedian_rank\tq1_rank\tq3_rank\n");
        for s in &self.methods {
            match &s.aggregate {
                Some(a) => {
                    let p = &a.mean_precision_at_k;
                    out.push_str(&format!(
                        "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.3}\t{:.3}\t{:.3}\n",
                        s.method, a.scenarios_used, p[0], p[2], p[4], p[9], a.mean_median_rank, a.mean_q1_rank, a.mean_q3_rank
                    ));
                }
                None => out.push_str(&format!("{}\t0\t-\t-\t-\t-\t-\t-\t-\n", s.method)),
            }
        }
        out
    }
}

/// `n` scenarios derived from `base`: seeds `base.seed + i`, with the
/// confounded class and concept varying across scenarios.
pub fn suite_specs(base: &ScenarioSpec, n: usize) -> Vec<ScenarioSpec> {
    (0..n)
        .map(|i| ScenarioSpec {
            seed: base.seed.wrapping_add(i as u64),
            confounded_class: (base.confounded_class + i) % base.num_classes,
            confounded_concept: (base.confounded_concept + 37 * i) % base.num_concepts,
            ..base.clone()
        })
        .collect()
}

fn rank_world(world: &ScenarioWorld, method: Method, cfg: &OptimConfig, control: Option<&ScenarioWorld>) -> Result<Vec<ConceptRanking>> {
    let mistakes = collect_ood_mistakes(world);
    let bank = &world.bank;
    let head = &world.trained_head;
    match method {
        Method::Cce => mistakes.iter().map(|(e, y)| Ok(cce_explain(e, *y, head, bank, cfg)?.ranking)).collect(),
        Method::CceUnivariate => mistakes.iter().map(|(e, y)| cce_univariate(e, *y, head, bank)).collect(),
        Method::Css => mistakes.iter().map(|(e, y)| css_ranking(e, *y, head, bank)).collect(),
        Method::Random => {
            let mut rng = RngState::new(world.spec().seed).derive(RANDOM_STREAM);
            Ok(mistakes
                .iter()
                .map(|_| {
                    let mut order: Vec<usize> = (0..bank.len()).collect();
                    rng.shuffle(&mut order);
                    let n = bank.len();
                    let mut scores = vec![0.0; n];
                    for (pos, &i) in order.iter().enumerate() {
                        scores[i] = (n - pos) as f64;
                    }
                    ConceptRanking {
                        names: bank.names().into_iter().map(String::from).collect(),
                        scores,
                        order,
                    }
                })
                .collect())
        }
        Method::Control => {
            let control = control.expect("control world prepared by caller");
            let head = &control.trained_head;
            mistakes.iter().map(|(e, y)| Ok(cce_explain(e, *y, head, bank, cfg)?.ranking)).collect()
        }
    }
}

fn record_scenario(index: usize, spec: &ScenarioSpec, methods: &[Method], cfg: &OptimConfig) -> Result<ScenarioRecord> {
    let world = generate_world(spec)?;
    let control = if methods.contains(&Method::Control) {
        Some(world.control()?)
    } else {
        None
    };
    let vocabulary: Vec<String> = world.bank.names().into_iter().map(String::from).collect();
    let mut rankings = BTreeMap::new();
    for &m in methods {
        let r = rank_world(&world, m, cfg, control.as_ref())?;
        rankings.insert(m, RankingSet::new(vocabulary.clone(), &r));
    }
    Ok(ScenarioRecord {
        scenario: index,
        spec: spec.clone(),
        target: world.target_concept().to_string(),
        n_mistakes: collect_ood_mistakes(&world).len(),
        rankings,
    })
}

/// Generates every scenario (in parallel) and stores all rankings.
pub fn record_suite(specs: &[ScenarioSpec], methods: &[Method], cfg: &OptimConfig) -> Result<SuiteRecord> {
    if specs.is_empty() {
        return Err(CceError::invalid("the suite needs at least one scenario"));
    }
    if methods.is_empty() {
        return Err(CceError::invalid("the suite needs at least one method"));
    }
    cfg.validate()?;
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let scenarios = specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| record_scenario(i, s, &methods, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteRecord {
        config: *cfg,
        methods,
        scenarios,
    })
}

/// Scores a recorded suite. Pure function of the record.
pub fn summarize(record: &SuiteRecord) -> Result<EvalSummary> {
    let mut warnings = Vec::new();
    let vacuous: Vec<usize> = record
        .scenarios
        .iter()
        .filter(|s| s.n_mistakes == 0)
        .map(|s| s.scenario)
        .collect();
    for &v in &vacuous {
        warnings.push(format!("scenario {v} has no misclassified samples and is excluded"));
    }
    let mut methods = Vec::new();
    for &m in &record.methods {
        let mut evals = Vec::new();
        for s in &record.scenarios {
            let set = s
                .rankings
                .get(&m)
                .ok_or_else(|| CceError::Format(format!("scenario {} lacks {m} rankings", s.scenario)))?;
            let metrics = if s.n_mistakes == 0 {
                None
            } else {
                let ranks = set.target_ranks(&s.target)?;
                let stats = stats_from_ranks(&ranks);
                Some(ScenarioMetrics {
                    precision_at_k: (1..=MAX_K).map(|k| precision_from_ranks(&ranks, k)).collect(),
                    median_rank: stats.median,
                    q1_rank: stats.q1,
                    q3_rank: stats.q3,
                })
            };
            evals.push(ScenarioEval {
                scenario: s.scenario,
                seed: s.spec.seed,
                target: s.target.clone(),
                n_mistakes: s.n_mistakes,
                metrics,
            });
        }
        methods.push(MethodSummary {
            method: m,
            aggregate: aggregate(&evals),
            scenarios: evals,
        });
    }
    Ok(EvalSummary {
        methods,
        vacuous,
        warnings,
    })
}

fn aggregate(evals: &[ScenarioEval]) -> Option<Aggregate> {
    let used: Vec<&ScenarioMetrics> = evals.iter().filter_map(|e| e.metrics.as_ref()).collect();
    if used.is_empty() {
        return None;
    }
    let n = used.len() as f64;
    let mean = |f: &dyn Fn(&ScenarioMetrics) -> f64| used.iter().map(|m| f(m)).sum::<f64>() / n;
    Some(Aggregate {
        scenarios_used: used.len(),
        mean_precision_at_k: (0..MAX_K).map(|k| mean(&|m| m.precision_at_k[k])).collect(),
        mean_median_rank: mean(&|m| m.median_rank),
        mean_q1_rank: mean(&|m| m.q1_rank),
        mean_q3_rank: mean(&|m| m.q3_rank),
    })
}

pub fn run_suite(specs: &[ScenarioSpec], methods: &[Method], cfg: &OptimConfig) -> Result<EvalSummary> {
    summarize(&record_suite(specs, methods, cfg)?)
}

/// CCE results for one severity across a set of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub severity: f64,
    pub scenarios_used: usize,
    pub mean_median_rank: f64,
    pub mean_precision_at_3: f64,
}

/// Retrains each scenario's head at every severity (geometry, bank and
/// test samples fixed) and explains that head's own mistakes with CCE.
pub fn severity_sweep(specs: &[ScenarioSpec], severities: &[f64], cfg: &OptimConfig) -> Result<Vec<SweepPoint>> {
    if specs.is_empty() || severities.is_empty() {
        return Err(CceError::invalid("a sweep needs scenarios and severities"));
    }
    cfg.validate()?;
    // per scenario: per severity: Some((median, prec@3)) unless vacuous
    let per_scenario = specs
        .par_iter()
        .map(|spec| {
            let base = generate_world(spec)?;
            severities
                .iter()
                .map(|&sev| {
                    let world = base.with_severity(sev)?;
                    let rankings = rank_world(&world, Method::Cce, cfg, None)?;
                    if rankings.is_empty() {
                        return Ok(None);
                    }
                    let set = RankingSet::new(world.bank.names().into_iter().map(String::from).collect(), &rankings);
                    let ranks = set.target_ranks(world.target_concept())?;
                    Ok(Some((stats_from_ranks(&ranks).median, precision_from_ranks(&ranks, 3))))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(severities
        .iter()
        .enumerate()
        .map(|(j, &severity)| {
            let used: Vec<(f64, f64)> = per_scenario.iter().filter_map(|s| s[j]).collect();
            let n = used.len().max(1) as f64;
            SweepPoint {
                severity,
                scenarios_used: used.len(),
                mean_median_rank: used.iter().map(|u| u.0).sum::<f64>() / n,
                mean_precision_at_3: used.iter().map(|u| u.1).sum::<f64>() / n,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(order: Vec<usize>) -> ConceptRanking {
        let n = order.len();
        ConceptRanking {
            names: (0..n).map(|i| format!("c{i}")).collect(),
            scores: vec![0.0; n],
            order,
        }
    }

    fn record(n_mistakes: usize, orders: Vec<Vec<usize>>) -> ScenarioRecord {
        let vocab: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let rs: Vec<ConceptRanking> = orders.into_iter().map(ranking).collect();
        let mut rankings = BTreeMap::new();
        rankings.insert(Method::Cce, RankingSet::new(vocab, &rs));
        ScenarioRecord {
            scenario: 0,
            spec: ScenarioSpec::default(),
            target: "c2".into(),
            n_mistakes,
            rankings,
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn summary_of_hand_record() {
        let mut a = record(2, vec![vec![2, 0, 1, 3], vec![0, 1, 3, 2]]);
        let mut b = record(0, vec![]);
        b.scenario = 1;
        a.scenario = 0;
        let rec = SuiteRecord {
            config: OptimConfig::default(),
            methods: vec![Method::Cce],
            scenarios: vec![a, b],
        };
        let s = summarize(&rec).unwrap();
        assert_eq!(s.vacuous, vec![1]);
        assert_eq!(s.warnings.len(), 1);
        let agg = s.method(Method::Cce).unwrap().aggregate.clone().unwrap();
        assert_eq!(agg.scenarios_used, 1);
        assert_eq!(agg.mean_precision_at_k[0], 0.5);
        assert_eq!(agg.mean_precision_at_k[2], 0.5);
        assert_eq!(agg.mean_precision_at_k[3], 1.0);
        assert_eq!(agg.mean_median_rank, 2.5);
        assert_eq!(s.precision(Method::Cce, 4), Some(1.0));
        assert_eq!(s.precision(Method::Css, 4), None);
        assert!(s.to_table().starts_with("method\t"));
    }

    #[test]
    fn missing_target_is_invalid() {
        let mut a = record(1, vec![vec![0, 1, 2, 3]]);
        a.target = "zzz".into();
        let rec = SuiteRecord {
            config: OptimConfig::default(),
            methods: vec![Method::Cce],
            scenarios: vec![a],
        };
        assert!(matches!(summarize(&rec), Err(CceError::InvalidTarget(_))));
    }

    #[test]
    fn specs_vary_class_and_concept() {
        let s = suite_specs(&ScenarioSpec::default(), 6);
        assert_eq!(s[5].confounded_class, 0);
        assert_eq!(s[1].confounded_concept, 37);
        assert_eq!(s[3].seed, 3);
        assert!(record_suite(&[], &[Method::Cce], &OptimConfig::default()).is_err());
    }
}
