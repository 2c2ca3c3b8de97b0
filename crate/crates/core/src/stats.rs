//! Bootstrap confidence intervals and test-set stratification.
//!
//! # Resampling scheme
//!
//! Resample `b` (0-based) of a population of size `n` is drawn from a
//! ChaCha8 stream: the key comes from `ChaCha8Rng::seed_from_u64(seed)`
//! (rand_chacha 0.3 / rand_core 0.6), the stream number is `b`, and the
//! `n` indices are drawn in order, each from successive `next_u64` outputs
//! `x` as `x % n`, rejecting `x >= 2^64 - (2^64 mod n)`. Because every
//! resample owns its stream, serial and parallel evaluation agree bit for
//! bit.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::labeler::{ObservationClass, ObservationLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_samples: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_samples: 500,
            ci_level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("bootstrap.n_samples must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config("bootstrap.ci_level must lie strictly between 0 and 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    /// Metric on the full (unresampled) population.
    pub point: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Population size.
    pub n: usize,
    pub n_resamples: usize,
    pub n_skipped: usize,
}

/// Indices of resample `resample` of a population of size `n`.
pub fn resample_indices(n: usize, seed: u64, resample: u64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(resample);
    let n64 = n as u64;
    // largest multiple of n that fits in 2^64, as an exclusive bound
    let zone = u64::MAX - (u64::MAX % n64 + 1) % n64;
    (0..n)
        .map(|_| loop {
            let x = rng.next_u64();
            if x <= zone {
                break (x % n64) as usize;
            }
        })
        .collect()
}

/// Percentile with linear interpolation between closest ranks of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(
    name: &str,
    point: Option<f64>,
    mut values: Vec<f64>,
    n: usize,
    config: &BootstrapConfig,
) -> Result<MetricSummary> {
    let point = point
        .filter(|p| p.is_finite())
        .ok_or_else(|| Error::Undefined(format!("{name} is undefined on the full sample")))?;
    let skipped = config.n_samples - values.len();
    if skipped * 10 > config.n_samples || values.is_empty() {
        return Err(Error::TooManySkipped {
            skipped,
            total: config.n_samples,
        });
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - config.ci_level) / 2.0;
    Ok(MetricSummary {
        name: name.to_string(),
        point,
        median: percentile(&values, 0.5),
        ci_low: percentile(&values, tail),
        ci_high: percentile(&values, 1.0 - tail),
        n,
        n_resamples: config.n_samples,
        n_skipped: skipped,
    })
}

/// Bootstraps several metrics over the same resamples.
///
/// `population` lists the corpus indices to resample from; `metrics`
/// receives the corpus indices of one resample (with repetition) and
/// returns one value per name, `None` where the metric is undefined.
pub fn bootstrap_many<F>(
    population: &[usize],
    names: &[String],
    metrics: F,
    config: &BootstrapConfig,
) -> Result<Vec<Result<MetricSummary>>>
where
    F: Fn(&[usize]) -> Vec<Option<f64>> + Sync,
{
    config.validate()?;
    if population.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = population.len();
    let point = metrics(population);
    check_arity(&point, names.len());

    let draws: Vec<Vec<Option<f64>>> = (0..config.n_samples as u64)
        .into_par_iter()
        .map(|b| {
            let sample: Vec<usize> = resample_indices(n, config.seed, b)
                .into_iter()
                .map(|i| population[i])
                .collect();
            let values = metrics(&sample);
            check_arity(&values, names.len());
            values
        })
        .collect();

    Ok(names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let values = draws
                .iter()
                .filter_map(|d| d[k].filter(|v| v.is_finite()))
                .collect();
            summarize(name, point[k], values, n, config)
        })
        .collect())
}

fn check_arity(values: &[Option<f64>], expected: usize) {
    assert_eq!(values.len(), expected, "metric function returned the wrong number of values");
}

/// Bootstraps one corpus-level metric. `metric` receives the indices of the
/// resampled pairs.
pub fn bootstrap<F>(corpus: &Corpus, name: &str, metric: F, config: &BootstrapConfig) -> Result<MetricSummary>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    let population: Vec<usize> = (0..corpus.len()).collect();
    let mut out = bootstrap_many(&population, &[name.to_string()], |idx| vec![metric(idx)], config)?;
    out.pop().expect("one metric")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StratumSpec {
    HasFinding,
    NoFinding,
    HasIndication,
    NoIndication,
    /// Studies whose reference mentions the class at all.
    PerClass(ObservationClass),
}

impl StratumSpec {
    /// The two finding strata followed by the two indication strata.
    pub const TABLE: [StratumSpec; 4] = [
        StratumSpec::HasFinding,
        StratumSpec::NoFinding,
        StratumSpec::HasIndication,
        StratumSpec::NoIndication,
    ];

    /// Parses a comma-separated list; `finding` and `indication` expand to
    /// both strata of the partition.
    pub fn parse_list(s: &str) -> Result<Vec<StratumSpec>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let specs: Vec<StratumSpec> = match part {
                "finding" => vec![StratumSpec::HasFinding, StratumSpec::NoFinding],
                "indication" => vec![StratumSpec::HasIndication, StratumSpec::NoIndication],
                other => vec![other.parse()?],
            };
            for spec in specs {
                if !out.contains(&spec) {
                    out.push(spec);
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for StratumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StratumSpec::HasFinding => f.write_str("has_finding"),
            StratumSpec::NoFinding => f.write_str("no_finding"),
            StratumSpec::HasIndication => f.write_str("has_indication"),
            StratumSpec::NoIndication => f.write_str("no_indication"),
            StratumSpec::PerClass(c) => write!(f, "class:{}", c.name()),
        }
    }
}

impl FromStr for StratumSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "has_finding" => Ok(StratumSpec::HasFinding),
            "no_finding" => Ok(StratumSpec::NoFinding),
            "has_indication" => Ok(StratumSpec::HasIndication),
            "no_indication" => Ok(StratumSpec::NoIndication),
            other => match other.strip_prefix("class:") {
                Some(name) => Ok(StratumSpec::PerClass(name.parse()?)),
                None => Err(Error::Config(format!(
                    "unknown stratum {other:?} (expected finding, indication, has_finding, \
                     no_finding, has_indication, no_indication or class:<name>)"
                ))),
            },
        }
    }
}

/// Positions of the pairs belonging to a stratum, in corpus order.
pub fn stratum_indices(corpus: &Corpus, spec: StratumSpec) -> Result<Vec<usize>> {
    let needs_labels = !matches!(spec, StratumSpec::HasIndication | StratumSpec::NoIndication);
    let mut out = Vec::new();
    for (i, pair) in corpus.pairs().iter().enumerate() {
        let keep = if needs_labels {
            let labels = pair.ref_labels.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "stratum {spec} needs reference labels, missing for study {:?}",
                    pair.study_id
                ))
            })?;
            let normal = labels.get(ObservationClass::NoFinding) == ObservationLabel::Positive;
            match spec {
                StratumSpec::HasFinding => !normal,
                StratumSpec::NoFinding => normal,
                StratumSpec::PerClass(c) => labels.get(c) != ObservationLabel::Blank,
                _ => unreachable!(),
            }
        } else {
            pair.has_indication() == (spec == StratumSpec::HasIndication)
        };
        if keep {
            out.push(i);
        }
    }
    Ok(out)
}

/// The sub-corpus of a stratum, preserving order.
pub fn stratify(corpus: &Corpus, spec: StratumSpec) -> Result<Corpus> {
    Ok(corpus.select(&stratum_indices(corpus, spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReportPair;
    use crate::labeler::LabelVector;
    use proptest::prelude::*;

    #[test]
    fn percentile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 1.0), 4.0);
        assert_eq!(percentile(&xs, 0.5), 2.5);
        assert!((percentile(&xs, 0.025) - 1.075).abs() < 1e-15);
        assert_eq!(percentile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn resample_indices_are_in_range_and_reproducible() {
        let a = resample_indices(7, 42, 3);
        assert_eq!(a.len(), 7);
        assert!(a.iter().all(|&i| i < 7));
        assert_eq!(a, resample_indices(7, 42, 3));
        assert_ne!(a, resample_indices(7, 42, 4));
        assert_ne!(a, resample_indices(7, 43, 3));
        assert!(resample_indices(0, 1, 0).is_empty());
    }

    fn corpus(n: usize) -> Corpus {
        Corpus::new((0..n).map(|i| ReportPair::new(format!("s{i:03}"), "gen", "ref")).collect()).unwrap()
    }

    #[test]
    fn constant_metric_has_zero_width() {
        let s = bootstrap(&corpus(5), "c", |_| Some(0.3), &BootstrapConfig::default()).unwrap();
        assert_eq!((s.point, s.median, s.ci_low, s.ci_high), (0.3, 0.3, 0.3, 0.3));
        assert_eq!(s.n, 5);
    }

    #[test]
    fn same_seed_same_summary() {
        let c = corpus(9);
        let metric = |idx: &[usize]| Some(idx.iter().map(|&i| i as f64).sum::<f64>() / idx.len() as f64);
        let cfg = BootstrapConfig { seed: 11, ..Default::default() };
        let a = bootstrap(&c, "mean", metric, &cfg).unwrap();
        let b = bootstrap(&c, "mean", metric, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.point, 4.0);
        assert!(a.ci_low <= a.median && a.median <= a.ci_high);
    }

    #[test]
    fn skipped_resamples() {
        let c = corpus(4);
        let cfg = BootstrapConfig { n_samples: 200, ..Default::default() };
        // undefined whenever study 0 is absent: (3/4)^4 ~ 32% of resamples
        let metric = |idx: &[usize]| idx.contains(&0).then_some(1.0);
        assert!(matches!(bootstrap(&c, "m", metric, &cfg), Err(Error::TooManySkipped { .. })));

        // undefined only when every draw is study 0: (1/4)^4 ~ 0.4%
        let metric = |idx: &[usize]| (!idx.iter().all(|&i| i == 0)).then_some(1.0);
        let s = bootstrap(&c, "m", metric, &cfg).unwrap();
        assert!(s.n_skipped < 20);

        let s = bootstrap(&c, "m", |idx| (idx.len() > 100).then_some(1.0), &cfg);
        assert!(matches!(s, Err(Error::Undefined(_))));
    }

    #[test]
    fn empty_corpus_and_bad_config() {
        let empty = Corpus::new(Vec::new()).unwrap();
        assert!(matches!(
            bootstrap(&empty, "m", |_| Some(1.0), &BootstrapConfig::default()),
            Err(Error::EmptyCorpus)
        ));
        let cfg = BootstrapConfig { n_samples: 0, ..Default::default() };
        assert!(bootstrap(&corpus(2), "m", |_| Some(1.0), &cfg).is_err());
        let cfg = BootstrapConfig { ci_level: 1.0, ..Default::default() };
        assert!(bootstrap(&corpus(2), "m", |_| Some(1.0), &cfg).is_err());
    }

    #[test]
    fn stratum_parsing() {
        assert_eq!(
            StratumSpec::parse_list("finding,indication").unwrap(),
            StratumSpec::TABLE.to_vec()
        );
        assert_eq!(
            "class:Pneumothorax".parse::<StratumSpec>().unwrap(),
            StratumSpec::PerClass(ObservationClass::Pneumothorax)
        );
        for s in StratumSpec::TABLE {
            assert_eq!(s.to_string().parse::<StratumSpec>().unwrap(), s);
        }
        assert!("findings".parse::<StratumSpec>().is_err());
    }

    fn labeled(id: &str, labels: LabelVector, indication: Option<&str>) -> ReportPair {
        let mut p = ReportPair::new(id, "g", "r");
        p.ref_labels = Some(labels);
        p.indication = indication.map(str::to_string);
        p
    }

    #[test]
    fn stratify_examples() {
        use ObservationClass as C;
        use ObservationLabel as L;
        let c = Corpus::new(vec![
            labeled("a", LabelVector::blank().with(C::NoFinding, L::Positive), Some("cough")),
            labeled("b", LabelVector::blank().with(C::Pneumothorax, L::Negative), None),
            labeled("c", LabelVector::blank().with(C::Pneumothorax, L::Positive), Some("  ")),
        ])
        .unwrap();
        let ids = |spec| -> Vec<String> {
            stratify(&c, spec).unwrap().pairs().iter().map(|p| p.study_id.clone()).collect()
        };
        assert_eq!(ids(StratumSpec::NoFinding), ["a"]);
        assert_eq!(ids(StratumSpec::HasFinding), ["b", "c"]);
        assert_eq!(ids(StratumSpec::HasIndication), ["a"]);
        assert_eq!(ids(StratumSpec::NoIndication), ["b", "c"]);
        assert_eq!(ids(StratumSpec::PerClass(C::Pneumothorax)), ["b", "c"]);

        let unlabeled = corpus(2);
        assert!(stratify(&unlabeled, StratumSpec::HasFinding).is_err());
        assert_eq!(stratify(&unlabeled, StratumSpec::NoIndication).unwrap().len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn monotone_transform_commutes_with_median(
            values in proptest::collection::vec(-5.0f64..5.0, 2..12),
            seed in any::<u64>(),
            half in 1usize..40,
        ) {
            let c = corpus(values.len());
            let cfg = BootstrapConfig { n_samples: 2 * half + 1, seed, ..Default::default() };
            let mean = |idx: &[usize]| idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64;
            let base = bootstrap(&c, "m", |idx| Some(mean(idx)), &cfg).unwrap();
            let g = bootstrap(&c, "g", |idx| Some(mean(idx).exp()), &cfg).unwrap();
            prop_assert_eq!(g.median, base.median.exp());
            prop_assert!(base.ci_low <= base.median && base.median <= base.ci_high);
        }

        #[test]
        fn resamples_have_population_size(n in 1usize..50, seed in any::<u64>(), b in 0u64..1000) {
            let idx = resample_indices(n, seed, b);
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.iter().all(|&i| i < n));
        }
    }
}
