use alloc::vec::Vec;

use rand::seq::index;

use crate::experiment::LossReport;
use crate::physics::StiffnessBounds;
use crate::rng::{self, Stream};
use crate::stats::{mann_whitney_u, median, MannWhitney};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomSearch {
    pub designs: Vec<Vec<f64>>,
    pub reports: Vec<LossReport>,
}

impl RandomSearch {
    /// Gate total loss (sum of the partials) of every configuration.
    pub fn totals(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.total).collect()
    }
}

/// Scores `count` uniform random designs drawn from the `random-search`
/// stream. `evaluate` maps a batch of designs to their reports, in order.
pub fn random_search(
    n: usize,
    count: usize,
    bounds: StiffnessBounds,
    seed: u64,
    evaluate: impl FnOnce(&[Vec<f64>]) -> Result<Vec<LossReport>>,
) -> Result<RandomSearch> {
    if count == 0 {
        return Err(Error::Config {
            what: "random search needs at least one configuration",
            value: 0.0,
        });
    }
    let mut rng = rng::stream(seed, Stream::RandomSearch);
    let designs: Vec<Vec<f64>> = (0..count).map(|_| rng::uniform_design(&mut rng, n, bounds)).collect();
    let reports = evaluate(&designs)?;
    if reports.len() != count {
        return Err(Error::LengthMismatch {
            expected: count,
            got: reports.len(),
        });
    }
    Ok(RandomSearch { designs, reports })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub optimized_median: f64,
    pub random_median: f64,
    /// Random losses actually compared (all of them, or a size-matched subset).
    pub random_used: Vec<f64>,
    pub test: MannWhitney,
}

/// Two-sided rank test of optimized losses against random ones. With
/// `size_matched`, a random subset as large as the optimized set is drawn
/// from the `subset` stream.
pub fn compare_to_random(optimized: &[f64], random: &[f64], size_matched: bool, seed: u64) -> Result<Comparison> {
    let random_used: Vec<f64> = if size_matched && optimized.len() < random.len() {
        let mut rng = rng::stream(seed, Stream::Subset);
        let mut picks = index::sample(&mut rng, random.len(), optimized.len()).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| random[i]).collect()
    } else {
        random.to_vec()
    };
    let test = mann_whitney_u(optimized, &random_used)?;
    Ok(Comparison {
        optimized_median: median(optimized)?,
        random_median: median(&random_used)?,
        random_used,
        test,
    })
}
