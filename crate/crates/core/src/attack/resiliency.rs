//! Largest number of compromised measurements the loop tolerates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid_model::BusId;
use crate::par;

use super::response::ResponseModel;
use super::synth::find_min_trip_time_with;
use super::{AttackError, AttackProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Every subset of each tested size was solved.
    Exact,
    /// Seeded random subsets per size; k is an upper bound on the truth.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResiliencyOptions {
    /// Enumerate all subsets up to this many candidate buses.
    pub exact_limit: usize,
    /// Subsets drawn per size above the limit.
    pub samples: usize,
    pub seed: u64,
    /// Refuse to fall back to sampling.
    pub require_exact: bool,
}

impl Default for ResiliencyOptions {
    fn default() -> Self {
        Self {
            exact_limit: 10,
            samples: 50,
            seed: 0,
            require_exact: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResiliencyResult {
    /// `None` when no subset, not even all candidates, reaches the goal.
    pub k: Option<usize>,
    pub bound: BoundKind,
    pub subsets_tested: usize,
    /// A smallest feasible accessibility set found.
    pub witness: Option<Vec<BusId>>,
}

impl ResiliencyResult {
    pub fn label(&self) -> String {
        self.k.map_or_else(|| "N/A".to_string(), |k| k.to_string())
    }
}

/// All k-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Descending search over accessibility cardinality within the problem's
/// attack window: the result is the largest k such that every tested
/// k-subset of `candidates` fails to reach the goal while some tested
/// (k+1)-subset succeeds.
pub fn k_resiliency(
    problem: &AttackProblem,
    candidates: &[BusId],
    options: ResiliencyOptions,
) -> Result<ResiliencyResult, AttackError> {
    let n = candidates.len();
    let exact = n <= options.exact_limit;
    if !exact && options.require_exact {
        let worst = (0..=n).map(|k| binomial(n, k)).max().unwrap_or(0);
        return Err(AttackError::CombinatorialBudgetExceeded {
            k: n / 2,
            subsets: worst,
            budget: options.samples,
        });
    }
    let response = ResponseModel::new(problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut tested = 0;
    let mut witness = None;
    let n_bus = problem.network.n_buses();
    for k in (1..=n).rev() {
        let subsets: Vec<Vec<usize>> = if exact || binomial(n, k) <= options.samples as u128 {
            combinations(n, k)
        } else {
            (0..options.samples)
                .map(|_| {
                    let mut s = sample(&mut rng, n, k).into_vec();
                    s.sort_unstable();
                    s
                })
                .collect()
        };
        tested += subsets.len();
        let results = par::map(problem.options.exec, &subsets, |s| -> Result<bool, AttackError> {
            let mut acc = vec![false; n_bus];
            for &i in s {
                acc[candidates[i].index()] = true;
            }
            Ok(find_min_trip_time_with(&problem.with_accessibility(acc), &response)?.is_feasible())
        });
        let mut found = None;
        for (s, r) in subsets.iter().zip(results) {
            if r? && found.is_none() {
                found = Some(s.iter().map(|&i| candidates[i]).collect::<Vec<_>>());
            }
        }
        match found {
            Some(w) => witness = Some(w),
            None => {
                let k_res = if k == n { None } else { Some(k) };
                return Ok(ResiliencyResult {
                    k: k_res,
                    bound: if exact { BoundKind::Exact } else { BoundKind::Sampled },
                    subsets_tested: tested,
                    witness,
                });
            }
        }
    }
    Ok(ResiliencyResult {
        k: Some(0),
        bound: if exact { BoundKind::Exact } else { BoundKind::Sampled },
        subsets_tested: tested,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(4, 0), vec![Vec::<usize>::new()]);
        assert_eq!(binomial(10, 5), 252);
    }
}
