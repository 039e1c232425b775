//! Drawing the success set of many independent Bernoulli variables in
//! sublinear expected time, given bounds on the success probabilities.
//! Probabilities are supplied lazily so that only candidate indices are
//! ever evaluated.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::{Error, Result};

/// Success set of independent `Ber(p(i))`, `i < n`, given one global bound
/// `p(i) <= p_bar`. Draws the candidate count from `Bin(n, p_bar)`, picks
/// that many indices uniformly without replacement, and thins each by
/// `p(i)/p_bar`. Expected cost `O(1 + n p_bar)`; the result is sorted.
pub fn sample_bernoulli_set_binomial(
    n: usize,
    prob: impl Fn(usize) -> f64,
    p_bar: f64,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&p_bar) {
        return Err(Error::Config(format!("bound {p_bar} outside [0, 1]")));
    }
    if n == 0 || p_bar == 0.0 {
        return Ok(Vec::new());
    }
    let bin = Binomial::new(n as u64, p_bar).expect("validated parameters");
    let s = bin.sample(rng) as usize;
    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    if s > n / 2 {
        // dense draw: partial shuffle
        let mut idx: Vec<usize> = (0..n).collect();
        for j in 0..s {
            let k = rng.gen_range(j..n);
            idx.swap(j, k);
        }
        chosen.extend_from_slice(&idx[..s]);
    } else {
        while chosen.len() < s {
            let k = rng.gen_range(0..n);
            if !chosen.contains(&k) {
                chosen.push(k);
            }
        }
    }
    let mut out = Vec::new();
    for i in chosen {
        let p = prob(i);
        if p > p_bar {
            return Err(Error::BoundViolation {
                rate: p,
                bound: p_bar,
            });
        }
        if rng.gen::<f64>() * p_bar < p {
            out.push(i);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Per-index exponents for the Poisson route: `kappa_i = -ln(1 - p_bar_i)`.
/// Indices with `p_bar_i = 1` cannot be expressed this way and are listed
/// for direct sampling instead.
struct PoissonPlan {
    kappas: Vec<f64>,
    cum: Vec<f64>,
    total: f64,
    direct: Vec<usize>,
}

fn build_plan(p_bars: &[f64]) -> Result<PoissonPlan> {
    let mut kappas = Vec::with_capacity(p_bars.len());
    let mut cum = Vec::with_capacity(p_bars.len());
    let mut total = 0.0;
    let mut direct = Vec::new();
    for (i, &pb) in p_bars.iter().enumerate() {
        if !(0.0..=1.0).contains(&pb) {
            return Err(Error::Config(format!("bound {pb} outside [0, 1]")));
        }
        if pb >= 1.0 {
            direct.push(i);
            kappas.push(0.0);
        } else {
            kappas.push(-(-pb).ln_1p());
            total += kappas[i];
        }
        cum.push(total);
    }
    Ok(PoissonPlan {
        kappas,
        cum,
        total,
        direct,
    })
}

impl PoissonPlan {
    /// Total candidate draws, `Poi(sum kappa_i)`.
    fn sample_total(&self, rng: &mut dyn rand::RngCore) -> u64 {
        if self.total == 0.0 {
            return 0;
        }
        let poi = Poisson::new(self.total).expect("positive rate");
        let s: f64 = poi.sample(rng);
        s as u64
    }

    /// Distinct indices hit by `s` multinomial draws with weights
    /// `kappa_i / kappa`, via uniform placement on the cumulative scale;
    /// cost `O(s log n)`.
    fn split(&self, s: u64, rng: &mut dyn rand::RngCore) -> Vec<usize> {
        let mut hit: Vec<usize> = Vec::new();
        for _ in 0..s {
            let u = rng.gen::<f64>() * self.total;
            let i = self.cum.partition_point(|&c| c <= u);
            debug_assert!(self.kappas[i] > 0.0);
            if !hit.contains(&i) {
                hit.push(i);
            }
        }
        hit
    }

    fn sample(
        &self,
        p_bars: &[f64],
        prob: &dyn Fn(usize) -> f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<usize>> {
        let thin = |i: usize, rng: &mut dyn rand::RngCore| -> Result<bool> {
            let p = prob(i);
            if p > p_bars[i] {
                return Err(Error::BoundViolation {
                    rate: p,
                    bound: p_bars[i],
                });
            }
            Ok(rng.gen::<f64>() * p_bars[i] < p)
        };
        let s = self.sample_total(rng);
        let mut out = Vec::new();
        for i in self.split(s, rng) {
            if thin(i, rng)? {
                out.push(i);
            }
        }
        for &i in &self.direct {
            // bound 1 carries no information; draw outright
            if rng.gen::<f64>() < prob(i) {
                out.push(i);
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

/// Success set of independent `Ber(p(i))` given per-index bounds
/// `p(i) <= p_bars[i]`. The candidate count is `Poi(sum_i -ln(1-p_bars[i]))`,
/// split multinomially; a candidate hit at least once is thinned by
/// `p(i)/p_bars[i]`. Bounds equal to one fall back to a direct draw.
pub fn sample_bernoulli_set_poisson(
    prob: impl Fn(usize) -> f64,
    p_bars: &[f64],
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<usize>> {
    build_plan(p_bars)?.sample(p_bars, &prob, rng)
}

/// Reusable Poisson-route sampler for bounds that do not move between
/// calls; the cumulative weight table is built once.
pub struct StaticPoissonSet {
    p_bars: Vec<f64>,
    plan: PoissonPlan,
}

impl StaticPoissonSet {
    pub fn new(p_bars: &[f64]) -> Result<Self> {
        Ok(StaticPoissonSet {
            p_bars: p_bars.to_vec(),
            plan: build_plan(p_bars)?,
        })
    }

    /// `sum_i -ln(1 - p_bar_i)` over indices with bound below one.
    pub fn kappa(&self) -> f64 {
        self.plan.total
    }

    pub fn sample(
        &self,
        prob: impl Fn(usize) -> f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<usize>> {
        self.plan.sample(&self.p_bars, &prob, rng)
    }

    #[cfg(test)]
    fn sample_total(&self, rng: &mut dyn rand::RngCore) -> u64 {
        self.plan.sample_total(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::substream;

    /// Law of the index set `{i : X_i = 1}` as probabilities over subset
    /// bitmasks, for independent `Ber(p_i)`.
    fn product_law(probs: &[f64]) -> Vec<f64> {
        let n = probs.len();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            probs[i]
                        } else {
                            1.0 - probs[i]
                        }
                    })
                    .product()
            })
            .collect()
    }

    /// Law induced by the binomial-route sampler, computed by enumerating
    /// its discrete randomness: candidate count, candidate subset, thinning.
    fn binomial_route_law(probs: &[f64], p_bar: f64) -> Vec<f64> {
        let n = probs.len();
        let mut law = vec![0.0; 1 << n];
        let binom = |n: usize, k: usize| -> f64 {
            let mut b = 1.0;
            for j in 0..k {
                b = b * (n - j) as f64 / (j + 1) as f64;
            }
            b
        };
        for s in 0..=n {
            let p_s = binom(n, s) * p_bar.powi(s as i32) * (1.0 - p_bar).powi((n - s) as i32);
            // each size-s candidate subset equally likely
            for cand in 0..1usize << n {
                if (cand as u32).count_ones() as usize != s {
                    continue;
                }
                let p_cand = p_s / binom(n, s);
                for mask in 0..1usize << n {
                    if mask & !cand != 0 {
                        continue;
                    }
                    let mut p = p_cand;
                    for i in 0..n {
                        if cand >> i & 1 == 0 {
                            continue;
                        }
                        let q = if p_bar == 0.0 { 0.0 } else { probs[i] / p_bar };
                        p *= if mask >> i & 1 == 1 { q } else { 1.0 - q };
                    }
                    law[mask] += p;
                }
            }
        }
        law
    }

    fn mask_of(set: &[usize]) -> usize {
        set.iter().fold(0, |m, &i| m | 1 << i)
    }

    fn empirical_tv(law: &[f64], counts: &[u64], total: u64) -> f64 {
        law.iter()
            .zip(counts)
            .map(|(p, &c)| (p - c as f64 / total as f64).abs())
            .sum::<f64>()
            / 2.0
    }

    #[test]
    fn binomial_route_law_is_the_product_law() {
        // analytic enumeration of the sampler's randomness tree
        for (probs, p_bar) in [
            (vec![0.5, 0.5], 0.5),
            (vec![0.25, 0.5, 0.75], 0.75),
            (vec![0.1, 0.2, 0.7], 0.7),
            (vec![0.3, 0.9], 1.0),
        ] {
            let law = binomial_route_law(&probs, p_bar);
            let want = product_law(&probs);
            for (a, b) in law.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{probs:?} bound {p_bar}");
            }
        }
    }

    #[test]
    fn binomial_route_monte_carlo_tv() {
        let probs = [0.1, 0.2, 0.7];
        let mut counts = [0u64; 8];
        let mut rng = substream(120, 0, 0);
        let total = 1_000_000;
        for _ in 0..total {
            let set =
                sample_bernoulli_set_binomial(3, |i| probs[i], 0.7, &mut rng).unwrap();
            counts[mask_of(&set)] += 1;
        }
        let tv = empirical_tv(&product_law(&probs), &counts, total);
        assert!(tv < 0.005, "tv {tv}");
    }

    #[test]
    fn binomial_route_rejects_bad_bound() {
        // the bound is only checked at drawn candidates, so use enough
        // indices that the candidate set is nonempty almost surely
        let mut rng = substream(120, 1, 0);
        assert!(matches!(
            sample_bernoulli_set_binomial(50, |_| 0.5, 0.4, &mut rng),
            Err(Error::BoundViolation { .. })
        ));
        assert!(matches!(
            sample_bernoulli_set_binomial(1, |_| 0.5, 1.2, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn binomial_route_with_unit_bound_is_direct() {
        // p_bar = 1 makes every index a candidate; marginals must match
        let probs = [0.3, 0.9];
        let mut ones = [0u64; 2];
        let mut rng = substream(120, 2, 0);
        let total = 100_000;
        for _ in 0..total {
            for i in sample_bernoulli_set_binomial(2, |i| probs[i], 1.0, &mut rng).unwrap() {
                ones[i] += 1;
            }
        }
        for i in 0..2 {
            let f = ones[i] as f64 / total as f64;
            let se = (probs[i] * (1.0 - probs[i]) / total as f64).sqrt();
            assert!((f - probs[i]).abs() < 3.0 * se, "index {i} freq {f}");
        }
    }

    #[test]
    fn poisson_route_monte_carlo_tv() {
        let probs = [0.1, 0.2, 0.7];
        let bounds = [0.1, 0.3, 0.8];
        let mut counts = [0u64; 8];
        let mut rng = substream(121, 0, 0);
        let total = 1_000_000;
        for _ in 0..total {
            let set = sample_bernoulli_set_poisson(|i| probs[i], &bounds, &mut rng).unwrap();
            counts[mask_of(&set)] += 1;
        }
        let tv = empirical_tv(&product_law(&probs), &counts, total);
        assert!(tv < 0.005, "tv {tv}");
    }

    #[test]
    fn poisson_route_tight_bounds_thin_nothing() {
        let probs = [0.25, 0.6];
        let mut ones = [0u64; 2];
        let mut rng = substream(121, 1, 0);
        let total = 100_000;
        for _ in 0..total {
            for i in sample_bernoulli_set_poisson(|i| probs[i], &probs, &mut rng).unwrap() {
                ones[i] += 1;
            }
        }
        for i in 0..2 {
            let f = ones[i] as f64 / total as f64;
            let se = (probs[i] * (1.0 - probs[i]) / total as f64).sqrt();
            assert!((f - probs[i]).abs() < 3.0 * se, "index {i} freq {f}");
        }
    }

    #[test]
    fn poisson_route_unit_bound_is_direct() {
        let probs = [0.6, 0.2];
        let bounds = [1.0, 0.3];
        let mut ones = [0u64; 2];
        let mut rng = substream(121, 2, 0);
        let total = 100_000;
        for _ in 0..total {
            for i in sample_bernoulli_set_poisson(|i| probs[i], &bounds, &mut rng).unwrap() {
                ones[i] += 1;
            }
        }
        for i in 0..2 {
            let f = ones[i] as f64 / total as f64;
            let se = (probs[i] * (1.0 - probs[i]) / total as f64).sqrt();
            assert!((f - probs[i]).abs() < 3.0 * se, "index {i} freq {f}");
        }
    }

    #[test]
    fn poisson_total_rate_is_additive() {
        let bounds = [0.2, 0.5, 0.9];
        let set = StaticPoissonSet::new(&bounds).unwrap();
        let want: f64 = bounds.iter().map(|&p| -(1.0 - p).ln()).sum();
        assert!((set.kappa() - want).abs() < 1e-12);
        let mut rng = substream(121, 3, 0);
        let total = 1_000_000;
        let mut acc = 0u64;
        for _ in 0..total {
            acc += set.sample_total(&mut rng);
        }
        let mean = acc as f64 / total as f64;
        assert!((mean - want).abs() < 0.01 * want, "mean {mean} vs {want}");
    }

    #[test]
    fn static_plan_matches_dynamic_route() {
        let probs = [0.05, 0.4, 0.15];
        let bounds = [0.1, 0.5, 0.2];
        let set = StaticPoissonSet::new(&bounds).unwrap();
        let mut static_counts = [0u64; 8];
        let mut dynamic_counts = [0u64; 8];
        let total = 200_000;
        let mut rng = substream(121, 4, 0);
        for _ in 0..total {
            static_counts[mask_of(&set.sample(|i| probs[i], &mut rng).unwrap())] += 1;
            dynamic_counts
                [mask_of(&sample_bernoulli_set_poisson(|i| probs[i], &bounds, &mut rng).unwrap())] +=
                1;
        }
        let law = product_law(&probs);
        let tv_s = empirical_tv(&law, &static_counts, total);
        let tv_d = empirical_tv(&law, &dynamic_counts, total);
        assert!(tv_s < 0.01, "static tv {tv_s}");
        assert!(tv_d < 0.01, "dynamic tv {tv_d}");
    }
}
