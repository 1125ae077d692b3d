//! Local randomizers and aggregators: generalized randomized response,
//! optimized local hashing, and the square-wave mechanism with EM
//! reconstruction, plus the analytic error predictors used for planning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::seeded_hash;

/// Estimated frequency per domain value. Entries may be negative before
/// post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub values: Vec<f64>,
}

impl FrequencyEstimate {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Parameters of generalized randomized response over `[1, c]`.
///
/// `p = e^eps / (e^eps + c - 1)` is the keep-truth probability and
/// `q = 1 / (e^eps + c - 1)` the per-other-value probability, so `p / q =
/// e^eps` and `p + (c - 1) q = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrrParams {
    pub c: u32,
    pub epsilon: f64,
    pub p: f64,
    pub q: f64,
}

impl GrrParams {
    pub fn new(c: u32, epsilon: f64) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidParameter("GRR needs domain size >= 2".into()));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        let ee = epsilon.exp();
        let denom = ee + c as f64 - 1.0;
        Ok(Self {
            c,
            epsilon,
            p: ee / denom,
            q: 1.0 / denom,
        })
    }

    /// Worst-case output probability ratio between two inputs.
    pub fn ldp_ratio(&self) -> f64 {
        self.p / self.q
    }
}

/// Report the true value with probability `p`, otherwise a uniformly random
/// other value.
pub fn grr_perturb(v: u32, params: &GrrParams, rng: &mut impl Rng) -> Result<u32> {
    if v < 1 || v > params.c {
        return Err(Error::InvalidParameter(format!(
            "value {v} outside [1, {}]",
            params.c
        )));
    }
    if rng.random::<f64>() < params.p {
        Ok(v)
    } else {
        // Uniform over the c-1 other values.
        let off = rng.random_range(1..params.c);
        let y = v + off;
        Ok(if y > params.c { y - params.c } else { y })
    }
}

/// Unbiased frequency estimates from GRR reports:
/// `f_v = (count(v)/n - q) / (p - q)`.
pub fn grr_aggregate(reports: &[u32], params: &GrrParams) -> Result<FrequencyEstimate> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter("no reports".into()));
    }
    let n = reports.len() as f64;
    let mut counts = vec![0usize; params.c as usize];
    for &y in reports {
        counts[(y - 1) as usize] += 1;
    }
    let values = counts
        .into_iter()
        .map(|cnt| (cnt as f64 / n - params.q) / (params.p - params.q))
        .collect();
    Ok(FrequencyEstimate { values })
}

/// Per-value estimation variance of GRR: `(c - 2 + e^eps) / ((e^eps - 1)^2 n)`.
pub fn grr_variance(params: &GrrParams, n: usize) -> f64 {
    let ee = params.epsilon.exp();
    (params.c as f64 - 2.0 + ee) / ((ee - 1.0).powi(2) * n as f64)
}

/// Parameters of optimized local hashing: hash `[1, c]` into `[1, c']` with
/// `c' = max(2, round(e^eps + 1))`, then apply GRR over the hashed domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlhParams {
    /// Input domain size.
    pub c: u32,
    /// Hashed domain size `c'`.
    pub hash_domain: u32,
    pub epsilon: f64,
    /// GRR keep probability over the hashed domain.
    pub p: f64,
}

impl OlhParams {
    pub fn new(c: u32, epsilon: f64) -> Result<Self> {
        if c < 1 {
            return Err(Error::InvalidParameter("OLH needs domain size >= 1".into()));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        let ee = epsilon.exp();
        let hash_domain = ((ee + 1.0).round() as u32).max(2);
        let p = ee / (ee + hash_domain as f64 - 1.0);
        Ok(Self {
            c,
            hash_domain,
            epsilon,
            p,
        })
    }

    fn grr(&self) -> GrrParams {
        GrrParams::new(self.hash_domain, self.epsilon).expect("valid by construction")
    }

    pub fn ldp_ratio(&self) -> f64 {
        self.grr().ldp_ratio()
    }
}

/// One user's OLH report: the identifier of their hash function plus the
/// randomized hashed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OlhReport {
    pub hash_seed: u64,
    pub y: u32,
}

/// Hash `v` with the user's seeded function, then GRR over `[1, c']`.
pub fn olh_perturb(
    v: u32,
    params: &OlhParams,
    hash_seed: u64,
    rng: &mut impl Rng,
) -> Result<OlhReport> {
    if v < 1 || v > params.c {
        return Err(Error::InvalidParameter(format!(
            "value {v} outside [1, {}]",
            params.c
        )));
    }
    olh_perturb_keyed(v as u64, params, hash_seed, rng)
}

/// OLH over an arbitrary keyed domain (values identified by 64-bit keys, see
/// [`crate::seed::fold_key`] for composites).
pub fn olh_perturb_keyed(
    key: u64,
    params: &OlhParams,
    hash_seed: u64,
    rng: &mut impl Rng,
) -> Result<OlhReport> {
    let h = seeded_hash(hash_seed, key, params.hash_domain);
    let y = grr_perturb(h, &params.grr(), rng)?;
    Ok(OlhReport { hash_seed, y })
}

/// Unbiased OLH estimates:
/// `f_v = (1/n) sum_i (1{H_i(v) = y_i} - 1/c') / (p - 1/c')`.
pub fn olh_aggregate(reports: &[OlhReport], params: &OlhParams) -> Result<FrequencyEstimate> {
    olh_aggregate_keyed(reports, params, params.c, |v| v as u64)
}

/// OLH aggregation over an arbitrary keyed domain: value `v` in `[1, domain]`
/// is hashed via `key(v)`. Lets callers hash composite values (grid cells,
/// interval tuples) without flattening them into one integer range.
pub fn olh_aggregate_keyed(
    reports: &[OlhReport],
    params: &OlhParams,
    domain: u32,
    key: impl Fn(u32) -> u64 + Sync,
) -> Result<FrequencyEstimate> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter("no reports".into()));
    }
    let n = reports.len() as f64;
    let inv_cp = 1.0 / params.hash_domain as f64;
    let denom = params.p - inv_cp;
    use rayon::prelude::*;
    let values: Vec<f64> = (1..=domain)
        .into_par_iter()
        .map(|v| {
            let k = key(v);
            let support = reports
                .iter()
                .filter(|r| seeded_hash(r.hash_seed, k, params.hash_domain) == r.y)
                .count();
            (support as f64 / n - inv_cp) / denom
        })
        .collect();
    Ok(FrequencyEstimate { values })
}

/// Support-count estimate for a single keyed value (used where the domain is
/// too large to enumerate).
pub fn olh_estimate_single(reports: &[OlhReport], params: &OlhParams, key: u64) -> f64 {
    let n = reports.len() as f64;
    let inv_cp = 1.0 / params.hash_domain as f64;
    let support = reports
        .iter()
        .filter(|r| seeded_hash(r.hash_seed, key, params.hash_domain) == r.y)
        .count();
    (support as f64 / n - inv_cp) / (params.p - inv_cp)
}

/// Idealized per-value estimation variance of OLH:
/// `4 e^eps / ((e^eps - 1)^2 n)`.
pub fn olh_variance(epsilon: f64, n: usize) -> f64 {
    let ee = epsilon.exp();
    4.0 * ee / ((ee - 1.0).powi(2) * n as f64)
}

/// Square-wave mechanism parameters for values normalized into `[0, 1]`.
///
/// Reports land in `[-delta, 1 + delta]` with density `p` within `delta` of
/// the input and `q` elsewhere; `2 delta p + q = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwParams {
    pub epsilon: f64,
    /// Closeness threshold.
    pub delta: f64,
    /// Near-band density.
    pub p: f64,
    /// Far density.
    pub q: f64,
}

impl SwParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        let ee = epsilon.exp();
        let delta = (epsilon * ee - ee + 1.0) / (2.0 * ee * (ee - 1.0 - epsilon));
        let q = 1.0 / (2.0 * delta * ee + 1.0);
        let p = ee * q;
        Ok(Self {
            epsilon,
            delta,
            p,
            q,
        })
    }

    pub fn ldp_ratio(&self) -> f64 {
        self.p / self.q
    }

    /// Total output range length `1 + 2 delta`.
    pub fn range_len(&self) -> f64 {
        1.0 + 2.0 * self.delta
    }
}

/// Perturb a normalized value: uniform over `[v - delta, v + delta]` with
/// probability `2 delta p`, else uniform over the rest of the output range.
pub fn sw_perturb(v: f64, params: &SwParams, rng: &mut impl Rng) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("value {v} outside [0, 1]")));
    }
    let d = params.delta;
    if rng.random::<f64>() < 2.0 * d * params.p {
        Ok(v - d + rng.random::<f64>() * 2.0 * d)
    } else {
        // Outside region has total length 1: [-d, v-d) before the band and
        // (v+d, 1+d] after it.
        let s = rng.random::<f64>();
        if s < v {
            Ok(-d + s)
        } else {
            Ok(v + d + (s - v))
        }
    }
}

/// Discretized transition matrix for EM: output range `[-delta, 1 + delta]`
/// split into `buckets + 2 ceil(delta * buckets)` bins of width
/// `1 / buckets` (edge bins truncated); input bucket i is represented by its
/// center. Entry `[o][i]` is the probability a report from bucket i lands in
/// output bin o, by exact band integration.
fn sw_transition(params: &SwParams, buckets: usize) -> (Vec<Vec<f64>>, usize) {
    let c = buckets as f64;
    let side = (params.delta * c).ceil() as usize;
    let out_bins = buckets + 2 * side;
    let bin_edge = |o: usize| -> (f64, f64) {
        let lo = (o as f64 - side as f64) / c;
        let hi = (o as f64 + 1.0 - side as f64) / c;
        (lo.max(-params.delta), hi.min(1.0 + params.delta))
    };
    let mut t = vec![vec![0.0; buckets]; out_bins];
    for i in 0..buckets {
        let v = (i as f64 + 0.5) / c;
        let (band_lo, band_hi) = (v - params.delta, v + params.delta);
        for (o, row) in t.iter_mut().enumerate() {
            let (lo, hi) = bin_edge(o);
            if hi <= lo {
                continue;
            }
            let near = (hi.min(band_hi) - lo.max(band_lo)).max(0.0);
            let far = (hi - lo) - near;
            row[i] = params.p * near + params.q * far;
        }
    }
    (t, out_bins)
}

/// Reconstruct a distribution over `buckets` equal cells of `[0, 1]` from
/// square-wave reports by expectation maximization on the discretized
/// transition matrix. Stops after `max_iters` sweeps or when the
/// log-likelihood improves by less than `tol`.
pub fn sw_em_reconstruct(
    reports: &[f64],
    params: &SwParams,
    buckets: usize,
    max_iters: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter("no reports".into()));
    }
    if buckets < 2 {
        return Err(Error::InvalidParameter("need >= 2 buckets".into()));
    }
    let (t, out_bins) = sw_transition(params, buckets);
    let side = (params.delta * buckets as f64).ceil() as usize;
    let mut counts = vec![0.0f64; out_bins];
    for &y in reports {
        let o = ((y * buckets as f64).floor() as i64 + side as i64)
            .clamp(0, out_bins as i64 - 1) as usize;
        counts[o] += 1.0;
    }
    // Unsmoothed maximum likelihood; the iteration cap doubles as the
    // regularizer, so generous caps trade bias for sampling noise.
    let mut x = vec![1.0 / buckets as f64; buckets];
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..max_iters {
        // E step: posterior mass per input bucket; M step: renormalize.
        let mut next = vec![0.0f64; buckets];
        let mut ll = 0.0;
        for (o, &cnt) in counts.iter().enumerate() {
            if cnt == 0.0 {
                continue;
            }
            let py: f64 = t[o].iter().zip(&x).map(|(a, b)| a * b).sum();
            if py <= 0.0 {
                continue;
            }
            ll += cnt * py.ln();
            for i in 0..buckets {
                next[i] += cnt * t[o][i] * x[i] / py;
            }
        }
        let total: f64 = next.iter().sum();
        if total > 0.0 {
            for v in &mut next {
                *v /= total;
            }
            x = next;
        }
        let done = (ll - last_ll).abs() < tol;
        last_ll = ll;
        if done {
            break;
        }
    }
    Ok(x)
}

/// Dominant squared noise-plus-sampling error when `m` user groups share `n`
/// users: `4 m e^eps / (n (e^eps - 1)^2)`.
pub fn predicted_squared_error(epsilon: f64, n: usize, m: usize) -> f64 {
    let ee = epsilon.exp();
    4.0 * m as f64 * ee / (n as f64 * (ee - 1.0).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;

    const LN3: f64 = 1.0986122886681098;

    #[test]
    fn grr_params_at_ln3() {
        let p = GrrParams::new(3, LN3).unwrap();
        assert!((p.p - 0.6).abs() < 1e-12);
        assert!((p.q - 0.2).abs() < 1e-12);
        assert!((p.ldp_ratio() - 3.0).abs() < 1e-9);
        assert!((p.p + 2.0 * p.q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grr_limits() {
        // Large epsilon: report is almost surely the truth.
        let hi = GrrParams::new(8, 30.0).unwrap();
        assert!(hi.p > 1.0 - 1e-9);
        // Tiny epsilon: output close to uniform.
        let lo = GrrParams::new(8, 1e-9).unwrap();
        assert!((lo.p - 1.0 / 8.0).abs() < 1e-9);
        assert!((lo.q - 1.0 / 8.0).abs() < 1e-9);
    }

    #[test]
    fn grr_aggregate_anchor_points() {
        let params = GrrParams::new(3, LN3).unwrap();
        // count(v)/n == q  ->  estimate 0; count(v)/n == p  ->  estimate 1.
        let est0 = (params.q - params.q) / (params.p - params.q);
        let est1 = (params.p - params.q) / (params.p - params.q);
        assert_eq!(est0, 0.0);
        assert_eq!(est1, 1.0);
        assert!((grr_variance(&params, 1000) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn grr_perturb_distribution() {
        let params = GrrParams::new(3, LN3).unwrap();
        let mut rng = stream_rng(&[42]);
        let n = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[(grr_perturb(2, &params, &mut rng).unwrap() - 1) as usize] += 1;
        }
        let f = |c: usize| c as f64 / n as f64;
        assert!((f(counts[1]) - 0.6).abs() < 0.01);
        assert!((f(counts[0]) - 0.2).abs() < 0.01);
        assert!((f(counts[2]) - 0.2).abs() < 0.01);
        assert!(grr_perturb(4, &params, &mut rng).is_err());
    }

    #[test]
    fn olh_params_follow_hash_domain_rule() {
        let p = OlhParams::new(16, LN3).unwrap();
        assert_eq!(p.hash_domain, 4);
        assert!((p.p - 0.5).abs() < 1e-12);
        // Very small epsilon still yields a hashed domain of at least 2.
        let small = OlhParams::new(16, 0.01).unwrap();
        assert_eq!(small.hash_domain, 2);
        assert!((p.ldp_ratio() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn olh_hash_is_deterministic_per_seed() {
        let params = OlhParams::new(64, 1.0).unwrap();
        let mut r1 = stream_rng(&[1]);
        let mut r2 = stream_rng(&[2]);
        let a = olh_perturb(17, &params, 555, &mut r1).unwrap();
        let b = olh_perturb(17, &params, 555, &mut r2).unwrap();
        assert_eq!(a.hash_seed, b.hash_seed);
        assert_eq!(
            seeded_hash(a.hash_seed, 17, params.hash_domain),
            seeded_hash(b.hash_seed, 17, params.hash_domain)
        );
    }

    #[test]
    fn olh_variance_formula() {
        assert!((olh_variance(LN3, 1000) - 0.003).abs() < 1e-15);
    }

    /// Mean estimate over 50 simulation repeats stays within four standard
    /// errors of the empirical truth for every value.
    #[test]
    fn grr_estimator_is_unbiased() {
        let n = 200_000usize;
        let c = 8u32;
        let eps = 1.0;
        let params = GrrParams::new(c, eps).unwrap();
        let values: Vec<u32> = (0..n).map(|u| 1 + (u % 8).min(3) as u32).collect();
        let mut truth = vec![0.0f64; c as usize];
        for &v in &values {
            truth[(v - 1) as usize] += 1.0 / n as f64;
        }
        let repeats = 50;
        let mut sums = vec![0.0f64; c as usize];
        for rep in 0..repeats {
            let mut rng = stream_rng(&[600 + rep as u64]);
            let reports: Vec<u32> = values
                .iter()
                .map(|&v| grr_perturb(v, &params, &mut rng).unwrap())
                .collect();
            let est = grr_aggregate(&reports, &params).unwrap();
            for (s, e) in sums.iter_mut().zip(&est.values) {
                *s += e;
            }
        }
        let bound = 4.0 * (grr_variance(&params, n) / repeats as f64).sqrt();
        for (s, t) in sums.iter().zip(&truth) {
            let bias = (s / repeats as f64 - t).abs();
            assert!(bias < bound, "bias {bias} exceeds {bound}");
        }
    }

    #[test]
    fn olh_recovers_point_mass() {
        // Everyone holds v = 5; estimate must be within 4 sigma of 1.
        let eps = 1.0;
        let n = 200_000;
        let params = OlhParams::new(16, eps).unwrap();
        let mut rng = stream_rng(&[7, 7]);
        let reports: Vec<OlhReport> = (0..n)
            .map(|u| olh_perturb(5, &params, 1000 ^ u as u64, &mut rng).unwrap())
            .collect();
        let est = olh_aggregate(&reports, &params).unwrap();
        let bound = 4.0 * olh_variance(eps, n).sqrt();
        assert!(
            (est.values[4] - 1.0).abs() < bound,
            "estimate {} not within {bound} of 1",
            est.values[4]
        );
        // Chance-level support for unheld values gives estimates near 0.
        for (i, v) in est.values.iter().enumerate() {
            if i != 4 {
                assert!(v.abs() < bound);
            }
        }
    }

    #[test]
    fn sw_params_at_eps_one() {
        let p = SwParams::new(1.0).unwrap();
        assert!((p.delta - 0.25609).abs() < 2e-4, "delta {}", p.delta);
        assert!((p.p - 1.13629).abs() < 2e-4, "p {}", p.p);
        assert!((p.q - 0.41802).abs() < 2e-4, "q {}", p.q);
        assert!((2.0 * p.delta * p.p + p.q - 1.0).abs() < 1e-12);
        assert!((p.ldp_ratio() - 1.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn sw_band_mass_matches_construction() {
        let params = SwParams::new(1.0).unwrap();
        let mut rng = stream_rng(&[3, 1]);
        let v = 0.37;
        let n = 1_000_000;
        let mut near = 0usize;
        for _ in 0..n {
            let y = sw_perturb(v, &params, &mut rng).unwrap();
            assert!((-params.delta..=1.0 + params.delta).contains(&y));
            if (y - v).abs() <= params.delta {
                near += 1;
            }
        }
        let expect = 2.0 * params.delta * params.p;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (near as f64 / n as f64 - expect).abs() < 3.0 * se,
            "band mass {} vs {expect}",
            near as f64 / n as f64
        );
    }

    #[test]
    fn sw_small_epsilon_near_uniform() {
        let p = SwParams::new(1e-4).unwrap();
        assert!((p.p / p.q - 1.0).abs() < 1e-3);
    }

    #[test]
    fn em_recovers_point_mass() {
        let params = SwParams::new(4.0).unwrap();
        let c = 16;
        let v = 0.5 / c as f64; // bucket 1 center
        let mut rng = stream_rng(&[9, 4]);
        let reports: Vec<f64> = (0..100_000)
            .map(|_| sw_perturb(v, &params, &mut rng).unwrap())
            .collect();
        let dist = sw_em_reconstruct(&reports, &params, c, 1000, 1e-9).unwrap();
        assert!(dist[0] > 0.9, "bucket-1 mass {}", dist[0]);
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(dist.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn em_recovers_uniform_within_tv_bound() {
        let params = SwParams::new(1.0).unwrap();
        let c = 16usize;
        let mut rng = stream_rng(&[8, 1]);
        let reports: Vec<f64> = (0..100_000)
            .map(|i| {
                let bucket = i % c;
                let v = (bucket as f64 + 0.5) / c as f64;
                sw_perturb(v, &params, &mut rng).unwrap()
            })
            .collect();
        // Unsmoothed EM overfits sampling noise as iterations grow; the
        // simulated total variation here is 0.024 at 100 sweeps and 0.073 at
        // the full 1000-sweep cap.
        let tv = |dist: &[f64]| -> f64 {
            dist.iter().map(|x| (x - 1.0 / c as f64).abs()).sum::<f64>() / 2.0
        };
        let early = sw_em_reconstruct(&reports, &params, c, 100, 1e-9).unwrap();
        assert!(tv(&early) < 0.05, "total variation {}", tv(&early));
        let full = sw_em_reconstruct(&reports, &params, c, 1000, 1e-9).unwrap();
        assert!(tv(&full) < 0.08, "total variation {}", tv(&full));
        assert!(is_normalized_distribution(&full));
    }

    fn is_normalized_distribution(dist: &[f64]) -> bool {
        dist.iter().all(|&x| x >= 0.0) && (dist.iter().sum::<f64>() - 1.0).abs() < 1e-9
    }

    #[test]
    fn em_rejects_empty_reports() {
        let params = SwParams::new(1.0).unwrap();
        assert!(sw_em_reconstruct(&[], &params, 8, 10, 1e-9).is_err());
    }

    #[test]
    fn predicted_error_values() {
        assert!((predicted_squared_error(LN3, 1000, 1) - 0.003).abs() < 1e-15);
        let one = predicted_squared_error(1.0, 1_000_000, 1);
        let two = predicted_squared_error(1.0, 1_000_000, 2);
        assert!((two - 2.0 * one).abs() < 1e-18);
        let v = predicted_squared_error(1.0, 1_000_000, 21);
        assert!((v - 7.73e-5).abs() < 5e-7, "got {v}");
    }

    #[test]
    fn all_parameter_structs_are_ldp() {
        for &eps in &[0.2f64, 0.5, 1.0, 2.0, 4.0] {
            let e = eps.exp();
            for &c in &[2u32, 8, 64, 1024] {
                assert!(GrrParams::new(c, eps).unwrap().ldp_ratio() <= e * (1.0 + 1e-12));
                assert!(OlhParams::new(c, eps).unwrap().ldp_ratio() <= e * (1.0 + 1e-12));
            }
            assert!(SwParams::new(eps).unwrap().ldp_ratio() <= e * (1.0 + 1e-12));
        }
    }
}
