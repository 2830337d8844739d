//! Full-covariance 2D Gaussian mixtures fitted by EM, and BIC-based choice of
//! the component count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::num::{log_sum_exp, Real};

#[derive(Debug, Error, PartialEq)]
pub enum GmmError {
    #[error("component count k={k} invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("invalid bounds [{k_min}, {k_max}] for {n} points")]
    InvalidBounds { k_min: usize, k_max: usize, n: usize },
    #[error("non-finite input point at index {0}")]
    NonFinite(usize),
}

#[derive(Clone, Debug)]
pub struct GmmConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound on covariance eigenvalues.
    pub covariance_floor: f64,
    pub seed: u64,
    /// Independent seedings; the best final log-likelihood wins.
    pub restarts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, covariance_floor: 1e-4, seed: 0, restarts: 4 }
    }
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Real> Sym2<T> {
    pub fn scaled_identity(s: T) -> Self {
        Self { xx: s, xy: T::zero(), yy: s }
    }

    pub fn det(&self) -> T {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues, larger first.
    pub fn eigenvalues(&self) -> (T, T) {
        let half = T::lit(0.5);
        let m = (self.xx + self.yy) * half;
        let r = (((self.xx - self.yy) * half).powi(2) + self.xy * self.xy).sqrt();
        (m + r, m - r)
    }

    /// Projects onto matrices whose eigenvalues are all ≥ `floor`.
    pub fn floored(&self, floor: T) -> Self {
        let (l1, l2) = self.eigenvalues();
        if l2 >= floor {
            return *self;
        }
        if self.xy == T::zero() {
            return Self { xx: self.xx.max(floor), xy: T::zero(), yy: self.yy.max(floor) };
        }
        // eigenvector for l1, from whichever row is better conditioned
        let (vx, vy) = if self.xx >= self.yy { (l1 - self.yy, self.xy) } else { (self.xy, l1 - self.xx) };
        let norm = vx.hypot(vy);
        if !(norm > T::zero()) || !norm.is_finite() {
            // collapsed component: entries too small to orient
            return Self::scaled_identity(l1.max(floor));
        }
        let (c, s) = (vx / norm, vy / norm);
        let (a, b) = (l1.max(floor), l2.max(floor));
        Self { xx: a * c * c + b * s * s, xy: (a - b) * c * s, yy: a * s * s + b * c * c }
    }

    fn log_density(&self, mean: [T; 2], p: [T; 2]) -> T {
        let det = self.det();
        let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
        let maha = (self.yy * dx * dx - T::lit(2.0) * self.xy * dx * dy + self.xx * dy * dy) / det;
        -T::lit((2.0 * std::f64::consts::PI).ln()) - T::lit(0.5) * det.ln() - T::lit(0.5) * maha
    }
}

#[derive(Clone, Debug)]
pub struct GmmModel<T> {
    pub k: usize,
    pub weights: Vec<T>,
    pub means: Vec<[T; 2]>,
    pub covariances: Vec<Sym2<T>>,
    /// Data log-likelihood under the returned parameters.
    pub loglik: T,
    /// Log-likelihood after seeding and after every EM iteration.
    pub loglik_trace: Vec<T>,
    pub converged: bool,
    /// All points coincide while k > 1; components collapse onto one mean.
    pub degenerate: bool,
}

impl<T: Real> GmmModel<T> {
    /// Number of free parameters of a full-covariance 2D mixture.
    pub fn parameter_count(k: usize) -> usize {
        6 * k - 1
    }

    pub fn bic(&self, n: usize) -> T {
        T::lit(Self::parameter_count(self.k) as f64) * T::lit((n as f64).ln()) - T::lit(2.0) * self.loglik
    }

    fn log_joint(&self, p: [T; 2], out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate().take(self.k) {
            *o = self.weights[j].ln() + self.covariances[j].log_density(self.means[j], p);
        }
    }

    /// Posterior component probabilities for one point.
    pub fn responsibilities(&self, p: [T; 2]) -> Vec<T> {
        let mut lj = vec![T::zero(); self.k];
        self.log_joint(p, &mut lj);
        let lse = log_sum_exp(&lj);
        lj.iter().map(|&l| (l - lse).exp()).collect()
    }

    /// Maximum-responsibility component; ties go to the lower index.
    pub fn assign(&self, p: [T; 2]) -> usize {
        let mut lj = vec![T::zero(); self.k];
        self.log_joint(p, &mut lj);
        let mut best = 0;
        for j in 1..self.k {
            if lj[j] > lj[best] {
                best = j;
            }
        }
        best
    }

    pub fn log_likelihood(&self, points: &[[T; 2]]) -> T {
        let mut lj = vec![T::zero(); self.k];
        points
            .iter()
            .map(|&p| {
                self.log_joint(p, &mut lj);
                log_sum_exp(&lj)
            })
            .sum()
    }
}

fn check(points: &[[impl Real; 2]]) -> Result<(), GmmError> {
    match points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        Some(i) => Err(GmmError::NonFinite(i)),
        None => Ok(()),
    }
}

fn weighted_stats<T: Real>(points: &[[T; 2]], w: impl Fn(usize) -> T, floor: T) -> (T, [T; 2], Sym2<T>) {
    let mut total = T::zero();
    let (mut mx, mut my) = (T::zero(), T::zero());
    for (i, p) in points.iter().enumerate() {
        let wi = w(i);
        total += wi;
        mx += wi * p[0];
        my += wi * p[1];
    }
    let mean = [mx / total, my / total];
    let mut cov = Sym2 { xx: T::zero(), xy: T::zero(), yy: T::zero() };
    for (i, p) in points.iter().enumerate() {
        let wi = w(i);
        let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
        cov.xx += wi * dx * dx;
        cov.xy += wi * dx * dy;
        cov.yy += wi * dy * dy;
    }
    cov.xx /= total;
    cov.xy /= total;
    cov.yy /= total;
    (total, mean, cov.floored(floor))
}

fn kmeans_pp<T: Real>(points: &[[T; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[T; 2]> {
    let n = points.len();
    let mut centers = vec![points[rng.gen_range(0..n)]];
    let mut d2: Vec<f64> = vec![f64::INFINITY; n];
    while centers.len() < k {
        let last = *centers.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            let d = ((p[0] - last[0]).powi(2) + (p[1] - last[1]).powi(2)).to_f64_lossy();
            d2[i] = d2[i].min(d);
        }
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            Err(_) => rng.gen_range(0..n),
        };
        centers.push(points[next]);
    }
    centers
}

fn em_once<T: Real>(points: &[[T; 2]], k: usize, cfg: &GmmConfig, seed: u64) -> GmmModel<T> {
    let n = points.len();
    let floor = T::lit(cfg.covariance_floor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeans_pp(points, k, &mut rng);
    let (_, _, global) = weighted_stats(points, |_| T::one(), floor);
    let degenerate = k > 1 && points.iter().all(|p| p == &points[0]);
    let mut model = GmmModel {
        k,
        weights: vec![T::one() / T::lit(k as f64); k],
        means,
        covariances: vec![global; k],
        loglik: T::neg_infinity(),
        loglik_trace: Vec::new(),
        converged: false,
        degenerate,
    };

    let mut resp = vec![T::zero(); n * k];
    let mut lj = vec![T::zero(); k];
    // E-step: fills `resp`, returns the log-likelihood of the current model.
    let e_step = |model: &GmmModel<T>, resp: &mut [T], lj: &mut [T]| -> T {
        let mut ll = T::zero();
        for (i, &p) in points.iter().enumerate() {
            model.log_joint(p, lj);
            let lse = log_sum_exp(lj);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (lj[j] - lse).exp();
            }
        }
        ll
    };

    let mut ll = e_step(&model, &mut resp, &mut lj);
    model.loglik_trace.push(ll);
    for _ in 0..cfg.max_iter {
        let mut next = model.clone();
        for j in 0..k {
            let nk: T = (0..n).map(|i| resp[i * k + j]).sum();
            next.weights[j] = nk / T::lit(n as f64);
            if nk > T::lit(1e-12) {
                let (_, mean, cov) = weighted_stats(points, |i| resp[i * k + j], floor);
                next.means[j] = mean;
                next.covariances[j] = cov;
            }
        }
        let next_ll = e_step(&next, &mut resp, &mut lj);
        debug_assert!(
            next_ll >= ll - (T::epsilon() * T::lit(1e3)).max(T::lit(1e-9)) * (T::one() + ll.abs()),
            "EM log-likelihood decreased: {ll} -> {next_ll}"
        );
        next.loglik_trace = std::mem::take(&mut model.loglik_trace);
        next.loglik_trace.push(next_ll);
        model = next;
        let gain = next_ll - ll;
        ll = next_ll;
        if gain < T::lit(cfg.tol) {
            model.converged = true;
            break;
        }
    }
    model.loglik = ll;
    model
}

/// Fits a k-component mixture. Deterministic given `cfg.seed`.
pub fn fit_gmm<T: Real>(points: &[[T; 2]], k: usize, cfg: &GmmConfig) -> Result<GmmModel<T>, GmmError> {
    if k == 0 || points.len() < k {
        return Err(GmmError::InvalidK { k, n: points.len() });
    }
    check(points)?;
    let mut best: Option<GmmModel<T>> = None;
    for r in 0..cfg.restarts.max(1) {
        let seed = crate::seeds::mix(cfg.seed, r as u64);
        let m = em_once(points, k, cfg, seed);
        if best.as_ref().is_none_or(|b| m.loglik > b.loglik) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Clone, Debug)]
pub struct RegionSelection<T> {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// `(k, BIC(k))` for every k tried.
    pub bic: Vec<(usize, T)>,
    pub model: GmmModel<T>,
}

/// Chooses k in `[k_min, k_max]` minimizing BIC (ties → smaller k) and
/// assigns every point to its maximum-responsibility component.
pub fn select_regions<T: Real>(
    points: &[[T; 2]],
    k_min: usize,
    k_max: usize,
    cfg: &GmmConfig,
) -> Result<RegionSelection<T>, GmmError> {
    let n = points.len();
    if k_min < 1 || k_min > k_max || k_max > n {
        return Err(GmmError::InvalidBounds { k_min, k_max, n });
    }
    let mut bic = Vec::new();
    let mut best: Option<(T, GmmModel<T>)> = None;
    for k in k_min..=k_max {
        let m = fit_gmm(points, k, cfg)?;
        let b = m.bic(n);
        bic.push((k, b));
        if best.as_ref().is_none_or(|(bb, _)| b < *bb) {
            best = Some((b, m));
        }
    }
    let (_, model) = best.expect("non-empty range");
    let assignments = points.iter().map(|&p| model.assign(p)).collect();
    Ok(RegionSelection { k: model.k, assignments, bic, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    fn blob(rng: &mut ChaCha8Rng, center: [f64; 2], sigma: f64, n: usize) -> Vec<[f64; 2]> {
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| [center[0] + d.sample(rng), center[1] + d.sample(rng)]).collect()
    }

    #[test]
    fn k1_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = blob(&mut rng, [1.0, -2.0], 0.7, 60);
        let m = fit_gmm(&pts, 1, &GmmConfig::default()).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        let sxx = pts.iter().map(|p| (p[0] - mx).powi(2)).sum::<f64>() / n;
        let sxy = pts.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum::<f64>() / n;
        assert!((m.means[0][0] - mx).abs() < 1e-9 && (m.means[0][1] - my).abs() < 1e-9);
        assert!((m.covariances[0].xx - sxx).abs() < 1e-9);
        assert!((m.covariances[0].xy - sxy).abs() < 1e-9);
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_survives_underflowing_covariance() {
        for c in [
            Sym2::<f64> { xx: 1e-200, xy: 1e-200, yy: 2e-200 },
            Sym2 { xx: 3e-170, xy: -1e-180, yy: 1e-300 },
            Sym2 { xx: 0.0, xy: 1e-310, yy: 0.0 },
        ] {
            let f = c.floored(1e-4);
            let (l1, l2) = f.eigenvalues();
            assert!(f.xx.is_finite() && f.xy.is_finite() && f.yy.is_finite(), "{c:?} → {f:?}");
            assert!(l2 >= 1e-4 * (1.0 - 1e-9) && l1 >= l2);
        }
        let f = Sym2::<f64> { xx: 4.0, xy: 1e-3, yy: 1e-6 }.floored(1e-2);
        assert!((f.xx - 4.0).abs() < 1e-6 && f.eigenvalues().1 >= 1e-2 - 1e-12);
    }

    #[test]
    fn surplus_components_stay_finite() {
        // 5 components on a single tight cluster: some collapse onto points
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = blob(&mut rng, [0.0, 0.0], 1.0, 150);
            let m = fit_gmm(&pts, 5, &GmmConfig { seed, ..Default::default() }).unwrap();
            assert!(m.loglik.is_finite());
            assert!(m.loglik_trace.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn two_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = blob(&mut rng, [0.0, 0.0], 0.2, 50);
        pts.extend(blob(&mut rng, [5.0, 3.0], 0.2, 50));
        let m = fit_gmm(&pts, 2, &GmmConfig::default()).unwrap();
        let mut means = m.means.clone();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((means[0][0]).abs() < 0.1 && (means[0][1]).abs() < 0.1, "{means:?}");
        assert!((means[1][0] - 5.0).abs() < 0.1 && (means[1][1] - 3.0).abs() < 0.1, "{means:?}");
        let wsum: f64 = m.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn loglik_monotone_and_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = blob(&mut rng, [0.0, 0.0], 1.0, 80);
        let cfg = GmmConfig::default();
        let m1 = fit_gmm(&pts, 1, &cfg).unwrap();
        let m2 = fit_gmm(&pts, 2, &cfg).unwrap();
        assert!(m2.loglik >= m1.loglik - 1e-9);
        for w in m2.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", m2.loglik_trace);
        }
        assert!((m2.loglik - m2.log_likelihood(&pts)).abs() < 1e-6);
    }

    #[test]
    fn degenerate_input_is_flagged() {
        let pts = vec![[1.0f64, 1.0]; 10];
        let m = fit_gmm(&pts, 3, &GmmConfig::default()).unwrap();
        assert!(m.degenerate);
        for c in &m.covariances {
            let (a, b) = c.eigenvalues();
            assert!((a - 1e-4).abs() < 1e-12 && (b - 1e-4).abs() < 1e-12);
        }
        for mu in &m.means {
            assert_eq!(*mu, [1.0, 1.0]);
        }
    }

    #[test]
    fn floor_projection() {
        let s = Sym2 { xx: 1.0f64, xy: 1.0, yy: 1.0 };
        let f = s.floored(1e-2);
        let (a, b) = f.eigenvalues();
        assert!((a - 2.0).abs() < 1e-9 && (b - 1e-2).abs() < 1e-9, "{a} {b}");
        let ok = Sym2 { xx: 2.0, xy: 0.1, yy: 1.0 };
        assert_eq!(ok.floored(1e-4), ok);
    }

    #[test]
    fn bad_k_rejected() {
        let pts = vec![[0.0, 0.0]; 2];
        assert!(fit_gmm::<f64>(&pts, 0, &GmmConfig::default()).is_err());
        assert!(fit_gmm::<f64>(&pts, 3, &GmmConfig::default()).is_err());
        assert!(select_regions::<f64>(&pts, 2, 1, &GmmConfig::default()).is_err());
    }

    #[test]
    fn single_cloud_selects_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts = blob(&mut rng, [2.0, 2.0], 0.3, 100);
        let sel = select_regions(&pts, 1, 4, &GmmConfig::default()).unwrap();
        // recompute BIC from independent fits
        let cfg = GmmConfig::default();
        let manual: Vec<f64> = (1..=4)
            .map(|k| {
                let m = fit_gmm(&pts, k, &cfg).unwrap();
                (6 * k - 1) as f64 * (100f64).ln() - 2.0 * m.loglik
            })
            .collect();
        let argmin = (0..4).fold(0, |b, i| if manual[i] < manual[b] { i } else { b }) + 1;
        assert_eq!(sel.k, argmin);
        assert_eq!(sel.k, 1);
    }

    #[test]
    fn three_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pts = Vec::new();
        for c in [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]] {
            pts.extend(blob(&mut rng, c, 0.3, 40));
        }
        let sel = select_regions(&pts, 1, 5, &GmmConfig::default()).unwrap();
        assert_eq!(sel.k, 3);
    }

    #[test]
    fn n_equals_k_min() {
        let pts = vec![[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]];
        let sel = select_regions(&pts, 3, 3, &GmmConfig::default()).unwrap();
        assert_eq!(sel.k, 3);
        let mut a = sel.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn works_in_f32() {
        let pts: Vec<[f32; 2]> = vec![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]];
        let sel = select_regions(&pts, 1, 2, &GmmConfig::default()).unwrap();
        assert_eq!(sel.assignments[0], sel.assignments[1]);
        assert_ne!(sel.assignments[0], sel.assignments[3]);
    }
}
