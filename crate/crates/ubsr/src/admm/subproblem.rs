//! The (w, t) block update: a convex quadratic over simplex x R, minimized by
//! accelerated projected gradient with gradient-based adaptive restart.
//!
//! The smooth objective is the sigma-weighted augmented Lagrangian with the
//! other blocks frozen:
//!
//! ```text
//! f(w, t) = (1-alpha) t - alpha mu'w + nu1'(Rw + t1 + z) + nu2 (mu'w - s - R0)
//!           + sigma/2 [ ||Rw + t1 + z||^2 + (mu'w - s - R0)^2 ]
//! ```
//!
//! Its gradient Lipschitz constant is `sigma * lambda_max(A'A)` for the
//! stacked map `A(w, t) = [Rw + t1 ; mu'w]`; the largest eigenvalue is
//! estimated once per solve by power iteration and reused with a safety
//! factor.

use crate::linalg::{pairwise_dot, pairwise_sum, Matrix};

use super::simplex::project_simplex;
use super::SaaProblem;

/// The frozen-block quadratic, exposed so its analytic gradient can be
/// checked against finite differences.
pub struct WtSubproblem<'a> {
    pub problem: &'a SaaProblem,
    pub z: &'a [f64],
    pub s: f64,
    pub nu1: &'a [f64],
    pub nu2: f64,
    pub sigma: f64,
}

impl WtSubproblem<'_> {
    pub fn value(&self, w: &[f64], t: f64) -> f64 {
        let p = self.problem;
        let rw = p.returns().matvec(w);
        let r1: Vec<f64> = rw
            .iter()
            .zip(self.z)
            .map(|(rwi, zi)| rwi + t + zi)
            .collect();
        let mu_w = pairwise_dot(p.mu(), w);
        let r2 = mu_w - self.s - p.r0();
        (1.0 - p.alpha()) * t - p.alpha() * mu_w
            + pairwise_dot(self.nu1, &r1)
            + self.nu2 * r2
            + 0.5 * self.sigma * (pairwise_dot(&r1, &r1) + r2 * r2)
    }

    /// Analytic gradient `(d/dw, d/dt)`.
    pub fn gradient(&self, w: &[f64], t: f64) -> (Vec<f64>, f64) {
        let p = self.problem;
        let rw = p.returns().matvec(w);
        // v = nu1 + sigma (Rw + t1 + z)
        let v: Vec<f64> = rw
            .iter()
            .zip(self.z)
            .zip(self.nu1)
            .map(|((rwi, zi), nui)| nui + self.sigma * (rwi + t + zi))
            .collect();
        let mut gw = p.returns().matvec_t(&v);
        let r2 = pairwise_dot(p.mu(), w) - self.s - p.r0();
        let coeff = self.nu2 + self.sigma * r2 - p.alpha();
        for (g, m) in gw.iter_mut().zip(p.mu()) {
            *g += coeff * m;
        }
        let gt = (1.0 - p.alpha()) + pairwise_sum(&v);
        (gw, gt)
    }
}

pub(crate) struct WtSolution {
    pub w: Vec<f64>,
    pub t: f64,
    pub iters: usize,
    pub hit_cap: bool,
}

/// Accelerated projected gradient from a warm start, with fixed step `1/lip`
/// and restart whenever the gradient opposes the momentum. Stops on the
/// prox-gradient norm at the extrapolated point or on exact stagnation.
pub(crate) fn solve_wt(
    sub: &WtSubproblem<'_>,
    w0: &[f64],
    t0: f64,
    lip: f64,
    tol: f64,
    max_iter: usize,
) -> WtSolution {
    let step = 1.0 / lip.max(1e-30);
    let mut xw = w0.to_vec();
    let mut xt = t0;
    let mut yw = xw.clone();
    let mut yt = xt;
    let mut theta: f64 = 1.0;
    let mut iters = 0usize;
    let mut hit_cap = true;

    for k in 0..max_iter {
        iters = k + 1;
        let (gw, gt) = sub.gradient(&yw, yt);
        let shifted: Vec<f64> = yw.iter().zip(&gw).map(|(y, g)| y - step * g).collect();
        let cand_w = project_simplex(&shifted);
        let cand_t = yt - step * gt;

        // Prox-gradient mapping at y.
        let mut sq: Vec<f64> = yw
            .iter()
            .zip(&cand_w)
            .map(|(a, b)| (a - b) * (a - b))
            .collect();
        sq.push((yt - cand_t) * (yt - cand_t));
        let pg = lip * pairwise_sum(&sq).sqrt();
        if pg <= tol {
            xw = cand_w;
            xt = cand_t;
            hit_cap = false;
            break;
        }
        let stalled = cand_t == xt && cand_w == xw;
        let momentum: Vec<f64> = cand_w.iter().zip(&xw).map(|(c, x)| c - x).collect();
        let advance = pairwise_dot(&gw, &momentum) + gt * (cand_t - xt);
        if stalled {
            // Fixed point of the prox-gradient map at machine resolution.
            xw = cand_w;
            xt = cand_t;
            hit_cap = false;
            break;
        }
        if advance > 0.0 {
            // Momentum points uphill: restart.
            theta = 1.0;
            yw = cand_w.clone();
            yt = cand_t;
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            yw = cand_w
                .iter()
                .zip(&momentum)
                .map(|(c, d)| c + beta * d)
                .collect();
            yt = cand_t + beta * (cand_t - xt);
            theta = theta_next;
        }
        xw = cand_w;
        xt = cand_t;
    }
    WtSolution {
        w: xw,
        t: xt,
        iters,
        hit_cap,
    }
}

/// Power-iteration estimate of `lambda_max(R'R)`.
pub(crate) fn gram_norm_r(r: &Matrix) -> f64 {
    let n = r.cols();
    let mut v: Vec<f64> = (0..n).map(|j| 1.0 + 0.01 * j as f64).collect();
    let norm0 = pairwise_dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm0);
    let mut rayleigh = 0.0f64;
    for _ in 0..100 {
        let av = r.matvec(&v);
        let next = r.matvec_t(&av);
        let new_rayleigh = pairwise_dot(&v, &next);
        let norm = pairwise_dot(&next, &next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vj, nj) in v.iter_mut().zip(&next) {
            *vj = nj / norm;
        }
        if (new_rayleigh - rayleigh).abs() <= 1e-8 * new_rayleigh.abs().max(1e-30) {
            return new_rayleigh;
        }
        rayleigh = new_rayleigh;
    }
    rayleigh
}

/// Power-iteration estimate of `lambda_max(A'A)` for
/// `A = [[R, 1_m], [mu', 0]]`; the Lipschitz constant of the block gradient
/// is `sigma` times this.
pub(crate) fn gram_norm(r: &Matrix, mu: &[f64]) -> f64 {
    let n = r.cols();
    let mut v: Vec<f64> = (0..n + 1).map(|j| 1.0 + 0.01 * j as f64).collect();
    let norm0 = pairwise_dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm0);
    let mut rayleigh = 0.0f64;
    for _ in 0..100 {
        let mut av = r.matvec(&v[..n]);
        let vt = v[n];
        av.iter_mut().for_each(|x| *x += vt);
        let av_mu = pairwise_dot(mu, &v[..n]);
        let mut next = r.matvec_t(&av);
        for (nj, mj) in next.iter_mut().zip(mu) {
            *nj += mj * av_mu;
        }
        next.push(pairwise_sum(&av));
        let new_rayleigh = pairwise_dot(&v, &next);
        let norm = pairwise_dot(&next, &next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vj, nj) in v.iter_mut().zip(&next) {
            *vj = nj / norm;
        }
        if (new_rayleigh - rayleigh).abs() <= 1e-8 * new_rayleigh.abs().max(1e-30) {
            return new_rayleigh;
        }
        rayleigh = new_rayleigh;
    }
    rayleigh
}
