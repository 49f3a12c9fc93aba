//! Adaptation state for the burn-in phase: Robbins–Monro proposal scales and
//! a running covariance estimate for block proposals.

/// A proposal scale adapted toward a target acceptance rate on a
/// diminishing schedule: `scale <- scale * exp(c (acc - target) / n^0.6)`.
#[derive(Debug, Clone)]
pub struct ScaleAdapter {
    log_scale: f64,
    target: f64,
    updates: u64,
    gain: f64,
}

impl ScaleAdapter {
    pub fn new(initial_scale: f64, target: f64) -> Self {
        Self {
            log_scale: initial_scale.ln(),
            target,
            updates: 0,
            gain: 1.0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Feed one realized acceptance probability (burn-in only).
    pub fn update(&mut self, accept_prob: f64) {
        self.updates += 1;
        let step = self.gain * (accept_prob - self.target) / (self.updates as f64).powf(0.6);
        self.log_scale += step;
        // keep scales in a sane range
        self.log_scale = self.log_scale.clamp(-23.0, 23.0);
    }
}

/// Welford running mean/covariance for a small fixed dimension.
#[derive(Debug, Clone)]
pub struct RunningCov {
    n: u64,
    mean: Vec<f64>,
    /// Upper-triangular sums of cross products.
    m2: Vec<f64>,
    dim: usize,
}

impl RunningCov {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
            dim,
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let nf = self.n as f64;
        let mut delta = vec![0.0; self.dim];
        for i in 0..self.dim {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / nf;
        }
        for i in 0..self.dim {
            let delta2_i = x[i] - self.mean[i];
            for j in 0..self.dim {
                self.m2[i * self.dim + j] += delta[j] * delta2_i;
            }
        }
    }

    /// Sample covariance; `None` until there are two observations.
    pub fn covariance(&self) -> Option<Vec<f64>> {
        if self.n < 2 {
            return None;
        }
        let denom = (self.n - 1) as f64;
        Some(self.m2.iter().map(|v| v / denom).collect())
    }
}

/// Lower Cholesky factor of a small SPD matrix with a diagonal ridge.
/// Falls back to a diagonal factor when the matrix is not positive definite.
pub fn cholesky_with_ridge(cov: &[f64], dim: usize, ridge: f64) -> Vec<f64> {
    let mut a = cov.to_vec();
    for i in 0..dim {
        a[i * dim + i] += ridge;
    }
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum <= 0.0 {
                    // fall back: diagonal from the (ridged) variances
                    let mut diag = vec![0.0; dim * dim];
                    for d in 0..dim {
                        diag[d * dim + d] = a[d * dim + d].max(ridge).sqrt();
                    }
                    return diag;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_moves_toward_target() {
        let mut a = ScaleAdapter::new(1.0, 0.44);
        for _ in 0..200 {
            a.update(0.0); // constant rejection should shrink the scale
        }
        assert!(a.scale() < 1.0);
        let mut b = ScaleAdapter::new(1.0, 0.44);
        for _ in 0..200 {
            b.update(1.0);
        }
        assert!(b.scale() > 1.0);
    }

    #[test]
    fn running_cov_matches_direct() {
        let data = [
            [1.0, 2.0],
            [2.0, 1.0],
            [3.0, 5.0],
            [-1.0, 0.5],
            [0.0, 2.5],
        ];
        let mut rc = RunningCov::new(2);
        for row in &data {
            rc.push(row);
        }
        let cov = rc.covariance().unwrap();
        // direct computation
        let mx = data.iter().map(|r| r[0]).sum::<f64>() / 5.0;
        let my = data.iter().map(|r| r[1]).sum::<f64>() / 5.0;
        let sxx = data.iter().map(|r| (r[0] - mx) * (r[0] - mx)).sum::<f64>() / 4.0;
        let sxy = data.iter().map(|r| (r[0] - mx) * (r[1] - my)).sum::<f64>() / 4.0;
        assert!((cov[0] - sxx).abs() < 1e-12);
        assert!((cov[1] - sxy).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let cov = [4.0, 1.2, 1.2, 2.0];
        let l = cholesky_with_ridge(&cov, 2, 0.0);
        // L L^T == cov
        let c00 = l[0] * l[0];
        let c10 = l[2] * l[0];
        let c11 = l[2] * l[2] + l[3] * l[3];
        assert!((c00 - 4.0).abs() < 1e-12);
        assert!((c10 - 1.2).abs() < 1e-12);
        assert!((c11 - 2.0).abs() < 1e-12);
    }
}
