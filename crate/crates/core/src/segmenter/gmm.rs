//! Full-covariance RGB Gaussian mixtures with hard-assignment fitting.

use rand::Rng;

pub type Color = [f64; 3];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Color,
    pub covariance: [[f64; 3]; 3],
    inverse: [[f64; 3]; 3],
    log_det: f64,
}

impl Gaussian {
    /// `covariance` must be symmetric positive definite.
    pub fn new(mean: Color, covariance: [[f64; 3]; 3]) -> Self {
        let c = &covariance;
        let det = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1])
            - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
            + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
        assert!(det > 0.0, "covariance must be positive definite (det = {det})");
        let inv_det = 1.0 / det;
        let inverse = [
            [
                (c[1][1] * c[2][2] - c[1][2] * c[2][1]) * inv_det,
                (c[0][2] * c[2][1] - c[0][1] * c[2][2]) * inv_det,
                (c[0][1] * c[1][2] - c[0][2] * c[1][1]) * inv_det,
            ],
            [
                (c[1][2] * c[2][0] - c[1][0] * c[2][2]) * inv_det,
                (c[0][0] * c[2][2] - c[0][2] * c[2][0]) * inv_det,
                (c[0][2] * c[1][0] - c[0][0] * c[1][2]) * inv_det,
            ],
            [
                (c[1][0] * c[2][1] - c[1][1] * c[2][0]) * inv_det,
                (c[0][1] * c[2][0] - c[0][0] * c[2][1]) * inv_det,
                (c[0][0] * c[1][1] - c[0][1] * c[1][0]) * inv_det,
            ],
        ];
        Self { mean, covariance, inverse, log_det: det.ln() }
    }

    pub fn determinant(&self) -> f64 {
        self.log_det.exp()
    }

    /// Negative log density.
    pub fn neg_log_density(&self, z: &Color) -> f64 {
        let d = [z[0] - self.mean[0], z[1] - self.mean[1], z[2] - self.mean[2]];
        let inv = &self.inverse;
        let mut m = 0.0;
        for i in 0..3 {
            m += d[i] * (inv[i][0] * d[0] + inv[i][1] * d[1] + inv[i][2] * d[2]);
        }
        0.5 * (3.0 * LN_2PI + self.log_det + m)
    }
}

/// Mixture of `K` Gaussians. Components with zero weight are unused and
/// cost `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian>,
}

impl Gmm {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `-ln(w_k) - ln N(z | mu_k, Sigma_k)`.
    pub fn component_cost(&self, k: usize, z: &Color) -> f64 {
        let w = self.weights[k];
        if w <= 0.0 {
            return f64::INFINITY;
        }
        -w.ln() + self.components[k].neg_log_density(z)
    }

    /// Cheapest component for `z` and its cost; ties go to the lower index.
    pub fn best_component(&self, z: &Color) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.len() {
            let c = self.component_cost(k, z);
            if c < best.1 {
                best = (k, c);
            }
        }
        best
    }

    pub fn cost(&self, z: &Color) -> f64 {
        self.best_component(z).1
    }

    /// Maximum-likelihood refit from hard assignments, with `epsilon * I`
    /// added to every covariance.
    pub fn from_assignments(samples: &[Color], assignment: &[usize], k: usize, epsilon: f64) -> Self {
        let mut count = vec![0usize; k];
        let mut sum = vec![[0.0f64; 3]; k];
        for (z, &a) in samples.iter().zip(assignment) {
            count[a] += 1;
            for c in 0..3 {
                sum[a][c] += z[c];
            }
        }
        let means: Vec<Color> = (0..k)
            .map(|i| {
                if count[i] == 0 {
                    [0.0; 3]
                } else {
                    sum[i].map(|s| s / count[i] as f64)
                }
            })
            .collect();
        let mut scatter = vec![[[0.0f64; 3]; 3]; k];
        for (z, &a) in samples.iter().zip(assignment) {
            let d = [z[0] - means[a][0], z[1] - means[a][1], z[2] - means[a][2]];
            for r in 0..3 {
                for c in 0..3 {
                    scatter[a][r][c] += d[r] * d[c];
                }
            }
        }
        let total = samples.len().max(1) as f64;
        let mut weights = Vec::with_capacity(k);
        let mut components = Vec::with_capacity(k);
        for i in 0..k {
            let n = count[i].max(1) as f64;
            let mut cov = scatter[i].map(|row| row.map(|v| v / n));
            for (d, row) in cov.iter_mut().enumerate() {
                row[d] += epsilon;
            }
            weights.push(count[i] as f64 / total);
            components.push(Gaussian::new(means[i], cov));
        }
        Self { weights, components }
    }

    /// Seeded k-means++ initialization followed by Lloyd iterations; the
    /// resulting hard clusters give the mixture parameters.
    pub fn fit_kmeans<R: Rng>(
        samples: &[Color],
        k: usize,
        lloyd_iters: usize,
        epsilon: f64,
        rng: &mut R,
    ) -> Self {
        let assignment = kmeans_assign(samples, k, lloyd_iters, rng);
        Self::from_assignments(samples, &assignment, k, epsilon)
    }

    /// Hard assignment of each sample to its cheapest component.
    pub fn assign(&self, samples: &[Color]) -> Vec<usize> {
        samples.iter().map(|z| self.best_component(z).0).collect()
    }

    /// Sum of per-sample best-component costs.
    pub fn total_cost(&self, samples: &[Color]) -> f64 {
        samples.iter().map(|z| self.cost(z)).sum()
    }
}

fn dist2(a: &Color, b: &Color) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn nearest(z: &Color, centers: &[Color]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(z, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_assign<R: Rng>(samples: &[Color], k: usize, iters: usize, rng: &mut R) -> Vec<usize> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut centers: Vec<Color> = vec![samples[rng.random_range(0..samples.len())]];
    let mut d2: Vec<f64> = samples.iter().map(|z| dist2(z, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        // Every sample coincides with a center: no further distinct seeds.
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = samples.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = samples[pick];
        centers.push(c);
        for (i, z) in samples.iter().enumerate() {
            d2[i] = d2[i].min(dist2(z, &c));
        }
    }

    let mut assignment: Vec<usize> = samples.iter().map(|z| nearest(z, &centers).0).collect();
    for _ in 0..iters {
        let mut sum = vec![[0.0f64; 3]; centers.len()];
        let mut count = vec![0usize; centers.len()];
        for (z, &a) in samples.iter().zip(&assignment) {
            count[a] += 1;
            for c in 0..3 {
                sum[a][c] += z[c];
            }
        }
        for (i, center) in centers.iter_mut().enumerate() {
            if count[i] > 0 {
                *center = sum[i].map(|s| s / count[i] as f64);
            }
        }
        let next: Vec<usize> = samples.iter().map(|z| nearest(z, &centers).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    assignment
}
