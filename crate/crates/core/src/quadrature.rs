//! Gauss–Hermite rules for expectations over standard normal innovations.

use std::f64::consts::PI;

/// Nodes and weights for `E[f(X)]`, `X ~ N(0, 1)`.
///
/// Weights are normalized to sum to one; abscissae are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    /// Builds an `n`-point rule by Newton iteration on the physicists' Hermite
    /// recurrence, then rescales to the standard normal measure.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        if n == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            };
        }
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let m = (n + 1) / 2;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0f64;
        for i in 0..m {
            // Initial guesses for the largest roots first.
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        // Physicists' rule integrates against exp(-t^2); X = sqrt(2) t.
        let scale = 1.0 / PI.sqrt();
        let mut nodes: Vec<f64> = x.iter().map(|t| t * std::f64::consts::SQRT_2).collect();
        let mut weights: Vec<f64> = w.iter().map(|wi| wi * scale).collect();
        nodes.reverse();
        weights.reverse();
        let total: f64 = weights.iter().sum();
        for wi in &mut weights {
            *wi /= total;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
