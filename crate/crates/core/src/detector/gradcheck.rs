//! Finite-difference verification of the altitude-fusion layers.
//!
//! Training the fusion stack depends on its gradients being right; this
//! check compares analytic backprop against central finite differences on
//! a small seeded instance, in f64 so the comparison is meaningful.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Feature length of the check instance (the altitude slot makes the
/// input 13 wide).
pub const CHECK_INPUT_LEN: usize = 12;
const CHECK_HIDDEN: usize = 16;
const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct FcCheckInstance {
    features: Vec<f64>,
    altitude: f64,
    w1: Vec<f64>, // hidden x (len + 1)
    b1: Vec<f64>,
    w2: Vec<f64>, // len x hidden
    b2: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub altitude_gradient: f64,
    pub loss: f64,
    pub params_checked: usize,
}

/// Run the default seeded gradient check.
pub fn fc_gradient_check(seed: u64) -> GradCheckReport {
    FcCheckInstance::seeded(seed).run()
}

impl FcCheckInstance {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-0.5f64, 0.5);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| dist.sample(&mut rng)).collect() };
        let features = draw(CHECK_INPUT_LEN);
        let altitude = draw(1)[0] + 1.0; // keep positive, away from zero
        let w1 = draw(CHECK_HIDDEN * (CHECK_INPUT_LEN + 1));
        let b1 = draw(CHECK_HIDDEN);
        let w2 = draw(CHECK_INPUT_LEN * CHECK_HIDDEN);
        let b2 = draw(CHECK_INPUT_LEN);
        Self {
            features,
            altitude,
            w1,
            b1,
            w2,
            b2,
        }
    }

    /// All-zero weights: zero loss and zero gradients everywhere.
    pub fn zeroed(seed: u64) -> Self {
        let mut inst = Self::seeded(seed);
        inst.w1.iter_mut().for_each(|v| *v = 0.0);
        inst.b1.iter_mut().for_each(|v| *v = 0.0);
        inst.w2.iter_mut().for_each(|v| *v = 0.0);
        inst.b2.iter_mut().for_each(|v| *v = 0.0);
        inst
    }

    /// Loss = sum of squares of the FC2 output.
    fn loss(&self) -> f64 {
        let (_, _, y) = self.forward();
        y.iter().map(|v| v * v).sum()
    }

    /// Returns (input vector, hidden activations, output).
    fn forward(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n_in = CHECK_INPUT_LEN + 1;
        let mut v = self.features.clone();
        v.push(self.altitude);
        let mut hidden = vec![0.0; CHECK_HIDDEN];
        for (i, h) in hidden.iter_mut().enumerate() {
            let mut acc = self.b1[i];
            for (j, vj) in v.iter().enumerate() {
                acc += self.w1[i * n_in + j] * vj;
            }
            *h = acc.max(0.0);
        }
        let mut y = vec![0.0; CHECK_INPUT_LEN];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = self.b2[i];
            for (j, hj) in hidden.iter().enumerate() {
                acc += self.w2[i * CHECK_HIDDEN + j] * hj;
            }
            *yi = acc;
        }
        (v, hidden, y)
    }

    /// Analytic gradients of the loss w.r.t. (w1, b1, w2, b2, altitude).
    fn analytic(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let n_in = CHECK_INPUT_LEN + 1;
        let (v, hidden, y) = self.forward();
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();

        let mut dw2 = vec![0.0; self.w2.len()];
        for i in 0..CHECK_INPUT_LEN {
            for j in 0..CHECK_HIDDEN {
                dw2[i * CHECK_HIDDEN + j] = dy[i] * hidden[j];
            }
        }
        let db2 = dy.clone();

        let mut dh = vec![0.0; CHECK_HIDDEN];
        for (j, dhj) in dh.iter_mut().enumerate() {
            for i in 0..CHECK_INPUT_LEN {
                *dhj += dy[i] * self.w2[i * CHECK_HIDDEN + j];
            }
        }
        // ReLU gate: pass gradient only where the unit is active
        let dz: Vec<f64> = dh
            .iter()
            .zip(&hidden)
            .map(|(&g, &h)| if h > 0.0 { g } else { 0.0 })
            .collect();

        let mut dw1 = vec![0.0; self.w1.len()];
        for i in 0..CHECK_HIDDEN {
            for j in 0..n_in {
                dw1[i * n_in + j] = dz[i] * v[j];
            }
        }
        let db1 = dz.clone();

        let mut d_alt = 0.0;
        for i in 0..CHECK_HIDDEN {
            d_alt += dz[i] * self.w1[i * n_in + (n_in - 1)];
        }
        (dw1, db1, dw2, db2, d_alt)
    }

    pub fn run(&self) -> GradCheckReport {
        let (dw1, db1, dw2, db2, d_alt) = self.analytic();

        let mut max_rel = 0.0f64;
        let mut checked = 0usize;
        let mut compare = |analytic: f64, fd: f64| {
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max((analytic - fd).abs() / denom);
            checked += 1;
        };

        let mut inst = self.clone();
        macro_rules! fd_field {
            ($field:ident, $grads:expr) => {
                for k in 0..inst.$field.len() {
                    let orig = inst.$field[k];
                    inst.$field[k] = orig + FD_STEP;
                    let plus = inst.loss();
                    inst.$field[k] = orig - FD_STEP;
                    let minus = inst.loss();
                    inst.$field[k] = orig;
                    compare($grads[k], (plus - minus) / (2.0 * FD_STEP));
                }
            };
        }
        fd_field!(w1, dw1);
        fd_field!(b1, db1);
        fd_field!(w2, dw2);
        fd_field!(b2, db2);

        let orig = inst.altitude;
        inst.altitude = orig + FD_STEP;
        let plus = inst.loss();
        inst.altitude = orig - FD_STEP;
        let minus = inst.loss();
        inst.altitude = orig;
        compare(d_alt, (plus - minus) / (2.0 * FD_STEP));

        GradCheckReport {
            max_relative_error: max_rel,
            altitude_gradient: d_alt,
            loss: self.loss(),
            params_checked: checked,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_instance_passes_tolerance() {
        let report = fc_gradient_check(7);
        assert!(
            report.max_relative_error < 1e-4,
            "max relative error {}",
            report.max_relative_error
        );
        assert!(report.params_checked > 400);
    }

    #[test]
    fn altitude_gradient_is_nonzero_for_generic_seed() {
        let report = fc_gradient_check(7);
        assert!(report.altitude_gradient.abs() > 1e-9);
    }

    #[test]
    fn zero_weights_zero_everything() {
        let report = FcCheckInstance::zeroed(7).run();
        assert_eq!(report.loss, 0.0);
        assert_eq!(report.altitude_gradient, 0.0);
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn check_is_seed_deterministic() {
        let a = fc_gradient_check(3);
        let b = fc_gradient_check(3);
        assert_eq!(a.max_relative_error, b.max_relative_error);
        assert_eq!(a.loss, b.loss);
    }
}
