//! Stick-breaking composition, the GEM prior, and stick-usage statistics.
//!
//! With fractions `v_1, …, v_K` (the last fixed to one by truncation) the
//! weights are `π_1 = v_1` and `π_k = v_k · Π_{j<k} (1 − v_j)`.

use crate::distributions::BetaParams;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Truncation level used for MNIST-scale models.
pub const DEFAULT_TRUNCATION: usize = 50;
/// Truncation level used for Frey-Faces-scale models.
pub const SMALL_TRUNCATION: usize = 25;
/// Stick mass that [`effective_dimension`] counts up to by default.
pub const DEFAULT_EFFECTIVE_MASS: f64 = 0.99;
/// Concentration values searched by cross-validation.
pub const CONCENTRATION_GRID: [f64; 4] = [1.0, 3.0, 5.0, 8.0];

/// Stick fractions `v` of length `K` with `v_K = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StickFractions {
    v: Vec<f64>,
}

impl StickFractions {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let Some((&last, head)) = v.split_last() else {
            return Err(Error::Domain("stick fractions need K >= 1".into()));
        };
        if last != 1.0 {
            return Err(Error::Domain(format!(
                "the last stick fraction must be exactly 1, got {last}"
            )));
        }
        if let Some((k, x)) = head.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x < 1.0)) {
            return Err(Error::Domain(format!(
                "stick fraction {k} must lie in (0, 1), got {x}"
            )));
        }
        Ok(Self { v })
    }

    /// Appends the deterministic final fraction to `K − 1` stochastic ones.
    pub fn from_stochastic(stochastic: &[f64]) -> Result<Self> {
        let mut v = stochastic.to_vec();
        v.push(1.0);
        Self::new(v)
    }

    pub fn truncation(&self) -> usize {
        self.v.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    /// The `K − 1` fractions that carry a variational distribution.
    pub fn stochastic(&self) -> &[f64] {
        &self.v[..self.v.len() - 1]
    }
}

/// Simplex weights produced by [`compose_sticks`].
#[derive(Clone, Debug, PartialEq)]
pub struct StickWeights {
    pi: Vec<f64>,
}

impl StickWeights {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Domain("stick weights must be non-negative".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("stick weights sum to {total}, not 1")));
        }
        Ok(Self { pi })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.pi
    }
}

/// GEM(α₀) prior over stick weights; every fraction is Beta(1, α₀).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GemPrior {
    alpha0: f64,
}

impl GemPrior {
    pub fn new(alpha0: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(Error::Domain(format!(
                "GEM concentration must be positive, got {alpha0}"
            )));
        }
        Ok(Self { alpha0 })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    /// Prior mean of `π_k` (1-based `k`): `(1/(1+α₀)) (α₀/(1+α₀))^{k−1}`.
    pub fn expected_weight(&self, k: usize) -> f64 {
        let r = self.alpha0 / (1.0 + self.alpha0);
        r.powi(k as i32 - 1) / (1.0 + self.alpha0)
    }
}

pub fn gem_prior_fraction_params(prior: GemPrior) -> BetaParams {
    BetaParams::new(1.0, prior.alpha0).expect("alpha0 validated by GemPrior")
}

pub fn compose_sticks(f: &StickFractions) -> StickWeights {
    let mut pi = vec![0.0; f.truncation()];
    compose_into(f.stochastic(), &mut pi);
    StickWeights { pi }
}

/// Writes the `K` weights for `K − 1` stochastic fractions into `out`.
pub(crate) fn compose_into(stochastic: &[f64], out: &mut [f64]) {
    debug_assert_eq!(stochastic.len() + 1, out.len());
    let mut remaining = 1.0;
    for (o, &v) in out.iter_mut().zip(stochastic) {
        *o = v * remaining;
        remaining *= 1.0 - v;
    }
    out[stochastic.len()] = remaining;
}

/// Vector-Jacobian product: given `∂L/∂π` (length K) writes `∂L/∂v` for the
/// `K − 1` stochastic fractions in linear time, without dividing by `1 − v`.
pub(crate) fn compose_vjp(stochastic: &[f64], grad_pi: &[f64], grad_v: &mut [f64]) {
    let n = stochastic.len();
    debug_assert_eq!(grad_pi.len(), n + 1);
    debug_assert_eq!(grad_v.len(), n);
    // suffix[j] = Σ_{k>j} g_k v_k Π_{j<l<k} (1 − v_l), with v_K = 1
    let mut suffix = grad_pi[n];
    let mut remaining_after = vec![0.0; n];
    for j in (0..n).rev() {
        remaining_after[j] = suffix;
        suffix = grad_pi[j] * stochastic[j] + (1.0 - stochastic[j]) * suffix;
    }
    let mut remaining = 1.0;
    for j in 0..n {
        grad_v[j] = remaining * (grad_pi[j] - remaining_after[j]);
        remaining *= 1.0 - stochastic[j];
    }
}

/// Dense Jacobian ∂π/∂v, `K × (K − 1)`; only stochastic fractions appear
/// as columns.
pub fn compose_sticks_jacobian(f: &StickFractions) -> DenseMatrix {
    let v = f.as_slice();
    let k_total = v.len();
    let prod_except = |upto: usize, skip: usize| -> f64 {
        (0..upto)
            .filter(|&l| l != skip)
            .map(|l| 1.0 - v[l])
            .product()
    };
    DenseMatrix::from_fn(k_total, k_total - 1, |k, j| {
        if j > k {
            0.0
        } else if j == k {
            prod_except(k, usize::MAX)
        } else {
            -v[k] * prod_except(k, j)
        }
    })
}

/// Smallest `n` with `Σ_{k≤n} π_k ≥ mass`; `K` if the threshold is never
/// reached in floating point.
pub fn effective_dimension(w: &StickWeights, mass: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in w.pi.iter().enumerate() {
        acc += p;
        if acc >= mass {
            return k + 1;
        }
    }
    w.pi.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::beta1_quantile;
    use crate::numerics::{finite_difference_gradient, RngState};
    use proptest::prelude::*;
    use sbvae_oracle::mean_and_stderr;

    fn fractions(v: &[f64]) -> StickFractions {
        StickFractions::new(v.to_vec()).unwrap()
    }

    #[test]
    fn compose_examples() {
        let w = compose_sticks(&fractions(&[0.5, 0.5, 1.0]));
        assert_eq!(w.as_slice(), &[0.5, 0.25, 0.25]);
        let w = compose_sticks(&fractions(&[1.0]));
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn first_fraction_near_one_takes_whole_stick() {
        let w = compose_sticks(&fractions(&[1.0 - 1e-16, 0.3, 0.6, 1.0]));
        assert!((w.as_slice()[0] - 1.0).abs() < 1e-15);
        assert!(w.as_slice()[1..].iter().all(|&p| p < 1e-15));
    }

    #[test]
    fn fraction_validation() {
        assert!(StickFractions::new(vec![]).is_err());
        assert!(StickFractions::new(vec![0.5, 0.9]).is_err());
        assert!(StickFractions::new(vec![0.0, 1.0]).is_err());
        assert!(StickFractions::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn jacobian_two_sticks() {
        let j = compose_sticks_jacobian(&fractions(&[0.3, 1.0]));
        assert_eq!(j.shape(), (2, 1));
        assert_eq!(j.get(0, 0), 1.0);
        assert_eq!(j.get(1, 0), -1.0);
    }

    #[test]
    fn jacobian_matches_finite_differences_and_vjp() {
        let mut rng = RngState::new(21);
        for _ in 0..20 {
            let k = 2 + rng.below(8);
            let stoch: Vec<f64> = (0..k - 1).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
            let f = StickFractions::from_stochastic(&stoch).unwrap();
            let jac = compose_sticks_jacobian(&f);
            for out in 0..k {
                let fd = finite_difference_gradient(
                    |t| Ok(compose_sticks(&StickFractions::from_stochastic(t)?).as_slice()[out]),
                    &stoch,
                    1e-6,
                )
                .unwrap();
                for (j, g) in fd.iter().enumerate() {
                    assert!((jac.get(out, j) - g).abs() < 1e-7);
                }
            }
            let upstream: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
            let mut vjp = vec![0.0; k - 1];
            compose_vjp(&stoch, &upstream, &mut vjp);
            for j in 0..k - 1 {
                let dense: f64 = (0..k).map(|i| upstream[i] * jac.get(i, j)).sum();
                assert!((dense - vjp[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gem_prior_params() {
        for &a in &CONCENTRATION_GRID {
            let p = gem_prior_fraction_params(GemPrior::new(a).unwrap());
            assert_eq!((p.alpha(), p.beta()), (1.0, a));
        }
        assert!(GemPrior::new(0.0).is_err());
    }

    #[test]
    fn gem_weight_moments() {
        for &alpha0 in &[1.0, 5.0] {
            let prior = GemPrior::new(alpha0).unwrap();
            let mut rng = RngState::new(alpha0 as u64);
            let k = 12;
            let mut samples = vec![Vec::new(); k];
            let mut pi = vec![0.0; k];
            for _ in 0..100_000 {
                let v: Vec<f64> = (0..k - 1)
                    .map(|_| beta1_quantile(rng.uniform(), alpha0).unwrap())
                    .collect();
                compose_into(&v, &mut pi);
                for (s, p) in samples.iter_mut().zip(&pi) {
                    s.push(*p);
                }
            }
            for (i, s) in samples.iter().enumerate().take(10) {
                let (mean, se) = mean_and_stderr(s);
                let expect = prior.expected_weight(i + 1);
                assert!((mean - expect).abs() < 3.0 * se, "k={} {mean} {expect}", i + 1);
            }
        }
    }

    #[test]
    fn effective_dimension_examples() {
        let mut pi = vec![0.995, 0.005];
        pi.extend(std::iter::repeat_n(0.0, 8));
        let w = StickWeights::new(pi).unwrap();
        assert_eq!(effective_dimension(&w, 0.99), 1);
        let w = StickWeights::new(vec![0.1; 10]).unwrap();
        assert_eq!(effective_dimension(&w, DEFAULT_EFFECTIVE_MASS), 10);
    }

    proptest! {
        #[test]
        fn composed_weights_lie_on_simplex(stoch in prop::collection::vec(1e-6f64..1.0 - 1e-6, 0..60)) {
            let f = StickFractions::from_stochastic(&stoch).unwrap();
            let w = compose_sticks(&f);
            let total: f64 = w.as_slice().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(w.as_slice().iter().all(|&p| p >= 0.0));
            let dims: Vec<usize> = [0.5, 0.9, 0.99, 0.999]
                .iter()
                .map(|&m| effective_dimension(&w, m))
                .collect();
            prop_assert!(dims.windows(2).all(|d| d[0] <= d[1]));
            prop_assert!(dims.iter().all(|&d| d >= 1 && d <= f.truncation()));
        }

        #[test]
        fn jacobian_columns_sum_to_zero(stoch in prop::collection::vec(1e-3f64..1.0 - 1e-3, 1..30)) {
            let jac = compose_sticks_jacobian(&StickFractions::from_stochastic(&stoch).unwrap());
            for (j, s) in jac.column_sums().iter().enumerate() {
                prop_assert!(s.abs() <= 1e-12, "column {} sums to {}", j, s);
            }
        }

        #[test]
        fn prefix_composition_is_stable(stoch in prop::collection::vec(1e-3f64..1.0 - 1e-3, 2..20)) {
            // the first weights do not depend on fractions further down the stick
            let full = compose_sticks(&StickFractions::from_stochastic(&stoch).unwrap());
            let cut = stoch.len() / 2;
            let short = compose_sticks(&StickFractions::from_stochastic(&stoch[..cut]).unwrap());
            prop_assert_eq!(&full.as_slice()[..cut], &short.as_slice()[..cut]);
        }
    }
}
