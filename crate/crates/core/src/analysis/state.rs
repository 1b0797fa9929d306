use nalgebra::Cholesky;

use super::{BregmanVariant, Formulation, Hyperparams, IncoherenceVariant};
use crate::error::{Error, Result};
use crate::numkernels::{frobenius_sq, l1_norm, ridge_solve, seeded_gaussian, soft_threshold, sylvester_solve, Matrix};

/// Split Bregman variables of one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceState {
    pub label: String,
    /// Training data `X_i` (d × n).
    pub target: Matrix,
    /// Analysis operator `D_i` (p × d).
    pub dict: Matrix,
    /// Estimate `X̂_i` (d × n).
    pub estimate: Matrix,
    /// Proxy `Z_i ≈ D_i X̂_i` (p × n).
    pub proxy: Matrix,
    /// Bregman variable `B_i` (p × n).
    pub bregman: Matrix,
}

impl ApplianceState {
    pub fn constraint_residual(&self) -> f64 {
        (&self.proxy - &self.dict * &self.estimate).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub parts: Vec<ApplianceState>,
    /// Completed outer iterations.
    pub iteration: usize,
}

/// Incoherence between two dictionaries under the chosen orientation.
pub fn incoherence(di: &Matrix, dj: &Matrix, variant: IncoherenceVariant) -> f64 {
    match variant {
        // ‖D_iᵀD_j − I_d‖² = ⟨D_iD_iᵀ, D_jD_jᵀ⟩ − 2⟨D_i, D_j⟩ + d, without forming the d × d product.
        IncoherenceVariant::LiteralDxd => {
            let gi = di * di.transpose();
            let gj = dj * dj.transpose();
            gi.dot(&gj) - 2.0 * di.dot(dj) + di.ncols() as f64
        }
        IncoherenceVariant::CrossGramPxp => {
            let mut m = di * dj.transpose();
            for k in 0..m.nrows().min(m.ncols()) {
                m[(k, k)] -= 1.0;
            }
            frobenius_sq(&m)
        }
    }
}

/// Tikhonov weight relative to the trace of a normal matrix.
fn relative_eps(ls_eps: f64, trace: f64) -> f64 {
    if trace > 0.0 {
        ls_eps * trace
    } else {
        ls_eps
    }
}

impl TrainState {
    /// `X̂ = X`, `D` seeded per appliance, `Z = D X̂`, `B` constant.
    pub fn init(targets: &[(String, Matrix)], h: &Hyperparams) -> Result<Self> {
        h.validate()?;
        if targets.is_empty() {
            return Err(Error::invalid("training needs at least one appliance"));
        }
        let d = targets[0].1.nrows();
        let mut parts = Vec::with_capacity(targets.len());
        for (i, (label, x)) in targets.iter().enumerate() {
            if x.nrows() != d {
                return Err(Error::invalid(format!("appliance `{label}` has {} slots, expected {d}", x.nrows())));
            }
            if x.nrows() == 0 || x.ncols() == 0 || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("appliance `{label}` data must be nonempty and finite")));
            }
            if !frobenius_sq(x).is_finite() {
                return Err(Error::invalid(format!(
                    "appliance `{label}` data energy overflows f64; rescale the input"
                )));
            }
            let dict = seeded_gaussian(h.atoms, d, h.appliance_seed(i));
            let estimate = x.clone();
            let proxy = &dict * &estimate;
            let bregman = Matrix::from_element(h.atoms, x.ncols(), h.bregman_init.value());
            parts.push(ApplianceState { label: label.clone(), target: x.clone(), dict, estimate, proxy, bregman });
        }
        Ok(Self { parts, iteration: 0 })
    }

    /// Runs the trainer loop from the current state.
    pub fn train(&mut self, h: &Hyperparams, form: Formulation) -> Result<Vec<super::ApplianceTrace>> {
        super::train::run(self, h, form)
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.parts.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!("appliance index {i} out of range for {}", self.parts.len())))
        }
    }

    fn others(&self, i: usize) -> impl Iterator<Item = &ApplianceState> {
        self.parts.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, p)| p)
    }

    fn coupled_dictionary(&self, form: Formulation, h: &Hyperparams) -> bool {
        (form.has_incoherence() && h.eta > 0.0 && self.parts.len() > 1)
            || (form.has_cross_energy() && h.gamma > 0.0 && self.parts.len() > 1)
    }

    /// Dictionary block minimizer, taking the solution nearest the current
    /// dictionary when the block is not strictly convex.
    pub fn dictionary_step(&mut self, i: usize, h: &Hyperparams, form: Formulation) -> Result<()> {
        self.check_index(i)?;
        let part = &self.parts[i];
        let r = &part.proxy - &part.bregman;
        let xh = &part.estimate;

        let dict = if !self.coupled_dictionary(form, h) {
            let eps = relative_eps(h.ls_eps, frobenius_sq(xh));
            let rhs = (&r - &part.dict * xh).transpose();
            let delta = ridge_solve(&xh.transpose(), &rhs, eps)?;
            &part.dict + delta.transpose()
        } else {
            let (p, d) = part.dict.shape();
            let mut a = Matrix::zeros(p, p);
            let mut c = (xh * xh.transpose()) * h.mu;
            let mut e = (&r * xh.transpose()) * h.mu;
            if form.has_incoherence() && h.eta > 0.0 {
                for other in self.others(i) {
                    let dj = &other.dict;
                    match h.incoherence_variant {
                        IncoherenceVariant::LiteralDxd => a += (dj * dj.transpose()) * h.eta,
                        IncoherenceVariant::CrossGramPxp => c += (dj.transpose() * dj) * h.eta,
                    }
                    e += dj * h.eta;
                }
            }
            if form.has_cross_energy() && h.gamma > 0.0 {
                for other in self.others(i) {
                    c += (&other.estimate * other.estimate.transpose()) * h.gamma;
                }
            }
            let eps = relative_eps(h.ls_eps, a.trace() + c.trace());
            for k in 0..p {
                a[(k, k)] += eps;
            }
            e += &part.dict * eps;
            debug_assert_eq!(c.nrows(), d);
            sylvester_solve(&a, &c, &e)?
        };
        self.parts[i].dict = dict;
        Ok(())
    }

    /// Estimate block minimizer: the stacked least squares
    /// `[I; √γ S_i; √μ D_i] X̂ ≈ [X_i; 0; √μ (Z_i − B_i)]`, solved through its
    /// normal equations.
    pub fn estimate_step(&mut self, i: usize, h: &Hyperparams, form: Formulation) -> Result<()> {
        self.check_index(i)?;
        let part = &self.parts[i];
        let d = part.dict.ncols();
        let mut normal = part.dict.tr_mul(&part.dict) * h.mu;
        for k in 0..d {
            normal[(k, k)] += 1.0;
        }
        if form.has_cross_energy() && h.gamma > 0.0 {
            for other in self.others(i) {
                normal += other.dict.tr_mul(&other.dict) * h.gamma;
            }
        }
        let rhs = &part.target + part.dict.tr_mul(&(&part.proxy - &part.bregman)) * h.mu;
        let chol = Cholesky::new(normal).ok_or_else(|| Error::NumericalFailure {
            context: format!("estimate step for `{}`", part.label),
            residual: f64::NAN,
        })?;
        self.parts[i].estimate = chol.solve(&rhs);
        Ok(())
    }

    /// `Z = soft(D X̂ + B, λ / 2μ)`.
    pub fn proxy_step(&mut self, i: usize, h: &Hyperparams) -> Result<()> {
        self.check_index(i)?;
        let part = &self.parts[i];
        let v = &part.dict * &part.estimate + &part.bregman;
        self.parts[i].proxy = soft_threshold(&v, h.lambda / (2.0 * h.mu))?;
        Ok(())
    }

    pub fn bregman_step(&mut self, i: usize, h: &Hyperparams) -> Result<()> {
        self.check_index(i)?;
        let part = &mut self.parts[i];
        let dx = &part.dict * &part.estimate;
        part.bregman = match h.bregman_variant {
            BregmanVariant::Standard => &part.bregman + dx - &part.proxy,
            BregmanVariant::PaperLiteral => &part.proxy - dx - &part.bregman,
        };
        Ok(())
    }

    pub fn constraint_residual(&self, i: usize) -> f64 {
        self.parts[i].constraint_residual()
    }

    /// Un-augmented objective restricted to the terms that involve appliance
    /// `i`: fidelity, `λ‖D_i X̂_i‖₁`, its incoherence with every other
    /// dictionary and the energy the others' dictionaries see in `X̂_i`.
    pub fn appliance_objective(&self, i: usize, h: &Hyperparams, form: Formulation) -> f64 {
        let part = &self.parts[i];
        let mut f = frobenius_sq(&(&part.target - &part.estimate)) + h.lambda * l1_norm(&(&part.dict * &part.estimate));
        if form.has_incoherence() && h.eta > 0.0 {
            for other in self.others(i) {
                f += h.eta * incoherence(&part.dict, &other.dict, h.incoherence_variant);
            }
        }
        if form.has_cross_energy() && h.gamma > 0.0 {
            for other in self.others(i) {
                f += h.gamma * frobenius_sq(&(&other.dict * &part.estimate));
            }
        }
        f
    }

    /// Incoherence summed over ordered pairs `(i, j ≠ i)`.
    pub fn total_incoherence(&self, variant: IncoherenceVariant) -> f64 {
        let mut s = 0.0;
        for (i, a) in self.parts.iter().enumerate() {
            for (j, b) in self.parts.iter().enumerate() {
                if i != j {
                    s += incoherence(&a.dict, &b.dict, variant);
                }
            }
        }
        s
    }

    /// Augmented Lagrangian of the selected formulation:
    ///
    /// `Σ_i ‖X_i − X̂_i‖² + λ‖Z_i‖₁ + μ‖Z_i − D_i X̂_i − B_i‖²`
    /// `+ η Σ_{i<j} inc(D_i, D_j) + γ Σ_i Σ_{j≠i} ‖D_j X̂_i‖²`.
    ///
    /// Each unordered dictionary pair contributes its incoherence once, so the
    /// per-appliance dictionary step is an exact block minimizer.
    pub fn augmented_objective(&self, h: &Hyperparams, form: Formulation) -> f64 {
        let mut f = 0.0;
        for part in &self.parts {
            f += frobenius_sq(&(&part.target - &part.estimate));
            f += h.lambda * l1_norm(&part.proxy);
            f += h.mu * frobenius_sq(&(&part.proxy - &part.dict * &part.estimate - &part.bregman));
        }
        if form.has_incoherence() {
            for i in 0..self.parts.len() {
                for j in (i + 1)..self.parts.len() {
                    f += h.eta * incoherence(&self.parts[i].dict, &self.parts[j].dict, h.incoherence_variant);
                }
            }
        }
        if form.has_cross_energy() {
            for (i, part) in self.parts.iter().enumerate() {
                for other in self.others(i) {
                    f += h.gamma * frobenius_sq(&(&other.dict * &part.estimate));
                }
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernels::testing::random;
    use proptest::prelude::*;

    /// Brute-force evaluation: explicit loops over every entry, d × d Gram
    /// included.
    fn objective_oracle(s: &TrainState, h: &Hyperparams, form: Formulation) -> f64 {
        let mut f = 0.0;
        for part in &s.parts {
            let (p, d) = part.dict.shape();
            let n = part.target.ncols();
            for t in 0..d {
                for c in 0..n {
                    let r = part.target[(t, c)] - part.estimate[(t, c)];
                    f += r * r;
                }
            }
            for k in 0..p {
                for c in 0..n {
                    f += h.lambda * part.proxy[(k, c)].abs();
                    let mut dx = 0.0;
                    for t in 0..d {
                        dx += part.dict[(k, t)] * part.estimate[(t, c)];
                    }
                    let r = part.proxy[(k, c)] - dx - part.bregman[(k, c)];
                    f += h.mu * r * r;
                }
            }
        }
        let n_app = s.parts.len();
        if form != Formulation::Simple {
            for i in 0..n_app {
                for j in (i + 1)..n_app {
                    let (di, dj) = (&s.parts[i].dict, &s.parts[j].dict);
                    let (p, d) = di.shape();
                    match h.incoherence_variant {
                        IncoherenceVariant::LiteralDxd => {
                            for a in 0..d {
                                for b in 0..d {
                                    let mut g = 0.0;
                                    for k in 0..p {
                                        g += di[(k, a)] * dj[(k, b)];
                                    }
                                    let r = g - if a == b { 1.0 } else { 0.0 };
                                    f += h.eta * r * r;
                                }
                            }
                        }
                        IncoherenceVariant::CrossGramPxp => {
                            for a in 0..p {
                                for b in 0..p {
                                    let mut g = 0.0;
                                    for t in 0..d {
                                        g += di[(a, t)] * dj[(b, t)];
                                    }
                                    let r = g - if a == b { 1.0 } else { 0.0 };
                                    f += h.eta * r * r;
                                }
                            }
                        }
                    }
                }
            }
        }
        if form == Formulation::Disaggregating {
            for i in 0..n_app {
                for j in 0..n_app {
                    if i == j {
                        continue;
                    }
                    let (dj, xi) = (&s.parts[j].dict, &s.parts[i].estimate);
                    for k in 0..dj.nrows() {
                        for c in 0..xi.ncols() {
                            let mut v = 0.0;
                            for t in 0..dj.ncols() {
                                v += dj[(k, t)] * xi[(t, c)];
                            }
                            f += h.gamma * v * v;
                        }
                    }
                }
            }
        }
        f
    }

    fn random_state(n_app: usize, d: usize, n: usize, seed: u64, h: &Hyperparams) -> TrainState {
        let targets: Vec<(String, Matrix)> =
            (0..n_app).map(|i| (format!("a{i}"), random(d, n, seed + 10 * i as u64))).collect();
        let mut s = TrainState::init(&targets, h).unwrap();
        for (i, part) in s.parts.iter_mut().enumerate() {
            let k = seed + 100 + 10 * i as u64;
            part.estimate = random(d, n, k);
            part.proxy = random(h.atoms, n, k + 1);
            part.bregman = random(h.atoms, n, k + 2);
            part.dict = random(h.atoms, d, k + 3);
        }
        s
    }

    fn zero_state(n_app: usize, p: usize, d: usize, n: usize) -> TrainState {
        let part = |i: usize| ApplianceState {
            label: format!("a{i}"),
            target: Matrix::zeros(d, n),
            dict: Matrix::zeros(p, d),
            estimate: Matrix::zeros(d, n),
            proxy: Matrix::zeros(p, n),
            bregman: Matrix::zeros(p, n),
        };
        TrainState { parts: (0..n_app).map(part).collect(), iteration: 0 }
    }

    #[test]
    fn zero_state_values() {
        let h = Hyperparams::default();
        let s = zero_state(2, 3, 10, 4);
        assert_eq!(s.augmented_objective(&h, Formulation::Simple), 0.0);
        // Two appliances: one pair, ‖−I_d‖² = d.
        assert_eq!(s.augmented_objective(&h, Formulation::Distinctive), h.eta * 10.0);
        assert_eq!(s.augmented_objective(&h, Formulation::Disaggregating), h.eta * 10.0);
        let hp = Hyperparams { incoherence_variant: IncoherenceVariant::CrossGramPxp, ..h };
        assert_eq!(s.augmented_objective(&hp, Formulation::Distinctive), hp.eta * 3.0);
    }

    #[test]
    fn fidelity_only_when_penalties_vanish() {
        let h = Hyperparams { lambda: 0.0, mu: 0.0, ..Hyperparams::default() };
        let s = random_state(1, 6, 4, 3, &Hyperparams::default());
        let fid = frobenius_sq(&(&s.parts[0].target - &s.parts[0].estimate));
        assert_eq!(s.augmented_objective(&h, Formulation::Simple), fid);
    }

    #[test]
    fn matches_summation_oracle() {
        for variant in [IncoherenceVariant::LiteralDxd, IncoherenceVariant::CrossGramPxp] {
            let h = Hyperparams { incoherence_variant: variant, ..Hyperparams::default() };
            for seed in 0..5 {
                let s = random_state(3, 7, 5, seed, &h);
                for form in Formulation::ALL {
                    let got = s.augmented_objective(&h, form);
                    let want = objective_oracle(&s, &h, form);
                    assert!((got - want).abs() <= 1e-12 * want.abs(), "{form} {variant:?}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn proxy_step_is_soft_threshold() {
        let h = Hyperparams::default();
        let mut s = random_state(1, 8, 5, 11, &h);
        s.proxy_step(0, &h).unwrap();
        let p = &s.parts[0];
        let want = soft_threshold(&(&p.dict * &p.estimate + &p.bregman), h.lambda / (2.0 * h.mu)).unwrap();
        assert_eq!(p.proxy, want);
    }

    #[test]
    fn bregman_variants() {
        let h = Hyperparams::default();
        let s0 = random_state(1, 5, 3, 4, &h);
        let p = &s0.parts[0];
        let dx = &p.dict * &p.estimate;

        let mut s = s0.clone();
        s.bregman_step(0, &h).unwrap();
        assert_eq!(s.parts[0].bregman, &p.bregman + &dx - &p.proxy);

        let hl = Hyperparams { bregman_variant: BregmanVariant::PaperLiteral, ..h };
        let mut s = s0.clone();
        s.bregman_step(0, &hl).unwrap();
        assert_eq!(s.parts[0].bregman, &p.proxy - &dx - &p.bregman);
    }

    #[test]
    fn index_checked() {
        let h = Hyperparams::default();
        let mut s = random_state(1, 5, 3, 4, &h);
        assert!(matches!(s.proxy_step(1, &h), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn estimate_step_matches_stacked_oracle() {
        use crate::numkernels::testing::stacked_ridge;
        let h = Hyperparams::default();
        let mut s = random_state(3, 9, 4, 21, &h);
        let i = 1;
        let part = s.parts[i].clone();
        let (p, d) = part.dict.shape();
        // [I; √γ D_0; √γ D_2; √μ D_1] X̂ ≈ [X; 0; 0; √μ (Z − B)]
        let rows = d + 3 * p;
        let mut a = Matrix::zeros(rows, d);
        let mut y = Matrix::zeros(rows, part.target.ncols());
        a.view_mut((0, 0), (d, d)).copy_from(&Matrix::identity(d, d));
        y.view_mut((0, 0), (d, y.ncols())).copy_from(&part.target);
        a.view_mut((d, 0), (p, d)).copy_from(&(&s.parts[0].dict * h.gamma.sqrt()));
        a.view_mut((d + p, 0), (p, d)).copy_from(&(&s.parts[2].dict * h.gamma.sqrt()));
        a.view_mut((d + 2 * p, 0), (p, d)).copy_from(&(&part.dict * h.mu.sqrt()));
        y.view_mut((d + 2 * p, 0), (p, y.ncols())).copy_from(&((&part.proxy - &part.bregman) * h.mu.sqrt()));
        let want = stacked_ridge(&a, &y, 0.0);
        s.estimate_step(i, &h, Formulation::Disaggregating).unwrap();
        let got = &s.parts[i].estimate;
        assert!((got - &want).norm() <= 1e-9 * want.norm());
    }

    fn check_block_descent(
        s: &mut TrainState,
        h: &Hyperparams,
        form: Formulation,
    ) -> std::result::Result<(), TestCaseError> {
        let tol = |f: f64| 1e-10 * f.abs().max(1.0);
        for i in 0..s.len() {
            let f0 = s.augmented_objective(h, form);
            s.dictionary_step(i, h, form).unwrap();
            let f1 = s.augmented_objective(h, form);
            prop_assert!(f1 <= f0 + tol(f0), "dictionary step {i}: {f0} -> {f1}");
            s.estimate_step(i, h, form).unwrap();
            let f2 = s.augmented_objective(h, form);
            prop_assert!(f2 <= f1 + tol(f1), "estimate step {i}: {f1} -> {f2}");
            s.proxy_step(i, h).unwrap();
            let f3 = s.augmented_objective(h, form);
            prop_assert!(f3 <= f2 + tol(f2), "proxy step {i}: {f2} -> {f3}");
            s.bregman_step(i, h).unwrap();
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sub_steps_descend(
            d in 3usize..=12,
            n in 1usize..=8,
            n_app in 1usize..=3,
            seed in 0u64..10_000,
            form_idx in 0usize..3,
            cross in any::<bool>(),
            lambda in 0.0f64..2.0,
            mu in 0.05f64..2.0,
        ) {
            let form = Formulation::ALL[form_idx];
            let variant = if cross { IncoherenceVariant::CrossGramPxp } else { IncoherenceVariant::LiteralDxd };
            let h = Hyperparams { lambda, mu, incoherence_variant: variant, ..Hyperparams::default() };
            let mut s = random_state(n_app, d, n, seed, &h);
            for _ in 0..3 {
                check_block_descent(&mut s, &h, form)?;
            }
        }
    }
}
