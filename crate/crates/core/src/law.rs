//! Quasi-linear diffusion laws `a(t, ξ)` and material parameters.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FsiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    Linear,
    Saturating,
    TimeModulated,
}

impl FromStr for LawKind {
    type Err = FsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LawKind::Linear),
            "saturating" => Ok(LawKind::Saturating),
            "time-modulated" => Ok(LawKind::TimeModulated),
            other => Err(FsiError::Config(format!(
                "unknown law.id {other:?} (expected linear, saturating or time-modulated)"
            ))),
        }
    }
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LawKind::Linear => "linear",
            LawKind::Saturating => "saturating",
            LawKind::TimeModulated => "time-modulated",
        })
    }
}

/// `a(t, ξ) = k(t) ξ + β ξ / (1 + |ξ|)` with `k = κ` or
/// `k(t) = ½(α_min + α_max) + ½(α_max - α_min) sin(2πt/T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionLaw {
    pub kind: LawKind,
    pub kappa: f64,
    pub beta: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Period of the time modulation and end of the admissible time range.
    pub t_final: f64,
}

impl DiffusionLaw {
    pub fn linear(kappa: f64) -> Result<Self> {
        Self::new(LawKind::Linear, kappa, 0.0, kappa, kappa, 1.0)
    }

    pub fn saturating(kappa: f64, beta: f64) -> Result<Self> {
        Self::new(LawKind::Saturating, kappa, beta, kappa, kappa, 1.0)
    }

    pub fn time_modulated(alpha_min: f64, alpha_max: f64, beta: f64, t_final: f64) -> Result<Self> {
        Self::new(LawKind::TimeModulated, alpha_min, beta, alpha_min, alpha_max, t_final)
    }

    /// Validates the parameters that make the law well formed. A negative
    /// `beta` is accepted here on purpose: it is what [`certify_constants`]
    /// exists to reject.
    pub fn new(
        kind: LawKind,
        kappa: f64,
        beta: f64,
        alpha_min: f64,
        alpha_max: f64,
        t_final: f64,
    ) -> Result<Self> {
        let finite = [kappa, beta, alpha_min, alpha_max, t_final].iter().all(|x| x.is_finite());
        if !finite {
            return Err(FsiError::Config("law parameters must be finite".into()));
        }
        if !(t_final > 0.0) {
            return Err(FsiError::Config("law time range must be positive".into()));
        }
        match kind {
            LawKind::Linear | LawKind::Saturating if !(kappa > 0.0) => {
                return Err(FsiError::Config(format!("law.kappa must be positive, got {kappa}")))
            }
            LawKind::TimeModulated if !(alpha_min > 0.0 && alpha_max >= alpha_min) => {
                return Err(FsiError::Config(format!(
                    "law.alpha_min = {alpha_min}, law.alpha_max = {alpha_max}: need 0 < alpha_min <= alpha_max"
                )))
            }
            _ => {}
        }
        let beta = if kind == LawKind::Linear { 0.0 } else { beta };
        Ok(DiffusionLaw { kind, kappa, beta, alpha_min, alpha_max, t_final })
    }

    /// Certified strong-monotonicity constant.
    pub fn c_m(&self) -> f64 {
        match self.kind {
            LawKind::Linear | LawKind::Saturating => self.kappa,
            LawKind::TimeModulated => self.alpha_min,
        }
    }

    /// Certified Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            LawKind::Linear => self.kappa,
            LawKind::Saturating => self.kappa + self.beta,
            LawKind::TimeModulated => self.alpha_max + self.beta,
        }
    }

    /// Linear coefficient `k(t)`.
    pub fn coefficient(&self, t: f64) -> f64 {
        match self.kind {
            LawKind::Linear | LawKind::Saturating => self.kappa,
            LawKind::TimeModulated => {
                let mid = 0.5 * (self.alpha_min + self.alpha_max);
                let amp = 0.5 * (self.alpha_max - self.alpha_min);
                mid + amp * (2.0 * PI * t / self.t_final).sin()
            }
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.t_final;
        if !(t >= -slack && t <= self.t_final + slack) {
            return Err(FsiError::Domain(format!(
                "law evaluated at t = {t}, outside [0, {}]",
                self.t_final
            )));
        }
        Ok(())
    }

    /// Unchecked pointwise evaluation.
    #[inline]
    pub fn value(&self, t: f64, xi: [f64; 2]) -> [f64; 2] {
        let r = xi[0].hypot(xi[1]);
        let s = self.coefficient(t) + self.beta / (1.0 + r);
        [s * xi[0], s * xi[1]]
    }

    /// Batched evaluation with the time-range check.
    pub fn eval(&self, t: f64, xi: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        self.check_time(t)?;
        Ok(xi.iter().map(|&x| self.value(t, x)).collect())
    }

    /// Exact `∂a/∂ξ`.
    pub fn jacobian(&self, t: f64, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let k = self.coefficient(t);
        let r = xi[0].hypot(xi[1]);
        let d = k + self.beta / (1.0 + r);
        let mut j = [[d, 0.0], [0.0, d]];
        if r > 0.0 && self.beta != 0.0 {
            let w = self.beta / (r * (1.0 + r) * (1.0 + r));
            for a in 0..2 {
                for b in 0..2 {
                    j[a][b] -= w * xi[a] * xi[b];
                }
            }
        }
        j
    }

    /// `Φ(t, ξ)` with `∇_ξ Φ = a(t, ξ)`.
    pub fn potential(&self, t: f64, xi: [f64; 2]) -> f64 {
        let r = xi[0].hypot(xi[1]);
        0.5 * self.coefficient(t) * r * r + self.beta * (r - r.ln_1p())
    }
}

fn random_vector(rng: &mut ChaCha8Rng, log_r: (f64, f64)) -> [f64; 2] {
    let theta = rng.random_range(0.0..2.0 * PI);
    let r = 10f64.powf(rng.random_range(log_r.0..log_r.1));
    [r * theta.cos(), r * theta.sin()]
}

/// Empirical `(ĉ_m, L̂)` over random `(t, ξ, η)` with `|ξ|, |η| ≤ 10³`;
/// fails if either contradicts the certified constants.
pub fn certify_constants(law: &DiffusionLaw, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples < 10_000 {
        return Err(FsiError::Precondition(format!(
            "certification needs at least 10^4 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_hat = f64::INFINITY;
    let mut l_hat = 0.0_f64;
    for k in 0..samples {
        let t = rng.random_range(0.0..=law.t_final);
        let xi = random_vector(&mut rng, (-6.0, 3.0));
        let eta = match k % 3 {
            // nearby pair: probes the Jacobian
            0 => {
                let d = random_vector(&mut rng, (-7.0, -2.0));
                let s = xi[0].hypot(xi[1]).max(1e-3);
                [xi[0] + s * d[0], xi[1] + s * d[1]]
            }
            1 => random_vector(&mut rng, (-6.0, 3.0)),
            _ => [-xi[0], -xi[1]],
        };
        let diff = [xi[0] - eta[0], xi[1] - eta[1]];
        let n2 = diff[0] * diff[0] + diff[1] * diff[1];
        if n2 == 0.0 {
            continue;
        }
        let a = law.value(t, xi);
        let b = law.value(t, eta);
        let da = [a[0] - b[0], a[1] - b[1]];
        c_hat = c_hat.min((da[0] * diff[0] + da[1] * diff[1]) / n2);
        l_hat = l_hat.max((da[0] * da[0] + da[1] * da[1]).sqrt() / n2.sqrt());
    }
    if c_hat < law.c_m() - 1e-9 {
        return Err(FsiError::LawCertification(format!(
            "{} law: observed monotonicity {c_hat:.6} below certified c_m = {}",
            law.kind,
            law.c_m()
        )));
    }
    if l_hat > law.lipschitz() + 1e-9 {
        return Err(FsiError::LawCertification(format!(
            "{} law: observed Lipschitz quotient {l_hat:.6} above certified L = {}",
            law.kind,
            law.lipschitz()
        )));
    }
    if law.lipschitz() < law.c_m() {
        return Err(FsiError::LawCertification(format!(
            "{} law: L = {} is below c_m = {}",
            law.kind,
            law.lipschitz(),
            law.c_m()
        )));
    }
    Ok((c_hat, l_hat))
}

/// Lamé parameters with unit density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolidParams {
    pub mu: f64,
    pub lambda: f64,
}

impl SolidParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(FsiError::Config(format!("solid.mu must be positive, got {mu}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(FsiError::Config(format!("solid.lambda must be nonnegative, got {lambda}")));
        }
        Ok(SolidParams { mu, lambda })
    }
}

/// Viscosity is normalized to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub nu: f64,
    pub law: DiffusionLaw,
}

impl FluidParams {
    pub fn new(law: DiffusionLaw) -> Self {
        FluidParams { nu: 1.0, law }
    }
}
