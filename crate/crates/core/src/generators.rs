//! Bregman generator functions.
//!
//! A generator `f` on `[0, ∞)` induces
//!
//! * the conjugate-like term `f*(t) = t f'(t) - f(t)`,
//! * its shifted version `F(t) = f*(t) - f*(0)`, which is nonnegative for
//!   convex `f` because `(f*)'(t) = t f''(t) ≥ 0`,
//! * the strong-convexity constant `mu = inf_{t ≥ 0} f''(t)`.
//!
//! Every generator here has closed-form derivatives and a declared `mu`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// `mu t^2 / 2`; `mu = 1` is least-squares importance fitting.
    Quadratic { mu: f64 },
    /// `e^t`.
    Exp,
    /// `t log t - t`. Not strongly convex on `[0, ∞)`.
    Kl,
}

/// A convex generator together with the quantities it induces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregmanGenerator {
    kind: Kind,
}

impl BregmanGenerator {
    /// Least-squares importance fitting, `f(t) = t^2 / 2`.
    pub fn lsif() -> Self {
        Self {
            kind: Kind::Quadratic { mu: 1.0 },
        }
    }

    /// `f(t) = mu t^2 / 2`.
    pub fn scaled_quadratic(mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::invalid("mu", format!("must be a positive finite number, got {mu}")));
        }
        Ok(Self {
            kind: Kind::Quadratic { mu },
        })
    }

    /// `f(t) = e^t`, strongly convex on `[0, ∞)` with `mu = 1`.
    pub fn exp() -> Self {
        Self { kind: Kind::Exp }
    }

    /// `f(t) = t log t - t`. Only usable for divergence evaluation; every
    /// classification path rejects it through [`Self::require_strongly_convex`].
    pub fn kl_unchecked() -> Self {
        Self { kind: Kind::Kl }
    }

    pub fn f(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Quadratic { mu } => 0.5 * mu * t * t,
            Kind::Exp => t.exp(),
            Kind::Kl => xlogx(t) - t,
        }
    }

    pub fn f_prime(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Quadratic { mu } => mu * t,
            Kind::Exp => t.exp(),
            Kind::Kl => t.ln(),
        }
    }

    pub fn f_second(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Quadratic { mu } => mu,
            Kind::Exp => t.exp(),
            Kind::Kl => 1.0 / t,
        }
    }

    /// `f*(t) = t f'(t) - f(t)`.
    pub fn f_conj(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Quadratic { mu } => 0.5 * mu * t * t,
            Kind::Exp => (t - 1.0) * t.exp(),
            Kind::Kl => t,
        }
    }

    /// Derivative of `f*`, equal to `t f''(t)`.
    pub fn f_conj_prime(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Quadratic { mu } => mu * t,
            Kind::Exp => t * t.exp(),
            Kind::Kl => 1.0,
        }
    }

    pub fn f_conj_at_zero(&self) -> f64 {
        match self.kind {
            Kind::Quadratic { .. } => 0.0,
            Kind::Exp => -1.0,
            Kind::Kl => 0.0,
        }
    }

    /// `F(t) = f*(t) - f*(0)`.
    pub fn big_f(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Quadratic { mu } => 0.5 * mu * t * t,
            // (t - 1) e^t + 1, written to avoid cancellation near zero
            Kind::Exp => t * t.exp() - t.exp_m1(),
            Kind::Kl => t,
        }
    }

    /// `F'(t) = t f''(t)`.
    pub fn big_f_prime(&self, t: f64) -> f64 {
        self.f_conj_prime(t)
    }

    /// Strong-convexity constant `inf_{t ≥ 0} f''(t)`.
    pub fn mu(&self) -> f64 {
        match self.kind {
            Kind::Quadratic { mu } => mu,
            Kind::Exp => 1.0,
            Kind::Kl => 0.0,
        }
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.mu() > 0.0
    }

    pub fn require_strongly_convex(&self) -> Result<()> {
        if self.is_strongly_convex() {
            Ok(())
        } else {
            Err(Error::NotStronglyConvex(self.to_string()))
        }
    }
}

fn xlogx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

impl fmt::Display for BregmanGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Kind::Quadratic { mu } if mu == 1.0 => write!(f, "lsif"),
            Kind::Quadratic { mu } => write!(f, "quadratic:{mu}"),
            Kind::Exp => write!(f, "exp"),
            Kind::Kl => write!(f, "kl-unchecked"),
        }
    }
}

impl FromStr for BregmanGenerator {
    type Err = Error;

    /// Parses `lsif`, `quadratic:<mu>` or `exp`. The KL generator is not
    /// selectable by name.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "lsif" => Ok(Self::lsif()),
            "exp" => Ok(Self::exp()),
            _ => {
                if let Some(mu) = s.strip_prefix("quadratic:") {
                    let mu: f64 = mu
                        .parse()
                        .map_err(|_| Error::invalid("generator", format!("bad mu in `{s}`")))?;
                    Self::scaled_quadratic(mu)
                } else {
                    Err(Error::invalid(
                        "generator",
                        format!("unknown generator `{s}` (expected lsif, quadratic:<mu> or exp)"),
                    ))
                }
            }
        }
    }
}

impl Serialize for BregmanGenerator {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BregmanGenerator {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all() -> Vec<BregmanGenerator> {
        vec![
            BregmanGenerator::lsif(),
            BregmanGenerator::scaled_quadratic(2.5).unwrap(),
            BregmanGenerator::exp(),
        ]
    }

    #[test]
    fn lsif_values() {
        let g = BregmanGenerator::lsif();
        assert_eq!(g.f(2.0), 2.0);
        assert_eq!(g.f_prime(2.0), 2.0);
        assert_eq!(g.f_conj(2.0), 2.0);
        assert_eq!(g.big_f(0.0), 0.0);
        assert_eq!(g.mu(), 1.0);
    }

    #[test]
    fn scaled_quadratic_values() {
        let one = BregmanGenerator::scaled_quadratic(1.0).unwrap();
        let lsif = BregmanGenerator::lsif();
        for i in 0..50 {
            let t = i as f64 * 0.37;
            assert_eq!(one.f(t), lsif.f(t));
            assert_eq!(one.f_prime(t), lsif.f_prime(t));
            assert_eq!(one.f_conj(t), lsif.f_conj(t));
            assert_eq!(one.big_f(t), lsif.big_f(t));
        }
        assert_eq!(BregmanGenerator::scaled_quadratic(2.0).unwrap().f(3.0), 9.0);
        assert!(BregmanGenerator::scaled_quadratic(0.0).is_err());
        assert!(BregmanGenerator::scaled_quadratic(-1.0).is_err());
        assert!(BregmanGenerator::scaled_quadratic(f64::NAN).is_err());
    }

    #[test]
    fn exp_values() {
        let g = BregmanGenerator::exp();
        assert_eq!(g.f_conj(0.0), -1.0);
        assert_eq!(g.f_conj_at_zero(), -1.0);
        assert_eq!(g.big_f(0.0), 0.0);
        assert!((g.big_f(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(g.mu(), 1.0);
    }

    #[test]
    fn kl_is_rejected_for_classification() {
        let g = BregmanGenerator::kl_unchecked();
        assert!(!g.is_strongly_convex());
        assert!(g.require_strongly_convex().is_err());
        assert_eq!(g.big_f(0.0), 0.0);
    }

    #[test]
    fn names_round_trip() {
        for g in all() {
            let parsed: BregmanGenerator = g.to_string().parse().unwrap();
            assert_eq!(parsed, g);
        }
        assert_eq!("quadratic:2".parse::<BregmanGenerator>().unwrap().mu(), 2.0);
        assert!("quadratic:0".parse::<BregmanGenerator>().is_err());
        assert!("kl".parse::<BregmanGenerator>().is_err());
        let json = serde_json::to_string(&BregmanGenerator::exp()).unwrap();
        assert_eq!(json, "\"exp\"");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn derivatives_and_conjugates_consistent(t in 0.0f64..10.0) {
            for g in all() {
                let h = 1e-6 * t.max(1.0);
                let lo = (t - h).max(0.0);
                let numeric = (g.f(t + h) - g.f(lo)) / (t + h - lo);
                let rel = (numeric - g.f_prime(t)).abs() / g.f_prime(t).abs().max(1.0);
                prop_assert!(rel < 1e-5, "{g}: f' mismatch at {t}: {numeric} vs {}", g.f_prime(t));

                let conj = t * g.f_prime(t) - g.f(t);
                let scale = conj.abs().max(1.0);
                prop_assert!((conj - g.f_conj(t)).abs() <= 1e-10 * scale);
                prop_assert!(((g.f_conj(t) - g.f_conj_at_zero()) - g.big_f(t)).abs() <= 1e-10 * scale);
                prop_assert!(g.big_f(t) >= -1e-12);
            }
        }

        #[test]
        fn convex_and_big_f_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for g in all() {
                prop_assert!(g.f_prime(lo) <= g.f_prime(hi));
                prop_assert!(g.big_f(lo) <= g.big_f(hi) + 1e-12);
            }
        }
    }
}
