use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the last continuation level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RhoFinal {
    /// `||A^T d|| (2 sigma1^2 / sigma2^2 + 1)`, computed per frame.
    TheoremBound,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sparsity budget.
    pub k: f64,
    pub rho0: f64,
    /// Multiplicative growth of rho between continuation levels.
    pub rho_growth: f64,
    pub rho_final: RhoFinal,
    /// Proximal weight of the x-step; `f64::INFINITY` disables the proximal term.
    /// Values near 1 swamp the per-pixel curvature of a normalized PSF and
    /// stall the outer loop.
    #[serde(with = "infinite_as_null")]
    pub c: f64,
    /// Proximal weight of the u-step.
    pub b: f64,
    pub fista_tol: f64,
    pub fista_max_iter: usize,
    pub pam_tol: f64,
    pub pam_max_iter: usize,
    pub gap_tol: f64,
    /// Keep the `k` largest pixels and refit when the coupling gap stays open.
    pub support_fallback: bool,
}

/// JSON has no infinity; `null` stands in for it.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 170.0,
            rho0: 1e-4,
            rho_growth: 10.0,
            rho_final: RhoFinal::TheoremBound,
            c: 1e4,
            b: 1.0,
            fista_tol: 1e-5,
            fista_max_iter: 2000,
            pam_tol: 1e-5,
            pam_max_iter: 200,
            gap_tol: 1e-8,
            support_fallback: true,
        }
    }
}

impl SolverConfig {
    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::invalid(format!("sparsity budget k must be positive, got {}", self.k)));
        }
        positive("rho0", self.rho0)?;
        if !(self.rho_growth > 1.0 && self.rho_growth.is_finite()) {
            return Err(Error::invalid(format!("rho growth must exceed 1, got {}", self.rho_growth)));
        }
        if let RhoFinal::Value(v) = self.rho_final {
            positive("final rho", v)?;
        }
        positive("c", self.c)?;
        positive("b", self.b)?;
        positive("fista_tol", self.fista_tol)?;
        positive("pam_tol", self.pam_tol)?;
        positive("gap_tol", self.gap_tol)?;
        if self.fista_max_iter == 0 || self.pam_max_iter == 0 {
            return Err(Error::invalid("iteration limits must be positive"));
        }
        Ok(())
    }

    /// Integer budget used for support selection.
    pub fn budget(&self) -> usize {
        self.k.floor() as usize
    }

    pub(crate) fn inv_c(&self) -> f64 {
        1.0 / self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = SolverConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.k, 170.0);
        assert_eq!(cfg.rho0, 1e-4);
    }

    #[test]
    fn rejects_bad_values() {
        let base = SolverConfig::default();
        assert!(SolverConfig { k: 0.0, ..base }.validate().is_err());
        assert!(SolverConfig { rho_growth: 1.0, ..base }.validate().is_err());
        assert!(SolverConfig { c: 0.0, ..base }.validate().is_err());
        assert!(SolverConfig { b: -1.0, ..base }.validate().is_err());
        assert!(SolverConfig { pam_tol: 0.0, ..base }.validate().is_err());
        assert!(SolverConfig { rho_final: RhoFinal::Value(0.0), ..base }.validate().is_err());
        assert!(SolverConfig { c: f64::INFINITY, ..base }.validate().is_ok());
    }

    #[test]
    fn infinite_c_survives_json() {
        let cfg = SolverConfig { c: f64::INFINITY, ..SolverConfig::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"c\":null"));
        assert_eq!(serde_json::from_str::<SolverConfig>(&text).unwrap(), cfg);
    }
}
