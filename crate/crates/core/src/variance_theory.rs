//! Closed-form moments of the RBF estimators.
//!
//! Everything is written in terms of the correlation `rho` and the RBF
//! parameter `gamma`, with `E = exp(-gamma (1 - rho))` the kernel value:
//!
//! * plain RFF, per-sample variance `V = 1/2 + 1/2 (1 - E^2)^2`
//! * NRFF, asymptotic variance `V_n = V - 1/4 E^2 (3 - E^4)`
//! * GCWS through the asymptotic GMM value
//!   `g = (1 - s) / (1 + s)`, `s = sqrt((1 - rho) / 2)`, whose RBF estimator
//!   `exp(-2 gamma ((1 - g_hat) / (1 + g_hat))^2)` has asymptotic variance
//!   `V_g = E^2 g (1 - g)^3 / (1 + g)^6 * 64 gamma^2`.

use serde::Serialize;

use crate::dataio::csv_table;
use crate::error::{check_domain, Error, Result};

fn check_rho(rho: f64) -> Result<()> {
    check_domain("rho", rho, (-1.0..=1.0).contains(&rho), "[-1, 1]")
}

fn check_gamma(gamma: f64) -> Result<()> {
    check_domain("gamma", gamma, gamma > 0.0, "(0, inf)")
}

fn check_g(g: f64) -> Result<()> {
    check_domain("g", g, (0.0..=1.0).contains(&g), "[0, 1]")
}

/// `exp(-gamma (1 - rho))`.
pub fn expectation(rho: f64, gamma: f64) -> Result<f64> {
    check_rho(rho)?;
    check_gamma(gamma)?;
    Ok((-gamma * (1.0 - rho)).exp())
}

/// Variance of one plain RFF product `X_j Y_j`.
pub fn v_rff(rho: f64, gamma: f64) -> Result<f64> {
    let e2 = expectation(rho, gamma)?.powi(2);
    Ok(0.5 + 0.5 * (1.0 - e2).powi(2))
}

/// Asymptotic variance of the normalized estimator, scaled by `k`.
pub fn v_nrff(rho: f64, gamma: f64) -> Result<f64> {
    let e2 = expectation(rho, gamma)?.powi(2);
    let v = 0.5 + 0.5 * (1.0 - e2).powi(2);
    // clamp the cancellation residue at rho = 1
    Ok((v - 0.25 * e2 * (3.0 - e2 * e2)).max(0.0))
}

/// `E[cos(sqrt(gamma) x) cos(sqrt(gamma) y)]`, the estimator without a random phase.
pub fn rff_nonshifted_expectation(rho: f64, gamma: f64) -> Result<f64> {
    check_rho(rho)?;
    check_gamma(gamma)?;
    Ok(0.5 * (-gamma * (1.0 - rho)).exp() + 0.5 * (-gamma * (1.0 + rho)).exp())
}

/// Asymptotic GMM value as a function of the correlation.
pub fn g_of_rho(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let s = ((1.0 - rho) / 2.0).sqrt();
    Ok((1.0 - s) / (1.0 + s))
}

/// Inverse of [`g_of_rho`].
pub fn rho_of_g(g: f64) -> Result<f64> {
    check_g(g)?;
    Ok(1.0 - 2.0 * ((1.0 - g) / (1.0 + g)).powi(2))
}

/// Asymptotic variance (times `k`) of the GCWS-based RBF estimator.
pub fn v_gcws_rbf(rho: f64, gamma: f64) -> Result<f64> {
    let e2 = expectation(rho, gamma)?.powi(2);
    let g = g_of_rho(rho)?;
    Ok(e2 * g * (1.0 - g).powi(3) / (1.0 + g).powi(6) * 64.0 * gamma * gamma)
}

/// [`v_gcws_rbf`] parameterized by `g` instead of `rho`.
pub fn v_gcws_rbf_from_g(g: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let e2 = gcws_rbf_estimate(g, gamma)?.powi(2);
    check_g(g)?;
    Ok(e2 * g * (1.0 - g).powi(3) / (1.0 + g).powi(6) * 64.0 * gamma * gamma)
}

/// RBF value implied by a GMM value `g_hat`.
pub fn gcws_rbf_estimate(g_hat: f64, gamma: f64) -> Result<f64> {
    check_g(g_hat)?;
    check_gamma(gamma)?;
    let z = (1.0 - g_hat) / (1.0 + g_hat);
    Ok((-2.0 * gamma * z * z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gcws,
    Rff,
    Nrff,
}

/// `Var / E^2` as a function of the kernel value `E`.
///
/// For the Fourier methods the correlation is recovered as
/// `rho = 1 + ln(E) / gamma`; values of `E` implying `rho < -1` are rejected.
pub fn relative_variance(method: Method, e: f64, gamma: f64) -> Result<f64> {
    check_domain("E", e, e > 0.0 && e <= 1.0, "(0, 1]")?;
    check_gamma(gamma)?;
    match method {
        Method::Gcws => Ok((1.0 - e) / e),
        Method::Rff | Method::Nrff => {
            let rho = 1.0 + e.ln() / gamma;
            if rho < -1.0 {
                return Err(Error::OutOfDomain {
                    name: "E",
                    value: e,
                    domain: "[exp(-2 gamma), 1]",
                });
            }
            let v = match method {
                Method::Rff => 0.5 + 0.5 * (1.0 - e * e).powi(2),
                _ => v_nrff(rho, gamma)?,
            };
            Ok(v / (e * e))
        }
    }
}

/// A `(rho, gamma)` pair together with its asymptotic GMM value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryPoint {
    pub rho: f64,
    pub gamma: f64,
    pub g: f64,
}

impl TheoryPoint {
    pub fn new(rho: f64, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(TheoryPoint {
            rho,
            gamma,
            g: g_of_rho(rho)?,
        })
    }

    pub fn report(&self) -> VarianceReport {
        let expectation = (-self.gamma * (1.0 - self.rho)).exp();
        VarianceReport {
            v_rff: v_rff(self.rho, self.gamma).expect("validated"),
            v_nrff: v_nrff(self.rho, self.gamma).expect("validated"),
            v_gcws_rbf: v_gcws_rbf(self.rho, self.gamma).expect("validated"),
            rel_var_gcws: (1.0 - expectation) / expectation,
            expectation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceReport {
    pub v_rff: f64,
    pub v_nrff: f64,
    pub v_gcws_rbf: f64,
    pub rel_var_gcws: f64,
    pub expectation: f64,
}

#[derive(Debug, Serialize)]
struct GridRow {
    rho: f64,
    gamma: f64,
    g: f64,
    expectation: f64,
    v_rff: f64,
    v_nrff: f64,
    v_gcws_rbf: f64,
    nrff_over_rff: f64,
    nrff_over_gcws: f64,
}

/// CSV table of all closed forms over a `rho x gamma` grid.
pub fn grid_csv(rhos: &[f64], gammas: &[f64]) -> Result<String> {
    let mut rows = Vec::new();
    for &gamma in gammas {
        for &rho in rhos {
            let p = TheoryPoint::new(rho, gamma)?;
            let r = p.report();
            rows.push(GridRow {
                rho,
                gamma,
                g: p.g,
                expectation: r.expectation,
                v_rff: r.v_rff,
                v_nrff: r.v_nrff,
                v_gcws_rbf: r.v_gcws_rbf,
                nrff_over_rff: r.v_nrff / r.v_rff,
                nrff_over_gcws: r.v_nrff / r.v_gcws_rbf,
            });
        }
    }
    csv_table(&rows)
}
