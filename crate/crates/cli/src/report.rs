//! Machine-readable co-design report.

use codesign_core::codesign::{Delta0Record, GainForm, RunReport, Termination};
use serde::{Deserialize, Serialize};

use crate::config::{to_rows, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta0Entry {
    pub delta0: f64,
    /// `alpha * sqrt(1 + eta)`.
    pub threshold: f64,
    pub eta: f64,
    pub feasible: bool,
}

impl From<&Delta0Record> for Delta0Entry {
    fn from(r: &Delta0Record) -> Self {
        Self {
            delta0: r.delta0,
            threshold: r.threshold,
            eta: r.eta,
            feasible: r.feasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    pub d: Vec<f64>,
    pub k: Matrix,
    pub objective: f64,
    pub grad_d_norm: f64,
    pub grad_k_norm: f64,
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub p: Matrix,
    pub min_eig: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub original: Delta0Entry,
    pub transformed: Option<Delta0Entry>,
    pub transform: Matrix,
    /// Lipschitz constant in the working coordinates.
    pub alpha_working: f64,
    pub kp0: Matrix,
    pub k0_working: Matrix,
    pub gain_form: String,
    pub mu: f64,
    pub termination: String,
    pub converged: bool,
    pub iteration_count: usize,
    pub objective_initial: f64,
    pub objective_final: f64,
    pub improvement_percent: f64,
    pub final_d: Vec<f64>,
    pub final_k_working: Matrix,
    /// Gain for the original coordinates.
    pub final_k: Matrix,
    pub final_certificate: CertificateEntry,
    pub iterations: Vec<IterationEntry>,
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::StepTolerance => "step_tolerance",
        Termination::GradientTolerance => "gradient_tolerance",
        Termination::MaxIterations => "max_iterations",
        Termination::LineSearchStalled => "line_search_stalled",
    }
}

impl ReportFile {
    pub fn new(report: &RunReport, alpha_working: f64) -> Self {
        Self {
            original: (&report.original).into(),
            transformed: report.transformed.as_ref().map(Into::into),
            transform: to_rows(&report.transform.t),
            alpha_working,
            kp0: to_rows(&report.kp0.0),
            k0_working: to_rows(&report.k0_bar.0),
            gain_form: match report.gain_form {
                GainForm::Scaled => "scaled",
                GainForm::Unscaled => "unscaled",
            }
            .into(),
            mu: report.mu,
            termination: termination_name(report.termination).into(),
            converged: report.converged,
            iteration_count: report.iterations.len(),
            objective_initial: report.objective_initial,
            objective_final: report.objective_final,
            improvement_percent: report.improvement_percent,
            final_d: report.final_d.iter().copied().collect(),
            final_k_working: to_rows(&report.final_k_bar.0),
            final_k: to_rows(&report.final_k_original.0),
            final_certificate: CertificateEntry {
                p: to_rows(&report.final_p.p),
                min_eig: report.final_p.min_eig,
                residual_norm: report.final_p.residual_norm,
            },
            iterations: report
                .iterations
                .iter()
                .map(|r| IterationEntry {
                    d: r.d.iter().copied().collect(),
                    k: to_rows(&r.k),
                    objective: r.objective,
                    grad_d_norm: r.grad_d_norm,
                    grad_k_norm: r.grad_k_norm,
                    step: r.step,
                })
                .collect(),
        }
    }
}
