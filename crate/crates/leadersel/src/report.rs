//! Serializable report types and the human-readable certificate rendering.

use serde::{Deserialize, Serialize};

use crate::certify::{Certificate, ModeClass, ModeRecord, TauWindow, Verdict};
use crate::select::SelectionReport;

/// JSON-facing view of a certificate (matrix families stay in memory; every
/// margin, jump factor, window and β value is included).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub modes: Vec<ModeRecord>,
    pub mu_required: Vec<Vec<Option<f64>>>,
    pub mu_mode: Vec<f64>,
    pub tau_windows: Vec<TauWindow>,
    pub beta_setting_final: f64,
    pub beta_history: Vec<f64>,
    pub depth_used: f64,
    pub verdict: Verdict,
}

impl From<&Certificate> for CertificateReport {
    fn from(c: &Certificate) -> Self {
        Self {
            modes: c.modes.clone(),
            mu_required: c.mu_required.clone(),
            mu_mode: c.mu_mode.clone(),
            tau_windows: c.tau_windows.clone(),
            beta_setting_final: c.beta_setting_final,
            beta_history: c.beta_history.clone(),
            depth_used: c.depth_used,
            verdict: c.verdict.clone(),
        }
    }
}

/// Combined output of the selection commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub selection: SelectionReport,
    pub certificate: Option<CertificateReport>,
}

/// Text rendering: one line per condition with pass/fail.
pub fn render_certificate(c: &Certificate) -> String {
    let mut out = String::new();
    let push = |out: &mut String, line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    push(&mut out, format!("verdict: {}", match &c.verdict {
        Verdict::Pass => "PASS".to_string(),
        Verdict::Fail(cond) => format!("FAIL at {}", cond),
    }));
    push(&mut out, format!(
        "beta setting: {:.2} (history {:?})",
        c.beta_setting_final, c.beta_history
    ));
    for rec in &c.modes {
        let class = match rec.mode_class {
            ModeClass::Stable => "stable",
            ModeClass::Unstable => "unstable",
        };
        push(&mut out, format!("mode {} [{}]", rec.mode, class));
        match rec.mode_class {
            ModeClass::Unstable => {
                if let Some(m6) = rec.margin_6 {
                    push(&mut out, format!(
                        "  (6)  eigenvalue margin {:+.6}  {}",
                        m6,
                        if m6 < 0.0 { "pass" } else { "FAIL" }
                    ));
                }
                push(&mut out, format!(
                    "  (7)  eigenvalue margin {:+.6}  {}",
                    rec.margin_7,
                    if rec.margin_7 < 0.0 { "pass" } else { "FAIL" }
                ));
                if let Some(b) = rec.beta_computed {
                    push(&mut out, format!("  (8)  beta computed {:.4}", b));
                }
                let worst = rec
                    .p_family_residuals
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                push(&mut out, format!(
                    "  (10)-(11) worst discretized margin {:+.3e}  {}",
                    worst,
                    if worst < 0.0 { "pass" } else { "FAIL" }
                ));
            }
            ModeClass::Stable => {
                push(&mut out, format!(
                    "  (18-margin) Re λ_r - η/2 = {:+.6}  {}",
                    rec.margin_7,
                    if rec.margin_7 < 0.0 { "pass" } else { "FAIL" }
                ));
                let worst = rec
                    .p_family_residuals
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                push(&mut out, format!(
                    "  (18) worst discretized margin {:+.3e}  {}",
                    worst,
                    if worst < 0.0 { "pass" } else { "FAIL" }
                ));
            }
        }
        if !rec.gain_structured {
            push(&mut out, "  gain: unstructured fallback (shared-gain form not achieved)".into());
        }
    }
    for (q, mu) in c.mu_mode.iter().enumerate() {
        push(&mut out, format!("  (16) mode {} minimal feasible mu {:.6}", q + 1, mu));
    }
    for (p, w) in c.tau_windows.iter().enumerate() {
        let line = match w {
            TauWindow::Bounded { tau_min, tau_max } => {
                format!("  (17) mode {} certified dwell window [{:.4}, {:.4}]", p + 1, tau_min, tau_max)
            }
            TauWindow::Unbounded { tau_min } => {
                format!("  (17) mode {} certified dwell window [{:.4}, ∞)", p + 1, tau_min)
            }
            TauWindow::Empty => format!("  (17) mode {} EMPTY dwell window", p + 1),
        };
        push(&mut out, line);
    }
    out
}
