//! Per-phase traffic derivation: how big the pipes must be so every
//! patient's record round-trip finishes inside the reporting period.
//!
//! Working backwards from the deadline:
//!
//! 1. Feedback rate: the analyzed-result broadcast shares a minimum
//!    capacity `cb_min` across the worst-case patient count, then is
//!    quantized to whole LTE resource blocks (`rb`, `delta_b`); sending
//!    `result_bits` at that rate takes `tau_b`.
//! 2. Deadline split: of the report period `tau_t`, subtract the safety
//!    margin `tau_m`, the feedback time `tau_b` and one full server's
//!    processing time `tau_p`; what remains (`tau_max`) is available to
//!    upload the raw record.
//! 3. Upload rate: the minimum rate `delta_min = record_bits / tau_max`
//!    is rounded UP to whole resource blocks (`ra`, `delta_a`), so the
//!    actual upload time `tau_a` lands at or under the budget.
//! 4. Storage rate: the archive trickle is a plain capacity share
//!    `delta_c = cc_min / pat_max` with no radio quantization (it never
//!    crosses the air interface), taking `tau_c` per result.
//!
//! Feedback quantization direction is configurable: rounding the share
//! DOWN (never exceeding the reserved capacity) or UP (never dropping
//! below the per-patient share), both clamped to at least one block.
//! The ECG presets round up; the fall-detection presets round down, which
//! is what the reserved-capacity arithmetic of the reference tables uses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::PlacementMode;

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error(
        "deadline exhausted: period {period}s leaves {remaining}s for upload \
         after margin, feedback and processing"
    )]
    DeadlineExhausted { period: f64, remaining: f64 },
    #[error("pat_max must be at least 1")]
    NoPatients,
    #[error("unknown application preset {0:?}")]
    UnknownApp(String),
}

/// Direction used when quantizing the feedback share to resource blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrbRounding {
    #[default]
    Ceil,
    Floor,
}

/// Application traffic model plus its per-mode capacity shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppProfile {
    /// Key into the server-profile catalog ("ecg", "fall").
    pub name: String,
    /// Raw record size per patient per period, bits.
    pub record_bits: f64,
    /// Analyzed-result size per patient per period, bits.
    pub result_bits: f64,
    /// Reporting period, s.
    pub report_period_s: f64,
    /// Safety margin reserved inside the period, s.
    pub margin_s: f64,
    /// Processing time slope per patient, s.
    pub per_patient_s: f64,
    /// Processing time intercept per running server, s.
    pub per_server_s: f64,
    /// Feedback quantization direction.
    #[serde(default)]
    pub feedback_rounding: PrbRounding,
    /// Feedback capacity reserved when servers sit in the access network.
    pub feedback_share_fog_bps: f64,
    /// Feedback capacity reserved when servers sit in the cloud.
    pub feedback_share_cloud_bps: f64,
    /// Storage capacity reserved when servers sit in the access network.
    pub storage_share_fog_bps: f64,
    /// Storage capacity reserved when servers sit in the cloud.
    pub storage_share_cloud_bps: f64,
}

impl AppProfile {
    /// ECG monitoring: small records, generous margin, heavyweight server.
    pub fn ecg() -> Self {
        AppProfile {
            name: "ecg".into(),
            record_bits: 252_800.0,
            result_bits: 256.0,
            report_period_s: 240.0,
            margin_s: 30.0,
            per_patient_s: 0.002,
            per_server_s: 4.6872,
            feedback_rounding: PrbRounding::Ceil,
            // GPON uplink share and twice that on the cloud path.
            feedback_share_fog_bps: 117_187.5,
            feedback_share_cloud_bps: 234_375.0,
            // GPON downlink share; 0.3% of a content server on the cloud path.
            storage_share_fog_bps: 234_375.0,
            storage_share_cloud_bps: 5.4e6,
        }
    }

    /// Fall-detection video: large records, serial per-patient analysis.
    pub fn fall() -> Self {
        AppProfile {
            name: "fall".into(),
            record_bits: 3.36e6,
            result_bits: 2048.0,
            report_period_s: 240.0,
            margin_s: 15.0,
            per_patient_s: 0.18,
            per_server_s: 0.0,
            feedback_rounding: PrbRounding::Floor,
            feedback_share_fog_bps: 234_375.0,
            feedback_share_cloud_bps: 468_750.0,
            storage_share_fog_bps: 234_375.0,
            storage_share_cloud_bps: 5.4e6,
        }
    }

    /// Preset lookup by name.
    pub fn preset(name: &str) -> Result<Self, DeriveError> {
        match name {
            "ecg" => Ok(Self::ecg()),
            "fall" => Ok(Self::fall()),
            other => Err(DeriveError::UnknownApp(other.to_string())),
        }
    }

    /// Feedback capacity share for a placement mode.
    pub fn feedback_share_bps(&self, mode: PlacementMode) -> f64 {
        match mode {
            PlacementMode::Foa => self.feedback_share_fog_bps,
            PlacementMode::Ca => self.feedback_share_cloud_bps,
        }
    }

    /// Storage capacity share for a placement mode.
    pub fn storage_share_bps(&self, mode: PlacementMode) -> f64 {
        match mode {
            PlacementMode::Foa => self.storage_share_fog_bps,
            PlacementMode::Ca => self.storage_share_cloud_bps,
        }
    }

    /// Time one server needs to process `patients` records: a per-patient
    /// slope plus a fixed per-server analysis pass.
    pub fn processing_time(&self, patients: u32, servers: u32) -> f64 {
        self.per_patient_s * patients as f64 + self.per_server_s * servers as f64
    }
}

/// Everything the energy model needs about one reporting cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Worst-case patient count dividing the capacity shares.
    pub pat_max: u32,
    /// Unquantized per-patient feedback share, bit/s.
    pub delta_f_bps: f64,
    /// Feedback resource blocks per patient.
    pub rb_prbs: u32,
    /// Feedback rate per patient, bit/s.
    pub delta_b_bps: f64,
    /// Feedback transmission time, s.
    pub tau_b_s: f64,
    /// Full-load processing time charged against the deadline, s.
    pub tau_p_s: f64,
    /// Upload time budget, s.
    pub tau_max_s: f64,
    /// Minimum upload rate meeting the budget, bit/s.
    pub delta_min_bps: f64,
    /// Upload resource blocks per patient.
    pub ra_prbs: u32,
    /// Upload rate per patient, bit/s.
    pub delta_a_bps: f64,
    /// Actual upload time at the quantized rate, s.
    pub tau_a_s: f64,
    /// Storage trickle rate per patient, bit/s.
    pub delta_c_bps: f64,
    /// Storage transmission time, s.
    pub tau_c_s: f64,
}

/// Guard against float noise flipping an exactly-on-boundary quantization.
const QUANT_SLACK: f64 = 1e-9;

/// Rounds a rate to whole resource blocks, at least one.
pub fn quantize_prbs(rate_bps: f64, prb_bps: f64, rounding: PrbRounding) -> u32 {
    let units = rate_bps / prb_bps;
    let n = match rounding {
        PrbRounding::Ceil => (units - QUANT_SLACK).ceil(),
        PrbRounding::Floor => (units + QUANT_SLACK).floor(),
    };
    (n.max(1.0)) as u32
}

/// Feedback chain: share -> resource blocks -> rate -> time.
/// Returns (delta_f, rb, delta_b, tau_b).
pub fn derive_feedback(
    app: &AppProfile,
    cb_min_bps: f64,
    pat_max: u32,
    prb_bps: f64,
) -> Result<(f64, u32, f64, f64), DeriveError> {
    if pat_max == 0 {
        return Err(DeriveError::NoPatients);
    }
    let delta_f = cb_min_bps / pat_max as f64;
    let rb = quantize_prbs(delta_f, prb_bps, app.feedback_rounding);
    let delta_b = rb as f64 * prb_bps;
    let tau_b = app.result_bits / delta_b;
    Ok((delta_f, rb, delta_b, tau_b))
}

/// Upload chain: deadline split -> minimum rate -> resource blocks.
/// Returns (tau_max, delta_min, ra, delta_a, tau_a).
pub fn derive_upload(
    app: &AppProfile,
    tau_p_s: f64,
    tau_b_s: f64,
    prb_bps: f64,
) -> Result<(f64, f64, u32, f64, f64), DeriveError> {
    let tau_max = app.report_period_s - app.margin_s - tau_b_s - tau_p_s;
    if tau_max <= 0.0 {
        return Err(DeriveError::DeadlineExhausted {
            period: app.report_period_s,
            remaining: tau_max,
        });
    }
    let delta_min = app.record_bits / tau_max;
    // The upload rate must never undershoot the deadline, so this one
    // always rounds up regardless of the feedback direction.
    let ra = quantize_prbs(delta_min, prb_bps, PrbRounding::Ceil);
    let delta_a = ra as f64 * prb_bps;
    let tau_a = app.record_bits / delta_a;
    Ok((tau_max, delta_min, ra, delta_a, tau_a))
}

/// Storage chain: plain capacity share, no quantization.
/// Returns (delta_c, tau_c).
pub fn derive_storage(
    app: &AppProfile,
    cc_min_bps: f64,
    pat_max: u32,
) -> Result<(f64, f64), DeriveError> {
    if pat_max == 0 {
        return Err(DeriveError::NoPatients);
    }
    let delta_c = cc_min_bps / pat_max as f64;
    let tau_c = app.result_bits / delta_c;
    Ok((delta_c, tau_c))
}

/// Full derivation for one mode.
///
/// `omega_max` is the per-server patient cap (sets the full-load
/// processing time charged against the deadline); `pat_max` is the
/// worst-case patient count sharing the feedback/storage capacity.
pub fn derive_phases(
    app: &AppProfile,
    mode: PlacementMode,
    omega_max: u32,
    pat_max: u32,
    prb_bps: f64,
) -> Result<PhaseParams, DeriveError> {
    let tau_p = app.processing_time(omega_max, 1);
    let (delta_f, rb, delta_b, tau_b) =
        derive_feedback(app, app.feedback_share_bps(mode), pat_max, prb_bps)?;
    let (tau_max, delta_min, ra, delta_a, tau_a) = derive_upload(app, tau_p, tau_b, prb_bps)?;
    let (delta_c, tau_c) = derive_storage(app, app.storage_share_bps(mode), pat_max)?;
    Ok(PhaseParams {
        pat_max,
        delta_f_bps: delta_f,
        rb_prbs: rb,
        delta_b_bps: delta_b,
        tau_b_s: tau_b,
        tau_p_s: tau_p,
        tau_max_s: tau_max,
        delta_min_bps: delta_min,
        ra_prbs: ra,
        delta_a_bps: delta_a,
        tau_a_s: tau_a,
        delta_c_bps: delta_c,
        tau_c_s: tau_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use PlacementMode::{Ca, Foa};

    const PRB: f64 = 336.0;

    /// |got - want| within 0.5% or half an ulp of the printed precision.
    fn close(got: f64, want: f64, printed_decimals: i32) {
        let tol = (0.005 * want.abs()).max(0.5 * 10f64.powi(-printed_decimals));
        assert!(
            (got - want).abs() <= tol,
            "got {got}, want {want} (tol {tol})"
        );
    }

    #[test]
    fn processing_time_models() {
        let ecg = AppProfile::ecg();
        assert!((ecg.processing_time(669, 1) - 6.0252).abs() < 1e-12);
        let fall = AppProfile::fall();
        // Serial analysis: exactly 0.18 s per patient, no intercept.
        assert_eq!(fall.processing_time(1, 1), 0.18);
        assert_eq!(fall.processing_time(28, 1), 5.04);
        assert_eq!(fall.per_server_s, 0.0);
    }

    #[test]
    fn ecg_base_foa_chain() {
        let app = AppProfile::ecg();
        let p = derive_phases(&app, Foa, 669, 669, PRB).unwrap();
        close(p.delta_f_bps, 175.2, 1);
        assert_eq!(p.rb_prbs, 1);
        assert_eq!(p.delta_b_bps, 336.0);
        close(p.tau_b_s, 0.76, 2);
        close(p.tau_max_s, 203.213, 3);
        close(p.delta_min_bps, 1244.0, 1);
        assert_eq!(p.ra_prbs, 4);
        assert_eq!(p.delta_a_bps, 1344.0);
        close(p.tau_a_s, 188.1, 1);
        close(p.delta_c_bps, 350.0, 0);
        close(p.tau_c_s, 0.73, 2);
    }

    #[test]
    fn ecg_base_ca_chain() {
        let app = AppProfile::ecg();
        let p = derive_phases(&app, Ca, 669, 669, PRB).unwrap();
        close(p.delta_f_bps, 350.3, 1);
        assert_eq!(p.rb_prbs, 2);
        assert_eq!(p.delta_b_bps, 672.0);
        close(p.tau_b_s, 0.38, 2);
        assert_eq!(p.ra_prbs, 4);
        assert_eq!(p.delta_a_bps, 1344.0);
        close(p.tau_a_s, 188.1, 1);
        close(p.delta_c_bps, 8070.0, 0);
        close(p.tau_c_s, 0.032, 3);
    }

    /// Fall, patients-per-server sweep: per-server cap rises 28..140 while
    /// the capacity shares stay divided by the 140-patient total.
    #[test]
    fn fall_patients_per_server_chain() {
        let app = AppProfile::fall();
        // (share%, FOA delta_a, FOA tau_a, CA delta_a, CA tau_a)
        let rows = [
            (28, 15_456.0, 217.39, 15_456.0, 217.39),
            (56, 15_792.0, 212.77, 15_792.0, 212.77),
            (84, 16_128.0, 208.33, 16_128.0, 208.33),
            (112, 16_800.0, 200.0, 16_464.0, 204.08),
            (140, 17_136.0, 196.08, 17_136.0, 196.08),
        ];
        for (omega, fa, fta, ca, cta) in rows {
            let f = derive_phases(&app, Foa, omega, 140, PRB).unwrap();
            assert_eq!(f.delta_a_bps, fa, "FOA delta_a at omega={omega}");
            close(f.tau_a_s, fta, 2);
            assert_eq!(f.delta_b_bps, 1344.0);
            close(f.tau_b_s, 1.524, 3);
            close(f.delta_c_bps, 1674.1, 1);
            close(f.tau_c_s, 1.223, 3);

            let c = derive_phases(&app, Ca, omega, 140, PRB).unwrap();
            assert_eq!(c.delta_a_bps, ca, "CA delta_a at omega={omega}");
            close(c.tau_a_s, cta, 2);
            assert_eq!(c.delta_b_bps, 3024.0);
            close(c.tau_b_s, 0.68, 2);
            close(c.delta_c_bps, 38_571.0, 0);
            close(c.tau_c_s, 0.053, 3);
        }
    }

    /// Fall, servers-per-node sweep: shares divided by 28 * N.
    #[test]
    fn fall_servers_per_node_chain() {
        let app = AppProfile::fall();
        let rows = [
            (1u32, 8064.0, 0.254, 8370.5, 0.245),
            (2, 4032.0, 0.508, 4185.3, 0.489),
            (3, 2688.0, 0.762, 2790.2, 0.734),
            (4, 2016.0, 1.016, 2092.6, 0.979),
            (5, 1344.0, 1.524, 1674.1, 1.223),
        ];
        for (n, db, tb, dc, tc) in rows {
            let p = derive_phases(&app, Foa, 28, 28 * n, PRB).unwrap();
            assert_eq!(p.delta_b_bps, db, "delta_b at n={n}");
            close(p.tau_b_s, tb, 3);
            close(p.delta_c_bps, dc, 1);
            close(p.tau_c_s, tc, 3);
            // Upload stays pinned to the same quantized rate regardless
            // of how many servers share a node.
            assert_eq!(p.delta_a_bps, 15_456.0);
            close(p.tau_a_s, 217.39, 2);
        }
    }

    /// The growing-traffic storage columns: shares divided by the scaled
    /// patient total.
    #[test]
    fn traffic_growth_storage_columns() {
        let app = AppProfile::ecg();
        let rows = [
            (738u32, 317.58, 0.81, 7317.1, 0.035),
            (805, 291.15, 0.88, 6708.1, 0.038),
            (871, 269.09, 0.95, 6199.8, 0.041),
            (935, 250.67, 1.02, 5775.4, 0.044),
            (1010, 232.05, 1.10, 5346.5, 0.048),
            (1072, 218.63, 1.17, 5037.3, 0.051),
            (1139, 205.77, 1.25, 4741.0, 0.054),
            (1202, 194.99, 1.31, 4492.5, 0.057),
            (1272, 184.26, 1.39, 4245.3, 0.060),
        ];
        for (total, f_dc, f_tc, c_dc, c_tc) in rows {
            let (dc, tc) = derive_storage(&app, app.storage_share_bps(Foa), total).unwrap();
            close(dc, f_dc, 2);
            close(tc, f_tc, 2);
            let (dc, tc) = derive_storage(&app, app.storage_share_bps(Ca), total).unwrap();
            close(dc, c_dc, 1);
            close(tc, c_tc, 3);
            // Feedback pins to the single-block minimum at every scale.
            let (_, rb, db, _) =
                derive_feedback(&app, app.feedback_share_bps(Ca), total, PRB).unwrap();
            assert_eq!((rb, db), (1, 336.0), "CA feedback at {total} patients");
        }
    }

    #[test]
    fn quantization_sandwich() {
        // Ceil never undershoots, floor never overshoots, both >= 1 block.
        for rate in [1.0, 335.9, 336.0, 336.1, 5000.0, 117_187.5] {
            let up = quantize_prbs(rate, PRB, PrbRounding::Ceil);
            let down = quantize_prbs(rate, PRB, PrbRounding::Floor);
            assert!(up >= 1 && down >= 1);
            assert!(up as f64 * PRB >= rate - 1e-6 || up == 1);
            assert!(down as f64 * PRB <= rate + 1e-6 || down == 1);
            assert!(up == down || up == down + 1);
        }
        // Exact multiples agree in both directions.
        assert_eq!(quantize_prbs(672.0, PRB, PrbRounding::Ceil), 2);
        assert_eq!(quantize_prbs(672.0, PRB, PrbRounding::Floor), 2);
    }

    #[test]
    fn deadline_exhaustion_is_an_error() {
        let mut app = AppProfile::fall();
        app.per_patient_s = 10.0;
        let err = derive_phases(&app, Foa, 28, 28, PRB).unwrap_err();
        assert!(matches!(err, DeriveError::DeadlineExhausted { .. }));
    }

    #[test]
    fn upload_time_meets_budget() {
        // tau_a <= tau_max by construction of the ceil rounding.
        for (app, omega, patmax) in [
            (AppProfile::ecg(), 669, 669),
            (AppProfile::fall(), 28, 140),
            (AppProfile::fall(), 140, 140),
        ] {
            for mode in [Foa, Ca] {
                let p = derive_phases(&app, mode, omega, patmax, PRB).unwrap();
                assert!(p.tau_a_s <= p.tau_max_s + 1e-9);
                assert!((p.tau_a_s * p.delta_a_bps - app.record_bits).abs() < 1e-6);
            }
        }
    }
}
