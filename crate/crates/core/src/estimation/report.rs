use std::io::{self, Write};

use super::{nmse, BlockEstimate, EstimationError, PilotPlan};
use crate::channel::Episode;
use crate::numerics::{linear_to_db, ComplexMatrix};

/// NMSE of each estimated quantity of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2Nmse {
    pub g1sq: f64,
    pub g1: f64,
    pub g: f64,
    pub h: f64,
    pub cascaded: f64,
}

/// A block estimate scored against its episode, with per-stage slot usage.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub estimate: BlockEstimate,
    pub nmse: Stage2Nmse,
    pub stage1_slots: usize,
    pub stage2_slots: usize,
}

impl EstimationReport {
    pub fn score(episode: &Episode, plan: &PilotPlan, estimate: BlockEstimate) -> Result<Self, EstimationError> {
        let window = estimate.cascaded.first().map_or(0, Vec::len);
        let g1 = episode.g.row_at(0);
        let g1sq = g1.hadamard(&g1)?;
        let steps = estimate.first_step..estimate.first_step + window;
        let mut true_h = Vec::new();
        let mut true_c = Vec::new();
        let mut est_h = Vec::new();
        let mut est_c = Vec::new();
        for k in 0..episode.users() {
            for (i, s) in steps.clone().enumerate() {
                true_h.push(episode.h(k, s).clone());
                true_c.push(episode.cascaded(k, s).clone());
                est_h.push(estimate.h_hat[k][i].clone());
                est_c.push(estimate.cascaded[k][i].clone());
            }
        }
        let scores = Stage2Nmse {
            g1sq: nmse(&[estimate.g1sq_hat.clone()], &[g1sq])?,
            g1: nmse(&[estimate.g1_hat.clone()], &[g1])?,
            g: nmse(&[estimate.g_hat.clone()], &[episode.g.clone()])?,
            h: nmse(&est_h, &true_h)?,
            cascaded: nmse(&est_c, &true_c)?,
        };
        Ok(Self {
            estimate,
            nmse: scores,
            stage1_slots: plan.stage1_slots(),
            stage2_slots: plan.reference_slots() + plan.reduced_slots(window),
        })
    }

    pub fn g1_hat(&self) -> &ComplexMatrix {
        &self.estimate.g1_hat
    }
}

/// One line of an NMSE sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRow {
    pub snr_db: f64,
    pub quantity: String,
    pub nmse: f64,
    pub pilot_slots: usize,
    pub trials: usize,
}

/// Writes rows as `snr_db,quantity,nmse,nmse_db,pilot_slots,trials`.
pub fn write_estimation_csv<W: Write>(rows: &[EstimationRow], mut out: W) -> io::Result<()> {
    writeln!(out, "snr_db,quantity,nmse,nmse_db,pilot_slots,trials")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:e},{:.6},{},{}",
            r.snr_db,
            r.quantity,
            r.nmse,
            linear_to_db(r.nmse),
            r.pilot_slots,
            r.trials
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_episode, SystemConfig};
    use crate::estimation::estimate_block;
    use crate::numerics::SimRng;

    #[test]
    fn noiseless_report_slots_and_scores() {
        let cfg = SystemConfig::desk();
        let plan = PilotPlan::for_config(&cfg).unwrap();
        let mut rng = SimRng::new(3);
        let ep = gen_episode(&cfg, 6, &mut rng).unwrap();
        let est = estimate_block(&ep, &plan, 1, 4, 0.0, &mut rng).unwrap();
        let rep = EstimationReport::score(&ep, &plan, est).unwrap();
        assert_eq!(rep.stage1_slots, 8);
        assert_eq!(rep.stage2_slots, 2 * 9 + 2 * 4 * 4);
        assert!(rep.nmse.cascaded < 1e-16);
        assert!(rep.nmse.g1sq < 1e-20);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![EstimationRow {
            snr_db: 10.0,
            quantity: "cascaded".into(),
            nmse: 0.1,
            pilot_slots: 58,
            trials: 5,
        }];
        let mut buf = Vec::new();
        write_estimation_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "snr_db,quantity,nmse,nmse_db,pilot_slots,trials\n10,cascaded,1e-1,-10.000000,58,5\n");
    }
}
