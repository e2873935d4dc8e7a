//! CSV emission for sweep curves: fixed versioned header, '.' decimal
//! with shortest round-trip float formatting, and '#' comment lines
//! carrying the config hash and seed.

use std::io::{self, Write};

use crate::montecarlo::{PerformanceEstimate, ThresholdSchedule};

/// Versioned header; column order is the CurveRow field order.
pub const CURVE_HEADER: &str = "c,gamma0,gamma1,beta0,beta1,p_fa,p_fa_hw,p_md,p_md_hw,e0_n,e0_n_hw,e1_n,e1_n_hw,truncated0,truncated1,approx_e0_n,approx_e1_n,approx_p_fa_lo,approx_p_fa_hi";

/// One emitted sweep-point row. Identical nodes share one `(gamma0,
/// gamma1)` pair. Approximation fields are `None` when not computed or
/// not supported for the configured laws.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub c: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub p_fa: f64,
    pub p_fa_hw: f64,
    pub p_md: f64,
    pub p_md_hw: f64,
    pub e0_n: f64,
    pub e0_n_hw: f64,
    pub e1_n: f64,
    pub e1_n_hw: f64,
    pub truncated0: u64,
    pub truncated1: u64,
    pub approx_e0_n: Option<f64>,
    pub approx_e1_n: Option<f64>,
    pub approx_p_fa_lo: Option<f64>,
    pub approx_p_fa_hi: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "na".to_string(),
    }
}

impl CurveRow {
    pub fn from_estimate(
        c: f64,
        schedule: &ThresholdSchedule,
        estimate: &PerformanceEstimate,
    ) -> Self {
        let (gamma0, gamma1) = schedule.node_gammas[0];
        CurveRow {
            c,
            gamma0,
            gamma1,
            beta0: schedule.beta0,
            beta1: schedule.beta1,
            p_fa: estimate.p_fa,
            p_fa_hw: estimate.p_fa_hw,
            p_md: estimate.p_md,
            p_md_hw: estimate.p_md_hw,
            e0_n: estimate.e0_n,
            e0_n_hw: estimate.e0_n_hw,
            e1_n: estimate.e1_n,
            e1_n_hw: estimate.e1_n_hw,
            truncated0: estimate.truncated[0],
            truncated1: estimate.truncated[1],
            approx_e0_n: None,
            approx_e1_n: None,
            approx_p_fa_lo: None,
            approx_p_fa_hi: None,
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.c,
            self.gamma0,
            self.gamma1,
            self.beta0,
            self.beta1,
            self.p_fa,
            self.p_fa_hw,
            self.p_md,
            self.p_md_hw,
            self.e0_n,
            self.e0_n_hw,
            self.e1_n,
            self.e1_n_hw,
            self.truncated0,
            self.truncated1,
            opt(self.approx_e0_n),
            opt(self.approx_e1_n),
            opt(self.approx_p_fa_lo),
            opt(self.approx_p_fa_hi),
        )
    }
}

/// Write the full curve CSV: provenance comments, header, one line per
/// row, plus any extra '#' comment lines (formula inputs etc).
pub fn write_curve_csv<W: Write>(
    out: &mut W,
    config_hash: u64,
    seed: u64,
    extra_comments: &[String],
    rows: &[CurveRow],
) -> io::Result<()> {
    writeln!(out, "# config_hash = {config_hash:016x}")?;
    writeln!(out, "# seed = {seed}")?;
    for line in extra_comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{CURVE_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> CurveRow {
        CurveRow {
            c: 0.01,
            gamma0: 0.8,
            gamma1: 0.9,
            beta0: 4.605170185988091,
            beta1: 4.605170185988091,
            p_fa: 0.0123,
            p_fa_hw: 0.002,
            p_md: 0.0456,
            p_md_hw: 0.003,
            e0_n: 120.5,
            e0_n_hw: 1.5,
            e1_n: 130.25,
            e1_n_hw: 1.75,
            truncated0: 0,
            truncated1: 2,
            approx_e0_n: Some(118.0),
            approx_e1_n: None,
            approx_p_fa_lo: Some(0.004),
            approx_p_fa_hi: Some(0.02),
        }
    }

    #[test]
    fn header_matches_row_arity() {
        let cols = CURVE_HEADER.split(',').count();
        let row = sample_row().to_csv_line();
        assert_eq!(row.split(',').count(), cols);
    }

    #[test]
    fn floats_round_trip_exactly() {
        let row = sample_row();
        let line = row.to_csv_line();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3].parse::<f64>().unwrap(), row.beta0);
        assert_eq!(fields[5].parse::<f64>().unwrap(), row.p_fa);
        assert_eq!(fields[16], "na");
    }

    #[test]
    fn comments_carry_hash_and_seed() {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, 0xdead_beef, 42, &["theta0 = -0.5".into()], &[sample_row()])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_hash = "));
        assert!(lines[0].contains("deadbeef"));
        assert_eq!(lines[1], "# seed = 42");
        assert_eq!(lines[2], "# theta0 = -0.5");
        assert_eq!(lines[3], CURVE_HEADER);
        assert_eq!(lines.len(), 5);
    }
}
