//! Monte Carlo bias and variance, asymptotic bias curves, forecasting and
//! the MAPE-driven choice of `alpha`.

pub mod bias_curve;
pub mod forecast;
pub mod montecarlo;

pub use bias_curve::{asymptotic_bias_curve, BiasCell, BiasCurveConfig, BiasCurveReport, BiasMedian, MIN_N_LARGE};
pub use forecast::{
    forecast_horizon, iterated_forecasts, mape, mape_sum, one_step_forecasts, select_alpha, AlphaRow, AlphaSelection,
};
pub use montecarlo::{
    draw_series, replication_series, run_mc_experiment, FitSettings, LongRow, McCell, McConfig, McReport, ModelSpec,
    Moments,
};

use std::io::Write;

use crate::error::{Result, TarmaError};

/// Writes long-format rows as CSV with a header.
pub fn write_long_csv<W: Write>(rows: &[LongRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| TarmaError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| TarmaError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_csv_header_and_missing_values() {
        let rows = vec![LongRow {
            case: "2".into(),
            alpha: 0.3,
            n: 200,
            epsilon: 0.1,
            k: 10.0,
            metric: "bias2".into(),
            value: None,
        }];
        let mut buf = Vec::new();
        write_long_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "case,alpha,n,epsilon,k,metric,value\n2,0.3,200,0.1,10.0,bias2,\n"
        );
    }
}
