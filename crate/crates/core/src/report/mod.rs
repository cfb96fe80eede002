//! Result files: CSV tables, SVG charts and multi-run comparison.

mod compare;
mod csv_out;
mod svg;

pub use compare::{compare_runs, summarize, format_compare_csv, format_compare_text, read_rounds_csv, CompareMetric, CompareRow, RoundsRow};
pub use csv_out::{
    clusters_csv, emit_csv, emit_gridsearch_csv, emit_run_artifacts, emit_timing_csv, fmt_g6, participation_csv, rounds_csv,
    timing_csv, RunArtifactSet,
};
pub use svg::{histogram_svg, line_chart_svg, write_svg, Series};

use crate::error::{Error, Result};

/// Trailing moving average; the first `window - 1` points average over
/// whatever is available, so the output has the input's length.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(Error::Usage("moving-average window must be at least 1".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &series[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leading_partial_windows() {
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 5).unwrap(),
            vec![1.0, 1.5, 2.0, 2.5, 3.0]
        );
        assert_eq!(moving_average(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0], 2).unwrap()[5], 7.0);
        assert!(moving_average(&[], 3).unwrap().is_empty());
        assert!(matches!(moving_average(&[1.0], 0), Err(Error::Usage(_))));
    }

    proptest! {
        #[test]
        fn window_one_is_identity(v in proptest::collection::vec(-1e3f64..1e3, 0..40)) {
            prop_assert_eq!(moving_average(&v, 1).unwrap(), v);
        }

        #[test]
        fn constant_series_unchanged(c in -1e3f64..1e3, n in 0usize..40, w in 1usize..10) {
            let v = vec![c; n];
            let out = moving_average(&v, w).unwrap();
            prop_assert_eq!(out.len(), n);
            for x in out {
                prop_assert!((x - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }
    }
}
