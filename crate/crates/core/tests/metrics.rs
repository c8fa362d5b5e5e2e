use proptest::prelude::*;
use twinsync::metrics::{mean_abs_error_full, settling_time};
use twinsync::twin::{Architecture, RunTrace, TraceRow, TraceStatus};

fn trace(y: &[f64], e: &[f64]) -> RunTrace<f64> {
    let rows = y
        .iter()
        .zip(e)
        .enumerate()
        .map(|(k, (&y, &e))| TraceRow {
            t: k as f64 * 0.01,
            r_ref: 1.0,
            y_physical: y,
            u_physical: 0.0,
            y_twin: y - e,
            error: e,
            y_delivered: true,
            u_delivered: false,
        })
        .collect();
    RunTrace { architecture: Architecture::KalmanObserver, ts: 0.01, rows, status: TraceStatus::Completed }
}

fn signal() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..300).prop_flat_map(|n| (prop::collection::vec(-2.0f64..2.0, n), prop::collection::vec(-0.2f64..0.2, n)))
}

proptest! {
    #[test]
    fn mean_error_ignores_sign((y, e) in signal(), flips in prop::collection::vec(any::<bool>(), 300)) {
        let flipped: Vec<f64> = e.iter().zip(&flips).map(|(&v, &f)| if f { -v } else { v }).collect();
        let a = mean_abs_error_full(&trace(&y, &e)).unwrap();
        let b = mean_abs_error_full(&trace(&y, &flipped)).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn shrinking_error_never_delays_settling(
        (y, e) in signal(),
        scale in prop::collection::vec(0.0f64..=1.0, 300),
    ) {
        let shrunk: Vec<f64> = e.iter().zip(&scale).map(|(&v, &s)| v * s).collect();
        let before = settling_time(&trace(&y, &e));
        let after = settling_time(&trace(&y, &shrunk));
        match (before, after) {
            (Some(b), Some(a)) => prop_assert!(a <= b),
            (Some(_), None) => prop_assert!(false, "shrinking made the trace unsettled"),
            _ => {}
        }
    }

    #[test]
    fn settling_time_lies_within_the_trace((y, e) in signal()) {
        let tr = trace(&y, &e);
        if let Some(t) = settling_time(&tr) {
            prop_assert!(t >= 0.0 && t <= tr.rows.last().unwrap().t);
        }
    }
}
