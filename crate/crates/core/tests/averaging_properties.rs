use proptest::prelude::*;
use wsc_core::consolidation::{AvgCountMode, ConsolidationSchedule, RunningAverage};
use wsc_core::nn::ParameterSet;

fn schedule(n_iter: usize, n_warm: usize, j: usize, mode: AvgCountMode) -> ConsolidationSchedule {
    ConsolidationSchedule {
        n_iter,
        n_warm,
        avg_interval: j,
        avg_count_mode: mode,
        ..ConsolidationSchedule::with_epochs(n_iter)
    }
}

fn trajectory() -> impl Strategy<Value = (usize, usize, Vec<Vec<f64>>)> {
    (1usize..4, 0usize..6, 1usize..9).prop_flat_map(|(j, warm, dim)| {
        let epochs = warm + 1 + 4 * j;
        (
            Just(j),
            Just(warm),
            prop::collection::vec(prop::collection::vec(-1e3f64..1e3, dim), epochs + 1),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn snapshots_mode_is_the_mean_of_snapshots((j, warm, iterates) in trajectory()) {
        let dim = iterates[0].len();
        let epochs = iterates.len() - 1;
        let layout = ParameterSet::<f64>::zeros([("w", vec![dim])]);
        let sched = schedule(epochs, warm, j, AvgCountMode::Snapshots);
        let mut avg = RunningAverage::new(layout.with_values(iterates[0].clone()).unwrap());
        let mut taken: Vec<&Vec<f64>> = Vec::new();
        for (i, theta) in iterates.iter().enumerate().skip(1) {
            if i > warm && i % j == 0 {
                avg.update(&layout.with_values(theta.clone()).unwrap(), i, &sched).unwrap();
                taken.push(theta);
            }
        }
        prop_assert_eq!(avg.updates(), taken.len());
        for c in 0..dim {
            let mean = taken.iter().map(|t| t[c]).sum::<f64>() / taken.len() as f64;
            prop_assert!((avg.average().values()[c] - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn paper_mode_follows_its_recurrence((j, warm, iterates) in trajectory()) {
        let dim = iterates[0].len();
        let epochs = iterates.len() - 1;
        let layout = ParameterSet::<f64>::zeros([("w", vec![dim])]);
        let sched = schedule(epochs, warm, j, AvgCountMode::Paper);
        let mut avg = RunningAverage::new(layout.with_values(iterates[0].clone()).unwrap());
        let mut oracle = iterates[0].clone();
        for (i, theta) in iterates.iter().enumerate().skip(1) {
            if i > warm && i % j == 0 {
                let n = avg.update(&layout.with_values(theta.clone()).unwrap(), i, &sched).unwrap();
                prop_assert_eq!(n, i / j);
                let n = n as f64;
                for c in 0..dim {
                    oracle[c] = (oracle[c] * n + theta[c]) / (n + 1.0);
                }
            }
        }
        for (v, o) in avg.average().values().iter().zip(&oracle) {
            prop_assert!((v - o).abs() <= 1e-9 * (1.0 + o.abs()));
        }
    }
}
