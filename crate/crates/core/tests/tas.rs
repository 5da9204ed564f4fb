use oobai::baselines::*;
use oobai::harness::generate_offline;
use oobai::harness::OfflinePolicy;
use oobai::oracle::{BanditInstance, OfflineDataset};
use oobai::rewards::{derive_seed, ArmStreams};
use oobai::spef::Family;
use oobai::tas::*;

const BERNOULLI10: [f64; 10] = [0.298, 0.437, 0.376, 0.651, 0.376, 0.322, 0.600, 0.643, 0.381, 0.8];

#[test]
fn practical_threshold_examples() {
    let p = StoppingThreshold::Practical;
    assert!((p.value(1, 0.05, 3) - (1.0f64 / 0.05).ln()).abs() < 1e-12);
    let t = 1000u64;
    let expected = ((1.0 + (t as f64).ln()) / 0.01).ln();
    assert!((p.value(t, 0.01, 10) - expected).abs() < 1e-12);
    assert!(p.value(t, 0.01, 10) < StoppingThreshold::Theoretical.value(t, 0.01, 10));
}

#[test]
fn ten_arm_bernoulli_is_correct_under_both_thresholds() {
    let inst = BanditInstance::new(Family::Bernoulli, BERNOULLI10.to_vec()).unwrap();
    let options = RunOptions::default();
    for threshold in [StoppingThreshold::Theoretical, StoppingThreshold::Practical] {
        let mut errors = 0;
        for trial in 0..20 {
            let sample = generate_offline(&OfflinePolicy::Uniform, 200, &inst, derive_seed(&[3, trial])).unwrap();
            let sampler =
                BatchTas::new(inst.family(), &sample.dataset, 0.05).unwrap().with_stopping_threshold(threshold);
            let result = run_sampler(sampler, inst.best(), &mut sample.streams.clone(), &options).unwrap();
            assert_eq!(result.tracking_violations, 0);
            errors += usize::from(!result.correct);
        }
        assert!(errors <= 3, "{threshold:?}: {errors} errors");
    }
}

#[test]
fn plug_in_target_level_still_stops_correctly() {
    let inst = BanditInstance::new(Family::Gaussian, vec![1.0, 0.5, 0.0]).unwrap();
    let offline = OfflineDataset::empty(3);
    for seed in 0..10 {
        let sampler = BatchTas::new(inst.family(), &offline, 0.05).unwrap().with_target_level(TargetLevel::PlugIn);
        let result = run_sampler(sampler, inst.best(), &mut ArmStreams::new(&inst, seed), &RunOptions::default()).unwrap();
        assert!(result.correct);
        assert_eq!(result.tracking_violations, 0);
    }
}

#[test]
fn oracle_calls_grow_like_square_root() {
    let inst = BanditInstance::new(Family::Gaussian, vec![0.5, 0.4, 0.4]).unwrap();
    let result = run(&inst, &OfflineDataset::empty(3), 0.01, 9, &RunOptions::default()).unwrap();
    let k = 3.0;
    let bound = (result.stop_time as f64 / k).sqrt() + 2.0;
    assert!((result.oracle_calls as f64) <= bound, "{} calls for {} steps", result.oracle_calls, result.stop_time);
    assert!((result.oracle_calls as f64) >= bound - 4.0);
}

#[test]
fn offline_data_shortens_runs_on_average() {
    let inst = BanditInstance::new(Family::Gaussian, vec![1.0, 0.6, 0.2]).unwrap();
    let options = RunOptions::default();
    let mean = |tau1: u64| -> f64 {
        (0..40)
            .map(|trial| {
                let sample = generate_offline(&OfflinePolicy::Uniform, tau1, &inst, derive_seed(&[5, trial])).unwrap();
                let sampler = BatchTas::new(inst.family(), &sample.dataset, 0.01).unwrap();
                run_sampler(sampler, inst.best(), &mut sample.streams.clone(), &options).unwrap().stop_time as f64
            })
            .sum::<f64>()
            / 40.0
    };
    let (none, some) = (mean(0), mean(300));
    assert!(some < none, "{some} vs {none}");
}

#[test]
fn lucb_error_rate_within_delta() {
    let inst = BanditInstance::new(Family::Bernoulli, vec![0.7, 0.5, 0.4]).unwrap();
    for index in [IndexFamily::HoeffdingBound, IndexFamily::KlBound] {
        let errors = (0..100)
            .filter(|&seed| {
                let r = lucb_run(&inst, &OfflineDataset::empty(3), 0.1, index, seed, &RunOptions::default()).unwrap();
                !r.correct
            })
            .count();
        assert!(errors <= 10, "{index:?}: {errors}");
    }
}

#[test]
fn replay_consumes_offline_before_fresh_samples() {
    let inst = BanditInstance::new(Family::Gaussian, vec![1.0, 0.0]).unwrap();
    let samples = vec![vec![1.0; 40], vec![]];
    let mut base = BatchTas::new(inst.family(), &OfflineDataset::empty(2), 0.01).unwrap();
    let run = artificial_replay_run(&inst, samples, &mut base, 4, &RunOptions::default()).unwrap();
    let acc = &run.accounting;
    for a in 0..2 {
        assert_eq!(acc.consumed_offline[a] + acc.fresh_online[a], acc.base_demand[a]);
    }
    assert!(acc.consumed_offline[0] <= 40);
    assert_eq!(acc.consumed_offline[1], 0);
    assert_eq!(run.result.stop_time, acc.fresh_online.iter().sum::<u64>());
}
