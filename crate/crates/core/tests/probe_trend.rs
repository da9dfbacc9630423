use dti_core::prenorm::NormKind;
use dti_core::probe::*;

#[test]
fn frozen_probe_loses_position_as_magnitude_grows() {
    let table = default_probe_table::<f64>(42).unwrap();
    let cfg = ProbeSweepConfig::default();
    let mags = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let sweep = magnitude_sweep_seeds(&table, &cfg, &mags, &[1, 2, 3]).unwrap();
    let acc: Vec<f64> = sweep.mean.iter().map(|p| p.accuracy).collect();
    assert!(acc[0] >= 0.9 && acc[1] >= 0.9, "{acc:?}");
    assert!(acc[5] <= 0.5 * acc[1], "{acc:?}");
    for w in acc[1..].windows(2) {
        assert!(w[1] <= w[0] + 0.05, "{acc:?}");
    }
    let again = magnitude_sweep_seeds(&table, &cfg, &mags, &[1, 2, 3]).unwrap();
    assert_eq!(sweep, again);
    assert!(sweep_csv(&sweep.mean).starts_with("m,accuracy\n0.5,"));
}

#[test]
fn training_loss_falls_every_epoch_and_untrained_is_at_chance() {
    let table = default_probe_table::<f64>(42).unwrap();
    let ds = build_probe_dataset(&table, 8, NormKind::LayerNorm, 1.0, 100, 5).unwrap();
    let (train, held_out) = split_dataset(&ds, 1);
    let trained = train_probe(&train, &ProbeHyperparams::default(), 3).unwrap();
    for w in trained.epoch_losses.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(evaluate_probe(&trained.model, &held_out).unwrap() >= 0.95);
    for seed in 0..5 {
        let hp = ProbeHyperparams {
            epochs: 0,
            ..Default::default()
        };
        let untrained = train_probe(&ds, &hp, seed).unwrap();
        let acc = evaluate_probe(&untrained.model, &ds).unwrap();
        assert!((acc - 0.125).abs() <= 0.05, "seed {seed}: {acc}");
    }
}
