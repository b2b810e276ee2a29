use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uaelab::blocks::{build_block, BlockConfig, BlockKind, InitScheme};
use uaelab::harness::correlation::correlate_metrics;
use uaelab::harness::flops::flops_estimate;
use uaelab::harness::study::{score_series, STRUCTURAL_CHANNELS};
use uaelab::harness::{MetricRecord, StudyModule};
use uaelab::tensor::{gradcheck, Tape, Tensor};
use uaelab::UaeForm;

#[test]
fn input_gradient_through_two_chained_blocks() {
    let init = InitScheme::Xavier { gain: 1.0 };
    let first = build_block(&BlockConfig::new(BlockKind::Crb, 2).with_init(init), 11).unwrap();
    let second = build_block(&BlockConfig::new(BlockKind::Dcrb, 2).with_init(init), 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::uniform(&[1, 2, 5, 5], -1.0, 1.0, &mut rng);
    let target = Tensor::uniform(&[1, 2, 5, 5], -1.0, 1.0, &mut rng);
    let probe = Tensor::uniform(&[1, 2, 5, 5], -1.0, 1.0, &mut rng);

    let check = gradcheck(&[x], 1e-5, |t: &mut Tape, v| {
        let p1 = first.bind(t, false);
        let p2 = second.bind(t, false);
        let h = first.forward(t, v[0], &p1)?;
        let y = second.forward(t, h, &p2)?;
        t.dot_const(y, &probe)
    })
    .unwrap();
    assert!(check.max_relative_error() < 1e-6, "{:?}", check.relative_errors);

    // Same chain under the L1 loss used for training.
    let check = gradcheck(&[Tensor::uniform(&[1, 2, 5, 5], -1.0, 1.0, &mut rng)], 1e-6, |t: &mut Tape, v| {
        let p1 = first.bind(t, false);
        let p2 = second.bind(t, false);
        let h = first.forward(t, v[0], &p1)?;
        let y = second.forward(t, h, &p2)?;
        let goal = t.leaf(target.clone(), false);
        t.l1_loss(y, goal)
    })
    .unwrap();
    assert!(check.max_relative_error() < 1e-4, "{:?}", check.relative_errors);
}

#[test]
fn layer_count_tracks_flops_across_the_crb_family() {
    let modules = [
        StudyModule::kind(BlockKind::Rb),
        StudyModule::kind(BlockKind::Crb),
        StudyModule::crb_star(12),
        StudyModule::crb_star(16),
    ];
    let mut records = Vec::new();
    let mut descs = Vec::new();
    for m in &modules {
        let config = BlockConfig {
            channels: STRUCTURAL_CHANNELS,
            ..m.config.clone()
        };
        let block = build_block(&config, 0).unwrap();
        let mut r = MetricRecord::new(m.label.clone(), block.parameter_count() as u64);
        r.flops = Some(flops_estimate(&block.layer_graph(), 16, 16));
        records.push(r);
        descs.push(m.descriptor().unwrap());
    }
    let series = score_series(&UaeForm::parse_list("phi1").unwrap(), &descs).unwrap();
    let cells = correlate_metrics(&records, &series);
    let cell = cells.iter().find(|c| c.variant == "phi1:alpha" && c.metric == "flops").expect("alpha/flops cell");
    assert_eq!(cell.pairs, 4);
    assert!((cell.rho.unwrap() - 1.0).abs() < 1e-12, "rho = {:?}", cell.rho);
}
