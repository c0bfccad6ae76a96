use proptest::prelude::*;

use repligame::{InitialKind, RateFamily, TerminalKind};
use repligame_cli::config::{Experiment, KernelConfig, LongrunConfig};
use repligame_cli::{parse_config, ScenarioConfig};

fn experiment() -> impl Strategy<Value = Experiment> {
    prop_oneof![
        Just(Experiment::Grd),
        Just(Experiment::Mfg),
        Just(Experiment::DeltaSweep),
        Just(Experiment::Refinement),
        Just(Experiment::Longrun),
        Just(Experiment::Equilibrium),
    ]
}

fn kernel(energy_only: bool) -> BoxedStrategy<KernelConfig> {
    let energy = (
        0.01f64..0.99,
        1.001f64..10.0,
        0.001f64..10.0,
        0.001f64..=1.0,
    )
        .prop_map(|(alpha, sigma, w, x_bar)| KernelConfig::Energy {
            alpha,
            sigma,
            w,
            x_bar,
        });
    if energy_only {
        energy.boxed()
    } else {
        prop_oneof![
            Just(KernelConfig::Zero),
            Just(KernelConfig::Concave),
            Just(KernelConfig::Convex),
            energy,
        ]
        .boxed()
    }
}

fn rate() -> impl Strategy<Value = (RateFamily, f64)> {
    (0usize..4, 1.0f64..8.0).prop_map(|(k, q)| (RateFamily::ALL[k], q))
}

fn config() -> impl Strategy<Value = ScenarioConfig> {
    experiment().prop_flat_map(|exp| {
        let energy_only = matches!(exp, Experiment::Longrun | Experiment::Equilibrium);
        let n_deltas = if exp == Experiment::Mfg {
            1..2usize
        } else {
            1..6usize
        };
        (
            Just(exp),
            "[a-z][a-z0-9_/]{0,12}",
            rate(),
            kernel(energy_only),
            any::<bool>(),
            any::<bool>(),
            0.0f64..10.0,
            (1usize..5000, 1usize..400, 0.01f64..500.0),
            prop::collection::vec(1e-3f64..1e3, n_deltas),
            (0.01f64..=1.0, 1usize..5000, 1e-14f64..1e-3),
            2usize..7,
            (
                prop::collection::vec(0.01f64..=1.0, 0..4),
                prop::collection::vec(0u32..100_000, 0..4),
                1usize..200,
            ),
        )
            .prop_map(
                |(
                    exp,
                    path,
                    (family, q),
                    kernel,
                    fs,
                    linear,
                    psi_bar,
                    grid,
                    deltas,
                    fp,
                    levels,
                    lr,
                )| {
                    let mut cfg = ScenarioConfig::with_defaults(exp);
                    cfg.output_path = path;
                    cfg.family = family;
                    cfg.q = q;
                    cfg.kernel = kernel;
                    cfg.init = if fs {
                        InitialKind::FiniteSupport
                    } else {
                        InitialKind::Uniform
                    };
                    cfg.terminal = if linear {
                        TerminalKind::LinearGain
                    } else {
                        TerminalKind::Zero
                    };
                    cfg.psi_bar = psi_bar;
                    cfg.big_i = 2 * grid.0;
                    cfg.big_j = grid.1;
                    cfg.t_end = grid.2;
                    cfg.deltas = deltas;
                    cfg.relaxation = fp.0;
                    cfg.max_iters = fp.1;
                    cfg.tol = fp.2;
                    cfg.refinement_levels = levels;
                    cfg.longrun = LongrunConfig {
                        x_bars: lr.0,
                        // multiples of dt = 0.5, exact in binary
                        times: lr.1.into_iter().map(|k| f64::from(k) * 0.5).collect(),
                        dt: 0.5,
                        cells: lr.2,
                    };
                    cfg
                },
            )
    })
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(cfg in config()) {
        prop_assert!(cfg.validate().is_ok(), "{:?}", cfg.validate());
        prop_assert_eq!(parse_config(&cfg.render()).unwrap(), cfg);
    }
}
