use spectral_rnn_core::cells::{unroll, CellKind};
use spectral_rnn_core::data::{mackey_glass, MackeyConfig};
use spectral_rnn_core::gradcheck::{central_differences, check_gradient, relative_error};
use spectral_rnn_core::model::{Frontend, LossDomain, Model, ModelSpec, Normalization};
use spectral_rnn_core::spectral::{istft, lowpass, stft, SpectralFrames, WindowSpec};
use spectral_rnn_core::tape::Tape;
use spectral_rnn_core::{RealSeries, Rng};

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn toy_series() -> (RealSeries, RealSeries) {
    let x = mackey_glass(&MackeyConfig {
        t_end: 120.0,
        seed: 3,
        ..MackeyConfig::default()
    })
    .unwrap();
    (x.slice(1000, 1032).unwrap(), x.slice(1032, 1064).unwrap())
}

fn toy_model(cell: CellKind, keep: Option<usize>, seed: u64) -> Model {
    let spec = ModelSpec {
        cell,
        hidden: 8,
        n_features: 1,
        frontend: Frontend::Spectral {
            window: WindowSpec::new(16, 8, 0.5).unwrap(),
            keep,
        },
    };
    Model::init(spec, &mut Rng::new(seed)).unwrap()
}

fn check_model(model: &Model, domain: LossDomain) {
    let (ctx, tgt) = toy_series();
    let (_, _, grads) = model.loss_and_gradients(&ctx, &tgt, domain).unwrap();
    let analytic = model.flat_gradient(&grads);
    let x0 = model.flat_params();
    let f = |p: &[f64]| {
        let mut m = model.clone();
        m.set_flat_params(p)?;
        Ok(m.loss_pass(&ctx, &tgt, domain)?.loss)
    };
    let report = check_gradient(f, &x0, &analytic, H).unwrap();
    assert!(
        report.passes(TOL),
        "{:?} {domain:?}: worst scalar {} of {} has error {:.3e} (analytic {:.6e}, numeric {:.6e})",
        model.spec.cell,
        report.worst_index,
        x0.len(),
        report.max_error,
        analytic[report.worst_index],
        report.numeric[report.worst_index]
    );
}

#[test]
fn every_scalar_matches_finite_differences_for_each_cell() {
    for (i, cell) in [CellKind::Gru, CellKind::Basic, CellKind::ComplexGru].into_iter().enumerate() {
        check_model(&toy_model(cell, None, i as u64 + 1), LossDomain::Time);
    }
}

#[test]
fn lowpassed_and_frequency_loss_pipelines_match_finite_differences() {
    check_model(&toy_model(CellKind::Gru, Some(3), 7), LossDomain::Time);
    check_model(&toy_model(CellKind::ComplexGru, Some(3), 8), LossDomain::Frequency);
    check_model(&toy_model(CellKind::Gru, None, 9), LossDomain::Frequency);
}

#[test]
fn normalized_models_match_finite_differences() {
    let norm = Normalization {
        shift: vec![0.9],
        scale: vec![0.23],
    };
    for (domain, seed) in [(LossDomain::Time, 10), (LossDomain::Frequency, 11)] {
        let model = toy_model(CellKind::Gru, Some(4), seed).with_normalization(norm.clone()).unwrap();
        check_model(&model, domain);
    }
}

#[test]
fn windowed_pipelines_match_finite_differences() {
    for (size, factor) in [(1, 1), (8, 1), (8, 4), (8, 3)] {
        let spec = ModelSpec {
            cell: CellKind::Gru,
            hidden: 8,
            n_features: 1,
            frontend: Frontend::Windowed { size, factor },
        };
        check_model(&Model::init(spec, &mut Rng::new(size as u64)).unwrap(), LossDomain::Time);
    }
}

/// The same forecast as `Model::loss_pass`, but with separate analysis and
/// synthesis widths, built only from public pieces.
fn two_window_loss(model: &Model, sigma_a: f64, sigma_s: f64, ctx: &RealSeries, tgt: &RealSeries) -> f64 {
    let Frontend::Spectral { window, keep } = &model.spec.frontend else { unreachable!() };
    let codec = model.spec.codec().unwrap();
    let mut wa = window.clone();
    wa.set_sigma(sigma_a);
    let mut ws = window.clone();
    ws.set_sigma(sigma_s);

    let f0 = window.full_frames(ctx.len());
    let last = (ctx.len() + tgt.len() - 1) / window.hop();
    let n_pred = last - f0 + 1;
    let mut frames = stft(ctx, &wa).unwrap();
    if let Some(k) = keep {
        frames = lowpass(&frames, *k).unwrap();
    }
    let mut tape = Tape::new();
    let inputs: Vec<_> = (0..f0).map(|t| tape.leaf(codec.encode(&frames, t))).collect();
    let un = unroll(&model.cell, &inputs, None, n_pred - 1, &mut tape).unwrap();
    let mut decoded = SpectralFrames::zeros(&ws, n_pred, ws.n_freq(), 1, 0);
    for (t, id) in un.outputs[f0 - 1..].iter().enumerate() {
        codec.decode_into(tape.value(*id), &mut decoded, t).unwrap();
    }
    let offset = ctx.len() - window.hop() * f0;
    let y = istft(&decoded, &ws, offset + tgt.len()).unwrap();
    let y = &y.data()[offset..];
    y.iter().zip(tgt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

#[test]
fn sigma_gradient_is_the_sum_of_both_transforms() {
    let (ctx, tgt) = toy_series();
    for (i, cell) in [CellKind::Gru, CellKind::ComplexGru].into_iter().enumerate() {
        let model = toy_model(cell, Some(4), 20 + i as u64);
        let s = model.sigma().unwrap();
        let (loss, _, g) = model.loss_and_gradients(&ctx, &tgt, LossDomain::Time).unwrap();
        assert_eq!(loss, two_window_loss(&model, s, s, &ctx, &tgt));

        let fa = central_differences(|p| Ok(two_window_loss(&model, p[0], s, &ctx, &tgt)), &[s], H).unwrap()[0];
        let fs = central_differences(|p| Ok(two_window_loss(&model, s, p[0], &ctx, &tgt)), &[s], H).unwrap()[0];
        assert!(relative_error(g.sigma_analysis, fa) <= TOL, "{} vs {fa}", g.sigma_analysis);
        assert!(relative_error(g.sigma_synthesis, fs) <= TOL, "{} vs {fs}", g.sigma_synthesis);
        assert_eq!(g.sigma(), g.sigma_analysis + g.sigma_synthesis);
    }
}

#[test]
fn frequency_loss_has_no_synthesis_contribution() {
    let (ctx, tgt) = toy_series();
    let model = toy_model(CellKind::ComplexGru, Some(4), 30);
    let (_, time_mse, g) = model.loss_and_gradients(&ctx, &tgt, LossDomain::Frequency).unwrap();
    assert_eq!(g.sigma_synthesis, 0.0);
    assert_ne!(g.sigma_analysis, 0.0);
    assert_eq!(g.sigma(), g.sigma_analysis);
    let forecast = model.forecast(&ctx, tgt.len()).unwrap();
    let direct: f64 = forecast
        .data()
        .iter()
        .zip(tgt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / tgt.len() as f64;
    assert_eq!(time_mse, direct);
}

#[test]
fn zero_loss_gradient_and_determinism() {
    let (ctx, tgt) = toy_series();
    let model = toy_model(CellKind::Gru, None, 40);
    let pass = model.loss_pass(&ctx, &tgt, LossDomain::Time).unwrap();
    let g = pass.tape.backward(&model.cell, 0.0).unwrap();
    assert!(g.cell.to_flat().iter().all(|v| *v == 0.0));
    assert_eq!(g.sigma(), 0.0);

    let a = model.loss_and_gradients(&ctx, &tgt, LossDomain::Time).unwrap();
    let b = model.loss_and_gradients(&ctx, &tgt, LossDomain::Time).unwrap();
    assert_eq!(a, b);
}

#[test]
fn multivariate_series_use_one_block_per_feature() {
    let (ctx, tgt) = toy_series();
    let two = |x: &RealSeries| {
        let data = x.data().iter().flat_map(|v| [*v, 2.0 - v]).collect();
        RealSeries::new(x.len(), 2, data).unwrap()
    };
    let spec = ModelSpec {
        cell: CellKind::Gru,
        hidden: 6,
        n_features: 2,
        frontend: Frontend::Spectral {
            window: WindowSpec::new(16, 8, 0.5).unwrap(),
            keep: Some(3),
        },
    };
    assert_eq!(spec.cell_config().unwrap().input_dim, 12);
    let model = Model::init(spec, &mut Rng::new(2)).unwrap();
    check_model_pair(&model, &two(&ctx), &two(&tgt));
    assert!(model.forecast(&ctx, 4).is_err());
}

fn check_model_pair(model: &Model, ctx: &RealSeries, tgt: &RealSeries) {
    let (_, _, grads) = model.loss_and_gradients(ctx, tgt, LossDomain::Time).unwrap();
    let analytic = model.flat_gradient(&grads);
    let f = |p: &[f64]| {
        let mut m = model.clone();
        m.set_flat_params(p)?;
        Ok(m.loss_pass(ctx, tgt, LossDomain::Time)?.loss)
    };
    let report = check_gradient(f, &model.flat_params(), &analytic, H).unwrap();
    assert!(report.passes(TOL), "max error {:.3e}", report.max_error);
}
