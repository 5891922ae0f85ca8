//! Central finite-difference checks for every trainable layer and each
//! composite loss, in f64 (and f32 for the end-to-end denoising loss).

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stylediff_core::config::{Config, DenoiserConfig, ExpertConfig, PredictorConfig};
use stylediff_core::denoiser::MotionDenoiser;
use stylediff_core::gradcheck::{check_store, GradCheckReport};
use stylediff_core::lip_expert::{FaceBasis, LipExpert, PROB_EPS};
use stylediff_core::nn::{self, Bind};
use stylediff_core::params::ParameterStore;
use stylediff_core::scalar::Scalar;
use stylediff_core::schedule::DiffusionSchedule;
use stylediff_core::style_predictor::StylePredictor;
use stylediff_core::tape::{Tape, Var};
use stylediff_core::tensor::Tensor;

fn run_check<S: Scalar, F>(
    store: &ParameterStore<S>,
    probes: usize,
    h_rel: f64,
    floor: f64,
    seed: u64,
    build: F,
) -> GradCheckReport
where
    F: Fn(&mut Tape<S>, &ParameterStore<S>) -> Var,
{
    let mut tape = Tape::new();
    let root = build(&mut tape, store);
    let sink = tape.backward(root).expect("backward");
    let analytic: BTreeMap<String, Tensor<S>> = tape.param_grads(store, &sink);
    let mut loss_fn = |s: &ParameterStore<S>| {
        let mut t = Tape::new();
        let r = build(&mut t, s);
        t.value(r).item().to_f()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    check_store(store, &analytic, &mut loss_fn, probes, h_rel, floor, &mut rng)
}

fn assert_pass(report: &GradCheckReport, tol: f64, what: &str) {
    assert!(
        report.passed(tol),
        "{what}: max rel err {} (worst {:?})",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn linear_layer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParameterStore::<f64>::new();
    let layer = nn::Linear::new("lin", 6, 4);
    layer.init(&mut store, &mut rng);
    let x = Tensor::<f64>::randn(3, 6, &mut rng);
    let report = run_check(&store, 24, 1e-5, 1e-6, 11, |tape, s| {
        let xv = tape.constant(x.clone());
        let y = layer.forward(tape, s, Bind::Train, xv).unwrap();
        let sq = tape.mul(y, y).unwrap();
        tape.sum_all(sq)
    });
    assert_pass(&report, 1e-4, "linear");
}

#[test]
fn attention_and_pooling_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParameterStore::<f64>::new();
    let attn = nn::MultiHeadAttention::new("attn", 8, 2);
    attn.init(&mut store, &mut rng);
    // zero-init out-projection would hide upstream gradients; perturb it
    store
        .set("attn.wo.w", Tensor::<f64>::randn(8, 8, &mut rng).scale(0.2))
        .unwrap();
    let pool = nn::AttentionPool::new("pool", 8);
    pool.init(&mut store, &mut rng);
    let x = Tensor::<f64>::randn(5, 8, &mut rng);
    let report = run_check(&store, 48, 1e-5, 1e-6, 12, |tape, s| {
        let xv = tape.constant(x.clone());
        let y = attn.forward(tape, s, Bind::Train, xv, xv).unwrap();
        let pooled = pool.forward(tape, s, Bind::Train, y).unwrap();
        let sq = tape.mul(pooled, pooled).unwrap();
        tape.sum_all(sq)
    });
    assert_pass(&report, 1e-4, "attention+pooling");
}

#[test]
fn transformer_layer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParameterStore::<f64>::new();
    let enc = nn::EncoderLayer::new("enc", 8, 2, 16);
    let dec = nn::DecoderLayer::new("dec", 8, 2, 16);
    enc.init(&mut store, &mut rng);
    dec.init(&mut store, &mut rng);
    for name in ["enc.attn.wo.w", "enc.ff.fc2.w", "dec.self_attn.wo.w", "dec.cross_attn.wo.w", "dec.ff.fc2.w"] {
        let t = store.get(name).unwrap();
        let fresh = Tensor::<f64>::randn(t.rows(), t.cols(), &mut rng).scale(0.2);
        store.set(name, fresh).unwrap();
    }
    let x = Tensor::<f64>::randn(4, 8, &mut rng);
    let mem = Tensor::<f64>::randn(6, 8, &mut rng);
    let report = run_check(&store, 64, 1e-5, 1e-6, 13, |tape, s| {
        let xv = tape.constant(x.clone());
        let mv = tape.constant(mem.clone());
        let e = enc.forward(tape, s, Bind::Train, xv).unwrap();
        let d = dec.forward(tape, s, Bind::Train, e, mv).unwrap();
        let sq = tape.mul(d, d).unwrap();
        tape.sum_all(sq)
    });
    assert_pass(&report, 1e-4, "encoder+decoder layer");
}

#[test]
fn conv_block_gradients_training_and_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParameterStore::<f64>::new();
    let block = nn::ConvBlock::new("conv", 3, 5, 3, 2);
    let rblock = nn::ConvBlock::new("rconv", 5, 5, 3, 1).residual();
    block.init(&mut store, &mut rng);
    rblock.init(&mut store, &mut rng);
    let x = Tensor::<f64>::randn(2 * 6, 3, &mut rng);
    for training in [true, false] {
        let report = run_check(&store, 48, 1e-5, 1e-6, 14, |tape, s| {
            let xv = tape.constant(x.clone());
            let (y, l) = block.forward(tape, s, Bind::Train, xv, 2, 6, training).unwrap();
            let (y, _) = rblock.forward(tape, s, Bind::Train, y, 2, l, training).unwrap();
            let sq = tape.mul(y, y).unwrap();
            tape.sum_all(sq)
        });
        assert_pass(&report, 1e-4, &format!("conv blocks (training={training})"));
    }
}

#[test]
fn denoising_loss_gradients_f64() {
    let mut cfg = DenoiserConfig::desk();
    cfg.hidden = 16;
    cfg.enc_layers = 1;
    cfg.style_layers = 1;
    cfg.dec_layers = 1;
    cfg.heads = 2;
    let den = MotionDenoiser::new(cfg.clone());
    let mut store = den.fresh_store::<f64>(21);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // give the zero-initialized head and residual projections signal
    for name in store.names().cloned().collect::<Vec<_>>() {
        let t = store.get(&name).unwrap();
        if t.data().iter().all(|v| *v == 0.0) && name.ends_with(".w") {
            let fresh = Tensor::<f64>::randn(t.rows(), t.cols(), &mut rng).scale(0.2);
            store.set(&name, fresh).unwrap();
        }
    }
    let sched = DiffusionSchedule::default_linear(cfg.timesteps).unwrap();
    let window = Tensor::<f64>::randn(11, cfg.audio_dim, &mut rng);
    let reference = Tensor::<f64>::randn(64, cfg.motion_dim, &mut rng).scale(0.5);
    let m0 = Tensor::<f64>::randn(1, cfg.motion_dim, &mut rng).scale(0.5);
    let noise = Tensor::<f64>::randn(1, cfg.motion_dim, &mut rng);
    let t = 37;
    let m_t = sched.forward_diffuse(&m0, t, &noise).unwrap();

    let report = run_check(&store, 32, 1e-5, 1e-6, 15, |tape, s| {
        let code = den.style_encode(tape, s, Bind::Train, &reference).unwrap();
        let m_t_v = tape.constant(m_t.clone());
        let x0 = den
            .denoise_predict(tape, s, Bind::Train, m_t_v, t, &window, code)
            .unwrap();
        let target = tape.constant(m0.clone());
        let diff = tape.sub(x0, target).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        tape.sum_all(sq)
    });
    assert_pass(&report, 1e-4, "denoising loss (f64)");
}

#[test]
fn denoising_loss_gradients_f32() {
    let mut cfg = DenoiserConfig::desk();
    cfg.hidden = 16;
    cfg.enc_layers = 1;
    cfg.style_layers = 1;
    cfg.dec_layers = 1;
    cfg.heads = 2;
    let den = MotionDenoiser::new(cfg.clone());
    let mut store = den.fresh_store::<f32>(22);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for name in store.names().cloned().collect::<Vec<_>>() {
        let t = store.get(&name).unwrap();
        if t.data().iter().all(|v| *v == 0.0) && name.ends_with(".w") {
            let fresh = Tensor::<f32>::randn(t.rows(), t.cols(), &mut rng).scale(0.2);
            store.set(&name, fresh).unwrap();
        }
    }
    let sched = DiffusionSchedule::default_linear(cfg.timesteps).unwrap();
    let window = Tensor::<f32>::randn(11, cfg.audio_dim, &mut rng);
    let reference = Tensor::<f32>::randn(64, cfg.motion_dim, &mut rng).scale(0.5);
    let m0 = Tensor::<f32>::randn(1, cfg.motion_dim, &mut rng).scale(0.5);
    let noise = Tensor::<f32>::randn(1, cfg.motion_dim, &mut rng);
    let t = 19;
    let m_t = sched.forward_diffuse(&m0, t, &noise).unwrap();

    // The network runs in f32 end to end; the finite-difference side reduces
    // the squared error in f64 so the scalar reduction's rounding does not
    // swamp the difference quotient.
    let diff_vector = |tape: &mut Tape<f32>, s: &ParameterStore<f32>| -> Var {
        let code = den.style_encode(tape, s, Bind::Train, &reference).unwrap();
        let m_t_v = tape.constant(m_t.clone());
        let x0 = den
            .denoise_predict(tape, s, Bind::Train, m_t_v, t, &window, code)
            .unwrap();
        let target = tape.constant(m0.clone());
        tape.sub(x0, target).unwrap()
    };
    let mut tape = Tape::<f32>::new();
    let diff = diff_vector(&mut tape, &store);
    let sq = tape.mul(diff, diff).unwrap();
    let root = tape.sum_all(sq);
    let sink = tape.backward(root).unwrap();
    let analytic = tape.param_grads(&store, &sink);
    let mut loss_fn = |s: &ParameterStore<f32>| {
        let mut t2 = Tape::<f32>::new();
        let d = diff_vector(&mut t2, s);
        t2.value(d).data().iter().map(|v| (*v as f64) * (*v as f64)).sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let report = stylediff_core::gradcheck::check_store_resolvable(
        &store,
        &analytic,
        &mut loss_fn,
        16,
        1e-2,
        2e-2,
        0.02,
        &mut rng,
    );
    assert_pass(&report, 1e-3, "denoising loss (f32)");
}

#[test]
fn expert_loss_gradients() {
    let mut cfg = ExpertConfig::desk();
    cfg.embed_dim = 32;
    cfg.conv_channels = [8, 12, 16];
    cfg.mlp_hidden = 24;
    let basis = FaceBasis::<f64>::synthetic(cfg.motion_dim, 8, 7);
    let expert = LipExpert::new(cfg.clone());
    let mut store = expert.fresh_store(23, &basis);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in store.names().cloned().collect::<Vec<_>>() {
        if store.is_buffer(&name) {
            continue;
        }
        let t = store.get(&name).unwrap();
        if t.data().iter().all(|v| *v == 0.0) && name.ends_with(".w") {
            let fresh = Tensor::<f64>::randn(t.rows(), t.cols(), &mut rng).scale(0.2);
            store.set(&name, fresh).unwrap();
        }
    }
    let batch = 3;
    let n = cfg.clip_len;
    let audio = Tensor::<f64>::randn(batch * n, cfg.audio_dim, &mut rng);
    let motion = Tensor::<f64>::randn(batch * n, cfg.motion_dim, &mut rng).scale(0.5);
    let mouth = basis.mouth_vertices(&motion).unwrap();
    let references: Vec<Tensor<f64>> = (0..batch)
        .map(|_| Tensor::<f64>::randn(64, cfg.motion_dim, &mut rng).scale(0.5))
        .collect();
    let labels = [1.0, 0.0, 1.0];

    let report = run_check(&store, 32, 1e-5, 1e-6, 17, |tape, s| {
        let feats: Vec<Var> = references
            .iter()
            .map(|r| expert.style_features(tape, s, Bind::Train, r).unwrap())
            .collect();
        let feats = tape.concat_rows(&feats).unwrap();
        let av = tape.constant(audio.clone());
        let mv = tape.constant(mouth.clone());
        let e_a = expert.embed_audio(tape, s, Bind::Train, av, batch, feats, true).unwrap();
        let e_m = expert.embed_mouth(tape, s, Bind::Train, mv, batch, feats, true).unwrap();
        let p = expert.sync_probability(tape, e_m, e_a).unwrap();
        expert.bce_loss(tape, p, &labels).unwrap()
    });
    assert_pass(&report, 1e-4, "expert BCE loss");
}

#[test]
fn predictor_loss_gradients() {
    let mut cfg = PredictorConfig::desk();
    cfg.hidden = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.code_dim = 12;
    let p = StylePredictor::new(cfg.clone());
    let mut store = p.fresh_store::<f64>(31);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for name in store.names().cloned().collect::<Vec<_>>() {
        let t = store.get(&name).unwrap();
        if t.data().iter().all(|v| *v == 0.0) && name.ends_with(".w") {
            let fresh = Tensor::<f64>::randn(t.rows(), t.cols(), &mut rng).scale(0.2);
            store.set(&name, fresh).unwrap();
        }
    }
    let sched = DiffusionSchedule::default_linear(cfg.timesteps).unwrap();
    let audio = Tensor::<f64>::randn(9, cfg.audio_dim, &mut rng);
    let identity = Tensor::<f64>::randn(1, cfg.identity_dim, &mut rng);
    let s0 = Tensor::<f64>::randn(1, cfg.code_dim, &mut rng).scale(0.5);
    let noise = Tensor::<f64>::randn(1, cfg.code_dim, &mut rng);
    let t = 55;
    let s_t = sched.forward_diffuse(&s0, t, &noise).unwrap();

    let report = run_check(&store, 32, 1e-5, 1e-6, 18, |tape, s| {
        let code_v = tape.constant(s_t.clone());
        let pred = p
            .predict_s0(tape, s, Bind::Train, &audio, t, &identity, code_v)
            .unwrap();
        let target = tape.constant(s0.clone());
        let diff = tape.sub(pred, target).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        tape.sum_all(sq)
    });
    assert_pass(&report, 1e-4, "predictor loss");
}

/// The sync-loss surrogate: gradients reach the denoiser through the frozen
/// expert's mouth embedder and the probability head.
#[test]
fn sync_loss_surrogate_gradients() {
    let mut den_cfg = DenoiserConfig::desk();
    den_cfg.hidden = 16;
    den_cfg.enc_layers = 1;
    den_cfg.style_layers = 1;
    den_cfg.dec_layers = 1;
    den_cfg.heads = 2;
    let mut exp_cfg = ExpertConfig::desk();
    exp_cfg.embed_dim = 32;
    exp_cfg.conv_channels = [8, 12, 16];
    exp_cfg.mlp_hidden = 24;
    let n = exp_cfg.clip_len;

    let den = MotionDenoiser::new(den_cfg.clone());
    let mut store = den.fresh_store::<f64>(41);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for name in store.names().cloned().collect::<Vec<_>>() {
        let t = store.get(&name).unwrap();
        if t.data().iter().all(|v| *v == 0.0) && name.ends_with(".w") {
            let fresh = Tensor::<f64>::randn(t.rows(), t.cols(), &mut rng).scale(0.2);
            store.set(&name, fresh).unwrap();
        }
    }
    let basis = FaceBasis::<f64>::synthetic(den_cfg.motion_dim, 8, 7);
    let expert = LipExpert::new(exp_cfg.clone());
    let expert_store = expert.fresh_store(42, &basis);

    let sched = DiffusionSchedule::default_linear(den_cfg.timesteps).unwrap();
    let t = 23;
    let reference = Tensor::<f64>::randn(64, den_cfg.motion_dim, &mut rng).scale(0.5);
    let windows: Vec<Tensor<f64>> = (0..n)
        .map(|_| Tensor::<f64>::randn(11, den_cfg.audio_dim, &mut rng))
        .collect();
    let m_ts: Vec<Tensor<f64>> = (0..n)
        .map(|_| {
            let m0 = Tensor::<f64>::randn(1, den_cfg.motion_dim, &mut rng).scale(0.5);
            let noise = Tensor::<f64>::randn(1, den_cfg.motion_dim, &mut rng);
            sched.forward_diffuse(&m0, t, &noise).unwrap()
        })
        .collect();
    let clip_audio = Tensor::<f64>::randn(n, den_cfg.audio_dim, &mut rng);
    let exp_feats = {
        let mut tape = Tape::<f64>::inference();
        let f = expert
            .style_features(&mut tape, &expert_store, Bind::Frozen, &reference)
            .unwrap();
        tape.value(f).clone()
    };

    let report = run_check(&store, 24, 1e-5, 1e-6, 19, |tape, s| {
        let code = den.style_encode(tape, s, Bind::Train, &reference).unwrap();
        let mut x0s = Vec::new();
        for k in 0..n {
            let m_t_v = tape.constant(m_ts[k].clone());
            let x0 = den
                .denoise_predict(tape, s, Bind::Train, m_t_v, t, &windows[k], code)
                .unwrap();
            x0s.push(x0);
        }
        let motion_hat = tape.concat_rows(&x0s).unwrap();
        let mouth = basis.mouth_vertices_var(tape, motion_hat).unwrap();
        let feats = tape.constant(exp_feats.clone());
        let av = tape.constant(clip_audio.clone());
        let e_a = expert
            .embed_audio(tape, &expert_store, Bind::Frozen, av, 1, feats, false)
            .unwrap();
        let e_m = expert
            .embed_mouth(tape, &expert_store, Bind::Frozen, mouth, 1, feats, false)
            .unwrap();
        let p = expert.sync_probability(tape, e_m, e_a).unwrap();
        let p = tape.max_scalar(p, PROB_EPS);
        let lnp = tape.ln(p);
        tape.affine(lnp, -1.0, 0.0)
    });
    assert_pass(&report, 1e-4, "sync loss surrogate");
}

/// Frozen-expert contract inside the composite graph: expert parameters
/// receive no gradients at all.
#[test]
fn frozen_expert_gets_no_gradients() {
    let cfg = Config::default();
    let basis = FaceBasis::<f64>::synthetic(cfg.world.motion_dim, cfg.world.mouth_dims, 7);
    let expert = LipExpert::new(cfg.expert.clone());
    let expert_store = expert.fresh_store::<f64>(42, &basis);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let motion = Tensor::<f64>::randn(cfg.expert.clip_len, cfg.world.motion_dim, &mut rng);
    let audio = Tensor::<f64>::randn(cfg.expert.clip_len, cfg.world.audio_dim, &mut rng);
    let reference = Tensor::<f64>::randn(64, cfg.world.motion_dim, &mut rng);

    let mut tape = Tape::<f64>::new();
    let motion_v = tape.input(motion.clone(), true);
    let mouth = basis.mouth_vertices_var(&mut tape, motion_v).unwrap();
    let feats = expert
        .style_features(&mut tape, &expert_store, Bind::Frozen, &reference)
        .unwrap();
    let av = tape.constant(audio);
    let e_a = expert
        .embed_audio(&mut tape, &expert_store, Bind::Frozen, av, 1, feats, false)
        .unwrap();
    let e_m = expert
        .embed_mouth(&mut tape, &expert_store, Bind::Frozen, mouth, 1, feats, false)
        .unwrap();
    let p = expert.sync_probability(&mut tape, e_m, e_a).unwrap();
    let p = tape.max_scalar(p, PROB_EPS);
    let lnp = tape.ln(p);
    let loss = tape.affine(lnp, -1.0, 0.0);
    let sink = tape.backward(loss).unwrap();
    // gradient reaches the motion input...
    let g = sink.get(motion_v).expect("motion gradient");
    assert!(g.data().iter().any(|v| *v != 0.0));
    // ...but no expert parameter picks one up
    let grads = tape.param_grads(&expert_store, &sink);
    assert!(grads.is_empty(), "frozen expert produced gradients: {:?}", grads.keys());
}
