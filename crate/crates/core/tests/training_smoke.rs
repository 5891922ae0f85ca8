//! Short training runs: loss movement, reproducibility, freeze contracts
//! and the classifier-free dropout rate.

use stylediff_core::config::Config;
use stylediff_core::lip_expert::LipExpert;
use stylediff_core::synth::Dataset;
use stylediff_core::train::{train_denoiser, train_expert, train_predictor};

fn tiny_config() -> Config {
    let mut cfg = Config::default();
    cfg.world.clips_per_pair = 2;
    cfg.world.max_len = 96;
    cfg.train_expert.steps = 60;
    cfg.train_expert.batch = 8;
    cfg.train_denoiser.steps = 40;
    cfg.train_denoiser.batch = 4;
    cfg.train_denoiser.val_every = 20;
    cfg.train_denoiser.val_size = 8;
    cfg.train_predictor.steps = 40;
    cfg.train_predictor.batch = 4;
    cfg.validate().unwrap();
    cfg
}

#[test]
fn expert_loss_moves_below_chance_and_is_reproducible() {
    let mut cfg = tiny_config();
    cfg.train_expert.steps = 220;
    cfg.train_expert.log_every = 1;
    let dataset = Dataset::generate(cfg.world.clone()).unwrap();
    let (store1, log1) = train_expert(&dataset, &cfg).unwrap();
    let (store2, _) = train_expert(&dataset, &cfg).unwrap();
    assert!(store1.bit_identical(&store2), "expert training not reproducible");
    let losses = log1.values("expert");
    let window = 30;
    let early: f64 = losses[..window].iter().map(|(_, v)| v).sum::<f64>() / window as f64;
    let late: f64 =
        losses[losses.len() - window..].iter().map(|(_, v)| v).sum::<f64>() / window as f64;
    assert!(late < early, "expert loss did not decrease: {early} -> {late}");
    // and below the ln 2 chance level
    assert!(late < std::f64::consts::LN_2, "expert loss {late} not below chance");
}

#[test]
fn denoiser_training_freezes_expert_and_hits_dropout_rate() {
    let mut cfg = tiny_config();
    cfg.train_denoiser.steps = 30;
    let dataset = Dataset::generate(cfg.world.clone()).unwrap();
    let (expert_store, _) = train_expert(&dataset, &cfg).unwrap();
    let expert = LipExpert::new(cfg.expert.clone());
    let before = expert_store.clone();
    let art1 = train_denoiser(&dataset, Some((&expert, &expert_store)), &cfg).unwrap();
    assert!(
        expert_store.bit_identical(&before),
        "expert parameters changed during denoiser training"
    );
    let art2 = train_denoiser(&dataset, Some((&expert, &expert_store)), &cfg).unwrap();
    assert!(art1.store.bit_identical(&art2.store), "denoiser training not reproducible");

    // the dropout counter sees batch * steps samples
    assert_eq!(art1.dropout.total, cfg.train_denoiser.steps * cfg.train_denoiser.batch);

    // loss curves exist for both terms
    assert!(!art1.log.values("denoise").is_empty());
    assert!(!art1.log.values("sync").is_empty());
    assert!(!art1.log.values("val_denoise").is_empty());
}

#[test]
fn predictor_training_leaves_style_encoder_untouched() {
    let mut cfg = tiny_config();
    cfg.train_denoiser.steps = 10;
    cfg.train_denoiser.use_expert = false;
    let dataset = Dataset::generate(cfg.world.clone()).unwrap();
    let denoiser_art = train_denoiser(&dataset, None, &cfg).unwrap();
    let before = denoiser_art.store.clone();
    let (pred1, log) = train_predictor(&dataset, &denoiser_art.store, &cfg).unwrap();
    assert!(
        denoiser_art.store.bit_identical(&before),
        "denoiser (style encoder) changed during predictor training"
    );
    let (pred2, _) = train_predictor(&dataset, &denoiser_art.store, &cfg).unwrap();
    assert!(pred1.bit_identical(&pred2), "predictor training not reproducible");
    let losses = log.values("pred");
    assert!(losses.last().unwrap().1 < losses.first().unwrap().1);
}

/// Dropout empirically near 10% over many samples (3-sigma band).
#[test]
fn cfg_dropout_rate_within_tolerance() {
    let mut cfg = tiny_config();
    cfg.world.clips_per_pair = 2;
    cfg.train_denoiser.steps = 1250;
    cfg.train_denoiser.batch = 8;
    // keep the run cheap: no sync loss, minimal model
    cfg.train_denoiser.use_expert = false;
    cfg.denoiser.hidden = 16;
    cfg.denoiser.enc_layers = 1;
    cfg.denoiser.style_layers = 1;
    cfg.denoiser.dec_layers = 1;
    cfg.denoiser.heads = 2;
    let dataset = Dataset::generate(cfg.world.clone()).unwrap();
    let art = train_denoiser(&dataset, None, &cfg).unwrap();
    assert_eq!(art.dropout.total, 10_000);
    let rate = art.dropout.rate();
    // binomial 3 sigma at p=0.1, n=10000 is ~0.9%
    assert!((rate - 0.10).abs() < 0.01, "dropout rate {rate}");
}
