//! Model, world and training configuration.
//!
//! The desk-scale defaults train on CPU in minutes. `paper()` presets carry
//! the full-scale constants (hidden 256, 8 heads, T = 1000, ...) and are
//! used for shape checks; training at that scale is out of budget here.
//!
//! Config files are line-based `key = value` pairs; `#` starts a comment.
//! CLI overrides are applied after the file and win.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub seed: u64,
    pub speakers: usize,
    pub styles: usize,
    pub clips_per_pair: usize,
    pub audio_dim: usize,
    pub motion_dim: usize,
    /// Leading motion dims that carry lip content (style-invariant).
    pub mouth_dims: usize,
    pub identity_dim: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub window: usize,
    /// Speakers `0..train_speakers` form the training split.
    pub train_speakers: usize,
    pub version: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 7,
            speakers: 8,
            styles: 8,
            clips_per_pair: 6,
            audio_dim: 32,
            motion_dim: 64,
            mouth_dims: 8,
            identity_dim: 16,
            min_len: 64,
            max_len: 256,
            window: 5,
            train_speakers: 6,
            version: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenoiserConfig {
    pub motion_dim: usize,
    pub audio_dim: usize,
    /// Half-window w; the audio window holds 2w+1 frames.
    pub window: usize,
    pub hidden: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub style_layers: usize,
    pub dec_layers: usize,
    pub mlp_ratio: usize,
    pub timesteps: usize,
    /// Length of the all-zeros reference used for the unconditional branch.
    pub null_ref_len: usize,
}

impl DenoiserConfig {
    pub fn desk() -> Self {
        DenoiserConfig {
            motion_dim: 64,
            audio_dim: 32,
            window: 5,
            hidden: 48,
            heads: 4,
            enc_layers: 2,
            style_layers: 2,
            dec_layers: 2,
            mlp_ratio: 4,
            timesteps: 100,
            null_ref_len: 64,
        }
    }

    /// Full-scale constants: 11 x 1024 audio windows projected to 256,
    /// three 8-head layers in every stack, T = 1000.
    pub fn paper() -> Self {
        DenoiserConfig {
            motion_dim: 64,
            audio_dim: 1024,
            window: 5,
            hidden: 256,
            heads: 8,
            enc_layers: 3,
            style_layers: 3,
            dec_layers: 3,
            mlp_ratio: 4,
            timesteps: 1000,
            null_ref_len: 64,
        }
    }

    pub fn window_len(&self) -> usize {
        2 * self.window + 1
    }

    /// Style codes share the model width.
    pub fn code_dim(&self) -> usize {
        self.hidden
    }
}

#[derive(Clone, Debug)]
pub struct ExpertConfig {
    pub audio_dim: usize,
    pub motion_dim: usize,
    /// Flattened mouth-vertex coordinate count fed to the mouth embedder.
    pub mouth_dim: usize,
    /// Clip length n.
    pub clip_len: usize,
    pub embed_dim: usize,
    pub conv_channels: [usize; 3],
    pub mlp_hidden: usize,
    pub style_hidden: usize,
    pub style_layers: usize,
    pub style_heads: usize,
    /// Zero the style features (the unconditional-expert ablation).
    pub unconditional: bool,
}

impl ExpertConfig {
    pub fn desk() -> Self {
        ExpertConfig {
            audio_dim: 32,
            motion_dim: 64,
            mouth_dim: 12,
            clip_len: 5,
            embed_dim: 128,
            conv_channels: [32, 64, 128],
            mlp_hidden: 128,
            style_hidden: 32,
            style_layers: 1,
            style_heads: 4,
            unconditional: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PredictorConfig {
    pub audio_dim: usize,
    pub identity_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_ratio: usize,
    pub code_dim: usize,
    pub timesteps: usize,
    /// One-shot regression instead of diffusion (ablation).
    pub regression: bool,
}

impl PredictorConfig {
    pub fn desk() -> Self {
        PredictorConfig {
            audio_dim: 32,
            identity_dim: 16,
            hidden: 48,
            heads: 4,
            layers: 2,
            mlp_ratio: 4,
            code_dim: 48,
            timesteps: 100,
            regression: false,
        }
    }

    /// Six 8-head layers at hidden 256, every input projected to 256.
    pub fn paper() -> Self {
        PredictorConfig {
            audio_dim: 32,
            identity_dim: 16,
            hidden: 256,
            heads: 8,
            layers: 6,
            mlp_ratio: 4,
            code_dim: 256,
            timesteps: 1000,
            regression: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExpertTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Style reference window length sampled for conditioning.
    pub ref_len: usize,
    pub grad_clip: f64,
    pub log_every: usize,
}

impl Default for ExpertTrainConfig {
    fn default() -> Self {
        ExpertTrainConfig {
            steps: 2000,
            batch: 32,
            lr: 1e-3,
            seed: 101,
            ref_len: 64,
            grad_clip: 1.0,
            log_every: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenoiserTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub lambda_denoise: f64,
    pub lambda_sync: f64,
    /// Probability of replacing the style reference with the null reference.
    pub cfg_dropout: f64,
    pub ref_len: usize,
    pub grad_clip: f64,
    /// Disable the sync loss entirely (the no-lip-expert ablation).
    pub use_expert: bool,
    /// Number of generation steps used inside the sync-loss surrogate
    /// (1 = single-step signal prediction).
    pub sync_gen_steps: usize,
    pub val_every: usize,
    pub val_size: usize,
    pub log_every: usize,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        DenoiserTrainConfig {
            steps: 2600,
            batch: 8,
            lr: 1e-3,
            seed: 202,
            lambda_denoise: 1.0,
            lambda_sync: 1.0,
            cfg_dropout: 0.10,
            ref_len: 64,
            grad_clip: 1.0,
            use_expert: true,
            sync_gen_steps: 1,
            val_every: 200,
            val_size: 48,
            log_every: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PredictorTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Audio sub-window length sampled for training.
    pub audio_len: usize,
    pub cross_id: bool,
    pub use_speaker: bool,
    pub grad_clip: f64,
    pub log_every: usize,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            steps: 1500,
            batch: 12,
            lr: 1e-3,
            seed: 303,
            audio_len: 96,
            cross_id: true,
            use_speaker: true,
            grad_clip: 1.0,
            log_every: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Config {
    pub world: WorldConfig,
    pub denoiser: DenoiserConfig,
    pub expert: ExpertConfig,
    pub predictor: PredictorConfig,
    pub train_expert: ExpertTrainConfig,
    pub train_denoiser: DenoiserTrainConfig,
    pub train_predictor: PredictorTrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            world: WorldConfig::default(),
            denoiser: DenoiserConfig::desk(),
            expert: ExpertConfig::desk(),
            predictor: PredictorConfig::desk(),
            train_expert: ExpertTrainConfig::default(),
            train_denoiser: DenoiserTrainConfig::default(),
            train_predictor: PredictorTrainConfig::default(),
        }
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected 'key = value'", path.display(), lineno + 1))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        self.validate()
    }

    /// Keep derived dimensions coherent after overrides.
    pub fn validate(&mut self) -> Result<()> {
        self.denoiser.audio_dim = self.world.audio_dim;
        self.denoiser.motion_dim = self.world.motion_dim;
        self.denoiser.window = self.world.window;
        self.expert.audio_dim = self.world.audio_dim;
        self.expert.motion_dim = self.world.motion_dim;
        self.predictor.audio_dim = self.world.audio_dim;
        self.predictor.identity_dim = self.world.identity_dim;
        self.predictor.code_dim = self.denoiser.code_dim();
        if self.denoiser.hidden % self.denoiser.heads != 0 {
            return Err(Error::Config(format!(
                "denoiser.hidden {} not divisible by heads {}",
                self.denoiser.hidden, self.denoiser.heads
            )));
        }
        if self.predictor.hidden % self.predictor.heads != 0 {
            return Err(Error::Config(format!(
                "predictor.hidden {} not divisible by heads {}",
                self.predictor.hidden, self.predictor.heads
            )));
        }
        if self.world.train_speakers == 0 || self.world.train_speakers >= self.world.speakers {
            return Err(Error::Config(
                "train_speakers must leave at least one held-out speaker".into(),
            ));
        }
        if self.world.min_len < 2 * self.world.window + 1 {
            return Err(Error::Config("clip min_len shorter than one audio window".into()));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
        }
        match key {
            "world.seed" => self.world.seed = parse(key, value)?,
            "world.speakers" => self.world.speakers = parse(key, value)?,
            "world.styles" => self.world.styles = parse(key, value)?,
            "world.clips_per_pair" => self.world.clips_per_pair = parse(key, value)?,
            "world.audio_dim" => self.world.audio_dim = parse(key, value)?,
            "world.motion_dim" => self.world.motion_dim = parse(key, value)?,
            "world.mouth_dims" => self.world.mouth_dims = parse(key, value)?,
            "world.identity_dim" => self.world.identity_dim = parse(key, value)?,
            "world.min_len" => self.world.min_len = parse(key, value)?,
            "world.max_len" => self.world.max_len = parse(key, value)?,
            "world.window" => self.world.window = parse(key, value)?,
            "world.train_speakers" => self.world.train_speakers = parse(key, value)?,
            "denoiser.hidden" => self.denoiser.hidden = parse(key, value)?,
            "denoiser.heads" => self.denoiser.heads = parse(key, value)?,
            "denoiser.enc_layers" => self.denoiser.enc_layers = parse(key, value)?,
            "denoiser.style_layers" => self.denoiser.style_layers = parse(key, value)?,
            "denoiser.dec_layers" => self.denoiser.dec_layers = parse(key, value)?,
            "denoiser.mlp_ratio" => self.denoiser.mlp_ratio = parse(key, value)?,
            "denoiser.timesteps" => self.denoiser.timesteps = parse(key, value)?,
            "denoiser.null_ref_len" => self.denoiser.null_ref_len = parse(key, value)?,
            "expert.embed_dim" => self.expert.embed_dim = parse(key, value)?,
            "expert.mlp_hidden" => self.expert.mlp_hidden = parse(key, value)?,
            "expert.style_hidden" => self.expert.style_hidden = parse(key, value)?,
            "expert.style_layers" => self.expert.style_layers = parse(key, value)?,
            "expert.style_heads" => self.expert.style_heads = parse(key, value)?,
            "expert.clip_len" => self.expert.clip_len = parse(key, value)?,
            "expert.unconditional" => self.expert.unconditional = parse(key, value)?,
            "predictor.hidden" => self.predictor.hidden = parse(key, value)?,
            "predictor.heads" => self.predictor.heads = parse(key, value)?,
            "predictor.layers" => self.predictor.layers = parse(key, value)?,
            "predictor.mlp_ratio" => self.predictor.mlp_ratio = parse(key, value)?,
            "predictor.timesteps" => self.predictor.timesteps = parse(key, value)?,
            "predictor.regression" => self.predictor.regression = parse(key, value)?,
            "train.expert.steps" => self.train_expert.steps = parse(key, value)?,
            "train.expert.batch" => self.train_expert.batch = parse(key, value)?,
            "train.expert.lr" => self.train_expert.lr = parse(key, value)?,
            "train.expert.seed" => self.train_expert.seed = parse(key, value)?,
            "train.expert.ref_len" => self.train_expert.ref_len = parse(key, value)?,
            "train.denoiser.steps" => self.train_denoiser.steps = parse(key, value)?,
            "train.denoiser.batch" => self.train_denoiser.batch = parse(key, value)?,
            "train.denoiser.lr" => self.train_denoiser.lr = parse(key, value)?,
            "train.denoiser.seed" => self.train_denoiser.seed = parse(key, value)?,
            "train.denoiser.lambda_denoise" => self.train_denoiser.lambda_denoise = parse(key, value)?,
            "train.denoiser.lambda_sync" => self.train_denoiser.lambda_sync = parse(key, value)?,
            "train.denoiser.cfg_dropout" => self.train_denoiser.cfg_dropout = parse(key, value)?,
            "train.denoiser.ref_len" => self.train_denoiser.ref_len = parse(key, value)?,
            "train.denoiser.grad_clip" => self.train_denoiser.grad_clip = parse(key, value)?,
            "train.denoiser.use_expert" => self.train_denoiser.use_expert = parse(key, value)?,
            "train.denoiser.sync_gen_steps" => self.train_denoiser.sync_gen_steps = parse(key, value)?,
            "train.predictor.steps" => self.train_predictor.steps = parse(key, value)?,
            "train.predictor.batch" => self.train_predictor.batch = parse(key, value)?,
            "train.predictor.lr" => self.train_predictor.lr = parse(key, value)?,
            "train.predictor.seed" => self.train_predictor.seed = parse(key, value)?,
            "train.predictor.audio_len" => self.train_predictor.audio_len = parse(key, value)?,
            "train.predictor.cross_id" => self.train_predictor.cross_id = parse(key, value)?,
            "train.predictor.use_speaker" => self.train_predictor.use_speaker = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parse_file_with_comments_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment line").unwrap();
        writeln!(f, "world.seed = 99   # trailing comment").unwrap();
        writeln!(f, "denoiser.hidden = 64").unwrap();
        writeln!(f).unwrap();
        drop(f);
        let cfg = Config::from_file(&path).unwrap();
        assert_eq!(cfg.world.seed, 99);
        assert_eq!(cfg.denoiser.hidden, 64);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = Config::default();
        assert!(cfg.apply_kv("no.such.key", "1").is_err());
    }

    #[test]
    fn validate_propagates_world_dims() {
        let mut cfg = Config::default();
        cfg.world.audio_dim = 24;
        cfg.validate().unwrap();
        assert_eq!(cfg.denoiser.audio_dim, 24);
        assert_eq!(cfg.expert.audio_dim, 24);
        assert_eq!(cfg.predictor.audio_dim, 24);
        assert_eq!(cfg.predictor.code_dim, cfg.denoiser.hidden);
    }

    #[test]
    fn paper_scale_constants() {
        let d = DenoiserConfig::paper();
        assert_eq!(d.hidden, 256);
        assert_eq!(d.heads, 8);
        assert_eq!(d.enc_layers, 3);
        assert_eq!(d.timesteps, 1000);
        assert_eq!(d.window_len(), 11);
        let p = PredictorConfig::paper();
        assert_eq!(p.layers, 6);
        assert_eq!(p.hidden, 256);
    }
}
