//! Training configuration, presets and the `key = value` config file
//! format. CLI flags override file values; the file overrides preset
//! values; presets override the built-in defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Staging {
    /// Controller and generator trained jointly in one objective.
    Joint,
    /// Controller first, then the generator with the controller frozen.
    TwoPhase,
}

impl Staging {
    pub fn parse(value: &str) -> Option<Self> {
        match value {
            "joint" => Some(Staging::Joint),
            "two-phase" | "two_phase" => Some(Staging::TwoPhase),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Staging::Joint => "joint",
            Staging::TwoPhase => "two-phase",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub max_len: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub d_p: usize,
    pub d_e: usize,
    pub grid: usize,
    pub feat_dim: usize,
    pub frames: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub decay_rate: f64,
    pub decay_steps: u64,
    pub epochs: usize,
    pub seed: u64,
    pub lambda_pos: f64,
    pub gamma_null: f64,
    pub gamma_other: f64,
    pub w_ctrl: f64,
    pub staging: Staging,
    pub meteor_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            max_len: 20,
            d_h: 64,
            d_z: 16,
            d_p: 32,
            d_e: 32,
            grid: 4,
            feat_dim: 16,
            frames: 8,
            batch_size: 16,
            base_lr: 1e-3,
            decay_rate: 0.96,
            decay_steps: 500,
            epochs: 20,
            seed: 0,
            lambda_pos: 0.3,
            gamma_null: 4.0,
            gamma_other: 50.0,
            w_ctrl: 1.0,
            staging: Staging::Joint,
            meteor_threshold: 0.5,
        }
    }
}

pub const PRESETS: [&str; 3] = ["desk", "paper-bddx", "paper-sax"];

impl TrainConfig {
    /// Learning-rate/batch presets. Paper presets carry the published
    /// values; `desk` targets minutes-scale synthetic runs.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        match name {
            "desk" => {
                self.base_lr = 1e-3;
                self.batch_size = 16;
                self.decay_steps = 500;
            }
            "paper-bddx" => {
                self.base_lr = 1e-5;
                self.batch_size = 32;
                self.decay_steps = 11_600;
            }
            "paper-sax" => {
                self.base_lr = 6e-7;
                self.batch_size = 16;
                self.decay_steps = 3_500;
            }
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}`, expected one of {PRESETS:?}"),
                ))
            }
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
        }
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "max_len" => self.max_len = parse(key, value)?,
            "d_h" => self.d_h = parse(key, value)?,
            "d_z" => self.d_z = parse(key, value)?,
            "d_p" => self.d_p = parse(key, value)?,
            "d_e" => self.d_e = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "feat_dim" => self.feat_dim = parse(key, value)?,
            "frames" => self.frames = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "decay_rate" => self.decay_rate = parse(key, value)?,
            "decay_steps" => self.decay_steps = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lambda_pos" => {
                let v: f64 = parse(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(key, "lambda_pos must lie in [0, 1]"));
                }
                self.lambda_pos = v;
            }
            "gamma_null" => {
                let v: f64 = parse(key, value)?;
                if v < 0.0 {
                    return Err(Error::config(key, "gamma_null must be nonnegative"));
                }
                self.gamma_null = v;
            }
            "gamma_other" => {
                let v: f64 = parse(key, value)?;
                if v < 0.0 {
                    return Err(Error::config(key, "gamma_other must be nonnegative"));
                }
                self.gamma_other = v;
            }
            "w_ctrl" => self.w_ctrl = parse(key, value)?,
            "staging" => {
                self.staging = Staging::parse(value)
                    .ok_or_else(|| Error::config(key, "expected `joint` or `two-phase`"))?;
            }
            "meteor_threshold" => self.meteor_threshold = parse(key, value)?,
            "preset" => self.apply_preset(value)?,
            other => return Err(Error::config(other, "unknown config key")),
        }
        Ok(())
    }

    /// Reads a UTF-8 `key = value` file. A `preset` line is applied before
    /// the other keys regardless of position, so explicit keys always win.
    pub fn load_file(&mut self, path: &Path) -> Result<BTreeSet<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("{}:{}", path.display(), lineno + 1),
                    "expected `key = value`",
                )
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut seen = BTreeSet::new();
        for (key, value) in pairs.iter().filter(|(k, _)| k == "preset") {
            self.apply(key, value)?;
            seen.insert(key.clone());
        }
        for (key, value) in pairs.iter().filter(|(k, _)| k != "preset") {
            self.apply(key, value)?;
            seen.insert(key.clone());
        }
        Ok(seen)
    }

    /// Adopts the data-shaped dimensions of a dataset manifest (frames,
    /// grid, feat_dim, max_len, and d_z = feat_dim).
    pub fn adopt_manifest(&mut self, manifest: &crate::synth::SynthConfig) {
        self.frames = manifest.frames;
        self.grid = manifest.grid;
        self.feat_dim = manifest.feat_dim;
        self.max_len = manifest.max_len;
        self.d_z = manifest.feat_dim;
    }

    /// Applies newline-separated `key = value` assignments.
    pub fn apply_lines(&mut self, lines: &str) -> Result<()> {
        for line in lines.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, "expected `key = value`"))?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Round-trippable `key = value` rendering, used as the config echo in
    /// reports.
    pub fn render(&self) -> String {
        format!(
            "dataset = {}\nmax_len = {}\nd_h = {}\nd_z = {}\nd_p = {}\nd_e = {}\n\
             grid = {}\nfeat_dim = {}\nframes = {}\nbatch_size = {}\nbase_lr = {}\n\
             decay_rate = {}\ndecay_steps = {}\nepochs = {}\nseed = {}\nlambda_pos = {}\n\
             gamma_null = {}\ngamma_other = {}\nw_ctrl = {}\nstaging = {}\nmeteor_threshold = {}\n",
            self.dataset.display(),
            self.max_len,
            self.d_h,
            self.d_z,
            self.d_p,
            self.d_e,
            self.grid,
            self.feat_dim,
            self.frames,
            self.batch_size,
            self.base_lr,
            self.decay_rate,
            self.decay_steps,
            self.epochs,
            self.seed,
            self.lambda_pos,
            self.gamma_null,
            self.gamma_other,
            self.w_ctrl,
            self.staging.name(),
            self.meteor_threshold,
        )
    }

    /// Human-readable label of the loss-weight combination, matching the
    /// ablation row names where applicable.
    pub fn variant_label(&self) -> String {
        match (
            self.lambda_pos > 0.0,
            self.gamma_null > 0.0 || self.gamma_other > 0.0,
        ) {
            (false, false) => "Standard Model".to_string(),
            (true, false) => "Standard + PoS Prediction".to_string(),
            (false, true) => "Standard + Token Penalties".to_string(),
            (true, true) => "Standard + PoS Prediction + Token Penalties".to_string(),
        }
    }
}
