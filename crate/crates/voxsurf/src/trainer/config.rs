//! Training configuration: a flat key = value text file with CLI overrides.

use nalgebra::{Point3, Vector3};

use crate::aabb::Aabb;
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::sampler::SamplingMode;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub iters: u64,
    pub batch_rays: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier for the sharpness parameter log_s; short
    /// schedules need sharper growth than the shared rate provides.
    pub lr_log_s_mult: f64,
    pub step_size: f64,
    pub max_hits: usize,
    pub boost: f64,
    pub tau: f64,
    /// Prune every this many iterations (0 = never).
    pub prune_period: u64,
    pub prune_samples: usize,
    /// Split at these iterations (ascending).
    pub split_at: Vec<u64>,
    /// Pruning runs before splitting when both land on one iteration.
    pub prune_before_split: bool,
    /// Iteration where full surface-aware sampling starts (u64::MAX = never).
    pub full_from: u64,
    /// Iteration where first surface-aware sampling starts.
    pub first_from: u64,
    pub lambda_color: f64,
    pub lambda_eik: f64,
    pub lambda_depth: f64,
    pub use_depth: bool,
    /// Near-band half width; 0 means "2 * step_size".
    pub depth_delta_t: f64,
    pub occ_scale: f64,
    /// Extra depth-loss points drawn per interval per supervised ray.
    pub depth_extra_points: usize,
    /// Swaps the free-space/behind-surface occupancy targets to the printed
    /// (sign-inconsistent) orientation.
    pub depth_loss_paper_literal: bool,
    /// Include render samples in the eikonal term (regularization points are
    /// always included).
    pub eik_on_samples: bool,
    pub reg_points_per_voxel: usize,
    pub init_s: f64,
    pub embedding_len: usize,
    pub feature_len: usize,
    pub hidden_dim: usize,
    pub geometry_layers: usize,
    pub appearance_layers: usize,
    pub freq_e: usize,
    pub freq_d: usize,
    pub voxel_size: f64,
    pub bounds: Aabb,
    /// Last N dataset views are held out of training for PSNR eval.
    pub holdout_views: usize,
    /// Held-out PSNR every this many iterations (0 = only at the end).
    pub eval_period: u64,
    /// Training-view PSNR measured around every prune (0 views disables).
    pub prune_psnr_views: usize,
    pub checkpoint_period: u64,
    pub log_period: u64,
    pub background: Vector3<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iters: 20_000,
            batch_rays: 2048,
            learning_rate: 1e-3,
            lr_log_s_mult: 1.0,
            step_size: 0.03,
            max_hits: 20,
            boost: 8.0,
            tau: 0.01,
            prune_period: 50_000,
            prune_samples: 512,
            split_at: vec![20_000, 50_000, 100_000, 200_000, 300_000],
            prune_before_split: true,
            full_from: 50_000,
            first_from: 200_000,
            lambda_color: 1.0,
            lambda_eik: 0.1,
            lambda_depth: 1.0,
            use_depth: false,
            depth_delta_t: 0.0,
            occ_scale: 20.0,
            depth_extra_points: 4,
            depth_loss_paper_literal: false,
            eik_on_samples: true,
            reg_points_per_voxel: 8,
            init_s: 1.0,
            embedding_len: 16,
            feature_len: 128,
            hidden_dim: 128,
            geometry_layers: 4,
            appearance_layers: 4,
            freq_e: 4,
            freq_d: 8,
            voxel_size: 0.8,
            bounds: Aabb::cube(Point3::origin(), 2.0),
            holdout_views: 0,
            eval_period: 0,
            prune_psnr_views: 0,
            checkpoint_period: 0,
            log_period: 50,
            background: Vector3::zeros(),
        }
    }
}

impl TrainConfig {
    pub fn field_config(&self) -> FieldConfig {
        FieldConfig {
            embedding_len: self.embedding_len,
            feature_len: self.feature_len,
            hidden_dim: self.hidden_dim,
            geometry_layers: self.geometry_layers,
            appearance_layers: self.appearance_layers,
            freq_e: self.freq_e,
            freq_d: self.freq_d,
        }
    }

    pub fn near_band(&self) -> f64 {
        if self.depth_delta_t > 0.0 {
            self.depth_delta_t
        } else {
            2.0 * self.step_size
        }
    }

    /// Sampling phase at an iteration: uniform, then full surface-aware,
    /// then first surface-aware.
    pub fn phase_at(&self, iter: u64) -> SamplingMode {
        if iter >= self.first_from {
            SamplingMode::SurfaceFirst
        } else if iter >= self.full_from {
            SamplingMode::SurfaceFull
        } else {
            SamplingMode::Uniform
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("step_size", self.step_size),
            ("tau", self.tau),
            ("boost", self.boost),
            ("occ_scale", self.occ_scale),
            ("voxel_size", self.voxel_size),
            ("init_s", self.init_s),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_rays == 0 || self.iters == 0 {
            return Err(Error::InvalidArgument("batch_rays and iters must be positive".into()));
        }
        if !self.split_at.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("split_at must be ascending".into()));
        }
        Ok(())
    }

    /// Parses a flat key = value config text. Unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key}")))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "iters" => self.iters = num(key, value)?,
            "batch_rays" => self.batch_rays = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "lr_log_s_mult" => self.lr_log_s_mult = num(key, value)?,
            "step_size" => self.step_size = num(key, value)?,
            "max_hits" => self.max_hits = num(key, value)?,
            "boost" => self.boost = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "prune_period" => self.prune_period = num(key, value)?,
            "prune_samples" => self.prune_samples = num(key, value)?,
            "split_at" => {
                self.split_at = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|t| num("split_at", t.trim()))
                        .collect::<Result<_>>()?
                };
            }
            "prune_before_split" => self.prune_before_split = num(key, value)?,
            "full_from" => self.full_from = num(key, value)?,
            "first_from" => self.first_from = num(key, value)?,
            "lambda_color" => self.lambda_color = num(key, value)?,
            "lambda_eik" => self.lambda_eik = num(key, value)?,
            "lambda_depth" => self.lambda_depth = num(key, value)?,
            "use_depth" => self.use_depth = num(key, value)?,
            "depth_delta_t" => self.depth_delta_t = num(key, value)?,
            "occ_scale" => self.occ_scale = num(key, value)?,
            "depth_extra_points" => self.depth_extra_points = num(key, value)?,
            "depth_loss_paper_literal" => self.depth_loss_paper_literal = num(key, value)?,
            "eik_on_samples" => self.eik_on_samples = num(key, value)?,
            "reg_points_per_voxel" => self.reg_points_per_voxel = num(key, value)?,
            "init_s" => self.init_s = num(key, value)?,
            "embedding_len" => self.embedding_len = num(key, value)?,
            "feature_len" => self.feature_len = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "geometry_layers" => self.geometry_layers = num(key, value)?,
            "appearance_layers" => self.appearance_layers = num(key, value)?,
            "freq_e" => self.freq_e = num(key, value)?,
            "freq_d" => self.freq_d = num(key, value)?,
            "voxel_size" => self.voxel_size = num(key, value)?,
            "bounds" => {
                let v: Vec<f64> = value
                    .split(',')
                    .map(|t| num("bounds", t.trim()))
                    .collect::<Result<_>>()?;
                if v.len() != 6 {
                    return Err(Error::InvalidArgument("bounds needs 6 numbers".into()));
                }
                self.bounds = Aabb::new(Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5]));
            }
            "holdout_views" => self.holdout_views = num(key, value)?,
            "eval_period" => self.eval_period = num(key, value)?,
            "prune_psnr_views" => self.prune_psnr_views = num(key, value)?,
            "checkpoint_period" => self.checkpoint_period = num(key, value)?,
            "log_period" => self.log_period = num(key, value)?,
            "background" => {
                let v: Vec<f64> = value
                    .split(',')
                    .map(|t| num("background", t.trim()))
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return Err(Error::InvalidArgument("background needs 3 numbers".into()));
                }
                self.background = Vector3::new(v[0], v[1], v[2]);
            }
            other => {
                return Err(Error::InvalidArgument(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }
}
