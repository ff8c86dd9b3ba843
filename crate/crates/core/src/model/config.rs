use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_STAGES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub attn_window: usize,
    pub depths: Vec<usize>,
    pub base_dim: usize,
    pub heads: Vec<usize>,
    pub mlp_ratio: usize,
    pub n_classes: usize,
    /// Side of the square input image.
    pub image_size: usize,
    /// Stochastic depth, ramped linearly from 0 over all blocks.
    pub drop_path_rate: f64,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::halved(7)
    }
}

impl ModelConfig {
    pub fn full(n_classes: usize) -> Self {
        Self {
            patch_size: 4,
            attn_window: 8,
            depths: vec![2, 2, 6, 2],
            base_dim: 96,
            heads: vec![3, 6, 12, 24],
            mlp_ratio: 4,
            n_classes,
            image_size: 256,
            drop_path_rate: 0.1,
            dropout: 0.0,
        }
    }

    pub fn halved(n_classes: usize) -> Self {
        Self {
            depths: vec![1, 1, 3, 1],
            ..Self::full(n_classes)
        }
    }

    /// Gradient-check scale: 32×32 input, width 8, one block per stage.
    pub fn tiny(n_classes: usize) -> Self {
        Self {
            depths: vec![1, 1, 1, 1],
            base_dim: 8,
            heads: vec![1, 2, 2, 4],
            image_size: 32,
            drop_path_rate: 0.0,
            ..Self::full(n_classes)
        }
    }

    pub fn dim(&self, stage: usize) -> usize {
        self.base_dim << stage
    }

    /// Token grid side of `stage`.
    pub fn grid_side(&self, stage: usize) -> usize {
        self.image_size / self.patch_size >> stage
    }

    /// Attention window of `stage`: the configured window, clamped to the grid.
    pub fn window(&self, stage: usize) -> usize {
        self.attn_window.min(self.grid_side(stage))
    }

    /// Whether odd blocks of `stage` use shifted windows.
    pub fn shifts(&self, stage: usize) -> bool {
        self.grid_side(stage) > self.window(stage)
    }

    pub fn total_blocks(&self) -> usize {
        self.depths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.depths.len() != N_STAGES || self.heads.len() != N_STAGES {
            return bad(format!("depths and heads need {N_STAGES} entries"));
        }
        if self.patch_size == 0 || self.attn_window == 0 || self.base_dim == 0 || self.mlp_ratio == 0 {
            return bad("patch_size, attn_window, base_dim and mlp_ratio must be positive".into());
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.image_size % self.patch_size != 0 {
            return bad(format!("patch {} does not divide image {}", self.patch_size, self.image_size));
        }
        let grid = self.image_size / self.patch_size;
        if grid == 0 || grid % (1 << (N_STAGES - 1)) != 0 {
            return bad(format!("token grid {grid} cannot be merged {} times", N_STAGES - 1));
        }
        for s in 0..N_STAGES {
            if self.grid_side(s) % self.window(s) != 0 {
                return bad(format!(
                    "window {} does not divide stage {s} grid {}",
                    self.window(s),
                    self.grid_side(s)
                ));
            }
            if self.heads[s] == 0 || self.dim(s) % self.heads[s] != 0 {
                return bad(format!("{} heads do not divide stage {s} width {}", self.heads[s], self.dim(s)));
            }
        }
        for (name, p) in [("drop_path_rate", self.drop_path_rate), ("dropout", self.dropout)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1), got {p}"));
            }
        }
        Ok(())
    }

    /// Fails with the first architecture field that differs. Drop rates are
    /// training-only and ignored.
    pub fn check_compatible(&self, checkpoint: &ModelConfig) -> Result<()> {
        let fields: [(&str, String, String); 8] = [
            ("patch_size", checkpoint.patch_size.to_string(), self.patch_size.to_string()),
            ("attn_window", checkpoint.attn_window.to_string(), self.attn_window.to_string()),
            ("depths", format!("{:?}", checkpoint.depths), format!("{:?}", self.depths)),
            ("base_dim", checkpoint.base_dim.to_string(), self.base_dim.to_string()),
            ("heads", format!("{:?}", checkpoint.heads), format!("{:?}", self.heads)),
            ("mlp_ratio", checkpoint.mlp_ratio.to_string(), self.mlp_ratio.to_string()),
            ("n_classes", checkpoint.n_classes.to_string(), self.n_classes.to_string()),
            ("image_size", checkpoint.image_size.to_string(), self.image_size.to_string()),
        ];
        match fields.into_iter().find(|(_, a, b)| a != b) {
            Some((field, checkpoint, config)) => Err(Error::Incompatible {
                field: field.into(),
                checkpoint,
                config,
            }),
            None => Ok(()),
        }
    }
}
