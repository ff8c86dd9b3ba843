use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, N_STAGES};
use crate::error::{Error, Result};
use crate::fusion::MelImage;
use crate::grad::{ParamId, ParamStore, Tape, Var, PAD_ROW};
use crate::tensor::Tensor;

const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    TruncNormal,
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    weight: ParamId,
    bias: Option<ParamId>,
}

#[derive(Clone, Debug)]
struct BlockParams {
    norm1: Norm,
    qkv: Dense,
    rel_bias: ParamId,
    proj: Dense,
    norm2: Norm,
    fc1: Dense,
    fc2: Dense,
    drop_path: f64,
}

#[derive(Clone, Debug)]
struct MergeParams {
    norm: Norm,
    reduction: Dense,
}

/// Gather plans for windowed attention at one stage and shift.
#[derive(Debug)]
struct WindowPlan {
    /// Token rows in window order (after the cyclic shift).
    to_windows: Arc<[u32]>,
    /// Per-head rows of the attention output back in token order.
    from_windows: Arc<[u32]>,
    q: Arc<[u32]>,
    k: Arc<[u32]>,
    v: Arc<[u32]>,
    /// Additive `[windows, n, n]` mask, present only for shifted windows.
    mask: Option<Vec<f64>>,
}

#[derive(Debug)]
struct StagePlan {
    side: usize,
    dim: usize,
    heads: usize,
    window: usize,
    n_windows: usize,
    rel_index: Arc<[u32]>,
    plain: WindowPlan,
    shifted: Option<WindowPlan>,
    merge: Option<Arc<[u32]>>,
}

/// Result of one recorded forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    /// `(tokens, dim)` after the embedding and after each patch merge.
    pub trace: Vec<(usize, usize)>,
}

/// Attention branch output plus the attention probabilities
/// `[windows·heads, n, n]`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub out: Var,
    pub probs: Var,
}

/// Hierarchical windowed-attention classifier over mel images.
#[derive(Debug)]
pub struct HtsatModel {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    patch_embed: Dense,
    patch_norm: Norm,
    stages: Vec<Vec<BlockParams>>,
    merges: Vec<MergeParams>,
    final_norm: Norm,
    head: Dense,
    embed_plan: Arc<[u32]>,
    stage_plans: Vec<StagePlan>,
    head_plan: Arc<[u32]>,
}

struct Layout {
    specs: Vec<ParamSpec>,
}

impl Layout {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> ParamId {
        self.specs.push(ParamSpec { name, shape, init });
        ParamId(self.specs.len() - 1)
    }

    fn norm(&mut self, prefix: &str, dim: usize) -> Norm {
        Norm {
            gamma: self.add(format!("{prefix}.gamma"), vec![dim], Init::Ones),
            beta: self.add(format!("{prefix}.beta"), vec![dim], Init::Zeros),
        }
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize, bias: bool) -> Dense {
        Dense {
            weight: self.add(format!("{prefix}.weight"), vec![fan_in, fan_out], Init::TruncNormal),
            bias: bias.then(|| self.add(format!("{prefix}.bias"), vec![fan_out], Init::Zeros)),
        }
    }
}

impl HtsatModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut l = Layout { specs: Vec::new() };
        let p = config.patch_size;
        let d0 = config.base_dim;
        let patch_embed = l.dense("patch_embed", p * p, d0, true);
        let patch_norm = l.norm("patch_norm", d0);

        let total = config.total_blocks();
        let mut block_index = 0;
        let mut stages = Vec::with_capacity(N_STAGES);
        let mut merges = Vec::new();
        for s in 0..N_STAGES {
            let (dim, heads, w) = (config.dim(s), config.heads[s], config.window(s));
            let hidden = dim * config.mlp_ratio;
            let mut blocks = Vec::with_capacity(config.depths[s]);
            for b in 0..config.depths[s] {
                let pre = format!("layers.{s}.blocks.{b}");
                let drop_path = if total > 1 {
                    config.drop_path_rate * block_index as f64 / (total - 1) as f64
                } else {
                    0.0
                };
                block_index += 1;
                blocks.push(BlockParams {
                    norm1: l.norm(&format!("{pre}.norm1"), dim),
                    qkv: l.dense(&format!("{pre}.attn.qkv"), dim, 3 * dim, true),
                    rel_bias: l.add(
                        format!("{pre}.attn.relative_position_bias_table"),
                        vec![(2 * w - 1) * (2 * w - 1), heads],
                        Init::Zeros,
                    ),
                    proj: l.dense(&format!("{pre}.attn.proj"), dim, dim, true),
                    norm2: l.norm(&format!("{pre}.norm2"), dim),
                    fc1: l.dense(&format!("{pre}.mlp.fc1"), dim, hidden, true),
                    fc2: l.dense(&format!("{pre}.mlp.fc2"), hidden, dim, true),
                    drop_path,
                });
            }
            stages.push(blocks);
            if s + 1 < N_STAGES {
                let pre = format!("layers.{s}.downsample");
                merges.push(MergeParams {
                    norm: l.norm(&format!("{pre}.norm"), 4 * dim),
                    reduction: l.dense(&format!("{pre}.reduction"), 4 * dim, 2 * dim, false),
                });
            }
        }
        let d_last = config.dim(N_STAGES - 1);
        let final_norm = l.norm("norm", d_last);
        let head = l.dense("tscam_conv", 9 * d_last, config.n_classes, true);

        let stage_plans = (0..N_STAGES).map(|s| stage_plan(&config, s)).collect();
        Ok(Self {
            embed_plan: embed_plan(config.image_size, p),
            head_plan: conv3x3_plan(config.grid_side(N_STAGES - 1)),
            stage_plans,
            config,
            specs: l.specs,
            patch_embed,
            patch_norm,
            stages,
            merges,
            final_norm,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Number of scalar parameters.
    pub fn num_parameters(&self) -> usize {
        self.specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    /// Parameter names and shapes in store order.
    pub fn param_shapes(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.specs.iter().map(|s| (s.name.as_str(), s.shape.as_slice()))
    }

    /// Fresh parameters: truncated normal (σ = 0.02, cut at ±2σ) weights,
    /// zero biases and position tables, unit norm gains.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut store = ParamStore::new();
        for spec in &self.specs {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::TruncNormal => (0..n)
                    .map(|_| loop {
                        let v = normal.sample(&mut rng);
                        if v.abs() <= 2.0 * INIT_STD {
                            break v;
                        }
                    })
                    .collect(),
            };
            let t = Tensor::new(spec.shape.clone(), data).expect("spec shape");
            store.add(spec.name.clone(), t).expect("unique names");
        }
        store
    }

    /// Checks that `params` has exactly this model's names and shapes.
    pub fn check_params(&self, params: &ParamStore) -> Result<()> {
        if params.len() != self.specs.len() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} parameter tensors, store has {}",
                self.specs.len(),
                params.len()
            )));
        }
        for (spec, p) in self.specs.iter().zip(params.iter()) {
            if spec.name != p.name || spec.shape != p.value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    p.name,
                    p.value.shape(),
                    spec.name,
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    /// Records a forward pass. With `rng` set, dropout and stochastic
    /// depth are active.
    pub fn forward(
        &self,
        tape: &mut Tape,
        images: &[MelImage],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardOutput> {
        let mut x = self.embed_channels(tape, images)?;
        x = self.norm(tape, x, self.patch_norm)?;
        x = self.dropout(tape, x, rng.as_deref_mut())?;
        let mut trace = vec![self.grid_shape(0)];
        for s in 0..N_STAGES {
            for b in 0..self.stages[s].len() {
                x = self.swin_block(tape, x, s, b, rng.as_deref_mut())?;
            }
            if s + 1 < N_STAGES {
                x = self.patch_merging(tape, x, s)?;
                trace.push(self.grid_shape(s + 1));
            }
        }
        let logits = self.token_semantic_head(tape, x)?;
        Ok(ForwardOutput { logits, trace })
    }

    /// Inference-mode logits.
    pub fn predict(&self, params: &ParamStore, images: &[MelImage]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(params);
        let out = self.forward(&mut tape, images, None)?;
        Ok(tape.value(out.logits).data().to_vec())
    }

    fn grid_shape(&self, stage: usize) -> (usize, usize) {
        let side = self.config.grid_side(stage);
        (side * side, self.config.dim(stage))
    }

    /// Shared patch embedding summed over all channel images.
    pub fn embed_channels(&self, tape: &mut Tape, images: &[MelImage]) -> Result<Var> {
        let (first, rest) = images.split_first().ok_or_else(|| Error::Empty("no input images".into()))?;
        let mut x = self.patch_embed(tape, first)?;
        for img in rest {
            let e = self.patch_embed(tape, img)?;
            x = tape.add(x, e)?;
        }
        Ok(x)
    }

    /// Non-overlapping `p×p` patches projected to `base_dim`: `[tokens, dim]`.
    pub fn patch_embed(&self, tape: &mut Tape, image: &MelImage) -> Result<Var> {
        let side = self.config.image_size;
        if image.side() != side {
            return Err(Error::ShapeMismatch(format!("image side {} for a {side} model", image.side())));
        }
        let p = self.config.patch_size;
        let tokens = (side / p) * (side / p);
        let pixels = tape.input(Tensor::new(vec![side * side, 1], image.values().to_vec())?);
        let cols = tape.gather_rows(pixels, self.embed_plan.clone(), 1, vec![tokens, p * p])?;
        self.dense(tape, cols, self.patch_embed)
    }

    /// Multi-head self-attention inside each window of the normalized
    /// tokens `x`; returns the projected branch output in token order.
    pub fn window_attention(&self, tape: &mut Tape, x: Var, stage: usize, block: usize, shifted: bool) -> Result<AttentionOutput> {
        let plan = &self.stage_plans[stage];
        let bp = &self.stages[stage][block];
        let wp = match (shifted, &plan.shifted) {
            (false, _) => &plan.plain,
            (true, Some(wp)) => wp,
            (true, None) => return Err(Error::InvalidArgument(format!("stage {stage} has no shifted windows"))),
        };
        let (c, h, nw) = (plan.dim, plan.heads, plan.n_windows);
        let n = plan.window * plan.window;
        let hd = c / h;
        let tokens = plan.side * plan.side;

        let xw = tape.gather_rows(x, wp.to_windows.clone(), c, vec![tokens, c])?;
        let qkv = self.dense(tape, xw, bp.qkv)?;
        let q = tape.gather_rows(qkv, wp.q.clone(), hd, vec![nw * h, n, hd])?;
        let k = tape.gather_rows(qkv, wp.k.clone(), hd, vec![nw * h, n, hd])?;
        let v = tape.gather_rows(qkv, wp.v.clone(), hd, vec![nw * h, n, hd])?;
        let q = tape.scale(q, 1.0 / (hd as f64).sqrt())?;
        let scores = tape.bmm(q, k, true)?;
        let table = tape.param(bp.rel_bias);
        let bias = tape.gather_rows(table, plan.rel_index.clone(), 1, vec![h, n, n])?;
        let probs = tape.window_softmax(scores, Some(bias), wp.mask.as_deref(), nw, h)?;
        let ctx = tape.bmm(probs, v, false)?;
        let merged = tape.gather_rows(ctx, wp.from_windows.clone(), hd, vec![tokens, c])?;
        let out = self.dense(tape, merged, bp.proj)?;
        Ok(AttentionOutput { out, probs })
    }

    /// Pre-norm attention and MLP sub-blocks with residuals. Odd blocks use
    /// shifted windows where the grid is larger than the window.
    pub fn swin_block(&self, tape: &mut Tape, x: Var, stage: usize, block: usize, mut rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let bp = &self.stages[stage][block];
        let shifted = block % 2 == 1 && self.stage_plans[stage].shifted.is_some();

        let h = self.norm(tape, x, bp.norm1)?;
        let a = self.window_attention(tape, h, stage, block, shifted)?.out;
        let a = self.dropout(tape, a, rng.as_deref_mut())?;
        let a = self.drop_path(tape, a, bp.drop_path, rng.as_deref_mut())?;
        let x = tape.add(x, a)?;

        let h = self.norm(tape, x, bp.norm2)?;
        let h = self.dense(tape, h, bp.fc1)?;
        let h = tape.gelu(h)?;
        let h = self.dense(tape, h, bp.fc2)?;
        let h = self.dropout(tape, h, rng.as_deref_mut())?;
        let h = self.drop_path(tape, h, bp.drop_path, rng)?;
        tape.add(x, h)
    }

    /// Concatenates each 2×2 neighbourhood (4·dim), normalizes and projects
    /// to 2·dim.
    pub fn patch_merging(&self, tape: &mut Tape, x: Var, stage: usize) -> Result<Var> {
        let plan = &self.stage_plans[stage];
        let rows = plan
            .merge
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("stage {stage} is not followed by a merge")))?;
        let mp = &self.merges[stage];
        let half = plan.side / 2;
        let cat = tape.gather_rows(x, rows, plan.dim, vec![half * half, 4 * plan.dim])?;
        let cat = self.norm(tape, cat, mp.norm)?;
        self.dense(tape, cat, mp.reduction)
    }

    /// Final norm, 3×3 same-padded convolution to class maps, then global
    /// average pooling.
    pub fn token_semantic_head(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let last = N_STAGES - 1;
        let side = self.config.grid_side(last);
        let c = self.config.dim(last);
        let x = self.norm(tape, x, self.final_norm)?;
        let cols = tape.gather_rows(x, self.head_plan.clone(), c, vec![side * side, 9 * c])?;
        let maps = self.dense(tape, cols, self.head)?;
        tape.mean_rows(maps)
    }

    fn norm(&self, tape: &mut Tape, x: Var, n: Norm) -> Result<Var> {
        let (g, b) = (tape.param(n.gamma), tape.param(n.beta));
        tape.layer_norm(x, g, b)
    }

    fn dense(&self, tape: &mut Tape, x: Var, d: Dense) -> Result<Var> {
        let w = tape.param(d.weight);
        let b = d.bias.map(|b| tape.param(b));
        tape.linear(x, w, b)
    }

    fn dropout(&self, tape: &mut Tape, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let n = tape.value(x).len();
                let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
                tape.mul_const(x, Arc::new(mask))
            }
            _ => Ok(x),
        }
    }

    fn drop_path(&self, tape: &mut Tape, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        match rng {
            Some(rng) if p > 0.0 => {
                let factor = if rng.gen::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) };
                tape.scale(x, factor)
            }
            _ => Ok(x),
        }
    }
}

fn arc(v: Vec<u32>) -> Arc<[u32]> {
    v.into()
}

fn embed_plan(side: usize, p: usize) -> Arc<[u32]> {
    let g = side / p;
    let mut rows = Vec::with_capacity(side * side);
    for py in 0..g {
        for px in 0..g {
            for ky in 0..p {
                for kx in 0..p {
                    rows.push(((py * p + ky) * side + px * p + kx) as u32);
                }
            }
        }
    }
    arc(rows)
}

fn conv3x3_plan(side: usize) -> Arc<[u32]> {
    let mut rows = Vec::with_capacity(side * side * 9);
    for y in 0..side as isize {
        for x in 0..side as isize {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (yy, xx) = (y + dy, x + dx);
                    let inside = (0..side as isize).contains(&yy) && (0..side as isize).contains(&xx);
                    rows.push(if inside { (yy as usize * side + xx as usize) as u32 } else { PAD_ROW });
                }
            }
        }
    }
    arc(rows)
}

fn stage_plan(config: &ModelConfig, stage: usize) -> StagePlan {
    let side = config.grid_side(stage);
    let window = config.window(stage);
    let heads = config.heads[stage];
    let per_side = side / window;
    let n = window * window;

    let mut rel = Vec::with_capacity(heads * n * n);
    for h in 0..heads {
        for i in 0..n {
            for j in 0..n {
                let dy = (i / window) as isize - (j / window) as isize + window as isize - 1;
                let dx = (i % window) as isize - (j % window) as isize + window as isize - 1;
                rel.push(((dy as usize * (2 * window - 1) + dx as usize) * heads + h) as u32);
            }
        }
    }

    let merge = (stage + 1 < N_STAGES).then(|| {
        let half = side / 2;
        let mut rows = Vec::with_capacity(side * side);
        for y in 0..half {
            for x in 0..half {
                for (dy, dx) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    rows.push(((2 * y + dy) * side + 2 * x + dx) as u32);
                }
            }
        }
        arc(rows)
    });

    StagePlan {
        side,
        dim: config.dim(stage),
        heads,
        window,
        n_windows: per_side * per_side,
        rel_index: arc(rel),
        plain: window_plan(side, window, heads, 0),
        shifted: config.shifts(stage).then(|| window_plan(side, window, heads, window / 2)),
        merge,
    }
}

fn window_plan(side: usize, window: usize, heads: usize, shift: usize) -> WindowPlan {
    let per_side = side / window;
    let n = window * window;
    let nw = per_side * per_side;
    let tokens = side * side;

    // Window-order slot p = w·n + i holds the token cyclically shifted by
    // `-shift` along both axes.
    let mut to_windows = vec![0u32; tokens];
    let mut slot_of = vec![0usize; tokens];
    for wy in 0..per_side {
        for wx in 0..per_side {
            for iy in 0..window {
                for ix in 0..window {
                    let p = (wy * per_side + wx) * n + iy * window + ix;
                    let sy = (wy * window + iy + shift) % side;
                    let sx = (wx * window + ix + shift) % side;
                    to_windows[p] = (sy * side + sx) as u32;
                    slot_of[sy * side + sx] = p;
                }
            }
        }
    }

    let split = |which: usize| {
        let mut rows = Vec::with_capacity(nw * heads * n);
        for w in 0..nw {
            for h in 0..heads {
                for i in 0..n {
                    rows.push(((w * n + i) * 3 * heads + which * heads + h) as u32);
                }
            }
        }
        arc(rows)
    };

    let mut from_windows = Vec::with_capacity(tokens * heads);
    for &p in &slot_of {
        let (w, i) = (p / n, p % n);
        for h in 0..heads {
            from_windows.push(((w * heads + h) * n + i) as u32);
        }
    }

    let mask = (shift > 0).then(|| {
        let region = |c: usize| {
            if c < side - window {
                0
            } else if c < side - shift {
                1
            } else {
                2
            }
        };
        let mut m = vec![0.0; nw * n * n];
        for wy in 0..per_side {
            for wx in 0..per_side {
                let w = wy * per_side + wx;
                let ids: Vec<usize> = (0..n)
                    .map(|i| region(wy * window + i / window) * 3 + region(wx * window + i % window))
                    .collect();
                for i in 0..n {
                    for j in 0..n {
                        if ids[i] != ids[j] {
                            m[(w * n + i) * n + j] = f64::NEG_INFINITY;
                        }
                    }
                }
            }
        }
        m
    });

    WindowPlan {
        to_windows: arc(to_windows),
        from_windows: arc(from_windows),
        q: split(0),
        k: split(1),
        v: split(2),
        mask,
    }
}
