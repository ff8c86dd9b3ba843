use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::manifest::{Manifest, ManifestRow};
use crate::dsp::wav::{read_wav, write_wav};
use crate::error::{Error, Result};
use crate::room::{convolve_multichannel, image_source_rir, sample_room, RirSet, RoomScene};

/// Scene JSON written next to its raw RIR file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    #[serde(flatten)]
    pub scene: RoomScene,
    /// Evaluation condition: the pool room id, or a T60 bucket.
    pub condition: String,
    /// Little-endian f32 samples, microphone-major.
    pub rir_file: String,
    pub rir_len: usize,
}

impl SceneRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// 0.2 s wide T60 bucket label, e.g. `t60 0.4-0.6`.
pub fn t60_bucket(t60: f64) -> String {
    let lo = ((t60 * 5.0).floor() / 5.0).clamp(0.2, 0.6);
    format!("t60 {:.1}-{:.1}", lo, lo + 0.2)
}

pub(crate) fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream((a << 32) ^ b);
    rng.next_u64()
}

/// Samples a scene and renders its RIRs, resampling geometries whose T60
/// is infeasible up to `retries` times.
pub fn simulate_scene(seed: u64, t60_range: (f64, f64), n_mics: usize, retries: usize) -> Result<(RoomScene, RirSet)> {
    let mut last = None;
    for attempt in 0..=retries {
        let scene = sample_room(derive_seed(seed, 0xA11CE, attempt as u64), t60_range, n_mics)?;
        match image_source_rir(&scene) {
            Ok(rirs) => return Ok((scene, rirs)),
            Err(e @ Error::T60Infeasible { .. }) => {
                log::debug!("scene seed {seed} attempt {attempt}: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn write_scene(dir: &Path, name: &str, scene: &RoomScene, rirs: &RirSet, condition: String) -> Result<String> {
    let rir_file = format!("{name}.rir.f32");
    let mut bytes = Vec::with_capacity(rirs.n_mics() * rirs.len() * 4);
    for h in &rirs.rirs {
        for v in h {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(dir.join(&rir_file), bytes)?;
    let record = SceneRecord {
        scene: scene.clone(),
        condition,
        rir_file,
        rir_len: rirs.len(),
    };
    let json_name = format!("{name}.json");
    let mut f = fs::File::create(dir.join(&json_name))?;
    serde_json::to_writer_pretty(&mut f, &record)?;
    writeln!(f)?;
    Ok(format!("scenes/{json_name}"))
}

/// Convolves every clip with `scenes_per_clip` simulated rooms, writing
/// `train_mics`-channel WAVs, scene files and a new manifest under
/// `out_dir`. Multi-channel sources use their first channel.
pub fn simulate_corpus(manifest: &Manifest, cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out_dir.join("clips"))?;
    fs::create_dir_all(out_dir.join("scenes"))?;
    let t60 = (cfg.t60_range[0], cfg.t60_range[1]);
    let mut pool: Vec<Option<(RirSet, String)>> = vec![None; cfg.scene_pool.unwrap_or(0)];
    let mut rows = Vec::with_capacity(manifest.rows.len() * cfg.scenes_per_clip);
    for (idx, row) in manifest.rows.iter().enumerate() {
        let clip = read_wav(manifest.resolve(&row.clip_path))?;
        let source = clip.channel(0);
        let stem = Path::new(&row.clip_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "clip".into());
        for j in 0..cfg.scenes_per_clip {
            let pair_seed = derive_seed(cfg.seed, idx as u64, j as u64);
            let name = format!("{idx:05}_{stem}_s{j}");
            let (rirs, scene_ref) = match cfg.scene_pool {
                Some(n) => {
                    let p = (pair_seed % n as u64) as usize;
                    if pool[p].is_none() {
                        let (scene, rirs) =
                            simulate_scene(derive_seed(cfg.seed, u32::MAX as u64, p as u64), t60, cfg.train_mics, cfg.max_scene_retries)?;
                        let room = format!("room{p:03}");
                        let r = write_scene(&out_dir.join("scenes"), &room, &scene, &rirs, room.clone())?;
                        pool[p] = Some((rirs, r));
                    }
                    pool[p].clone().expect("filled above")
                }
                None => {
                    let (scene, rirs) = simulate_scene(pair_seed, t60, cfg.train_mics, cfg.max_scene_retries)?;
                    let r = write_scene(&out_dir.join("scenes"), &name, &scene, &rirs, t60_bucket(scene.t60_target))?;
                    (rirs, r)
                }
            };
            let out = convolve_multichannel(source, &rirs)?;
            let rel = format!("clips/{name}.wav");
            write_wav(out_dir.join(&rel), &out)?;
            rows.push(ManifestRow {
                clip_path: rel,
                label: row.label.clone(),
                split: row.split,
                scene_ref: Some(scene_ref),
            });
        }
    }
    let out = Manifest::new(out_dir, rows);
    out.save(out_dir.join("manifest.csv"))?;
    Ok(out)
}
