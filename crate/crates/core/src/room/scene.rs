use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MAX_ASPECT, MAX_SIDE, MIC_HEIGHT, MIN_SIDE, ROOM_HEIGHT, SOURCE_HEIGHT, WALL_MARGIN};
use crate::error::{Error, Result};

/// A shoebox room with one source and `M` omnidirectional microphones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomScene {
    pub dims: [f64; 3],
    pub source_pos: [f64; 3],
    pub mic_pos: Vec<[f64; 3]>,
    pub t60_target: f64,
    pub seed: u64,
}

impl RoomScene {
    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Checks the sampling constraints; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let [lx, ly, lz] = self.dims;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        for side in [lx, ly] {
            if !(MIN_SIDE..=MAX_SIDE).contains(&side) {
                return bad(format!("room side {side} outside [{MIN_SIDE}, {MAX_SIDE}]"));
            }
        }
        let ratio = lx.max(ly) / lx.min(ly);
        if ratio > MAX_ASPECT + 1e-12 {
            return bad(format!("aspect ratio {ratio} exceeds {MAX_ASPECT}"));
        }
        if lz != ROOM_HEIGHT {
            return bad(format!("room height {lz} != {ROOM_HEIGHT}"));
        }
        if !(0.2..=0.8).contains(&self.t60_target) {
            return bad(format!("t60 {} outside [0.2, 0.8]", self.t60_target));
        }
        if self.mic_pos.is_empty() {
            return bad("scene has no microphones".into());
        }
        if self.source_pos[2] != SOURCE_HEIGHT {
            return bad(format!("source height {}", self.source_pos[2]));
        }
        for p in std::iter::once(&self.source_pos).chain(&self.mic_pos) {
            for axis in 0..3 {
                if p[axis] < WALL_MARGIN - 1e-12 || p[axis] > self.dims[axis] - WALL_MARGIN + 1e-12 {
                    return bad(format!("position {p:?} closer than {WALL_MARGIN} m to a wall"));
                }
            }
        }
        if self.mic_pos.iter().any(|m| m[2] != MIC_HEIGHT) {
            return bad("microphone height differs from 1.6 m".into());
        }
        Ok(())
    }
}

/// Draws a scene: side length uniform in [3, 8], aspect ratio uniform in
/// [1, 1.6] with a coin flip for the longer axis (rejecting draws whose
/// second side leaves [3, 8]), positions uniform over the interior
/// rectangle kept 0.5 m from every wall.
pub fn sample_room(seed: u64, t60_range: (f64, f64), n_mics: usize) -> Result<RoomScene> {
    if n_mics == 0 {
        return Err(Error::InvalidArgument("need at least one microphone".into()));
    }
    let (lo, hi) = t60_range;
    if !(lo <= hi && lo > 0.0) {
        return Err(Error::InvalidArgument(format!("bad t60 range {t60_range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lx, ly) = loop {
        let a = rng.gen_range(MIN_SIDE..=MAX_SIDE);
        let ratio = rng.gen_range(1.0..=MAX_ASPECT);
        let b = if rng.gen_bool(0.5) { a / ratio } else { a * ratio };
        if (MIN_SIDE..=MAX_SIDE).contains(&b) {
            break (a, b);
        }
    };
    let dims = [lx, ly, ROOM_HEIGHT];
    let mut place = |z: f64| {
        [
            rng.gen_range(WALL_MARGIN..=lx - WALL_MARGIN),
            rng.gen_range(WALL_MARGIN..=ly - WALL_MARGIN),
            z,
        ]
    };
    let source_pos = place(SOURCE_HEIGHT);
    let mic_pos = (0..n_mics).map(|_| place(MIC_HEIGHT)).collect();
    let t60_target = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    Ok(RoomScene {
        dims,
        source_pos,
        mic_pos,
        t60_target,
        seed,
    })
}
