use rand::Rng;

use super::{GridState, Pos};

pub const IMAGE_SIDE: usize = 16;

pub const TARGET_LEVEL: f32 = 1.0 / 3.0;
pub const TEAMMATE_LEVEL: f32 = 2.0 / 3.0;
pub const SELF_LEVEL: f32 = 1.0;

const ZONE_LEVEL: f32 = 0.2;
const OBSTACLE_LEVEL: f32 = 0.4;
const BOX_LEVEL: f32 = 0.6;
const CMOTP_TEAMMATE_LEVEL: f32 = 0.8;

fn fill_block(img: &mut [f32], n: usize, p: Pos, level: f32) {
    let block = IMAGE_SIDE / n;
    for dy in 0..block {
        let row = (p.y * block + dy) * IMAGE_SIDE;
        for dx in 0..block {
            img[row + p.x * block + dx] = level;
        }
    }
}

fn add_noise<R: Rng>(img: &mut [f32], amplitude: f64, rng: &mut R) {
    if amplitude > 0.0 {
        for px in img.iter_mut() {
            let e = rng.random_range(-amplitude..=amplitude) as f32;
            *px = (*px + e).clamp(0.0, 1.0);
        }
    }
}

/// 16×16 single-channel frame for `agent`. `visible` masks
/// `[self, teammate, target]`; hidden entities are simply not drawn.
pub fn render_meeting_image<R: Rng>(
    state: &GridState,
    agent: usize,
    visible: [bool; 3],
    noise: f64,
    rng: &mut R,
) -> Vec<f32> {
    let n = state.n;
    let mut img = vec![0.0f32; IMAGE_SIDE * IMAGE_SIDE];
    let layers = [
        (visible[2], state.target.expect("meeting target"), TARGET_LEVEL),
        (visible[1], state.agents[1 - agent], TEAMMATE_LEVEL),
        (visible[0], state.agents[agent], SELF_LEVEL),
    ];
    for (vis, pos, level) in layers {
        if vis {
            fill_block(&mut img, n, pos, level);
        }
    }
    add_noise(&mut img, noise, rng);
    img
}

/// CMOTP frame: drop zones, obstacles, box, teammate, self.
pub fn render_cmotp_image<R: Rng>(
    state: &GridState,
    zones: &[Pos],
    agent: usize,
    visible: [bool; 3],
    noise: f64,
    rng: &mut R,
) -> Vec<f32> {
    let n = state.n;
    let mut img = vec![0.0f32; IMAGE_SIDE * IMAGE_SIDE];
    for z in zones {
        fill_block(&mut img, n, *z, ZONE_LEVEL);
    }
    for (i, blocked) in state.obstacles.iter().enumerate() {
        if *blocked {
            fill_block(&mut img, n, Pos::from_index(i, n), OBSTACLE_LEVEL);
        }
    }
    let layers = [
        (visible[2], state.box_pos.expect("cmotp box"), BOX_LEVEL),
        (visible[1], state.agents[1 - agent], CMOTP_TEAMMATE_LEVEL),
        (visible[0], state.agents[agent], SELF_LEVEL),
    ];
    for (vis, pos, level) in layers {
        if vis {
            fill_block(&mut img, n, pos, level);
        }
    }
    add_noise(&mut img, noise, rng);
    img
}
