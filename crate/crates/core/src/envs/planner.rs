use super::{Action, EnvConfig, Pos, TargetMotion, ACTION_COUNT};
use crate::error::{Error, Result};

/// Finite-horizon dynamic program over full meeting-in-a-grid states.
///
/// Values are success probabilities (times the meeting reward) with `h`
/// steps remaining; the greedy joint action breaks ties by the lowest
/// joint index `a0 * 5 + a1`.
#[derive(Debug, Clone)]
pub struct MeetingPlanner {
    n: usize,
    horizon: usize,
    values: Vec<Vec<f64>>,
    policy: Vec<Vec<u8>>,
}

impl MeetingPlanner {
    pub fn for_config(config: &EnvConfig) -> Result<Self> {
        Self::solve(
            config.grid(),
            config.transition_noise,
            config.target_motion,
            config.episode_cap,
            config.rewards.meeting,
        )
    }

    pub fn solve(n: usize, noise: f64, motion: TargetMotion, horizon: usize, reward: f64) -> Result<Self> {
        if n < 2 || n > 6 {
            return Err(Error::Argument(format!("planner supports grids of 2..=6, got {n}")));
        }
        let cells = n * n;
        let states = cells * cells * cells;
        let next: Vec<[usize; ACTION_COUNT]> = (0..cells)
            .map(|c| Action::ALL.map(|a| Pos::from_index(c, n).moved(a, n).index(n)))
            .collect();
        let outcomes: Vec<Vec<(usize, f64)>> = (0..ACTION_COUNT)
            .map(|a| {
                (0..ACTION_COUNT)
                    .map(|e| (e, if e == a { 1.0 - noise } else { noise / 4.0 }))
                    .filter(|(_, p)| *p > 0.0)
                    .collect()
            })
            .collect();
        let target_moves: Vec<usize> = match motion {
            TargetMotion::RandomWalk => (0..ACTION_COUNT).collect(),
            TargetMotion::Static => vec![Action::Stay.index()],
        };
        let move_prob = 1.0 / target_moves.len() as f64;
        let idx = |a: usize, b: usize, t: usize| (a * cells + b) * cells + t;

        let mut values = vec![vec![0.0; states]];
        let mut policy = vec![vec![0u8; states]];
        let mut after_move = vec![0.0; states];
        for _ in 1..=horizon {
            let prev = values.last().expect("value layer");
            for a in 0..cells {
                for b in 0..cells {
                    for t in 0..cells {
                        after_move[idx(a, b, t)] = target_moves
                            .iter()
                            .map(|m| move_prob * prev[idx(a, b, next[t][*m])])
                            .sum();
                    }
                }
            }
            let mut v = vec![0.0; states];
            let mut pi = vec![0u8; states];
            for a in 0..cells {
                for b in 0..cells {
                    for t in 0..cells {
                        let s = idx(a, b, t);
                        let mut best = f64::NEG_INFINITY;
                        let mut best_joint = 0u8;
                        for ia in 0..ACTION_COUNT {
                            for ib in 0..ACTION_COUNT {
                                let mut q = 0.0;
                                for &(ea, pa) in &outcomes[ia] {
                                    let na = next[a][ea];
                                    for &(eb, pb) in &outcomes[ib] {
                                        let nb = next[b][eb];
                                        q += pa * pb
                                            * if na == t && nb == t {
                                                reward
                                            } else {
                                                after_move[idx(na, nb, t)]
                                            };
                                    }
                                }
                                if q > best + 1e-12 {
                                    best = q;
                                    best_joint = (ia * ACTION_COUNT + ib) as u8;
                                }
                            }
                        }
                        v[s] = best;
                        pi[s] = best_joint;
                    }
                }
            }
            values.push(v);
            policy.push(pi);
        }
        Ok(Self {
            n,
            horizon,
            values,
            policy,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn state_index(&self, agents: [Pos; 2], target: Pos) -> usize {
        let cells = self.n * self.n;
        (agents[0].index(self.n) * cells + agents[1].index(self.n)) * cells + target.index(self.n)
    }

    pub fn value(&self, agents: [Pos; 2], target: Pos, remaining: usize) -> f64 {
        self.values[remaining.min(self.horizon)][self.state_index(agents, target)]
    }

    pub fn joint_action(&self, agents: [Pos; 2], target: Pos, remaining: usize) -> [usize; 2] {
        let h = remaining.clamp(1, self.horizon.max(1)).min(self.horizon);
        let j = self.policy[h][self.state_index(agents, target)] as usize;
        [j / ACTION_COUNT, j % ACTION_COUNT]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_meeting_is_certain_in_one_step() {
        let p = MeetingPlanner::solve(3, 0.0, TargetMotion::Static, 1, 1.0).unwrap();
        let agents = [Pos::new(0, 1), Pos::new(2, 1)];
        assert_eq!(p.value(agents, Pos::new(1, 1), 1), 1.0);
        assert_eq!(p.joint_action(agents, Pos::new(1, 1), 1), [3, 2]);
    }

    #[test]
    fn noiseless_three_by_three_is_solved() {
        let p = MeetingPlanner::solve(3, 0.0, TargetMotion::RandomWalk, 40, 1.0).unwrap();
        let agents = [Pos::new(0, 0), Pos::new(2, 2)];
        assert!(p.value(agents, Pos::new(1, 0), 40) > 0.999);
    }
}
