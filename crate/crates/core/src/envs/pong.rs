//! Self-contained two-paddle Pong on the unit square.
//!
//! The agent controls the left paddle (x = 0); a scripted opponent tracks the
//! ball with a reaction lag on the right (x = 1). The ball moves at constant
//! speed and reflects elastically off walls and paddles; each paddle hit
//! perturbs the bounce angle by up to ±10%.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvStep, Environment};
use crate::error::{Error, Result};

pub const ACTION_STAY: usize = 0;
pub const ACTION_UP: usize = 1;
pub const ACTION_DOWN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PongObservation {
    /// `[ball_x, ball_y, ball_vx, ball_vy, paddle_y, opponent_y]`, centered.
    State,
    /// Binary `grid × grid` image: ball, own paddle (column 0), opponent (last column).
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiniPongConfig {
    pub observation: PongObservation,
    pub grid_size: usize,
    /// Zero the velocity entries of the state observation, so motion has to
    /// be inferred from memory.
    pub hide_velocity: bool,
    pub points_to_win: u32,
    pub paddle_half: f64,
    pub paddle_speed: f64,
    pub ball_speed: f64,
    pub opponent_speed: f64,
    /// Steps of delay in the opponent's view of the ball.
    pub opponent_lag: usize,
    pub serve_angle: (f64, f64),
    pub bounce_angle: (f64, f64),
    pub step_cap: usize,
}

impl Default for MiniPongConfig {
    fn default() -> Self {
        MiniPongConfig {
            observation: PongObservation::State,
            grid_size: 12,
            hide_velocity: false,
            points_to_win: 21,
            paddle_half: 0.1,
            paddle_speed: 0.04,
            ball_speed: 0.03,
            opponent_speed: 0.02,
            opponent_lag: 3,
            serve_angle: (0.2, 0.8),
            bounce_angle: (0.15, 1.0),
            step_cap: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PongState {
    pub ball: (f64, f64),
    pub velocity: (f64, f64),
    pub paddle: f64,
    pub opponent: f64,
    pub score: (u32, u32),
    pub steps: usize,
}

pub struct MiniPong {
    cfg: MiniPongConfig,
    state: PongState,
    ball_history: VecDeque<f64>,
    rng: ChaCha8Rng,
}

impl MiniPong {
    pub fn new(cfg: MiniPongConfig) -> Self {
        let mut env = MiniPong {
            state: PongState {
                ball: (0.5, 0.5),
                velocity: (0.0, 0.0),
                paddle: 0.5,
                opponent: 0.5,
                score: (0, 0),
                steps: 0,
            },
            ball_history: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            cfg,
        };
        env.reset(0);
        env
    }

    pub fn config(&self) -> &MiniPongConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PongState {
        &self.state
    }

    pub fn set_state(&mut self, state: PongState) {
        self.ball_history.clear();
        self.ball_history.push_back(state.ball.1);
        self.state = state;
    }

    fn serve(&mut self) {
        let (lo, hi) = self.cfg.serve_angle;
        let angle = self.rng.gen_range(lo..=hi) * if self.rng.gen::<bool>() { 1.0 } else { -1.0 };
        let dir = if self.rng.gen::<bool>() { 1.0 } else { -1.0 };
        let y = self.rng.gen_range(0.3..=0.7);
        self.state.ball = (0.5, y);
        self.state.velocity = (
            dir * self.cfg.ball_speed * angle.cos(),
            self.cfg.ball_speed * angle.sin(),
        );
        self.ball_history.clear();
        self.ball_history.push_back(y);
    }

    fn bounce(&mut self, toward_right: bool) {
        let (vx, vy) = self.state.velocity;
        let theta = vy.atan2(vx.abs());
        let (lo, hi) = self.cfg.bounce_angle;
        let perturbed = theta * (1.0 + self.rng.gen_range(-0.1..=0.1));
        let clamped = perturbed.abs().clamp(lo, hi).copysign(if theta == 0.0 { 1.0 } else { theta });
        let dir = if toward_right { 1.0 } else { -1.0 };
        self.state.velocity = (
            dir * self.cfg.ball_speed * clamped.cos(),
            self.cfg.ball_speed * clamped.sin(),
        );
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        match self.cfg.observation {
            PongObservation::State => {
                let (vx, vy) = if self.cfg.hide_velocity {
                    (0.0, 0.0)
                } else {
                    (s.velocity.0 / self.cfg.ball_speed, s.velocity.1 / self.cfg.ball_speed)
                };
                vec![
                    2.0 * s.ball.0 - 1.0,
                    2.0 * s.ball.1 - 1.0,
                    vx,
                    vy,
                    2.0 * s.paddle - 1.0,
                    2.0 * s.opponent - 1.0,
                ]
            }
            PongObservation::Grid => {
                let n = self.cfg.grid_size;
                let cell = |v: f64| ((v * n as f64) as usize).min(n - 1);
                let mut grid = vec![0.0; n * n];
                grid[cell(s.ball.1) * n + cell(s.ball.0)] = 1.0;
                let half = self.cfg.paddle_half;
                for (y, col) in [(s.paddle, 0), (s.opponent, n - 1)] {
                    for row in cell((y - half).max(0.0))..=cell((y + half).min(1.0)) {
                        grid[row * n + col] = 1.0;
                    }
                }
                grid
            }
        }
    }

    fn clamp_paddle(&self, y: f64) -> f64 {
        y.clamp(self.cfg.paddle_half, 1.0 - self.cfg.paddle_half)
    }
}

impl Environment for MiniPong {
    fn observation_dim(&self) -> usize {
        match self.cfg.observation {
            PongObservation::State => 6,
            PongObservation::Grid => self.cfg.grid_size * self.cfg.grid_size,
        }
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state.paddle = 0.5;
        self.state.opponent = 0.5;
        self.state.score = (0, 0);
        self.state.steps = 0;
        self.serve();
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let delta = match action {
            ACTION_STAY => 0.0,
            ACTION_UP => self.cfg.paddle_speed,
            ACTION_DOWN => -self.cfg.paddle_speed,
            _ => {
                return Err(Error::IllegalAction {
                    action,
                    n_actions: 3,
                })
            }
        };
        self.state.paddle = self.clamp_paddle(self.state.paddle + delta);

        let seen = *self.ball_history.front().expect("history is never empty");
        let gap = seen - self.state.opponent;
        let move_by = gap.clamp(-self.cfg.opponent_speed, self.cfg.opponent_speed);
        self.state.opponent = self.clamp_paddle(self.state.opponent + move_by);

        let (mut x, mut y) = self.state.ball;
        x += self.state.velocity.0;
        y += self.state.velocity.1;
        if y < 0.0 {
            y = -y;
            self.state.velocity.1 = -self.state.velocity.1;
        } else if y > 1.0 {
            y = 2.0 - y;
            self.state.velocity.1 = -self.state.velocity.1;
        }

        let mut reward = 0.0;
        let mut served = false;
        if x <= 0.0 {
            if (y - self.state.paddle).abs() <= self.cfg.paddle_half {
                x = -x;
                self.bounce(true);
            } else {
                reward = -1.0;
                self.state.score.1 += 1;
                served = true;
            }
        } else if x >= 1.0 {
            if (y - self.state.opponent).abs() <= self.cfg.paddle_half {
                x = 2.0 - x;
                self.bounce(false);
            } else {
                reward = 1.0;
                self.state.score.0 += 1;
                served = true;
            }
        }
        if served {
            self.serve();
        } else {
            self.state.ball = (x, y);
            self.ball_history.push_back(y);
            while self.ball_history.len() > self.cfg.opponent_lag + 1 {
                self.ball_history.pop_front();
            }
        }
        self.state.steps += 1;

        let target = self.cfg.points_to_win;
        let done = self.state.score.0 >= target
            || self.state.score.1 >= target
            || self.state.steps >= self.cfg.step_cap;
        let mut info = BTreeMap::new();
        info.insert("score_self", self.state.score.0 as f64);
        info.insert("score_opponent", self.state.score.1 as f64);
        Ok(EnvStep {
            observation: self.observe(),
            reward,
            done,
            info,
        })
    }

    fn describe(&self) -> String {
        let s = &self.state;
        format!(
            "ball=({:.4},{:.4}) vel=({:.4},{:.4}) paddle={:.4} opponent={:.4} score={}:{}",
            s.ball.0, s.ball.1, s.velocity.0, s.velocity.1, s.paddle, s.opponent, s.score.0, s.score.1
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speed(s: &PongState) -> f64 {
        (s.velocity.0.powi(2) + s.velocity.1.powi(2)).sqrt()
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = MiniPong::new(MiniPongConfig::default());
        let mut b = MiniPong::new(MiniPongConfig::default());
        assert_eq!(a.reset(42), b.reset(42));
        assert_eq!(a.state().score, (0, 0));
    }

    #[test]
    fn seeds_vary_serve_angle() {
        let mut env = MiniPong::new(MiniPongConfig::default());
        let mut angles: Vec<f64> = (0..100)
            .map(|s| {
                env.reset(s);
                let v = env.state().velocity;
                v.1.atan2(v.0)
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup();
        assert!(angles.len() >= 2);
    }

    #[test]
    fn midfield_stay_is_neutral() {
        let mut env = MiniPong::new(MiniPongConfig::default());
        env.reset(1);
        let step = env.step(ACTION_STAY).unwrap();
        assert_eq!(step.reward, 0.0);
        assert!(!step.done);
    }

    #[test]
    fn illegal_action() {
        let mut env = MiniPong::new(MiniPongConfig::default());
        assert!(matches!(env.step(3), Err(Error::IllegalAction { .. })));
    }

    #[test]
    fn scoring_past_opponent() {
        let mut env = MiniPong::new(MiniPongConfig::default());
        env.reset(0);
        env.set_state(PongState {
            ball: (0.99, 0.95),
            velocity: (0.03, 0.0),
            paddle: 0.5,
            opponent: 0.1,
            score: (0, 0),
            steps: 0,
        });
        let step = env.step(ACTION_STAY).unwrap();
        assert_eq!(step.reward, 1.0);
        assert_eq!(env.state().score, (1, 0));
    }

    #[test]
    fn conceding_is_penalized() {
        let mut env = MiniPong::new(MiniPongConfig::default());
        env.set_state(PongState {
            ball: (0.01, 0.9),
            velocity: (-0.03, 0.0),
            paddle: 0.1,
            opponent: 0.5,
            score: (0, 0),
            steps: 0,
        });
        assert_eq!(env.step(ACTION_STAY).unwrap().reward, -1.0);
    }

    #[test]
    fn ball_stays_inside_and_speed_is_constant() {
        let cfg = MiniPongConfig::default();
        let mut env = MiniPong::new(cfg.clone());
        env.reset(7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5000 {
            let before = env.state().clone();
            let step = env.step(rng.gen_range(0..3)).unwrap();
            let s = env.state();
            assert!((0.0..=1.0).contains(&s.ball.0) && (0.0..=1.0).contains(&s.ball.1));
            assert!((speed(s) - cfg.ball_speed).abs() < 1e-12);
            assert!((speed(&before) - cfg.ball_speed).abs() < 1e-12);
            if step.done {
                env.reset(11);
            }
        }
    }

    fn scripted_game(opponent_speed: f64, seed: u64) -> f64 {
        let cfg = MiniPongConfig {
            opponent_speed,
            ..MiniPongConfig::default()
        };
        let mut env = MiniPong::new(cfg.clone());
        env.reset(seed);
        let mut total = 0.0;
        loop {
            let s = env.state();
            let gap = s.ball.1 - s.paddle;
            let action = if gap > cfg.paddle_speed / 2.0 {
                ACTION_UP
            } else if gap < -cfg.paddle_speed / 2.0 {
                ACTION_DOWN
            } else {
                ACTION_STAY
            };
            let step = env.step(action).unwrap();
            total += step.reward;
            if step.done {
                return total;
            }
        }
    }

    #[test]
    fn perfect_player_beats_static_opponent() {
        for seed in 0..3 {
            assert_eq!(scripted_game(0.0, seed), 21.0);
        }
    }

    #[test]
    fn episode_reward_bounded() {
        let mut env = MiniPong::new(MiniPongConfig::default());
        env.reset(5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut total = 0.0;
        loop {
            let step = env.step(rng.gen_range(0..3)).unwrap();
            total += step.reward;
            if step.done {
                break;
            }
        }
        assert!((-21.0..=21.0).contains(&total));
        assert!(env.state().steps <= 10_000);
    }

    #[test]
    fn grid_observation_marks_ball_and_paddles() {
        let cfg = MiniPongConfig {
            observation: PongObservation::Grid,
            ..MiniPongConfig::default()
        };
        let mut env = MiniPong::new(cfg);
        let obs = env.reset(0);
        assert_eq!(obs.len(), 144);
        assert!(obs.iter().all(|&v| v == 0.0 || v == 1.0));
        let paddle_cells: f64 = (0..12).map(|r| obs[r * 12]).sum();
        assert!(paddle_cells >= 2.0);
    }

    #[test]
    fn hidden_velocity_zeroes_entries() {
        let cfg = MiniPongConfig {
            hide_velocity: true,
            ..MiniPongConfig::default()
        };
        let mut env = MiniPong::new(cfg);
        let obs = env.reset(0);
        assert_eq!((obs[2], obs[3]), (0.0, 0.0));
    }
}
