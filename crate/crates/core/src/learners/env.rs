//! Small episodic environments with exactly solvable optima.

use serde::{Deserialize, Serialize};

use crate::error::{GalaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// States `0..length`, start at 0, actions left/right, reward 1 on
    /// reaching the last state (terminal).
    Chain { length: usize },
    /// Start at (0, 0), goal at (width-1, height-1), actions up/right/down/left.
    Gridworld {
        width: usize,
        height: usize,
        #[serde(default)]
        step_penalty: f64,
    },
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvSpec::Chain { length } if length < 2 => {
                Err(GalaError::config("env.length", "chain needs at least 2 states"))
            }
            EnvSpec::Gridworld { width, height, .. } if width * height < 2 => {
                Err(GalaError::config("env", "gridworld needs at least 2 cells"))
            }
            EnvSpec::Gridworld { step_penalty, .. } if !(step_penalty >= 0.0) => {
                Err(GalaError::config("env.step_penalty", "must be nonnegative"))
            }
            _ => Ok(()),
        }
    }

    pub fn num_states(&self) -> usize {
        match *self {
            EnvSpec::Chain { length } => length,
            EnvSpec::Gridworld { width, height, .. } => width * height,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvSpec::Chain { .. } => 2,
            EnvSpec::Gridworld { .. } => 4,
        }
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        s + 1 == self.num_states()
    }

    /// Deterministic dynamics: `(next_state, reward, terminal)`.
    pub fn transition(&self, s: usize, a: usize) -> (usize, f64, bool) {
        match *self {
            EnvSpec::Chain { length } => {
                let next = if a == 1 { (s + 1).min(length - 1) } else { s.saturating_sub(1) };
                let done = next == length - 1;
                (next, if done { 1.0 } else { 0.0 }, done)
            }
            EnvSpec::Gridworld {
                width,
                height,
                step_penalty,
            } => {
                let (x, y) = (s % width, s / width);
                let (nx, ny) = match a {
                    0 => (x, (y + 1).min(height - 1)),
                    1 => ((x + 1).min(width - 1), y),
                    2 => (x, y.saturating_sub(1)),
                    _ => (x.saturating_sub(1), y),
                };
                let next = ny * width + nx;
                let done = self.is_terminal(next);
                (next, if done { 1.0 } else { -step_penalty }, done)
            }
        }
    }

    pub fn default_episode_cap(&self) -> usize {
        10 * self.num_states()
    }
}

/// One running copy of an environment with an episode-length cap.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    spec: EnvSpec,
    state: usize,
    steps: usize,
    episode_return: f64,
    max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: usize,
    pub reward: f64,
    /// Terminal or truncated; the state after a done step is the env's reset state.
    pub done: bool,
    pub finished_episode: Option<(f64, usize)>,
}

impl EnvInstance {
    pub fn new(spec: EnvSpec, max_steps: usize) -> Self {
        EnvInstance {
            spec,
            state: spec.start(),
            steps: 0,
            episode_return: 0.0,
            max_steps: max_steps.max(1),
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Steps the environment and auto-resets on termination or truncation.
    pub fn step(&mut self, a: usize) -> StepResult {
        let (next, reward, terminal) = self.spec.transition(self.state, a);
        self.steps += 1;
        self.episode_return += reward;
        let done = terminal || self.steps >= self.max_steps;
        let finished = if done {
            let ep = (self.episode_return, self.steps);
            self.state = self.spec.start();
            self.steps = 0;
            self.episode_return = 0.0;
            Some(ep)
        } else {
            self.state = next;
            None
        };
        StepResult {
            next_state: next,
            reward,
            done,
            finished_episode: finished,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_walks_to_goal() {
        let spec = EnvSpec::Chain { length: 5 };
        let mut env = EnvInstance::new(spec, 100);
        assert_eq!(env.step(0).next_state, 0);
        for _ in 0..3 {
            assert!(!env.step(1).done);
        }
        let r = env.step(1);
        assert!(r.done);
        assert_eq!(r.reward, 1.0);
        assert_eq!(r.finished_episode, Some((1.0, 5)));
        assert_eq!(env.state(), 0);
    }

    #[test]
    fn gridworld_walls_and_goal() {
        let spec = EnvSpec::Gridworld {
            width: 3,
            height: 2,
            step_penalty: 0.1,
        };
        assert_eq!(spec.transition(0, 3), (0, -0.1, false));
        assert_eq!(spec.transition(0, 2), (0, -0.1, false));
        assert_eq!(spec.transition(0, 0), (3, -0.1, false));
        assert_eq!(spec.transition(4, 1), (5, 1.0, true));
    }

    #[test]
    fn truncation_counts_as_done() {
        let mut env = EnvInstance::new(EnvSpec::Chain { length: 4 }, 2);
        assert!(!env.step(0).done);
        let r = env.step(0);
        assert!(r.done);
        assert_eq!(r.finished_episode, Some((0.0, 2)));
    }
}
