use serde::{Deserialize, Serialize};

use crate::scene::wrap_deg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnMode {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadTurn {
    /// seq of the command that started the turn.
    pub cause_seq: u64,
    pub from_deg: f64,
    /// Unwrapped goal, so a relative 270° turn really turns 270°.
    pub target_deg: f64,
    pub start_s: f64,
    pub eta_s: f64,
}

/// Head orientation that slews at a fixed rate toward the commanded heading.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadState {
    heading_deg: f64,
    turn: Option<HeadTurn>,
    rate_dps: f64,
}

impl HeadState {
    pub fn new(heading_deg: f64, rate_dps: f64) -> Self {
        HeadState {
            heading_deg: wrap_deg(heading_deg),
            turn: None,
            rate_dps,
        }
    }

    pub fn turn(&self) -> Option<&HeadTurn> {
        self.turn.as_ref()
    }

    pub fn heading_at(&self, t: f64) -> f64 {
        match &self.turn {
            None => self.heading_deg,
            Some(turn) => {
                if t >= turn.eta_s || turn.eta_s <= turn.start_s {
                    wrap_deg(turn.target_deg)
                } else {
                    let u = ((t - turn.start_s) / (turn.eta_s - turn.start_s)).max(0.0);
                    wrap_deg(turn.from_deg + u * (turn.target_deg - turn.from_deg))
                }
            }
        }
    }

    /// Starts a turn at `now`. Returns the turn it preempted, if one was in flight.
    pub fn start_turn(&mut self, mode: TurnMode, degrees: f64, now: f64, cause_seq: u64) -> (HeadTurn, Option<HeadTurn>) {
        let current = self.heading_at(now);
        let preempted = self.turn.take();
        self.heading_deg = current;
        let delta = match mode {
            TurnMode::Absolute => wrap_deg(degrees - current),
            TurnMode::Relative => degrees,
        };
        let turn = HeadTurn {
            cause_seq,
            from_deg: current,
            target_deg: current + delta,
            start_s: now,
            eta_s: now + delta.abs() / self.rate_dps,
        };
        self.turn = Some(turn);
        (turn, preempted)
    }

    /// Completes a turn whose arrival time has passed.
    pub fn step(&mut self, now: f64) -> Option<HeadTurn> {
        match self.turn {
            Some(turn) if now >= turn.eta_s => {
                self.heading_deg = wrap_deg(turn.target_deg);
                self.turn = None;
                Some(turn)
            }
            _ => None,
        }
    }
}
