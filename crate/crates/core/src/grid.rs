//! Rover grid worlds.
//!
//! Cells are indexed `s = x + M·y` with `x` growing east and `y` growing
//! north. Each of the eight compass actions reaches its intended neighbour
//! with probability `1 − p` and each of the two headings 45° either side of it
//! with probability `p/2`, where `p` depends on whether the action is
//! cardinal or diagonal. Moves that would leave the grid keep the rover in
//! place. The goal is absorbing and free; obstacle cells charge the obstacle
//! cost but do not stop the rover.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, MdpError};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    E,
    W,
    N,
    S,
    NE,
    NW,
    SE,
    SW,
}

impl Action {
    /// Action order; the index of an action in this array is its MDP index.
    pub const ALL: [Action; 8] = [
        Action::E,
        Action::W,
        Action::N,
        Action::S,
        Action::NE,
        Action::NW,
        Action::SE,
        Action::SW,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).unwrap_or(0)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::E => (1, 0),
            Action::W => (-1, 0),
            Action::N => (0, 1),
            Action::S => (0, -1),
            Action::NE => (1, 1),
            Action::NW => (-1, 1),
            Action::SE => (1, -1),
            Action::SW => (-1, -1),
        }
    }

    pub fn is_diagonal(self) -> bool {
        let (dx, dy) = self.delta();
        dx != 0 && dy != 0
    }

    /// The two headings 45° either side.
    pub fn flanks(self) -> [Action; 2] {
        match self {
            Action::E => [Action::NE, Action::SE],
            Action::W => [Action::NW, Action::SW],
            Action::N => [Action::NE, Action::NW],
            Action::S => [Action::SE, Action::SW],
            Action::NE => [Action::N, Action::E],
            Action::NW => [Action::N, Action::W],
            Action::SE => [Action::S, Action::E],
            Action::SW => [Action::S, Action::W],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::E => "E",
            Action::W => "W",
            Action::N => "N",
            Action::S => "S",
            Action::NE => "NE",
            Action::NW => "NW",
            Action::SE => "SE",
            Action::SW => "SW",
        }
    }
}

/// Total slip probability, split evenly over the two flanking headings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipModel {
    pub cardinal: f64,
    pub diagonal: f64,
}

impl Default for SlipModel {
    fn default() -> Self {
        Self {
            cardinal: 0.2,
            diagonal: 0.4,
        }
    }
}

impl SlipModel {
    pub const DETERMINISTIC: SlipModel = SlipModel {
        cardinal: 0.0,
        diagonal: 0.0,
    };

    pub fn for_action(&self, a: Action) -> f64 {
        if a.is_diagonal() {
            self.diagonal
        } else {
            self.cardinal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<Cell>,
    /// Single-cell obstacles whose position is uncertain; a subset of
    /// `obstacles`.
    #[serde(default)]
    pub uncertain_obstacles: Vec<Cell>,
    pub goal: Cell,
    pub start: Cell,
    #[serde(default)]
    pub slip: SlipModel,
    /// Constraint (fuel) cost of every move outside the goal.
    #[serde(default = "default_move_cost")]
    pub move_cost: f64,
    #[serde(default = "default_obstacle_cost")]
    pub obstacle_cost: f64,
    #[serde(default)]
    pub goal_cost: f64,
    /// Objective cost of a move from a free, non-goal cell.
    #[serde(default)]
    pub step_cost: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
}

fn default_move_cost() -> f64 {
    2.0
}

fn default_obstacle_cost() -> f64 {
    10.0
}

fn default_discount() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid must have at least one cell")]
    Empty,
    #[error("{what} cell ({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfRange {
        what: &'static str,
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("the goal cell is an obstacle")]
    GoalIsObstacle,
    #[error("uncertain obstacle ({x}, {y}) is not listed among the obstacles")]
    UncertainNotObstacle { x: usize, y: usize },
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

impl GridConfig {
    /// Empty `width × height` grid, start bottom-right, goal top-left.
    pub fn open(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            obstacles: Vec::new(),
            uncertain_obstacles: Vec::new(),
            goal: Cell::new(0, height.saturating_sub(1)),
            start: Cell::new(width.saturating_sub(1), 0),
            slip: SlipModel::default(),
            move_cost: default_move_cost(),
            obstacle_cost: default_obstacle_cost(),
            goal_cost: 0.0,
            step_cost: 0.0,
            discount: default_discount(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        c.x + self.width * c.y
    }

    pub fn cell(&self, s: usize) -> Cell {
        Cell::new(s % self.width, s / self.width)
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    /// Neighbour in direction `a`, or `None` off the grid.
    pub fn step(&self, c: Cell, a: Action) -> Option<Cell> {
        let (dx, dy) = a.delta();
        let x = c.x.checked_add_signed(dx)?;
        let y = c.y.checked_add_signed(dy)?;
        let n = Cell::new(x, y);
        self.contains(n).then_some(n)
    }

    /// Per-cell obstacle flags.
    pub fn obstacle_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_cells()];
        for &c in &self.obstacles {
            if self.contains(c) {
                mask[self.index(c)] = true;
            }
        }
        mask
    }

    pub fn obstacle_fraction(&self) -> f64 {
        let n = self.n_cells();
        if n == 0 {
            return 0.0;
        }
        self.obstacle_mask().iter().filter(|&&b| b).count() as f64 / n as f64
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n_cells() == 0 {
            return Err(GridError::Empty);
        }
        let oob = |what, c: Cell| GridError::OutOfRange {
            what,
            x: c.x,
            y: c.y,
            width: self.width,
            height: self.height,
        };
        for (what, c) in [("goal", self.goal), ("start", self.start)] {
            if !self.contains(c) {
                return Err(oob(what, c));
            }
        }
        if let Some(&c) = self.obstacles.iter().find(|c| !self.contains(**c)) {
            return Err(oob("obstacle", c));
        }
        if self.obstacles.contains(&self.goal) {
            return Err(GridError::GoalIsObstacle);
        }
        if let Some(c) = self
            .uncertain_obstacles
            .iter()
            .find(|c| !self.obstacles.contains(c))
        {
            return Err(GridError::UncertainNotObstacle { x: c.x, y: c.y });
        }
        let probs_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !probs_ok(self.slip.cardinal) || !probs_ok(self.slip.diagonal) {
            return Err(GridError::Parameter("slip probabilities must lie in [0, 1]"));
        }
        let costs = [self.move_cost, self.obstacle_cost, self.goal_cost, self.step_cost];
        if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(GridError::Parameter("costs must be finite and non-negative"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(GridError::Parameter("discount must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Successor row of `a` from `c`, merged and sorted by state index.
pub fn transition_row(config: &GridConfig, c: Cell, a: Action) -> Vec<(usize, f64)> {
    let p = config.slip.for_action(a);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
    let mut add = |target: Option<Cell>, prob: f64| {
        if prob <= 0.0 {
            return;
        }
        let s = config.index(target.unwrap_or(c));
        match row.iter_mut().find(|(j, _)| *j == s) {
            Some(e) => e.1 += prob,
            None => row.push((s, prob)),
        }
    };
    add(config.step(c, a), 1.0 - p);
    for f in a.flanks() {
        add(config.step(c, f), 0.5 * p);
    }
    row.sort_by_key(|&(s, _)| s);
    row
}

/// Builds the rover MDP: 8 actions, `κ0` a point mass on the start cell,
/// one constraint cost (fuel).
pub fn build_gridworld(config: &GridConfig) -> Result<Mdp, GridError> {
    config.validate()?;
    let n = config.n_cells();
    let n_a = Action::ALL.len();
    let goal = config.index(config.goal);
    let mask = config.obstacle_mask();
    let mut transitions = Vec::with_capacity(n * n_a);
    let mut cost = Vec::with_capacity(n * n_a);
    let mut fuel = Vec::with_capacity(n * n_a);
    for (s, &blocked) in mask.iter().enumerate() {
        let c = config.cell(s);
        for a in Action::ALL {
            if s == goal {
                transitions.push(vec![(s, 1.0)]);
                cost.push(config.goal_cost);
                fuel.push(0.0);
                continue;
            }
            transitions.push(transition_row(config, c, a));
            cost.push(if blocked {
                config.obstacle_cost
            } else {
                config.step_cost
            });
            fuel.push(config.move_cost);
        }
    }
    let mut kappa0 = vec![0.0; n];
    kappa0[config.index(config.start)] = 1.0;
    Ok(Mdp::new(
        n,
        n_a,
        transitions,
        cost,
        vec![fuel],
        kappa0,
        config.discount,
    )?)
}

/// Moves each uncertain obstacle, independently with probability `prob`, to
/// a uniformly chosen in-grid neighbour that is neither the goal nor already
/// an obstacle. Deterministic for a fixed seed.
pub fn perturb_obstacles(config: &GridConfig, prob: f64, seed: u64) -> GridConfig {
    let mut out = config.clone();
    if prob <= 0.0 || config.uncertain_obstacles.is_empty() {
        return out;
    }
    let mut rng = rng::rng_from_seed(seed);
    for k in 0..out.uncertain_obstacles.len() {
        let from = out.uncertain_obstacles[k];
        // Draw the Bernoulli first so the number of draws per obstacle does not
        // depend on the neighbourhood.
        let moves = rng::uniform(&mut rng) < prob;
        let pick = rng::uniform(&mut rng);
        if !moves {
            continue;
        }
        let options: Vec<Cell> = Action::ALL
            .iter()
            .filter_map(|&a| out.step(from, a))
            .filter(|&c| c != out.goal && !out.obstacles.contains(&c))
            .collect();
        if options.is_empty() {
            continue;
        }
        let to = options[((pick * options.len() as f64) as usize).min(options.len() - 1)];
        out.uncertain_obstacles[k] = to;
        if let Some(o) = out.obstacles.iter_mut().find(|o| **o == from) {
            *o = to;
        }
    }
    out
}

/// Parameters of the random obstacle layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub obstacle_fraction: f64,
    pub uncertain: usize,
    pub seed: u64,
}

/// Seed used when a layout is requested without one.
pub const DEFAULT_LAYOUT_SEED: u64 = 2021;

impl GridSpec {
    /// `size × size` grid with 25% obstacles and the paper's number of
    /// uncertain obstacles for that size (3, 6 and 9 for 10, 15 and 20).
    pub fn paper(size: usize) -> Self {
        Self {
            width: size,
            height: size,
            obstacle_fraction: 0.25,
            uncertain: default_uncertain(size),
            seed: DEFAULT_LAYOUT_SEED,
        }
    }
}

/// 3, 6 or 9 uncertain obstacles for 10-, 15- and 20-wide grids, scaled
/// linearly otherwise.
pub fn default_uncertain(size: usize) -> usize {
    match size {
        0..=12 => 3,
        13..=17 => 6,
        _ => 9,
    }
}

/// Random layout: uncertain obstacles are isolated single cells (no
/// obstacle among their eight neighbours); the remaining obstacles are
/// scattered uniformly. Start, goal and their neighbourhoods stay free.
pub fn generate_grid(spec: &GridSpec) -> Result<GridConfig, GridError> {
    if !(0.0..1.0).contains(&spec.obstacle_fraction) {
        return Err(GridError::Parameter("obstacle fraction must lie in [0, 1)"));
    }
    let mut config = GridConfig::open(spec.width, spec.height);
    if config.n_cells() == 0 {
        return Err(GridError::Empty);
    }
    let n = config.n_cells();
    let target = libm::round(spec.obstacle_fraction * n as f64) as usize;
    if spec.uncertain > target {
        return Err(GridError::Parameter("more uncertain obstacles than obstacles"));
    }
    let mut reserved = vec![false; n];
    for c in [config.start, config.goal] {
        reserved[config.index(c)] = true;
        for a in Action::ALL {
            if let Some(nb) = config.step(c, a) {
                reserved[config.index(nb)] = true;
            }
        }
    }
    let mut rng = rng::rng_from_seed(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng, &mut order);

    let mut mask = vec![false; n];
    // Cells next to an uncertain obstacle must stay free to keep it isolated.
    let mut halo = vec![false; n];
    let neighbours = |config: &GridConfig, s: usize| -> Vec<usize> {
        let c = config.cell(s);
        Action::ALL
            .iter()
            .filter_map(|&a| config.step(c, a))
            .map(|nb| config.index(nb))
            .collect()
    };
    for &s in &order {
        if config.uncertain_obstacles.len() == spec.uncertain {
            break;
        }
        if reserved[s] || mask[s] || halo[s] {
            continue;
        }
        let nbs = neighbours(&config, s);
        if nbs.iter().any(|&j| mask[j]) {
            continue;
        }
        mask[s] = true;
        halo[s] = true;
        for j in nbs {
            halo[j] = true;
        }
        config.uncertain_obstacles.push(config.cell(s));
    }
    if config.uncertain_obstacles.len() < spec.uncertain {
        return Err(GridError::Parameter("grid too small for the requested uncertain obstacles"));
    }
    let mut count = spec.uncertain;
    for &s in &order {
        if count == target {
            break;
        }
        if reserved[s] || mask[s] || halo[s] {
            continue;
        }
        mask[s] = true;
        count += 1;
    }
    config.obstacles = (0..n).filter(|&s| mask[s]).map(|s| config.cell(s)).collect();
    config.uncertain_obstacles.sort();
    Ok(config)
}
