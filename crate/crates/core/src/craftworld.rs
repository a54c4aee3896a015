//! Deterministic multi-agent craft world.
//!
//! Agents move on a rectangular grid of walls and object cells. An object's
//! event atom (`got_wood`, `used_workbench`, ...) is true in a state whenever
//! some agent stands on a cell holding that object. Objects are never
//! consumed, so the layout is fixed for the life of a map.
//!
//! Maps use a one-character-per-cell ASCII legend:
//!
//! ```text
//! .  empty      #  wall       A  agent start
//! w  wood       t  toolshed   b  workbench
//! g  grass      f  factory    i  iron
//! d  bridge     x  axe        s  shelter
//! ```

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameError, MarkovGame};
use crate::ltl::{Atom, TruthAssignment};

/// Row, column.
pub type Pos = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Object {
    Wood,
    Toolshed,
    Workbench,
    Grass,
    Factory,
    Iron,
    Bridge,
    Axe,
    Shelter,
}

impl Object {
    pub const ALL: [Object; 9] = [
        Object::Wood,
        Object::Toolshed,
        Object::Workbench,
        Object::Grass,
        Object::Factory,
        Object::Iron,
        Object::Bridge,
        Object::Axe,
        Object::Shelter,
    ];

    pub fn symbol(self) -> char {
        match self {
            Object::Wood => 'w',
            Object::Toolshed => 't',
            Object::Workbench => 'b',
            Object::Grass => 'g',
            Object::Factory => 'f',
            Object::Iron => 'i',
            Object::Bridge => 'd',
            Object::Axe => 'x',
            Object::Shelter => 's',
        }
    }

    pub fn from_symbol(c: char) -> Option<Object> {
        Object::ALL.into_iter().find(|o| o.symbol() == c)
    }

    /// Name of the event atom raised by standing on this object.
    pub fn event(self) -> &'static str {
        match self {
            Object::Wood => "got_wood",
            Object::Toolshed => "used_toolshed",
            Object::Workbench => "used_workbench",
            Object::Grass => "got_grass",
            Object::Factory => "used_factory",
            Object::Iron => "got_iron",
            Object::Bridge => "used_bridge",
            Object::Axe => "used_axe",
            Object::Shelter => "at_shelter",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Wall,
    Object(Object),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("unknown map character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("row {row} has {got} cells, expected {expected}")]
    NotRectangular { row: usize, expected: usize, got: usize },
    #[error("map is empty")]
    Empty,
    #[error("map has {found} agent start cells, {needed} needed")]
    TooFewStarts { needed: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    agent_starts: Vec<Pos>,
    /// Cells of each object type in reading order, indexed by `Object::index`.
    objects: Vec<Vec<Pos>>,
}

/// Parses an ASCII map. Agent starts are numbered in reading order.
/// Trailing whitespace on each line and trailing blank lines are ignored.
pub fn load_map(text: &str) -> Result<GridMap, MapError> {
    let mut rows: Vec<&str> = text.lines().map(str::trim_end).collect();
    while rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(MapError::Empty);
    }
    let width = rows[0].chars().count();
    let mut cells = Vec::with_capacity(width * rows.len());
    let mut agent_starts = Vec::new();
    let mut objects = vec![Vec::new(); Object::ALL.len()];
    for (row, line) in rows.iter().enumerate() {
        let got = line.chars().count();
        if got != width {
            return Err(MapError::NotRectangular { row, expected: width, got });
        }
        for (col, ch) in line.chars().enumerate() {
            let cell = match ch {
                '.' => Cell::Empty,
                '#' => Cell::Wall,
                'A' => {
                    agent_starts.push((row, col));
                    Cell::Empty
                }
                c => match Object::from_symbol(c) {
                    Some(o) => {
                        objects[o.index()].push((row, col));
                        Cell::Object(o)
                    }
                    None => return Err(MapError::UnknownChar { ch, row, col }),
                },
            };
            cells.push(cell);
        }
    }
    Ok(GridMap { width, height: rows.len(), cells, agent_starts, objects })
}

pub fn render_map(map: &GridMap) -> String {
    let mut out = String::with_capacity((map.width + 1) * map.height);
    for row in 0..map.height {
        for col in 0..map.width {
            let ch = if map.agent_starts.contains(&(row, col)) {
                'A'
            } else {
                match map.cell((row, col)) {
                    Cell::Empty => '.',
                    Cell::Wall => '#',
                    Cell::Object(o) => o.symbol(),
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

impl GridMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn agent_starts(&self) -> &[Pos] {
        &self.agent_starts
    }

    pub fn cell(&self, (row, col): Pos) -> Cell {
        self.cells[row * self.width + col]
    }

    pub fn is_open(&self, pos: Pos) -> bool {
        pos.0 < self.height && pos.1 < self.width && self.cell(pos) != Cell::Wall
    }

    pub fn object_cells(&self, o: Object) -> &[Pos] {
        &self.objects[o.index()]
    }

    /// All non-wall cells in reading order.
    pub fn open_cells(&self) -> Vec<Pos> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&p| self.is_open(p))
            .collect()
    }

    /// Closest cell of type `o` by Manhattan distance; ties go to the first
    /// in reading order.
    pub fn nearest(&self, from: Pos, o: Object) -> Option<Pos> {
        self.objects[o.index()]
            .iter()
            .copied()
            .min_by_key(|&p| manhattan(from, p))
    }
}

fn manhattan(a: Pos, b: Pos) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Wait,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Wait];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    fn apply(self, (row, col): Pos) -> Option<Pos> {
        match self {
            Action::Up => Some((row.checked_sub(1)?, col)),
            Action::Down => Some((row + 1, col)),
            Action::Left => Some((row, col.checked_sub(1)?)),
            Action::Right => Some((row, col + 1)),
            Action::Wait => Some((row, col)),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Wait => "wait",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub positions: Vec<Pos>,
    pub step_count: usize,
}

impl WorldState {
    /// Step-count-free key for tabular learners.
    pub fn key(&self) -> Vec<Pos> {
        self.positions.clone()
    }
}

#[derive(Debug, Clone)]
pub struct CraftWorld {
    map: Arc<GridMap>,
    agents: usize,
}

impl CraftWorld {
    pub fn new(map: GridMap, agents: usize) -> Result<Self, MapError> {
        Self::shared(Arc::new(map), agents)
    }

    pub fn shared(map: Arc<GridMap>, agents: usize) -> Result<Self, MapError> {
        if agents == 0 || map.agent_starts.len() < agents {
            return Err(MapError::TooFewStarts { needed: agents.max(1), found: map.agent_starts.len() });
        }
        Ok(CraftWorld { map, agents })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn initial(&self) -> WorldState {
        WorldState { positions: self.map.agent_starts[..self.agents].to_vec(), step_count: 0 }
    }

    /// Moves every agent at once. Blocked moves (walls, edges) become waits.
    /// Contested cells go to an agent that stays put if there is one, and
    /// otherwise to the lowest-indexed claimant; two agents trying to swap
    /// cells both stay. Losers stay and the rules are reapplied until stable.
    pub fn step_world(
        &self,
        w: &WorldState,
        joint: &[Action],
    ) -> Result<(WorldState, TruthAssignment), GameError> {
        if joint.len() != self.agents || w.positions.len() != self.agents {
            return Err(GameError::ActionCount { expected: self.agents, got: joint.len() });
        }
        let cur = &w.positions;
        let mut next: Vec<Pos> = cur
            .iter()
            .zip(joint)
            .map(|(&p, a)| a.apply(p).filter(|&q| self.map.is_open(q)).unwrap_or(p))
            .collect();
        loop {
            let mut revert = vec![false; self.agents];
            for i in 0..self.agents {
                if next[i] == cur[i] {
                    continue;
                }
                for j in 0..self.agents {
                    if i == j {
                        continue;
                    }
                    let swap = next[i] == cur[j] && next[j] == cur[i];
                    let blocked = next[i] == next[j] && (next[j] == cur[j] || j < i);
                    if swap || blocked {
                        revert[i] = true;
                    }
                }
            }
            if !revert.contains(&true) {
                break;
            }
            for (i, r) in revert.into_iter().enumerate() {
                if r {
                    next[i] = cur[i];
                }
            }
        }
        let state = WorldState { positions: next, step_count: w.step_count + 1 };
        let label = self.label_of(&state);
        Ok((state, label))
    }

    pub fn label_of(&self, w: &WorldState) -> TruthAssignment {
        let mut label = TruthAssignment::new();
        for &p in &w.positions {
            if let Cell::Object(o) = self.map.cell(p) {
                label.insert(Atom::new(o.event()).expect("event names are valid atoms"));
            }
        }
        label
    }

    pub fn feature_len(max_dfa_states: usize) -> usize {
        Object::ALL.len() * 2 + 4 + max_dfa_states
    }

    /// Observation vector for one agent: normalised (column, row) offsets to
    /// the nearest cell of each object type (zeros if the type is absent),
    /// the agent's own normalised position, the normalised offset to the next
    /// agent (zeros when alone), and a one-hot of `dfa_state` over
    /// `max_dfa_states` slots (all zeros if out of range).
    pub fn features(
        &self,
        w: &WorldState,
        agent: usize,
        dfa_state: usize,
        max_dfa_states: usize,
    ) -> Vec<f64> {
        let (wd, ht) = (self.map.width as f64, self.map.height as f64);
        let offset = |from: Pos, to: Pos| {
            ((to.1 as f64 - from.1 as f64) / wd, (to.0 as f64 - from.0 as f64) / ht)
        };
        let me = w.positions[agent];
        let mut x = Vec::with_capacity(Self::feature_len(max_dfa_states));
        for o in Object::ALL {
            let (dx, dy) = self.map.nearest(me, o).map_or((0.0, 0.0), |p| offset(me, p));
            x.push(dx);
            x.push(dy);
        }
        x.push(me.1 as f64 / wd);
        x.push(me.0 as f64 / ht);
        let (dx, dy) = if w.positions.len() > 1 {
            offset(me, w.positions[(agent + 1) % w.positions.len()])
        } else {
            (0.0, 0.0)
        };
        x.push(dx);
        x.push(dy);
        x.extend((0..max_dfa_states).map(|q| if q == dfa_state { 1.0 } else { 0.0 }));
        x
    }
}

impl MarkovGame for CraftWorld {
    type State = WorldState;

    fn num_agents(&self) -> usize {
        self.agents
    }

    fn num_actions(&self, _agent: usize) -> usize {
        Action::ALL.len()
    }

    fn initial_state(&self) -> WorldState {
        self.initial()
    }

    fn step(&self, state: &WorldState, joint: &[usize]) -> Result<WorldState, GameError> {
        let actions = joint
            .iter()
            .enumerate()
            .map(|(agent, &a)| Action::from_index(a).ok_or(GameError::InvalidAction { agent, action: a }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.step_world(state, &actions)?.0)
    }

    fn label(&self, state: &WorldState) -> TruthAssignment {
        self.label_of(state)
    }
}

/// Bundled maps.
pub mod maps {
    /// 5×5 map with wood and a workbench, two start cells.
    pub const MICRO: &str = "\
#####
#A.w#
#...#
#b.A#
#####
";

    /// 7×7 map holding every object type, one start cell.
    pub const SINGLE: &str = "\
#######
#A.w.t#
#.g..b#
#i...f#
#b.x.w#
#s.d.g#
#######
";

    /// [`SINGLE`] with a second start cell near the opposite corner.
    pub const DUAL: &str = "\
#######
#A.w.t#
#.g..b#
#i...f#
#b.x.w#
#s.dAg#
#######
";

    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "micro" => Some(MICRO),
            "single" => Some(SINGLE),
            "dual" => Some(DUAL),
            _ => None,
        }
    }
}
