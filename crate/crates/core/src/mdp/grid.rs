//! Deterministic gridworlds built from ASCII layouts.
//!
//! Layout characters: `#` wall, `.` free cell, `G` the goal. States are the
//! non-wall cells numbered in row-major order. Actions are up, down, left,
//! right; a move into a wall (or off the grid) leaves the agent in place.
//! The goal is absorbing and pays reward 1 for every action taken from it;
//! every other reward is 0. Discount is [`GRID_GAMMA`].

use alloc::vec;
use alloc::vec::Vec;

use super::FiniteMdp;

pub const GRID_GAMMA: f64 = 0.9;

/// The four-rooms layout: a 13×13 grid whose outer ring and interior walls
/// leave 104 free cells, with the goal in the corner of the bottom-right room.
pub const FOUR_ROOMS_LAYOUT: &str = "\
#############
#.....#.....#
#.....#.....#
#...........#
#.....#.....#
#.....#.....#
##.####.....#
#.....###.###
#.....#.....#
#.....#.....#
#...........#
#.....#....G#
#############";

/// Two 5×5 rooms mirrored across a wall with a single central doorway; the
/// goal sits in the far corner of the right room. 51 free cells.
pub const MIRRORED_ROOMS_LAYOUT: &str = "\
#############
#.....#.....#
#.....#.....#
#...........#
#.....#.....#
#.....#....G#
#############";

/// A 10×10 open grid with a horizontal barrier across most of the middle
/// row, leaving a gap at the right edge; the goal is the top-right corner.
/// 92 free cells.
pub const DAYAN_GRID_LAYOUT: &str = "\
############
#.........G#
#..........#
#..........#
#..........#
#..........#
#########..#
#..........#
#..........#
#..........#
#..........#
############";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];

    fn delta(self) -> (isize, isize) {
        match self {
            GridAction::Up => (-1, 0),
            GridAction::Down => (1, 0),
            GridAction::Left => (0, -1),
            GridAction::Right => (0, 1),
        }
    }
}

/// A gridworld MDP together with the cell coordinates of each state.
#[derive(Clone, Debug)]
pub struct GridWorld {
    pub mdp: FiniteMdp,
    /// `(row, col)` of each state.
    pub cells: Vec<(usize, usize)>,
    pub goal: usize,
    walls: Vec<Vec<bool>>,
}

impl GridWorld {
    /// Parses a layout. Panics on a malformed fixture (ragged rows, no goal,
    /// several goals), which only the embedded constants can reach.
    pub fn from_layout(layout: &str) -> Self {
        let grid: Vec<Vec<u8>> = layout.lines().map(|l| l.trim_end().bytes().collect()).collect();
        let width = grid[0].len();
        assert!(grid.iter().all(|r| r.len() == width), "ragged layout");
        let walls: Vec<Vec<bool>> = grid.iter().map(|r| r.iter().map(|&c| c == b'#').collect()).collect();
        let mut cells = Vec::new();
        let mut index = vec![vec![usize::MAX; width]; grid.len()];
        let mut goal = None;
        for (i, row) in grid.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                match c {
                    b'#' => {}
                    b'.' | b'G' => {
                        if c == b'G' {
                            assert!(goal.is_none(), "layout has more than one goal");
                            goal = Some(cells.len());
                        }
                        index[i][j] = cells.len();
                        cells.push((i, j));
                    }
                    other => panic!("unknown layout character {:?}", other as char),
                }
            }
        }
        let goal = goal.expect("layout has no goal");
        let n = cells.len();
        let n_actions = GridAction::ALL.len();
        let mut transitions = vec![0.0; n * n_actions * n];
        let mut rewards = vec![0.0; n * n_actions];
        for (s, &(i, j)) in cells.iter().enumerate() {
            for action in GridAction::ALL {
                let a = action as usize;
                let next = if s == goal {
                    s
                } else {
                    let (di, dj) = action.delta();
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    let inside = ni >= 0 && nj >= 0 && (ni as usize) < grid.len() && (nj as usize) < width;
                    if inside && !walls[ni as usize][nj as usize] {
                        index[ni as usize][nj as usize]
                    } else {
                        s
                    }
                };
                transitions[(s * n_actions + a) * n + next] = 1.0;
                if s == goal {
                    rewards[s * n_actions + a] = 1.0;
                }
            }
        }
        let mdp =
            FiniteMdp::new(n, n_actions, transitions, rewards, GRID_GAMMA).expect("grid layouts produce valid MDPs");
        Self {
            mdp,
            cells,
            goal,
            walls,
        }
    }

    pub fn is_wall(&self, row: isize, col: isize) -> bool {
        if row < 0 || col < 0 {
            return true;
        }
        self.walls
            .get(row as usize)
            .and_then(|r| r.get(col as usize))
            .copied()
            .unwrap_or(true)
    }

    /// True when `action` from `state` would hit a wall.
    pub fn blocked(&self, state: usize, action: GridAction) -> bool {
        let (i, j) = self.cells[state];
        let (di, dj) = action.delta();
        self.is_wall(i as isize + di, j as isize + dj)
    }
}

pub fn build_four_rooms() -> FiniteMdp {
    GridWorld::from_layout(FOUR_ROOMS_LAYOUT).mdp
}

pub fn build_mirrored_rooms() -> FiniteMdp {
    GridWorld::from_layout(MIRRORED_ROOMS_LAYOUT).mdp
}

pub fn build_dayan_grid() -> FiniteMdp {
    GridWorld::from_layout(DAYAN_GRID_LAYOUT).mdp
}
