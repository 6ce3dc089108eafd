use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

use super::MAX_DEPTH;

/// Unused child slot.
pub const EMPTY_SLOT: u32 = u32::MAX;
/// Marks a child slot that holds a leaf index rather than a node index.
pub const LEAF_FLAG: u32 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    Empty,
    Node(u32),
    Leaf(u32),
}

impl Child {
    #[inline]
    pub fn decode(slot: u32) -> Child {
        if slot == EMPTY_SLOT {
            Child::Empty
        } else if slot & LEAF_FLAG != 0 {
            Child::Leaf(slot & !LEAF_FLAG)
        } else {
            Child::Node(slot)
        }
    }
}

/// Integer coordinates of a max-depth voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelCoord {
    pub x: u16,
    pub y: u16,
    pub z: u16,
}

impl VoxelCoord {
    pub const fn new(x: u16, y: u16, z: u16) -> Self {
        VoxelCoord { x, y, z }
    }

    /// Interleaves `x`, `y`, `z` bits; the top three bits select the root slot.
    pub fn morton(self) -> u64 {
        let mut code = 0u64;
        for b in 0..16 {
            code |= (((self.x >> b) & 1) as u64) << (3 * b);
            code |= (((self.y >> b) & 1) as u64) << (3 * b + 1);
            code |= (((self.z >> b) & 1) as u64) << (3 * b + 2);
        }
        code
    }

    pub fn from_morton(code: u64) -> Self {
        let (mut x, mut y, mut z) = (0u16, 0u16, 0u16);
        for b in 0..16 {
            x |= (((code >> (3 * b)) & 1) as u16) << b;
            y |= (((code >> (3 * b + 1)) & 1) as u16) << b;
            z |= (((code >> (3 * b + 2)) & 1) as u16) << b;
        }
        VoxelCoord { x, y, z }
    }
}

/// Breadth-first node table with 8 child slots per node. Leaves exist only at
/// `max_depth` and are numbered in Morton order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Structure {
    max_depth: u32,
    nodes: Vec<[u32; 8]>,
    leaf_codes: Vec<u64>,
}

impl Structure {
    pub fn empty(max_depth: u32) -> Result<Self> {
        Self::from_sorted_codes(max_depth, Vec::new())
    }

    /// Builds the tree for a sorted, duplicate-free list of Morton codes.
    pub fn from_sorted_codes(max_depth: u32, codes: Vec<u64>) -> Result<Self> {
        if max_depth == 0 || max_depth > MAX_DEPTH {
            return Err(invalid(alloc::format!("max_depth {max_depth} outside [1, {MAX_DEPTH}]")));
        }
        let limit = 1u64 << (3 * max_depth);
        if codes.windows(2).any(|w| w[0] >= w[1]) || codes.last().is_some_and(|&c| c >= limit) {
            return Err(invalid("leaf codes must be sorted, unique and inside the tree"));
        }
        let depth = max_depth as usize;
        // prefixes[l] holds the distinct level-l ancestors, sorted.
        let mut prefixes: Vec<Vec<u64>> = vec![Vec::new(); depth + 1];
        prefixes[depth] = codes.clone();
        for l in (0..depth).rev() {
            let mut level: Vec<u64> = prefixes[l + 1].iter().map(|c| c >> 3).collect();
            level.dedup();
            prefixes[l] = level;
        }
        if prefixes[0].is_empty() {
            prefixes[0].push(0);
        }
        let mut offsets = vec![0usize; depth + 1];
        for l in 1..depth {
            offsets[l] = offsets[l - 1] + prefixes[l - 1].len();
        }
        let node_count = offsets[depth - 1] + prefixes[depth - 1].len();
        let mut nodes = vec![[EMPTY_SLOT; 8]; node_count];
        for l in 1..=depth {
            let parents = &prefixes[l - 1];
            let mut parent_rank = 0usize;
            for (rank, &p) in prefixes[l].iter().enumerate() {
                while parents[parent_rank] != p >> 3 {
                    parent_rank += 1;
                }
                let value = if l == depth { LEAF_FLAG | rank as u32 } else { (offsets[l] + rank) as u32 };
                nodes[offsets[l - 1] + parent_rank][(p & 7) as usize] = value;
            }
        }
        Ok(Structure { max_depth, nodes, leaf_codes: codes })
    }

    /// Validates a serialized node table and recovers leaf coordinates.
    pub fn from_nodes(max_depth: u32, nodes: Vec<[u32; 8]>, leaf_count: usize) -> Result<Self> {
        if max_depth == 0 || max_depth > MAX_DEPTH {
            return Err(invalid(alloc::format!("max_depth {max_depth} outside [1, {MAX_DEPTH}]")));
        }
        if nodes.is_empty() {
            return Err(Error::Data("node table is empty".into()));
        }
        let bad = |msg: &str| Error::Data(alloc::format!("malformed node table: {msg}"));
        // Walk in breadth-first order and require the table to be laid out in
        // exactly that order.
        let mut depth_of = vec![0u32; nodes.len()];
        let mut prefix_of = vec![0u64; nodes.len()];
        let mut next_node = 1usize;
        let mut leaf_codes = Vec::with_capacity(leaf_count);
        for idx in 0..nodes.len() {
            if idx >= next_node {
                return Err(bad("unreachable node"));
            }
            let depth = depth_of[idx];
            let mut any = false;
            for (slot, &raw) in nodes[idx].iter().enumerate() {
                let code = (prefix_of[idx] << 3) | slot as u64;
                match Child::decode(raw) {
                    Child::Empty => {}
                    Child::Node(n) => {
                        any = true;
                        if depth + 1 >= max_depth {
                            return Err(bad("internal node below leaf level"));
                        }
                        if n as usize != next_node || next_node >= nodes.len() {
                            return Err(bad("node order is not breadth-first"));
                        }
                        depth_of[next_node] = depth + 1;
                        prefix_of[next_node] = code;
                        next_node += 1;
                    }
                    Child::Leaf(l) => {
                        any = true;
                        if depth + 1 != max_depth {
                            return Err(bad("leaf above max depth"));
                        }
                        if l as usize != leaf_codes.len() {
                            return Err(bad("leaf indices out of order"));
                        }
                        leaf_codes.push(code);
                    }
                }
            }
            if !any && idx != 0 {
                return Err(bad("empty internal node"));
            }
        }
        if next_node != nodes.len() {
            return Err(bad("dangling node"));
        }
        if leaf_codes.len() != leaf_count {
            return Err(bad("leaf count mismatch"));
        }
        Ok(Structure { max_depth, nodes, leaf_codes })
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn nodes(&self) -> &[[u32; 8]] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_codes.len()
    }

    /// Leaf Morton codes, ascending and indexed by leaf id.
    pub fn leaf_codes(&self) -> &[u64] {
        &self.leaf_codes
    }

    pub fn leaf_coord(&self, leaf: u32) -> VoxelCoord {
        VoxelCoord::from_morton(self.leaf_codes[leaf as usize])
    }

    pub fn leaf_index(&self, coord: VoxelCoord) -> Option<u32> {
        self.leaf_codes.binary_search(&coord.morton()).ok().map(|i| i as u32)
    }

    /// Walks the node table from the root, independent of the code list.
    pub fn lookup(&self, coord: VoxelCoord) -> Option<u32> {
        let code = coord.morton();
        let mut node = 0usize;
        for level in 0..self.max_depth {
            let slot = ((code >> (3 * (self.max_depth - 1 - level))) & 7) as usize;
            match Child::decode(self.nodes[node][slot]) {
                Child::Empty => return None,
                Child::Node(n) => node = n as usize,
                Child::Leaf(l) => return Some(l),
            }
        }
        None
    }
}
