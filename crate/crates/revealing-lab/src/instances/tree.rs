//! Level-`n` binary navigation tree shared by the hard-instance families,
//! plus the periodic reveal-step schedule.
//!
//! The tree has `2^n − 1` nodes stored in heap order (root `0`, children of
//! `i` at `2i+1`/`2i+2`), so the leaves are the last `2^{n−1}` indices and
//! sit at depth `n − 1`. Navigation actions: `0` (`wait`) stays put, `1`
//! descends to the left child, `2` to the right child, and every other
//! action behaves like `wait` at internal nodes. Leaves treat non-`wait`
//! actions as exit-lottery triggers, so that case lives with each family
//! builder rather than here.

use serde::{Deserialize, Serialize};

/// Complete binary tree with `level ≥ 1` levels; a single root-leaf for
/// `level == 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryTree {
    pub level: usize,
}

/// Tree-navigation action indices.
pub const WAIT: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;

impl BinaryTree {
    pub fn new(level: usize) -> Self {
        assert!(level >= 1, "tree needs at least one level");
        BinaryTree { level }
    }

    pub fn node_count(self) -> usize {
        (1usize << self.level) - 1
    }

    pub fn leaf_count(self) -> usize {
        1usize << (self.level - 1)
    }

    pub fn first_leaf(self) -> usize {
        (1usize << (self.level - 1)) - 1
    }

    pub fn is_leaf(self, node: usize) -> bool {
        node >= self.first_leaf()
    }

    pub fn leaves(self) -> std::ops::Range<usize> {
        self.first_leaf()..self.node_count()
    }

    pub fn left(self, node: usize) -> usize {
        2 * node + 1
    }

    pub fn right(self, node: usize) -> usize {
        2 * node + 2
    }

    /// Depth of `node` (root has depth 0, leaves depth `level − 1`).
    pub fn depth(self, node: usize) -> usize {
        (node + 1).ilog2() as usize
    }

    /// Root-to-node turn sequence, `false` = left child, `true` = right.
    pub fn path_bits(self, node: usize) -> Vec<bool> {
        let mut bits = Vec::with_capacity(self.depth(node));
        let mut cur = node;
        while cur > 0 {
            let parent = (cur - 1) / 2;
            bits.push(cur == 2 * parent + 2);
            cur = parent;
        }
        bits.reverse();
        bits
    }

    /// Stable display label: `tree:root` for the root, otherwise `tree:` plus
    /// the turn bits (`0` left, `1` right), e.g. `tree:01`.
    pub fn label(self, node: usize) -> String {
        if node == 0 {
            return "tree:root".into();
        }
        let bits: String = self
            .path_bits(node)
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        format!("tree:{bits}")
    }

    /// Actions that drive the root to `node`, one tree edge per step.
    pub fn path_actions(self, node: usize) -> Vec<usize> {
        self.path_bits(node)
            .iter()
            .map(|&b| if b { RIGHT } else { LEFT })
            .collect()
    }

    /// Transition row for a tree state under the stay/descend/alias rules.
    /// `n_states` is the full model state count (tree states come first).
    pub(crate) fn transition_row(self, node: usize, action: usize, n_states: usize) -> Vec<f64> {
        let target = if self.is_leaf(node) {
            debug_assert_eq!(action, WAIT, "leaf exits are family-specific");
            node
        } else {
            match action {
                LEFT => self.left(node),
                RIGHT => self.right(node),
                _ => node,
            }
        };
        let mut row = vec![0.0; n_states];
        row[target] = 1.0;
        row
    }
}

/// The 0-based steps `{n−1+l·s : l ≥ 0}` at which the lock states accept the
/// reveal action, clipped to steps that still have a transition
/// (`≤ horizon−2`). `n` is the tree level, `s` the stride between reveal
/// opportunities; the first opportunity is the earliest step a leaf exit can
/// land in a lock state.
pub fn reveal_schedule(tree_level: usize, stride: usize, horizon: usize) -> Vec<usize> {
    assert!(stride >= 1 && tree_level >= 1);
    (0..)
        .map(|l| tree_level - 1 + l * stride)
        .take_while(|&g| g + 2 <= horizon)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_layout_and_labels() {
        let t = BinaryTree::new(3);
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.leaves().collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert_eq!(t.label(0), "tree:root");
        assert_eq!(t.label(1), "tree:0");
        assert_eq!(t.label(6), "tree:11");
        assert_eq!(t.depth(6), 2);
        assert_eq!(t.path_actions(5), vec![RIGHT, LEFT]);
    }

    #[test]
    fn single_level_tree_is_one_leaf() {
        let t = BinaryTree::new(1);
        assert_eq!(t.node_count(), 1);
        assert!(t.is_leaf(0));
        assert_eq!(t.path_actions(0), Vec::<usize>::new());
    }

    #[test]
    fn internal_rows_stay_or_descend() {
        let t = BinaryTree::new(2);
        assert_eq!(t.transition_row(0, WAIT, 4), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.transition_row(0, LEFT, 4), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.transition_row(0, RIGHT, 4), vec![0.0, 0.0, 1.0, 0.0]);
        // Actions past `right` alias `wait` at internal nodes.
        assert_eq!(t.transition_row(0, 3, 4), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn schedule_steps_every_stride() {
        // Level 3 tree: first leaf arrival at step 2; stride 2, horizon 9
        // (transitions at steps 0..=7).
        assert_eq!(reveal_schedule(3, 2, 9), vec![2, 4, 6]);
        assert_eq!(reveal_schedule(1, 1, 4), vec![0, 1, 2]);
        // No room for any opportunity when the horizon is too short.
        assert_eq!(reveal_schedule(4, 1, 3), Vec::<usize>::new());
    }
}
