use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hexfloat;

/// A regression tree node. Samples with `x[feature] < threshold` go left,
/// everything else (including equality) goes right.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Training samples that reached this node.
        cover: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf(value: f64, n_samples: usize) -> Self {
        TreeNode::Leaf { value, n_samples }
    }

    pub fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        let cover = left.cover() + right.cover();
        TreeNode::Split {
            feature,
            threshold,
            cover,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn cover(&self) -> usize {
        match self {
            TreeNode::Leaf { n_samples, .. } => *n_samples,
            TreeNode::Split { cover, .. } => *cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Unchecked prediction; `x` must be at least as wide as the largest
    /// feature index in the tree.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => Some(
                (*feature)
                    .max(left.max_feature_index().unwrap_or(0))
                    .max(right.max_feature_index().unwrap_or(0)),
            ),
        }
    }

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { left, right, .. } => {
                let (wl, wr) = self.child_weights();
                wl * left.expected_value() + wr * right.expected_value()
            }
        }
    }

    /// Fraction of this node's cover that went to the left and right child.
    /// A node that saw no samples (possible in oblivious trees) splits its
    /// weight evenly.
    pub fn child_weights(&self) -> (f64, f64) {
        match self {
            TreeNode::Leaf { .. } => (0.0, 0.0),
            TreeNode::Split {
                cover, left, right, ..
            } => {
                if *cover == 0 {
                    (0.5, 0.5)
                } else {
                    let c = *cover as f64;
                    (left.cover() as f64 / c, right.cover() as f64 / c)
                }
            }
        }
    }

    /// (feature, threshold) pairs per depth level, `None` where the level
    /// mixes leaves and splits or uses more than one test.
    pub fn level_tests(&self) -> Vec<Option<(usize, f64)>> {
        let mut out = Vec::new();
        let mut level = vec![self];
        while !level.is_empty() {
            let mut next = Vec::new();
            let mut test: Option<Option<(usize, f64)>> = None;
            let mut all_leaves = true;
            for node in &level {
                match node {
                    TreeNode::Leaf { .. } => {
                        test = Some(None);
                    }
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => {
                        all_leaves = false;
                        let this = Some((*feature, *threshold));
                        test = match test {
                            None => Some(this),
                            Some(prev) if prev.map(|p| (p.0, p.1.to_bits()))
                                == this.map(|p| (p.0, p.1.to_bits())) =>
                            {
                                Some(prev)
                            }
                            Some(_) => Some(None),
                        };
                        next.push(left.as_ref());
                        next.push(right.as_ref());
                    }
                }
            }
            if all_leaves {
                break;
            }
            out.push(test.flatten());
            level = next;
        }
        out
    }
}

impl Serialize for TreeNode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TreeNode::Leaf { value, n_samples } => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("value", &hexfloat::format(*value))?;
                m.serialize_entry("n_samples", n_samples)?;
                m.end()
            }
            TreeNode::Split {
                feature,
                threshold,
                cover,
                left,
                right,
            } => {
                let mut m = s.serialize_map(Some(5))?;
                m.serialize_entry("feature", feature)?;
                m.serialize_entry("threshold", &hexfloat::format(*threshold))?;
                m.serialize_entry("cover", cover)?;
                m.serialize_entry("left", left)?;
                m.serialize_entry("right", right)?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for TreeNode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_map(NodeVisitor)
    }
}

struct NodeVisitor;

impl<'de> Visitor<'de> for NodeVisitor {
    type Value = TreeNode;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a tree node object (leaf or split)")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<TreeNode, A::Error> {
        let mut value = None;
        let mut n_samples = None;
        let mut feature = None;
        let mut threshold = None;
        let mut cover = None;
        let mut left: Option<TreeNode> = None;
        let mut right: Option<TreeNode> = None;
        while let Some(key) = map.next_key::<std::borrow::Cow<str>>()? {
            match key.as_ref() {
                "value" => value = Some(read_hex(map.next_value::<std::borrow::Cow<str>>()?)?),
                "n_samples" => n_samples = Some(map.next_value::<usize>()?),
                "feature" => feature = Some(map.next_value::<usize>()?),
                "threshold" => {
                    threshold = Some(read_hex(map.next_value::<std::borrow::Cow<str>>()?)?)
                }
                "cover" => cover = Some(map.next_value::<usize>()?),
                "left" => left = Some(map.next_value()?),
                "right" => right = Some(map.next_value()?),
                other => return Err(de::Error::unknown_field(other, FIELDS)),
            }
        }
        match (value, n_samples, feature, threshold, cover, left, right) {
            (Some(value), Some(n_samples), None, None, None, None, None) => {
                Ok(TreeNode::Leaf { value, n_samples })
            }
            (None, None, Some(feature), Some(threshold), Some(cover), Some(left), Some(right)) => {
                if left.cover().checked_add(right.cover()) != Some(cover) {
                    return Err(de::Error::custom("split cover does not equal the sum of its children"));
                }
                Ok(TreeNode::Split {
                    feature,
                    threshold,
                    cover,
                    left: Box::new(left),
                    right: Box::new(right),
                })
            }
            _ => Err(de::Error::custom(
                "node must have exactly {value, n_samples} or {feature, threshold, cover, left, right}",
            )),
        }
    }
}

const FIELDS: &[&str] = &["value", "n_samples", "feature", "threshold", "cover", "left", "right"];

fn read_hex<E: de::Error>(text: std::borrow::Cow<str>) -> Result<f64, E> {
    hexfloat::parse(&text).map_err(E::custom)
}
