//! Exhaustive solvability oracle over exact rationals.

use std::collections::BTreeSet;

use super::expr::{ExprNode, Op, Rational};
use super::solution::TARGET;

/// Binary-tree shapes over four ordered leaves `a b c d`.
#[derive(Debug, Clone, Copy)]
enum Shape {
    LeftDeep,     // ((a b) c) d
    LeftInner,    // (a (b c)) d
    Balanced,     // (a b) (c d)
    RightInner,   // a ((b c) d)
    RightDeep,    // a (b (c d))
}

const SHAPES: [Shape; 5] = [
    Shape::LeftDeep,
    Shape::LeftInner,
    Shape::Balanced,
    Shape::RightInner,
    Shape::RightDeep,
];

fn build(shape: Shape, v: [Rational; 4], ops: [Op; 3]) -> ExprNode {
    let leaf = |i: usize| ExprNode::Leaf(v[i]);
    let [o1, o2, o3] = ops;
    match shape {
        Shape::LeftDeep => ExprNode::node(o3, ExprNode::node(o2, ExprNode::node(o1, leaf(0), leaf(1)), leaf(2)), leaf(3)),
        Shape::LeftInner => ExprNode::node(o3, ExprNode::node(o1, leaf(0), ExprNode::node(o2, leaf(1), leaf(2))), leaf(3)),
        Shape::Balanced => ExprNode::node(o2, ExprNode::node(o1, leaf(0), leaf(1)), ExprNode::node(o3, leaf(2), leaf(3))),
        Shape::RightInner => ExprNode::node(o1, leaf(0), ExprNode::node(o3, ExprNode::node(o2, leaf(1), leaf(2)), leaf(3))),
        Shape::RightDeep => ExprNode::node(o1, leaf(0), ExprNode::node(o2, leaf(1), ExprNode::node(o3, leaf(2), leaf(3)))),
    }
}

fn distinct_orderings(values: [Rational; 4]) -> Vec<[Rational; 4]> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a == b || a == c || a == d || b == c || b == d || c == d {
                        continue;
                    }
                    let order = [values[a], values[b], values[c], values[d]];
                    if seen.insert(order) {
                        out.push(order);
                    }
                }
            }
        }
    }
    out
}

/// Searches every tree shape, distinct leaf ordering and operator assignment.
/// Returns the first expression (in a fixed enumeration order) that equals
/// exactly 24; branches that divide by zero are skipped.
pub fn solvable_oracle(inputs: [Rational; 4]) -> Option<ExprNode> {
    let target = Rational::from_integer(TARGET);
    for order in distinct_orderings(inputs) {
        for shape in SHAPES {
            for o1 in Op::ALL {
                for o2 in Op::ALL {
                    for o3 in Op::ALL {
                        let expr = build(shape, order, [o1, o2, o3]);
                        if expr.eval() == Ok(target) {
                            return Some(expr);
                        }
                    }
                }
            }
        }
    }
    None
}

pub fn solvable_ints(inputs: [i64; 4]) -> Option<ExprNode> {
    solvable_oracle(inputs.map(Rational::from_integer))
}

/// Whether any combination of `values` (each used once, any number of values)
/// reaches `target`. Used to judge intermediate `left:` multisets.
pub fn reachable(values: &[Rational], target: Rational) -> bool {
    match values.len() {
        0 => false,
        1 => values[0] == target,
        n => {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let rest: Vec<Rational> = values
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != i && *k != j)
                        .map(|(_, v)| *v)
                        .collect();
                    for op in Op::ALL {
                        // commutative ops only need one ordering
                        if matches!(op, Op::Add | Op::Mul) && j < i {
                            continue;
                        }
                        if let Ok(v) = op.apply(values[i], values[j]) {
                            let mut next = rest.clone();
                            next.push(v);
                            if reachable(&next, target) {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        }
    }
}
