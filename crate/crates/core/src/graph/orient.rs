//! Orientation rules for PAGs without selection variables.
//!
//! Unshielded colliders are oriented first, then R1-R4 and R8-R10 are applied
//! to a fixpoint. Rules scan nodes in ascending index order.

use std::collections::VecDeque;

use super::{Mark, Pag};

/// Source of collider decisions: a known MAG, or separating sets from
/// conditional independence tests.
pub trait ColliderOracle {
    /// Whether `b` is a collider on the unshielded triple `a *-* b *-* c`.
    fn unshielded_collider(&self, a: usize, b: usize, c: usize) -> bool;

    /// Whether `b` is a collider on a discriminating path
    /// `<x, ..., a, b, c>` for `b`.
    fn discriminated_collider(&self, x: usize, a: usize, b: usize, c: usize) -> bool;
}

pub fn orient_pag(pag: &mut Pag, oracle: &impl ColliderOracle) {
    orient_unshielded_colliders(pag, oracle);
    propagate(pag, oracle);
}

pub(crate) fn orient_unshielded_colliders(pag: &mut Pag, oracle: &impl ColliderOracle) {
    let d = pag.d();
    // Decisions are taken on the unoriented skeleton, then applied together.
    let mut colliders = Vec::new();
    for b in 0..d {
        let nb = pag.neighbors(b);
        for (ia, &a) in nb.iter().enumerate() {
            for &c in &nb[ia + 1..] {
                if !pag.adjacent(a, c) && oracle.unshielded_collider(a, b, c) {
                    colliders.push((a, b, c));
                }
            }
        }
    }
    for (a, b, c) in colliders {
        pag.set(a, b, Mark::Arrow);
        pag.set(c, b, Mark::Arrow);
    }
}

pub(crate) fn propagate(pag: &mut Pag, oracle: &impl ColliderOracle) {
    loop {
        let mut changed = false;
        changed |= rule1(pag);
        changed |= rule2(pag);
        changed |= rule3(pag);
        changed |= rule4(pag, oracle);
        changed |= rule8(pag);
        changed |= rule9(pag);
        changed |= rule10(pag);
        if !changed {
            break;
        }
    }
}

/// `a *-> b o-* c`, `a` and `c` non-adjacent: orient `b -> c`.
fn rule1(pag: &mut Pag) -> bool {
    let d = pag.d();
    let mut changed = false;
    for b in 0..d {
        for a in 0..d {
            if !pag.adjacent(a, b) || pag.mark(a, b) != Mark::Arrow {
                continue;
            }
            for c in 0..d {
                if c == a || !pag.adjacent(b, c) || pag.adjacent(a, c) {
                    continue;
                }
                if pag.mark(c, b) == Mark::Circle {
                    pag.set(c, b, Mark::Tail);
                    pag.set(b, c, Mark::Arrow);
                    changed = true;
                }
            }
        }
    }
    changed
}

/// `a -> b *-> c` or `a *-> b -> c`, with `a *-o c`: orient `a *-> c`.
fn rule2(pag: &mut Pag) -> bool {
    let d = pag.d();
    let mut changed = false;
    for a in 0..d {
        for c in 0..d {
            if !pag.adjacent(a, c) || pag.mark(a, c) != Mark::Circle {
                continue;
            }
            let fires = (0..d).any(|b| {
                b != a
                    && b != c
                    && pag.adjacent(a, b)
                    && pag.adjacent(b, c)
                    && ((pag.is_parent(a, b) && pag.mark(b, c) == Mark::Arrow)
                        || (pag.mark(a, b) == Mark::Arrow && pag.is_parent(b, c)))
            });
            if fires {
                pag.set(a, c, Mark::Arrow);
                changed = true;
            }
        }
    }
    changed
}

/// `a *-> b <-* c`, `a *-o t o-* c`, `a`, `c` non-adjacent, `t *-o b`:
/// orient `t *-> b`.
fn rule3(pag: &mut Pag) -> bool {
    let d = pag.d();
    let mut changed = false;
    for b in 0..d {
        for t in 0..d {
            if !pag.adjacent(t, b) || pag.mark(t, b) != Mark::Circle {
                continue;
            }
            let mut fires = false;
            'outer: for a in 0..d {
                if a == t || !pag.adjacent(a, b) || pag.mark(a, b) != Mark::Arrow {
                    continue;
                }
                if !pag.adjacent(a, t) || pag.mark(a, t) != Mark::Circle {
                    continue;
                }
                for c in (a + 1)..d {
                    if c == t || !pag.adjacent(c, b) || pag.mark(c, b) != Mark::Arrow {
                        continue;
                    }
                    if pag.adjacent(a, c) || !pag.adjacent(c, t) || pag.mark(c, t) != Mark::Circle {
                        continue;
                    }
                    fires = true;
                    break 'outer;
                }
            }
            if fires {
                pag.set(t, b, Mark::Arrow);
                changed = true;
            }
        }
    }
    changed
}

/// Discriminating paths `<x, ..., a, b, c>` for `b` with `b o-* c`.
fn rule4(pag: &mut Pag, oracle: &impl ColliderOracle) -> bool {
    let d = pag.d();
    let mut changed = false;
    for c in 0..d {
        for b in 0..d {
            if !pag.adjacent(b, c) || pag.mark(c, b) != Mark::Circle {
                continue;
            }
            let Some((x, a)) = find_discriminating_path(pag, b, c) else {
                continue;
            };
            if oracle.discriminated_collider(x, a, b, c) {
                pag.set(a, b, Mark::Arrow);
                pag.set(c, b, Mark::Arrow);
                pag.set(b, c, Mark::Arrow);
            } else {
                pag.set(c, b, Mark::Tail);
                pag.set(b, c, Mark::Arrow);
            }
            changed = true;
        }
    }
    changed
}

/// Returns the far endpoint `x` and the node `a` adjacent to `b` on a
/// shortest discriminating path for `b` ending at `c`.
fn find_discriminating_path(pag: &Pag, b: usize, c: usize) -> Option<(usize, usize)> {
    let d = pag.d();
    for a in 0..d {
        if a == c || !pag.adjacent(a, b) || pag.mark(b, a) != Mark::Arrow || !pag.is_parent(a, c) {
            continue;
        }
        // Breadth-first over colliders that are parents of c.
        let mut visited = vec![false; d];
        visited[a] = true;
        visited[b] = true;
        visited[c] = true;
        let mut queue = VecDeque::from([a]);
        while let Some(v) = queue.pop_front() {
            for w in 0..d {
                if visited[w] || !pag.adjacent(w, v) || pag.mark(w, v) != Mark::Arrow {
                    continue;
                }
                if !pag.adjacent(w, c) {
                    return Some((w, a));
                }
                if pag.mark(v, w) == Mark::Arrow && pag.is_parent(w, c) {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    None
}

/// `a -> b -> c` or `a -o b -> c`, with `a o-> c`: orient `a -> c`.
fn rule8(pag: &mut Pag) -> bool {
    let d = pag.d();
    let mut changed = false;
    for a in 0..d {
        for c in 0..d {
            if !is_circle_arrow(pag, a, c) {
                continue;
            }
            let fires = (0..d).any(|b| {
                b != a
                    && b != c
                    && pag.adjacent(a, b)
                    && pag.mark(b, a) == Mark::Tail
                    && matches!(pag.mark(a, b), Mark::Arrow | Mark::Circle)
                    && pag.is_parent(b, c)
            });
            if fires {
                pag.set(c, a, Mark::Tail);
                changed = true;
            }
        }
    }
    changed
}

/// `a o-> c` with an uncovered potentially directed path `<a, b, ..., c>`
/// where `b` and `c` are non-adjacent: orient `a -> c`.
fn rule9(pag: &mut Pag) -> bool {
    let d = pag.d();
    let mut changed = false;
    for a in 0..d {
        for c in 0..d {
            if !is_circle_arrow(pag, a, c) {
                continue;
            }
            let fires = (0..d).any(|b| {
                b != c
                    && pag.adjacent(a, b)
                    && !pag.adjacent(b, c)
                    && potentially_directed(pag, a, b)
                    && uncovered_pd_reach(pag, a, b, c, usize::MAX)
            });
            if fires {
                pag.set(c, a, Mark::Tail);
                changed = true;
            }
        }
    }
    changed
}

/// `a o-> c`, `b -> c <- t`, uncovered potentially directed paths from `a`
/// to `b` and from `a` to `t` whose first nodes after `a` are distinct and
/// non-adjacent: orient `a -> c`.
fn rule10(pag: &mut Pag) -> bool {
    let d = pag.d();
    let mut changed = false;
    for a in 0..d {
        for c in 0..d {
            if !is_circle_arrow(pag, a, c) {
                continue;
            }
            let parents: Vec<usize> = (0..d).filter(|&p| p != a && pag.is_parent(p, c)).collect();
            if parents.len() < 2 {
                continue;
            }
            let firsts: Vec<usize> = (0..d)
                .filter(|&m| m != c && pag.adjacent(a, m) && potentially_directed(pag, a, m))
                .collect();
            let starts_to = |target: usize| -> Vec<usize> {
                firsts
                    .iter()
                    .copied()
                    .filter(|&m| m == target || uncovered_pd_reach(pag, a, m, target, c))
                    .collect()
            };
            let mut fires = false;
            'pairs: for (ib, &b) in parents.iter().enumerate() {
                let m1 = starts_to(b);
                if m1.is_empty() {
                    continue;
                }
                for &t in &parents[ib + 1..] {
                    let m2 = starts_to(t);
                    for &mu in &m1 {
                        for &om in &m2 {
                            if mu != om && !pag.adjacent(mu, om) {
                                fires = true;
                                break 'pairs;
                            }
                        }
                    }
                }
            }
            if fires {
                pag.set(c, a, Mark::Tail);
                changed = true;
            }
        }
    }
    changed
}

fn is_circle_arrow(pag: &Pag, a: usize, c: usize) -> bool {
    pag.adjacent(a, c) && pag.mark(c, a) == Mark::Circle && pag.mark(a, c) == Mark::Arrow
}

/// The edge `u - v` could be oriented `u -> v`: no arrowhead at `u` and no
/// tail at `v`.
fn potentially_directed(pag: &Pag, u: usize, v: usize) -> bool {
    pag.adjacent(u, v) && pag.mark(v, u) != Mark::Arrow && pag.mark(u, v) != Mark::Tail
}

/// Whether an uncovered potentially directed path continues from the edge
/// `start -> first` to `target`, never visiting `start` or `avoid` again.
/// Search is over `(previous, current)` states.
fn uncovered_pd_reach(pag: &Pag, start: usize, first: usize, target: usize, avoid: usize) -> bool {
    if first == target {
        return true;
    }
    let d = pag.d();
    let mut visited = vec![false; d * d];
    visited[start * d + first] = true;
    let mut queue = VecDeque::from([(start, first)]);
    while let Some((prev, cur)) = queue.pop_front() {
        for next in 0..d {
            if next == prev || next == start || next == cur || next == avoid {
                continue;
            }
            if !potentially_directed(pag, cur, next) || pag.adjacent(prev, next) {
                continue;
            }
            if next == target {
                return true;
            }
            if !visited[cur * d + next] {
                visited[cur * d + next] = true;
                queue.push_back((cur, next));
            }
        }
    }
    false
}
