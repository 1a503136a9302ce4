//! Marching-cubes case table.
//!
//! Corners and edges use the usual numbering (corner 0 at the origin, 0-3 on
//! the z=0 face counter-clockwise from above, 4-7 above them; edges 0-3 on the
//! bottom face, 4-7 on the top, 8-11 vertical). Rather than a transcribed
//! table, each of the 256 cases is built by walking the six cube faces: on a
//! face every maximal run of above-iso corners is cut off by one segment, and
//! the segments chain into closed loops that are fan-triangulated. Ambiguous
//! faces therefore always isolate the above-iso corners, which is the same
//! decision on both cells sharing the face.

use std::sync::OnceLock;

pub(crate) const CORNERS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

pub(crate) const EDGES: [[usize; 2]; 12] =
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

// Corner cycles, counter-clockwise when viewed from outside the cube.
const FACES: [[usize; 4]; 6] =
    [[0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4], [3, 7, 6, 2], [0, 4, 7, 3], [1, 2, 6, 5]];

/// Triangles of one case as triples of edge indices.
pub(crate) type CaseTriangles = Vec<[u8; 3]>;

pub(crate) fn case_table() -> &'static [CaseTriangles; 256] {
    static TABLE: OnceLock<[CaseTriangles; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|case| build_case(case as u8)))
}

fn edge_between(a: usize, b: usize) -> usize {
    EDGES.iter().position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a)).expect("corners are adjacent")
}

/// Closed loops of crossed edges for one corner configuration. Each loop runs
/// counter-clockwise around the above-iso side when seen from below-iso.
pub(crate) fn case_loops(case: u8) -> Vec<Vec<usize>> {
    let inside = |c: usize| case & (1 << c) != 0;
    let mut succ = [usize::MAX; 12];
    for face in FACES {
        for k in 0..4 {
            let (c0, c1) = (face[k], face[(k + 1) % 4]);
            if !(inside(c0) && !inside(c1)) {
                continue;
            }
            // Walk back over the run of inside corners ending at c0 to the
            // edge where the boundary entered it.
            let mut j = k;
            while inside(face[(j + 3) % 4]) {
                j = (j + 3) % 4;
            }
            let entry = edge_between(face[(j + 3) % 4], face[j]);
            succ[edge_between(c0, c1)] = entry;
        }
    }
    let mut visited = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if succ[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut e = start;
        while !visited[e] {
            visited[e] = true;
            ring.push(e);
            e = succ[e];
        }
        debug_assert_eq!(e, start);
        loops.push(ring);
    }
    loops
}

fn build_case(case: u8) -> CaseTriangles {
    let mut tris = Vec::new();
    for ring in case_loops(case) {
        for [a, b, c] in triangulate_ring(&ring) {
            // Reversed so normals point from above-iso to below-iso.
            tris.push([ring[a] as u8, ring[c] as u8, ring[b] as u8]);
        }
    }
    tris
}

fn shares_face(e1: usize, e2: usize) -> bool {
    FACES.iter().any(|f| {
        let on = |e: usize| EDGES[e].iter().all(|c| f.contains(c));
        on(e1) && on(e2)
    })
}

/// Triangulates a loop without any diagonal that lies in a cube face. A loop
/// that crosses an ambiguous face twice would otherwise be able to place a
/// triangle edge inside that face, where the neighbouring cell can place the
/// same edge again.
fn triangulate_ring(ring: &[usize]) -> Vec<[usize; 3]> {
    let n = ring.len();
    let allowed = |i: usize, j: usize| j == i + 1 || (i == 0 && j == n - 1) || !shares_face(ring[i], ring[j]);
    // feasible[i][j]: sub-polygon i..=j can be triangulated; choice[i][j] is its apex.
    let mut choice = vec![vec![usize::MAX; n]; n];
    for span in 2..n {
        for i in 0..n - span {
            let j = i + span;
            if !allowed(i, j) {
                continue;
            }
            choice[i][j] = (i + 1..j)
                .find(|&k| (k == i + 1 || choice[i][k] != usize::MAX) && (k + 1 == j || choice[k][j] != usize::MAX))
                .unwrap_or(usize::MAX);
        }
    }
    assert!(choice[0][n - 1] != usize::MAX, "loop {ring:?} has no admissible triangulation");
    let mut out = Vec::with_capacity(n - 2);
    let mut stack = vec![(0, n - 1)];
    while let Some((i, j)) = stack.pop() {
        if j < i + 2 {
            continue;
        }
        let k = choice[i][j];
        out.push([i, k, j]);
        stack.push((k, j));
        stack.push((i, k));
    }
    out
}
