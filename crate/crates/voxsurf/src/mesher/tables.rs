//! The 256-case marching-cubes triangulation table.
//!
//! Built once at startup by tracing iso-surface loops: cut edges are paired
//! per face (ambiguous faces group the two cut edges around each inside
//! corner, a rule that depends only on the face's corner signs, so adjacent
//! cells always agree and the mesh stays watertight), chained into closed
//! loops, oriented with normals toward positive values, and fan-triangulated.

use std::sync::OnceLock;

/// Cube corners follow the grid convention: bit 0 = +x, bit 1 = +y, bit 2 = +z.
pub const EDGE_CORNERS: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7), // x-aligned
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7), // y-aligned
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7), // z-aligned
];

/// Axis of each edge (0 = x, 1 = y, 2 = z).
pub const EDGE_AXIS: [usize; 12] = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];

/// Faces as cyclic corner quads.
const FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4], // x = 0
    [1, 3, 7, 5], // x = 1
    [0, 1, 5, 4], // y = 0
    [2, 3, 7, 6], // y = 1
    [0, 1, 3, 2], // z = 0
    [4, 5, 7, 6], // z = 1
];

fn edge_of(a: usize, b: usize) -> usize {
    EDGE_CORNERS
        .iter()
        .position(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
        .expect("corner pair is a cube edge")
}

fn corner_pos(c: usize) -> [f64; 3] {
    [(c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64]
}

fn build_case(config: u8) -> Vec<[u8; 3]> {
    let inside = |c: usize| (config >> c) & 1 == 1;
    let cut = |e: usize| {
        let (a, b) = EDGE_CORNERS[e];
        inside(a) != inside(b)
    };

    // partner[edge][slot]: the edge it pairs with across each adjacent face.
    let mut partners: Vec<Vec<usize>> = vec![Vec::new(); 12];
    for face in &FACES {
        let cut_edges: Vec<usize> = (0..4)
            .map(|i| edge_of(face[i], face[(i + 1) % 4]))
            .filter(|&e| cut(e))
            .collect();
        match cut_edges.len() {
            0 => {}
            2 => {
                partners[cut_edges[0]].push(cut_edges[1]);
                partners[cut_edges[1]].push(cut_edges[0]);
            }
            4 => {
                // Ambiguous face: pair the two cut edges around each inside
                // corner of the diagonal.
                for i in 0..4 {
                    let c = face[i];
                    if inside(c) {
                        let e1 = edge_of(face[(i + 3) % 4], c);
                        let e2 = edge_of(c, face[(i + 1) % 4]);
                        if cut(e1) && cut(e2) {
                            partners[e1].push(e2);
                            partners[e2].push(e1);
                        }
                    }
                }
            }
            _ => unreachable!("a face has 0, 2, or 4 cut edges"),
        }
    }

    // Chain partners into closed loops.
    let mut seen = [false; 12];
    let mut triangles = Vec::new();
    for start in 0..12 {
        if !cut(start) || seen[start] {
            continue;
        }
        let mut ring = vec![start];
        seen[start] = true;
        let mut prev = usize::MAX;
        let mut curr = start;
        loop {
            let next = *partners[curr]
                .iter()
                .find(|&&e| e != prev)
                .expect("cut edge has two partners");
            if next == start {
                break;
            }
            ring.push(next);
            seen[next] = true;
            prev = curr;
            curr = next;
        }

        // Orient so the fan normal points from inside corners to outside.
        let mids: Vec<[f64; 3]> = ring
            .iter()
            .map(|&e| {
                let (a, b) = EDGE_CORNERS[e];
                let (pa, pb) = (corner_pos(a), corner_pos(b));
                [
                    0.5 * (pa[0] + pb[0]),
                    0.5 * (pa[1] + pb[1]),
                    0.5 * (pa[2] + pb[2]),
                ]
            })
            .collect();
        let mut normal = [0.0f64; 3];
        for i in 0..mids.len() {
            let (p, q) = (mids[i], mids[(i + 1) % mids.len()]);
            normal[0] += (p[1] - q[1]) * (p[2] + q[2]);
            normal[1] += (p[2] - q[2]) * (p[0] + q[0]);
            normal[2] += (p[0] - q[0]) * (p[1] + q[1]);
        }
        let mut outward = [0.0f64; 3];
        let mut n_in = 0.0;
        for c in 0..8 {
            let p = corner_pos(c);
            let sign = if inside(c) { -1.0 } else { 1.0 };
            for a in 0..3 {
                outward[a] += sign * (p[a] - 0.5);
            }
            if inside(c) {
                n_in += 1.0;
            }
        }
        // Fully symmetric sign splits give a zero hint; fall back to any
        // inside corner direction.
        if outward.iter().all(|v| v.abs() < 1e-12) {
            for c in 0..8 {
                if inside(c) {
                    let p = corner_pos(c);
                    for a in 0..3 {
                        outward[a] -= (p[a] - 0.5) / n_in;
                    }
                }
            }
        }
        let dot: f64 = (0..3).map(|a| normal[a] * outward[a]).sum();
        if dot < 0.0 {
            ring.reverse();
        }

        for i in 1..ring.len() - 1 {
            triangles.push([ring[0] as u8, ring[i] as u8, ring[i + 1] as u8]);
        }
    }
    triangles
}

/// Triangles (as cut-edge index triples) for every corner-sign configuration.
pub fn triangle_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|config| build_case(config as u8)))
}
