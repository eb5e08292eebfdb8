//! Truncated signed distance to the zero contour of a nodal field.

use super::mesh::MacroMesh;

type Point = [f64; 2];

/// Zero-contour segments of the bilinear field in grid coordinates, bucketed
/// by cell.
fn contour_segments(mesh: &MacroMesh, phi: &[f64]) -> Vec<Vec<(Point, Point)>> {
    let mut cells = vec![Vec::new(); mesh.element_count()];
    for (e, cell) in cells.iter_mut().enumerate() {
        let n = mesh.element_nodes(e);
        let v = [phi[n[0]], phi[n[1]], phi[n[2]], phi[n[3]]];
        let (ci, cj) = ((e % mesh.nx) as f64, (e / mesh.nx) as f64);
        let corner = |a: usize| -> Point { [ci + (a & 1) as f64, cj + (a >> 1) as f64] };
        // Edges in order bottom, right, top, left.
        let edges = [(0usize, 1usize), (1, 3), (2, 3), (0, 2)];
        let mut cross: [Option<Point>; 4] = [None; 4];
        for (k, &(a, b)) in edges.iter().enumerate() {
            if (v[a] > 0.0) != (v[b] > 0.0) {
                let t = v[a] / (v[a] - v[b]);
                let (pa, pb) = (corner(a), corner(b));
                cross[k] = Some([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
            }
        }
        let hits: Vec<Point> = cross.iter().flatten().copied().collect();
        match hits.len() {
            2 => cell.push((hits[0], hits[1])),
            4 => {
                let [b, r, t, l] = cross.map(|c| c.unwrap());
                let center = 0.25 * v.iter().sum::<f64>();
                if (center > 0.0) == (v[0] > 0.0) {
                    // Corners 1 and 2 are cut off.
                    cell.push((b, r));
                    cell.push((l, t));
                } else {
                    cell.push((b, l));
                    cell.push((r, t));
                }
            }
            _ => {}
        }
    }
    cells
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

/// Signed distance (in element sizes) from every node to the piecewise-linear
/// zero contour of `phi`, signed like `phi` and clamped to `trunc`. Without a
/// sign change the result is `phi` clamped.
pub fn redistance(phi: &[f64], mesh: &MacroMesh, trunc: [f64; 2]) -> Vec<f64> {
    let cells = contour_segments(mesh, phi);
    if cells.iter().all(|c| c.is_empty()) {
        return phi.iter().map(|v| v.clamp(trunc[0], trunc[1])).collect();
    }
    // Beyond this many cells every distance is clamped anyway.
    let reach = trunc[0].abs().max(trunc[1].abs()).ceil() as isize + 1;
    let (nx, ny) = (mesh.nx as isize, mesh.ny as isize);
    (0..mesh.node_count())
        .map(|n| {
            let (i, j) = ((n % mesh.nodes_x()) as isize, (n / mesh.nodes_x()) as isize);
            let p = [i as f64, j as f64];
            let mut best = f64::INFINITY;
            for cj in (j - reach).max(0)..(j + reach).min(ny) {
                for ci in (i - reach).max(0)..(i + reach).min(nx) {
                    for &(a, b) in &cells[(ci + nx * cj) as usize] {
                        best = best.min(point_segment_distance(p, a, b));
                    }
                }
            }
            let signed = if phi[n] > 0.0 {
                best
            } else if phi[n] < 0.0 {
                -best
            } else {
                0.0
            };
            signed.clamp(trunc[0], trunc[1])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRUNC: [f64; 2] = [-1.5, 1.5];

    #[test]
    fn uniform_sign_is_clamped() {
        let m = MacroMesh::new(4, 3, 1.0).unwrap();
        let phi: Vec<f64> = (0..20).map(|i| 0.3 + i as f64).collect();
        let out = redistance(&phi, &m, TRUNC);
        assert_eq!(out[..2], [0.3, 1.3]);
        assert!(out[2..].iter().all(|&v| v == 1.5));
    }

    #[test]
    fn straight_interface_is_reproduced() {
        // Exact distance to the oblique line x + 0.5 y = 3.3, scaled to grid units.
        let m = MacroMesh::new(10, 6, 1.0).unwrap();
        let norm = (1.0f64 + 0.25).sqrt();
        let exact: Vec<f64> = (0..m.node_count())
            .map(|n| {
                let [x, y] = m.node_position(n);
                ((x + 0.5 * y - 3.3) / norm).clamp(-1.5, 1.5)
            })
            .collect();
        let out = redistance(&exact, &m, TRUNC);
        for (n, (a, b)) in out.iter().zip(&exact).enumerate() {
            // Near the domain edge the nearest line point can fall outside
            // the mesh, where no contour exists.
            let [x, y] = m.node_position(n);
            let foot = [x - b / norm, y - 0.5 * b / norm];
            let inside = foot[0] >= 0.0 && foot[0] <= 10.0 && foot[1] >= 0.0 && foot[1] <= 6.0;
            let tol = if inside { 1e-9 } else { 0.5 };
            assert!((a - b).abs() < tol, "node {n}: {a} vs {b}");
        }
    }

    #[test]
    fn circle_distance_near_the_interface() {
        let m = MacroMesh::new(30, 30, 1.0).unwrap();
        let (cx, cy, r0) = (15.2, 14.7, 8.3);
        let phi: Vec<f64> = (0..m.node_count())
            .map(|n| {
                let [x, y] = m.node_position(n);
                ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r0
            })
            .collect();
        let out = redistance(&phi, &m, [-3.0, 3.0]);
        for n in 0..m.node_count() {
            if phi[n].abs() < 2.0 {
                assert!((out[n] - phi[n]).abs() < 1.0, "node {n}: {} vs {}", out[n], phi[n]);
            }
        }
    }

    #[test]
    fn saddle_cells_give_two_segments() {
        let m = MacroMesh::new(1, 1, 1.0).unwrap();
        let cells = contour_segments(&m, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(cells[0].len(), 2);
    }
}
