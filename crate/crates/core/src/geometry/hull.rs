//! Convex hull of a point set in d dimensions (d ≥ 2) via quickhull with
//! simplicial facets. Used twice: facets of the dual point set give primal
//! vertices, and a centroid fan over the hull of those vertices gives volume.

use super::linalg::{det, dot, norm};
use super::GeometryError;

#[derive(Debug, Clone)]
pub struct Facet {
    /// Indices into the input point set; exactly `dim` of them.
    pub vertices: Vec<usize>,
    /// Outward unit normal.
    pub normal: Vec<f64>,
    /// Plane offset: points x on the facet satisfy `normal·x = offset`.
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct Hull {
    pub facets: Vec<Facet>,
    pub dim: usize,
}

struct WorkFacet {
    vertices: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
    /// neighbors[i] is the facet across the ridge omitting vertices[i].
    neighbors: Vec<usize>,
    outside: Vec<usize>,
    furthest: f64,
    alive: bool,
}

/// Computes the convex hull of `points` in `dim` dimensions. Fails with
/// `DegenerateRegion` when the points do not span `dim` dimensions.
pub fn convex_hull(points: &[Vec<f64>], dim: usize) -> Result<Hull, GeometryError> {
    assert!(dim >= 2, "convex_hull requires dim >= 2");
    if points.len() < dim + 1 {
        return Err(GeometryError::DegenerateRegion);
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter().map(|v| v.abs()))
        .fold(1.0_f64, f64::max);
    let eps = 1e-9 * scale;

    let simplex = initial_simplex(points, dim, eps)?;
    let interior: Vec<f64> = (0..dim)
        .map(|c| simplex.iter().map(|&i| points[i][c]).sum::<f64>() / (dim + 1) as f64)
        .collect();

    let mut facets: Vec<WorkFacet> = Vec::new();
    // One facet per omitted simplex vertex; neighbors are the other facets.
    for omit in 0..=dim {
        let verts: Vec<usize> = (0..=dim).filter(|&k| k != omit).map(|k| simplex[k]).collect();
        let (normal, offset) = facet_plane(points, &verts, &interior)?;
        // Facet index equals its omitted simplex position, so the neighbor
        // across the ridge omitting verts[vpos] is the facet omitting that
        // same vertex.
        let neighbors: Vec<usize> = (0..dim)
            .map(|vpos| (0..=dim).position(|k| simplex[k] == verts[vpos]).unwrap())
            .collect();
        facets.push(WorkFacet {
            vertices: verts,
            normal,
            offset,
            neighbors,
            outside: Vec::new(),
            furthest: 0.0,
            alive: true,
        });
    }

    // Assign every point outside some facet to that facet's outside set.
    let simplex_set: Vec<usize> = simplex.clone();
    for (pi, p) in points.iter().enumerate() {
        if simplex_set.contains(&pi) {
            continue;
        }
        assign_point(&mut facets, &(0..dim + 1).collect::<Vec<_>>(), points, p, pi, eps);
    }

    let max_rounds = 20 * points.len() * points.len() + 10_000;
    let mut rounds = 0;
    loop {
        rounds += 1;
        if rounds > max_rounds {
            return Err(GeometryError::NumericalFailure(
                "quickhull failed to converge".into(),
            ));
        }
        let Some(fi) = facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive && !f.outside.is_empty())
            .max_by(|a, b| a.1.furthest.total_cmp(&b.1.furthest))
            .map(|(i, _)| i)
        else {
            break;
        };
        let p_idx = {
            let f = &facets[fi];
            *f.outside
                .iter()
                .max_by(|&&a, &&b| {
                    let da = dot(&f.normal, &points[a]) - f.offset;
                    let db = dot(&f.normal, &points[b]) - f.offset;
                    da.total_cmp(&db)
                })
                .unwrap()
        };
        let p = &points[p_idx];

        // Find all facets visible from p (DFS over neighbors).
        let mut visible = vec![fi];
        let mut seen = vec![false; facets.len()];
        seen[fi] = true;
        let mut stack = vec![fi];
        while let Some(f) = stack.pop() {
            for k in 0..dim {
                let nb = facets[f].neighbors[k];
                if !seen[nb] && facets[nb].alive {
                    seen[nb] = true;
                    if dot(&facets[nb].normal, p) - facets[nb].offset > eps {
                        visible.push(nb);
                        stack.push(nb);
                    }
                }
            }
        }
        // Horizon ridges: (ridge vertices, surviving neighbor facet).
        let mut horizon: Vec<(Vec<usize>, usize)> = Vec::new();
        for &vf in &visible {
            for k in 0..dim {
                let nb = facets[vf].neighbors[k];
                if !visible.contains(&nb) {
                    let ridge: Vec<usize> = facets[vf]
                        .vertices
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != k)
                        .map(|(_, &v)| v)
                        .collect();
                    horizon.push((ridge, nb));
                }
            }
        }
        // Candidate points for reassignment.
        let mut candidates: Vec<usize> = Vec::new();
        for &vf in &visible {
            candidates.extend(facets[vf].outside.iter().copied());
            facets[vf].alive = false;
            facets[vf].outside.clear();
        }
        candidates.retain(|&c| c != p_idx);
        candidates.sort_unstable();
        candidates.dedup();

        // Build one new facet per horizon ridge: ridge ∪ {p}.
        let mut new_ids = Vec::with_capacity(horizon.len());
        use std::collections::HashMap;
        let mut ridge_map: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for (ridge, outer_nb) in &horizon {
            let mut verts = ridge.clone();
            verts.push(p_idx);
            let (normal, offset) = facet_plane(points, &verts, &interior)?;
            let id = facets.len();
            let mut neighbors = vec![usize::MAX; dim];
            // Ridge omitting p (the last vertex) is the horizon ridge itself.
            neighbors[dim - 1] = *outer_nb;
            // Patch the outer neighbor to point back at the new facet.
            {
                let nb = &mut facets[*outer_nb];
                for k in 0..dim {
                    let r: Vec<usize> = nb
                        .vertices
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != k)
                        .map(|(_, &v)| v)
                        .collect();
                    let mut rs = r.clone();
                    rs.sort_unstable();
                    let mut ridge_sorted = ridge.clone();
                    ridge_sorted.sort_unstable();
                    if rs == ridge_sorted {
                        nb.neighbors[k] = id;
                        break;
                    }
                }
            }
            facets.push(WorkFacet {
                vertices: verts,
                normal,
                offset,
                neighbors,
                outside: Vec::new(),
                furthest: 0.0,
                alive: true,
            });
            new_ids.push(id);
        }
        // Link new facets to each other across ridges containing p.
        for &id in &new_ids {
            for k in 0..dim - 1 {
                // Ridge omitting vertices[k] (contains p).
                let mut ridge: Vec<usize> = facets[id]
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != k)
                    .map(|(_, &v)| v)
                    .collect();
                ridge.sort_unstable();
                match ridge_map.get(&ridge) {
                    None => {
                        ridge_map.insert(ridge, (id, k));
                    }
                    Some(&(other, ok)) => {
                        facets[id].neighbors[k] = other;
                        facets[other].neighbors[ok] = id;
                    }
                }
            }
        }
        if facets.iter().any(|f| f.alive && f.neighbors.iter().any(|&n| n == usize::MAX)) {
            return Err(GeometryError::NumericalFailure(
                "quickhull horizon was not closed".into(),
            ));
        }
        // Reassign candidate points among the new facets.
        for &c in &candidates {
            assign_point(&mut facets, &new_ids, points, &points[c], c, eps);
        }
    }

    let out = facets
        .into_iter()
        .filter(|f| f.alive)
        .map(|f| Facet {
            vertices: f.vertices,
            normal: f.normal,
            offset: f.offset,
        })
        .collect();
    Ok(Hull { facets: out, dim })
}

fn assign_point(
    facets: &mut [WorkFacet],
    among: &[usize],
    _points: &[Vec<f64>],
    p: &[f64],
    p_idx: usize,
    eps: f64,
) {
    let mut best: Option<(usize, f64)> = None;
    for &fi in among {
        if !facets[fi].alive {
            continue;
        }
        let d = dot(&facets[fi].normal, p) - facets[fi].offset;
        if d > eps && best.map_or(true, |(_, bd)| d > bd) {
            best = Some((fi, d));
        }
    }
    if let Some((fi, d)) = best {
        facets[fi].outside.push(p_idx);
        if d > facets[fi].furthest {
            facets[fi].furthest = d;
        }
    }
}

/// Hyperplane through `verts` oriented away from `interior`, with unit normal.
fn facet_plane(
    points: &[Vec<f64>],
    verts: &[usize],
    interior: &[f64],
) -> Result<(Vec<f64>, f64), GeometryError> {
    let dim = interior.len();
    debug_assert_eq!(verts.len(), dim);
    let p0 = &points[verts[0]];
    // Edge matrix rows e_i = p_i − p_0; normal via cofactor expansion.
    let edges: Vec<Vec<f64>> = verts[1..]
        .iter()
        .map(|&v| (0..dim).map(|c| points[v][c] - p0[c]).collect())
        .collect();
    let mut normal = vec![0.0; dim];
    for j in 0..dim {
        let minor: Vec<Vec<f64>> = edges
            .iter()
            .map(|e| {
                e.iter()
                    .enumerate()
                    .filter(|&(c, _)| c != j)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        normal[j] = sign * det(minor);
    }
    let len = norm(&normal);
    if len < 1e-14 {
        return Err(GeometryError::NumericalFailure(
            "degenerate facet in convex hull".into(),
        ));
    }
    for v in normal.iter_mut() {
        *v /= len;
    }
    let mut offset = dot(&normal, p0);
    if dot(&normal, interior) > offset {
        for v in normal.iter_mut() {
            *v = -*v;
        }
        offset = -offset;
    }
    Ok((normal, offset))
}

/// Initial simplex: d+1 affinely independent points chosen greedily by
/// distance from the current affine hull (Gram–Schmidt residuals).
fn initial_simplex(points: &[Vec<f64>], dim: usize, eps: f64) -> Result<Vec<usize>, GeometryError> {
    // Start with the two points extreme along the axis of largest spread.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for c in 0..dim {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let axis = (0..dim)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let i0 = (0..points.len())
        .min_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]))
        .unwrap();
    let mut chosen = vec![i0];
    let mut basis: Vec<Vec<f64>> = Vec::new(); // orthonormal directions
    while chosen.len() < dim + 1 {
        let origin = &points[chosen[0]];
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (pi, p) in points.iter().enumerate() {
            if chosen.contains(&pi) {
                continue;
            }
            let mut r: Vec<f64> = (0..dim).map(|c| p[c] - origin[c]).collect();
            for b in &basis {
                let proj = dot(&r, b);
                for c in 0..dim {
                    r[c] -= proj * b[c];
                }
            }
            let rl = norm(&r);
            if best.as_ref().map_or(true, |(_, bl, _)| rl > *bl) {
                best = Some((pi, rl, r));
            }
        }
        match best {
            Some((pi, rl, mut r)) if rl > eps => {
                for c in r.iter_mut() {
                    *c /= rl;
                }
                basis.push(r);
                chosen.push(pi);
            }
            _ => return Err(GeometryError::DegenerateRegion),
        }
    }
    Ok(chosen)
}
