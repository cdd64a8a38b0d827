//! Polytopal mesh representation: cells are simple polygons given by
//! counter-clockwise vertex loops, faces are straight edges shared by at most
//! two cells.
//!
//! All constructors funnel through [`Mesh::from_cells`], so a mesh written by
//! [`Mesh::write`] and read back by [`read_mesh`] reproduces the exact same
//! topology and (bitwise) geometry. Faces are numbered lexicographically by
//! their sorted vertex pair.

use crate::quadrature::polygon_area_centroid;
use crate::{Error, Result};
use nalgebra::{Point2, Vector2};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

/// A polygonal cell.
#[derive(Debug, Clone)]
pub struct Cell {
    /// Counter-clockwise vertex loop.
    pub vertices: Vec<usize>,
    /// Face ids, in loop order: face `i` joins vertex `i` to vertex `i + 1`.
    pub faces: Vec<usize>,
    pub centroid: Point2<f64>,
    pub measure: f64,
    pub diameter: f64,
}

/// A straight mesh face (edge).
#[derive(Debug, Clone)]
pub struct Face {
    /// Vertex pair, sorted ascending.
    pub vertices: [usize; 2],
    pub midpoint: Point2<f64>,
    /// Unit tangent, oriented from the lower to the higher vertex id.
    pub tangent: Vector2<f64>,
    /// Unit normal with fixed global orientation: outward from `owners.0`.
    pub normal: Vector2<f64>,
    /// Length of the face.
    pub measure: f64,
    /// Diameter; equals the length for straight edges.
    pub diameter: f64,
    /// Owning cells; `owners.1` is `None` on the domain boundary.
    pub owners: (usize, Option<usize>),
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.owners.1.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point2<f64>>,
    cells: Vec<Cell>,
    faces: Vec<Face>,
    boundary_faces: Vec<usize>,
    boundary_pos: Vec<Option<usize>>,
    vertex_cells: Vec<Vec<usize>>,
    h: f64,
}

impl Mesh {
    /// Builds a mesh from vertex coordinates and per-cell counter-clockwise
    /// vertex loops. Faces are discovered from vertex pairs and numbered
    /// lexicographically.
    pub fn from_cells(vertices: Vec<Point2<f64>>, loops: Vec<Vec<usize>>) -> Result<Mesh> {
        let nv = vertices.len();
        let mut cells = Vec::with_capacity(loops.len());
        for (c, lp) in loops.iter().enumerate() {
            if lp.len() < 3 {
                return Err(Error::Geometry(format!(
                    "cell {c} has {} vertices, need at least 3",
                    lp.len()
                )));
            }
            for &v in lp {
                if v >= nv {
                    return Err(Error::Topology(format!(
                        "cell {c} references vertex {v}, mesh has {nv}"
                    )));
                }
            }
            let pts: Vec<Point2<f64>> = lp.iter().map(|&v| vertices[v]).collect();
            let (measure, centroid) = polygon_area_centroid(&pts);
            if measure <= 0.0 {
                return Err(Error::Geometry(format!(
                    "cell {c} has non-positive measure {measure:.3e}"
                )));
            }
            let mut diameter: f64 = 0.0;
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    diameter = diameter.max((pts[i] - pts[j]).norm());
                }
            }
            cells.push(Cell {
                vertices: lp.clone(),
                faces: Vec::new(),
                centroid,
                measure,
                diameter,
            });
        }

        // Discover faces; BTreeMap keys give the lexicographic numbering.
        struct EdgeInfo {
            owners: Vec<usize>,
            /// Traversal (a, b) in the first owner's loop; fixes the normal.
            first_traversal: (usize, usize),
        }
        let mut edges: BTreeMap<(usize, usize), EdgeInfo> = BTreeMap::new();
        for (c, lp) in loops.iter().enumerate() {
            let m = lp.len();
            for i in 0..m {
                let (a, b) = (lp[i], lp[(i + 1) % m]);
                if a == b {
                    return Err(Error::Topology(format!("cell {c} repeats vertex {a}")));
                }
                let key = (a.min(b), a.max(b));
                let info = edges.entry(key).or_insert(EdgeInfo {
                    owners: Vec::new(),
                    first_traversal: (a, b),
                });
                info.owners.push(c);
                if info.owners.len() > 2 {
                    return Err(Error::Topology(format!(
                        "face ({}, {}) is shared by more than two cells",
                        key.0, key.1
                    )));
                }
            }
        }

        let mut faces = Vec::with_capacity(edges.len());
        let mut face_of: HashMap<(usize, usize), usize> = HashMap::with_capacity(edges.len());
        for (key, info) in &edges {
            let (a, b) = info.first_traversal;
            let (pa, pb) = (vertices[a], vertices[b]);
            let e = pb - pa;
            let len = e.norm();
            if len == 0.0 {
                return Err(Error::Geometry(format!(
                    "face ({}, {}) has zero length",
                    key.0, key.1
                )));
            }
            let normal = Vector2::new(e.y / len, -e.x / len);
            let (lo, hi) = (vertices[key.0], vertices[key.1]);
            face_of.insert(*key, faces.len());
            faces.push(Face {
                vertices: [key.0, key.1],
                midpoint: Point2::from((pa.coords + pb.coords) * 0.5),
                tangent: (hi - lo) / len,
                normal,
                measure: len,
                diameter: len,
                owners: (info.owners[0], info.owners.get(1).copied()),
            });
        }

        for (c, lp) in loops.iter().enumerate() {
            let m = lp.len();
            cells[c].faces = (0..m)
                .map(|i| {
                    let (a, b) = (lp[i], lp[(i + 1) % m]);
                    face_of[&(a.min(b), a.max(b))]
                })
                .collect();
        }

        let mut boundary_faces = Vec::new();
        let mut boundary_pos = vec![None; faces.len()];
        for (f, face) in faces.iter().enumerate() {
            if face.is_boundary() {
                boundary_pos[f] = Some(boundary_faces.len());
                boundary_faces.push(f);
            }
        }

        let mut vertex_cells = vec![Vec::new(); nv];
        for (c, lp) in loops.iter().enumerate() {
            for &v in lp {
                if vertex_cells[v].last() != Some(&c) {
                    vertex_cells[v].push(c);
                }
            }
        }

        let h = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);
        Ok(Mesh {
            vertices,
            cells,
            faces,
            boundary_faces,
            boundary_pos,
            vertex_cells,
            h,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_boundary_faces(&self) -> usize {
        self.boundary_faces.len()
    }

    pub fn vertex(&self, v: usize) -> Point2<f64> {
        self.vertices[v]
    }

    pub fn cell(&self, c: usize) -> &Cell {
        &self.cells[c]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Boundary face ids, ascending.
    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    /// Position of a face in the boundary numbering, if it is on the boundary.
    pub fn boundary_position(&self, f: usize) -> Option<usize> {
        self.boundary_pos[f]
    }

    /// Largest cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Sign such that `sign * face.normal` points outward of cell `c`.
    pub fn outward_sign(&self, c: usize, f: usize) -> f64 {
        if self.faces[f].owners.0 == c {
            1.0
        } else {
            -1.0
        }
    }

    /// Vertex coordinates of a cell, in loop order.
    pub fn cell_polygon(&self, c: usize) -> Vec<Point2<f64>> {
        self.cells[c].vertices.iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn cells_at_vertex(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    /// Writes the mesh in the plain-text polygonal format.
    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.vertices.len(), self.cells.len())?;
        for p in &self.vertices {
            writeln!(w, "{} {}", p.x, p.y)?;
        }
        for c in &self.cells {
            write!(w, "{}", c.vertices.len())?;
            for &v in &c.vertices {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))?;
        Ok(())
    }

    /// Extracts the `alpha`-layer neighbourhood patch of the boundary DoF `j`,
    /// where each boundary face carries `dofs_per_face` unknowns. Layer growth
    /// adds every cell sharing at least one vertex with the previous layer.
    pub fn neighborhood(&self, j: usize, dofs_per_face: usize, alpha: usize) -> Result<Patch> {
        let n_dofs = self.boundary_faces.len() * dofs_per_face;
        if dofs_per_face == 0 || j >= n_dofs {
            return Err(Error::Index(format!(
                "boundary DoF {j} out of range (0..{n_dofs})"
            )));
        }
        let bface = self.boundary_faces[j / dofs_per_face];
        let seed = self.faces[bface].owners.0;

        let mut in_patch = vec![false; self.cells.len()];
        in_patch[seed] = true;
        let mut frontier = vec![seed];
        for _ in 0..alpha {
            let mut next = Vec::new();
            for &c in &frontier {
                for &v in &self.cells[c].vertices {
                    for &c2 in &self.vertex_cells[v] {
                        if !in_patch[c2] {
                            in_patch[c2] = true;
                            next.push(c2);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }

        let cells: Vec<usize> = (0..self.cells.len()).filter(|&c| in_patch[c]).collect();
        let cell_local: HashMap<usize, usize> =
            cells.iter().enumerate().map(|(l, &g)| (g, l)).collect();

        let mut face_set: Vec<usize> = cells
            .iter()
            .flat_map(|&c| self.cells[c].faces.iter().copied())
            .collect();
        face_set.sort_unstable();
        face_set.dedup();
        let face_local: HashMap<usize, usize> =
            face_set.iter().enumerate().map(|(l, &g)| (g, l)).collect();

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut on_domain_boundary = Vec::new();
        for (l, &g) in face_set.iter().enumerate() {
            let face = &self.faces[g];
            let inside = match face.owners.1 {
                Some(o1) => (in_patch[face.owners.0] as usize) + (in_patch[o1] as usize),
                None => in_patch[face.owners.0] as usize,
            };
            debug_assert!(inside >= 1);
            if face.owners.1.is_some() && inside == 2 {
                interior.push(l);
            } else {
                boundary.push(l);
                if face.is_boundary() {
                    on_domain_boundary.push(l);
                }
            }
        }

        let bdofs = on_domain_boundary
            .iter()
            .map(|&l| {
                let g = face_set[l];
                (l, self.boundary_pos[g].expect("face is on the boundary") * dofs_per_face)
            })
            .collect();

        Ok(Patch {
            seed_cell: seed,
            cells,
            faces: face_set,
            interior,
            boundary,
            on_domain_boundary,
            cell_local,
            face_local,
            dofs_per_face,
            bdofs,
        })
    }
}

/// A neighbourhood of one boundary unknown: a cell subset together with its
/// face skeleton, split into patch-interior and patch-boundary faces.
#[derive(Debug, Clone)]
pub struct Patch {
    pub seed_cell: usize,
    /// Global cell ids, ascending.
    pub cells: Vec<usize>,
    /// Global face ids of all faces of patch cells, ascending.
    pub faces: Vec<usize>,
    /// Local face ids (positions in `faces`) with both owners in the patch.
    pub interior: Vec<usize>,
    /// Local face ids with exactly one owner in the patch.
    pub boundary: Vec<usize>,
    /// Local face ids lying on the domain boundary (subset of `boundary`).
    pub on_domain_boundary: Vec<usize>,
    cell_local: HashMap<usize, usize>,
    face_local: HashMap<usize, usize>,
    dofs_per_face: usize,
    /// Pairs (local face id, first global boundary-DoF id) for every face of
    /// `on_domain_boundary`.
    bdofs: Vec<(usize, usize)>,
}

impl Patch {
    pub fn contains_cell(&self, c: usize) -> bool {
        self.cell_local.contains_key(&c)
    }

    pub fn local_cell(&self, c: usize) -> Option<usize> {
        self.cell_local.get(&c).copied()
    }

    pub fn local_face(&self, f: usize) -> Option<usize> {
        self.face_local.get(&f).copied()
    }

    pub fn dofs_per_face(&self) -> usize {
        self.dofs_per_face
    }

    /// Global boundary-DoF ids covered by the patch boundary, paired with the
    /// local face they live on.
    pub fn boundary_dofs(&self) -> &[(usize, usize)] {
        &self.bdofs
    }
}

/// Generates the uniform Cartesian mesh of the unit square with `n x n` cells.
/// Cells are numbered row-major from the bottom-left corner.
pub fn generate_cartesian(n: usize) -> Mesh {
    assert!(n >= 1, "n must be positive");
    let (vertices, at) = square_lattice(n);
    let mut loops = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            loops.push(vec![at(ix, iy), at(ix + 1, iy), at(ix + 1, iy + 1), at(ix, iy + 1)]);
        }
    }
    Mesh::from_cells(vertices, loops).expect("structured mesh is valid")
}

/// Generates a structured triangulation: each Cartesian cell is split into
/// two triangles along its bottom-left/top-right diagonal.
pub fn generate_triangular(n: usize) -> Mesh {
    assert!(n >= 1, "n must be positive");
    let (vertices, at) = square_lattice(n);
    let mut loops = Vec::with_capacity(2 * n * n);
    for iy in 0..n {
        for ix in 0..n {
            let (a, b, c, d) = (at(ix, iy), at(ix + 1, iy), at(ix + 1, iy + 1), at(ix, iy + 1));
            loops.push(vec![a, b, c]);
            loops.push(vec![a, c, d]);
        }
    }
    Mesh::from_cells(vertices, loops).expect("structured mesh is valid")
}

fn square_lattice(n: usize) -> (Vec<Point2<f64>>, impl Fn(usize, usize) -> usize) {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for iy in 0..=n {
        for ix in 0..=n {
            vertices.push(Point2::new(ix as f64 / n as f64, iy as f64 / n as f64));
        }
    }
    (vertices, move |ix, iy| iy * (n + 1) + ix)
}

/// Reads a mesh from the plain-text polygonal format:
/// first line `NV NC`, then `NV` lines `x y`, then `NC` lines `m v1 ... vm`
/// with 0-based, counter-clockwise vertex ids.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let file = std::fs::File::open(path)?;
    read_mesh_from(std::io::BufReader::new(file))
}

pub fn read_mesh_from(r: impl BufRead) -> Result<Mesh> {
    let mut lines = r.lines().enumerate();
    let mut next_line = || -> Result<(usize, String)> {
        loop {
            match lines.next() {
                Some((i, Ok(s))) => {
                    if !s.trim().is_empty() {
                        return Ok((i + 1, s));
                    }
                }
                Some((i, Err(e))) => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: e.to_string(),
                    })
                }
                None => {
                    return Err(Error::Parse {
                        line: 0,
                        msg: "unexpected end of file".into(),
                    })
                }
            }
        }
    };

    let (ln, header) = next_line()?;
    let mut it = header.split_whitespace();
    let parse_usize = |tok: Option<&str>, ln: usize, what: &str| -> Result<usize> {
        tok.ok_or_else(|| Error::Parse {
            line: ln,
            msg: format!("missing {what}"),
        })?
        .parse()
        .map_err(|e| Error::Parse {
            line: ln,
            msg: format!("invalid {what}: {e}"),
        })
    };
    let nv = parse_usize(it.next(), ln, "vertex count")?;
    let nc = parse_usize(it.next(), ln, "cell count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, s) = next_line()?;
        let mut it = s.split_whitespace();
        let parse_f64 = |tok: Option<&str>| -> Result<f64> {
            tok.ok_or_else(|| Error::Parse {
                line: ln,
                msg: "missing coordinate".into(),
            })?
            .parse()
            .map_err(|e| Error::Parse {
                line: ln,
                msg: format!("invalid coordinate: {e}"),
            })
        };
        let x = parse_f64(it.next())?;
        let y = parse_f64(it.next())?;
        vertices.push(Point2::new(x, y));
    }

    let mut loops = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, s) = next_line()?;
        let mut it = s.split_whitespace();
        let m = parse_usize(it.next(), ln, "vertex count of cell")?;
        let mut lp = Vec::with_capacity(m);
        for i in 0..m {
            lp.push(parse_usize(it.next(), ln, &format!("vertex id {i}"))?);
        }
        loops.push(lp);
    }
    Mesh::from_cells(vertices, loops)
}
