//! Network-regularised spatial regression.
//!
//! Every vertex `i` carries a 4-vector `x_i` predicting price from
//! `(1, beds, baths, sqft)`:
//!
//! ```text
//! minimize sum_i (a_i'x_i - y_i)^2 + reg_mu ||x_i[1..4]||^2
//!          + omega sum_{(j,k)} w_jk ||x_j - x_k||^2
//! ```
//!
//! Two block-separable rewrites are provided. The copy form gives each edge a
//! pair `(z_jk, z_kj)` with `x_j = z_jk`, `x_k = z_kj`; the slack form gives
//! each edge `z_jk = x_j - x_k`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Block, BlockProblem, CouplingMap, Quadratic, RowSlab};
use crate::{Matrix, Vector};

/// Parameters per vertex: intercept plus one per feature.
pub const PARAMS: usize = 4;
pub const FEATURE_NAMES: [&str; 3] = ["beds", "baths", "sqft"];
pub const EARTH_RADIUS_MILES: f64 = 3958.8;

/// One standardised observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub features: [f64; 3],
    pub target: f64,
    pub lat: f64,
    pub lon: f64,
}

impl Point {
    /// `(1, beds, baths, sqft)`.
    pub fn design(&self) -> Vector {
        Vector::from_row_slice(&[1.0, self.features[0], self.features[1], self.features[2]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub j: usize,
    pub k: usize,
    pub weight: f64,
    /// Miles.
    pub distance: f64,
}

/// Edge weight as a function of distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeWeight {
    /// `1 / (1 + d / radius)`
    #[default]
    InverseLinear,
    /// Every edge weighs 1.
    Constant,
}

impl EdgeWeight {
    pub fn weight(self, distance: f64, radius: f64) -> f64 {
        match self {
            Self::InverseLinear => 1.0 / (1.0 + distance / radius),
            Self::Constant => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGraph {
    pub vertices: Vec<Point>,
    pub edges: Vec<Edge>,
    pub neighbor_radius: f64,
    pub min_neighbors: usize,
    pub weight: EdgeWeight,
}

impl SpatialGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.vertices.len()];
        for e in &self.edges {
            d[e.j] += 1;
            d[e.k] += 1;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionSpec {
    pub omega: f64,
    pub reg_mu: f64,
    pub feature_names: Vec<String>,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            omega: 1.0,
            reg_mu: 0.1,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0 && self.omega.is_finite()) || !(self.reg_mu >= 0.0 && self.reg_mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "omega and reg_mu must be finite and nonnegative, got {} and {}",
                self.omega, self.reg_mu
            )));
        }
        Ok(())
    }
}

/// Great-circle distance in miles.
pub fn haversine_miles(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * a.sqrt().min(1.0).asin()
}

fn distance(a: &Point, b: &Point) -> f64 {
    haversine_miles(a.lat, a.lon, b.lat, b.lon)
}

/// Indices of `from`'s neighbours among `pool`: everything within `radius`,
/// topped up with the nearest others (ties by index) to `min_neighbors`.
fn neighbourhood(from: &Point, pool: &[Point], radius: f64, min_neighbors: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = pool
        .iter()
        .enumerate()
        .map(|(i, p)| (i, distance(from, p)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let within = all.iter().take_while(|(_, d)| *d <= radius).count();
    all.truncate(within.max(min_neighbors.min(all.len())));
    all
}

/// Radius graph with a degree top-up.
///
/// Pairs within `neighbor_radius` miles are joined. Then, in index order,
/// every vertex with degree below `min_neighbors` is joined to its nearest
/// non-adjacent vertices (ties by index) until the degree is reached.
pub fn build_graph(points: &[Point], neighbor_radius: f64, min_neighbors: usize) -> Result<SpatialGraph> {
    build_graph_weighted(points, neighbor_radius, min_neighbors, EdgeWeight::default())
}

pub fn build_graph_weighted(
    points: &[Point],
    neighbor_radius: f64,
    min_neighbors: usize,
    weight: EdgeWeight,
) -> Result<SpatialGraph> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Dataset(format!("a graph needs at least 2 points, got {n}")));
    }
    if !(neighbor_radius > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "neighbor_radius must be positive, got {neighbor_radius}"
        )));
    }
    if let Some(i) = points.iter().position(|p| {
        !(p.lat.is_finite() && p.lon.is_finite() && p.lat.abs() <= 90.0 && p.lon.abs() <= 180.0)
    }) {
        return Err(Error::Data {
            row: i + 1,
            message: format!("invalid coordinates ({}, {})", points[i].lat, points[i].lon),
        });
    }

    let mut dist = vec![0.0; n * n];
    for j in 0..n {
        for k in j + 1..n {
            let d = distance(&points[j], &points[k]);
            dist[j * n + k] = d;
            dist[k * n + j] = d;
        }
    }
    let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut degree = vec![0usize; n];
    let join = |j: usize, k: usize, set: &mut BTreeSet<(usize, usize)>, degree: &mut [usize]| {
        let key = (j.min(k), j.max(k));
        if set.insert(key) {
            degree[j] += 1;
            degree[k] += 1;
        }
    };
    for j in 0..n {
        for k in j + 1..n {
            if dist[j * n + k] <= neighbor_radius {
                join(j, k, &mut set, &mut degree);
            }
        }
    }
    let target = min_neighbors.min(n - 1);
    for i in 0..n {
        if degree[i] >= target {
            continue;
        }
        let mut order: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        order.sort_by(|&a, &b| dist[i * n + a].total_cmp(&dist[i * n + b]).then(a.cmp(&b)));
        for k in order {
            if degree[i] >= target {
                break;
            }
            if !set.contains(&(i.min(k), i.max(k))) {
                join(i, k, &mut set, &mut degree);
            }
        }
    }
    let edges = set
        .into_iter()
        .map(|(j, k)| {
            let d = dist[j * n + k];
            Edge {
                j,
                k,
                weight: weight.weight(d, neighbor_radius),
                distance: d,
            }
        })
        .collect();
    Ok(SpatialGraph {
        vertices: points.to_vec(),
        edges,
        neighbor_radius,
        min_neighbors,
        weight,
    })
}

/// Local loss of one vertex as a quadratic.
pub fn vertex_quadratic(point: &Point, spec: &RegressionSpec) -> Quadratic {
    let a = point.design();
    let y = point.target;
    let mut q = &a * a.transpose() * 2.0;
    for i in 1..PARAMS {
        q[(i, i)] += 2.0 * spec.reg_mu;
    }
    Quadratic {
        q,
        c: &a * (-2.0 * y),
        constant: y * y,
    }
}

/// The vertex block on all of space, with strong convexity from the smallest
/// eigenvalue of its Hessian.
pub fn vertex_objective(point: &Point, spec: &RegressionSpec) -> Block {
    let quad = vertex_quadratic(point, spec);
    let sigma = quad.min_eigenvalue().max(0.0);
    Block::new(Arc::new(quad)).with_strong_convexity(sigma)
}

/// Which block-separable rewrite to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reformulation {
    Copy,
    Slack,
}

impl std::str::FromStr for Reformulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "copy" => Ok(Self::Copy),
            "slack" => Ok(Self::Slack),
            other => Err(Error::InvalidConfig(format!(
                "unknown reformulation '{other}', expected copy or slack"
            ))),
        }
    }
}

fn eye(scale: f64, n: usize) -> Matrix {
    Matrix::identity(n, n) * scale
}

fn vertex_blocks(graph: &SpatialGraph, spec: &RegressionSpec, row_of: impl Fn(usize, bool) -> usize, rows: usize, sign_k: f64) -> Result<Vec<Block>> {
    let mut slabs: Vec<Vec<RowSlab>> = vec![Vec::new(); graph.vertices.len()];
    for (e, edge) in graph.edges.iter().enumerate() {
        slabs[edge.j].push(RowSlab {
            offset: row_of(e, true),
            matrix: eye(1.0, PARAMS),
        });
        slabs[edge.k].push(RowSlab {
            offset: row_of(e, false),
            matrix: eye(sign_k, PARAMS),
        });
    }
    graph
        .vertices
        .iter()
        .zip(slabs)
        .enumerate()
        .map(|(i, (p, s))| {
            Ok(vertex_objective(p, spec)
                .with_linear(CouplingMap::from_slabs(rows, PARAMS, s)?)
                .named(format!("vertex:{i}")))
        })
        .collect()
}

/// Copy form: `N + p` blocks, `m = 8p`, edge blocks not strongly convex.
pub fn reformulate_copy(graph: &SpatialGraph, spec: &RegressionSpec) -> Result<BlockProblem> {
    spec.validate()?;
    let rows = 2 * PARAMS * graph.edges.len();
    let row_of = |e: usize, first: bool| 2 * PARAMS * e + if first { 0 } else { PARAMS };
    let mut blocks = vertex_blocks(graph, spec, row_of, rows, 1.0)?;
    for (e, edge) in graph.edges.iter().enumerate() {
        let s = 2.0 * spec.omega * edge.weight;
        let mut q = Matrix::zeros(2 * PARAMS, 2 * PARAMS);
        for i in 0..PARAMS {
            q[(i, i)] = s;
            q[(i + PARAMS, i + PARAMS)] = s;
            q[(i, i + PARAMS)] = -s;
            q[(i + PARAMS, i)] = -s;
        }
        let objective = Quadratic {
            q,
            c: Vector::zeros(2 * PARAMS),
            constant: 0.0,
        };
        let map = CouplingMap::from_slabs(
            rows,
            2 * PARAMS,
            vec![RowSlab {
                offset: 2 * PARAMS * e,
                matrix: eye(-1.0, 2 * PARAMS),
            }],
        )?;
        blocks.push(
            Block::new(Arc::new(objective))
                .with_linear(map)
                .named(format!("edge:{}-{}", edge.j, edge.k)),
        );
    }
    BlockProblem::new(blocks, Vector::zeros(rows), 0)
}

/// Slack form: `N + p` blocks, `m = 4p`, all blocks strongly convex when `omega > 0`.
pub fn reformulate_slack(graph: &SpatialGraph, spec: &RegressionSpec) -> Result<BlockProblem> {
    spec.validate()?;
    let rows = PARAMS * graph.edges.len();
    let mut blocks = vertex_blocks(graph, spec, |e, _| PARAMS * e, rows, -1.0)?;
    for (e, edge) in graph.edges.iter().enumerate() {
        let s = 2.0 * spec.omega * edge.weight;
        let objective = Quadratic {
            q: eye(s, PARAMS),
            c: Vector::zeros(PARAMS),
            constant: 0.0,
        };
        let map = CouplingMap::from_slabs(
            rows,
            PARAMS,
            vec![RowSlab {
                offset: PARAMS * e,
                matrix: eye(-1.0, PARAMS),
            }],
        )?;
        blocks.push(
            Block::new(Arc::new(objective))
                .with_strong_convexity(s)
                .with_linear(map)
                .named(format!("edge:{}-{}", edge.j, edge.k)),
        );
    }
    BlockProblem::new(blocks, Vector::zeros(rows), 0)
}

pub fn reformulate(graph: &SpatialGraph, spec: &RegressionSpec, form: Reformulation) -> Result<BlockProblem> {
    match form {
        Reformulation::Copy => reformulate_copy(graph, spec),
        Reformulation::Slack => reformulate_slack(graph, spec),
    }
}

/// Objective of the original graph problem at vertex parameters `x`.
pub fn network_objective(graph: &SpatialGraph, spec: &RegressionSpec, x: &[Vector]) -> f64 {
    let local: f64 = graph
        .vertices
        .iter()
        .zip(x)
        .map(|(p, xi)| {
            use crate::problem::ConvexFn;
            vertex_quadratic(p, spec).value(xi)
        })
        .sum();
    let coupling: f64 = graph
        .edges
        .iter()
        .map(|e| spec.omega * e.weight * (&x[e.j] - &x[e.k]).norm_squared())
        .sum();
    local + coupling
}

/// Weighted mean of `values`; the minimiser of `sum_j w_j ||x - x_j||^2`.
pub fn weighted_mean(weights: &[f64], values: &[&Vector]) -> Result<Vector> {
    let total: f64 = weights.iter().sum();
    if values.is_empty() || weights.len() != values.len() || !(total > 0.0) {
        return Err(Error::InvalidConfig(
            "weighted mean needs matching nonempty inputs with positive total weight".into(),
        ));
    }
    let mut out = Vector::zeros(values[0].len());
    for (w, v) in weights.iter().zip(values) {
        out += *v * *w;
    }
    Ok(out / total)
}

/// Parameters for an unseen point from the trained vertex parameters.
///
/// Neighbours are the training vertices within the radius, topped up to
/// `min_neighbors` with the nearest ones.
pub fn interpolate(point: &Point, solution: &[Vector], graph: &SpatialGraph) -> Result<Vector> {
    if solution.len() != graph.vertices.len() {
        return Err(Error::DimensionMismatch {
            block: 0,
            expected: graph.vertices.len(),
            found: solution.len(),
            what: "vertex solutions",
        });
    }
    let near = neighbourhood(point, &graph.vertices, graph.neighbor_radius, graph.min_neighbors.max(1));
    let weights: Vec<f64> = near
        .iter()
        .map(|(_, d)| graph.weight.weight(*d, graph.neighbor_radius))
        .collect();
    let values: Vec<&Vector> = near.iter().map(|(i, _)| &solution[*i]).collect();
    weighted_mean(&weights, &values)
}

/// Mean squared error of interpolated predictions on `test`, in standardised units.
pub fn evaluate_mse(test: &[Point], solution: &[Vector], graph: &SpatialGraph) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Dataset("empty test set".into()));
    }
    let mut total = 0.0;
    for p in test {
        let x = interpolate(p, solution, graph)?;
        let e = p.design().dot(&x) - p.target;
        total += e * e;
    }
    Ok(total / test.len() as f64)
}

/// One parsed input row; `None` marks a missing or unparsable value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub features: [Option<f64>; 3],
    pub price: Option<f64>,
    pub lat: f64,
    pub lon: f64,
}

/// Column means and standard deviations of `beds, baths, sqft, price`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: [f64; 4],
    pub stds: [f64; 4],
}

impl Scaler {
    pub fn fit(rows: &[RawRow]) -> Self {
        let mut means = [0.0; 4];
        let mut stds = [0.0; 4];
        for c in 0..4 {
            let vals: Vec<f64> = rows.iter().filter_map(|r| column(r, c)).collect();
            if vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            means[c] = m;
            stds[c] = var.sqrt();
        }
        Self { means, stds }
    }

    /// Z-score; missing values and zero-variance columns map to 0.
    pub fn transform(&self, row: &RawRow) -> Point {
        let z = |c: usize| match column(row, c) {
            Some(v) if self.stds[c] > 0.0 => (v - self.means[c]) / self.stds[c],
            _ => 0.0,
        };
        Point {
            features: [z(0), z(1), z(2)],
            target: z(3),
            lat: row.lat,
            lon: row.lon,
        }
    }
}

fn column(r: &RawRow, c: usize) -> Option<f64> {
    if c < 3 {
        r.features[c]
    } else {
        r.price
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Point>,
    pub test: Vec<Point>,
    pub scaler: Scaler,
    /// Row indices of the test points in input order.
    pub test_rows: Vec<usize>,
}

/// Standardises over all rows, then moves a seeded uniform sample of
/// `test_count` rows to the test set. Both sets keep input order.
pub fn standardize_and_split(rows: &[RawRow], test_count: usize, seed: u64) -> Result<Split> {
    if rows.is_empty() {
        return Err(Error::Dataset("no data rows".into()));
    }
    if test_count >= rows.len() {
        return Err(Error::InvalidConfig(format!(
            "test_count {test_count} leaves no training rows out of {}",
            rows.len()
        )));
    }
    let scaler = Scaler::fit(rows);
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_rows: Vec<usize> = idx[..test_count].to_vec();
    test_rows.sort_unstable();
    let test_set: BTreeSet<usize> = test_rows.iter().copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in rows.iter().enumerate() {
        let p = scaler.transform(r);
        if test_set.contains(&i) {
            test.push(p);
        } else {
            train.push(p);
        }
    }
    Ok(Split {
        train,
        test,
        scaler,
        test_rows,
    })
}

/// Housing CSV reading options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Treat a literal 0 in a feature column as missing.
    pub zero_is_missing: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            zero_is_missing: true,
        }
    }
}

/// Reads a housing CSV. Header names are matched case-insensitively:
/// `beds`, `baths`, `sq__ft` or `sqft`, `price`, `latitude`, `longitude`.
/// Row numbers in errors count the header as row 1.
pub fn read_housing_csv<R: std::io::Read>(input: R, options: CsvOptions) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let find = |names: &[&str]| -> Result<usize> {
        headers
            .iter()
            .position(|h| names.contains(&h.as_str()))
            .ok_or_else(|| Error::Dataset(format!("missing required column '{}'", names[0])))
    };
    let cols = [
        find(&["beds"])?,
        find(&["baths"])?,
        find(&["sq__ft", "sqft"])?,
        find(&["price"])?,
        find(&["latitude"])?,
        find(&["longitude"])?,
    ];
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let field = |c: usize| record.get(c).map(str::trim).unwrap_or("");
        let required = |c: usize, name: &str| -> Result<f64> {
            field(c).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Data {
                row,
                message: format!("column '{name}' is not numeric: '{}'", field(c)),
            })
        };
        let feature = |c: usize| {
            field(c)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && !(options.zero_is_missing && *v == 0.0))
        };
        out.push(RawRow {
            features: [feature(cols[0]), feature(cols[1]), feature(cols[2])],
            price: Some(required(cols[3], "price")?),
            lat: required(cols[4], "latitude")?,
            lon: required(cols[5], "longitude")?,
        });
    }
    if out.is_empty() {
        return Err(Error::Dataset("no data rows".into()));
    }
    Ok(out)
}

pub fn read_housing_file(path: &Path, options: CsvOptions) -> Result<Vec<RawRow>> {
    read_housing_csv(std::fs::File::open(path)?, options)
}

/// Seeded stand-in for the housing data: two spatial clusters a few miles
/// apart, each with its own coefficient vector, plus Gaussian noise.
pub fn synthetic_rows(count: usize, seed: u64) -> Vec<RawRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    // degrees per mile, roughly, at this latitude
    let (dlat, dlon) = (1.0 / 69.0, 1.0 / 54.0);
    let centers = [(38.58, -121.49), (38.58 + 8.0 * dlat, -121.49 + 6.0 * dlon)];
    let coefs = [[250.0, 20.0, 15.0, 60.0], [150.0, -10.0, 30.0, 90.0]];
    (0..count)
        .map(|i| {
            let c = i % 2;
            let lat = centers[c].0 + 3.0 * dlat * normal.sample(&mut rng);
            let lon = centers[c].1 + 3.0 * dlon * normal.sample(&mut rng);
            let beds = (3.0 + normal.sample(&mut rng)).round().clamp(1.0, 6.0);
            let baths = (2.0 + 0.7 * normal.sample(&mut rng)).round().clamp(1.0, 4.0);
            let sqft = (1500.0 + 400.0 * normal.sample(&mut rng)).max(500.0);
            let b = coefs[c];
            let price = b[0] + b[1] * (beds - 3.0) + b[2] * (baths - 2.0) + b[3] * (sqft - 1500.0) / 400.0
                + 15.0 * normal.sample(&mut rng);
            let missing = rng.random_bool(0.05);
            RawRow {
                features: [Some(beds), Some(baths), if missing { None } else { Some(sqft) }],
                price: Some(price * 1000.0),
                lat,
                lon,
            }
        })
        .collect()
}

/// Writes one line per vertex: id and the 4 coefficients, 9 significant digits.
pub fn write_solution<W: Write>(mut out: W, solution: &[Vector]) -> Result<()> {
    for (i, x) in solution.iter().enumerate() {
        write!(out, "{i}")?;
        for v in x.iter() {
            write!(out, " {v:.8e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
